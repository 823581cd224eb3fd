//! Reference example: a process driven through two first-order actuators.
//!
//! `x1` is the process state, `x2` and `x3` the actuator states. The safe
//! set bounds the actuators, the normal-operation set mainly the process.

use nalgebra::{DMatrix, DVector};

use crate::ellipsoid::Ellipsoid;
use crate::filter::FilterRealization;
use crate::lmi::{SafetySets, SynthesisScalars};
use crate::lti::StateSpaceModel;

fn diag(v: &[f64]) -> DMatrix<f64> {
    DMatrix::from_diagonal(&DVector::from_column_slice(v))
}

pub fn plant_a() -> DMatrix<f64> {
    DMatrix::from_row_slice(3, 3, &[-10.0, 10.0, 10.0, 0.0, -150.0, 0.0, 0.0, 0.0, -150.0])
}

pub fn plant_b() -> DMatrix<f64> {
    DMatrix::from_row_slice(3, 2, &[0.0, 0.0, 100.0, 0.0, 0.0, 100.0])
}

/// Plant with the full state as output.
pub fn plant() -> StateSpaceModel {
    StateSpaceModel::with_state_output(plant_a(), plant_b()).expect("valid reference plant")
}

/// `R` of the input set (amplitude 2 per channel).
pub fn input_shape() -> DMatrix<f64> {
    diag(&[0.25, 0.25])
}

/// `Psi` of the safe set.
pub fn safe_shape() -> DMatrix<f64> {
    diag(&[0.001, 0.0156, 0.0156])
}

/// `Xi_p` of the normal-operation set, as stated (nonzero actuator entries
/// included).
pub fn normal_shape() -> DMatrix<f64> {
    diag(&[0.01, 0.001, 0.001])
}

/// Centered input, safe and normal sets.
pub fn sets() -> SafetySets {
    SafetySets {
        input: Ellipsoid::centered(input_shape()).expect("pd"),
        safe: Ellipsoid::centered(safe_shape()).expect("pd"),
        normal: Some(Ellipsoid::centered(normal_shape()).expect("pd")),
    }
}

/// Filter acting on both channels: `(Gf, Gc) = (I, 0)`.
pub fn selection() -> (DMatrix<f64>, DMatrix<f64>) {
    (DMatrix::identity(2, 2), DMatrix::zeros(2, 2))
}

pub fn reference_scalars() -> SynthesisScalars {
    SynthesisScalars {
        alpha: 1.0,
        lambda: 0.5,
        delta: 0.9,
        gamma: 0.61,
        epsilon: 1e-8,
    }
}

/// Reference value of the multiplier `beta` at [`reference_scalars`].
pub const REFERENCE_BETA: f64 = 0.4999;

/// Decay rate used for the unfiltered analysis.
pub const ANALYSIS_ALPHA: f64 = 0.5;

/// Reference filter, rounded to two decimals.
pub fn reference_filter_rounded() -> FilterRealization {
    let (gf, gc) = selection();
    FilterRealization::new(
        DMatrix::from_row_slice(
            3,
            3,
            &[-12.75, 22.55, 22.55, 8.35, -151.39, 1.31, 8.35, 1.31, -151.39],
        ),
        DMatrix::from_row_slice(
            3,
            2,
            &[-549.65, -549.65, -647.31, -35.94, -35.94, -647.31],
        ),
        DMatrix::from_row_slice(2, 3, &[-1e-4, 1.7e-3, 0.0, -1e-4, 0.0, 1.7e-3]),
        DMatrix::from_row_slice(2, 2, &[0.46, 2e-4, 2e-4, 0.46]),
        gf,
        gc,
    )
    .expect("valid reference filter")
}
