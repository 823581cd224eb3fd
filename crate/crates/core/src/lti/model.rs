use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::LtiError;
use crate::filter::FilterRealization;
use crate::serde_mat::fix_empty;

/// `dx/dt = A x + B u`, `y = C x + D u`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelRepr", into = "ModelRepr")]
pub struct StateSpaceModel {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    c: DMatrix<f64>,
    d: DMatrix<f64>,
}

#[derive(Serialize, Deserialize)]
struct ModelRepr {
    #[serde(with = "crate::serde_mat::matrix")]
    a: DMatrix<f64>,
    #[serde(with = "crate::serde_mat::matrix")]
    b: DMatrix<f64>,
    #[serde(with = "crate::serde_mat::matrix")]
    c: DMatrix<f64>,
    #[serde(with = "crate::serde_mat::matrix")]
    d: DMatrix<f64>,
}

impl TryFrom<ModelRepr> for StateSpaceModel {
    type Error = LtiError;

    fn try_from(r: ModelRepr) -> Result<Self, LtiError> {
        let n = r.a.nrows();
        let (p, m) = r.d.shape();
        Self::new(
            fix_empty(r.a, n, n),
            fix_empty(r.b, n, m),
            fix_empty(r.c, p, n),
            r.d,
        )
    }
}

impl From<StateSpaceModel> for ModelRepr {
    fn from(s: StateSpaceModel) -> Self {
        Self {
            a: s.a,
            b: s.b,
            c: s.c,
            d: s.d,
        }
    }
}

fn check_finite(m: &DMatrix<f64>, name: &'static str) -> Result<(), LtiError> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(LtiError::NonFinite(name))
    }
}

impl StateSpaceModel {
    pub fn new(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        c: DMatrix<f64>,
        d: DMatrix<f64>,
    ) -> Result<Self, LtiError> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(LtiError::Dimension(format!(
                "A must be square, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        if b.nrows() != n {
            return Err(LtiError::Dimension(format!(
                "B has {} rows, expected {n}",
                b.nrows()
            )));
        }
        if c.ncols() != n {
            return Err(LtiError::Dimension(format!(
                "C has {} columns, expected {n}",
                c.ncols()
            )));
        }
        if d.nrows() != c.nrows() || d.ncols() != b.ncols() {
            return Err(LtiError::Dimension(format!(
                "D is {}x{}, expected {}x{}",
                d.nrows(),
                d.ncols(),
                c.nrows(),
                b.ncols()
            )));
        }
        check_finite(&a, "A")?;
        check_finite(&b, "B")?;
        check_finite(&c, "C")?;
        check_finite(&d, "D")?;
        Ok(Self { a, b, c, d })
    }

    /// Plant with full-state output (`C = I`, `D = 0`).
    pub fn with_state_output(a: DMatrix<f64>, b: DMatrix<f64>) -> Result<Self, LtiError> {
        let n = a.nrows();
        let m = b.ncols();
        Self::new(a, b, DMatrix::identity(n, n), DMatrix::zeros(n, m))
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn c(&self) -> &DMatrix<f64> {
        &self.c
    }

    pub fn d(&self) -> &DMatrix<f64> {
        &self.d
    }

    pub fn n_states(&self) -> usize {
        self.a.nrows()
    }

    pub fn n_inputs(&self) -> usize {
        self.b.ncols()
    }

    pub fn n_outputs(&self) -> usize {
        self.c.nrows()
    }

    pub fn output(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        &self.c * x + &self.d * u
    }

    pub fn derivative(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        &self.a * x + &self.b * u
    }

    /// Same dynamics with the output replaced.
    pub fn with_output(&self, c: DMatrix<f64>, d: DMatrix<f64>) -> Result<Self, LtiError> {
        Self::new(self.a.clone(), self.b.clone(), c, d)
    }

    /// Rank of `[B, AB, ..., A^{n-1}B]`, via SVD with relative threshold 1e-9.
    pub fn controllability_rank(&self) -> usize {
        let n = self.n_states();
        let m = self.n_inputs();
        if n == 0 || m == 0 {
            return 0;
        }
        let mut ctrb = DMatrix::zeros(n, n * m);
        let mut block = self.b.clone();
        for k in 0..n {
            ctrb.view_mut((0, k * m), (n, m)).copy_from(&block);
            block = &self.a * block;
        }
        let sv = ctrb.singular_values();
        let smax = sv.max();
        if smax == 0.0 {
            return 0;
        }
        sv.iter().filter(|s| **s > 1e-9 * smax).count()
    }
}

/// Largest real part over the spectrum of `a`; `-inf` for an empty matrix.
pub fn spectral_abscissa(a: &DMatrix<f64>) -> Result<f64, LtiError> {
    if !a.is_square() {
        return Err(LtiError::Dimension(format!(
            "expected a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    check_finite(a, "A")?;
    if a.nrows() == 0 {
        return Ok(f64::NEG_INFINITY);
    }
    Ok(a.complex_eigenvalues()
        .iter()
        .map(|l| l.re)
        .fold(f64::NEG_INFINITY, f64::max))
}

/// True iff every eigenvalue of `a` has real part below `-tol`.
pub fn is_hurwitz(a: &DMatrix<f64>, tol: f64) -> Result<bool, LtiError> {
    Ok(spectral_abscissa(a)? < -tol)
}

/// Series interconnection of a filter in front of the plant.
///
/// State `[x_p; x_f]`, input `u_c`, output the distortion `z = u_f - u_c`:
///
/// ```text
/// A = [A_p  B_p G_f C_f]    B = [B_p G_f D_f + B_p G_c]    C_z = [0  C_f]
///     [0    A_f        ]        [B_f                  ]    D_z = D_f - I
/// ```
pub fn build_extended_system(
    plant: &StateSpaceModel,
    filter: &FilterRealization,
) -> Result<StateSpaceModel, LtiError> {
    let np = plant.n_states();
    let m = plant.n_inputs();
    if filter.n_channels() != m {
        return Err(LtiError::Dimension(format!(
            "filter has {} channels, plant has {m} inputs",
            filter.n_channels()
        )));
    }
    filter.check_selection()?;
    let nf = filter.order();
    let n = np + nf;
    let bp = plant.b();
    let bp_gf = bp * filter.gamma_f();

    let mut a = DMatrix::zeros(n, n);
    a.view_mut((0, 0), (np, np)).copy_from(plant.a());
    a.view_mut((0, np), (np, nf)).copy_from(&(&bp_gf * filter.c_f()));
    a.view_mut((np, np), (nf, nf)).copy_from(filter.a_f());

    let mut b = DMatrix::zeros(n, m);
    b.view_mut((0, 0), (np, m))
        .copy_from(&(&bp_gf * filter.d_f() + bp * filter.gamma_c()));
    b.view_mut((np, 0), (nf, m)).copy_from(filter.b_f());

    let mut c = DMatrix::zeros(m, n);
    c.view_mut((0, np), (m, nf)).copy_from(filter.c_f());
    let d = filter.d_f() - DMatrix::identity(m, m);

    StateSpaceModel::new(a, b, c, d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::demo;
    use crate::lti::DEFAULT_HURWITZ_TOL as DEFAULT_TOL;

    #[test]
    fn rejects_bad_dimensions() {
        let a = DMatrix::zeros(2, 3);
        let err = StateSpaceModel::with_state_output(a, DMatrix::zeros(2, 1)).unwrap_err();
        assert!(matches!(err, LtiError::Dimension(_)));
        let a = DMatrix::zeros(2, 2);
        let err = StateSpaceModel::with_state_output(a, DMatrix::zeros(3, 1)).unwrap_err();
        assert!(matches!(err, LtiError::Dimension(_)));
    }

    #[test]
    fn rejects_non_finite() {
        let mut a = DMatrix::zeros(2, 2);
        a[(0, 1)] = f64::NAN;
        let err = StateSpaceModel::with_state_output(a, DMatrix::zeros(2, 1)).unwrap_err();
        assert_eq!(err, LtiError::NonFinite("A"));
    }

    #[test]
    fn hurwitz_examples() {
        assert!(is_hurwitz(&demo::plant_a(), DEFAULT_TOL).unwrap());
        assert!(!is_hurwitz(&DMatrix::identity(3, 3), DEFAULT_TOL).unwrap());
        assert!(matches!(
            is_hurwitz(&DMatrix::zeros(2, 3), DEFAULT_TOL),
            Err(LtiError::Dimension(_))
        ));
        // marginally stable fails the strict margin
        let osc = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
        assert!(!is_hurwitz(&osc, DEFAULT_TOL).unwrap());
    }

    #[test]
    fn extended_passthrough_is_plant() {
        let plant = demo::plant();
        let ext = build_extended_system(&plant, &FilterRealization::passthrough(2)).unwrap();
        assert_eq!(ext.a(), plant.a());
        assert_eq!(ext.b(), plant.b());
        assert!(ext.c().iter().all(|v| *v == 0.0));
        assert!(ext.d().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn extended_blocks_with_reference_filter() {
        let plant = demo::plant();
        let filter = demo::reference_filter_rounded();
        let ext = build_extended_system(&plant, &filter).unwrap();
        assert_eq!(ext.n_states(), 6);
        let a = ext.a();
        assert_eq!(a.view((0, 0), (3, 3)), plant.a().view((0, 0), (3, 3)));
        let coupling = plant.b() * filter.c_f();
        assert_eq!(a.view((0, 3), (3, 3)).clone_owned(), coupling);
        assert!(a.view((3, 0), (3, 3)).iter().all(|v| *v == 0.0));
        assert_eq!(a.view((3, 3), (3, 3)).clone_owned(), *filter.a_f());
        assert_eq!(
            ext.b().view((0, 0), (3, 2)).clone_owned(),
            plant.b() * filter.d_f()
        );
        assert_eq!(ext.b().view((3, 0), (3, 2)).clone_owned(), *filter.b_f());
    }

    #[test]
    fn extended_spectrum_is_union() {
        let plant = demo::plant();
        let filter = demo::reference_filter_rounded();
        let ext = build_extended_system(&plant, &filter).unwrap();
        assert!(is_hurwitz(ext.a(), DEFAULT_TOL).unwrap());
        let mut got: Vec<_> = ext.a().complex_eigenvalues().iter().cloned().collect();
        let mut want: Vec<_> = plant
            .a()
            .complex_eigenvalues()
            .iter()
            .chain(filter.a_f().complex_eigenvalues().iter())
            .cloned()
            .collect();
        let key = |c: &nalgebra::Complex<f64>| (c.re, c.im);
        got.sort_by(|x, y| key(x).partial_cmp(&key(y)).unwrap());
        want.sort_by(|x, y| key(x).partial_cmp(&key(y)).unwrap());
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).norm() < 1e-8, "{g} vs {w}");
        }
    }

    #[test]
    fn unfiltered_channels_bypass_filter() {
        let plant = demo::plant();
        let f = demo::reference_filter_rounded();
        let filter = FilterRealization::new(
            f.a_f().clone(),
            f.b_f().clone(),
            f.c_f().clone(),
            f.d_f().clone(),
            DMatrix::zeros(2, 2),
            DMatrix::identity(2, 2),
        )
        .unwrap();
        let ext = build_extended_system(&plant, &filter).unwrap();
        assert_eq!(ext.b().view((0, 0), (3, 2)).clone_owned(), *plant.b());
        assert!(ext.a().view((0, 3), (3, 3)).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn controllability_of_plant() {
        assert_eq!(demo::plant().controllability_rank(), 3);
    }
}
