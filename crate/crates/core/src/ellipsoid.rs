//! Ellipsoids `{x : (x - c)' Q (x - c) <= 1}` and the operations needed to
//! reason about reachable and safe sets: membership, projection onto
//! leading coordinates, containment and boundary sampling.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lmi::{
    self, min_eigenvalue, AffineMatrixExpr, LmiError, LmiProblem, ProblemMeta, ProblemMode,
    SolveStatus, SolverOptions,
};

/// Symmetry and eigenvalue slack accepted on construction.
pub const SHAPE_TOL: f64 = 1e-10;
/// Default slack of the containment eigenvalue test.
pub const DEFAULT_CONTAINMENT_TOL: f64 = 1e-7;
/// Largest accepted condition number of a block that gets inverted.
pub const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EllipsoidError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("shape matrix is not symmetric (asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("shape matrix has eigenvalue {min_eigenvalue:e}, required {required}")]
    Definiteness {
        min_eigenvalue: f64,
        required: &'static str,
    },
    #[error("non-finite entry in {0}")]
    NonFinite(&'static str),
    #[error("trailing block is singular (smallest singular value {smallest_singular_value:e})")]
    SingularBlock { smallest_singular_value: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("containment solve failed: {0}")]
    Solver(String),
}

impl From<LmiError> for EllipsoidError {
    fn from(e: LmiError) -> Self {
        EllipsoidError::Solver(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RankMode {
    PositiveDefinite,
    PositiveSemidefinite,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "EllipsoidRepr", into = "EllipsoidRepr")]
pub struct Ellipsoid {
    shape: DMatrix<f64>,
    center: DVector<f64>,
    rank_mode: RankMode,
}

#[derive(Serialize, Deserialize)]
struct EllipsoidRepr {
    #[serde(with = "crate::serde_mat::matrix")]
    shape: DMatrix<f64>,
    #[serde(with = "crate::serde_mat::vector")]
    center: DVector<f64>,
    rank_mode: RankMode,
}

impl TryFrom<EllipsoidRepr> for Ellipsoid {
    type Error = EllipsoidError;

    fn try_from(r: EllipsoidRepr) -> Result<Self, EllipsoidError> {
        Ellipsoid::new(r.shape, r.center, r.rank_mode)
    }
}

impl From<Ellipsoid> for EllipsoidRepr {
    fn from(e: Ellipsoid) -> Self {
        Self {
            shape: e.shape,
            center: e.center,
            rank_mode: e.rank_mode,
        }
    }
}

impl Ellipsoid {
    /// Validates and symmetrizes `shape`.
    pub fn new(
        shape: DMatrix<f64>,
        center: DVector<f64>,
        rank_mode: RankMode,
    ) -> Result<Self, EllipsoidError> {
        let d = shape.nrows();
        if shape.ncols() != d {
            return Err(EllipsoidError::Dimension(format!(
                "shape is {}x{}",
                d,
                shape.ncols()
            )));
        }
        if center.len() != d {
            return Err(EllipsoidError::Dimension(format!(
                "center has {} entries, shape is {d}x{d}",
                center.len()
            )));
        }
        if shape.iter().any(|v| !v.is_finite()) {
            return Err(EllipsoidError::NonFinite("shape"));
        }
        if center.iter().any(|v| !v.is_finite()) {
            return Err(EllipsoidError::NonFinite("center"));
        }
        let asym = (&shape - shape.transpose()).amax();
        if asym > SHAPE_TOL * shape.amax().max(1.0) {
            return Err(EllipsoidError::NotSymmetric(asym));
        }
        let shape = (&shape + shape.transpose()) * 0.5;
        if d > 0 {
            let lo = min_eigenvalue(&shape);
            let (ok, required) = match rank_mode {
                RankMode::PositiveDefinite => (lo >= SHAPE_TOL, "positive definite"),
                RankMode::PositiveSemidefinite => (lo >= -SHAPE_TOL, "positive semidefinite"),
            };
            if !ok {
                return Err(EllipsoidError::Definiteness {
                    min_eigenvalue: lo,
                    required,
                });
            }
        }
        Ok(Self {
            shape,
            center,
            rank_mode,
        })
    }

    pub fn pd(shape: DMatrix<f64>, center: DVector<f64>) -> Result<Self, EllipsoidError> {
        Self::new(shape, center, RankMode::PositiveDefinite)
    }

    pub fn psd(shape: DMatrix<f64>, center: DVector<f64>) -> Result<Self, EllipsoidError> {
        Self::new(shape, center, RankMode::PositiveSemidefinite)
    }

    /// Positive definite, centered at the origin.
    pub fn centered(shape: DMatrix<f64>) -> Result<Self, EllipsoidError> {
        let d = shape.nrows();
        Self::pd(shape, DVector::zeros(d))
    }

    pub fn shape(&self) -> &DMatrix<f64> {
        &self.shape
    }

    pub fn center(&self) -> &DVector<f64> {
        &self.center
    }

    pub fn rank_mode(&self) -> RankMode {
        self.rank_mode
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    /// `(x - c)' Q (x - c)`.
    pub fn level(&self, x: &DVector<f64>) -> Result<f64, EllipsoidError> {
        if x.len() != self.dim() {
            return Err(EllipsoidError::Dimension(format!(
                "point has {} entries, ellipsoid dimension {}",
                x.len(),
                self.dim()
            )));
        }
        let r = x - &self.center;
        Ok(r.dot(&(&self.shape * &r)))
    }

    pub fn contains_point(&self, x: &DVector<f64>, tol: f64) -> Result<bool, EllipsoidError> {
        Ok(self.level(x)? <= 1.0 + tol)
    }

    /// Shadow on the first `k` coordinates: `Q1 - Q2 Q3^-1 Q2'`.
    pub fn project(&self, k: usize) -> Result<Ellipsoid, EllipsoidError> {
        let d = self.dim();
        if k == 0 || k >= d {
            return Err(EllipsoidError::InvalidArgument(format!(
                "projection onto {k} of {d} coordinates"
            )));
        }
        let q1 = self.shape.view((0, 0), (k, k));
        let q2 = self.shape.view((0, k), (k, d - k));
        let q3 = self.shape.view((k, k), (d - k, d - k)).clone_owned();
        let sv = q3.singular_values();
        let (smax, smin) = (sv.max(), sv.min());
        if !(smin > 0.0) || smax / smin > MAX_CONDITION {
            return Err(EllipsoidError::SingularBlock {
                smallest_singular_value: smin,
            });
        }
        let sol = q3
            .lu()
            .solve(&q2.transpose())
            .ok_or(EllipsoidError::SingularBlock {
                smallest_singular_value: smin,
            })?;
        let shape = q1 - q2 * sol;
        let shape = (&shape + shape.transpose()) * 0.5;
        Ellipsoid::new(shape, self.center.rows(0, k).into_owned(), self.rank_mode)
    }

    /// Quadratic-form matrix of `1 - (x - c)' Q (x - c)` in `[x; 1]`.
    fn homogeneous(&self) -> DMatrix<f64> {
        let d = self.dim();
        let qc = &self.shape * &self.center;
        let mut m = DMatrix::zeros(d + 1, d + 1);
        m.view_mut((0, 0), (d, d)).copy_from(&(-&self.shape));
        m.view_mut((0, d), (d, 1)).copy_from(&qc);
        m.view_mut((d, 0), (1, d)).copy_from(&qc.transpose());
        m[(d, d)] = 1.0 - self.center.dot(&qc);
        m
    }

    /// Samples `count` points on the boundary, deterministic in `seed`.
    pub fn sample_boundary(&self, count: usize, seed: u64) -> Result<Vec<DVector<f64>>, EllipsoidError> {
        if count == 0 {
            return Err(EllipsoidError::InvalidArgument("count must be positive".into()));
        }
        let d = self.dim();
        let inv = self
            .shape
            .clone()
            .cholesky()
            .map(|c| c.inverse())
            .ok_or(EllipsoidError::Definiteness {
                min_eigenvalue: min_eigenvalue(&self.shape),
                required: "positive definite",
            })?;
        let inv = (&inv + inv.transpose()) * 0.5;
        let k = inv.cholesky().ok_or(EllipsoidError::Definiteness {
            min_eigenvalue: min_eigenvalue(&self.shape),
            required: "positive definite",
        })?;
        let l = k.l();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::with_capacity(count);
        while out.len() < count {
            let g: DVector<f64> =
                DVector::from_iterator(d, (0..d).map(|_| StandardNormal.sample(&mut rng)));
            let norm = g.norm();
            if norm == 0.0 {
                continue;
            }
            let mut r: DVector<f64> = &l * (g / norm);
            // polish onto the level set
            let lvl = r.dot(&(&self.shape * &r));
            r /= lvl.sqrt();
            out.push(r + &self.center);
        }
        Ok(out)
    }
}

fn check_same_dim(e1: &Ellipsoid, e2: &Ellipsoid) -> Result<(), EllipsoidError> {
    if e1.dim() != e2.dim() {
        return Err(EllipsoidError::Dimension(format!(
            "ellipsoids of dimension {} and {}",
            e1.dim(),
            e2.dim()
        )));
    }
    Ok(())
}

/// Whether `inner` lies inside `outer`.
///
/// Coincident centers use the eigenvalue test `Q_outer <= Q_inner + tol I`;
/// otherwise the S-procedure certificate of [`s_procedure_contained`].
pub fn is_contained(inner: &Ellipsoid, outer: &Ellipsoid, tol: f64) -> Result<bool, EllipsoidError> {
    check_same_dim(inner, outer)?;
    let scale = inner.center.amax().max(outer.center.amax()).max(1.0);
    if (inner.center() - outer.center()).amax() <= 1e-14 * scale {
        Ok(containment_margin(inner, outer)? >= -tol)
    } else {
        s_procedure_contained(inner, outer, tol, &SolverOptions::default())
    }
}

/// Minimum eigenvalue of `Q_inner - Q_outer`; non-negative iff contained,
/// for coincident centers.
pub fn containment_margin(inner: &Ellipsoid, outer: &Ellipsoid) -> Result<f64, EllipsoidError> {
    check_same_dim(inner, outer)?;
    if inner.dim() == 0 {
        return Ok(0.0);
    }
    Ok(min_eigenvalue(&(inner.shape() - outer.shape())))
}

/// Searches `tau >= 0` with `M_outer - tau M_inner >= -tol I`, where `M` is
/// the homogeneous form of `1 - (x - c)' Q (x - c)`.
pub fn s_procedure_contained(
    inner: &Ellipsoid,
    outer: &Ellipsoid,
    tol: f64,
    opts: &SolverOptions,
) -> Result<bool, EllipsoidError> {
    check_same_dim(inner, outer)?;
    let d = inner.dim() + 1;
    let mut p = LmiProblem::new(ProblemMeta {
        mode: ProblemMode::Certificate,
        stealthy: false,
    });
    let tau = p.add_scalar("tau")?;
    p.add_nonnegative(tau)?;
    let mut e = AffineMatrixExpr::new(&[d]);
    e.add_constant(0, 0, &outer.homogeneous());
    e.add_scaled(0, 0, tau, &(-inner.homogeneous()));
    p.add_constraint("s-procedure", e, -tol)?;
    let r = lmi::solve(&p, opts)?;
    match r.status {
        SolveStatus::Optimal | SolveStatus::Feasible => Ok(true),
        SolveStatus::Infeasible => Ok(false),
        SolveStatus::NumericalFailure => Err(EllipsoidError::Solver(r.trace.join("; "))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn diag(v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_column_slice(v))
    }

    fn input_set() -> Ellipsoid {
        Ellipsoid::centered(diag(&[0.25, 0.25])).unwrap()
    }

    fn random_pd(d: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a: DMatrix<f64> = DMatrix::from_fn(d, d, |_, _| StandardNormal.sample(&mut rng));
        &a * a.transpose() + DMatrix::identity(d, d) * 0.1
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(matches!(
            Ellipsoid::centered(DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0])),
            Err(EllipsoidError::NotSymmetric(_))
        ));
        assert!(matches!(
            Ellipsoid::centered(diag(&[1.0, 0.0])),
            Err(EllipsoidError::Definiteness { .. })
        ));
        assert!(Ellipsoid::psd(diag(&[1.0, 0.0]), DVector::zeros(2)).is_ok());
        assert!(Ellipsoid::pd(diag(&[1.0]), DVector::zeros(2)).is_err());
    }

    #[test]
    fn membership_on_input_set() {
        let e = input_set();
        assert!(e.contains_point(&DVector::from_vec(vec![2.0, 0.0]), 0.0).unwrap());
        assert!(!e.contains_point(&DVector::from_vec(vec![2.01, 0.0]), 0.0).unwrap());
        assert!(e.contains_point(e.center(), 0.0).unwrap());
        assert!(e.contains_point(&DVector::zeros(3), 0.0).is_err());
    }

    #[test]
    fn projection_of_block_diagonal_and_coupled() {
        let mut q = DMatrix::zeros(3, 3);
        q.view_mut((0, 0), (2, 2))
            .copy_from(&DMatrix::from_row_slice(2, 2, &[3.0, 1.0, 1.0, 2.0]));
        q[(2, 2)] = 5.0;
        let p = Ellipsoid::centered(q.clone()).unwrap().project(2).unwrap();
        assert_eq!(p.shape(), &q.view((0, 0), (2, 2)).clone_owned());

        let e = Ellipsoid::centered(DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0])).unwrap();
        let p = e.project(1).unwrap();
        assert_relative_eq!(p.shape()[(0, 0)], 1.5, epsilon = 1e-14);
        // support function: max |x1| over the boundary is sqrt((Q^-1)_11)
        let qinv = e.shape().clone().try_inverse().unwrap();
        assert_relative_eq!(1.0 / p.shape()[(0, 0)], qinv[(0, 0)], epsilon = 1e-14);
    }

    #[test]
    fn projection_reports_singular_trailing_block() {
        let e = Ellipsoid::psd(diag(&[1.0, 0.0]), DVector::zeros(2)).unwrap();
        match e.project(1) {
            Err(EllipsoidError::SingularBlock {
                smallest_singular_value,
            }) => assert_eq!(smallest_singular_value, 0.0),
            other => panic!("{other:?}"),
        }
        assert!(input_set().project(2).is_err());
    }

    #[test]
    fn containment_basics() {
        let q = random_pd(3, 7);
        let e = Ellipsoid::centered(q.clone()).unwrap();
        let e2 = Ellipsoid::centered(&q * 2.0).unwrap();
        assert!(is_contained(&e, &e, 0.0).unwrap());
        assert!(is_contained(&e2, &e, DEFAULT_CONTAINMENT_TOL).unwrap());
        assert!(!is_contained(&e, &e2, DEFAULT_CONTAINMENT_TOL).unwrap());
    }

    #[test]
    fn offset_containment_uses_s_procedure() {
        let small = Ellipsoid::pd(diag(&[4.0, 4.0]), DVector::from_vec(vec![0.3, 0.0])).unwrap();
        let unit = Ellipsoid::centered(diag(&[1.0, 1.0])).unwrap();
        assert!(is_contained(&small, &unit, 1e-7).unwrap());
        let shifted = Ellipsoid::pd(diag(&[4.0, 4.0]), DVector::from_vec(vec![0.6, 0.0])).unwrap();
        assert!(!is_contained(&shifted, &unit, 1e-7).unwrap());
    }

    #[test]
    fn boundary_samples_on_input_circle() {
        let pts = input_set().sample_boundary(500, 3).unwrap();
        for p in &pts {
            assert!((p.norm() - 2.0).abs() < 1e-10);
        }
        assert_eq!(pts, input_set().sample_boundary(500, 3).unwrap());
        let unit = Ellipsoid::centered(DMatrix::identity(4, 4)).unwrap();
        for p in unit.sample_boundary(50, 11).unwrap() {
            assert!((p.norm() - 1.0).abs() < 1e-12);
        }
        assert!(input_set().sample_boundary(0, 1).is_err());
    }

    #[test]
    fn projection_is_tight() {
        let e = Ellipsoid::pd(random_pd(4, 21), DVector::from_vec(vec![0.1, -0.2, 0.3, 0.0])).unwrap();
        let p = e.project(2).unwrap();
        let worst = e
            .sample_boundary(100_000, 5)
            .unwrap()
            .iter()
            .map(|x| p.level(&x.rows(0, 2).into_owned()).unwrap())
            .fold(0.0, f64::max);
        assert!(worst <= 1.0 + 1e-9);
        assert!(worst >= 0.999, "worst {worst}");
    }

    #[test]
    fn coincident_center_agrees_with_s_procedure() {
        let opts = SolverOptions::default();
        let mut agree = 0;
        for seed in 0..50u64 {
            let d = 2 + (seed % 3) as usize;
            let a = random_pd(d, 1000 + seed);
            let b = random_pd(d, 2000 + seed) * (0.2 + 0.05 * (seed % 7) as f64);
            let ea = Ellipsoid::centered(a).unwrap();
            let eb = Ellipsoid::centered(b).unwrap();
            let margin = containment_margin(&ea, &eb).unwrap();
            if margin.abs() < 1e-5 {
                agree += 1;
                continue;
            }
            let eig = margin >= -1e-7;
            let sp = s_procedure_contained(&ea, &eb, 1e-7, &opts).unwrap();
            assert_eq!(eig, sp, "seed {seed}: margin {margin}");
            agree += 1;
        }
        assert_eq!(agree, 50);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]

        #[test]
        fn projection_is_sound(seed in 0u64..10_000, d in 2usize..9, kk in 1usize..8) {
            let k = 1 + kk % (d - 1);
            let c = DVector::from_fn(d, |i, _| (i as f64 * 0.37 + seed as f64 * 1e-3).sin());
            let e = Ellipsoid::pd(random_pd(d, seed), c).unwrap();
            let p = e.project(k).unwrap();
            for x in e.sample_boundary(200, seed).unwrap() {
                prop_assert!(p.contains_point(&x.rows(0, k).into_owned(), 1e-9).unwrap());
            }
        }

        #[test]
        fn containment_is_consistent_with_membership(seed in 0u64..10_000, scale in 1.0f64..3.0) {
            let q = random_pd(3, seed);
            let inner = Ellipsoid::centered(&q * scale).unwrap();
            let outer = Ellipsoid::centered(q).unwrap();
            prop_assert!(is_contained(&inner, &outer, DEFAULT_CONTAINMENT_TOL).unwrap());
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for _ in 0..50 {
                let x: DVector<f64> = DVector::from_fn(3, |_, _| StandardNormal.sample(&mut rng));
                if inner.contains_point(&x, 0.0).unwrap() {
                    prop_assert!(outer.contains_point(&x, 1e-8).unwrap());
                }
            }
        }
    }
}
