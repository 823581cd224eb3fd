//! Assembly of the invariance (analysis) and filter-synthesis LMIs.
//!
//! Analysis, for `V(z) = z'Qz` on `z' = A z + B u`, blocks `(n, 1, m)`:
//!
//! ```text
//! [ -(A'Q + QA) - aQ + lX     -lX xb                     -QB   ]
//! [  *                        a - b(1 - u'Ru) - l(1 - xb'X xb)  -b u'R ]  >= 0
//! [  *                        *                           bR   ]
//! ```
//!
//! with `Q >= eps I`, `b, l >= 0`, objective `max trace(Q)`; `X` is the
//! normal-set shape padded with zeros to `n`.
//!
//! Synthesis works on `(X, Y, Ah, Bh, Ch, Dh, b)` with the composite
//! blocks
//!
//! ```text
//! cA = [Ap X + Bp Gf Ch, Ap; Ah, Y Ap]     cB = [Bp Gf Dh + Bp Gc; Bh + Y Bp Gc]
//! cQ = [X, I; I, Y]                       cC = [Ch, 0]
//! cG = [2X - Xp^-1, X Xp; Xp X, Xp]        cH = [X Xp xp; Xp xp]
//! ```
//!
//! and four constraints: invariance (`cA`, `cQ`, `cG`, `cH` replacing the
//! analysis terms), safety `[dX, X Psi pb, X; *, 1 - pb'Psi pb - d, 0; *, *, Psi^-1]`,
//! distortion `[-(cA + cA'), -cB, -cC'; *, (g - e)I, -(Dh - I)'; *, *, gI]`,
//! and `cQ >= eps I`. Objective: `min trace(X)`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::expr::{AffineMatrixExpr, VarId};
use super::problem::{LmiProblem, ProblemMeta, ProblemMode, Sense};
use super::LmiError;
use crate::ellipsoid::{Ellipsoid, MAX_CONDITION};
use crate::filter::check_selection;

/// Margin turning strict definiteness into `>= STRICT_MARGIN * I`.
pub const STRICT_MARGIN: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SafetySets {
    pub input: Ellipsoid,
    pub safe: Ellipsoid,
    /// Normal-operation set on the plant state; `None` for non-stealthy
    /// attacks.
    pub normal: Option<Ellipsoid>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthesisScalars {
    pub alpha: f64,
    pub lambda: f64,
    pub delta: f64,
    pub gamma: f64,
    pub epsilon: f64,
}

impl SynthesisScalars {
    fn check(&self) -> Result<(), LmiError> {
        for (name, v) in [
            ("alpha", self.alpha),
            ("lambda", self.lambda),
            ("delta", self.delta),
            ("gamma", self.gamma),
            ("epsilon", self.epsilon),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(LmiError::InvalidArgument(format!("{name} = {v} must be >= 0")));
            }
        }
        Ok(())
    }
}

fn dim_err(msg: String) -> LmiError {
    LmiError::Dimension(msg)
}

/// Inverse of a symmetric matrix by Cholesky or, failing that, LU; rejects
/// condition numbers above [`MAX_CONDITION`].
fn checked_inverse(name: &str, m: &DMatrix<f64>) -> Result<DMatrix<f64>, LmiError> {
    let sv = m.singular_values();
    let (hi, lo) = (sv.max(), sv.min());
    let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    if !(condition <= MAX_CONDITION) {
        return Err(LmiError::IllConditioned {
            name: name.to_string(),
            condition,
        });
    }
    let inv = match m.clone().cholesky() {
        Some(c) => c.inverse(),
        None => m.clone().try_inverse().ok_or(LmiError::IllConditioned {
            name: name.to_string(),
            condition,
        })?,
    };
    Ok((&inv + inv.transpose()) * 0.5)
}

/// Adds `-b S` for the input set to `e`: blocks `one` (size 1) and `u`
/// (size m). Shared by both assemblies.
pub fn input_set_block(
    e: &mut AffineMatrixExpr,
    one: usize,
    u: usize,
    beta: VarId,
    input: &Ellipsoid,
) {
    let r = input.shape();
    let ub = input.center();
    let urb = r * ub;
    let c11 = -(1.0 - ub.dot(&urb));
    e.add_scaled(one, one, beta, &DMatrix::from_element(1, 1, c11));
    e.add_scaled(one, u, beta, &DMatrix::from_row_slice(1, urb.len(), (-&urb).as_slice()));
    e.add_scaled(u, u, beta, r);
}

fn pad(shape: &DMatrix<f64>, center: &DVector<f64>, n: usize) -> (DMatrix<f64>, DVector<f64>) {
    let k = shape.nrows();
    let mut s = DMatrix::zeros(n, n);
    s.view_mut((0, 0), (k, k)).copy_from(shape);
    let mut c = DVector::zeros(n);
    c.rows_mut(0, k).copy_from(center);
    (s, c)
}

/// Invariance LMI of `E(Q)` for `z' = A z + B u`, `u` in `input_set`,
/// restricted to `normal_set` when present (stealthy attacks).
///
/// Variables `Q` (symmetric n x n), `beta`, and `lambda` when stealthy.
/// A normal set of dimension `k < n` constrains the leading `k` states.
pub fn assemble_invariance(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    input_set: &Ellipsoid,
    normal_set: Option<&Ellipsoid>,
    alpha: f64,
) -> Result<LmiProblem, LmiError> {
    let n = a.nrows();
    let m = b.ncols();
    if a.ncols() != n || b.nrows() != n {
        return Err(dim_err(format!(
            "A is {}x{}, B is {}x{}",
            n,
            a.ncols(),
            b.nrows(),
            m
        )));
    }
    if input_set.dim() != m {
        return Err(dim_err(format!("input set has dimension {}, B has {m} columns", input_set.dim())));
    }
    if let Some(ns) = normal_set {
        if ns.dim() > n {
            return Err(dim_err(format!("normal set has dimension {} > {n}", ns.dim())));
        }
    }
    if !(alpha >= 0.0) || !alpha.is_finite() {
        return Err(LmiError::InvalidArgument(format!("alpha = {alpha} must be >= 0")));
    }

    let mut p = LmiProblem::new(ProblemMeta {
        mode: ProblemMode::Analysis,
        stealthy: normal_set.is_some(),
    });
    let q = p.add_symmetric("Q", n)?;
    let beta = p.add_scalar("beta")?;
    let lambda = match normal_set {
        Some(_) => Some(p.add_scalar("lambda")?),
        None => None,
    };

    let id_n = DMatrix::identity(n, n);
    let mut e = AffineMatrixExpr::new(&[n, 1, m]);
    e.add_product(0, 0, &(-&id_n), q, (n, n), a, false);
    e.add_symmetric_var(0, -alpha, q, n);
    e.add_product(0, 2, &(-&id_n), q, (n, n), b, false);
    e.add_constant(1, 1, &DMatrix::from_element(1, 1, alpha));
    input_set_block(&mut e, 1, 2, beta, input_set);
    if let (Some(lam), Some(ns)) = (lambda, normal_set) {
        let (xi, xb) = pad(ns.shape(), ns.center(), n);
        let xxb = &xi * &xb;
        e.add_scaled(0, 0, lam, &xi);
        e.add_scaled(0, 1, lam, &DMatrix::from_column_slice(n, 1, (-&xxb).as_slice()));
        e.add_scaled(1, 1, lam, &DMatrix::from_element(1, 1, -(1.0 - xb.dot(&xxb))));
    }
    p.add_constraint("invariance", e, 0.0)?;

    let mut pd = AffineMatrixExpr::new(&[n]);
    pd.add_symmetric_var(0, 1.0, q, n);
    p.add_constraint("Q>0", pd, STRICT_MARGIN)?;
    p.add_nonnegative(beta)?;
    if let Some(l) = lambda {
        p.add_nonnegative(l)?;
    }
    p.set_trace_objective(Sense::Maximize, q)?;
    Ok(p)
}

/// Handles of the synthesis variables.
struct SynthVars {
    x: VarId,
    y: VarId,
    ah: VarId,
    bh: VarId,
    ch: VarId,
    dh: VarId,
}

/// Adds `-coef (cA + cA')` on blocks `(0, 1)` (sizes `n`, `n`).
fn add_neg_sym_a(e: &mut AffineMatrixExpr, v: &SynthVars, ap: &DMatrix<f64>, bpgf: &DMatrix<f64>, n: usize, m: usize) {
    let id_n = DMatrix::identity(n, n);
    let neg = -&id_n;
    e.add_product(0, 0, &(-ap), v.x, (n, n), &id_n, false);
    e.add_product(0, 0, &(-bpgf), v.ch, (m, n), &id_n, false);
    e.add_constant(0, 1, &(-ap));
    e.add_product(1, 0, &neg, v.ah, (n, n), &id_n, false);
    e.add_product(1, 1, &neg, v.y, (n, n), ap, false);
}

/// Adds `-cB` on blocks `(0, col)` and `(1, col)`.
fn add_neg_b(
    e: &mut AffineMatrixExpr,
    v: &SynthVars,
    col: usize,
    bp: &DMatrix<f64>,
    gf: &DMatrix<f64>,
    gc: &DMatrix<f64>,
    n: usize,
    m: usize,
) {
    let id_n = DMatrix::identity(n, n);
    let id_m = DMatrix::identity(m, m);
    let bpgc = bp * gc;
    e.add_product(0, col, &(-(bp * gf)), v.dh, (m, m), &id_m, false);
    e.add_constant(0, col, &(-&bpgc));
    e.add_product(1, col, &(-&id_n), v.bh, (n, m), &id_m, false);
    e.add_product(1, col, &(-&id_n), v.y, (n, n), &bpgc, false);
}

/// Filter-synthesis LMIs for `plant = (Ap, Bp)` with selection `gamma_f`,
/// `gamma_c`. Stealthy iff `sets.normal` is present.
///
/// Variables: `X`, `Y` (symmetric n x n), `Ah` (n x n), `Bh` (n x m),
/// `Ch` (m x n), `Dh` (m x m), `beta`.
pub fn assemble_synthesis(
    ap: &DMatrix<f64>,
    bp: &DMatrix<f64>,
    gamma_f: &DMatrix<f64>,
    gamma_c: &DMatrix<f64>,
    sets: &SafetySets,
    scalars: &SynthesisScalars,
) -> Result<LmiProblem, LmiError> {
    let n = ap.nrows();
    let m = bp.ncols();
    if ap.ncols() != n || bp.nrows() != n {
        return Err(dim_err(format!("Ap is {}x{}, Bp is {}x{}", n, ap.ncols(), bp.nrows(), m)));
    }
    if gamma_f.shape() != (m, m) || gamma_c.shape() != (m, m) {
        return Err(dim_err(format!("selection matrices must be {m}x{m}")));
    }
    check_selection(gamma_f, gamma_c).map_err(|e| LmiError::InvalidArgument(e.to_string()))?;
    if sets.input.dim() != m {
        return Err(dim_err(format!("input set has dimension {}, expected {m}", sets.input.dim())));
    }
    if sets.safe.dim() != n {
        return Err(dim_err(format!("safe set has dimension {}, expected {n}", sets.safe.dim())));
    }
    if let Some(ns) = &sets.normal {
        if ns.dim() != n {
            return Err(dim_err(format!("normal set has dimension {}, expected {n}", ns.dim())));
        }
    }
    scalars.check()?;
    let psi = sets.safe.shape();
    let psi_inv = checked_inverse("Psi", psi)?;
    let normal = match &sets.normal {
        Some(ns) => Some((ns, checked_inverse("Xi_p", ns.shape())?)),
        None => None,
    };

    let mut p = LmiProblem::new(ProblemMeta {
        mode: ProblemMode::Synthesis,
        stealthy: normal.is_some(),
    });
    let v = SynthVars {
        x: p.add_symmetric("X", n)?,
        y: p.add_symmetric("Y", n)?,
        ah: p.add_full("Ah", n, n)?,
        bh: p.add_full("Bh", n, m)?,
        ch: p.add_full("Ch", m, n)?,
        dh: p.add_full("Dh", m, m)?,
    };
    let beta = p.add_scalar("beta")?;
    let id_n = DMatrix::identity(n, n);
    let id_m = DMatrix::identity(m, m);
    let bpgf = bp * gamma_f;
    let SynthesisScalars {
        alpha,
        lambda,
        delta,
        gamma,
        epsilon,
    } = *scalars;

    // invariance, blocks (n, n, 1, m)
    let mut e = AffineMatrixExpr::new(&[n, n, 1, m]);
    add_neg_sym_a(&mut e, &v, ap, &bpgf, n, m);
    e.add_symmetric_var(0, -alpha, v.x, n);
    e.add_symmetric_var(1, -alpha, v.y, n);
    e.add_constant(0, 1, &(-alpha * &id_n));
    add_neg_b(&mut e, &v, 3, bp, gamma_f, gamma_c, n, m);
    e.add_constant(2, 2, &DMatrix::from_element(1, 1, alpha));
    input_set_block(&mut e, 2, 3, beta, &sets.input);
    if let Some((ns, xi_inv)) = &normal {
        let xi = ns.shape();
        let xb = ns.center();
        let xxb = xi * xb;
        e.add_symmetric_var(0, 2.0 * lambda, v.x, n);
        e.add_constant(0, 0, &(-lambda * xi_inv));
        e.add_product(0, 1, &(lambda * &id_n), v.x, (n, n), xi, false);
        e.add_constant(1, 1, &(lambda * xi));
        let h = DMatrix::from_column_slice(n, 1, xxb.as_slice());
        e.add_product(0, 2, &(-lambda * &id_n), v.x, (n, n), &h, false);
        e.add_constant(1, 2, &(-lambda * &h));
        e.add_constant(
            2,
            2,
            &DMatrix::from_element(1, 1, -lambda * (1.0 - xb.dot(&xxb))),
        );
    }
    p.add_constraint("invariance", e, 0.0)?;

    // safety, blocks (n, 1, n)
    let pb = sets.safe.center();
    let psipb = psi * pb;
    let mut s = AffineMatrixExpr::new(&[n, 1, n]);
    s.add_symmetric_var(0, delta, v.x, n);
    s.add_product(0, 1, &id_n, v.x, (n, n), &DMatrix::from_column_slice(n, 1, psipb.as_slice()), false);
    s.add_constant(1, 1, &DMatrix::from_element(1, 1, 1.0 - pb.dot(&psipb) - delta));
    s.add_product(0, 2, &id_n, v.x, (n, n), &id_n, false);
    s.add_constant(2, 2, &psi_inv);
    p.add_constraint("safety", s, 0.0)?;

    // distortion, blocks (n, n, m, m)
    let mut l = AffineMatrixExpr::new(&[n, n, m, m]);
    add_neg_sym_a(&mut l, &v, ap, &bpgf, n, m);
    add_neg_b(&mut l, &v, 2, bp, gamma_f, gamma_c, n, m);
    l.add_product(0, 3, &(-&id_n), v.ch, (m, n), &id_m, true);
    l.add_identity(2, gamma - epsilon);
    l.add_product(2, 3, &(-&id_m), v.dh, (m, m), &id_m, true);
    l.add_constant(2, 3, &id_m);
    l.add_identity(3, gamma);
    p.add_constraint("distortion", l, 0.0)?;

    // coupling, blocks (n, n)
    let mut c = AffineMatrixExpr::new(&[n, n]);
    c.add_symmetric_var(0, 1.0, v.x, n);
    c.add_symmetric_var(1, 1.0, v.y, n);
    c.add_constant(0, 1, &id_n);
    p.add_constraint("coupling", c, STRICT_MARGIN)?;

    p.add_nonnegative(beta)?;
    p.set_trace_objective(Sense::Minimize, v.x)?;
    Ok(p)
}
