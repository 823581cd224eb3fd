//! Affine symmetric-matrix expressions, LMI problems, their lowering to
//! vectorized conic form, and a pluggable conic backend.

mod assemble;
mod backend;
mod expr;
mod problem;
mod standard;

pub use assemble::{
    assemble_invariance, assemble_synthesis, input_set_block, SafetySets,
    SynthesisScalars, STRICT_MARGIN,
};
pub use backend::{BackendOutput, BackendStatus, ClarabelBackend, ConicBackend, SolverOptions};
pub use expr::{AffineMatrixExpr, MatrixVar, Term, VarId};
pub use problem::{
    LmiProblem, Objective, ProblemMeta, ProblemMode, PsdConstraint, Sense, VarValues,
};
pub use standard::{
    smat, svec, svec_index, to_standard_form, ConeBlock, ConeKind, ConicProgram, ScalarSlot,
};

pub(crate) use problem::min_eigenvalue;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LmiError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("variable {0} already registered")]
    DuplicateVariable(String),
    #[error("unknown variable {0}")]
    UnknownVariable(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("matrix {name} is singular or ill-conditioned (condition number {condition:e})")]
    IllConditioned { name: String, condition: f64 },
    #[error("constraint {constraint} violated after fixing variables (min eigenvalue {min_eigenvalue:e})")]
    FixedInfeasible {
        constraint: String,
        min_eigenvalue: f64,
    },
    #[error("backend error: {0}")]
    Backend(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveStatus {
    Optimal,
    Feasible,
    Infeasible,
    NumericalFailure,
}

impl SolveStatus {
    pub fn is_solved(self) -> bool {
        matches!(self, SolveStatus::Optimal | SolveStatus::Feasible)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverResult {
    pub status: SolveStatus,
    pub values: VarValues,
    pub objective: f64,
    /// `max(0, -min eigenvalue)` over the margin-shifted constraints.
    pub max_psd_violation: f64,
    /// Always zero: problems carry no equality constraints.
    pub max_eq_violation: f64,
    pub min_eigenvalues: Vec<(String, f64)>,
    pub solve_time: f64,
    pub iterations: u32,
    pub backend: &'static str,
    /// Human-readable record of backend calls, for diagnostics.
    pub trace: Vec<String>,
}

impl SolverResult {
    pub fn value(&self, name: &str) -> Option<&DMatrix<f64>> {
        self.values.get(name)
    }

    pub fn scalar(&self, name: &str) -> Option<f64> {
        self.values.get(name).map(|m| m[(0, 0)])
    }

    fn empty(status: SolveStatus, backend: &'static str, trace: Vec<String>) -> Self {
        Self {
            status,
            values: VarValues::new(),
            objective: f64::NAN,
            max_psd_violation: f64::NAN,
            max_eq_violation: 0.0,
            min_eigenvalues: Vec::new(),
            solve_time: 0.0,
            iterations: 0,
            backend,
            trace,
        }
    }
}

/// Solves with the default [`ClarabelBackend`].
pub fn solve(p: &LmiProblem, opts: &SolverOptions) -> Result<SolverResult, LmiError> {
    solve_with(p, opts, &ClarabelBackend)
}

pub fn solve_with(
    p: &LmiProblem,
    opts: &SolverOptions,
    backend: &dyn ConicBackend,
) -> Result<SolverResult, LmiError> {
    let name = backend.name();
    if p.vars().is_empty() {
        let values = VarValues::new();
        let eigs = p.constraint_min_eigenvalues(&values)?;
        let ok = eigs.iter().all(|(_, e)| *e >= -opts.tol);
        let status = if ok {
            SolveStatus::Optimal
        } else {
            SolveStatus::Infeasible
        };
        let mut r = SolverResult::empty(status, name, vec!["no free variables".into()]);
        r.objective = 0.0;
        r.max_psd_violation = eigs.iter().map(|(_, e)| (-e).max(0.0)).fold(0.0, f64::max);
        r.min_eigenvalues = eigs;
        return Ok(r);
    }

    let prog = to_standard_form(p);
    let out = backend.solve(&prog, opts)?;
    let mut trace = vec![format!(
        "{name}: {:?} after {} iterations (r_prim {:.2e}, r_dual {:.2e})",
        out.status, out.iterations, out.primal_residual, out.dual_residual
    )];
    let mut solve_time = out.solve_time;
    let mut iterations = out.iterations;

    let status = match &out.status {
        BackendStatus::Solved => SolveStatus::Optimal,
        BackendStatus::AlmostSolved => SolveStatus::Feasible,
        BackendStatus::Infeasible | BackendStatus::AlmostInfeasible => SolveStatus::Infeasible,
        BackendStatus::Unbounded | BackendStatus::Failed(_) => {
            if opts.phase1_fallback {
                let (verdict, p1) = phase1(p, opts, backend)?;
                trace.push(p1.0);
                solve_time += p1.1;
                iterations += p1.2;
                verdict
            } else {
                SolveStatus::NumericalFailure
            }
        }
    };

    if !status.is_solved() {
        let mut r = SolverResult::empty(status, name, trace);
        r.solve_time = solve_time;
        r.iterations = iterations;
        return Ok(r);
    }
    let values = prog.unpack(p, &out.x);
    let eigs = p.constraint_min_eigenvalues(&values)?;
    let max_psd_violation = eigs.iter().map(|(_, e)| (-e).max(0.0)).fold(0.0, f64::max);
    Ok(SolverResult {
        status,
        objective: p.objective_value(&values)?,
        values,
        max_psd_violation,
        max_eq_violation: 0.0,
        min_eigenvalues: eigs,
        solve_time,
        iterations,
        backend: name,
        trace,
    })
}

const MARGIN_VAR: &str = "__margin";

/// Copy of `p` whose objective is a common margin `t <= 1` subtracted from
/// every constraint selected by `shift`.
pub fn margin_problem(p: &LmiProblem, shift: impl Fn(&str) -> bool) -> Result<LmiProblem, LmiError> {
    let mut q = LmiProblem::new(p.meta().clone());
    for v in p.vars() {
        q.add_var(&v.name, v.rows, v.cols, v.symmetric)?;
    }
    let t = q.add_scalar(MARGIN_VAR)?;
    for c in p.constraints() {
        let mut e = c.expr.clone();
        if shift(&c.name) {
            let d = e.dim();
            e.push_term(Term::Scaled {
                var: t,
                coef: -DMatrix::identity(d, d),
            });
        }
        q.add_constraint(&c.name, e, c.margin)?;
    }
    let mut cap = AffineMatrixExpr::new(&[1]);
    cap.add_identity(0, 1.0);
    cap.add_scaled(0, 0, t, &(-DMatrix::identity(1, 1)));
    q.add_constraint("margin<=1", cap, 0.0)?;
    q.set_objective(Sense::Maximize, vec![(t, DMatrix::identity(1, 1))])?;
    Ok(q)
}

/// Largest `t <= 1` such that the constraints selected by `shift` hold with
/// `t I` to spare; `None` if the solver fails on the margin problem.
pub fn max_margin(
    p: &LmiProblem,
    opts: &SolverOptions,
    shift: impl Fn(&str) -> bool,
) -> Result<(Option<f64>, SolverResult), LmiError> {
    let q = margin_problem(p, shift)?;
    let r = solve(&q, opts)?;
    Ok((r.scalar(MARGIN_VAR).filter(|_| r.status.is_solved()), r))
}

const PHASE1_TOL_FACTOR: f64 = 1e-2;

/// Maximizes a common margin `t <= 1` over all constraints, at a tolerance
/// tightened by [`PHASE1_TOL_FACTOR`]. An optimum below `-10` times that
/// tolerance certifies infeasibility; anything else stays a numerical
/// failure of the original solve.
///
/// Infeasibility depth scales with the strictness margins, so it can be of
/// the order of the original tolerance itself.
fn phase1(
    p: &LmiProblem,
    opts: &SolverOptions,
    backend: &dyn ConicBackend,
) -> Result<(SolveStatus, (String, f64, u32)), LmiError> {
    let q = margin_problem(p, |_| true)?;
    let prog = to_standard_form(&q);
    let p1_opts = SolverOptions {
        tol: opts.tol * PHASE1_TOL_FACTOR,
        ..*opts
    };
    let out = backend.solve(&prog, &p1_opts)?;
    let summary;
    let verdict = match out.status {
        BackendStatus::Solved | BackendStatus::AlmostSolved => {
            let margin = prog.objective_at(&out.x);
            summary = format!(
                "phase1: {:?}, best margin {margin:.3e} after {} iterations",
                out.status, out.iterations
            );
            if margin < -10.0 * p1_opts.tol {
                SolveStatus::Infeasible
            } else {
                SolveStatus::NumericalFailure
            }
        }
        ref s => {
            summary = format!("phase1: {s:?} after {} iterations", out.iterations);
            SolveStatus::NumericalFailure
        }
    };
    Ok((verdict, (summary, out.solve_time, out.iterations)))
}
