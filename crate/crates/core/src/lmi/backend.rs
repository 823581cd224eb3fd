//! Solver backends for [`ConicProgram`]s.

use std::time::Instant;

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};

use super::standard::{ConeKind, ConicProgram};
use super::LmiError;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SolverOptions {
    /// Feasibility and duality-gap tolerance handed to the backend.
    pub tol: f64,
    pub max_iter: u32,
    /// Retry an inconclusive solve as a margin-maximization problem to
    /// decide feasibility.
    pub phase1_fallback: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 200,
            phase1_fallback: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum BackendStatus {
    Solved,
    AlmostSolved,
    Infeasible,
    AlmostInfeasible,
    Unbounded,
    Failed(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct BackendOutput {
    pub status: BackendStatus,
    pub x: Vec<f64>,
    pub iterations: u32,
    pub solve_time: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
}

/// In-process conic solver.
///
/// Input is the objective vector, the per-block sparse triplets of `A`
/// with right-hand sides `b`, and the cone list; the constraint read is
/// `b - A x in K`.
pub trait ConicBackend: Send + Sync {
    fn name(&self) -> &'static str;
    fn solve(&self, prog: &ConicProgram, opts: &SolverOptions) -> Result<BackendOutput, LmiError>;
}

/// Interior-point backend on the Clarabel solver.
#[derive(Debug, Default, Clone, Copy)]
pub struct ClarabelBackend;

impl ConicBackend for ClarabelBackend {
    fn name(&self) -> &'static str {
        "clarabel"
    }

    fn solve(&self, prog: &ConicProgram, opts: &SolverOptions) -> Result<BackendOutput, LmiError> {
        let n = prog.n_vars();
        let mut rows = Vec::new();
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        let mut b = Vec::new();
        let mut cones = Vec::with_capacity(prog.blocks.len());
        let mut offset = 0;
        for blk in &prog.blocks {
            for (i, j, v) in &blk.a {
                rows.push(offset + i);
                cols.push(*j);
                vals.push(*v);
            }
            b.extend_from_slice(&blk.b);
            offset += blk.b.len();
            cones.push(match blk.kind {
                ConeKind::Nonnegative => SupportedConeT::NonnegativeConeT(1),
                ConeKind::Psd(d) => SupportedConeT::PSDTriangleConeT(d),
            });
        }
        let a = CscMatrix::new_from_triplets(offset, n, rows, cols, vals);
        let p = CscMatrix::zeros((n, n));
        let settings = DefaultSettingsBuilder::default()
            .verbose(false)
            .max_iter(opts.max_iter)
            .tol_gap_abs(opts.tol)
            .tol_gap_rel(opts.tol)
            .tol_feas(opts.tol)
            .presolve_enable(false)
            .chordal_decomposition_enable(false)
            .build()
            .map_err(|e| LmiError::Backend(format!("settings: {e:?}")))?;
        let start = Instant::now();
        let mut solver = DefaultSolver::new(&p, &prog.c, &a, &b, &cones, settings)
            .map_err(|e| LmiError::Backend(format!("setup: {e}")))?;
        solver.solve();
        let sol = &solver.solution;
        let status = match sol.status {
            SolverStatus::Solved => BackendStatus::Solved,
            SolverStatus::AlmostSolved => BackendStatus::AlmostSolved,
            SolverStatus::PrimalInfeasible => BackendStatus::Infeasible,
            SolverStatus::AlmostPrimalInfeasible => BackendStatus::AlmostInfeasible,
            SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => {
                BackendStatus::Unbounded
            }
            other => BackendStatus::Failed(format!("{other:?}")),
        };
        Ok(BackendOutput {
            status,
            x: sol.x.clone(),
            iterations: sol.iterations,
            solve_time: start.elapsed().as_secs_f64(),
            primal_residual: sol.r_prim,
            dual_residual: sol.r_dual,
        })
    }
}
