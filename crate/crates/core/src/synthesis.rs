//! End-to-end pipelines: reachable-set analysis of the unfiltered plant,
//! filter synthesis, extraction of the filter from the linearizing change
//! of variables, and scalar grid search.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ellipsoid::{
    containment_margin, is_contained, Ellipsoid, EllipsoidError, DEFAULT_CONTAINMENT_TOL,
    MAX_CONDITION,
};
use crate::filter::FilterRealization;
use crate::lmi::{
    self, assemble_invariance, assemble_synthesis, LmiError, LmiProblem, SafetySets, SolveStatus,
    SolverOptions, SolverResult, SynthesisScalars,
};
use crate::lti::{
    build_extended_system, hinf_norm, is_hurwitz, spectral_abscissa, LtiError, StateSpaceModel,
    DEFAULT_HURWITZ_TOL,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthesisError {
    #[error(transparent)]
    Lti(#[from] LtiError),
    #[error(transparent)]
    Lmi(#[from] LmiError),
    #[error(transparent)]
    Ellipsoid(#[from] EllipsoidError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("problem infeasible ({0})")]
    Infeasible(String),
    #[error("solver failed numerically: {0}")]
    NumericalFailure(String),
    #[error(
        "I - YX is ill-conditioned (condition number {condition:e}); \
         retry after rescaling X by (1 + 1e-6) and re-solving"
    )]
    Extraction { condition: f64 },
}

/// Value lists for a grid search; `epsilon` stays fixed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarGrid {
    pub alpha: Vec<f64>,
    pub lambda: Vec<f64>,
    pub delta: Vec<f64>,
    pub gamma: Vec<f64>,
}

impl ScalarGrid {
    pub fn single(s: &SynthesisScalars) -> Self {
        Self {
            alpha: vec![s.alpha],
            lambda: vec![s.lambda],
            delta: vec![s.delta],
            gamma: vec![s.gamma],
        }
    }

    pub fn len(&self) -> usize {
        self.alpha.len() * self.lambda.len() * self.delta.len() * self.gamma.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Grid points in row-major order over (alpha, lambda, delta, gamma).
    pub fn points(&self, epsilon: f64) -> Vec<SynthesisScalars> {
        let mut out = Vec::with_capacity(self.len());
        for &alpha in &self.alpha {
            for &lambda in &self.lambda {
                for &delta in &self.delta {
                    for &gamma in &self.gamma {
                        out.push(SynthesisScalars {
                            alpha,
                            lambda,
                            delta,
                            gamma,
                            epsilon,
                        });
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesisConfig {
    pub scalars: SynthesisScalars,
    /// Include the normal-set term; requires `sets.normal`.
    pub stealthy: bool,
    /// Pins the multiplier `beta` instead of leaving it free.
    #[serde(default)]
    pub beta: Option<f64>,
    #[serde(default)]
    pub grid: Option<ScalarGrid>,
    #[serde(default)]
    pub solver: SolverOptions,
}

impl SynthesisConfig {
    pub fn new(scalars: SynthesisScalars, stealthy: bool) -> Self {
        Self {
            scalars,
            stealthy,
            beta: None,
            grid: None,
            solver: SolverOptions::default(),
        }
    }

    pub fn validate(&self) -> Result<(), SynthesisError> {
        let s = &self.scalars;
        for (name, v) in [
            ("alpha", s.alpha),
            ("lambda", s.lambda),
            ("delta", s.delta),
            ("gamma", s.gamma),
            ("epsilon", s.epsilon),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(SynthesisError::Config(format!("{name} = {v} must be >= 0")));
            }
        }
        if let Some(b) = self.beta {
            if !(b >= 0.0 && b.is_finite()) {
                return Err(SynthesisError::Config(format!("beta = {b} must be >= 0")));
            }
        }
        if let Some(g) = &self.grid {
            for (name, l) in [
                ("alpha", &g.alpha),
                ("lambda", &g.lambda),
                ("delta", &g.delta),
                ("gamma", &g.gamma),
            ] {
                if l.is_empty() {
                    return Err(SynthesisError::Config(format!("grid.{name} is empty")));
                }
                if l.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
                    return Err(SynthesisError::Config(format!("grid.{name} has a negative entry")));
                }
            }
        }
        Ok(())
    }
}

/// Sets seen by the solver: the normal set is dropped unless stealthy.
fn effective_sets(sets: &SafetySets, stealthy: bool) -> Result<SafetySets, SynthesisError> {
    if stealthy && sets.normal.is_none() {
        return Err(SynthesisError::Config(
            "stealthy mode needs a normal-operation set".into(),
        ));
    }
    let mut s = sets.clone();
    if !stealthy {
        s.normal = None;
    }
    Ok(s)
}

fn require_hurwitz(a: &DMatrix<f64>) -> Result<(), SynthesisError> {
    if is_hurwitz(a, DEFAULT_HURWITZ_TOL)? {
        Ok(())
    } else {
        Err(LtiError::Unstable {
            abscissa: spectral_abscissa(a)?,
        }
        .into())
    }
}

/// Largest decay rate any invariant ellipsoid can certify without the
/// normal-set term: `2 min |Re lambda(A)|`.
pub fn alpha_upper_bound(a: &DMatrix<f64>) -> f64 {
    let ev = a.complex_eigenvalues();
    2.0 * ev.iter().map(|l| l.re.abs()).fold(f64::INFINITY, f64::min)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalysisOutcome {
    pub status: SolveStatus,
    pub alpha: f64,
    pub stealthy: bool,
    /// Invariant-set shape in plant coordinates.
    #[serde(with = "opt_matrix")]
    pub q: Option<DMatrix<f64>>,
    pub projection: Option<Ellipsoid>,
    /// Whether the projection lies in the safe set.
    pub safe: Option<bool>,
    /// Minimum eigenvalue of `Q - Psi`.
    pub containment_margin: Option<f64>,
    pub beta: Option<f64>,
    pub lambda: Option<f64>,
    pub objective: f64,
    /// Interval of decay rates worth trying, `(0, 2 min |Re lambda(Ap)|)`.
    pub alpha_range: (f64, f64),
    pub notes: Vec<String>,
    pub solve_time: f64,
    pub iterations: u32,
}

mod opt_matrix {
    use nalgebra::DMatrix;
    use serde::Serializer;

    pub fn serialize<S: Serializer>(m: &Option<DMatrix<f64>>, s: S) -> Result<S::Ok, S::Error> {
        match m {
            Some(m) => s.serialize_some(&crate::serde_mat::to_rows(m)),
            None => s.serialize_none(),
        }
    }
}

/// Smallest invariant ellipsoid of the unfiltered plant at decay rate
/// `alpha`, and whether its shadow fits in the safe set.
///
/// Infeasibility is a value: `status` says so and `alpha_range` suggests
/// where to look instead.
pub fn analyze_reachable_set(
    plant: &StateSpaceModel,
    sets: &SafetySets,
    alpha: f64,
    stealthy: bool,
    opts: &SolverOptions,
) -> Result<AnalysisOutcome, SynthesisError> {
    require_hurwitz(plant.a())?;
    let sets = effective_sets(sets, stealthy)?;
    let p = assemble_invariance(plant.a(), plant.b(), &sets.input, sets.normal.as_ref(), alpha)?;
    let r = lmi::solve(&p, opts)?;
    let alpha_range = (0.0, alpha_upper_bound(plant.a()));
    let mut notes = Vec::new();
    if alpha == 0.0 {
        notes.push("alpha = 0: the level-set term vanishes and the problem is degenerate".into());
    }
    let mut out = AnalysisOutcome {
        status: r.status,
        alpha,
        stealthy,
        q: None,
        projection: None,
        safe: None,
        containment_margin: None,
        beta: r.scalar("beta"),
        lambda: r.scalar("lambda"),
        objective: r.objective,
        alpha_range,
        notes,
        solve_time: r.solve_time,
        iterations: r.iterations,
    };
    if !r.status.is_solved() {
        if r.status == SolveStatus::Infeasible {
            out.notes.push(format!(
                "no invariant ellipsoid at alpha = {alpha}; try alpha in ({}, {})",
                alpha_range.0, alpha_range.1
            ));
        }
        out.notes.extend(r.trace);
        return Ok(out);
    }
    let q = r.value("Q").cloned().expect("Q solved");
    let q = (&q + q.transpose()) * 0.5;
    let proj = Ellipsoid::centered(q.clone())?;
    out.safe = Some(is_contained(&proj, &sets.safe, DEFAULT_CONTAINMENT_TOL)?);
    out.containment_margin = Some(containment_margin(&proj, &sets.safe)?);
    out.q = Some(q);
    out.projection = Some(proj);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SynthesisDiagnostics {
    pub status: SolveStatus,
    pub solve_time: f64,
    pub iterations: u32,
    pub max_psd_violation: f64,
    pub constraint_min_eigenvalues: Vec<(String, f64)>,
    pub beta: f64,
    /// Condition number of `N = I - YX`.
    pub extraction_condition: f64,
    /// Minimum eigenvalue of `X^-1 - Psi`.
    pub containment_margin: f64,
    pub contained: bool,
    pub hinf: f64,
    pub filter_hurwitz: bool,
    pub extended_hurwitz: bool,
    /// Rank of the controllability matrix of the extended `(A, B)`.
    pub controllability_rank: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SynthesisOutcome {
    pub filter: FilterRealization,
    #[serde(with = "crate::serde_mat::matrix")]
    pub x: DMatrix<f64>,
    #[serde(with = "crate::serde_mat::matrix")]
    pub y: DMatrix<f64>,
    #[serde(with = "crate::serde_mat::matrix")]
    pub a_hat: DMatrix<f64>,
    #[serde(with = "crate::serde_mat::matrix")]
    pub b_hat: DMatrix<f64>,
    #[serde(with = "crate::serde_mat::matrix")]
    pub c_hat: DMatrix<f64>,
    #[serde(with = "crate::serde_mat::matrix")]
    pub d_hat: DMatrix<f64>,
    /// Invariant-set shape of the extended state `[xp; xf]`.
    #[serde(with = "crate::serde_mat::matrix")]
    pub q: DMatrix<f64>,
    /// `trace(X)`.
    pub objective: f64,
    pub scalars: SynthesisScalars,
    pub stealthy: bool,
    pub diagnostics: SynthesisDiagnostics,
}

impl SynthesisOutcome {
    pub fn extended(&self, plant: &StateSpaceModel) -> Result<StateSpaceModel, SynthesisError> {
        Ok(build_extended_system(plant, &self.filter)?)
    }
}

/// Filter-synthesis problem for the given scalars, with `beta` pinned when
/// the config asks for it.
pub fn synthesis_problem(
    plant: &StateSpaceModel,
    sets: &SafetySets,
    gamma_f: &DMatrix<f64>,
    gamma_c: &DMatrix<f64>,
    config: &SynthesisConfig,
) -> Result<LmiProblem, SynthesisError> {
    config.validate()?;
    let sets = effective_sets(sets, config.stealthy)?;
    let p = assemble_synthesis(plant.a(), plant.b(), gamma_f, gamma_c, &sets, &config.scalars)?;
    Ok(match config.beta {
        Some(b) => p.fix_variable("beta", &DMatrix::from_element(1, 1, b))?,
        None => p,
    })
}

fn condition_number(m: &DMatrix<f64>) -> f64 {
    let sv = m.singular_values();
    let lo = sv.min();
    if lo > 0.0 {
        sv.max() / lo
    } else {
        f64::INFINITY
    }
}

/// Recovers the filter from the change of variables with `M = I`,
/// `N = I - YX`.
#[allow(clippy::too_many_arguments)]
pub fn extract_filter(
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    a_hat: &DMatrix<f64>,
    b_hat: &DMatrix<f64>,
    c_hat: &DMatrix<f64>,
    d_hat: &DMatrix<f64>,
    plant: &StateSpaceModel,
    gamma_f: &DMatrix<f64>,
    gamma_c: &DMatrix<f64>,
) -> Result<FilterRealization, SynthesisError> {
    let n = plant.n_states();
    let m = plant.n_inputs();
    let shapes = [
        ("X", x.shape(), (n, n)),
        ("Y", y.shape(), (n, n)),
        ("Ah", a_hat.shape(), (n, n)),
        ("Bh", b_hat.shape(), (n, m)),
        ("Ch", c_hat.shape(), (m, n)),
        ("Dh", d_hat.shape(), (m, m)),
    ];
    for (name, got, want) in shapes {
        if got != want {
            return Err(LtiError::Dimension(format!("{name} is {got:?}, expected {want:?}")).into());
        }
    }
    let nmat = DMatrix::identity(n, n) - y * x;
    let condition = condition_number(&nmat);
    if !(condition <= MAX_CONDITION) {
        return Err(SynthesisError::Extraction { condition });
    }
    let lu = nmat.lu();
    let (ap, bp) = (plant.a(), plant.b());
    let ybpgf = y * bp * gamma_f;
    let d_f = d_hat.clone();
    let c_f = c_hat.clone();
    let b_f = lu
        .solve(&(b_hat - &ybpgf * &d_f))
        .ok_or(SynthesisError::Extraction { condition })?;
    let a_f = lu
        .solve(&(a_hat - y * ap * x - &ybpgf * &c_f))
        .ok_or(SynthesisError::Extraction { condition })?;
    Ok(FilterRealization::new(
        a_f,
        b_f,
        c_f,
        d_f,
        gamma_f.clone(),
        gamma_c.clone(),
    )?)
}

/// Forward change of variables with `M = I`, `N = I - YX`; returns
/// `(Ah, Bh, Ch, Dh)`.
pub fn hatted_variables(
    filter: &FilterRealization,
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    plant: &StateSpaceModel,
) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
    let n = plant.n_states();
    let nmat = DMatrix::identity(n, n) - y * x;
    let ybpgf = y * plant.b() * filter.gamma_f();
    let a_hat = y * plant.a() * x + &ybpgf * filter.c_f() + &nmat * filter.a_f();
    let b_hat = &ybpgf * filter.d_f() + &nmat * filter.b_f();
    (a_hat, b_hat, filter.c_f().clone(), filter.d_f().clone())
}

/// `Q = Pi2 Pi1^-1` with `Pi1 = [X, I; I, 0]`, `Pi2 = [I, Y; 0, N']`,
/// symmetrized.
pub fn reconstruct_q(x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<DMatrix<f64>, SynthesisError> {
    let n = x.nrows();
    let id = DMatrix::<f64>::identity(n, n);
    let nmat = &id - y * x;
    let mut pi1 = DMatrix::zeros(2 * n, 2 * n);
    pi1.view_mut((0, 0), (n, n)).copy_from(x);
    pi1.view_mut((0, n), (n, n)).copy_from(&id);
    pi1.view_mut((n, 0), (n, n)).copy_from(&id);
    let mut pi2 = DMatrix::zeros(2 * n, 2 * n);
    pi2.view_mut((0, 0), (n, n)).copy_from(&id);
    pi2.view_mut((0, n), (n, n)).copy_from(y);
    pi2.view_mut((n, n), (n, n)).copy_from(&nmat.transpose());
    // Pi1' Q' = Pi2' and Q is symmetric
    let q = pi1
        .transpose()
        .lu()
        .solve(&pi2.transpose())
        .ok_or(SynthesisError::Extraction {
            condition: f64::INFINITY,
        })?;
    Ok((&q + q.transpose()) * 0.5)
}

fn status_error(r: &SolverResult) -> SynthesisError {
    let detail = r.trace.join("; ");
    match r.status {
        SolveStatus::Infeasible => SynthesisError::Infeasible(detail),
        _ => SynthesisError::NumericalFailure(detail),
    }
}

/// Builds the outcome from a solved synthesis problem.
fn finish(
    plant: &StateSpaceModel,
    sets: &SafetySets,
    gamma_f: &DMatrix<f64>,
    gamma_c: &DMatrix<f64>,
    config: &SynthesisConfig,
    r: &SolverResult,
) -> Result<SynthesisOutcome, SynthesisError> {
    let get = |k: &str| r.value(k).cloned().expect("solved variable");
    let sym = |m: DMatrix<f64>| (&m + m.transpose()) * 0.5;
    let (x, y) = (sym(get("X")), sym(get("Y")));
    let (a_hat, b_hat, c_hat, d_hat) = (get("Ah"), get("Bh"), get("Ch"), get("Dh"));
    let filter = extract_filter(&x, &y, &a_hat, &b_hat, &c_hat, &d_hat, plant, gamma_f, gamma_c)?;
    let q = reconstruct_q(&x, &y)?;
    let n = plant.n_states();
    let ext = build_extended_system(plant, &filter)?;
    let x_inv = x
        .clone()
        .try_inverse()
        .ok_or(SynthesisError::Extraction {
            condition: condition_number(&x),
        })?;
    let x_inv = (&x_inv + x_inv.transpose()) * 0.5;
    let margin = crate::lmi::min_eigenvalue(&(&x_inv - sets.safe.shape()));
    let extended_hurwitz = is_hurwitz(ext.a(), DEFAULT_HURWITZ_TOL)?;
    let hinf = if extended_hurwitz {
        let tz = ext.with_output(
            {
                let mut cz = DMatrix::zeros(filter.n_channels(), ext.n_states());
                cz.view_mut((0, n), (filter.n_channels(), filter.order()))
                    .copy_from(filter.c_f());
                cz
            },
            filter.d_f() - DMatrix::identity(filter.n_channels(), filter.n_channels()),
        )?;
        hinf_norm(&tz, 1e-6)?
    } else {
        f64::INFINITY
    };
    let diagnostics = SynthesisDiagnostics {
        status: r.status,
        solve_time: r.solve_time,
        iterations: r.iterations,
        max_psd_violation: r.max_psd_violation,
        constraint_min_eigenvalues: r.min_eigenvalues.clone(),
        beta: config.beta.or_else(|| r.scalar("beta")).unwrap_or(f64::NAN),
        extraction_condition: condition_number(&(DMatrix::identity(n, n) - &y * &x)),
        containment_margin: margin,
        contained: margin >= -DEFAULT_CONTAINMENT_TOL,
        hinf,
        filter_hurwitz: is_hurwitz(filter.a_f(), DEFAULT_HURWITZ_TOL)?,
        extended_hurwitz,
        controllability_rank: ext.controllability_rank(),
    };
    Ok(SynthesisOutcome {
        filter,
        objective: x.trace(),
        x,
        y,
        a_hat,
        b_hat,
        c_hat,
        d_hat,
        q,
        scalars: config.scalars,
        stealthy: config.stealthy,
        diagnostics,
    })
}

/// Solves the synthesis problem, extracts the filter and reconstructs the
/// invariant set of the filtered plant.
pub fn synthesize_filter(
    plant: &StateSpaceModel,
    sets: &SafetySets,
    gamma_f: &DMatrix<f64>,
    gamma_c: &DMatrix<f64>,
    config: &SynthesisConfig,
) -> Result<SynthesisOutcome, SynthesisError> {
    require_hurwitz(plant.a())?;
    let p = synthesis_problem(plant, sets, gamma_f, gamma_c, config)?;
    let r = lmi::solve(&p, &config.solver)?;
    if !r.status.is_solved() {
        return Err(status_error(&r));
    }
    finish(plant, sets, gamma_f, gamma_c, config, &r)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridRow {
    pub index: usize,
    pub scalars: SynthesisScalars,
    /// `optimal`, `feasible`, `infeasible`, `numerical-failure` or `error`.
    pub status: String,
    pub objective: Option<f64>,
    pub solve_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridOutcome {
    pub best: Option<SynthesisOutcome>,
    pub best_index: Option<usize>,
    pub table: Vec<GridRow>,
}

impl GridOutcome {
    /// Table as CSV with a header row; timings are left out so the table is
    /// reproducible byte for byte.
    pub fn table_csv(&self) -> String {
        let mut s = String::from("index,alpha,lambda,delta,gamma,epsilon,status,objective\n");
        for r in &self.table {
            let obj = r.objective.map_or(String::new(), |v| format!("{v:.12e}"));
            let _ = writeln!(
                s,
                "{},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{},{}",
                r.index,
                r.scalars.alpha,
                r.scalars.lambda,
                r.scalars.delta,
                r.scalars.gamma,
                r.scalars.epsilon,
                r.status,
                obj
            );
        }
        s
    }
}

fn status_name(s: SolveStatus) -> &'static str {
    match s {
        SolveStatus::Optimal => "optimal",
        SolveStatus::Feasible => "feasible",
        SolveStatus::Infeasible => "infeasible",
        SolveStatus::NumericalFailure => "numerical-failure",
    }
}

/// Solves every grid point independently (in parallel) and keeps the
/// feasible outcome with the smallest `trace(X)`, ties broken by index.
pub fn grid_search(
    plant: &StateSpaceModel,
    sets: &SafetySets,
    gamma_f: &DMatrix<f64>,
    gamma_c: &DMatrix<f64>,
    grid: &ScalarGrid,
    base: &SynthesisConfig,
) -> Result<GridOutcome, SynthesisError> {
    base.validate()?;
    if grid.is_empty() {
        return Err(SynthesisError::Config("grid has no points".into()));
    }
    require_hurwitz(plant.a())?;
    let points = grid.points(base.scalars.epsilon);
    let results: Vec<(GridRow, Option<SynthesisOutcome>)> = points
        .par_iter()
        .enumerate()
        .map(|(index, sc)| {
            let cfg = SynthesisConfig {
                scalars: *sc,
                grid: None,
                ..base.clone()
            };
            let solved = synthesis_problem(plant, sets, gamma_f, gamma_c, &cfg)
                .and_then(|p| Ok(lmi::solve(&p, &cfg.solver)?));
            let (status, time, outcome) = match solved {
                Ok(r) if r.status.is_solved() => {
                    match finish(plant, sets, gamma_f, gamma_c, &cfg, &r) {
                        Ok(o) => (status_name(r.status).to_string(), r.solve_time, Some(o)),
                        Err(_) => ("error".to_string(), r.solve_time, None),
                    }
                }
                Ok(r) => (status_name(r.status).to_string(), r.solve_time, None),
                Err(_) => ("error".to_string(), 0.0, None),
            };
            let row = GridRow {
                index,
                scalars: *sc,
                status,
                objective: outcome.as_ref().map(|o| o.objective),
                solve_time: time,
            };
            (row, outcome)
        })
        .collect();
    let mut table = Vec::with_capacity(results.len());
    let mut best: Option<(f64, usize, SynthesisOutcome)> = None;
    for (row, outcome) in results {
        if let Some(o) = outcome {
            let better = match &best {
                None => true,
                Some((obj, idx, _)) => (o.objective, row.index) < (*obj, *idx),
            };
            if better {
                best = Some((o.objective, row.index, o));
            }
        }
        table.push(row);
    }
    Ok(match best {
        Some((_, i, o)) => GridOutcome {
            best: Some(o),
            best_index: Some(i),
            table,
        },
        None => GridOutcome {
            best: None,
            best_index: None,
            table,
        },
    })
}
