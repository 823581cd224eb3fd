//! Post-hoc verification of a filtered (or unfiltered) plant: invariance
//! certificate replay for a fixed `Q`, safe-set containment, the distortion
//! bound, and adversarial simulation.
//!
//! The greedy attack maximizes `dV/dt` pointwise for `V = z' Q z`; it is one
//! admissible adversary among many and carries no optimality claim over a
//! horizon.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ellipsoid::{containment_margin, Ellipsoid, EllipsoidError, DEFAULT_CONTAINMENT_TOL};
use crate::filter::FilterRealization;
use crate::lmi::{self, assemble_invariance, LmiError, SafetySets, SolverOptions};
use crate::lti::{
    build_extended_system, hinf_norm, simulate, InputSignal, LtiError, StateSpaceModel, Trajectory,
};
use crate::synthesis::alpha_upper_bound;

/// Decay rates tried when replaying the invariance certificate.
pub const DEFAULT_ALPHA_GRID: [f64; 9] = [0.1, 0.25, 0.5, 1.0, 2.0, 5.0, 10.0, 15.0, 19.0];
/// Margin above which a fixed-`Q` invariance LMI counts as feasible.
pub const CERTIFICATE_TOL: f64 = 1e-6;
/// Slack on the unit level set in simulation.
pub const LEVEL_TOL: f64 = 1e-3;
/// Slack on the distortion bound.
pub const HINF_TOL: f64 = 1e-4;
/// Relative tolerance of the H-infinity bisection.
const HINF_BISECTION_TOL: f64 = 1e-7;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VerifyError {
    #[error(transparent)]
    Lti(#[from] LtiError),
    #[error(transparent)]
    Lmi(#[from] LmiError),
    #[error(transparent)]
    Ellipsoid(#[from] EllipsoidError),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("no invariant ellipsoid on the decay-rate grid: {0}")]
    NoInvariantSet(String),
}

/// Grid points inside `(0, 2 min |Re lambda(A)|)`.
pub fn alpha_grid_for(a: &DMatrix<f64>, grid: &[f64]) -> Vec<f64> {
    let hi = alpha_upper_bound(a);
    grid.iter().copied().filter(|&x| x > 0.0 && x < hi).collect()
}

fn check_q(ext: &StateSpaceModel, q: &DMatrix<f64>) -> Result<(), VerifyError> {
    let n = ext.n_states();
    if q.shape() != (n, n) {
        return Err(VerifyError::InvalidArgument(format!(
            "Q is {:?}, system has {n} states",
            q.shape()
        )));
    }
    Ellipsoid::centered(q.clone())?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaResidual {
    pub alpha: f64,
    /// Largest `t` with the invariance LMI `>= t I`; `None` on solver failure.
    pub margin: Option<f64>,
    pub beta: Option<f64>,
    pub lambda: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvarianceCheck {
    pub certified: bool,
    pub alpha: Option<f64>,
    pub residuals: Vec<AlphaResidual>,
}

/// For fixed `Q`, whether some `alpha` in `alpha_grid` admits multipliers
/// making the invariance LMI hold. The normal-set term is included iff
/// `sets.normal` is present.
pub fn check_invariance(
    ext: &StateSpaceModel,
    q: &DMatrix<f64>,
    sets: &SafetySets,
    alpha_grid: &[f64],
    opts: &SolverOptions,
) -> Result<InvarianceCheck, VerifyError> {
    check_q(ext, q)?;
    let q = (q + q.transpose()) * 0.5;
    let residuals = alpha_grid
        .par_iter()
        .map(|&alpha| -> Result<AlphaResidual, VerifyError> {
            let p = assemble_invariance(ext.a(), ext.b(), &sets.input, sets.normal.as_ref(), alpha)?
                .fix_variable("Q", &q)?;
            let (margin, r) = lmi::max_margin(&p, opts, |name| name == "invariance")?;
            Ok(AlphaResidual {
                alpha,
                margin,
                beta: r.scalar("beta"),
                lambda: r.scalar("lambda"),
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let best = residuals
        .iter()
        .filter(|r| r.margin.is_some_and(|m| m >= -CERTIFICATE_TOL))
        .map(|r| r.alpha)
        .next();
    Ok(InvarianceCheck {
        certified: best.is_some(),
        alpha: best,
        residuals,
    })
}

/// Admissible input sequences for adversarial simulation.
#[derive(Debug, Clone, PartialEq)]
pub enum AttackPolicy {
    /// `u = u_bar + R^-1 g / sqrt(g' R^-1 g)` with `g = B' Q z`.
    /// At `g = 0` every admissible input is a maximizer; `tie_break` picks
    /// one (default `u_bar`, which keeps the origin an equilibrium).
    Greedy {
        input: Ellipsoid,
        r_inv: DMatrix<f64>,
        bt_q: DMatrix<f64>,
        tie_break: Option<DVector<f64>>,
    },
    /// Uniform direction on the input-set boundary, redrawn every `dwell` s.
    BoundaryRandom {
        input: Ellipsoid,
        /// `L^-T` with `R = L L'`.
        l_inv_t: DMatrix<f64>,
        dwell: f64,
        seed: u64,
    },
    Constant { u: DVector<f64> },
}

fn inv_sym(m: &DMatrix<f64>) -> Result<DMatrix<f64>, VerifyError> {
    let i = m
        .clone()
        .cholesky()
        .ok_or_else(|| VerifyError::InvalidArgument("input shape R must be positive definite".into()))?
        .inverse();
    Ok((&i + i.transpose()) * 0.5)
}

/// Boundary input `u_bar + L^-T e_1` with `R = L L'`, a default kick for
/// greedy runs starting at the origin.
pub fn axis_kick(input: &Ellipsoid) -> Result<DVector<f64>, VerifyError> {
    let l_inv_t = match AttackPolicy::boundary_random(input, 1.0, 0)? {
        AttackPolicy::BoundaryRandom { l_inv_t, .. } => l_inv_t,
        _ => unreachable!(),
    };
    Ok(input.center() + l_inv_t.column(0))
}

/// Greedy worst-case policy for `(ext, Q)` over the input set.
pub fn greedy_attack_policy(
    ext: &StateSpaceModel,
    q: &DMatrix<f64>,
    input: &Ellipsoid,
) -> Result<AttackPolicy, VerifyError> {
    check_q(ext, q)?;
    if input.dim() != ext.n_inputs() {
        return Err(VerifyError::InvalidArgument(format!(
            "input set has dimension {}, system has {} inputs",
            input.dim(),
            ext.n_inputs()
        )));
    }
    Ok(AttackPolicy::Greedy {
        input: input.clone(),
        r_inv: inv_sym(input.shape())?,
        bt_q: ext.b().transpose() * q,
        tie_break: None,
    })
}

impl AttackPolicy {
    pub fn boundary_random(input: &Ellipsoid, dwell: f64, seed: u64) -> Result<Self, VerifyError> {
        if !(dwell > 0.0 && dwell.is_finite()) {
            return Err(VerifyError::InvalidArgument(format!("dwell {dwell} must be positive")));
        }
        let l = input
            .shape()
            .clone()
            .cholesky()
            .ok_or_else(|| VerifyError::InvalidArgument("input shape R must be positive definite".into()))?
            .l();
        let l_inv_t = l
            .transpose()
            .try_inverse()
            .ok_or_else(|| VerifyError::InvalidArgument("singular input shape".into()))?;
        Ok(AttackPolicy::BoundaryRandom {
            input: input.clone(),
            l_inv_t,
            dwell,
            seed,
        })
    }

    /// Constant input; must lie in `input` within `1e-12`.
    pub fn constant(input: &Ellipsoid, u: DVector<f64>) -> Result<Self, VerifyError> {
        if !input.contains_point(&u, 1e-12)? {
            return Err(VerifyError::InvalidArgument("constant input outside the input set".into()));
        }
        Ok(AttackPolicy::Constant { u })
    }

    /// Greedy policy that emits `u` wherever `g = 0`; `u` must lie in the
    /// input set.
    pub fn with_tie_break(self, u: DVector<f64>) -> Result<Self, VerifyError> {
        match self {
            AttackPolicy::Greedy { input, r_inv, bt_q, .. } => {
                if !input.contains_point(&u, 1e-12)? {
                    return Err(VerifyError::InvalidArgument("tie-break input outside the input set".into()));
                }
                Ok(AttackPolicy::Greedy {
                    input,
                    r_inv,
                    bt_q,
                    tie_break: Some(u),
                })
            }
            _ => Err(VerifyError::InvalidArgument("tie-break applies to the greedy policy only".into())),
        }
    }

    pub fn is_deterministic(&self) -> bool {
        !matches!(self, AttackPolicy::BoundaryRandom { .. })
    }

    /// Greedy input at state `z`.
    pub fn greedy_input(&self, z: &DVector<f64>) -> Option<DVector<f64>> {
        match self {
            AttackPolicy::Greedy {
                input,
                r_inv,
                bt_q,
                tie_break,
            } => {
                let g = bt_q * z;
                let w = r_inv * &g;
                let s = g.dot(&w).sqrt();
                Some(if s > 0.0 {
                    input.center() + w / s
                } else {
                    tie_break.clone().unwrap_or_else(|| input.center().clone())
                })
            }
            _ => None,
        }
    }

    /// Input at time `t` and state `z` in run `run`.
    pub fn input(&self, run: u64, t: f64, z: &DVector<f64>) -> DVector<f64> {
        match self {
            AttackPolicy::Greedy { .. } => self.greedy_input(z).expect("greedy"),
            AttackPolicy::BoundaryRandom {
                input,
                l_inv_t,
                dwell,
                seed,
            } => {
                let k = (t / dwell + 1e-9).floor() as u64;
                let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(run.wrapping_mul(0x9E37_79B9_7F4A_7C15)));
                rng.set_stream(k);
                let m = input.dim();
                loop {
                    let g: DVector<f64> =
                        DVector::from_iterator(m, (0..m).map(|_| StandardNormal.sample(&mut rng)));
                    let n = g.norm();
                    if n > 0.0 {
                        return input.center() + l_inv_t * (g / n);
                    }
                }
            }
            AttackPolicy::Constant { u } => u.clone(),
        }
    }
}

/// Monitors evaluated on the leading plant coordinates of `z`.
#[derive(Debug, Clone, Default)]
pub struct Monitors {
    pub safe: Option<Ellipsoid>,
    pub normal: Option<Ellipsoid>,
}

impl Monitors {
    pub fn from_sets(sets: &SafetySets) -> Self {
        Self {
            safe: Some(sets.safe.clone()),
            normal: sets.normal.clone(),
        }
    }

    fn member(e: &Option<Ellipsoid>, z: &DVector<f64>) -> Option<bool> {
        e.as_ref().map(|e| {
            let x = z.rows(0, e.dim()).into_owned();
            e.level(&x).map(|l| l <= 1.0).unwrap_or(false)
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimSettings {
    pub t_end: f64,
    pub dt: f64,
    pub n_runs: usize,
    pub seed: u64,
}

impl Default for SimSettings {
    fn default() -> Self {
        Self {
            t_end: 5.0,
            dt: 1e-4,
            n_runs: 1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub run: u64,
    pub max_level: f64,
    pub first_escape_time: Option<f64>,
    pub safe_exit_time: Option<f64>,
    pub normal_exit_time: Option<f64>,
    pub diverged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonteCarloReport {
    pub max_level: f64,
    pub first_escape_time: Option<f64>,
    pub safe_exit_time: Option<f64>,
    pub normal_exit_time: Option<f64>,
    pub runs: Vec<RunSummary>,
}

fn min_opt(a: Option<f64>, b: Option<f64>) -> Option<f64> {
    match (a, b) {
        (Some(x), Some(y)) => Some(x.min(y)),
        (x, None) => x,
        (None, y) => y,
    }
}

/// One attacked trajectory.
pub fn simulate_attack(
    ext: &StateSpaceModel,
    policy: &AttackPolicy,
    z0: &DVector<f64>,
    run: u64,
    t_end: f64,
    dt: f64,
) -> Result<Trajectory, VerifyError> {
    if policy_inputs(policy) != ext.n_inputs() {
        return Err(VerifyError::InvalidArgument("policy and system input counts differ".into()));
    }
    let f = |t: f64, z: &DVector<f64>| policy.input(run, t, z);
    Ok(simulate(ext, InputSignal::Feedback(&f), z0, t_end, dt)?)
}

fn policy_inputs(p: &AttackPolicy) -> usize {
    match p {
        AttackPolicy::Greedy { input, .. } | AttackPolicy::BoundaryRandom { input, .. } => input.dim(),
        AttackPolicy::Constant { u } => u.len(),
    }
}

/// Summary of one trajectory against the level set of `Q` and the monitors.
pub fn summarize_run(run: u64, traj: &Trajectory, q: &DMatrix<f64>, monitors: &Monitors) -> RunSummary {
    let mut s = RunSummary {
        run,
        max_level: 0.0,
        first_escape_time: None,
        safe_exit_time: None,
        normal_exit_time: None,
        diverged: false,
    };
    for (t, z) in traj.t.iter().zip(&traj.states) {
        if z.iter().any(|v| !v.is_finite()) {
            s.diverged = true;
            s.max_level = f64::INFINITY;
            s.first_escape_time.get_or_insert(*t);
            break;
        }
        let v = z.dot(&(q * z));
        s.max_level = s.max_level.max(v);
        if v > 1.0 + LEVEL_TOL && s.first_escape_time.is_none() {
            s.first_escape_time = Some(*t);
        }
        if s.safe_exit_time.is_none() && Monitors::member(&monitors.safe, z) == Some(false) {
            s.safe_exit_time = Some(*t);
        }
        if s.normal_exit_time.is_none() && Monitors::member(&monitors.normal, z) == Some(false) {
            s.normal_exit_time = Some(*t);
        }
    }
    s
}

/// Simulates the policy from `z0` (`n_runs` is ignored for deterministic
/// policies) and records the level of `V = z' Q z`.
pub fn monte_carlo_invariance(
    ext: &StateSpaceModel,
    q: &DMatrix<f64>,
    policy: &AttackPolicy,
    z0: &DVector<f64>,
    sim: &SimSettings,
    monitors: &Monitors,
) -> Result<MonteCarloReport, VerifyError> {
    check_q(ext, q)?;
    let runs = if policy.is_deterministic() { 1 } else { sim.n_runs.max(1) };
    let summaries = (0..runs as u64)
        .into_par_iter()
        .map(|run| {
            let traj = simulate_attack(ext, policy, z0, run, sim.t_end, sim.dt)?;
            Ok(summarize_run(run, &traj, q, monitors))
        })
        .collect::<Result<Vec<_>, VerifyError>>()?;
    let mut rep = MonteCarloReport {
        max_level: 0.0,
        first_escape_time: None,
        safe_exit_time: None,
        normal_exit_time: None,
        runs: Vec::new(),
    };
    for s in &summaries {
        rep.max_level = rep.max_level.max(s.max_level);
        rep.first_escape_time = min_opt(rep.first_escape_time, s.first_escape_time);
        rep.safe_exit_time = min_opt(rep.safe_exit_time, s.safe_exit_time);
        rep.normal_exit_time = min_opt(rep.normal_exit_time, s.normal_exit_time);
    }
    rep.runs = summaries;
    Ok(rep)
}

/// Trace CSV: `t, zeta_1..zeta_n, u_1..u_m, V, in_safe, in_normal`.
/// Monitor columns are `1`/`0`, empty without the corresponding set.
pub fn trace_csv(traj: &Trajectory, q: &DMatrix<f64>, monitors: &Monitors) -> String {
    let n = traj.states.first().map_or(0, |z| z.len());
    let m = traj.inputs.first().map_or(0, |u| u.len());
    let mut s = String::from("t");
    for i in 1..=n {
        let _ = write!(s, ",zeta_{i}");
    }
    for i in 1..=m {
        let _ = write!(s, ",u_{i}");
    }
    s.push_str(",V,in_safe,in_normal\n");
    let flag = |b: Option<bool>| b.map_or("", |b| if b { "1" } else { "0" });
    for k in 0..traj.len() {
        let z = &traj.states[k];
        let _ = write!(s, "{:.12e}", traj.t[k]);
        for v in z.iter().chain(traj.inputs[k].iter()) {
            let _ = write!(s, ",{v:.12e}");
        }
        let _ = writeln!(
            s,
            ",{:.12e},{},{}",
            z.dot(&(q * z)),
            flag(Monitors::member(&monitors.safe, z)),
            flag(Monitors::member(&monitors.normal, z))
        );
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationReport {
    pub invariance_feasible: bool,
    pub invariance: InvarianceCheck,
    pub containment: bool,
    /// Minimum eigenvalue of `Q_xp - Psi`.
    pub containment_margin: f64,
    pub hinf_value: f64,
    pub gamma: f64,
    pub hinf_ok: bool,
    pub max_level: f64,
    pub first_escape_time: Option<f64>,
    pub safe_exit_time: Option<f64>,
    pub normal_exit_time: Option<f64>,
    pub level_tol: f64,
    /// Whether `Q` was supplied or computed from the analysis problem.
    pub q_source: String,
}

impl VerificationReport {
    pub fn simulation_ok(&self) -> bool {
        self.max_level <= 1.0 + self.level_tol
    }

    pub fn all_passed(&self) -> bool {
        self.invariance_feasible && self.containment && self.hinf_ok && self.simulation_ok()
    }

    /// `first_escape_time` is present iff `max_level > 1 + level_tol`.
    pub fn is_consistent(&self) -> bool {
        self.first_escape_time.is_some() == !self.simulation_ok()
            && self.invariance_feasible == self.invariance.certified
            && self.hinf_ok == (self.hinf_value <= self.gamma + HINF_TOL)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifySettings {
    pub alpha_grid: Vec<f64>,
    pub sim: SimSettings,
    pub solver: SolverOptions,
    /// Greedy input at `g = 0`; `None` keeps `u_bar`.
    #[serde(default)]
    pub tie_break: Option<Vec<f64>>,
}

impl Default for VerifySettings {
    fn default() -> Self {
        Self {
            alpha_grid: DEFAULT_ALPHA_GRID.to_vec(),
            sim: SimSettings::default(),
            solver: SolverOptions::default(),
            tie_break: None,
        }
    }
}

/// Smallest (largest-trace) invariant ellipsoid of `ext` over the grid.
///
/// An uncontrollable `(A, B)` leaves `trace(Q)` unbounded along the
/// unreachable directions, so that case is refused up front.
pub fn invariant_q_on_grid(
    ext: &StateSpaceModel,
    sets: &SafetySets,
    alphas: &[f64],
    opts: &SolverOptions,
) -> Result<(f64, DMatrix<f64>), VerifyError> {
    let rank = ext.controllability_rank();
    if rank < ext.n_states() {
        return Err(VerifyError::NoInvariantSet(format!(
            "(A, B) has controllability rank {rank} < {}, so trace(Q) is unbounded; supply Q",
            ext.n_states()
        )));
    }
    let sols = alphas
        .par_iter()
        .map(|&alpha| -> Result<Option<(f64, f64, DMatrix<f64>)>, VerifyError> {
            let p = assemble_invariance(ext.a(), ext.b(), &sets.input, sets.normal.as_ref(), alpha)?;
            let r = lmi::solve(&p, opts)?;
            Ok(r.status.is_solved().then(|| {
                let q = r.value("Q").cloned().expect("Q solved");
                (r.objective, alpha, (&q + q.transpose()) * 0.5)
            }))
        })
        .collect::<Result<Vec<_>, _>>()?;
    sols.into_iter()
        .flatten()
        .fold(None, |best: Option<(f64, f64, DMatrix<f64>)>, s| match best {
            Some(b) if b.0 >= s.0 => Some(b),
            _ => Some(s),
        })
        .map(|(_, a, q)| (a, q))
        .ok_or_else(|| VerifyError::NoInvariantSet("every grid point is infeasible".into()))
}

/// Invariance, containment, distortion and greedy-simulation checks in one
/// report. Without `q`, the invariant set comes from the analysis problem
/// on the extended system.
pub fn full_verify(
    plant: &StateSpaceModel,
    filter: &FilterRealization,
    q: Option<&DMatrix<f64>>,
    sets: &SafetySets,
    gamma: f64,
    settings: &VerifySettings,
) -> Result<VerificationReport, VerifyError> {
    let ext = build_extended_system(plant, filter)?;
    let np = plant.n_states();
    if sets.safe.dim() != np {
        return Err(VerifyError::InvalidArgument(format!(
            "safe set has dimension {}, plant has {np} states",
            sets.safe.dim()
        )));
    }
    let alphas = alpha_grid_for(ext.a(), &settings.alpha_grid);
    let (q, q_source) = match q {
        Some(q) => (q.clone(), "supplied".to_string()),
        None => {
            let (a, q) = invariant_q_on_grid(&ext, sets, &alphas, &settings.solver)?;
            (q, format!("analysis at alpha = {a}"))
        }
    };
    check_q(&ext, &q)?;
    let invariance = check_invariance(&ext, &q, sets, &alphas, &settings.solver)?;

    let full = Ellipsoid::centered(q.clone())?;
    let shadow = if np == ext.n_states() { full } else { full.project(np)? };
    let margin = containment_margin(&shadow, &sets.safe)?;

    let hinf_value = hinf_norm(&ext, HINF_BISECTION_TOL)?;

    let mut policy = greedy_attack_policy(&ext, &q, &sets.input)?;
    if let Some(u) = &settings.tie_break {
        policy = policy.with_tie_break(DVector::from_column_slice(u))?;
    }
    let mc = monte_carlo_invariance(
        &ext,
        &q,
        &policy,
        &DVector::zeros(ext.n_states()),
        &settings.sim,
        &Monitors::from_sets(sets),
    )?;

    Ok(VerificationReport {
        invariance_feasible: invariance.certified,
        invariance,
        containment: margin >= -DEFAULT_CONTAINMENT_TOL,
        containment_margin: margin,
        hinf_value,
        gamma,
        hinf_ok: hinf_value <= gamma + HINF_TOL,
        max_level: mc.max_level,
        first_escape_time: mc.first_escape_time,
        safe_exit_time: mc.safe_exit_time,
        normal_exit_time: mc.normal_exit_time,
        level_tol: LEVEL_TOL,
        q_source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::demo;
    use crate::synthesis::{analyze_reachable_set, synthesize_filter, SynthesisConfig};
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::Rng;

    fn analysis_q() -> DMatrix<f64> {
        analyze_reachable_set(&demo::plant(), &demo::sets(), 0.5, true, &SolverOptions::default())
            .unwrap()
            .q
            .unwrap()
    }

    fn kicked(p: AttackPolicy) -> AttackPolicy {
        let kick = axis_kick(&demo::sets().input).unwrap();
        assert_eq!(kick, DVector::from_vec(vec![2.0, 0.0]));
        p.with_tie_break(kick).unwrap()
    }

    fn grid(a: &DMatrix<f64>) -> Vec<f64> {
        alpha_grid_for(a, &DEFAULT_ALPHA_GRID)
    }

    #[test]
    fn grid_respects_decay_bound() {
        assert_eq!(grid(&demo::plant_a()), DEFAULT_ALPHA_GRID.to_vec());
        assert_eq!(grid(&(demo::plant_a() * 0.5)), DEFAULT_ALPHA_GRID[..6].to_vec());
    }

    #[test]
    fn analysis_q_certifies_itself() {
        let plant = demo::plant();
        let c = check_invariance(&plant, &analysis_q(), &demo::sets(), &[0.5], &SolverOptions::default()).unwrap();
        assert!(c.certified, "{:?}", c.residuals);
    }

    #[test]
    fn inflated_set_stays_invariant() {
        let plant = demo::plant();
        let q = analysis_q() * 1e-3;
        let c = check_invariance(&plant, &q, &demo::sets(), &grid(plant.a()), &SolverOptions::default()).unwrap();
        assert!(c.certified, "{:?}", c.residuals);
        let p = kicked(greedy_attack_policy(&plant, &q, &demo::sets().input).unwrap());
        let sim = SimSettings { t_end: 1.0, ..SimSettings::default() };
        let mc = monte_carlo_invariance(&plant, &q, &p, &DVector::zeros(3), &sim, &Monitors::default()).unwrap();
        assert!(mc.max_level > 0.0 && mc.max_level <= 1.0 + LEVEL_TOL);
    }

    #[test]
    fn shrunken_set_is_not_invariant() {
        let plant = demo::plant();
        let q = analysis_q() * 1e3;
        let c = check_invariance(&plant, &q, &demo::sets(), &grid(plant.a()), &SolverOptions::default()).unwrap();
        assert!(!c.certified);
        assert_eq!(c.residuals.len(), 9);
        assert!(c.residuals.iter().all(|r| r.margin.is_none_or(|m| m < -CERTIFICATE_TOL)));
        let p = kicked(greedy_attack_policy(&plant, &q, &demo::sets().input).unwrap());
        let sim = SimSettings { t_end: 1.0, ..SimSettings::default() };
        let mc = monte_carlo_invariance(&plant, &q, &p, &DVector::zeros(3), &sim, &Monitors::default()).unwrap();
        assert!(mc.first_escape_time.is_some());
    }

    #[test]
    fn greedy_at_origin_is_center() {
        let plant = demo::plant();
        let input = Ellipsoid::pd(demo::input_shape(), DVector::from_vec(vec![0.3, -0.1])).unwrap();
        let p = greedy_attack_policy(&plant, &DMatrix::identity(3, 3), &input).unwrap();
        assert_eq!(p.greedy_input(&DVector::zeros(3)).unwrap(), input.center().clone());
        let kick = DVector::from_vec(vec![2.3, -0.1]);
        let p = p.with_tie_break(kick.clone()).unwrap();
        assert_eq!(p.greedy_input(&DVector::zeros(3)).unwrap(), kick);
        assert!(p.with_tie_break(DVector::from_vec(vec![5.0, 0.0])).is_err());
    }

    #[test]
    fn greedy_scalar_closed_form() {
        let sys = StateSpaceModel::with_state_output(DMatrix::from_element(1, 1, -1.0), DMatrix::from_element(1, 1, 1.0)).unwrap();
        let r = 4.0;
        let input = Ellipsoid::centered(DMatrix::from_element(1, 1, r)).unwrap();
        let p = greedy_attack_policy(&sys, &DMatrix::from_element(1, 1, 2.5), &input).unwrap();
        for x in [-3.0, -1e-3, 0.7, 12.0] {
            let u = p.greedy_input(&DVector::from_element(1, x)).unwrap()[0];
            assert_relative_eq!(u, f64::signum(x) / r.sqrt(), epsilon = 1e-15);
        }
    }

    #[test]
    fn zero_constant_input_stays_at_origin() {
        let plant = demo::plant();
        let p = AttackPolicy::constant(&demo::sets().input, DVector::zeros(2)).unwrap();
        let sim = SimSettings { t_end: 0.5, ..SimSettings::default() };
        let mc = monte_carlo_invariance(&plant, &analysis_q(), &p, &DVector::zeros(3), &sim, &Monitors::default()).unwrap();
        assert_eq!(mc.max_level, 0.0);
        assert!(mc.first_escape_time.is_none());
    }

    #[test]
    fn constant_outside_input_set_is_rejected() {
        assert!(AttackPolicy::constant(&demo::sets().input, DVector::from_vec(vec![2.1, 0.0])).is_err());
    }

    #[test]
    fn boundary_random_stays_on_boundary_and_is_seeded() {
        let input = Ellipsoid::pd(demo::input_shape(), DVector::from_vec(vec![1.0, 0.5])).unwrap();
        let p = AttackPolicy::boundary_random(&input, 0.01, 7).unwrap();
        let z = DVector::zeros(3);
        for k in 0..200 {
            let t = k as f64 * 0.003;
            let u = p.input(2, t, &z);
            assert!((input.level(&u).unwrap() - 1.0).abs() <= 1e-12);
            assert_eq!(u, p.input(2, t, &z));
        }
        assert_eq!(p.input(0, 0.001, &z), p.input(0, 0.009, &z));
        assert_ne!(p.input(0, 0.001, &z), p.input(1, 0.001, &z));
    }

    #[test]
    fn random_runs_stay_below_greedy() {
        let plant = demo::plant();
        let q = analysis_q();
        let sets = demo::sets();
        let sim = SimSettings { t_end: 0.5, dt: 1e-3, n_runs: 4, seed: 3 };
        let rnd = AttackPolicy::boundary_random(&sets.input, 0.05, sim.seed).unwrap();
        let mc = monte_carlo_invariance(&plant, &q, &rnd, &DVector::zeros(3), &sim, &Monitors::default()).unwrap();
        assert_eq!(mc.runs.len(), 4);
        assert!(mc.max_level <= 1.0 + LEVEL_TOL);
    }

    #[test]
    fn unfiltered_greedy_trace_has_expected_columns() {
        let plant = demo::plant();
        let q = analysis_q();
        let sets = demo::sets();
        let p = greedy_attack_policy(&plant, &q, &sets.input)
            .unwrap()
            .with_tie_break(DVector::from_vec(vec![2.0, 0.0]))
            .unwrap();
        let traj = simulate_attack(&plant, &p, &DVector::zeros(3), 0, 0.01, 1e-3).unwrap();
        let csv = trace_csv(&traj, &q, &Monitors::from_sets(&sets));
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "t,zeta_1,zeta_2,zeta_3,u_1,u_2,V,in_safe,in_normal");
        assert_eq!(lines.count(), 11);
        let inputs_ok = traj.inputs.iter().all(|u| (sets.input.level(u).unwrap() - 1.0).abs() < 1e-12);
        assert!(inputs_ok);
    }

    #[test]
    fn passthrough_fails_only_containment() {
        let (plant, sets) = (demo::plant(), demo::sets());
        let settings = VerifySettings {
            sim: SimSettings { t_end: 1.0, ..SimSettings::default() },
            ..VerifySettings::default()
        };
        let q = analysis_q();
        let r = full_verify(&plant, &FilterRealization::passthrough(2), Some(&q), &sets, 0.61, &settings).unwrap();
        assert!(r.is_consistent());
        assert!(!r.containment);
        assert!(r.invariance_feasible && r.hinf_ok && r.simulation_ok(), "{r:?}");
        assert_eq!(r.hinf_value, 0.0);
    }

    #[test]
    fn synthesized_outcome_passes_every_check() {
        let (plant, sets) = (demo::plant(), demo::sets());
        let (gf, gc) = demo::selection();
        let o = synthesize_filter(&plant, &sets, &gf, &gc, &SynthesisConfig::new(demo::reference_scalars(), true)).unwrap();
        let r = full_verify(&plant, &o.filter, Some(&o.q), &sets, 0.61, &VerifySettings::default()).unwrap();
        assert!(r.is_consistent());
        assert!(r.all_passed(), "{r:?}");
        let r0 = full_verify(&plant, &o.filter, Some(&o.q), &sets, 0.0, &VerifySettings {
            sim: SimSettings { t_end: 0.1, ..SimSettings::default() },
            ..VerifySettings::default()
        })
        .unwrap();
        assert!(!r0.hinf_ok);
        assert!(r0.is_consistent());
    }

    fn scalar_case() -> (StateSpaceModel, DMatrix<f64>, Ellipsoid) {
        let sys = StateSpaceModel::with_state_output(
            DMatrix::from_row_slice(2, 2, &[-1.0, 0.5, 0.0, -2.0]),
            DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
        )
        .unwrap();
        let q = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]);
        (sys, q, Ellipsoid::centered(DMatrix::from_element(1, 1, 1.0)).unwrap())
    }

    #[test]
    fn escape_time_is_monotone_in_horizon() {
        let (sys, q, input) = scalar_case();
        let q = q * 50.0;
        let p = greedy_attack_policy(&sys, &q, &input).unwrap();
        let mut last = 0.0;
        for t_end in [0.1, 0.3, 1.0, 2.0] {
            let sim = SimSettings { t_end, dt: 1e-3, ..SimSettings::default() };
            let mc = monte_carlo_invariance(&sys, &q, &p, &DVector::zeros(2), &sim, &Monitors::default()).unwrap();
            assert!(mc.max_level >= last);
            last = mc.max_level;
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn greedy_dominates_random_inputs(x in prop::collection::vec(-5.0f64..5.0, 3), seed in any::<u64>()) {
            let plant = demo::plant();
            let q = DMatrix::from_row_slice(3, 3, &[2.0, 0.1, 0.0, 0.1, 1.0, 0.2, 0.0, 0.2, 3.0]);
            let input = Ellipsoid::pd(demo::input_shape(), DVector::from_vec(vec![0.2, -0.4])).unwrap();
            let p = greedy_attack_policy(&plant, &q, &input).unwrap();
            let z = DVector::from_vec(x);
            let vdot = |u: &DVector<f64>| 2.0 * z.dot(&(&q * (plant.a() * &z + plant.b() * u)));
            let g = vdot(&p.greedy_input(&z).unwrap());
            let rnd = AttackPolicy::boundary_random(&input, 1.0, seed).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for k in 0..100u64 {
                let u = input.center() + (rnd.input(0, k as f64, &z) - input.center()) * rng.gen_range(0.0..=1.0);
                prop_assert!(g >= vdot(&u) - 1e-9 * g.abs().max(1.0));
            }
        }

        #[test]
        fn greedy_inputs_lie_on_boundary(x in prop::collection::vec(-5.0f64..5.0, 2)) {
            let (sys, q, input) = scalar_case();
            let p = greedy_attack_policy(&sys, &q, &input).unwrap();
            let z = DVector::from_vec(x);
            prop_assume!(z.norm() > 1e-6);
            let u = p.greedy_input(&z).unwrap();
            prop_assert!((input.level(&u).unwrap() - 1.0).abs() <= 1e-12);
        }
    }
}
