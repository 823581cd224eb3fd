//! `filtersafe` command line: analysis, synthesis, verification,
//! simulation, Bode data and scalar sweeps driven by a JSON run config.
//!
//! Exit codes: 0 success with every check passing, 1 usage or config
//! error, 2 infeasible problem or failed check (outputs still written),
//! 3 numerical failure.

pub mod config;
pub mod output;

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use filtersafe::filter::FilterRealization;
use filtersafe::lmi::{LmiError, SolveStatus};
use filtersafe::lti::{build_extended_system, frequency_response, log_space, LtiError, StateSpaceModel};
use filtersafe::synthesis::{
    analyze_reachable_set, grid_search, synthesize_filter, ScalarGrid, SynthesisError, SynthesisOutcome,
};
use filtersafe::verify::{
    axis_kick, full_verify, greedy_attack_policy, invariant_q_on_grid, alpha_grid_for, simulate_attack,
    summarize_run, trace_csv, AttackPolicy, Monitors, VerifyError, VerifySettings, DEFAULT_ALPHA_GRID,
    HINF_TOL, LEVEL_TOL,
};

use config::{load_config, read_json, Problem};
use output::{boundary_header, boundary_rows, fmt, matrix_csv, read_matrix_csv, OutDir};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_CHECK_FAILED: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

pub const BODE_POINTS: usize = 400;
pub const BODE_RANGE: (f64, f64) = (1e-1, 1e4);

#[derive(Debug, Clone, PartialEq)]
pub enum CliError {
    Config(String),
    Io(String),
    Infeasible(String),
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io(_) => EXIT_USAGE,
            CliError::Infeasible(_) => EXIT_CHECK_FAILED,
            CliError::Numerical(_) => EXIT_NUMERICAL,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
            CliError::Infeasible(m) => write!(f, "infeasible: {m}"),
            CliError::Numerical(m) => write!(f, "numerical failure: {m}"),
        }
    }
}

impl From<LtiError> for CliError {
    fn from(e: LtiError) -> Self {
        match e {
            LtiError::SingularResolvent { .. } | LtiError::Divergence { .. } => CliError::Numerical(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<LmiError> for CliError {
    fn from(e: LmiError) -> Self {
        match e {
            LmiError::FixedInfeasible { .. } => CliError::Infeasible(e.to_string()),
            LmiError::IllConditioned { .. } | LmiError::Backend(_) => CliError::Numerical(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<SynthesisError> for CliError {
    fn from(e: SynthesisError) -> Self {
        match e {
            SynthesisError::Lti(e) => e.into(),
            SynthesisError::Lmi(e) => e.into(),
            SynthesisError::Ellipsoid(e) => CliError::Numerical(e.to_string()),
            SynthesisError::Config(m) => CliError::Config(m),
            SynthesisError::Infeasible(m) => CliError::Infeasible(m),
            e @ (SynthesisError::NumericalFailure(_) | SynthesisError::Extraction { .. }) => {
                CliError::Numerical(e.to_string())
            }
        }
    }
}

impl From<VerifyError> for CliError {
    fn from(e: VerifyError) -> Self {
        match e {
            VerifyError::Lti(e) => e.into(),
            VerifyError::Lmi(e) => e.into(),
            VerifyError::Ellipsoid(e) => CliError::Numerical(e.to_string()),
            VerifyError::InvalidArgument(m) => CliError::Config(m),
            VerifyError::NoInvariantSet(_) => CliError::Infeasible(e.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "filtersafe", version, about = "Input-filter synthesis against actuator injection attacks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PolicyArg {
    Greedy,
    BoundaryRandom,
    Constant,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Invariant ellipsoid of the unfiltered plant and its containment in the safe set.
    Analyze {
        config: PathBuf,
        #[arg(short, long, default_value = ".")]
        out: PathBuf,
        /// Decay rate; defaults to `scalars.alpha`.
        #[arg(long)]
        alpha: Option<f64>,
    },
    /// Synthesizes the filter at the configured scalars.
    Synthesize {
        config: PathBuf,
        #[arg(short, long, default_value = ".")]
        out: PathBuf,
        /// Pins the multiplier beta.
        #[arg(long)]
        beta: Option<f64>,
    },
    /// Checks a filter: invariance, containment, distortion bound, greedy attack.
    Verify {
        config: PathBuf,
        filter: PathBuf,
        #[arg(short, long, default_value = ".")]
        out: PathBuf,
        /// Invariant-set shape (CSV); computed on the decay-rate grid if absent.
        #[arg(long)]
        q: Option<PathBuf>,
        /// Greedy attack leaves the origin along the first input axis.
        #[arg(long)]
        kick: bool,
    },
    /// Attack simulation with per-run trace CSVs.
    Simulate {
        config: PathBuf,
        filter: Option<PathBuf>,
        #[arg(short, long, default_value = ".")]
        out: PathBuf,
        #[arg(long)]
        q: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "greedy")]
        policy: PolicyArg,
        /// Direction hold time of the boundary-random policy, s.
        #[arg(long, default_value_t = 0.05)]
        dwell: f64,
        /// Input of the constant policy; defaults to `u_bar`.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        input: Option<Vec<f64>>,
        #[arg(long)]
        kick: bool,
    },
    /// Bode magnitude and phase of the plant, with and without the filter.
    Bode {
        config: PathBuf,
        filter: Option<PathBuf>,
        #[arg(short, long, default_value = ".")]
        out: PathBuf,
    },
    /// Synthesis over a grid of scalars.
    Sweep {
        config: PathBuf,
        grid: PathBuf,
        #[arg(short, long, default_value = ".")]
        out: PathBuf,
        #[arg(long)]
        beta: Option<f64>,
    },
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("filtersafe: {e}");
            e.exit_code()
        }
    }
}

pub fn dispatch(cmd: Command) -> Result<i32, CliError> {
    match cmd {
        Command::Analyze { config, out, alpha } => cmd_analyze(&load_config(&config)?, &out, alpha),
        Command::Synthesize { config, out, beta } => cmd_synthesize(&load_config(&config)?, &out, beta),
        Command::Verify {
            config,
            filter,
            out,
            q,
            kick,
        } => cmd_verify(&load_config(&config)?, &filter, &out, q.as_deref(), kick),
        Command::Simulate {
            config,
            filter,
            out,
            q,
            policy,
            dwell,
            input,
            kick,
        } => {
            let opts = SimulateOptions {
                policy,
                dwell,
                input,
                kick,
            };
            cmd_simulate(&load_config(&config)?, filter.as_deref(), &out, q.as_deref(), &opts)
        }
        Command::Bode { config, filter, out } => cmd_bode(&load_config(&config)?, filter.as_deref(), &out),
        Command::Sweep { config, grid, out, beta } => cmd_sweep(&load_config(&config)?, &grid, &out, beta),
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

fn opt(v: Option<f64>) -> String {
    v.map_or("none".into(), fmt)
}

pub fn cmd_analyze(p: &Problem, out: &Path, alpha: Option<f64>) -> Result<i32, CliError> {
    let alpha = alpha.unwrap_or(p.scalars.alpha);
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(CliError::Config(format!("alpha: must be non-negative, got {alpha}")));
    }
    let a = analyze_reachable_set(&p.plant, &p.sets, alpha, p.stealthy(), &p.solver)?;
    let dir = OutDir::create(out)?;
    let mut txt = String::new();
    let _ = writeln!(txt, "status: {}", status_name(a.status));
    let _ = writeln!(txt, "alpha: {}", fmt(alpha));
    let _ = writeln!(txt, "stealthy: {}", a.stealthy);
    let _ = writeln!(txt, "contained: {}", a.safe.map_or("unknown".into(), |b| b.to_string()));
    let _ = writeln!(txt, "margin: {}", opt(a.containment_margin));
    let _ = writeln!(txt, "trace_Q: {}", fmt(a.objective));
    let _ = writeln!(txt, "beta: {}", opt(a.beta));
    let _ = writeln!(txt, "lambda: {}", opt(a.lambda));
    let _ = writeln!(txt, "alpha_range: ({}, {})", fmt(a.alpha_range.0), fmt(a.alpha_range.1));
    for n in &a.notes {
        let _ = writeln!(txt, "note: {n}");
    }
    dir.write("containment.txt", txt.as_bytes())?;
    match a.status {
        SolveStatus::Infeasible => return Ok(EXIT_CHECK_FAILED),
        SolveStatus::NumericalFailure => return Ok(EXIT_NUMERICAL),
        _ => {}
    }
    let q = a.q.as_ref().expect("solved analysis has Q");
    dir.write("invariant_Q.csv", &matrix_csv(q)?)?;
    let proj = a.projection.as_ref().expect("solved analysis has a projection");
    let mut sets = vec![("reachable", proj), ("safe", &p.sets.safe)];
    if let Some(n) = &p.sets.normal {
        sets.push(("normal", n));
    }
    dir.write_csv("projection_boundary.csv", &boundary_header(), &boundary_rows(&sets)?)?;
    Ok(if a.safe == Some(true) { EXIT_OK } else { EXIT_CHECK_FAILED })
}

#[derive(Serialize)]
struct FailureReport<'a> {
    status: &'a str,
    detail: String,
}

#[derive(Serialize)]
struct SynthesisReport<'a> {
    status: &'a str,
    checks_passed: bool,
    outcome: &'a SynthesisOutcome,
}

fn synthesis_checks(o: &SynthesisOutcome) -> bool {
    let d = &o.diagnostics;
    d.contained && d.hinf <= o.scalars.gamma + HINF_TOL && d.filter_hurwitz && d.extended_hurwitz
}

fn write_failure(dir: &OutDir, e: &CliError) -> Result<(), CliError> {
    let status = match e {
        CliError::Infeasible(_) => "infeasible",
        CliError::Numerical(_) => "numerical-failure",
        _ => "error",
    };
    dir.write_json(
        "report.json",
        &FailureReport {
            status,
            detail: e.to_string(),
        },
    )
}

fn write_outcome(dir: &OutDir, o: &SynthesisOutcome) -> Result<bool, CliError> {
    dir.write_json(
        "filter.json",
        &FilterFile {
            filter: o.filter.clone(),
            invariant_q: Some(o.q.clone()),
        },
    )?;
    dir.write("Q.csv", &matrix_csv(&o.q)?)?;
    let ok = synthesis_checks(o);
    dir.write_json(
        "report.json",
        &SynthesisReport {
            status: status_name(o.diagnostics.status),
            checks_passed: ok,
            outcome: o,
        },
    )?;
    Ok(ok)
}

pub fn cmd_synthesize(p: &Problem, out: &Path, beta: Option<f64>) -> Result<i32, CliError> {
    let cfg = p.synthesis_config(beta);
    cfg.validate().map_err(CliError::from)?;
    let dir = OutDir::create(out)?;
    match synthesize_filter(&p.plant, &p.sets, &p.gamma_f, &p.gamma_c, &cfg) {
        Ok(o) => Ok(if write_outcome(&dir, &o)? { EXIT_OK } else { EXIT_CHECK_FAILED }),
        Err(e) => {
            let e = CliError::from(e);
            if matches!(e, CliError::Infeasible(_) | CliError::Numerical(_)) {
                write_failure(&dir, &e)?;
            }
            Err(e)
        }
    }
}

/// `filter.json`: the realization plus, when known, the certified
/// invariant-set shape of the filtered plant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterFile {
    #[serde(flatten)]
    pub filter: FilterRealization,
    #[serde(
        rename = "invariant_Q",
        default,
        skip_serializing_if = "Option::is_none",
        with = "opt_matrix"
    )]
    pub invariant_q: Option<DMatrix<f64>>,
}

mod opt_matrix {
    use nalgebra::DMatrix;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(m: &Option<DMatrix<f64>>, s: S) -> Result<S::Ok, S::Error> {
        match m {
            Some(m) => filtersafe::serde_mat::matrix::serialize(m, s),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<DMatrix<f64>>, D::Error> {
        let rows = Option::<Vec<Vec<f64>>>::deserialize(d)?;
        rows.map(|r| filtersafe::serde_mat::from_rows(&r).map_err(serde::de::Error::custom))
            .transpose()
    }
}

fn load_filter_file(p: &Problem, path: &Path) -> Result<FilterFile, CliError> {
    let f: FilterFile = read_json(path)?;
    if f.filter.n_channels() != p.plant.n_inputs() {
        return Err(CliError::Config(format!(
            "{}: filter has {} channels, plant has {} inputs",
            path.display(),
            f.filter.n_channels(),
            p.plant.n_inputs()
        )));
    }
    Ok(f)
}

fn load_filter(p: &Problem, path: &Path) -> Result<FilterRealization, CliError> {
    Ok(load_filter_file(p, path)?.filter)
}

fn verify_settings(p: &Problem) -> VerifySettings {
    VerifySettings {
        alpha_grid: DEFAULT_ALPHA_GRID.to_vec(),
        sim: p.sim,
        solver: p.solver,
        tie_break: None,
    }
}

pub fn cmd_verify(p: &Problem, filter: &Path, out: &Path, q: Option<&Path>, kick: bool) -> Result<i32, CliError> {
    let file = load_filter_file(p, filter)?;
    let q = match q {
        Some(path) => Some(read_matrix_csv(path)?),
        None => file.invariant_q,
    };
    let f = file.filter;
    let mut settings = verify_settings(p);
    if kick {
        settings.tie_break = Some(axis_kick(&p.sets.input)?.as_slice().to_vec());
    }
    let dir = OutDir::create(out)?;
    match full_verify(&p.plant, &f, q.as_ref(), &p.sets, p.scalars.gamma, &settings) {
        Ok(r) => {
            dir.write_json("report.json", &r)?;
            Ok(if r.all_passed() { EXIT_OK } else { EXIT_CHECK_FAILED })
        }
        Err(e) => {
            let e = CliError::from(e);
            if matches!(e, CliError::Infeasible(_) | CliError::Numerical(_)) {
                write_failure(&dir, &e)?;
            }
            Err(e)
        }
    }
}

pub struct SimulateOptions {
    pub policy: PolicyArg,
    pub dwell: f64,
    pub input: Option<Vec<f64>>,
    pub kick: bool,
}

#[derive(Serialize)]
struct SimulationReport {
    policy: String,
    q_source: String,
    level_tol: f64,
    max_level: f64,
    first_escape_time: Option<f64>,
    safe_exit_time: Option<f64>,
    normal_exit_time: Option<f64>,
    runs: Vec<filtersafe::verify::RunSummary>,
}

fn extended(p: &Problem, filter: Option<&Path>) -> Result<StateSpaceModel, CliError> {
    let f = match filter {
        Some(path) => load_filter(p, path)?,
        None => FilterRealization::passthrough(p.plant.n_inputs()),
    };
    Ok(build_extended_system(&p.plant, &f)?)
}

pub fn cmd_simulate(
    p: &Problem,
    filter: Option<&Path>,
    out: &Path,
    q: Option<&Path>,
    opts: &SimulateOptions,
) -> Result<i32, CliError> {
    let ext = extended(p, filter)?;
    let stored = match filter {
        Some(path) => load_filter_file(p, path)?.invariant_q,
        None => None,
    };
    let (q, q_source) = match (q, stored) {
        (Some(path), _) => (read_matrix_csv(path)?, path.display().to_string()),
        (None, Some(q)) => (q, "filter file".to_string()),
        (None, None) => {
            let alphas = alpha_grid_for(ext.a(), &DEFAULT_ALPHA_GRID);
            let (a, q) = invariant_q_on_grid(&ext, &p.sets, &alphas, &p.solver)?;
            (q, format!("analysis at alpha = {a}"))
        }
    };
    let input = &p.sets.input;
    let policy = match opts.policy {
        PolicyArg::Greedy => {
            let g = greedy_attack_policy(&ext, &q, input)?;
            if opts.kick {
                g.with_tie_break(axis_kick(input)?)?
            } else {
                g
            }
        }
        PolicyArg::BoundaryRandom => AttackPolicy::boundary_random(input, opts.dwell, p.sim.seed)?,
        PolicyArg::Constant => {
            let u = match &opts.input {
                Some(v) => DVector::from_column_slice(v),
                None => input.center().clone(),
            };
            AttackPolicy::constant(input, u)?
        }
    };
    if q.shape() != (ext.n_states(), ext.n_states()) {
        return Err(CliError::Config(format!("Q must be {0}x{0}", ext.n_states())));
    }
    let runs = if policy.is_deterministic() { 1 } else { p.sim.n_runs };
    let monitors = Monitors::from_sets(&p.sets);
    let dir = OutDir::create(out)?;
    let z0 = DVector::zeros(ext.n_states());
    let mut summaries = Vec::with_capacity(runs);
    for run in 0..runs as u64 {
        let traj = simulate_attack(&ext, &policy, &z0, run, p.sim.t_end, p.sim.dt)?;
        dir.write(&format!("trace_run{run}.csv"), trace_csv(&traj, &q, &monitors).as_bytes())?;
        summaries.push(summarize_run(run, &traj, &q, &monitors));
    }
    let first = |f: fn(&filtersafe::verify::RunSummary) -> Option<f64>| {
        summaries.iter().filter_map(f).fold(None, |acc: Option<f64>, t| Some(acc.map_or(t, |a| a.min(t))))
    };
    let report = SimulationReport {
        policy: opts
            .policy
            .to_possible_value()
            .map_or_else(String::new, |v| v.get_name().to_string()),
        q_source,
        level_tol: LEVEL_TOL,
        max_level: summaries.iter().map(|s| s.max_level).fold(0.0, f64::max),
        first_escape_time: first(|s| s.first_escape_time),
        safe_exit_time: first(|s| s.safe_exit_time),
        normal_exit_time: first(|s| s.normal_exit_time),
        runs: summaries,
    };
    dir.write_json("simulation.json", &report)?;
    Ok(if report.first_escape_time.is_none() && report.safe_exit_time.is_none() {
        EXIT_OK
    } else {
        EXIT_CHECK_FAILED
    })
}

/// Unwraps a phase sequence in radians so consecutive samples differ by
/// less than `pi`.
pub fn unwrap_phase(phase: &[f64]) -> Vec<f64> {
    let tau = 2.0 * std::f64::consts::PI;
    let mut out: Vec<f64> = Vec::with_capacity(phase.len());
    let mut offset = 0.0_f64;
    for (k, &ph) in phase.iter().enumerate() {
        if k > 0 {
            let d = ph + offset - out[k - 1];
            offset -= tau * (d / tau).round();
        }
        out.push(ph + offset);
    }
    out
}

/// Bode table with columns `omega, ch_i_j_mag_db, ch_i_j_phase_deg` per
/// output `i` and input `j`.
pub fn bode_table(sys: &StateSpaceModel, omegas: &[f64]) -> Result<(Vec<String>, Vec<Vec<String>>), CliError> {
    let resp = frequency_response(sys, omegas)?;
    let (ny, nu) = (sys.n_outputs(), sys.n_inputs());
    let mut header = vec!["omega".to_string()];
    let mut mags = Vec::new();
    let mut phases = Vec::new();
    for i in 0..ny {
        for j in 0..nu {
            header.push(format!("ch_{}_{}_mag_db", i + 1, j + 1));
            header.push(format!("ch_{}_{}_phase_deg", i + 1, j + 1));
            let raw: Vec<f64> = resp.iter().map(|g| g[(i, j)].arg()).collect();
            phases.push(unwrap_phase(&raw).into_iter().map(f64::to_degrees).collect::<Vec<_>>());
            mags.push(resp.iter().map(|g| 20.0 * g[(i, j)].norm().log10()).collect::<Vec<_>>());
        }
    }
    let rows = omegas
        .iter()
        .enumerate()
        .map(|(k, w)| {
            let mut r = vec![fmt(*w)];
            for c in 0..mags.len() {
                r.push(fmt(mags[c][k]));
                r.push(fmt(phases[c][k]));
            }
            r
        })
        .collect();
    Ok((header, rows))
}

/// Filter alone, from `u_c` to `u_p = G_f u_f + G_c u_c`.
pub fn filter_system(f: &FilterRealization) -> Result<StateSpaceModel, CliError> {
    Ok(StateSpaceModel::new(
        f.a_f().clone(),
        f.b_f().clone(),
        f.gamma_f() * f.c_f(),
        f.gamma_f() * f.d_f() + f.gamma_c(),
    )?)
}

pub fn cmd_bode(p: &Problem, filter: Option<&Path>, out: &Path) -> Result<i32, CliError> {
    let omegas = log_space(BODE_RANGE.0, BODE_RANGE.1, BODE_POINTS);
    let dir = OutDir::create(out)?;
    let sys = match filter {
        None => p.plant.clone(),
        Some(path) => {
            let f = load_filter(p, path)?;
            let (h, rows) = bode_table(&filter_system(&f)?, &omegas)?;
            dir.write_csv("bode_filter.csv", &h, &rows)?;
            let ext = build_extended_system(&p.plant, &f)?;
            let (np, n) = (p.plant.n_states(), ext.n_states());
            let mut c = DMatrix::zeros(np, n);
            c.view_mut((0, 0), (np, np)).fill_with_identity();
            ext.with_output(c, DMatrix::zeros(np, p.plant.n_inputs()))?
        }
    };
    let (h, rows) = bode_table(&sys, &omegas)?;
    dir.write_csv("bode.csv", &h, &rows)?;
    Ok(EXIT_OK)
}

pub fn cmd_sweep(p: &Problem, grid: &Path, out: &Path, beta: Option<f64>) -> Result<i32, CliError> {
    let g: ScalarGrid = read_json(grid)?;
    let mut cfg = p.synthesis_config(beta);
    cfg.grid = Some(g.clone());
    cfg.validate().map_err(CliError::from)?;
    let r = grid_search(&p.plant, &p.sets, &p.gamma_f, &p.gamma_c, &g, &cfg)?;
    let dir = OutDir::create(out)?;
    dir.write("sweep_table.csv", r.table_csv().as_bytes())?;
    match &r.best {
        Some(o) => Ok(if write_outcome(&dir, o)? { EXIT_OK } else { EXIT_CHECK_FAILED }),
        None => {
            write_failure(&dir, &CliError::Infeasible("no feasible grid point".into()))?;
            Ok(EXIT_CHECK_FAILED)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unwrap_removes_jumps() {
        let pi = std::f64::consts::PI;
        let raw = [3.0, -3.0, -2.5, 2.9, 0.0];
        let u = unwrap_phase(&raw);
        for w in u.windows(2) {
            assert!((w[1] - w[0]).abs() < pi);
        }
        assert!((u[1] - (2.0 * pi - 3.0)).abs() < 1e-12);
    }

    #[test]
    fn help_exits_zero_and_bad_usage_one() {
        assert_eq!(run(["filtersafe", "--help"]), EXIT_OK);
        assert_eq!(run(["filtersafe", "frobnicate"]), EXIT_USAGE);
        assert_eq!(run(["filtersafe", "analyze"]), EXIT_USAGE);
    }

    #[test]
    fn missing_config_is_usage_error() {
        assert_eq!(run(["filtersafe", "analyze", "/nonexistent/cfg.json"]), EXIT_USAGE);
    }
}
