use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use filtersafe_cli::config::{load_config, RunConfig};
use filtersafe_cli::FilterFile;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_filtersafe"))
}

fn reference_config() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("examples/reference_example.json")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_config(dir: &Path, edit: impl FnOnce(&mut serde_json::Value)) -> PathBuf {
    let mut v: serde_json::Value = serde_json::from_str(&fs::read_to_string(reference_config()).unwrap()).unwrap();
    edit(&mut v);
    let p = dir.join("cfg.json");
    fs::write(&p, serde_json::to_string_pretty(&v).unwrap()).unwrap();
    p
}

#[test]
fn analyze_reports_unsafe_plant() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("an");
    let o = run(&["analyze", s(&reference_config()), "-o", s(&out), "--alpha", "0.5"]);
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stderr));
    let txt = fs::read_to_string(out.join("containment.txt")).unwrap();
    assert!(txt.contains("contained: false"), "{txt}");
    assert!(txt.contains("stealthy: true"));
    let q = fs::read_to_string(out.join("invariant_Q.csv")).unwrap();
    assert_eq!(q.lines().count(), 4);
    let b = fs::read_to_string(out.join("projection_boundary.csv")).unwrap();
    // reachable, safe and normal sets on the three coordinate pairs
    assert_eq!(b.lines().count(), 1 + 3 * 3 * 720);
    assert_eq!(b.lines().next().unwrap(), "set,i,j,k,x_i,x_j");
}

#[test]
fn analyze_with_configured_alpha_also_fails_containment() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["analyze", s(&reference_config()), "-o", s(dir.path())]);
    assert_eq!(code(&o), 2);
}

#[test]
fn synthesize_then_verify_passes() {
    let dir = tempfile::tempdir().unwrap();
    let syn = dir.path().join("syn");
    let o = run(&["synthesize", s(&reference_config()), "-o", s(&syn)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["filter.json", "Q.csv", "report.json"] {
        assert!(syn.join(f).exists(), "{f}");
    }
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(syn.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["checks_passed"], true);
    assert!(report["outcome"]["diagnostics"]["solve_time"].as_f64().is_some());

    let file: FilterFile = serde_json::from_str(&fs::read_to_string(syn.join("filter.json")).unwrap()).unwrap();
    assert_eq!(file.invariant_q.as_ref().unwrap().nrows(), 6);
    let again = serde_json::to_string_pretty(&file).unwrap() + "\n";
    assert_eq!(again, fs::read_to_string(syn.join("filter.json")).unwrap());

    let ver = dir.path().join("ver");
    let filter = syn.join("filter.json");
    let o = run(&["verify", s(&reference_config()), s(&filter), "-o", s(&ver)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r: serde_json::Value = serde_json::from_str(&fs::read_to_string(ver.join("report.json")).unwrap()).unwrap();
    for k in ["invariance_feasible", "containment", "hinf_ok"] {
        assert_eq!(r[k], true, "{k}");
    }

    let o = run(&["verify", s(&reference_config()), s(&filter), "-o", s(&ver), "--q", s(&syn.join("Q.csv")), "--kick"]);
    assert_eq!(code(&o), 0);

    let bode = dir.path().join("bode");
    let o = run(&["bode", s(&reference_config()), s(&filter), "-o", s(&bode)]);
    assert_eq!(code(&o), 0);
    let filt = fs::read_to_string(bode.join("bode_filter.csv")).unwrap();
    assert_eq!(filt.lines().next().unwrap().split(',').count(), 1 + 2 * 2 * 2);
}

#[test]
fn bode_without_filter_is_plant_only() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["bode", s(&reference_config()), "-o", s(dir.path())]);
    assert_eq!(code(&o), 0);
    let csv = fs::read_to_string(dir.path().join("bode.csv")).unwrap();
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(header.len(), 1 + 3 * 2 * 2);
    assert_eq!(header[1], "ch_1_1_mag_db");
    assert_eq!(header[2], "ch_1_1_phase_deg");
    let rows: Vec<Vec<f64>> = lines
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 400);
    assert!((rows[0][0] - 0.1).abs() < 1e-15 && (rows[399][0] - 1e4).abs() < 1e-9);
    // x2 from u1: 100 / (s + 150), low-frequency gain 2/3
    let dc = 20.0 * (100.0f64 / 150.0).log10();
    assert!((rows[0][5] - dc).abs() < 1e-3);
    // x2 from u2 is structurally zero
    assert_eq!(rows[0][7], f64::NEG_INFINITY);
    // x1 from u1 rolls off with two poles: phase heads to -180
    assert!(rows[399][2] < -170.0 && rows[399][2] > -180.0);
}

#[test]
fn outputs_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let grid = dir.path().join("grid.json");
    fs::write(&grid, r#"{"alpha":[0.5,1.0,25.0],"lambda":[0.5],"delta":[0.9],"gamma":[0.61]}"#).unwrap();
    let mut outs = Vec::new();
    for k in 0..2 {
        let a = dir.path().join(format!("a{k}"));
        assert_eq!(code(&run(&["analyze", s(&reference_config()), "-o", s(&a)])), 2);
        let w = dir.path().join(format!("w{k}"));
        assert_eq!(code(&run(&["sweep", s(&reference_config()), s(&grid), "-o", s(&w)])), 0);
        outs.push((a, w));
    }
    for f in ["invariant_Q.csv", "projection_boundary.csv"] {
        assert_eq!(fs::read(outs[0].0.join(f)).unwrap(), fs::read(outs[1].0.join(f)).unwrap(), "{f}");
    }
    for f in ["sweep_table.csv", "Q.csv", "filter.json"] {
        assert_eq!(fs::read(outs[0].1.join(f)).unwrap(), fs::read(outs[1].1.join(f)).unwrap(), "{f}");
    }
    let table = fs::read_to_string(outs[0].1.join("sweep_table.csv")).unwrap();
    let status: Vec<&str> = table.lines().skip(1).map(|l| l.split(',').nth(6).unwrap()).collect();
    assert_eq!(status[2], "infeasible");
}

#[test]
fn random_simulation_is_seeded() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), |v| {
        v["sim"]["t_end"] = 0.2.into();
        v["sim"]["n_runs"] = 2.into();
        v["sim"]["seed"] = 11.into();
    });
    let mut traces = Vec::new();
    for k in 0..2 {
        let out = dir.path().join(format!("s{k}"));
        let o = run(&["simulate", s(&cfg), "--policy", "boundary-random", "-o", s(&out)]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        traces.push(fs::read(out.join("trace_run1.csv")).unwrap());
    }
    assert_eq!(traces[0], traces[1]);
    let csv = String::from_utf8(traces[0].clone()).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "t,zeta_1,zeta_2,zeta_3,u_1,u_2,V,in_safe,in_normal");
    assert_eq!(csv.lines().count(), 1 + 2001);
}

#[test]
fn bad_selection_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), |v| {
        v["selection"]["gamma_f"] = serde_json::json!([1.0, 0.0]);
        v["selection"]["gamma_c"] = serde_json::json!([1.0, 0.0]);
    });
    let o = run(&["analyze", s(&cfg), "-o", s(dir.path())]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("selection"));
}

#[test]
fn missing_normal_set_means_non_stealthy() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), |v| {
        v.as_object_mut().unwrap().remove("normal_set");
    });
    let p = load_config(&cfg).unwrap();
    assert!(!p.stealthy());
    let o = run(&["analyze", s(&cfg), "-o", s(dir.path())]);
    assert_eq!(code(&o), 2);
    let txt = fs::read_to_string(dir.path().join("containment.txt")).unwrap();
    assert!(txt.contains("stealthy: false"));
}

#[test]
fn defaults_are_applied() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), |v| {
        let o = v.as_object_mut().unwrap();
        o.remove("solver");
        o.remove("sim");
    });
    let p = load_config(&cfg).unwrap();
    assert_eq!(p.solver.tol, 1e-8);
    assert_eq!(p.sim.dt, 1e-4);
    assert_eq!(p.sim.t_end, 5.0);
    assert_eq!(p.sim.seed, 0);
}

#[test]
fn parse_errors_carry_position() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, "{\n  \"plant\": {\n    \"A\": [[1.0,]]\n").unwrap();
    let o = run(&["analyze", s(&cfg)]);
    assert_eq!(code(&o), 1);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line 3"), "{err}");
}

#[test]
fn invalid_scalar_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), |v| {
        v["scalars"]["alpha"] = (-1.0).into();
    });
    let err = load_config(&cfg).unwrap_err();
    assert!(err.to_string().contains("scalars.alpha"), "{err}");
}

#[test]
fn solver_breakdown_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), |v| {
        v["solver"]["max_iter"] = 1.into();
    });
    let o = run(&["analyze", s(&cfg), "-o", s(dir.path())]);
    assert_eq!(code(&o), 3);
    let txt = fs::read_to_string(dir.path().join("containment.txt")).unwrap();
    assert!(txt.starts_with("status: numerical-failure"));
}

#[test]
fn infeasible_synthesis_exits_two_with_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), |v| {
        v["scalars"]["gamma"] = 0.0.into();
    });
    let o = run(&["synthesize", s(&cfg), "-o", s(dir.path())]);
    assert_eq!(code(&o), 2);
    let r: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(r["status"], "infeasible");
}

#[test]
fn config_round_trips() {
    let text = fs::read_to_string(reference_config()).unwrap();
    let c: RunConfig = serde_json::from_str(&text).unwrap();
    let back: RunConfig = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
    assert_eq!(c, back);
}
