use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use pcahn::output::Manifest;
use pcahn_core::dynamics::RunRecord;

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

fn pcahn(cmd: &str, config: &Path, out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pcahn"))
        .args([cmd, "--config"])
        .arg(config)
        .arg("--out")
        .arg(out)
        .env_remove("PCAHN_OUT")
        .output()
        .unwrap()
}

fn text(o: &Output) -> String {
    format!("{}{}", String::from_utf8_lossy(&o.stdout), String::from_utf8_lossy(&o.stderr))
}

#[test]
fn potential_reports_and_writes_a_verifiable_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "pot.cfg", "[model]\ntheta = 4\np = 2\nbeta = 0.1\n");
    let out = pcahn("potential", &cfg, dir.path());
    assert!(out.status.success(), "{}", text(&out));
    let s = text(&out);
    assert!(s.contains("supercritical"), "{s}");
    assert!(s.contains("alpha = 0.75, gamma = 3"), "{s}");
    let m = Manifest::read(&dir.path().join("potential/manifest.json")).unwrap();
    assert_eq!(m.command, "potential");
    assert!(m.files.iter().any(|f| f.path == "potential.csv"));
    assert!(m.verify(&dir.path().join("potential")).is_empty());
    assert!(m.config.contains("theta = 4"));
}

#[test]
fn inadmissible_tilt_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "pot.cfg", "[model]\ntheta = 2\np = 2\nbeta = 0.5\n");
    let out = pcahn("potential", &cfg, dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(text(&out).contains("beta outside admissible range"), "{}", text(&out));
}

#[test]
fn critical_regime_cannot_place_layers_arbitrarily() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "st.cfg",
        "[model]\ntheta = 2\np = 2\nepsilon = 0.02\n[steady]\nkind = subcritical\nlayers = 0.2, 0.5\n",
    );
    let out = pcahn("steady", &cfg, dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(text(&out).contains("arbitrary layer placement impossible in this regime"), "{}", text(&out));
}

#[test]
fn quadratic_gradient_has_no_compact_pulse() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "pu.cfg", "[model]\ntheta = 2\np = 2\n[pulse]\nbeta = 0.1\n");
    let out = pcahn("pulse", &cfg, dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(text(&out).contains("no compact pulse"), "{}", text(&out));
}

#[test]
fn pulse_from_distance_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "pu.cfg",
        "[model]\ntheta = 3\np = 3\nepsilon = 0.1\n[pulse]\ndistance = 0.3\n[steady]\nsamples = 500\n",
    );
    let out = pcahn("pulse", &cfg, dir.path());
    assert!(out.status.success(), "{}", text(&out));
    let m = Manifest::read(&dir.path().join("pulse/manifest.json")).unwrap();
    let d = m.summary["distance"].as_f64().unwrap();
    assert!((d - 0.3).abs() < 1e-8, "{d}");
}

const RUN: &str = "
[model]
theta = 2
p = 2
epsilon = 0.1
mobility = mullins(1)
[domain]
n = 64
[pattern]
jumps = 0.35, 0.65
r = 0.1
[sweep]
K = 0
stop_at_exit = false
";

#[test]
fn resumed_run_matches_uninterrupted_run() {
    let dir = tempfile::tempdir().unwrap();
    let first = write_config(dir.path(), "a.cfg", &format!("{RUN}t_max = 0.5\n[solver]\nmax_steps = 40\n"));
    let out = pcahn("simulate", &first, &dir.path().join("a"));
    assert!(out.status.success(), "{}", text(&out));
    let resumed = write_config(
        dir.path(),
        "b.cfg",
        &format!("{RUN}t_max = 0.5\n[simulate]\nresume = a/simulate/run.json\n"),
    );
    let out = pcahn("simulate", &resumed, &dir.path().join("b"));
    assert!(out.status.success(), "{}", text(&out));
    assert!(text(&out).contains("resuming"));
    let direct = write_config(dir.path(), "c.cfg", &format!("{RUN}t_max = 0.5\n"));
    let out = pcahn("simulate", &direct, &dir.path().join("c"));
    assert!(out.status.success(), "{}", text(&out));
    let read = |p: &str| -> RunRecord { serde_json::from_str(&fs::read_to_string(dir.path().join(p)).unwrap()).unwrap() };
    let (b, c) = (read("b/simulate/run.json"), read("c/simulate/run.json"));
    let (lb, lc) = (b.snapshots.last().unwrap(), c.snapshots.last().unwrap());
    assert_eq!(lb.t, lc.t);
    assert_eq!(lb.step_count, lc.step_count);
    assert_eq!(lb.values, lc.values);
    assert_eq!(b.summary.steps, c.summary.steps);
    assert!(dir.path().join("c/simulate/series.csv").exists());
}

#[test]
fn single_epsilon_sweep_and_refused_fit() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "sw.cfg",
        "[model]\ntheta = 4\np = 2\n[domain]\nn = 128\n[pattern]\njumps = 0.35, 0.65\nr = 0.1\n\
         [sweep]\nepsilons = 0.1\nt_max = 100\nK = 0\n[output]\nsvg = true\n\
         [fit]\ntable = out/sweep/exit_times.csv\n",
    );
    let out = pcahn("sweep", &cfg, &dir.path().join("out"));
    assert!(out.status.success(), "{}", text(&out));
    assert!(dir.path().join("out/sweep/exit_times.svg").exists());
    let table = fs::read_to_string(dir.path().join("out/sweep/exit_times.csv")).unwrap();
    assert_eq!(table.lines().count(), 2, "{table}");
    let out = pcahn("fit", &cfg, &dir.path().join("out"));
    assert!(out.status.success(), "{}", text(&out));
    assert!(text(&out).contains("insufficient"), "{}", text(&out));
}

#[test]
fn corrupted_table_reports_the_line() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("t.csv"),
        "theta,p,epsilon,N,delta,K_lo,K_hi,t_exit,censored_flag,t_max\n\
         2,2,0.1,2,0.05,0,0,107.7,false,1e7\n\
         2,2,oops,2,0.05,0,0,1786.9,false,1e7\n",
    )
    .unwrap();
    let cfg = write_config(dir.path(), "f.cfg", "[model]\ntheta = 2\np = 2\n[fit]\ntable = t.csv\n");
    let out = pcahn("fit", &cfg, dir.path());
    assert_eq!(out.status.code(), Some(1));
    let s = text(&out);
    assert!(s.contains("t.csv") && s.contains("line 3"), "{s}");
}

#[test]
fn config_errors_carry_line_numbers() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "bad.cfg", "[model]\ntheta = 2\np = 2\nepsylon = 0.1\n");
    let out = pcahn("potential", &cfg, dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(text(&out).contains("line 4"), "{}", text(&out));
}

#[test]
fn coarse_check_grid_skips_the_order_criterion() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.cfg", "[model]\ntheta = 2\np = 2\n[domain]\nn = 16\n[check]\nscale = quick\n");
    let out = pcahn("check", &cfg, dir.path());
    let s = text(&out);
    assert_eq!(out.status.code(), Some(0), "{s}");
    assert!(s.contains("SKIP (grid too coarse"), "{s}");
    assert!(fs::read_to_string(dir.path().join("check/checks.csv")).unwrap().contains("skipped"));
}

#[test]
fn environment_overrides_configured_output_directory() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "p.cfg", "[model]\ntheta = 2\np = 2\n[output]\ndirectory = configured\n");
    let status = Command::new(env!("CARGO_BIN_EXE_pcahn"))
        .args(["potential", "--config"])
        .arg(&cfg)
        .env("PCAHN_OUT", dir.path().join("env"))
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert!(status.status.success());
    assert!(dir.path().join("env/potential/manifest.json").exists());
    assert!(!dir.path().join("configured").exists());
}
