//! The `pcahn` subcommands. Each writes into `<out>/<command>/` and finishes with a manifest.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use pcahn_core::dynamics::{discrete_energy, evolve, RunRecord, RunSummary, SimState, SolverConfig};
use pcahn_core::metastability::{
    exit_monitor, exit_time, exponent_table, fit, read_exit_table, write_exit_table, ExitRow, FitModel,
    MetastabilityError,
};
use pcahn_core::phaseplane::{
    build_pulse_chain, heteroclinic_profile, pulse_profile, residual_check, residual_check_away_from_junctions,
    solve_beta_for_distance, subcritical_steady, transition_distance, zero_crossing_limit, SteadyProfile,
};
use pcahn_core::potential::{
    beta_range, c_p, critical_points, lambda_p, PotentialParams, Regime, TiltedPotential,
};
use serde_json::json;

use crate::checks::{run_all, CheckOptions, Status};
use crate::config::{ExperimentConfig, SteadyKind};
use crate::error::{HarnessError, Result};
use crate::experiment::{sweep, MetastableSetup};
use crate::output::{line_plot_svg, resolve_output_dir, OutputDir, Series};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Potential,
    Steady,
    Pulse,
    Simulate,
    Sweep,
    Fit,
    Check,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Potential => "potential",
            Command::Steady => "steady",
            Command::Pulse => "pulse",
            Command::Simulate => "simulate",
            Command::Sweep => "sweep",
            Command::Fit => "fit",
            Command::Check => "check",
        }
    }
}

#[derive(Debug, Clone)]
pub struct Invocation {
    pub command: Command,
    pub config: PathBuf,
    pub out: Option<PathBuf>,
    pub workers: usize,
    /// Forces SVG output on even if the config leaves it off.
    pub svg: bool,
}

/// Exit code of a completed command that found failing acceptance criteria.
pub const ACCEPTANCE_FAILURE: i32 = 3;

struct Ctx<'a> {
    cfg: &'a ExperimentConfig,
    out: OutputDir,
    report: String,
    workers: usize,
    svg: bool,
}

impl Ctx<'_> {
    fn say(&mut self, line: impl AsRef<str>) {
        println!("{}", line.as_ref());
        self.report.push_str(line.as_ref());
        self.report.push('\n');
    }

    fn csv(&mut self, name: &str, header: &str, rows: impl IntoIterator<Item = String>) -> Result<()> {
        let mut s = format!("{header}\n");
        for r in rows {
            s.push_str(&r);
            s.push('\n');
        }
        self.out.write(name, s.as_bytes()).map(|_| ())
    }
}

/// Runs one subcommand; returns the process exit code on completion.
pub fn execute(inv: &Invocation) -> Result<i32> {
    let (cfg, text) = ExperimentConfig::from_file(&inv.config)?;
    let root = resolve_output_dir(inv.out.as_deref(), cfg.output_dir.as_deref()).join(inv.command.name());
    let mut ctx = Ctx {
        cfg: &cfg,
        out: OutputDir::create(root)?,
        report: String::new(),
        workers: inv.workers.max(1),
        svg: inv.svg || cfg.svg,
    };
    let (summary, code) = match inv.command {
        Command::Potential => (potential(&mut ctx)?, 0),
        Command::Steady => (steady(&mut ctx)?, 0),
        Command::Pulse => (pulse(&mut ctx)?, 0),
        Command::Simulate => (simulate(&mut ctx)?, 0),
        Command::Sweep => (sweep_cmd(&mut ctx)?, 0),
        Command::Fit => (fit_cmd(&mut ctx)?, 0),
        Command::Check => check(&mut ctx)?,
    };
    let report = std::mem::take(&mut ctx.report);
    ctx.out.write("report.txt", report.as_bytes())?;
    let dir = ctx.out.root().to_path_buf();
    ctx.out.finish(inv.command.name(), &text, summary)?;
    println!("wrote {}", dir.display());
    Ok(code)
}

fn regime_text(r: Regime) -> &'static str {
    match r {
        Regime::Subcritical => "subcritical (theta < p): compact transitions, stationary layers anywhere",
        Regime::Critical => "critical (theta = p): exponentially slow layer motion",
        Regime::Supercritical => "supercritical (theta > p): algebraically slow layer motion",
    }
}

fn potential(ctx: &mut Ctx) -> Result<serde_json::Value> {
    let params = ctx.cfg.params();
    let beta = ctx.cfg.model.beta;
    let ((lo, hi), numeric) = beta_range(&params);
    let tilted = TiltedPotential::new(params, beta);
    let crit = critical_points(&tilted)
        .map_err(|e| HarnessError::config(0, format!("beta outside admissible range: {e}")))?;
    let cp = c_p(&params);
    let lam = lambda_p(params.p());
    ctx.say(format!("theta = {}, p = {}, epsilon = {}", params.theta(), params.p(), params.epsilon()));
    ctx.say(format!("regime: {}", regime_text(params.regime())));
    ctx.say(format!("c_p = {cp:.12}"));
    ctx.say(format!("lambda_p = {lam:.12}"));
    ctx.say(format!(
        "admissible beta range ({lo:.10}, {hi:.10}){}",
        if numeric { " [computed numerically]" } else { "" }
    ));
    ctx.say(format!(
        "beta = {beta}: wells {:.10}, {:.10}; local max {:.10}; inflections {:.10}, {:.10}",
        crit.z_minus, crit.z_plus_crit, crit.z_max, crit.u_minus, crit.u_plus
    ));
    let rows = (0..=600).map(|i| {
        let u = -1.5 + 3.0 * i as f64 / 600.0;
        format!("{u},{},{},{}", params.f(u), params.df(u), tilted.g(u))
    });
    ctx.csv("potential.csv", "u,F,dF,G", rows.collect::<Vec<_>>())?;
    let mut summary = json!({
        "c_p": cp, "lambda_p": lam, "beta_range": [lo, hi], "numeric_range": numeric,
        "critical_points": {"z_minus": crit.z_minus, "z_max": crit.z_max, "z_plus": crit.z_plus_crit,
                            "u_minus": crit.u_minus, "u_plus": crit.u_plus},
    });
    if params.regime() == Regime::Supercritical {
        let table = exponent_table(&params, 10).map_err(HarnessError::numerical)?;
        ctx.say(format!("exponent table: alpha = {}, gamma = {}", table.alpha, table.gamma));
        for (m, k) in table.k.iter().enumerate() {
            ctx.say(format!("  k_{} = {k:.10}", m + 1));
        }
        summary["exponents"] = json!({"alpha": table.alpha, "gamma": table.gamma, "k": table.k});
    }
    Ok(summary)
}

fn write_profile(ctx: &mut Ctx, name: &str, prof: &SteadyProfile) -> Result<()> {
    let mut buf = Vec::new();
    prof.write_csv(&mut buf).map_err(HarnessError::numerical)?;
    ctx.out.write(name, &buf).map(|_| ())
}

fn steady(ctx: &mut Ctx) -> Result<serde_json::Value> {
    let params = ctx.cfg.params();
    let grid = ctx.cfg.grid;
    let layers = ctx.cfg.steady_layers.clone();
    let kind = ctx.cfg.steady_kind;
    let prof = match kind {
        SteadyKind::Heteroclinic => {
            let base = heteroclinic_profile(params, ctx.cfg.samples).map_err(HarnessError::numerical)?;
            let centre = layers.first().copied().unwrap_or(0.5 * (grid.a() + grid.b()));
            base.recentred(grid, centre).map_err(HarnessError::numerical)?
        }
        SteadyKind::Pulse => return pulse(ctx),
        SteadyKind::Chain => build_pulse_chain(params, grid, &layers).map_err(HarnessError::numerical)?,
        SteadyKind::Subcritical => subcritical_steady(params, grid, &layers).map_err(HarnessError::numerical)?,
    };
    let residual = residual_check(&prof);
    let away = residual_check_away_from_junctions(&prof);
    let energy = discrete_energy(&prof.samples, &params);
    let n = prof.layer_locations.len() as f64;
    let cp = c_p(&params);
    ctx.say(format!("{:?} profile on [{}, {}] with n = {}", kind, grid.a(), grid.b(), grid.n()));
    ctx.say(format!("layers: {:?}", prof.layer_locations));
    ctx.say(format!("beta = {}, kappa = {}, half-width = {:.6}", prof.beta, prof.kappa, prof.half_width));
    ctx.say(format!("max residual {residual:.3e}; away from junctions {away:.3e}"));
    ctx.say(format!("energy {energy:.10}; N c_p = {:.10}", n * cp));
    write_profile(ctx, "steady.csv", &prof)?;
    Ok(json!({
        "kind": format!("{kind:?}").to_lowercase(), "layers": prof.layer_locations, "beta": prof.beta,
        "kappa": prof.kappa, "residual": residual, "residual_away_from_junctions": away,
        "energy": energy, "n_c_p": n * cp,
    }))
}

fn pulse(ctx: &mut Ctx) -> Result<serde_json::Value> {
    let params = ctx.cfg.params();
    let beta = match (ctx.cfg.pulse_beta, ctx.cfg.pulse_distance) {
        (Some(_), Some(_)) => return Err(HarnessError::config(0, "give either [pulse] beta or distance, not both")),
        (Some(b), None) => b,
        (None, Some(d)) => solve_beta_for_distance(&params, d).map_err(HarnessError::numerical)?,
        (None, None) => ctx.cfg.model.beta,
    };
    let prof = pulse_profile(TiltedPotential::new(params, beta), ctx.cfg.samples).map_err(HarnessError::numerical)?;
    let residual = prof.first_integral_residual();
    ctx.say(format!("pulse at beta = {beta:.12}"));
    ctx.say(format!(
        "rest {:.10}, peak {:.10}, kappa {:.10}, support half-width {:.10}",
        prof.rest(),
        prof.peak(),
        prof.kappa(),
        prof.omega
    ));
    ctx.say(format!("first-integral residual {residual:.3e}"));
    let distance = transition_distance(&prof.tilted).ok();
    if let Some(d) = distance {
        ctx.say(format!("distance between zero crossings {d:.10}"));
    }
    ctx.csv("pulse.csv", "x,u", prof.samples.iter().map(|(x, u)| format!("{x},{u}")).collect::<Vec<_>>())?;
    // Distance table on (0, β*) for positive tilts.
    let star = zero_crossing_limit(&params).map_err(HarnessError::numerical)?;
    let table: Vec<(f64, f64)> = (1..=24)
        .map(|i| star * i as f64 / 25.0)
        .filter_map(|b| transition_distance(&TiltedPotential::new(params, b)).ok().map(|d| (b, d)))
        .collect();
    ctx.say(format!("beta* = {star:.12} (distance vanishes)"));
    ctx.csv("distance.csv", "beta,distance", table.iter().map(|(b, d)| format!("{b},{d}")).collect::<Vec<_>>())?;
    if ctx.svg {
        let svg = line_plot_svg(
            "transition distance",
            "beta",
            "d",
            &[Series {
                label: format!("theta = {}, p = {}", params.theta(), params.p()),
                points: table.clone(),
            }],
        );
        ctx.out.write("distance.svg", svg.as_bytes())?;
    }
    Ok(json!({
        "beta": beta, "rest": prof.rest(), "peak": prof.peak(), "kappa": prof.kappa(), "omega": prof.omega,
        "first_integral_residual": residual, "distance": distance, "beta_star": star,
    }))
}

/// Concatenates a resumed run onto the run it continues.
fn merge_runs(mut first: RunRecord, second: RunRecord) -> RunRecord {
    let s = second.summary;
    let a = first.summary;
    first.snapshots.extend(second.snapshots.into_iter().skip(1));
    first.series.extend(second.series.into_iter().skip(1));
    first.config = second.config;
    first.summary = RunSummary {
        steps: a.steps + s.steps,
        rejections: a.rejections + s.rejections,
        final_t: s.final_t,
        initial_energy: a.initial_energy,
        final_energy: s.final_energy,
        max_energy_increase: a.max_energy_increase.max(s.max_energy_increase),
        max_relative_mass_drift: a.max_relative_mass_drift.max(s.max_relative_mass_drift),
        max_mobility: a.max_mobility.max(s.max_mobility),
        min_dt: a.min_dt.min(s.min_dt),
        max_dt: a.max_dt.max(s.max_dt),
        stop: s.stop,
    };
    first
}

fn read_run(path: &Path) -> Result<RunRecord> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| HarnessError::Input {
        path: path.to_path_buf(),
        message: format!("line {}: {e}", e.line()),
    })
}

fn simulate(ctx: &mut Ctx) -> Result<serde_json::Value> {
    let cfg = ctx.cfg;
    let setup = MetastableSetup::from_config(cfg)?;
    let eps = cfg.model.epsilon;
    let params = setup.params(eps)?;
    let t_max = cfg.solver.t_max;
    let config = SolverConfig { t_max, ..setup.solver };
    let (record, exit) = match &cfg.resume {
        None => setup.run(eps, t_max)?,
        Some(path) => {
            let previous = read_run(path)?;
            if previous.params != params || previous.grid != setup.grid {
                return Err(HarnessError::Input {
                    path: path.clone(),
                    message: "run was made with different model parameters or grid".into(),
                });
            }
            let last = previous.snapshots.last().ok_or_else(|| HarnessError::Input {
                path: path.clone(),
                message: "run has no snapshots".into(),
            })?;
            let start = last.state(setup.grid).map_err(HarnessError::numerical)?;
            let reference = previous.snapshots[0].field(setup.grid).map_err(HarnessError::numerical)?;
            let mut monitor = exit_monitor(&reference, setup.detection.clone(), setup.delta);
            let mut never = |_: &SimState| false;
            let stop: &mut dyn FnMut(&SimState) -> bool =
                if setup.stop_at_exit { &mut monitor } else { &mut never };
            ctx.say(format!("resuming {} from t = {:.6e} (step {})", path.display(), last.t, last.step_count));
            let cont = evolve(start, &params, &setup.mobility, &config, &setup.cadence, stop)
                .map_err(HarnessError::numerical)?;
            let merged = merge_runs(previous, cont);
            let exit = exit_time(&merged, &setup.detection, setup.delta).map_err(HarnessError::numerical)?;
            (merged, exit)
        }
    };
    let s = &record.summary;
    ctx.say(format!("theta = {}, p = {}, epsilon = {eps}, mobility {}", setup.theta, setup.p, setup.mobility));
    ctx.say(format!(
        "{} steps ({} rejected) to t = {:.6e}, stop: {:?}",
        s.steps, s.rejections, s.final_t, s.stop
    ));
    ctx.say(format!("energy {:.10} -> {:.10}; max increase {:.3e}", s.initial_energy, s.final_energy, s.max_energy_increase));
    ctx.say(format!("max relative mass drift {:.3e}; dt in [{:.3e}, {:.3e}]", s.max_relative_mass_drift, s.min_dt, s.max_dt));
    ctx.say(match exit {
        pcahn_core::metastability::ExitTime::Exit { t } => format!("exit time {t:.6e}"),
        pcahn_core::metastability::ExitTime::Censored { t_max } => format!("no exit before t = {t_max:.6e} (censored)"),
    });
    let json_run = serde_json::to_string(&record).expect("record serializes");
    ctx.out.write("run.json", json_run.as_bytes())?;
    let series_rows: Vec<String> = record
        .series
        .iter()
        .map(|r| {
            format!(
                "{},{},{},{},{},{},{}",
                r.t,
                r.dt,
                r.mass,
                r.energy,
                r.dissipation_rhs,
                r.cumulative_dissipation,
                r.layers.len()
            )
        })
        .collect();
    ctx.csv("series.csv", "t,dt,mass,energy,dissipation_rhs,cumulative_dissipation,n_layers", series_rows)?;
    let mut buf = Vec::new();
    write_exit_table(&mut buf, &[setup.row(eps, t_max, exit)]).map_err(HarnessError::numerical)?;
    ctx.out.write("exit.csv", &buf)?;
    if ctx.svg {
        let target = setup.pattern.n_layers() as f64 * c_p(&params);
        let pts: Vec<(f64, f64)> = record.series.iter().filter(|r| r.t > 0.0).map(|r| (r.t.log10(), r.energy)).collect();
        let level = vec![(pts.first().map_or(0.0, |p| p.0), target), (pts.last().map_or(1.0, |p| p.0), target)];
        let svg = line_plot_svg(
            "energy",
            "log10 t",
            "E",
            &[
                Series { label: "E(t)".into(), points: pts },
                Series { label: "N c_p".into(), points: level },
            ],
        );
        ctx.out.write("energy.svg", svg.as_bytes())?;
    }
    Ok(json!({
        "epsilon": eps, "steps": s.steps, "final_t": s.final_t, "stop": format!("{:?}", s.stop),
        "final_energy": s.final_energy, "max_energy_increase": s.max_energy_increase,
        "max_relative_mass_drift": s.max_relative_mass_drift, "exit": exit,
    }))
}

fn exit_rows_csv(rows: &[ExitRow]) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    write_exit_table(&mut buf, rows).map_err(HarnessError::numerical)?;
    Ok(buf)
}

fn sweep_cmd(ctx: &mut Ctx) -> Result<serde_json::Value> {
    let cfg = ctx.cfg;
    let setup = MetastableSetup::from_config(cfg)?;
    let result = sweep(&setup, &cfg.sweep.epsilons, cfg.sweep.t_max, ctx.workers)?;
    ctx.say(format!(
        "theta = {}, p = {}, {} runs on {} workers, delta = {}",
        setup.theta,
        setup.p,
        cfg.sweep.epsilons.len(),
        ctx.workers,
        setup.delta
    ));
    for r in &result.rows {
        ctx.say(format!(
            "  epsilon = {:<8} t_exit = {:.6e}{}",
            r.epsilon,
            r.t_exit,
            if r.censored_flag { " (censored)" } else { "" }
        ));
    }
    for f in &result.failures {
        ctx.say(format!("  epsilon = {:<8} FAILED: {}", f.epsilon, f.error));
    }
    let table = exit_rows_csv(&result.rows)?;
    ctx.out.write("exit_times.csv", &table)?;
    ctx.csv(
        "failures.csv",
        "epsilon,error",
        result.failures.iter().map(|f| format!("{},\"{}\"", f.epsilon, f.error.replace('"', "'"))).collect::<Vec<_>>(),
    )?;
    if ctx.svg {
        let pts: Vec<(f64, f64)> = result
            .rows
            .iter()
            .filter(|r| !r.censored_flag && r.t_exit > 0.0)
            .map(|r| (1.0 / r.epsilon, r.t_exit.ln()))
            .collect();
        let svg = line_plot_svg("exit times", "1 / epsilon", "ln T", &[Series { label: "exits".into(), points: pts }]);
        ctx.out.write("exit_times.svg", svg.as_bytes())?;
    }
    Ok(json!({ "rows": result.rows, "failures": result.failures }))
}

fn fit_cmd(ctx: &mut Ctx) -> Result<serde_json::Value> {
    let path = ctx
        .cfg
        .fit_table
        .clone()
        .ok_or_else(|| HarnessError::config(0, "fit needs [fit] table = <exit-time csv>"))?;
    let file = std::fs::File::open(&path).map_err(|e| HarnessError::io(&path, e))?;
    let rows = read_exit_table(file).map_err(|e| HarnessError::Input {
        path: path.clone(),
        message: e.to_string(),
    })?;
    let models: Vec<FitModel> = match ctx.cfg.fit_model {
        Some(m) => vec![m],
        None => vec![FitModel::Exponential, FitModel::Algebraic],
    };
    ctx.say(format!("{} rows from {}", rows.len(), path.display()));
    for r in rows.iter().filter(|r| r.censored_flag) {
        ctx.say(format!("  censored: epsilon = {} at t_max = {:.6e} (excluded)", r.epsilon, r.t_max));
    }
    let mut fits = Vec::new();
    for m in models {
        match fit(&rows, m) {
            Ok(f) => {
                ctx.say(format!(
                    "{:?}: slope {:.6}, intercept {:.6}, r2 {:.6}, exponent {:.6} ({} points)",
                    m, f.slope, f.intercept, f.r_squared, f.exponent, f.used
                ));
                fits.push(f);
            }
            Err(e @ MetastabilityError::InsufficientData { .. }) => ctx.say(format!("{m:?}: {e}")),
            Err(e) => return Err(HarnessError::numerical(e)),
        }
    }
    let mut gamma = None;
    if let Some(first) = rows.first() {
        if let Ok(params) = PotentialParams::new(first.theta, first.p, first.epsilon) {
            if let Ok(table) = exponent_table(&params, 1) {
                gamma = Some(table.gamma);
                if let Some(alg) = fits.iter().find(|f| f.model == FitModel::Algebraic) {
                    ctx.say(format!("k_fit = {:.6} against gamma = {}", alg.exponent, table.gamma));
                }
            }
        }
    }
    let summary = json!({ "fits": fits, "gamma": gamma, "rows": rows.len() });
    ctx.out.write("fit.json", serde_json::to_string_pretty(&summary).expect("serializes").as_bytes())?;
    Ok(summary)
}

fn check(ctx: &mut Ctx) -> Result<(serde_json::Value, i32)> {
    let opts = CheckOptions {
        scale: ctx.cfg.check_scale,
        seed: ctx.cfg.seed,
        order_grid: ctx.cfg.grid.n(),
        workers: ctx.workers,
    };
    let outcomes = run_all(&opts);
    let mut csv = String::from("id,name,status,detail,seconds\n");
    for o in &outcomes {
        ctx.say(o.line());
        let status = match &o.status {
            Status::Pass => "pass".to_string(),
            Status::Fail => "fail".to_string(),
            Status::Skipped(why) => format!("skipped: {why}"),
        };
        let _ = writeln!(csv, "{},{},\"{}\",\"{}\",{:.3}", o.id, o.name, status, o.detail.replace('"', "'"), o.seconds);
    }
    ctx.out.write("checks.csv", csv.as_bytes())?;
    let failed: Vec<u32> = outcomes.iter().filter(|o| o.failed()).map(|o| o.id).collect();
    ctx.say(format!(
        "{} passed, {} failed, {} skipped",
        outcomes.iter().filter(|o| o.passed()).count(),
        failed.len(),
        outcomes.len() - failed.len() - outcomes.iter().filter(|o| o.passed()).count()
    ));
    let code = if failed.is_empty() { 0 } else { ACCEPTANCE_FAILURE };
    Ok((json!({ "outcomes": outcomes, "failed": failed }), code))
}
