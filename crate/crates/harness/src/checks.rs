//! Acceptance checks, one per criterion, shared by `pcahn check` and the acceptance tests.

use std::time::Instant;

use pcahn_core::dynamics::{
    chemical_potential, step_with_dt, Cadence, MobilityModel, RunRecord, RunSummary, Snapshot, SolverConfig,
    StopReason,
};
use pcahn_core::field::{Field, Grid};
use pcahn_core::metastability::{
    exit_time, exponent_table, fit, set_distance, DetectionSet, ExitRow, FitModel, InterfaceSet, ScalingFit,
    TransitionPattern,
};
use pcahn_core::phaseplane::{
    build_pulse_chain, heteroclinic_profile, pulse_profile, residual_check_away_from_junctions,
    solve_beta_for_distance, subcritical_steady, transition_distance, PhaseplaneError,
};
use pcahn_core::potential::{c_p, PotentialParams, TiltedPotential};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::config::{CheckScale, TMaxRule};
use crate::experiment::{sweep, MetastableSetup};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", content = "reason", rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    Skipped(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub id: u32,
    pub name: String,
    pub status: Status,
    pub detail: String,
    pub seconds: f64,
}

impl CheckOutcome {
    fn new(id: u32, name: &str, pass: bool, detail: String, started: Instant) -> Self {
        Self {
            id,
            name: name.into(),
            status: if pass { Status::Pass } else { Status::Fail },
            detail,
            seconds: started.elapsed().as_secs_f64(),
        }
    }

    fn error(id: u32, name: &str, err: impl std::fmt::Display, started: Instant) -> Self {
        Self::new(id, name, false, format!("error: {err}"), started)
    }

    pub fn passed(&self) -> bool {
        self.status == Status::Pass
    }

    pub fn failed(&self) -> bool {
        self.status == Status::Fail
    }

    pub fn line(&self) -> String {
        let tag = match &self.status {
            Status::Pass => "PASS".to_string(),
            Status::Fail => "FAIL".to_string(),
            Status::Skipped(why) => format!("SKIP ({why})"),
        };
        format!("[{tag}] {:>2} {}: {} ({:.2} s)", self.id, self.name, self.detail, self.seconds)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CheckOptions {
    pub scale: CheckScale,
    pub seed: u64,
    /// Coarse grid of the spatial-order check; the fine grid doubles it.
    pub order_grid: usize,
    pub workers: usize,
}

impl Default for CheckOptions {
    fn default() -> Self {
        Self {
            scale: CheckScale::Full,
            seed: 20240601,
            order_grid: 512,
            workers: 4,
        }
    }
}

/// Runs every criterion reachable at `opts.scale`, in order.
pub fn run_all(opts: &CheckOptions) -> Vec<CheckOutcome> {
    let mut out = vec![
        constant_fidelity(),
        heteroclinic_oracle(),
        pulse_regime_law(),
        distance_scaling(),
        steady_residuals(),
    ];
    let [c6, c7] = conservation_and_dissipation();
    out.extend([c6, c7, spatial_order(opts.order_grid)]);
    match opts.scale {
        CheckScale::Full => {
            let [c9, c11] = metastable_critical(opts.workers);
            out.extend([c9, metastable_supercritical(opts.workers), c11]);
        }
        CheckScale::Quick => {
            for (id, name) in [
                (9, "metastable scaling, critical"),
                (10, "metastable scaling, supercritical"),
                (11, "lower-bound gap tracking"),
            ] {
                out.push(CheckOutcome {
                    id,
                    name: name.into(),
                    status: Status::Skipped("long suite, set scale = full".into()),
                    detail: String::new(),
                    seconds: 0.0,
                });
            }
        }
    }
    out.extend([interface_machinery(opts.seed), exponent_arithmetic()]);
    out
}

fn params(theta: f64, p: f64, eps: f64) -> PotentialParams {
    PotentialParams::new(theta, p, eps).expect("fixed check parameters are valid")
}

pub fn constant_fidelity() -> CheckOutcome {
    let t = Instant::now();
    let c2 = c_p(&params(2.0, 2.0, 0.1));
    let c3 = c_p(&params(3.0, 3.0, 0.1));
    let closed2 = 2.0 * 2f64.sqrt() / 3.0;
    let closed3 = 16.0 / (15.0 * 4f64.powf(2.0 / 3.0));
    // The quoted decimal 0.423320 is not the value of its own closed form (0.4233069); the
    // closed form is the reference.
    let ok = (c2 - 0.942809042).abs() <= 1e-8
        && (c2 - closed2).abs() <= 1e-8
        && (c3 - closed3).abs() <= 1e-10;
    let elapsed = t.elapsed().as_secs_f64();
    CheckOutcome::new(
        1,
        "constant fidelity",
        ok && elapsed < 1.0,
        format!(
            "c_2 = {c2:.12} (closed {closed2:.12}), c_3 = {c3:.12} (closed {closed3:.12}; quoted 0.423320 differs by {:.2e})",
            (closed3 - 0.423320f64).abs()
        ),
        t,
    )
}

pub fn heteroclinic_oracle() -> CheckOutcome {
    let t = Instant::now();
    let name = "heteroclinic oracle";
    let eps = 0.05;
    let prof = match heteroclinic_profile(params(2.0, 2.0, eps), 10_000) {
        Ok(p) => p,
        Err(e) => return CheckOutcome::error(2, name, e, t),
    };
    let err = prof
        .samples
        .grid()
        .nodes()
        .zip(prof.samples.values())
        .map(|(x, u)| (u - (x / (std::f64::consts::SQRT_2 * eps)).tanh()).abs())
        .fold(0.0, f64::max);
    let elapsed = t.elapsed().as_secs_f64();
    CheckOutcome::new(
        2,
        name,
        err <= 1e-7 && elapsed < 1.0,
        format!("sup |u - tanh| = {err:.3e} at 10^4 points"),
        t,
    )
}

pub fn pulse_regime_law() -> CheckOutcome {
    let t = Instant::now();
    let name = "pulse regime law";
    let residual = match pulse_profile(TiltedPotential::new(params(3.0, 3.0, 0.1), 0.1), 4000) {
        Ok(p) => p.first_integral_residual(),
        Err(e) => return CheckOutcome::error(3, name, e, t),
    };
    let diverges = [-0.3, -0.1, 0.05, 0.2, 0.38].iter().all(|&b| {
        matches!(
            pulse_profile(TiltedPotential::new(params(2.0, 2.0, 0.1), b), 400),
            Err(PhaseplaneError::NoCompactPulse(_))
        )
    }) && matches!(
        pulse_profile(TiltedPotential::new(params(3.0, 2.0, 0.1), 0.1), 400),
        Err(PhaseplaneError::NoCompactPulse(_))
    );
    let elapsed = t.elapsed().as_secs_f64();
    CheckOutcome::new(
        3,
        name,
        residual <= 1e-8 && diverges && elapsed < 5.0,
        format!("p = 3 first-integral residual {residual:.3e}; p = 2 divergence error: {diverges}"),
        t,
    )
}

pub fn distance_scaling() -> CheckOutcome {
    let t = Instant::now();
    let name = "distance scaling and limits";
    let (pr, pr2) = (params(3.0, 3.0, 0.05), params(3.0, 3.0, 0.1));
    let mut worst_ratio = 0.0f64;
    let mut worst_trip = 0.0f64;
    let mut prev = f64::INFINITY;
    let mut decreasing = true;
    for beta in [0.05, 0.1, 0.2] {
        let d = transition_distance(&TiltedPotential::new(pr, beta));
        let d2 = transition_distance(&TiltedPotential::new(pr2, beta));
        let (d, d2) = match (d, d2) {
            (Ok(a), Ok(b)) => (a, b),
            (Err(e), _) | (_, Err(e)) => return CheckOutcome::error(4, name, e, t),
        };
        worst_ratio = worst_ratio.max((d2 / d - 2.0).abs());
        decreasing &= d < prev;
        prev = d;
        match solve_beta_for_distance(&pr, d) {
            Ok(b) => worst_trip = worst_trip.max((b - beta).abs()),
            Err(e) => return CheckOutcome::error(4, name, e, t),
        }
    }
    CheckOutcome::new(
        4,
        name,
        worst_ratio <= 1e-9 && decreasing && worst_trip <= 1e-8,
        format!("|ratio - 2| <= {worst_ratio:.2e}, decreasing: {decreasing}, round trip {worst_trip:.2e}"),
        t,
    )
}

pub fn steady_residuals() -> CheckOutcome {
    let t = Instant::now();
    let name = "steady-state residuals";
    let grid = Grid::new(0.0, 1.0, 4096).expect("valid grid");
    let sub_params = params(1.5, 2.0, 0.01);
    let sub = match subcritical_steady(sub_params, grid, &[0.2, 0.5, 0.9]) {
        Ok(s) => s,
        Err(e) => return CheckOutcome::error(5, name, e, t),
    };
    let energy_err = (pcahn_core::dynamics::discrete_energy(&sub.samples, &sub_params) - 3.0 * c_p(&sub_params)).abs();
    let chain = match build_pulse_chain(params(2.0, 3.0, 0.07), grid, &[0.3, 0.7]) {
        Ok(c) => c,
        Err(e) => return CheckOutcome::error(5, name, e, t),
    };
    let residual = residual_check_away_from_junctions(&chain);
    let elapsed = t.elapsed().as_secs_f64();
    CheckOutcome::new(
        5,
        name,
        energy_err <= 1e-3 && residual <= 1e-6 && elapsed < 30.0,
        format!("|E - 3 c_p| = {energy_err:.3e}; pulse-chain residual {residual:.3e}"),
        t,
    )
}

/// The 10^4-step run behind the conservation, dissipation and energy-inequality checks.
pub fn conservation_run() -> Result<RunRecord, String> {
    let pattern = TransitionPattern::new(0.0, 1.0, vec![0.35, 0.65], -1.0, 0.1).map_err(|e| e.to_string())?;
    let setup = MetastableSetup {
        theta: 2.0,
        p: 2.0,
        grid: Grid::new(0.0, 1.0, 512).map_err(|e| e.to_string())?,
        pattern,
        mobility: MobilityModel::Mullins { d0: 1.0 },
        solver: SolverConfig {
            max_steps: Some(10_000),
            ..Default::default()
        },
        cadence: Cadence::default(),
        detection: DetectionSet::point(0.0).map_err(|e| e.to_string())?,
        delta: 0.05,
        seed_amplitude: 1e-8,
        stop_at_exit: false,
    };
    setup.run(0.06, 1e7).map(|r| r.0).map_err(|e| e.to_string())
}

/// Relative dissipation-identity error `|ΔE/dt - rhs| / |rhs|` of single steps from
/// `snapshot` at each `dt`, with the absolute mismatch.
pub fn dissipation_refinement(run: &RunRecord, snapshot: &Snapshot, dts: &[f64]) -> Result<Vec<(f64, f64, f64)>, String> {
    let state = snapshot.state(run.grid).map_err(|e| e.to_string())?;
    dts.iter()
        .map(|&dt| {
            let (_, info) =
                step_with_dt(&state, &run.params, &run.mobility, &run.config, dt).map_err(|e| e.to_string())?;
            let rate = (info.energy_after - info.energy_before) / dt;
            Ok((dt, (rate - info.dissipation_rhs).abs(), info.dissipation_rhs))
        })
        .collect()
}

pub fn conservation_and_dissipation() -> [CheckOutcome; 2] {
    let t = Instant::now();
    let (n6, n7) = ("conservation and dissipation", "energy inequality");
    let run = match conservation_run() {
        Ok(r) => r,
        Err(e) => return [CheckOutcome::error(6, n6, &e, t), CheckOutcome::error(7, n7, &e, t)],
    };
    let s = &run.summary;
    // Checkpoint: the first recorded state after the initial one. The glued datum has
    // derivative kinks at the plateau midpoints; later states dissipate at roundoff level.
    let ck = &run.snapshots[1];
    let c6 = match dissipation_refinement(&run, ck, &[1e-3, 1e-4, 1e-5]) {
        Err(e) => CheckOutcome::error(6, n6, e, t),
        Ok(rows) => {
            let (_, mismatch, rhs) = *rows.last().expect("three rows");
            let identity = mismatch <= 0.05 * rhs.abs() + 1e-12;
            let refines = rows.windows(2).all(|w| w[1].1 <= w[0].1);
            let ok = s.steps == 10_000
                && s.max_relative_mass_drift <= 1e-12
                && s.max_energy_increase <= 1e-8
                && identity
                && refines;
            let errs: Vec<String> = rows.iter().map(|r| format!("{:.1e}", r.1 / r.2.abs())).collect();
            CheckOutcome::new(
                6,
                n6,
                ok,
                format!(
                    "{} steps to t = {:.3e}; mass drift {:.2e}; max energy increase {:.2e}; identity error at t = {:.4} for dt = 1e-3..1e-5: [{}]",
                    s.steps,
                    s.final_t,
                    s.max_relative_mass_drift,
                    s.max_energy_increase,
                    ck.t,
                    errs.join(", ")
                ),
                t,
            )
        }
    };
    let e0 = s.initial_energy;
    let eps = run.params.epsilon();
    let worst = run
        .snapshots
        .iter()
        .map(|snap| snap.cumulative_dissipation - eps * (e0 - snap.energy) * s.max_mobility * 1.05)
        .fold(f64::NEG_INFINITY, f64::max);
    let last = run.snapshots.last().expect("final snapshot");
    let c7 = CheckOutcome::new(
        7,
        n7,
        worst <= 0.0,
        format!(
            "final cumulative dissipation {:.4e} vs bound {:.4e}; worst slack {:.2e}",
            last.cumulative_dissipation,
            eps * (e0 - last.energy) * s.max_mobility * 1.05,
            worst
        ),
        t,
    );
    [c6, c7]
}

/// Max error of the discrete `μ` of `cos(πx)` against the exact chemical potential.
pub fn manufactured_mu_error(n: usize) -> f64 {
    let pr = params(2.0, 2.0, 0.1);
    let grid = Grid::new(0.0, 1.0, n).expect("valid grid");
    let pi = std::f64::consts::PI;
    let u = Field::from_fn(grid, |x| (pi * x).cos()).expect("finite");
    let mu = chemical_potential(&u, &pr);
    grid.nodes()
        .zip(mu.values())
        .map(|(x, m)| {
            let c = (pi * x).cos();
            (m - (pr.epsilon().powi(2) * pi * pi * c + pr.df(c))).abs()
        })
        .fold(0.0, f64::max)
}

pub fn spatial_order(n: usize) -> CheckOutcome {
    let t = Instant::now();
    let name = "spatial order";
    if n < 64 {
        return CheckOutcome {
            id: 8,
            name: name.into(),
            status: Status::Skipped(format!("grid too coarse: n = {n} < 64")),
            detail: String::new(),
            seconds: 0.0,
        };
    }
    let (coarse, fine) = (manufactured_mu_error(n), manufactured_mu_error(2 * n));
    let order = (coarse / fine).log2();
    CheckOutcome::new(
        8,
        name,
        order >= 1.8,
        format!("n = {n} -> {}: errors {coarse:.3e} -> {fine:.3e}, order {order:.3}", 2 * n),
        t,
    )
}

/// Geometry of the metastable sweeps: layers at 0.35 and 0.65, `r = 0.1`, `δ = r/2`, zero
/// level set tracked.
pub fn metastable_setup(theta: f64) -> MetastableSetup {
    MetastableSetup {
        theta,
        p: 2.0,
        grid: Grid::new(0.0, 1.0, 512).expect("valid grid"),
        pattern: TransitionPattern::new(0.0, 1.0, vec![0.35, 0.65], -1.0, 0.1).expect("valid pattern"),
        mobility: MobilityModel::Constant { value: 1.0 },
        solver: SolverConfig::default(),
        cadence: Cadence::default(),
        detection: DetectionSet::point(0.0).expect("valid set"),
        delta: 0.05,
        seed_amplitude: 1e-8,
        stop_at_exit: true,
    }
}

pub const SWEEP_EPSILONS: [f64; 4] = [0.10, 0.08, 0.07, 0.06];

fn describe(rows: &[ExitRow]) -> String {
    rows.iter()
        .map(|r| format!("{}: {:.4e}{}", r.epsilon, r.t_exit, if r.censored_flag { " (censored)" } else { "" }))
        .collect::<Vec<_>>()
        .join(", ")
}

fn fits(rows: &[ExitRow]) -> Result<(ScalingFit, ScalingFit), String> {
    Ok((
        fit(rows, FitModel::Exponential).map_err(|e| e.to_string())?,
        fit(rows, FitModel::Algebraic).map_err(|e| e.to_string())?,
    ))
}

/// Uncensored exit times strictly increase as `ε` decreases (rows sorted by decreasing `ε`).
fn increasing(rows: &[ExitRow]) -> bool {
    let mut sorted: Vec<&ExitRow> = rows.iter().filter(|r| !r.censored_flag).collect();
    sorted.sort_by(|a, b| b.epsilon.total_cmp(&a.epsilon));
    sorted.windows(2).all(|w| w[1].t_exit > w[0].t_exit)
}

pub fn metastable_critical(workers: usize) -> [CheckOutcome; 2] {
    let t = Instant::now();
    let (n9, n11) = ("metastable scaling, critical", "lower-bound gap tracking");
    let setup = metastable_setup(2.0);
    let result = match sweep(&setup, &SWEEP_EPSILONS, TMaxRule::Constant { t_max: 1e7 }, workers) {
        Ok(r) => r,
        Err(e) => return [CheckOutcome::error(9, n9, &e, t), CheckOutcome::error(11, n11, &e, t)],
    };
    let c9 = if !result.failures.is_empty() {
        CheckOutcome::error(9, n9, format!("{:?}", result.failures), t)
    } else {
        match fits(&result.rows) {
            Err(e) => CheckOutcome::error(9, n9, format!("{e}; exit times {}", describe(&result.rows)), t),
            Ok((exp, alg)) => {
                let inc = increasing(&result.rows);
                CheckOutcome::new(
                    9,
                    n9,
                    inc && exp.r_squared >= 0.95 && exp.exponent > 0.0 && exp.r_squared > alg.r_squared,
                    format!(
                        "exit times {}; exponential r2 = {:.4}, A_fit = {:.4}; algebraic r2 = {:.4}",
                        describe(&result.rows),
                        exp.r_squared,
                        exp.exponent,
                        alg.r_squared
                    ),
                    t,
                )
            }
        }
    };
    let t11 = Instant::now();
    let c11 = match result.rows.iter().position(|r| r.epsilon == 0.08) {
        None => CheckOutcome::error(11, n11, "run at epsilon = 0.08 missing", t11),
        Some(i) => {
            let (row, run) = (&result.rows[i], &result.records[i]);
            let target = 2.0 * c_p(&run.params);
            let gaps: Vec<f64> = run
                .snapshots
                .iter()
                .filter(|s| row.censored_flag || s.t < row.t_exit)
                .map(|s| s.energy - target)
                .collect();
            let g0 = gaps[0];
            let lowest = gaps.iter().copied().fold(f64::INFINITY, f64::min);
            CheckOutcome::new(
                11,
                n11,
                lowest >= -2.0 * g0.abs(),
                format!(
                    "initial gap {g0:.4e}, lowest gap {lowest:.4e} over {} snapshots before exit",
                    gaps.len()
                ),
                t11,
            )
        }
    };
    [c9, c11]
}

pub fn metastable_supercritical(workers: usize) -> CheckOutcome {
    let t = Instant::now();
    let name = "metastable scaling, supercritical";
    let setup = metastable_setup(4.0);
    let result = match sweep(&setup, &SWEEP_EPSILONS, TMaxRule::Constant { t_max: 1e7 }, workers) {
        Ok(r) => r,
        Err(e) => return CheckOutcome::error(10, name, e, t),
    };
    if !result.failures.is_empty() {
        return CheckOutcome::error(10, name, format!("{:?}", result.failures), t);
    }
    match fits(&result.rows) {
        Err(e) => CheckOutcome::error(10, name, format!("{e}; exit times {}", describe(&result.rows)), t),
        Ok((exp, alg)) => CheckOutcome::new(
            10,
            name,
            alg.r_squared >= 0.95 && alg.exponent > 0.0 && alg.r_squared > exp.r_squared,
            format!(
                "exit times {}; algebraic r2 = {:.4}, k_fit = {:.4}; exponential r2 = {:.4}",
                describe(&result.rows),
                alg.r_squared,
                alg.exponent,
                exp.r_squared
            ),
            t,
        ),
    }
}

fn random_set(rng: &mut StdRng) -> InterfaceSet {
    let k = rng.random_range(1..=3);
    InterfaceSet::from_intervals(
        (0..k)
            .map(|_| {
                let lo: f64 = rng.random_range(0.0..1.0);
                // About a third are points.
                let w = if rng.random_bool(0.3) { 0.0 } else { rng.random_range(0.0..0.2) };
                (lo, (lo + w).min(1.0))
            })
            .collect(),
    )
}

/// Hausdorff distance between 10^3-point samplings of the two sets.
pub fn sampled_hausdorff(a: &InterfaceSet, b: &InterfaceSet) -> f64 {
    let sample = |s: &InterfaceSet| -> Vec<f64> {
        let total: f64 = s.intervals.iter().map(|(lo, hi)| hi - lo).sum();
        let mut pts = Vec::new();
        for &(lo, hi) in &s.intervals {
            let k = if total > 0.0 { ((1000.0 * (hi - lo) / total).ceil() as usize).max(1) } else { 1 };
            pts.extend((0..=k).map(|i| lo + (hi - lo) * i as f64 / k as f64));
        }
        pts
    };
    let directed = |xs: &[f64], ys: &[f64]| {
        xs.iter()
            .map(|x| ys.iter().map(|y| (x - y).abs()).fold(f64::INFINITY, f64::min))
            .fold(0.0, f64::max)
    };
    let (pa, pb) = (sample(a), sample(b));
    directed(&pa, &pb).max(directed(&pb, &pa))
}

/// Record whose zero level jumps from 0.3 to 0.5 between snapshots 5 and 6.
pub fn scripted_jump_record() -> RunRecord {
    let grid = Grid::new(0.0, 1.0, 400).expect("valid grid");
    let layer = |c: f64| Field::from_fn(grid, |x| ((x - c) / 0.03).tanh()).expect("finite");
    let snapshots: Vec<Snapshot> = (0..=10)
        .map(|k| Snapshot {
            t: k as f64,
            step_count: k,
            last_dt: 1.0,
            next_dt: 1.0,
            last_change: 0.0,
            cumulative_dissipation: 0.0,
            energy: 0.0,
            values: layer(if k < 6 { 0.3 } else { 0.5 }).values().to_vec(),
        })
        .collect();
    RunRecord {
        params: params(2.0, 2.0, 0.02),
        grid,
        mobility: MobilityModel::Constant { value: 1.0 },
        config: SolverConfig::default(),
        cadence: Cadence::default(),
        series: Vec::new(),
        snapshots,
        summary: RunSummary {
            steps: 10,
            rejections: 0,
            final_t: 10.0,
            initial_energy: 0.0,
            final_energy: 0.0,
            max_energy_increase: 0.0,
            max_relative_mass_drift: 0.0,
            max_mobility: 1.0,
            min_dt: 1.0,
            max_dt: 1.0,
            stop: StopReason::TMax,
        },
    }
}

pub fn interface_machinery(seed: u64) -> CheckOutcome {
    let t = Instant::now();
    let name = "interface machinery";
    let mut rng = StdRng::seed_from_u64(seed);
    let worst = (0..100)
        .map(|_| {
            let (a, b) = (random_set(&mut rng), random_set(&mut rng));
            (set_distance(&a, &b).value - sampled_hausdorff(&a, &b)).abs()
        })
        .fold(0.0, f64::max);
    let run = scripted_jump_record();
    let exit = exit_time(&run, &DetectionSet::point(0.0).expect("valid set"), 0.05);
    let (exit_ok, exit_text) = match exit {
        // The scripted jump happens between t = 5 and t = 6.
        Ok(e) => (!e.is_censored() && (e.value() - 5.5).abs() <= 1.0, format!("{:.4}", e.value())),
        Err(e) => (false, e.to_string()),
    };
    let elapsed = t.elapsed().as_secs_f64();
    CheckOutcome::new(
        12,
        name,
        worst <= 2e-3 && exit_ok && elapsed < 10.0,
        format!("max |d - sampled| = {worst:.2e} over 100 instances; scripted exit at {exit_text} (jump in (5, 6))"),
        t,
    )
}

pub fn exponent_arithmetic() -> CheckOutcome {
    let t = Instant::now();
    let name = "exponent arithmetic";
    let table = match exponent_table(&params(4.0, 2.0, 0.1), 40) {
        Ok(x) => x,
        Err(e) => return CheckOutcome::error(13, name, e, t),
    };
    let exact = table.alpha == 0.75 && table.gamma == 3.0 && table.k[2] == 1.3125;
    let gap = table.gamma - table.k[39];
    let bound = table.alpha.powi(39) * table.gamma;
    CheckOutcome::new(
        13,
        name,
        exact && gap.abs() <= bound,
        format!(
            "alpha = {}, gamma = {}, k_3 = {}; gamma - k_40 = {gap:.6e} vs alpha^39 gamma = {bound:.6e}",
            table.alpha, table.gamma, table.k[2]
        ),
        t,
    )
}
