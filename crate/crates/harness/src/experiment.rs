//! Layered-datum simulations and ε-sweeps shared by the commands and the checks.

use pcahn_core::dynamics::{evolve, Cadence, MobilityModel, RunRecord, SimState, SolverConfig};
use pcahn_core::field::{Field, Grid};
use pcahn_core::metastability::{
    asymmetric_seed, exit_monitor, exit_time, layered_initial, DetectionSet, ExitRow, ExitTime,
    TransitionPattern,
};
use pcahn_core::potential::PotentialParams;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, TMaxRule};
use crate::error::{HarnessError, Result};

/// Everything that fixes a metastable run apart from `ε` and `t_max`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetastableSetup {
    pub theta: f64,
    pub p: f64,
    pub grid: Grid,
    pub pattern: TransitionPattern,
    pub mobility: MobilityModel,
    pub solver: SolverConfig,
    pub cadence: Cadence,
    pub detection: DetectionSet,
    pub delta: f64,
    pub seed_amplitude: f64,
    pub stop_at_exit: bool,
}

impl MetastableSetup {
    pub fn from_config(cfg: &ExperimentConfig) -> Result<Self> {
        let pattern = cfg.require_pattern()?.clone();
        if pattern.a() != cfg.grid.a() || pattern.b() != cfg.grid.b() {
            return Err(HarnessError::config(0, "pattern domain differs from [domain]"));
        }
        let delta = cfg.sweep.delta.unwrap_or_else(|| pattern.default_delta());
        Ok(Self {
            theta: cfg.model.theta,
            p: cfg.model.p,
            grid: cfg.grid,
            pattern,
            mobility: cfg.model.mobility,
            solver: cfg.solver,
            cadence: cfg.cadence,
            detection: cfg.sweep.detection.clone(),
            delta,
            seed_amplitude: cfg.sweep.seed_amplitude,
            stop_at_exit: cfg.sweep.stop_at_exit,
        })
    }

    pub fn params(&self, epsilon: f64) -> Result<PotentialParams> {
        PotentialParams::new(self.theta, self.p, epsilon).map_err(HarnessError::numerical)
    }

    /// Seeded layered datum at `ε`.
    pub fn initial(&self, epsilon: f64) -> Result<Field> {
        let params = self.params(epsilon)?;
        let u = layered_initial(&self.pattern, &params, self.grid).map_err(HarnessError::numerical)?;
        Ok(asymmetric_seed(&u, self.seed_amplitude))
    }

    /// Runs from the seeded datum to `t_max` (or the exit event) and measures the exit time.
    pub fn run(&self, epsilon: f64, t_max: f64) -> Result<(RunRecord, ExitTime)> {
        let params = self.params(epsilon)?;
        let u0 = self.initial(epsilon)?;
        let config = SolverConfig { t_max, ..self.solver };
        let mut monitor = exit_monitor(&u0, self.detection.clone(), self.delta);
        let mut never = |_: &SimState| false;
        let stop: &mut dyn FnMut(&SimState) -> bool = if self.stop_at_exit { &mut monitor } else { &mut never };
        let record = evolve(SimState::new(u0, &config), &params, &self.mobility, &config, &self.cadence, stop)
            .map_err(HarnessError::numerical)?;
        let exit = exit_time(&record, &self.detection, self.delta).map_err(HarnessError::numerical)?;
        Ok((record, exit))
    }

    pub fn row(&self, epsilon: f64, t_max: f64, exit: ExitTime) -> ExitRow {
        let (k_lo, k_hi) = self.detection.hull();
        ExitRow {
            theta: self.theta,
            p: self.p,
            epsilon,
            n: self.pattern.n_layers(),
            delta: self.delta,
            k_lo,
            k_hi,
            t_exit: exit.value(),
            censored_flag: exit.is_censored(),
            t_max,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepFailure {
    pub epsilon: f64,
    pub error: String,
}

pub struct SweepResult {
    /// In the order of the requested `ε` list.
    pub rows: Vec<ExitRow>,
    pub failures: Vec<SweepFailure>,
    /// Records of successful runs, aligned with `rows`.
    pub records: Vec<RunRecord>,
}

/// Independent runs on a pool of `workers` threads; a failing run is recorded and skipped.
pub fn sweep(setup: &MetastableSetup, epsilons: &[f64], rule: TMaxRule, workers: usize) -> Result<SweepResult> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| HarnessError::Usage(e.to_string()))?;
    let outcomes: Vec<(f64, f64, Result<(RunRecord, ExitTime)>)> = pool.install(|| {
        epsilons
            .par_iter()
            .map(|&eps| {
                let t_max = rule.t_max(eps, setup.p);
                (eps, t_max, setup.run(eps, t_max))
            })
            .collect()
    });
    let mut result = SweepResult {
        rows: Vec::new(),
        failures: Vec::new(),
        records: Vec::new(),
    };
    for (eps, t_max, outcome) in outcomes {
        match outcome {
            Ok((record, exit)) => {
                result.rows.push(setup.row(eps, t_max, exit));
                result.records.push(record);
            }
            Err(e) => result.failures.push(SweepFailure {
                epsilon: eps,
                error: e.to_string(),
            }),
        }
    }
    Ok(result)
}
