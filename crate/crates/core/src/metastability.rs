//! Layered initial data, interface tracking, exit times, the supercritical exponent
//! recurrence and scaling-law fits for exit times.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{discrete_energy, RunRecord, SimState};
use crate::field::{antiderivative, Field, FieldError, Grid};
use crate::phaseplane::{heteroclinic_profile, PhaseplaneError};
use crate::potential::{c_p, PotentialError, PotentialParams, Regime};

/// Values within this distance of `±1` are clamped onto the plateau.
pub const PLATEAU_CLAMP: f64 = 1e-14;

#[derive(Debug, Error)]
pub enum MetastabilityError {
    #[error("invalid transition pattern: {0}")]
    InvalidPattern(String),
    #[error("transition overlap: layers at spacing {spacing} need a width of {needed} at epsilon = {epsilon}")]
    TransitionOverlap { spacing: f64, needed: f64, epsilon: f64 },
    #[error("detection set must be a finite union of closed intervals avoiding ±1: {0}")]
    InvalidDetectionSet(String),
    #[error("run has no snapshots to track interfaces on")]
    MissingInterfaceData,
    #[error("supercritical exponents undefined for theta <= p (theta = {theta}, p = {p})")]
    SupercriticalUndefined { theta: f64, p: f64 },
    #[error("insufficient data: {used} uncensored rows, at least 3 needed")]
    InsufficientData { used: usize },
    #[error("exit-time table line {line}: {message}")]
    Table { line: usize, message: String },
    #[error(transparent)]
    Phaseplane(#[from] PhaseplaneError),
    #[error(transparent)]
    Potential(#[from] PotentialError),
    #[error(transparent)]
    Field(#[from] FieldError),
}

/// Piecewise-constant `±1` target with jumps `h_1 < … < h_N` and separation radius `r`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionPattern {
    a: f64,
    b: f64,
    jumps: Vec<f64>,
    first_sign: f64,
    r: f64,
}

impl TransitionPattern {
    pub fn new(a: f64, b: f64, jumps: Vec<f64>, first_sign: f64, r: f64) -> Result<Self, MetastabilityError> {
        let bad = |m: String| Err(MetastabilityError::InvalidPattern(m));
        if !(a < b) {
            return bad(format!("need a < b, got [{a}, {b}]"));
        }
        if first_sign != 1.0 && first_sign != -1.0 {
            return bad(format!("first plateau sign must be ±1, got {first_sign}"));
        }
        if jumps.is_empty() {
            return bad("at least one jump required".into());
        }
        if !(r > 0.0) {
            return bad(format!("separation radius must be positive, got {r}"));
        }
        for w in jumps.windows(2) {
            if !(w[1] > w[0]) {
                return bad("jumps must be strictly increasing".into());
            }
            if !(r < 0.5 * (w[1] - w[0])) {
                return bad(format!("r = {r} must be below half the gap {}", w[1] - w[0]));
            }
        }
        if jumps[0] - r < a || jumps[jumps.len() - 1] + r > b {
            return bad(format!("jumps must stay r = {r} away from the boundary"));
        }
        Ok(Self {
            a,
            b,
            jumps,
            first_sign,
            r,
        })
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn jumps(&self) -> &[f64] {
        &self.jumps
    }

    pub fn n_layers(&self) -> usize {
        self.jumps.len()
    }

    pub fn first_sign(&self) -> f64 {
        self.first_sign
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    /// Default exit threshold `r / 2`.
    pub fn default_delta(&self) -> f64 {
        0.5 * self.r
    }

    pub fn negated(&self) -> Self {
        Self {
            first_sign: -self.first_sign,
            ..self.clone()
        }
    }

    /// Value of `v` at `x` (right-continuous at jumps).
    pub fn v(&self, x: f64) -> f64 {
        let k = self.jumps.iter().filter(|&&h| h <= x).count();
        if k % 2 == 0 {
            self.first_sign
        } else {
            -self.first_sign
        }
    }

    pub fn v_field(&self, grid: Grid) -> Result<Field, FieldError> {
        Field::from_fn(grid, |x| self.v(x))
    }

    fn check_grid(&self, grid: &Grid) -> Result<(), MetastabilityError> {
        if grid.a() != self.a || grid.b() != self.b {
            return Err(MetastabilityError::InvalidPattern(format!(
                "grid [{}, {}] does not match pattern domain [{}, {}]",
                grid.a(),
                grid.b(),
                self.a,
                self.b
            )));
        }
        Ok(())
    }
}

/// Translated heteroclinics glued at plateau midpoints, alternating in sign, with values
/// within [`PLATEAU_CLAMP`] of `±1` clamped onto the plateau.
///
/// Transition cores of width `3ε` must neither overlap each other nor leave the domain
/// (touching is allowed).
pub fn layered_initial(
    pattern: &TransitionPattern,
    params: &PotentialParams,
    grid: Grid,
) -> Result<Field, MetastabilityError> {
    pattern.check_grid(&grid)?;
    let eps = params.epsilon();
    let h = pattern.jumps();
    let mut spacing = f64::INFINITY;
    for w in h.windows(2) {
        spacing = spacing.min(w[1] - w[0]);
    }
    spacing = spacing.min(2.0 * (h[0] - pattern.a)).min(2.0 * (pattern.b - h[h.len() - 1]));
    if 3.0 * eps > spacing * (1.0 + 1e-12) {
        return Err(MetastabilityError::TransitionOverlap {
            spacing,
            needed: 3.0 * eps,
            epsilon: eps,
        });
    }
    let profile = heteroclinic_profile(*params, 64)?;
    let values = grid
        .nodes()
        .map(|x| {
            // Nearest layer, with cell boundaries at plateau midpoints.
            let i = h.windows(2).take_while(|w| x >= 0.5 * (w[0] + w[1])).count();
            let left_sign = if i % 2 == 0 {
                pattern.first_sign
            } else {
                -pattern.first_sign
            };
            let u = -left_sign * profile.eval(x - h[i]);
            if (u - 1.0).abs() < PLATEAU_CLAMP {
                1.0
            } else if (u + 1.0).abs() < PLATEAU_CLAMP {
                -1.0
            } else {
                u
            }
        })
        .collect();
    Ok(Field::new(grid, values)?)
}

/// Adds `amplitude · cos(π (x - a) / (b - a))` and removes the discrete mean of the added
/// term, so mass is unchanged. The mode is odd about the midpoint and satisfies `u_x = 0`
/// at both ends; it breaks the mirror symmetry of symmetric layer patterns deterministically.
pub fn asymmetric_seed(u: &Field, amplitude: f64) -> Field {
    let g = *u.grid();
    let mode: Vec<f64> = g
        .nodes()
        .map(|x| (std::f64::consts::PI * (x - g.a()) / g.length()).cos())
        .collect();
    let mean = mode.iter().sum::<f64>() / mode.len() as f64;
    let values = u
        .values()
        .iter()
        .zip(&mode)
        .map(|(v, m)| v + amplitude * (m - mean))
        .collect();
    Field::new(g, values).expect("finite seed")
}

/// Closed set `K ⊂ ℝ∖{±1}` as a union of closed intervals (degenerate points allowed).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionSet {
    intervals: Vec<(f64, f64)>,
}

impl DetectionSet {
    pub fn new(mut intervals: Vec<(f64, f64)>) -> Result<Self, MetastabilityError> {
        if intervals.is_empty() {
            return Err(MetastabilityError::InvalidDetectionSet("empty".into()));
        }
        for &(lo, hi) in &intervals {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(MetastabilityError::InvalidDetectionSet(format!("[{lo}, {hi}]")));
            }
            if (lo <= 1.0 && 1.0 <= hi) || (lo <= -1.0 && -1.0 <= hi) {
                return Err(MetastabilityError::InvalidDetectionSet(format!(
                    "[{lo}, {hi}] contains a well"
                )));
            }
        }
        intervals.sort_by(|x, y| x.0.total_cmp(&y.0));
        Ok(Self { intervals })
    }

    pub fn interval(lo: f64, hi: f64) -> Result<Self, MetastabilityError> {
        Self::new(vec![(lo, hi)])
    }

    pub fn point(v: f64) -> Result<Self, MetastabilityError> {
        Self::new(vec![(v, v)])
    }

    /// `K = [-0.9, 0.9]`.
    pub fn default_set() -> Self {
        Self {
            intervals: vec![(-0.9, 0.9)],
        }
    }

    pub fn intervals(&self) -> &[(f64, f64)] {
        &self.intervals
    }

    pub fn contains(&self, v: f64) -> bool {
        self.intervals.iter().any(|&(lo, hi)| lo <= v && v <= hi)
    }

    /// Lowest and highest points of `K`.
    pub fn hull(&self) -> (f64, f64) {
        let lo = self.intervals.iter().map(|i| i.0).fold(f64::INFINITY, f64::min);
        let hi = self.intervals.iter().map(|i| i.1).fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    }
}

/// Sorted, pairwise disjoint closed intervals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterfaceSet {
    pub intervals: Vec<(f64, f64)>,
}

impl InterfaceSet {
    /// Sorts and merges overlapping or touching intervals.
    pub fn from_intervals(mut raw: Vec<(f64, f64)>) -> Self {
        raw.sort_by(|x, y| x.0.total_cmp(&y.0));
        let mut out: Vec<(f64, f64)> = Vec::with_capacity(raw.len());
        for (lo, hi) in raw {
            match out.last_mut() {
                Some(last) if lo <= last.1 => last.1 = last.1.max(hi),
                _ => out.push((lo, hi)),
            }
        }
        Self { intervals: out }
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    /// Distance from `x` to the set (`+∞` if empty).
    pub fn dist_to(&self, x: f64) -> f64 {
        self.intervals
            .iter()
            .map(|&(lo, hi)| if x < lo { lo - x } else if x > hi { x - hi } else { 0.0 })
            .fold(f64::INFINITY, f64::min)
    }
}

/// Preimage `u⁻¹(K)` of the piecewise-linear interpolant through the nodes, extended as
/// a constant to the outer half cells.
pub fn interfaces_of(u: &Field, k: &DetectionSet) -> InterfaceSet {
    let g = *u.grid();
    let v = u.values();
    let n = v.len();
    let mut raw = Vec::new();
    if k.contains(v[0]) {
        raw.push((g.a(), g.node(0)));
    }
    if k.contains(v[n - 1]) {
        raw.push((g.node(n - 1), g.b()));
    }
    for i in 0..n - 1 {
        let (x0, x1) = (g.node(i), g.node(i + 1));
        let (u0, u1) = (v[i], v[i + 1]);
        for &(lo, hi) in k.intervals() {
            if u0 == u1 {
                if lo <= u0 && u0 <= hi {
                    raw.push((x0, x1));
                }
                continue;
            }
            // Parameter range s ∈ [0, 1] where u0 + s (u1 - u0) ∈ [lo, hi].
            let (sa, sb) = ((lo - u0) / (u1 - u0), (hi - u0) / (u1 - u0));
            let (s_lo, s_hi) = (sa.min(sb).max(0.0), sa.max(sb).min(1.0));
            if s_lo <= s_hi {
                raw.push((x0 + s_lo * (x1 - x0), x0 + s_hi * (x1 - x0)));
            }
        }
    }
    InterfaceSet::from_intervals(raw)
}

/// Hausdorff distance between interface sets, or `+∞` (flagged) if either is empty.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SetDistance {
    pub value: f64,
    pub empty_interface: bool,
}

fn directed(a: &InterfaceSet, b: &InterfaceSet) -> f64 {
    let mut best = 0.0f64;
    for &(lo, hi) in &a.intervals {
        best = best.max(b.dist_to(lo)).max(b.dist_to(hi));
        // The distance to `b` peaks at midpoints of gaps of `b`.
        for w in b.intervals.windows(2) {
            let mid = 0.5 * (w[0].1 + w[1].0);
            if lo < mid && mid < hi {
                best = best.max(b.dist_to(mid));
            }
        }
    }
    best
}

pub fn set_distance(a: &InterfaceSet, b: &InterfaceSet) -> SetDistance {
    if a.is_empty() || b.is_empty() {
        return SetDistance {
            value: f64::INFINITY,
            empty_interface: true,
        };
    }
    SetDistance {
        value: directed(a, b).max(directed(b, a)),
        empty_interface: false,
    }
}

/// Distance of `I_K[u]` from a reference set, with both-empty counted as no motion.
fn drift(reference: &InterfaceSet, u: &Field, k: &DetectionSet) -> f64 {
    let now = interfaces_of(u, k);
    if reference.is_empty() && now.is_empty() {
        0.0
    } else {
        set_distance(reference, &now).value
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum ExitTime {
    Exit { t: f64 },
    /// The distance never exceeded `δ`; `t_max` is only a lower bound.
    Censored { t_max: f64 },
}

impl ExitTime {
    pub fn value(&self) -> f64 {
        match *self {
            ExitTime::Exit { t } => t,
            ExitTime::Censored { t_max } => t_max,
        }
    }

    pub fn is_censored(&self) -> bool {
        matches!(self, ExitTime::Censored { .. })
    }
}

/// First time `d(I_K[u(t)], I_K[u(0)]) > δ`, interpolated linearly between snapshots.
pub fn exit_time(run: &RunRecord, k: &DetectionSet, delta: f64) -> Result<ExitTime, MetastabilityError> {
    let first = run.snapshots.first().ok_or(MetastabilityError::MissingInterfaceData)?;
    let reference = interfaces_of(&first.field(run.grid)?, k);
    let mut prev = (first.t, 0.0);
    for snap in &run.snapshots[1..] {
        let d = drift(&reference, &snap.field(run.grid)?, k);
        if d > delta {
            let t = if d.is_finite() && d > prev.1 {
                prev.0 + (delta - prev.1) / (d - prev.1) * (snap.t - prev.0)
            } else {
                snap.t
            };
            return Ok(ExitTime::Exit { t });
        }
        prev = (snap.t, d);
    }
    Ok(ExitTime::Censored {
        t_max: run.summary.final_t,
    })
}

/// Stop predicate for `evolve` that fires once the interfaces drift beyond `δ`.
pub fn exit_monitor(initial: &Field, k: DetectionSet, delta: f64) -> impl FnMut(&SimState) -> bool {
    let reference = interfaces_of(initial, &k);
    move |s: &SimState| drift(&reference, &s.u, &k) > delta
}

/// `α = (p-1)/p + 1/θ`, `k_1 = 0`, `k_{m+1} = α (k_m + 1)`, limit `γ = θp/(θ-p) - 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExponentTable {
    pub alpha: f64,
    pub k: Vec<f64>,
    pub gamma: f64,
}

pub fn exponent_table(params: &PotentialParams, m: usize) -> Result<ExponentTable, MetastabilityError> {
    let (theta, p) = (params.theta(), params.p());
    if params.regime() != Regime::Supercritical {
        return Err(MetastabilityError::SupercriticalUndefined { theta, p });
    }
    let alpha = (p - 1.0) / p + 1.0 / theta;
    let mut k = Vec::with_capacity(m);
    let mut km = 0.0;
    for _ in 0..m {
        k.push(km);
        km = alpha * (km + 1.0);
    }
    Ok(ExponentTable {
        alpha,
        k,
        gamma: theta * p / (theta - p) - 1.0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    /// `E_ε[u] - N c_p`.
    pub gap: f64,
    /// `‖ũ - ṽ‖_{L¹}`.
    pub antiderivative_distance: f64,
    /// Whether `antiderivative_distance ≤ δ̂`.
    pub hypothesis_holds: bool,
}

/// Signed energy gap of `u` above `N c_p`, with the closeness hypothesis checked against `δ̂`.
pub fn lower_bound_gap(
    u: &Field,
    pattern: &TransitionPattern,
    params: &PotentialParams,
    delta_hat: f64,
) -> Result<GapReport, MetastabilityError> {
    pattern.check_grid(u.grid())?;
    let v = pattern.v_field(*u.grid())?;
    let dist = antiderivative(u).l1_dist(&antiderivative(&v))?;
    let gap = discrete_energy(u, params) - pattern.n_layers() as f64 * c_p(params);
    Ok(GapReport {
        gap,
        antiderivative_distance: dist,
        hypothesis_holds: dist <= delta_hat,
    })
}

/// One row of an exit-time table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExitRow {
    pub theta: f64,
    pub p: f64,
    pub epsilon: f64,
    #[serde(rename = "N")]
    pub n: usize,
    pub delta: f64,
    #[serde(rename = "K_lo")]
    pub k_lo: f64,
    #[serde(rename = "K_hi")]
    pub k_hi: f64,
    pub t_exit: f64,
    pub censored_flag: bool,
    pub t_max: f64,
}

pub fn write_exit_table<W: Write>(out: W, rows: &[ExitRow]) -> Result<(), MetastabilityError> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(|e| MetastabilityError::Table {
            line: 0,
            message: e.to_string(),
        })?;
    }
    w.flush().map_err(FieldError::from)?;
    Ok(())
}

pub fn read_exit_table<R: Read>(input: R) -> Result<Vec<ExitRow>, MetastabilityError> {
    let mut r = csv::Reader::from_reader(input);
    let mut rows = Vec::new();
    for (i, row) in r.deserialize().enumerate() {
        rows.push(row.map_err(|e: csv::Error| MetastabilityError::Table {
            line: e.position().map_or(i + 2, |p| p.line() as usize),
            message: e.to_string(),
        })?);
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitModel {
    /// `log T` against `1/ε`.
    Exponential,
    /// `log T` against `log(1/ε)`.
    Algebraic,
}

impl std::str::FromStr for FitModel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "exponential" => Ok(FitModel::Exponential),
            "algebraic" => Ok(FitModel::Algebraic),
            _ => Err(format!("unknown fit model '{s}' (expected exponential or algebraic)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub model: FitModel,
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// `2 slope / p` for the exponential model, `slope` for the algebraic one.
    pub exponent: f64,
    pub used: usize,
    pub censored: usize,
}

/// Least squares on the transformed axes, skipping censored rows.
pub fn fit(rows: &[ExitRow], model: FitModel) -> Result<ScalingFit, MetastabilityError> {
    let used: Vec<&ExitRow> = rows.iter().filter(|r| !r.censored_flag).collect();
    if used.len() < 3 {
        return Err(MetastabilityError::InsufficientData { used: used.len() });
    }
    let xs: Vec<f64> = used
        .iter()
        .map(|r| match model {
            FitModel::Exponential => 1.0 / r.epsilon,
            FitModel::Algebraic => (1.0 / r.epsilon).ln(),
        })
        .collect();
    let ys: Vec<f64> = used.iter().map(|r| r.t_exit.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    if sxx == 0.0 {
        return Err(MetastabilityError::InsufficientData { used: 1 });
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| {
            let e = y - (intercept + slope * x);
            e * e
        })
        .sum();
    let r_squared = if syy == 0.0 {
        1.0
    } else {
        (1.0 - ss_res / syy).clamp(0.0, 1.0)
    };
    let p = used[0].p;
    Ok(ScalingFit {
        model,
        slope,
        intercept,
        r_squared,
        exponent: match model {
            FitModel::Exponential => 2.0 * slope / p,
            FitModel::Algebraic => slope,
        },
        used: used.len(),
        censored: rows.len() - used.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{Cadence, MobilityModel, RunSummary, Snapshot, SolverConfig, StopReason};
    use crate::field::l1_dist;

    fn params(theta: f64, eps: f64) -> PotentialParams {
        PotentialParams::new(theta, 2.0, eps).unwrap()
    }

    fn points(xs: &[f64]) -> InterfaceSet {
        InterfaceSet::from_intervals(xs.iter().map(|&x| (x, x)).collect())
    }

    fn tanh_layer(grid: Grid, center: f64, eps: f64) -> Field {
        Field::from_fn(grid, |x| ((x - center) / (std::f64::consts::SQRT_2 * eps)).tanh()).unwrap()
    }

    fn scripted_record(fields: Vec<(f64, Field)>) -> RunRecord {
        let grid = *fields[0].1.grid();
        let snapshots: Vec<Snapshot> = fields
            .iter()
            .enumerate()
            .map(|(k, (t, u))| Snapshot {
                t: *t,
                step_count: k as u64,
                last_dt: 1.0,
                next_dt: 1.0,
                last_change: 0.0,
                cumulative_dissipation: 0.0,
                energy: 0.0,
                values: u.values().to_vec(),
            })
            .collect();
        let final_t = snapshots.last().unwrap().t;
        RunRecord {
            params: params(2.0, 0.05),
            grid,
            mobility: MobilityModel::Constant { value: 1.0 },
            config: SolverConfig::default(),
            cadence: Cadence::default(),
            series: Vec::new(),
            snapshots,
            summary: RunSummary {
                steps: fields.len() as u64,
                rejections: 0,
                final_t,
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

    #[test]
    fn pattern_validation() {
        assert!(TransitionPattern::new(0.0, 1.0, vec![0.3, 0.7], 1.0, 0.1).is_ok());
        assert!(TransitionPattern::new(0.0, 1.0, vec![0.3, 0.7], 1.0, 0.2).is_err());
        assert!(TransitionPattern::new(0.0, 1.0, vec![0.7, 0.3], 1.0, 0.1).is_err());
        assert!(TransitionPattern::new(0.0, 1.0, vec![0.05], 1.0, 0.1).is_err());
        assert!(TransitionPattern::new(0.0, 1.0, vec![0.5], 0.5, 0.1).is_err());
        assert!(TransitionPattern::new(0.0, 1.0, vec![], 1.0, 0.1).is_err());
        let pat = TransitionPattern::new(0.0, 1.0, vec![0.3, 0.7], -1.0, 0.1).unwrap();
        assert_eq!(pat.default_delta(), 0.05);
        assert_eq!((pat.v(0.1), pat.v(0.3), pat.v(0.5), pat.v(0.9)), (-1.0, 1.0, 1.0, -1.0));
    }

    #[test]
    fn single_layer_energy_matches_transition_cost() {
        let pr = params(2.0, 0.04);
        let grid = Grid::new(0.0, 1.0, 4096).unwrap();
        let pat = TransitionPattern::new(0.0, 1.0, vec![0.5], -1.0, 0.2).unwrap();
        let u = layered_initial(&pat, &pr, grid).unwrap();
        assert!((discrete_energy(&u, &pr) - c_p(&pr)).abs() < 1e-6);
        let tanh = tanh_layer(grid, 0.5, 0.04);
        for (a, b) in u.values().iter().zip(tanh.values()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn layered_data_converge_to_the_pattern() {
        let grid = Grid::new(0.0, 1.0, 2048).unwrap();
        let pat = TransitionPattern::new(0.0, 1.0, vec![0.2, 0.5, 0.8], 1.0, 0.1).unwrap();
        let v = pat.v_field(grid).unwrap();
        let dists: Vec<f64> = [0.1, 0.05, 0.025]
            .iter()
            .map(|&e| l1_dist(&layered_initial(&pat, &params(2.0, e), grid).unwrap(), &v).unwrap())
            .collect();
        assert!(dists[0] > dists[1] && dists[1] > dists[2], "{dists:?}");
    }

    #[test]
    fn sign_flip_negates_the_data() {
        let grid = Grid::new(0.0, 1.0, 256).unwrap();
        let pat = TransitionPattern::new(0.0, 1.0, vec![0.3, 0.6], 1.0, 0.1).unwrap();
        for theta in [2.0, 4.0, 1.5] {
            let pr = params(theta, 0.03);
            let u = layered_initial(&pat, &pr, grid).unwrap();
            let w = layered_initial(&pat.negated(), &pr, grid).unwrap();
            for (a, b) in u.values().iter().zip(w.values()) {
                assert_eq!(*a, -*b);
            }
        }
    }

    #[test]
    fn layers_too_close_are_rejected() {
        let grid = Grid::new(0.0, 1.0, 256).unwrap();
        let pat = TransitionPattern::new(0.0, 1.0, vec![0.45, 0.55], 1.0, 0.04).unwrap();
        assert!(matches!(
            layered_initial(&pat, &params(2.0, 0.05), grid),
            Err(MetastabilityError::TransitionOverlap { .. })
        ));
        let other = Grid::new(0.0, 2.0, 256).unwrap();
        assert!(layered_initial(&pat, &params(2.0, 0.01), other).is_err());
    }

    #[test]
    fn zero_set_sits_at_the_jumps() {
        let grid = Grid::new(0.0, 1.0, 1024).unwrap();
        let jumps = vec![0.25, 0.5, 0.75];
        let pat = TransitionPattern::new(0.0, 1.0, jumps.clone(), -1.0, 0.1).unwrap();
        let zero = DetectionSet::point(0.0).unwrap();
        for theta in [2.0, 4.0] {
            let pr = params(theta, 0.03);
            let u = layered_initial(&pat, &pr, grid).unwrap();
            let profile = heteroclinic_profile(pr, 64).unwrap();
            // 99% width of the single transition.
            let mut w99 = 0.0;
            while profile.eval(w99) < 0.99 {
                w99 += 1e-4;
            }
            let set = interfaces_of(&u, &zero);
            assert_eq!(set.intervals.len(), 3);
            for (&(lo, hi), h) in set.intervals.iter().zip(&jumps) {
                assert!(lo - h > -2.0 * w99 && hi - h < 2.0 * w99);
            }
        }
    }

    #[test]
    fn seed_keeps_mass_and_is_antisymmetric() {
        let grid = Grid::new(0.0, 1.0, 64).unwrap();
        let u = Field::constant(grid, 0.2);
        let s = asymmetric_seed(&u, 1e-3);
        assert!((crate::field::mass(&s) - crate::field::mass(&u)).abs() < 1e-15);
        let v = s.values();
        assert!((v[0] - 0.2 + (v[63] - 0.2)).abs() < 1e-15);
        assert!(v[0] > v[63]);
    }

    #[test]
    fn detection_set_rejects_wells() {
        assert!(DetectionSet::interval(-0.5, 1.0).is_err());
        assert!(DetectionSet::interval(-1.0, -0.5).is_err());
        assert!(DetectionSet::new(vec![(-2.0, 2.0)]).is_err());
        assert!(DetectionSet::interval(0.5, 0.2).is_err());
        assert!(DetectionSet::new(vec![]).is_err());
        assert!(DetectionSet::new(vec![(1.1, 1.5), (-0.9, 0.9)]).is_ok());
        assert!(DetectionSet::default_set().contains(0.9));
    }

    #[test]
    fn interface_sets_of_simple_fields() {
        let grid = Grid::new(0.0, 1.0, 200).unwrap();
        let h = grid.h();
        let k0 = DetectionSet::point(0.0).unwrap();
        let pat = TransitionPattern::new(0.0, 1.0, vec![0.3, 0.6], -1.0, 0.1).unwrap();
        let v = pat.v_field(grid).unwrap();
        let set = interfaces_of(&v, &k0);
        assert_eq!(set.intervals.len(), 2);
        for (&(lo, hi), jump) in set.intervals.iter().zip([0.3, 0.6]) {
            assert_eq!(lo, hi);
            assert!((lo - jump).abs() <= h);
        }

        let minus = Field::constant(grid, -1.0);
        assert!(interfaces_of(&minus, &DetectionSet::interval(-0.5, 0.5).unwrap()).is_empty());

        let eps = 0.05;
        let fine = Grid::new(0.0, 1.0, 1000).unwrap();
        let u = tanh_layer(fine, 0.5, eps);
        let set = interfaces_of(&u, &DetectionSet::default_set());
        assert_eq!(set.intervals.len(), 1);
        let (lo, hi) = set.intervals[0];
        let width = 2.0 * std::f64::consts::SQRT_2 * eps * 0.9f64.atanh();
        assert!((hi - lo - width).abs() < 2.0 * fine.h());
        assert!((0.5 * (lo + hi) - 0.5).abs() < 1e-12);

        // Plateau inside K spans the outer half cell.
        let zero = Field::constant(grid, 0.0);
        assert_eq!(interfaces_of(&zero, &k0).intervals, vec![(0.0, 1.0)]);
    }

    #[test]
    fn hausdorff_distance_examples() {
        let a = points(&[0.2, 0.6]);
        assert_eq!(set_distance(&a, &a).value, 0.0);
        let d = set_distance(&a, &points(&[0.25, 0.55])).value;
        assert!((d - 0.05).abs() < 1e-15);
        let d = set_distance(&points(&[0.5]), &points(&[0.2, 0.8])).value;
        assert!((d - 0.3).abs() < 1e-15);
        // Interior of an interval far from the other set's gap.
        let wide = InterfaceSet::from_intervals(vec![(0.0, 1.0)]);
        let d = set_distance(&wide, &points(&[0.1, 0.9])).value;
        assert!((d - 0.4).abs() < 1e-15);
        let empty = InterfaceSet::from_intervals(vec![]);
        let s = set_distance(&empty, &a);
        assert!(s.empty_interface && s.value.is_infinite());
    }

    #[test]
    fn merging_joins_touching_intervals() {
        let s = InterfaceSet::from_intervals(vec![(0.5, 0.6), (0.1, 0.2), (0.2, 0.3), (0.55, 0.7)]);
        assert_eq!(s.intervals, vec![(0.1, 0.3), (0.5, 0.7)]);
    }

    #[test]
    fn exit_time_of_scripted_jump() {
        let grid = Grid::new(0.0, 1.0, 400).unwrap();
        let fields = (0..=10)
            .map(|k| {
                let c = if k < 6 { 0.3 } else { 0.5 };
                (k as f64, tanh_layer(grid, c, 0.02))
            })
            .collect();
        let run = scripted_record(fields);
        let t = exit_time(&run, &DetectionSet::default_set(), 0.05).unwrap();
        assert!((t.value() - 5.25).abs() < 1e-9, "{t:?}");
        assert!(!t.is_censored());
        let far = exit_time(&run, &DetectionSet::default_set(), 2.0).unwrap();
        assert_eq!(far, ExitTime::Censored { t_max: 10.0 });
    }

    #[test]
    fn constant_run_is_censored() {
        let grid = Grid::new(0.0, 1.0, 64).unwrap();
        let fields = (0..4).map(|k| (k as f64, Field::constant(grid, -1.0))).collect();
        let run = scripted_record(fields);
        assert!(exit_time(&run, &DetectionSet::default_set(), 0.05).unwrap().is_censored());
        let mut empty = run.clone();
        empty.snapshots.clear();
        assert!(matches!(
            exit_time(&empty, &DetectionSet::default_set(), 0.05),
            Err(MetastabilityError::MissingInterfaceData)
        ));
    }

    #[test]
    fn exponent_recurrences() {
        let t = exponent_table(&params(4.0, 0.1), 40).unwrap();
        assert_eq!(t.alpha, 0.75);
        assert_eq!(t.gamma, 3.0);
        assert_eq!(&t.k[..3], &[0.0, 0.75, 1.3125]);
        for w in t.k.windows(2) {
            assert!(w[1] > w[0] && w[1] < t.gamma);
        }
        let t = exponent_table(&params(3.0, 0.1), 3).unwrap();
        assert!((t.alpha - 5.0 / 6.0).abs() < 1e-15);
        assert!((t.k[1] - 5.0 / 6.0).abs() < 1e-15);
        assert!((t.k[2] - 55.0 / 36.0).abs() < 1e-15);
        assert!((t.gamma - 5.0).abs() < 1e-15);
        assert!(matches!(
            exponent_table(&params(2.0, 0.1), 5),
            Err(MetastabilityError::SupercriticalUndefined { .. })
        ));
        assert!(exponent_table(&params(1.5, 0.1), 5).is_err());
    }

    #[test]
    fn gap_of_layered_and_sharp_data() {
        let grid = Grid::new(0.0, 1.0, 4096).unwrap();
        let pr = params(2.0, 0.05);
        let pat = TransitionPattern::new(0.0, 1.0, vec![0.5], 1.0, 0.2).unwrap();
        let u = layered_initial(&pat, &pr, grid).unwrap();
        let g = lower_bound_gap(&u, &pat, &pr, 0.05).unwrap();
        assert!(g.gap >= -1e-6 && g.gap <= 1e-3, "{g:?}");
        assert!(g.hypothesis_holds);
        let v = pat.v_field(grid).unwrap();
        let g = lower_bound_gap(&v, &pat, &pr, 0.05).unwrap();
        assert!(g.gap > 1.0);
        assert_eq!(g.antiderivative_distance, 0.0);
        let flipped = lower_bound_gap(&v, &pat.negated(), &pr, 0.05).unwrap();
        assert!(!flipped.hypothesis_holds);
    }

    #[test]
    fn initial_gap_shrinks_with_epsilon() {
        let grid = Grid::new(0.0, 1.0, 4096).unwrap();
        let pat = TransitionPattern::new(0.0, 1.0, vec![0.2, 0.5, 0.8], 1.0, 0.1).unwrap();
        let gaps: Vec<f64> = [0.1, 0.08, 0.06, 0.05]
            .iter()
            .map(|&e| {
                let pr = params(2.0, e);
                let u = layered_initial(&pat, &pr, grid).unwrap();
                lower_bound_gap(&u, &pat, &pr, 1.0).unwrap().gap.abs()
            })
            .collect();
        for w in gaps.windows(2) {
            assert!(w[1] < w[0], "{gaps:?}");
        }
    }

    fn row(eps: f64, t: f64, censored: bool) -> ExitRow {
        ExitRow {
            theta: 2.0,
            p: 2.0,
            epsilon: eps,
            n: 2,
            delta: 0.05,
            k_lo: -0.9,
            k_hi: 0.9,
            t_exit: t,
            censored_flag: censored,
            t_max: 1e7,
        }
    }

    #[test]
    fn fits_recover_synthetic_laws() {
        let exp: Vec<ExitRow> = [0.1, 0.08, 0.07, 0.06]
            .iter()
            .map(|&e| row(e, 3.0 * (1.5 / e).exp(), false))
            .chain([row(0.05, 1e7, true)])
            .collect();
        let f = fit(&exp, FitModel::Exponential).unwrap();
        assert!((f.slope - 1.5).abs() < 1e-10 && (f.exponent - 1.5).abs() < 1e-10);
        assert!((f.intercept - 3f64.ln()).abs() < 1e-9);
        assert!((f.r_squared - 1.0).abs() < 1e-12);
        assert_eq!((f.used, f.censored), (4, 1));
        assert!(fit(&exp, FitModel::Algebraic).unwrap().r_squared < f.r_squared);

        let alg: Vec<ExitRow> = [0.1, 0.05, 0.02].iter().map(|&e| row(e, e.powf(-2.5), false)).collect();
        let f = fit(&alg, FitModel::Algebraic).unwrap();
        assert!((f.exponent - 2.5).abs() < 1e-10);

        assert!(matches!(
            fit(&exp[..2], FitModel::Exponential),
            Err(MetastabilityError::InsufficientData { used: 2 })
        ));
        assert_eq!("algebraic".parse::<FitModel>().unwrap(), FitModel::Algebraic);
    }

    #[test]
    fn exit_table_round_trips() {
        let rows = vec![row(0.1, 107.5, false), row(0.05, 1e7, true)];
        let mut buf = Vec::new();
        write_exit_table(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("theta,p,epsilon,N,delta,K_lo,K_hi,t_exit,censored_flag,t_max\n"));
        assert_eq!(read_exit_table(buf.as_slice()).unwrap(), rows);
        let bad = "theta,p,epsilon,N,delta,K_lo,K_hi,t_exit,censored_flag,t_max\n2,2,x,2,0.05,-0.9,0.9,1,false,1\n";
        assert!(matches!(read_exit_table(bad.as_bytes()), Err(MetastabilityError::Table { line: 2, .. })));
    }
}
