//! Implicit finite-volume time stepping for `u_t = [D(u) μ_x]_x`,
//! `μ = -ε^p (|u_x|^{p-2} u_x)_x + F'(u)`, with zero flux at both ends.
//!
//! Cells carry `u`, faces carry `Du`, the p-flux `q` and the mass flux `J`. Boundary faces
//! have `Du = 0`, `q = 0` and `J = 0`, so the discrete divergence telescopes and the implicit
//! update conserves mass up to the Newton tolerance; a final uniform shift removes the rest.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::field::{antiderivative, level_crossings, mass, Field, FieldError, Grid};
use crate::potential::PotentialParams;

/// Working range `|u| ≤ U_CAP`; states leaving it count as blow-up.
pub const U_CAP: f64 = 2.0;

#[derive(Debug, Error)]
pub enum DynamicsError {
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid mobility: {0}")]
    InvalidMobility(String),
    #[error("step failure: stiffness (Newton failed down to dt = {dt:e} at t = {t})")]
    Stiffness { t: f64, dt: f64 },
    #[error("solver blow-up at t = {t}")]
    BlowUp { t: f64 },
    #[error(transparent)]
    Field(#[from] FieldError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MobilityModel {
    /// `D(u) = value`.
    Constant { value: f64 },
    /// `D(u) = exp(c u)`.
    WagnerExponential { c: f64 },
    /// `D(u) = d0 / (1 + u²)`.
    Mullins { d0: f64 },
}

impl MobilityModel {
    pub fn validate(&self) -> Result<(), DynamicsError> {
        let ok = match *self {
            MobilityModel::Constant { value } => value.is_finite() && value > 0.0,
            MobilityModel::WagnerExponential { c } => c.is_finite(),
            MobilityModel::Mullins { d0 } => d0.is_finite() && d0 > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(DynamicsError::InvalidMobility(self.to_string()))
        }
    }

    pub fn d(&self, u: f64) -> f64 {
        match *self {
            MobilityModel::Constant { value } => value,
            MobilityModel::WagnerExponential { c } => (c * u).exp(),
            MobilityModel::Mullins { d0 } => d0 / (1.0 + u * u),
        }
    }

    pub fn dd(&self, u: f64) -> f64 {
        match *self {
            MobilityModel::Constant { .. } => 0.0,
            MobilityModel::WagnerExponential { c } => c * (c * u).exp(),
            MobilityModel::Mullins { d0 } => {
                let s = 1.0 + u * u;
                -2.0 * d0 * u / (s * s)
            }
        }
    }

    /// Lower bound of `D` on `|u| ≤ U_CAP`.
    pub fn d_min(&self) -> f64 {
        match *self {
            MobilityModel::Constant { value } => value,
            MobilityModel::WagnerExponential { c } => (-c.abs() * U_CAP).exp(),
            MobilityModel::Mullins { d0 } => d0 / (1.0 + U_CAP * U_CAP),
        }
    }
}

impl fmt::Display for MobilityModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            MobilityModel::Constant { value } => write!(f, "constant({value})"),
            MobilityModel::WagnerExponential { c } => write!(f, "wagner({c})"),
            MobilityModel::Mullins { d0 } => write!(f, "mullins({d0})"),
        }
    }
}

impl FromStr for MobilityModel {
    type Err = DynamicsError;

    /// `constant(1)`, `wagner(0.5)` (or `wagner_exponential(0.5)`), `mullins(1)`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || DynamicsError::InvalidMobility(s.to_string());
        let s = s.trim();
        let open = s.find('(').ok_or_else(bad)?;
        let inner = s[open + 1..].strip_suffix(')').ok_or_else(bad)?;
        let value: f64 = inner.trim().parse().map_err(|_| bad())?;
        let model = match s[..open].trim() {
            "constant" => MobilityModel::Constant { value },
            "wagner" | "wagner_exponential" => MobilityModel::WagnerExponential { c: value },
            "mullins" => MobilityModel::Mullins { d0: value },
            _ => return Err(bad()),
        };
        model.validate()?;
        Ok(model)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub dt_init: f64,
    pub dt_min: f64,
    pub dt_max: f64,
    /// Newton stops once the sup-norm of the correction falls below this.
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    /// Flux regularization `δ`; `None` means `1e-8 / ε`.
    pub delta_reg: Option<f64>,
    pub t_max: f64,
    /// Accepted steps may raise the energy by at most this much.
    pub energy_tol: f64,
    pub grow: f64,
    pub shrink: f64,
    /// Newton iteration counts up to this are "easy" and let `dt` grow.
    pub easy_iters: usize,
    pub max_steps: Option<u64>,
    /// Bound on `λ dt`, where `λ` is the observed growth rate of `‖u_t‖`; `None` disables it.
    /// Implicit Euler damps modes with `λ dt > 2`, so this keeps slow instabilities resolved.
    pub growth_tol: Option<f64>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            dt_init: 1e-4,
            dt_min: 1e-12,
            dt_max: 10.0,
            newton_tol: 1e-10,
            newton_max_iter: 30,
            delta_reg: None,
            t_max: 1.0,
            energy_tol: 1e-10,
            grow: 1.2,
            shrink: 0.5,
            easy_iters: 4,
            max_steps: None,
            growth_tol: Some(0.05),
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), DynamicsError> {
        let fail = |m: &str| Err(DynamicsError::InvalidConfig(m.to_string()));
        if !(self.dt_min > 0.0 && self.dt_min <= self.dt_init && self.dt_init <= self.dt_max) {
            return fail("need 0 < dt_min <= dt_init <= dt_max");
        }
        if !(self.newton_tol > 0.0) || self.newton_max_iter == 0 {
            return fail("newton_tol must be positive and newton_max_iter at least 1");
        }
        if let Some(d) = self.delta_reg {
            if !(d >= 0.0 && d.is_finite()) {
                return fail("delta_reg must be non-negative");
            }
        }
        if !(self.t_max >= 0.0) {
            return fail("t_max must be non-negative");
        }
        if !(self.energy_tol >= 0.0) {
            return fail("energy_tol must be non-negative");
        }
        if !(self.grow >= 1.0 && self.shrink > 0.0 && self.shrink < 1.0) {
            return fail("need grow >= 1 and 0 < shrink < 1");
        }
        if self.growth_tol.is_some_and(|g| !(g > 0.0)) {
            return fail("growth_tol must be positive");
        }
        Ok(())
    }

    pub fn delta_for(&self, params: &PotentialParams) -> f64 {
        self.delta_reg.unwrap_or(1e-8 / params.epsilon())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub u: Field,
    pub t: f64,
    /// Running estimate of `∫ ‖ũ_t‖² dt`.
    pub cumulative_dissipation: f64,
    pub step_count: u64,
    pub last_dt: f64,
    /// Step size the next call to [`step`] will attempt first.
    pub next_dt: f64,
    /// `‖u - u_prev‖_∞ / dt` of the last step (0 before the first).
    pub last_change: f64,
}

impl SimState {
    pub fn new(u: Field, config: &SolverConfig) -> Self {
        Self {
            u,
            t: 0.0,
            cumulative_dissipation: 0.0,
            step_count: 0,
            last_dt: 0.0,
            next_dt: config.dt_init,
            last_change: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub energy: f64,
    /// `(E(after) - E(before)) / dt`.
    pub rate: f64,
    /// `-ε^{-1} ∫ ũ_t² / D(u)`.
    pub dissipation_rhs: f64,
}

/// Diagnostics of one accepted step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepInfo {
    pub dt: f64,
    pub newton_iters: usize,
    pub rejections: usize,
    pub energy_before: f64,
    pub energy_after: f64,
    pub dissipation_rhs: f64,
    /// Largest face mobility seen in the accepted update.
    pub max_mobility: f64,
}

/// `ε^{p-1}|Du|^p/p` summed over interior faces plus `F(u)/ε` over cells, both times `h`.
pub fn discrete_energy(u: &Field, params: &PotentialParams) -> f64 {
    let v = u.values();
    let h = u.grid().h();
    let (eps, p) = (params.epsilon(), params.p());
    let grad: f64 = v.windows(2).map(|w| ((w[1] - w[0]) / h).abs().powf(p)).sum();
    let pot: f64 = v.iter().map(|&x| params.f(x)).sum();
    h * (eps.powf(p - 1.0) * grad / p + pot / eps)
}

/// `μ_i = -ε^p (q_{i+1/2} - q_{i-1/2}) / h + F'(u_i)` with the default regularization.
pub fn chemical_potential(u: &Field, params: &PotentialParams) -> Field {
    chemical_potential_with(u, params, 1e-8 / params.epsilon())
}

pub fn chemical_potential_with(u: &Field, params: &PotentialParams, delta_reg: f64) -> Field {
    let op = Operator::new(*u.grid(), *params, MobilityModel::Constant { value: 1.0 }, delta_reg);
    let mut ws = Workspace::new(u.values().len());
    op.mu(u.values(), &mut ws);
    Field::new(*u.grid(), ws.mu).expect("finite chemical potential")
}

/// Compares the energy rate across a step with the dissipation identity.
pub fn dissipation_report(
    before: &SimState,
    after: &SimState,
    params: &PotentialParams,
    mobility: &MobilityModel,
) -> EnergyReport {
    let e0 = discrete_energy(&before.u, params);
    let e1 = discrete_energy(&after.u, params);
    let dt = after.t - before.t;
    if dt <= 0.0 {
        return EnergyReport {
            energy: e1,
            rate: 0.0,
            dissipation_rhs: 0.0,
        };
    }
    let a0 = antiderivative(&before.u);
    let a1 = antiderivative(&after.u);
    let v = after.u.values();
    let n = v.len();
    let h = after.u.grid().h();
    let mut sum = 0.0;
    for j in 0..=n {
        let ut = (a1.values()[j] - a0.values()[j]) / dt;
        let ubar = match j {
            0 => v[0],
            j if j == n => v[n - 1],
            j => 0.5 * (v[j - 1] + v[j]),
        };
        sum += ut * ut / mobility.d(ubar);
    }
    EnergyReport {
        energy: e1,
        rate: (e1 - e0) / dt,
        dissipation_rhs: -h * sum / params.epsilon(),
    }
}

/// Band matrix with `kl` sub- and `ku` super-diagonals, factored in place by Gaussian
/// elimination with partial pivoting. Rows store columns `i-kl ..= i+kl+ku` to hold fill-in.
#[derive(Debug, Clone)]
pub struct BandedMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    data: Vec<f64>,
    piv: Vec<usize>,
}

impl BandedMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let width = 2 * kl + ku + 1;
        Self {
            n,
            kl,
            ku,
            width,
            data: vec![0.0; n * width],
            piv: (0..n).collect(),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(j + self.kl >= i && j <= i + self.kl + self.ku);
        i * self.width + (j + self.kl - i)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if j + self.kl < i || j > i + self.ku {
            return 0.0;
        }
        self.data[self.idx(i, j)]
    }

    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        assert!(j + self.kl >= i && j <= i + self.ku, "entry ({i}, {j}) outside band");
        let k = self.idx(i, j);
        self.data[k] += v;
    }

    pub fn clear(&mut self) {
        self.data.iter_mut().for_each(|x| *x = 0.0);
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                let lo = i.saturating_sub(self.kl);
                let hi = (i + self.ku).min(self.n - 1);
                (lo..=hi).map(|j| self.get(i, j) * x[j]).sum()
            })
            .collect()
    }

    /// In-place LU factorization. Returns `false` on an exactly singular pivot.
    pub fn factor(&mut self) -> bool {
        let (n, kl, ku) = (self.n, self.kl, self.ku);
        for k in 0..n {
            let last = (k + kl).min(n - 1);
            let mut p = k;
            let mut best = self.data[self.idx(k, k)].abs();
            for i in k + 1..=last {
                let v = self.data[self.idx(i, k)].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best == 0.0 || !best.is_finite() {
                return false;
            }
            self.piv[k] = p;
            let right = (k + kl + ku).min(n - 1);
            if p != k {
                for j in k..=right {
                    let (a, b) = (self.idx(k, j), self.idx(p, j));
                    self.data.swap(a, b);
                }
            }
            let pivot = self.data[self.idx(k, k)];
            for i in k + 1..=last {
                let ik = self.idx(i, k);
                let m = self.data[ik] / pivot;
                self.data[ik] = m;
                if m != 0.0 {
                    for j in k + 1..=right {
                        let kj = self.data[self.idx(k, j)];
                        let ij = self.idx(i, j);
                        self.data[ij] -= m * kj;
                    }
                }
            }
        }
        true
    }

    /// Solves `A x = b` after [`factor`](Self::factor), overwriting `b` with `x`.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let (n, kl, ku) = (self.n, self.kl, self.ku);
        for k in 0..n {
            let p = self.piv[k];
            if p != k {
                b.swap(k, p);
            }
            let bk = b[k];
            for i in k + 1..=(k + kl).min(n - 1) {
                b[i] -= self.data[self.idx(i, k)] * bk;
            }
        }
        for k in (0..n).rev() {
            let mut s = b[k];
            for j in k + 1..=(k + kl + ku).min(n - 1) {
                s -= self.data[self.idx(k, j)] * b[j];
            }
            b[k] = s / self.data[self.idx(k, k)];
        }
    }
}

struct Workspace {
    /// `Φ'(Du)` at faces 0..=n (zero at the boundary faces).
    dphi: Vec<f64>,
    /// p-flux at faces.
    q: Vec<f64>,
    mu: Vec<f64>,
    /// Mass flux at faces.
    j: Vec<f64>,
}

impl Workspace {
    fn new(n: usize) -> Self {
        Self {
            dphi: vec![0.0; n + 1],
            q: vec![0.0; n + 1],
            mu: vec![0.0; n],
            j: vec![0.0; n + 1],
        }
    }
}

struct Operator {
    params: PotentialParams,
    mobility: MobilityModel,
    h: f64,
    eps_p: f64,
    delta2: f64,
    p: f64,
}

impl Operator {
    fn new(grid: Grid, params: PotentialParams, mobility: MobilityModel, delta: f64) -> Self {
        Self {
            params,
            mobility,
            h: grid.h(),
            eps_p: params.epsilon().powf(params.p()),
            delta2: delta * delta,
            p: params.p(),
        }
    }

    /// `Φ_δ(s) = (s² + δ²)^{(p-2)/2} s` and its derivative.
    fn phi(&self, s: f64) -> (f64, f64) {
        if self.p == 2.0 {
            return (s, 1.0);
        }
        let r = s * s + self.delta2;
        if r == 0.0 {
            return (0.0, 0.0);
        }
        let a = r.powf(0.5 * self.p - 2.0);
        (a * r * s, a * ((self.p - 1.0) * s * s + self.delta2))
    }

    fn mu(&self, u: &[f64], ws: &mut Workspace) {
        let n = u.len();
        let h = self.h;
        for f in 1..n {
            let (q, dq) = self.phi((u[f] - u[f - 1]) / h);
            ws.q[f] = q;
            ws.dphi[f] = dq;
        }
        for i in 0..n {
            ws.mu[i] = -self.eps_p * (ws.q[i + 1] - ws.q[i]) / h + self.params.df(u[i]);
        }
    }

    /// Fills `mu` and the interior mass fluxes `J_f = -D(ū_f)(μ_f - μ_{f-1})/h`.
    fn fluxes(&self, u: &[f64], ws: &mut Workspace) {
        self.mu(u, ws);
        let n = u.len();
        for f in 1..n {
            let d = self.mobility.d(0.5 * (u[f - 1] + u[f]));
            ws.j[f] = -d * (ws.mu[f] - ws.mu[f - 1]) / self.h;
        }
    }

    fn residual(&self, u: &[f64], u_old: &[f64], dt: f64, ws: &mut Workspace, r: &mut [f64]) {
        self.fluxes(u, ws);
        let k = dt / self.h;
        for i in 0..u.len() {
            r[i] = u[i] - u_old[i] + k * (ws.j[i + 1] - ws.j[i]);
        }
    }

    /// Pentadiagonal Jacobian of the residual; `ws` must hold the state of `u`.
    fn jacobian(&self, u: &[f64], dt: f64, ws: &Workspace, jac: &mut BandedMatrix) {
        let n = u.len();
        let h = self.h;
        let c = self.eps_p / (h * h);
        jac.clear();
        for i in 0..n {
            jac.add(i, i, 1.0);
        }
        // Row `i` of dμ/du as (column, value) pairs.
        let dmu = |i: usize| -> [(usize, f64); 3] {
            let left = if i >= 1 { ws.dphi[i] } else { 0.0 };
            let right = if i + 1 < n { ws.dphi[i + 1] } else { 0.0 };
            [
                (i.wrapping_sub(1), -c * left),
                (i, c * (left + right) + self.params.d2f(u[i])),
                (i + 1, -c * right),
            ]
        };
        let k = dt / h;
        for f in 1..n {
            let ubar = 0.5 * (u[f - 1] + u[f]);
            let d = self.mobility.d(ubar);
            let dd = self.mobility.dd(ubar);
            let dmu_jump = (ws.mu[f] - ws.mu[f - 1]) / h;
            // dJ_f/du_col for col in f-2 ..= f+1, stored at offset col + 2 - f.
            let mut row = [0.0; 4];
            for (col, v) in dmu(f) {
                if col < n {
                    row[col + 2 - f] -= d / h * v;
                }
            }
            for (col, v) in dmu(f - 1) {
                if col < n {
                    row[col + 2 - f] += d / h * v;
                }
            }
            row[1] -= dmu_jump * dd * 0.5;
            row[2] -= dmu_jump * dd * 0.5;
            for (off, &v) in row.iter().enumerate() {
                let col = (f + off).wrapping_sub(2);
                if col >= n || v == 0.0 {
                    continue;
                }
                // J_f enters R_{f-1} with + and R_f with -.
                jac.add(f - 1, col, k * v);
                jac.add(f, col, -k * v);
            }
        }
    }
}

/// A stalled line search still converges when the correction is within this factor of the
/// Newton tolerance.
const STALL_FACTOR: f64 = 100.0;

enum NewtonFailure {
    Diverged,
    NonFinite,
}

struct Stepper {
    op: Operator,
    ws: Workspace,
    jac: BandedMatrix,
    r: Vec<f64>,
    trial: Vec<f64>,
    r_trial: Vec<f64>,
    tol: f64,
    max_iter: usize,
}

impl Stepper {
    fn new(grid: Grid, params: PotentialParams, mobility: MobilityModel, config: &SolverConfig) -> Self {
        let n = grid.n();
        Self {
            op: Operator::new(grid, params, mobility, config.delta_for(&params)),
            ws: Workspace::new(n),
            jac: BandedMatrix::zeros(n, 2, 2),
            r: vec![0.0; n],
            trial: vec![0.0; n],
            r_trial: vec![0.0; n],
            tol: config.newton_tol,
            max_iter: config.newton_max_iter,
        }
    }

    /// Damped Newton for the implicit Euler residual, starting from `u_old`.
    ///
    /// Damping uses the natural monotonicity test: a trial point is accepted when the
    /// simplified correction `J⁻¹R(trial)` (same factorization) shrinks.
    fn newton(&mut self, u_old: &[f64], dt: f64) -> Result<(Vec<f64>, usize), NewtonFailure> {
        let n = u_old.len();
        let mut u = u_old.to_vec();
        self.op.residual(&u, u_old, dt, &mut self.ws, &mut self.r);
        let mut simplified = vec![0.0; n];
        for it in 1..=self.max_iter {
            self.op.jacobian(&u, dt, &self.ws, &mut self.jac);
            if !self.jac.factor() {
                return Err(NewtonFailure::Diverged);
            }
            let mut delta: Vec<f64> = self.r.iter().map(|x| -x).collect();
            self.jac.solve_in_place(&mut delta);
            let dnorm = sup(&delta);
            if !dnorm.is_finite() {
                return Err(NewtonFailure::NonFinite);
            }
            if dnorm <= self.tol {
                for i in 0..n {
                    u[i] += delta[i];
                }
                return Ok((u, it));
            }
            let mut lambda = 1.0;
            let mut accepted = None;
            for _ in 0..12 {
                let mut in_range = true;
                for i in 0..n {
                    self.trial[i] = u[i] + lambda * delta[i];
                    in_range &= self.trial[i].abs() <= U_CAP;
                }
                if in_range {
                    self.op.residual(&self.trial, u_old, dt, &mut self.ws, &mut self.r_trial);
                    for i in 0..n {
                        simplified[i] = -self.r_trial[i];
                    }
                    self.jac.solve_in_place(&mut simplified);
                    let snorm = sup(&simplified);
                    if snorm.is_finite() && (snorm <= (1.0 - 0.25 * lambda) * dnorm || snorm <= self.tol) {
                        accepted = Some(snorm);
                        break;
                    }
                }
                lambda *= 0.5;
            }
            let Some(snorm) = accepted else {
                if dnorm <= STALL_FACTOR * self.tol {
                    for i in 0..n {
                        u[i] += delta[i];
                    }
                    return Ok((u, it));
                }
                return Err(NewtonFailure::Diverged);
            };
            std::mem::swap(&mut u, &mut self.trial);
            std::mem::swap(&mut self.r, &mut self.r_trial);
            if lambda == 1.0 && snorm <= self.tol {
                for i in 0..n {
                    u[i] += simplified[i];
                }
                return Ok((u, it));
            }
        }
        Err(NewtonFailure::Diverged)
    }

    /// Newton solution with its mass defect removed by a uniform shift; also returns
    /// `Σ_f J_f²/D_f` and the largest face mobility at `u_star`.
    /// The shift is bounded by the Newton tolerance.
    fn conservative_update(&mut self, u_star: &[f64], u_old: &[f64]) -> (Vec<f64>, f64, f64) {
        let n = u_old.len();
        let defect = compensated_sum(u_star.iter().zip(u_old).map(|(a, b)| a - b)) / n as f64;
        let new: Vec<f64> = u_star.iter().map(|x| x - defect).collect();
        self.op.fluxes(u_star, &mut self.ws);
        let mut weighted = 0.0;
        let mut dmax = 0.0f64;
        for f in 1..n {
            let d = self.op.mobility.d(0.5 * (u_star[f - 1] + u_star[f]));
            let jf = self.ws.j[f];
            weighted += jf * jf / d;
            dmax = dmax.max(d);
        }
        (new, weighted, dmax)
    }
}

/// Neumaier-compensated sum.
fn compensated_sum<I: Iterator<Item = f64>>(it: I) -> f64 {
    let (mut s, mut c) = (0.0f64, 0.0f64);
    for x in it {
        let t = s + x;
        c += if s.abs() >= x.abs() { (s - t) + x } else { (x - t) + s };
        s = t;
    }
    s + c
}

fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| if x.is_nan() { f64::NAN } else { m.max(x.abs()) })
}

fn check_inputs(
    state: &SimState,
    params: &PotentialParams,
    mobility: &MobilityModel,
    config: &SolverConfig,
) -> Result<(), DynamicsError> {
    config.validate()?;
    mobility.validate()?;
    if params.p() < 2.0 && config.delta_for(params) == 0.0 {
        return Err(DynamicsError::InvalidConfig(
            "delta_reg = 0 is only allowed for p >= 2".into(),
        ));
    }
    if state.u.max_abs() > U_CAP {
        return Err(DynamicsError::BlowUp { t: state.t });
    }
    Ok(())
}

/// One implicit Euler step with an exactly prescribed `dt` (no retries).
pub fn step_with_dt(
    state: &SimState,
    params: &PotentialParams,
    mobility: &MobilityModel,
    config: &SolverConfig,
    dt: f64,
) -> Result<(SimState, StepInfo), DynamicsError> {
    check_inputs(state, params, mobility, config)?;
    let mut stepper = Stepper::new(*state.u.grid(), *params, *mobility, config);
    let e0 = discrete_energy(&state.u, params);
    attempt(&mut stepper, state, params, dt, e0).map_err(|f| match f {
            NewtonFailure::NonFinite => DynamicsError::BlowUp { t: state.t },
            NewtonFailure::Diverged => DynamicsError::Stiffness { t: state.t, dt },
        })
}

fn attempt(
    stepper: &mut Stepper,
    state: &SimState,
    params: &PotentialParams,
    dt: f64,
    e0: f64,
) -> Result<(SimState, StepInfo), NewtonFailure> {
    let u_old = state.u.values();
    let (u_star, iters) = stepper.newton(u_old, dt)?;
    let (new, weighted, dmax) = stepper.conservative_update(&u_star, u_old);
    if new.iter().any(|x| !x.is_finite()) {
        return Err(NewtonFailure::NonFinite);
    }
    if new.iter().any(|x| x.abs() > U_CAP) {
        return Err(NewtonFailure::Diverged);
    }
    let grid = *state.u.grid();
    let h = grid.h();
    let change = sup(&new.iter().zip(u_old).map(|(a, b)| a - b).collect::<Vec<_>>()) / dt;
    let u_new = Field::new(grid, new).map_err(|_| NewtonFailure::NonFinite)?;
    let e1 = discrete_energy(&u_new, params);
    let a0 = antiderivative(&state.u);
    let a1 = antiderivative(&u_new);
    let incr: f64 = a0
        .values()
        .iter()
        .zip(a1.values())
        .map(|(x, y)| (y - x) * (y - x))
        .sum();
    let next = SimState {
        u: u_new,
        t: state.t + dt,
        cumulative_dissipation: state.cumulative_dissipation + h * incr / dt,
        step_count: state.step_count + 1,
        last_dt: dt,
        next_dt: dt,
        last_change: change,
    };
    let info = StepInfo {
        dt,
        newton_iters: iters,
        rejections: 0,
        energy_before: e0,
        energy_after: e1,
        dissipation_rhs: -h * weighted / params.epsilon(),
        max_mobility: dmax,
    };
    Ok((next, info))
}

/// One accepted step of adaptive implicit Euler.
///
/// Tries `state.next_dt` (clipped to `[dt_min, dt_max]` and to `t_max`), halving on Newton
/// failure or energy increase. The returned state's `next_dt` grows by `grow` after easy
/// Newton convergence.
pub fn step(
    state: &SimState,
    params: &PotentialParams,
    mobility: &MobilityModel,
    config: &SolverConfig,
) -> Result<(SimState, StepInfo), DynamicsError> {
    check_inputs(state, params, mobility, config)?;
    let mut stepper = Stepper::new(*state.u.grid(), *params, *mobility, config);
    step_inner(&mut stepper, state, params, config)
}

fn step_inner(
    stepper: &mut Stepper,
    state: &SimState,
    params: &PotentialParams,
    config: &SolverConfig,
) -> Result<(SimState, StepInfo), DynamicsError> {
    let e0 = discrete_energy(&state.u, params);
    let mut dt = state.next_dt.clamp(config.dt_min, config.dt_max);
    let mut rejections = 0;
    let mut saw_nonfinite = false;
    loop {
        let remaining = config.t_max - state.t;
        let clipped = remaining > 0.0 && dt > remaining;
        let trial_dt = if clipped { remaining } else { dt };
        match attempt(stepper, state, params, trial_dt, e0) {
            Ok((mut next, mut info)) if info.energy_after <= e0 + config.energy_tol => {
                info.rejections = rejections;
                let base = dt;
                next.next_dt = if info.newton_iters <= config.easy_iters {
                    (base * config.grow).min(config.dt_max)
                } else if 2 * info.newton_iters > config.newton_max_iter {
                    (base * config.shrink).max(config.dt_min)
                } else {
                    base
                };
                if let Some(cap) = growth_cap(state, &next, config) {
                    next.next_dt = next.next_dt.min(cap).max(config.dt_min);
                }
                return Ok((next, info));
            }
            Ok(_) => {}
            Err(NewtonFailure::NonFinite) => saw_nonfinite = true,
            Err(NewtonFailure::Diverged) => {}
        }
        rejections += 1;
        if dt <= config.dt_min {
            return Err(if saw_nonfinite {
                DynamicsError::BlowUp { t: state.t }
            } else {
                DynamicsError::Stiffness { t: state.t, dt }
            });
        }
        dt = (dt * config.shrink).max(config.dt_min);
    }
}

/// Increments below this are treated as roundoff when estimating growth rates.
const CHANGE_FLOOR: f64 = 1e-13;

/// Step bound `growth_tol / λ` from the growth of `‖u_t‖` across the last two steps.
fn growth_cap(prev: &SimState, next: &SimState, config: &SolverConfig) -> Option<f64> {
    let tol = config.growth_tol?;
    let (c0, c1) = (prev.last_change, next.last_change);
    if c0 * prev.last_dt <= CHANGE_FLOOR || c1 * next.last_dt <= CHANGE_FLOOR {
        return None;
    }
    let rate = (c1 / c0).ln() / (0.5 * (prev.last_dt + next.last_dt));
    (rate > 0.0).then(|| tol / rate)
}

/// Snapshot times: every `linear_dt` up to `linear_until`, then `linear_until · ratio^k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cadence {
    pub linear_dt: f64,
    pub linear_until: f64,
    pub ratio: f64,
}

impl Default for Cadence {
    fn default() -> Self {
        Self {
            linear_dt: 0.1,
            linear_until: 1.0,
            ratio: 1.3,
        }
    }
}

impl Cadence {
    pub fn validate(&self) -> Result<(), DynamicsError> {
        if self.linear_dt > 0.0 && self.linear_until >= self.linear_dt && self.ratio > 1.0 {
            Ok(())
        } else {
            Err(DynamicsError::InvalidConfig(
                "cadence needs linear_dt > 0, linear_until >= linear_dt and ratio > 1".into(),
            ))
        }
    }

    /// First snapshot time strictly after `t`.
    pub fn next_after(&self, t: f64) -> f64 {
        if t < self.linear_until {
            let k = (t / self.linear_dt).floor() + 1.0;
            let next = k * self.linear_dt;
            if next > t {
                return next.min(self.linear_until);
            }
            return ((k + 1.0) * self.linear_dt).min(self.linear_until);
        }
        let k = ((t / self.linear_until).ln() / self.ratio.ln()).floor().max(0.0);
        let mut next = self.linear_until * self.ratio.powf(k);
        while next <= t {
            next *= self.ratio;
        }
        next
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesRow {
    pub t: f64,
    pub dt: f64,
    pub mass: f64,
    pub energy: f64,
    pub dissipation_rhs: f64,
    pub cumulative_dissipation: f64,
    /// Zero crossings of `u`.
    pub layers: Vec<f64>,
}

/// Full solver state at a recorded time, enough to restart the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub t: f64,
    pub step_count: u64,
    pub last_dt: f64,
    pub next_dt: f64,
    pub last_change: f64,
    pub cumulative_dissipation: f64,
    pub energy: f64,
    pub values: Vec<f64>,
}

impl Snapshot {
    fn of(state: &SimState, energy: f64) -> Self {
        Self {
            t: state.t,
            step_count: state.step_count,
            last_dt: state.last_dt,
            next_dt: state.next_dt,
            last_change: state.last_change,
            cumulative_dissipation: state.cumulative_dissipation,
            energy,
            values: state.u.values().to_vec(),
        }
    }

    pub fn field(&self, grid: Grid) -> Result<Field, FieldError> {
        Field::new(grid, self.values.clone())
    }

    pub fn state(&self, grid: Grid) -> Result<SimState, FieldError> {
        Ok(SimState {
            u: self.field(grid)?,
            t: self.t,
            cumulative_dissipation: self.cumulative_dissipation,
            step_count: self.step_count,
            last_dt: self.last_dt,
            next_dt: self.next_dt,
            last_change: self.last_change,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    TMax,
    Predicate,
    MaxSteps,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub steps: u64,
    pub rejections: u64,
    pub final_t: f64,
    pub initial_energy: f64,
    pub final_energy: f64,
    /// Largest `E(t_{k+1}) - E(t_k)` over accepted steps (negative if always decreasing).
    pub max_energy_increase: f64,
    pub max_relative_mass_drift: f64,
    /// Largest face mobility used by any accepted step.
    pub max_mobility: f64,
    pub min_dt: f64,
    pub max_dt: f64,
    pub stop: StopReason,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub params: PotentialParams,
    pub grid: Grid,
    pub mobility: MobilityModel,
    pub config: SolverConfig,
    pub cadence: Cadence,
    pub series: Vec<SeriesRow>,
    pub snapshots: Vec<Snapshot>,
    pub summary: RunSummary,
}

struct Recorder {
    series: Vec<SeriesRow>,
    snapshots: Vec<Snapshot>,
}

impl Recorder {
    fn push(&mut self, state: &SimState, energy: f64, rhs: f64) {
        if self.snapshots.last().is_some_and(|s| s.step_count == state.step_count) {
            return;
        }
        self.series.push(SeriesRow {
            t: state.t,
            dt: state.last_dt,
            mass: mass(&state.u),
            energy,
            dissipation_rhs: rhs,
            cumulative_dissipation: state.cumulative_dissipation,
            layers: level_crossings(&state.u, 0.0),
        });
        self.snapshots.push(Snapshot::of(state, energy));
    }
}

/// Runs adaptive steps until `t_max`, `config.max_steps`, or `stop(state)` holds.
///
/// Snapshots follow `cadence`; the initial and final states are always recorded, and when
/// `stop` fires the state one step before is recorded too, so events are bracketed by
/// consecutive steps.
pub fn evolve(
    initial: SimState,
    params: &PotentialParams,
    mobility: &MobilityModel,
    config: &SolverConfig,
    cadence: &Cadence,
    stop: &mut dyn FnMut(&SimState) -> bool,
) -> Result<RunRecord, DynamicsError> {
    check_inputs(&initial, params, mobility, config)?;
    cadence.validate()?;
    let grid = *initial.u.grid();
    let mut stepper = Stepper::new(grid, *params, *mobility, config);
    let e_init = discrete_energy(&initial.u, params);
    let m_init = mass(&initial.u);
    let mass_scale = m_init.abs().max(initial.u.grid().length());
    let mut rec = Recorder {
        series: Vec::new(),
        snapshots: Vec::new(),
    };
    rec.push(&initial, e_init, 0.0);
    let mut summary = RunSummary {
        steps: 0,
        rejections: 0,
        final_t: initial.t,
        initial_energy: e_init,
        final_energy: e_init,
        max_energy_increase: f64::NEG_INFINITY,
        max_relative_mass_drift: 0.0,
        max_mobility: 0.0,
        min_dt: f64::INFINITY,
        max_dt: 0.0,
        stop: StopReason::TMax,
    };
    let mut state = initial;
    let mut energy = e_init;
    let mut rhs = 0.0;
    let mut next_snap = cadence.next_after(state.t);
    if stop(&state) {
        summary.stop = StopReason::Predicate;
        return Ok(finish(grid, params, mobility, config, cadence, rec, summary));
    }
    while state.t < config.t_max {
        if config.max_steps.is_some_and(|m| summary.steps >= m) {
            summary.stop = StopReason::MaxSteps;
            break;
        }
        let (next, info) = step_inner(&mut stepper, &state, params, config)?;
        summary.steps += 1;
        summary.rejections += info.rejections as u64;
        summary.max_energy_increase = summary.max_energy_increase.max(info.energy_after - energy);
        summary.max_relative_mass_drift = summary
            .max_relative_mass_drift
            .max((mass(&next.u) - m_init).abs() / mass_scale);
        summary.max_mobility = summary.max_mobility.max(info.max_mobility);
        summary.min_dt = summary.min_dt.min(info.dt);
        summary.max_dt = summary.max_dt.max(info.dt);
        let prev = std::mem::replace(&mut state, next);
        let (prev_energy, prev_rhs) = (energy, rhs);
        energy = info.energy_after;
        rhs = info.dissipation_rhs;
        if stop(&state) {
            rec.push(&prev, prev_energy, prev_rhs);
            rec.push(&state, energy, rhs);
            summary.stop = StopReason::Predicate;
            break;
        }
        if state.t >= next_snap || state.t >= config.t_max {
            rec.push(&state, energy, rhs);
            next_snap = cadence.next_after(state.t);
        }
    }
    if rec.snapshots.last().map(|s| s.step_count) != Some(state.step_count) {
        rec.push(&state, energy, rhs);
    }
    summary.final_t = state.t;
    summary.final_energy = energy;
    Ok(finish(grid, params, mobility, config, cadence, rec, summary))
}

fn finish(
    grid: Grid,
    params: &PotentialParams,
    mobility: &MobilityModel,
    config: &SolverConfig,
    cadence: &Cadence,
    rec: Recorder,
    summary: RunSummary,
) -> RunRecord {
    RunRecord {
        params: *params,
        grid,
        mobility: *mobility,
        config: *config,
        cadence: *cadence,
        series: rec.series,
        snapshots: rec.snapshots,
        summary,
    }
}
