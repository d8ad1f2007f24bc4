//! Stationary solutions built by inverting the first integral
//! `ε^p (p-1)/p |u'|^p = G_β(u) - κ`.
//!
//! Every constructor reduces to a [`MonotoneBranch`], the map
//! `x(u) = ε ((p-1)/p)^{1/p} ∫ [G_β(s) - κ]^{-1/p} ds` on an interval where the gap
//! `G_β - κ` is positive, tabulated once and inverted by safeguarded Newton.

use std::fmt;
use std::io::Write;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::field::{Field, FieldError, Grid};
use crate::potential::{
    beta_range, conjugate_level, critical_points, PotentialError, PotentialParams, Regime,
    TiltedPotential,
};
use crate::quadrature::{
    fixed_rule, integrate_singular, Endpoint, QuadOptions, QuadratureError,
};
use crate::roots::{bisect, bisect_newton};

#[derive(Debug, Error)]
pub enum PhaseplaneError {
    #[error("invalid orbit window: G_beta - kappa is not positive on ({from}, {to}) for kappa = {kappa}")]
    InvalidOrbitWindow { from: f64, to: f64, kappa: f64 },
    #[error("infinite transition length: endpoint {endpoint} has singularity exponent {exponent} >= 1")]
    InfiniteTransitionLength { endpoint: f64, exponent: f64 },
    #[error("no compact pulse: integral diverges for p = {0} <= 2")]
    NoCompactPulse(f64),
    #[error("pulse has no zero crossing for beta = {beta} >= {beta_star}")]
    NoZeroCrossing { beta: f64, beta_star: f64 },
    #[error("distance out of range: no admissible beta gives transition distance {0}")]
    DistanceOutOfRange(f64),
    #[error("layer spacing incompatible with pulse chain: {0}")]
    LayerSpacing(String),
    #[error("layers too close to boundary: margin {0}")]
    TooCloseToBoundary(f64),
    #[error("arbitrary layer placement impossible in this regime ({0:?})")]
    RegimeUnsupported(Regime),
    #[error("transitions overlap: half-width {half_width} exceeds available room {room}")]
    TransitionsOverlap { half_width: f64, room: f64 },
    #[error("no closed orbit: kappa = {kappa} outside ({lo}, {hi})")]
    NoClosedOrbit { kappa: f64, lo: f64, hi: f64 },
    #[error("invalid layer specification: {0}")]
    InvalidLayers(String),
    #[error(transparent)]
    Potential(#[from] PotentialError),
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
    #[error(transparent)]
    Field(#[from] FieldError),
}

/// Offset from `±1` below which the divergent heteroclinic tail is cut.
pub const HETEROCLINIC_TRUNCATION: f64 = 1e-12;

/// Absolute tolerance on the even gaps of a pulse chain.
pub const SPACING_TOL: f64 = 1e-8;

/// `|G_β(e) - κ|` below which an endpoint counts as a zero of the gap.
const ZERO_GAP_TOL: f64 = 1e-10;

const QUAD: QuadOptions = QuadOptions {
    abs_tol: 1e-15,
    rel_tol: 1e-12,
    max_intervals: 4000,
};

/// A level set of the first integral.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrbitSpec {
    pub tilted: TiltedPotential,
    pub kappa: f64,
}

impl OrbitSpec {
    pub fn new(tilted: TiltedPotential, kappa: f64) -> Self {
        Self { tilted, kappa }
    }

    /// `ε ((p-1)/p)^{1/p}`.
    pub fn length_scale(&self) -> f64 {
        let p = self.tilted.params.p();
        self.tilted.params.epsilon() * ((p - 1.0) / p).powf(1.0 / p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum EndKind {
    /// Gap bounded away from zero.
    Regular,
    /// Simple zero of the gap.
    Turning,
    /// Double zero at a non-degenerate critical point.
    Critical,
    /// `u = ±1` on the balanced heteroclinic level; zero of order `θ`.
    Well,
}

impl EndKind {
    fn order(self, theta: f64) -> f64 {
        match self {
            EndKind::Regular => 0.0,
            EndKind::Turning => 1.0,
            EndKind::Critical => 2.0,
            EndKind::Well => theta,
        }
    }
}

/// One half of a branch, parametrised by the exact offset `t >= 0` from its endpoint.
#[derive(Debug, Clone)]
struct Half {
    orbit: OrbitSpec,
    e: f64,
    /// `s = e + dir·t`.
    dir: f64,
    kind: EndKind,
    len: f64,
    /// Start of integration; nonzero only for divergent ends.
    cutoff: f64,
    taylor_radius: f64,
    scale: f64,
    /// `(t_k, X(t_k))`, `X(t) = scale ∫_{cutoff}^{t}`.
    table: Vec<(f64, f64)>,
}

impl Half {
    fn new(orbit: OrbitSpec, e: f64, dir: f64, len: f64) -> Result<Self, PhaseplaneError> {
        let kind = classify(&orbit, e);
        let theta = orbit.tilted.params.theta();
        let p = orbit.tilted.params.p();
        let alpha = kind.order(theta) / p;
        let cutoff = if alpha >= 1.0 {
            if kind != EndKind::Well {
                return Err(PhaseplaneError::InfiniteTransitionLength {
                    endpoint: e,
                    exponent: alpha,
                });
            }
            HETEROCLINIC_TRUNCATION.min(0.5 * len)
        } else {
            0.0
        };
        let dist = (1.0 - e.abs()).abs();
        let taylor_radius = if dist > 0.0 {
            0.05f64.min(0.5 * dist)
        } else {
            0.05
        };
        let mut half = Self {
            orbit,
            e,
            dir,
            kind,
            len,
            cutoff,
            taylor_radius,
            scale: orbit.length_scale(),
            table: Vec::new(),
        };
        half.build_table(alpha)?;
        Ok(half)
    }

    fn alpha(&self) -> f64 {
        self.kind
            .order(self.orbit.tilted.params.theta())
            / self.orbit.tilted.params.p()
    }

    fn singular_start(&self) -> bool {
        self.cutoff == 0.0 && self.kind != EndKind::Regular
    }

    /// `1 - s²` at `s = e + d`, from the exact offsets `1 + e` and `1 - e`.
    fn w(&self, d: f64) -> f64 {
        ((1.0 + self.e) + d) * ((1.0 - self.e) - d)
    }

    fn f_at(&self, d: f64) -> f64 {
        let theta = self.orbit.tilted.params.theta();
        self.w(d).abs().powf(theta) / (2.0 * theta)
    }

    fn dg_at(&self, d: f64) -> f64 {
        let theta = self.orbit.tilted.params.theta();
        let w = self.w(d);
        let df = if w == 0.0 {
            0.0
        } else {
            -(self.e + d) * w.signum() * w.abs().powf(theta - 1.0)
        };
        df - self.orbit.tilted.beta
    }

    fn d2g_at(&self, d: f64) -> f64 {
        let theta = self.orbit.tilted.params.theta();
        let s = self.e + d;
        ((2.0 * theta - 1.0) * s * s - 1.0) * self.w(d).abs().powf(theta - 2.0)
    }

    /// `G_β(e + dir·t) - κ` without cancellation near the endpoint.
    fn gap(&self, t: f64) -> f64 {
        let tp = &self.orbit.tilted;
        let d = self.dir * t;
        match self.kind {
            EndKind::Well => self.f_at(d) - self.orbit.kappa,
            EndKind::Critical if t < self.taylor_radius => {
                t * t * fixed_rule(|w| (1.0 - w) * self.d2g_at(w * d), 0.0, 1.0)
            }
            EndKind::Turning if t < self.taylor_radius => {
                d * fixed_rule(|w| self.dg_at(w * d), 0.0, 1.0)
            }
            EndKind::Regular => tp.g(self.e + d) - self.orbit.kappa,
            // G(e) = κ: difference F values first so tiny tilts keep their digits.
            _ => (self.f_at(d) - self.f_at(0.0)) - tp.beta * d,
        }
    }

    fn density(&self, t: f64) -> f64 {
        let g = self.gap(t);
        if g > 0.0 {
            g.powf(-1.0 / self.orbit.tilted.params.p())
        } else {
            f64::NAN
        }
    }

    fn piece(&self, t0: f64, t1: f64) -> Result<f64, PhaseplaneError> {
        let left = if t0 == 0.0 && self.singular_start() {
            Endpoint::Singular { alpha: self.alpha() }
        } else {
            Endpoint::Regular
        };
        let r = integrate_singular(|t| self.density(t), t0, t1, left, Endpoint::Regular, QUAD)
            .map_err(|e| match e {
                QuadratureError::NonFinite(_) => self.window_error(),
                other => other.into(),
            })?;
        Ok(self.scale * r.value)
    }

    fn window_error(&self) -> PhaseplaneError {
        let a = self.e;
        let b = self.e + self.dir * self.len;
        PhaseplaneError::InvalidOrbitWindow {
            from: a.min(b),
            to: a.max(b),
            kappa: self.orbit.kappa,
        }
    }

    fn build_table(&mut self, alpha: f64) -> Result<(), PhaseplaneError> {
        if self.len == 0.0 {
            self.table = vec![(0.0, 0.0)];
            return Ok(());
        }
        let nodes: Vec<f64> = if self.cutoff > 0.0 {
            // Geometric in the distance to the divergent end.
            let k = 8 * ((self.len / self.cutoff).log10().ceil() as usize).max(1);
            (0..=k)
                .map(|i| self.cutoff * (self.len / self.cutoff).powf(i as f64 / k as f64))
                .collect()
        } else if self.kind == EndKind::Regular {
            (0..=16).map(|i| self.len * i as f64 / 16.0).collect()
        } else {
            let q = 1.0 / (1.0 - alpha);
            (0..=64).map(|i| self.len * (i as f64 / 64.0).powf(q)).collect()
        };
        for &t in &nodes[1..] {
            if !(self.gap(t) > 0.0) {
                return Err(self.window_error());
            }
        }
        if self.kind == EndKind::Regular && !(self.gap(0.0) > 0.0) {
            return Err(self.window_error());
        }
        let mut table = Vec::with_capacity(nodes.len());
        let mut acc = 0.0;
        table.push((nodes[0], 0.0));
        for w in nodes.windows(2) {
            acc += self.piece(w[0], w[1])?;
            table.push((w[1], acc));
        }
        *table.last_mut().expect("non-empty") = (self.len, acc);
        self.table = table;
        Ok(())
    }

    fn total(&self) -> f64 {
        self.table.last().map_or(0.0, |&(_, x)| x)
    }

    fn x_of_t(&self, t: f64) -> Result<f64, PhaseplaneError> {
        if t <= self.cutoff {
            return Ok(0.0);
        }
        if t >= self.len {
            return Ok(self.total());
        }
        let k = self.table.partition_point(|&(tk, _)| tk <= t) - 1;
        let (tk, xk) = self.table[k];
        Ok(xk + self.piece(tk, t)?)
    }

    /// Offset `t` with `X(t) = x`, for `0 <= x <= total`.
    fn t_of_x(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return self.cutoff;
        }
        if x >= self.total() {
            return self.len;
        }
        let k = self.table.partition_point(|&(_, xk)| xk <= x) - 1;
        let (mut lo, x0) = self.table[k];
        let (mut hi, x1) = self.table[k + 1];
        let t0 = lo;
        let mut t = lo + (x - x0) / (x1 - x0) * (hi - lo);
        for _ in 0..100 {
            let r = match self.piece(t0, t) {
                Ok(v) => x0 + v - x,
                Err(_) => f64::NAN,
            };
            if r == 0.0 {
                return t;
            }
            if r > 0.0 {
                hi = t;
            } else {
                lo = t;
            }
            let slope = self.scale * self.density(t);
            let newton = t - r / slope;
            let next = if newton.is_finite() && newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
            if (next - t).abs() <= 4.0 * f64::EPSILON * t.abs() || hi - lo <= f64::EPSILON * hi {
                return next;
            }
            t = next;
        }
        t
    }

    fn point(&self, t: f64) -> f64 {
        self.e + self.dir * t
    }
}

fn classify(orbit: &OrbitSpec, e: f64) -> EndKind {
    let tp = &orbit.tilted;
    if tp.beta == 0.0 && orbit.kappa == 0.0 && e.abs() == 1.0 {
        return EndKind::Well;
    }
    let r = tp.g(e) - orbit.kappa;
    if r.abs() > ZERO_GAP_TOL {
        return EndKind::Regular;
    }
    if tp.dg(e).abs() <= 1e-6 {
        EndKind::Critical
    } else {
        EndKind::Turning
    }
}

/// Increasing map `u ↦ x(u)` on `[from, to]`, with `x(from) = 0`.
///
/// Ends where the integral diverges (the balanced heteroclinic for `θ >= p`) are cut at
/// [`HETEROCLINIC_TRUNCATION`]; `x` is then measured from the cut.
#[derive(Debug, Clone)]
pub struct MonotoneBranch {
    from: f64,
    to: f64,
    mid: f64,
    left: Half,
    right: Half,
}

impl MonotoneBranch {
    pub fn from(&self) -> f64 {
        self.from
    }

    pub fn to(&self) -> f64 {
        self.to
    }

    pub fn total_length(&self) -> f64 {
        self.left.total() + self.right.total()
    }

    /// Whether either end was truncated.
    pub fn truncated(&self) -> bool {
        self.left.cutoff > 0.0 || self.right.cutoff > 0.0
    }

    /// Smallest and largest `u` actually reached (differs from `[from, to]` when truncated).
    pub fn reached(&self) -> (f64, f64) {
        (self.left.point(self.left.cutoff), self.right.point(self.right.cutoff))
    }

    pub fn x_of(&self, u: f64) -> Result<f64, PhaseplaneError> {
        let u = u.clamp(self.from, self.to);
        if u <= self.mid {
            self.left.x_of_t(u - self.from)
        } else {
            Ok(self.total_length() - self.right.x_of_t(self.to - u)?)
        }
    }

    /// Inverse of [`MonotoneBranch::x_of`], clamped to the reached range.
    pub fn u_of(&self, x: f64) -> f64 {
        let xl = self.left.total();
        if x <= xl {
            self.left.point(self.left.t_of_x(x))
        } else {
            self.right.point(self.right.t_of_x(self.total_length() - x))
        }
    }

    /// `du/dx = [G_β(u) - κ]^{1/p} / scale`.
    pub fn slope_at(&self, u: f64) -> f64 {
        let u = u.clamp(self.from, self.to);
        let d = if u <= self.mid {
            self.left.density(u - self.from)
        } else {
            self.right.density(self.to - u)
        };
        1.0 / (self.left.scale * d)
    }
}

/// The branch `x(u) = ε((p-1)/p)^{1/p} ∫_{from}^{u} [G_β - κ]^{-1/p}` on `[from, to]`.
pub fn profile_inverse(
    orbit: OrbitSpec,
    from: f64,
    to: f64,
) -> Result<MonotoneBranch, PhaseplaneError> {
    if !(from <= to) {
        return Err(PhaseplaneError::InvalidOrbitWindow {
            from,
            to,
            kappa: orbit.kappa,
        });
    }
    let mid = 0.5 * (from + to);
    let left = Half::new(orbit, from, 1.0, mid - from)?;
    let right = Half::new(orbit, to, -1.0, to - mid)?;
    Ok(MonotoneBranch {
        from,
        to,
        mid,
        left,
        right,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileKind {
    Heteroclinic,
    SubcriticalLayers,
    PulseChain,
    PeriodicTruncation,
    Constant,
}

impl fmt::Display for ProfileKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ProfileKind::Heteroclinic => "heteroclinic",
            ProfileKind::SubcriticalLayers => "subcritical_layers",
            ProfileKind::PulseChain => "pulse_chain",
            ProfileKind::PeriodicTruncation => "periodic_truncation",
            ProfileKind::Constant => "constant",
        };
        f.write_str(s)
    }
}

type Evaluator = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A stationary profile sampled at the cell centres of a uniform grid.
#[derive(Clone)]
pub struct SteadyProfile {
    pub params: PotentialParams,
    pub beta: f64,
    pub kappa: f64,
    pub kind: ProfileKind,
    pub samples: Field,
    pub layer_locations: Vec<f64>,
    /// Half-width of a single transition (or pulse support).
    pub half_width: f64,
    /// Points where a transition meets a plateau.
    pub junctions: Vec<f64>,
    /// Distance from the outermost transition support to the boundary.
    pub boundary_margin: Option<f64>,
    eval: Evaluator,
}

impl fmt::Debug for SteadyProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SteadyProfile")
            .field("params", &self.params)
            .field("beta", &self.beta)
            .field("kappa", &self.kappa)
            .field("kind", &self.kind)
            .field("grid", self.samples.grid())
            .field("layer_locations", &self.layer_locations)
            .field("half_width", &self.half_width)
            .field("boundary_margin", &self.boundary_margin)
            .finish()
    }
}

impl SteadyProfile {
    /// Exact profile value at `x`.
    pub fn eval(&self, x: f64) -> f64 {
        (self.eval)(x)
    }

    /// The same profile sampled on another grid.
    pub fn resample(&self, grid: Grid) -> Result<Field, FieldError> {
        Field::from_fn(grid, |x| self.eval(x))
    }

    /// The profile translated by `shift` and sampled on `grid`.
    pub fn recentred(&self, grid: Grid, shift: f64) -> Result<Self, FieldError> {
        let inner = self.eval.clone();
        let eval: Evaluator = Arc::new(move |x| inner(x - shift));
        Ok(Self {
            samples: Field::from_fn(grid, |x| eval(x))?,
            layer_locations: self.layer_locations.iter().map(|h| h + shift).collect(),
            junctions: self.junctions.iter().map(|j| j + shift).collect(),
            boundary_margin: None,
            eval,
            ..self.clone()
        })
    }

    /// Constant steady state `u ≡ value` (`β = F'(value)`).
    pub fn constant(params: PotentialParams, grid: Grid, value: f64) -> Self {
        let beta = params.df(value);
        let tilted = TiltedPotential::new(params, beta);
        Self {
            params,
            beta,
            kappa: tilted.g(value),
            kind: ProfileKind::Constant,
            samples: Field::constant(grid, value),
            layer_locations: Vec::new(),
            half_width: 0.0,
            junctions: Vec::new(),
            boundary_margin: None,
            eval: Arc::new(move |_| value),
        }
    }

    /// Two-column `x,u` CSV with the construction recorded in header comments.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), FieldError> {
        let header = vec![
            format!("theta={}", self.params.theta()),
            format!("p={}", self.params.p()),
            format!("epsilon={}", self.params.epsilon()),
            format!("beta={}", self.beta),
            format!("kappa={}", self.kappa),
            format!("kind={}", self.kind),
            format!(
                "layers={}",
                self.layer_locations
                    .iter()
                    .map(|h| h.to_string())
                    .collect::<Vec<_>>()
                    .join(";")
            ),
        ];
        self.samples.write_csv(out, &header)
    }
}

/// Balanced transition from `-1` to `1` centred at `x = 0`.
#[derive(Debug, Clone)]
struct Transition {
    branch: MonotoneBranch,
    center: f64,
    half_width: f64,
}

impl Transition {
    fn new(params: PotentialParams) -> Result<Self, PhaseplaneError> {
        let orbit = OrbitSpec::new(TiltedPotential::new(params, 0.0), 0.0);
        let branch = profile_inverse(orbit, -1.0, 1.0)?;
        let center = branch.x_of(0.0)?;
        let half_width = center.max(branch.total_length() - center);
        Ok(Self {
            branch,
            center,
            half_width,
        })
    }

    fn eval(&self, y: f64) -> f64 {
        let x = y + self.center;
        if x <= 0.0 {
            -1.0
        } else if x >= self.branch.total_length() {
            1.0
        } else {
            self.branch.u_of(x)
        }
    }
}

/// The balanced heteroclinic `u(0) = 0`, sampled at `n_samples` cell centres on
/// `[-L, L]`. For `θ < p` the transition reaches `±1` at `±L`; otherwise `L` is where
/// `|u ∓ 1|` drops below [`HETEROCLINIC_TRUNCATION`].
pub fn heteroclinic_profile(
    params: PotentialParams,
    n_samples: usize,
) -> Result<SteadyProfile, PhaseplaneError> {
    let tr = Arc::new(Transition::new(params)?);
    let half = tr.half_width;
    let grid = Grid::new(-half, half, n_samples)?;
    let eval_tr = tr.clone();
    let eval: Evaluator = Arc::new(move |x| odd_eval(&eval_tr, x));
    let samples = Field::from_fn(grid, |x| eval(x))?;
    Ok(SteadyProfile {
        params,
        beta: 0.0,
        kappa: 0.0,
        kind: ProfileKind::Heteroclinic,
        samples,
        layer_locations: vec![0.0],
        half_width: half,
        junctions: if tr.branch.truncated() {
            Vec::new()
        } else {
            vec![-half, half]
        },
        boundary_margin: None,
        eval,
    })
}

/// Evaluates the right half and reflects, so samples are exactly odd.
fn odd_eval(tr: &Transition, x: f64) -> f64 {
    if x < 0.0 {
        -tr.eval(-x)
    } else {
        tr.eval(x)
    }
}

/// Single-well pulse, centred at `x = 0` with support `[-ω, ω]`.
#[derive(Clone)]
pub struct PulseProfile {
    pub tilted: TiltedPotential,
    pub omega: f64,
    /// As returned by [`conjugate_level`]: rest value and peak for `β > 0`, swapped for `β < 0`.
    pub z_minus: f64,
    pub z_plus: f64,
    pub samples: Vec<(f64, f64)>,
    branch: Arc<MonotoneBranch>,
    sign: f64,
}

impl fmt::Debug for PulseProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PulseProfile")
            .field("tilted", &self.tilted)
            .field("omega", &self.omega)
            .field("z_minus", &self.z_minus)
            .field("z_plus", &self.z_plus)
            .field("samples", &self.samples.len())
            .finish()
    }
}

impl PulseProfile {
    pub fn rest(&self) -> f64 {
        if self.sign > 0.0 {
            self.z_minus
        } else {
            self.z_plus
        }
    }

    pub fn peak(&self) -> f64 {
        if self.sign > 0.0 {
            self.z_plus
        } else {
            self.z_minus
        }
    }

    pub fn kappa(&self) -> f64 {
        self.tilted.g(self.rest())
    }

    /// `ψ_β(x)`; equal to the rest value outside the support.
    pub fn eval(&self, x: f64) -> f64 {
        let y = self.omega - x.abs();
        if y <= 0.0 {
            return self.rest();
        }
        if y >= self.omega {
            return self.peak();
        }
        self.sign * self.branch.u_of(y)
    }

    /// `max |ε^p (p-1)/p |ψ'|^p - (G_β(ψ) - κ)|` over sample midpoints, with `ψ'` the
    /// centred difference of neighbouring samples and `ψ` evaluated exactly.
    pub fn first_integral_residual(&self) -> f64 {
        let pr = self.tilted.params;
        let p = pr.p();
        let ep = pr.epsilon().powf(p);
        let kappa = self.kappa();
        self.samples
            .windows(2)
            .filter(|w| w[1].0 > w[0].0)
            .map(|w| {
                let m = 0.5 * (w[0].0 + w[1].0);
                let slope = (w[1].1 - w[0].1) / (w[1].0 - w[0].0);
                let psi = self.eval(m);
                (ep * (p - 1.0) / p * slope.abs().powf(p) - (self.tilted.g(psi) - kappa)).abs()
            })
            .fold(0.0, f64::max)
    }
}

/// Pulse branch for `β > 0`: from the rest value `z⁻` up to the peak `z⁺`.
fn positive_pulse_branch(
    tilted: &TiltedPotential,
) -> Result<(MonotoneBranch, f64, f64), PhaseplaneError> {
    let p = tilted.params.p();
    if p <= 2.0 {
        return Err(PhaseplaneError::NoCompactPulse(p));
    }
    let (zm, zp) = conjugate_level(tilted)?;
    let orbit = OrbitSpec::new(*tilted, tilted.g(zm));
    let branch = profile_inverse(orbit, zm, zp)?;
    Ok((branch, zm, zp))
}

fn check_pulse_beta(tilted: &TiltedPotential) -> Result<(), PhaseplaneError> {
    let p = tilted.params.p();
    if p <= 2.0 {
        return Err(PhaseplaneError::NoCompactPulse(p));
    }
    let ((lo, hi), _) = beta_range(&tilted.params);
    if tilted.beta == 0.0 || !(tilted.beta > lo && tilted.beta < hi) {
        return Err(PotentialError::DegenerateCriticalStructure {
            beta: tilted.beta,
            lo,
            hi,
        }
        .into());
    }
    Ok(())
}

/// Compactly supported pulse `ψ_β`. Samples: `n_samples` uniform in `x` on `[-ω, ω]`,
/// merged with the same number uniform in `u` and a set graded towards the peak, all
/// mirrored.
pub fn pulse_profile(
    tilted: TiltedPotential,
    n_samples: usize,
) -> Result<PulseProfile, PhaseplaneError> {
    check_pulse_beta(&tilted)?;
    let sign = tilted.beta.signum();
    let positive = if sign > 0.0 { tilted } else { tilted.mirrored() };
    let (branch, zm, zp) = positive_pulse_branch(&positive)?;
    let omega = branch.total_length();
    let (z_minus, z_plus) = if sign > 0.0 { (zm, zp) } else { (-zp, -zm) };
    let n = n_samples.max(4);
    // (y, u) with y = ω - |x| the distance into the support.
    let mut half: Vec<(f64, f64)> = Vec::with_capacity(2 * n + 2);
    for i in 1..n {
        let y = omega * i as f64 / n as f64;
        half.push((y, branch.u_of(y)));
    }
    for i in 1..n {
        let u = zm + (zp - zm) * i as f64 / n as f64;
        half.push((branch.x_of(u)?, u));
    }
    // ψ is only C^{p/(p-1)} at the peak; cluster samples quadratically there.
    for i in 1..n {
        let y = omega * (1.0 - (i as f64 / n as f64).powi(2));
        half.push((y, branch.u_of(y)));
    }
    half.push((0.0, zm));
    half.push((omega, zp));
    half.sort_by(|a, b| a.0.total_cmp(&b.0));
    half.dedup_by(|a, b| (a.0 - b.0).abs() <= 1e-14 * omega);
    let mut samples = Vec::with_capacity(2 * half.len());
    for &(y, u) in &half {
        samples.push((y - omega, sign * u));
    }
    for &(y, u) in half.iter().rev().skip(1) {
        samples.push((omega - y, sign * u));
    }
    Ok(PulseProfile {
        tilted,
        omega,
        z_minus,
        z_plus,
        samples,
        branch: Arc::new(branch),
        sign,
    })
}

/// Tilt `β*` at which the pulse peak reaches `u = 0`. Beyond it the pulse has no zero
/// crossing and the transition distance is undefined.
pub fn zero_crossing_limit(params: &PotentialParams) -> Result<f64, PhaseplaneError> {
    let ((_, hi), _) = beta_range(params);
    let peak = |beta: f64| {
        conjugate_level(&TiltedPotential::new(*params, beta))
            .map(|(_, zp)| zp)
            .unwrap_or(f64::NAN)
    };
    // The peak tends to the inflection point u_- < 0 at the top of the range.
    let top = hi * (1.0 - 1e-9);
    bisect(peak, hi * 1e-6, top, 1e-15).ok_or(PhaseplaneError::DistanceOutOfRange(0.0))
}

/// `d̃(β) = 2 ((p-1)/p)^{1/p} ∫_0^{z⁺} [G_β - G_β(z⁻)]^{-1/p}`, the distance between the
/// zero crossings of a pulse for `ε = 1`.
fn scaled_distance(tilted: &TiltedPotential) -> Result<f64, PhaseplaneError> {
    check_pulse_beta(tilted)?;
    let positive = if tilted.beta > 0.0 {
        *tilted
    } else {
        tilted.mirrored()
    };
    let unit = TiltedPotential::new(positive.params.with_epsilon(1.0)?, positive.beta);
    let (zm, zp) = conjugate_level(&unit)?;
    if zp <= 0.0 {
        return Err(PhaseplaneError::NoZeroCrossing {
            beta: tilted.beta,
            beta_star: zero_crossing_limit(&tilted.params)?,
        });
    }
    let orbit = OrbitSpec::new(unit, unit.g(zm));
    let branch = profile_inverse(orbit, 0.0, zp)?;
    Ok(2.0 * branch.total_length())
}

/// `d^ε(β) = ε d̃(β)`.
pub fn transition_distance(tilted: &TiltedPotential) -> Result<f64, PhaseplaneError> {
    Ok(tilted.params.epsilon() * scaled_distance(tilted)?)
}

/// `β̄ > 0` with `d^ε(β̄) = target`, by bisection on the decreasing map `β ↦ d^ε(β)`.
pub fn solve_beta_for_distance(
    params: &PotentialParams,
    target: f64,
) -> Result<f64, PhaseplaneError> {
    let p = params.p();
    if p <= 2.0 {
        return Err(PhaseplaneError::NoCompactPulse(p));
    }
    if !(target > 0.0 && target.is_finite()) {
        return Err(PhaseplaneError::DistanceOutOfRange(target));
    }
    let d = |beta: f64| transition_distance(&TiltedPotential::new(*params, beta));
    let beta_star = zero_crossing_limit(params)?;
    // d(β*) = 0, so β* itself brackets from above.
    let mut hi = beta_star;
    let mut lo = 0.5 * beta_star;
    while d(lo)? < target {
        hi = lo;
        lo *= 0.1;
        if lo < 1e-30 {
            return Err(PhaseplaneError::DistanceOutOfRange(target));
        }
    }
    // Bisect in log β; d spans decades as β -> 0.
    for _ in 0..200 {
        let mid = (lo * hi).sqrt();
        let dm = d(mid)?;
        if (dm - target).abs() <= 1e-12 * target || (hi - lo) <= 1e-15 * hi {
            return Ok(mid);
        }
        if dm > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((lo * hi).sqrt())
}

fn check_layers(grid: &Grid, layers: &[f64]) -> Result<(), PhaseplaneError> {
    if layers.is_empty() {
        return Err(PhaseplaneError::InvalidLayers("need at least one layer".into()));
    }
    if layers.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(PhaseplaneError::InvalidLayers(
            "layer positions must be strictly increasing".into(),
        ));
    }
    if layers[0] <= grid.a() || layers[layers.len() - 1] >= grid.b() {
        return Err(PhaseplaneError::InvalidLayers(format!(
            "layers must lie inside ({}, {})",
            grid.a(),
            grid.b()
        )));
    }
    Ok(())
}

/// Chain of pulses at the tilt `β̄` fixed by `h₂ - h₁`, on plateaus `u = z⁻`.
///
/// Layers are paired `(h₁, h₂), (h₃, h₄), …`; every pair must span the same distance. With
/// an odd count the last layer is half a pulse centred on `b`, so `b - h_N` must be half
/// that distance.
pub fn build_pulse_chain(
    params: PotentialParams,
    grid: Grid,
    layers: &[f64],
) -> Result<SteadyProfile, PhaseplaneError> {
    let p = params.p();
    if p <= 2.0 {
        return Err(PhaseplaneError::NoCompactPulse(p));
    }
    check_layers(&grid, layers)?;
    if layers.len() < 2 {
        return Err(PhaseplaneError::InvalidLayers(
            "a pulse chain needs at least two layers".into(),
        ));
    }
    let d = layers[1] - layers[0];
    let mut centers = Vec::new();
    for pair in layers.chunks(2) {
        if pair.len() == 2 {
            let gap = pair[1] - pair[0];
            if (gap - d).abs() > SPACING_TOL {
                return Err(PhaseplaneError::LayerSpacing(format!(
                    "pair ({}, {}) spans {gap}, expected {d}",
                    pair[0], pair[1]
                )));
            }
            centers.push(0.5 * (pair[0] + pair[1]));
        } else {
            let tail = grid.b() - pair[0];
            if (tail - 0.5 * d).abs() > SPACING_TOL {
                return Err(PhaseplaneError::LayerSpacing(format!(
                    "odd layer count needs b - h_N = {}, got {tail}",
                    0.5 * d
                )));
            }
            centers.push(grid.b());
        }
    }
    let beta = solve_beta_for_distance(&params, d)?;
    let pulse = Arc::new(pulse_profile(TiltedPotential::new(params, beta), 16)?);
    let omega = pulse.omega;
    for w in centers.windows(2) {
        if w[1] - w[0] < 2.0 * omega {
            return Err(PhaseplaneError::LayerSpacing(format!(
                "pulses centred at {} and {} overlap (support half-width {omega})",
                w[0], w[1]
            )));
        }
    }
    let left_margin = centers[0] - omega - grid.a();
    let right_margin = if layers.len() % 2 == 0 {
        grid.b() - (centers[centers.len() - 1] + omega)
    } else {
        f64::INFINITY
    };
    let margin = left_margin.min(right_margin);
    if margin < 0.0 {
        return Err(PhaseplaneError::TooCloseToBoundary(margin));
    }
    let mut junctions = Vec::new();
    for &c in &centers {
        junctions.push(c - omega);
        if c + omega <= grid.b() {
            junctions.push(c + omega);
        }
    }
    let eval_pulse = pulse.clone();
    let eval_centers = centers.clone();
    let eval: Evaluator = Arc::new(move |x| {
        let i = eval_centers.partition_point(|&c| c < x);
        let near = [i.checked_sub(1), Some(i)]
            .into_iter()
            .flatten()
            .filter_map(|j| eval_centers.get(j))
            .map(|&c| (x - c).abs())
            .fold(f64::INFINITY, f64::min);
        if near < eval_pulse.omega {
            eval_pulse.eval(near)
        } else {
            eval_pulse.rest()
        }
    });
    let samples = Field::from_fn(grid, |x| eval(x))?;
    Ok(SteadyProfile {
        params,
        beta,
        kappa: pulse.kappa(),
        kind: ProfileKind::PulseChain,
        samples,
        layer_locations: layers.to_vec(),
        half_width: omega,
        junctions,
        boundary_margin: Some(margin),
        eval,
    })
}

/// Alternating `±1` plateaus joined by compact transitions centred at each layer
/// (increasing at `h₁`). Only possible for `θ < p`.
pub fn subcritical_steady(
    params: PotentialParams,
    grid: Grid,
    layers: &[f64],
) -> Result<SteadyProfile, PhaseplaneError> {
    let regime = params.regime();
    if regime != Regime::Subcritical {
        return Err(PhaseplaneError::RegimeUnsupported(regime));
    }
    check_layers(&grid, layers)?;
    let tr = Arc::new(Transition::new(params)?);
    let w = tr.half_width;
    let mut room = (layers[0] - grid.a()).min(grid.b() - layers[layers.len() - 1]);
    for pair in layers.windows(2) {
        room = room.min(0.5 * (pair[1] - pair[0]));
    }
    if w > room {
        return Err(PhaseplaneError::TransitionsOverlap { half_width: w, room });
    }
    let eval_tr = tr.clone();
    let eval_layers = layers.to_vec();
    let eval: Evaluator = Arc::new(move |x| {
        // Nearest layer owns x.
        let mut i = eval_layers.partition_point(|&h| h < x);
        if i == eval_layers.len()
            || (i > 0 && x - eval_layers[i - 1] < eval_layers[i] - x)
        {
            i -= 1;
        }
        let s = if i % 2 == 0 { 1.0 } else { -1.0 };
        s * odd_eval(&eval_tr, x - eval_layers[i])
    });
    let samples = Field::from_fn(grid, |x| eval(x))?;
    let junctions = layers.iter().flat_map(|&h| [h - w, h + w]).collect();
    Ok(SteadyProfile {
        params,
        beta: 0.0,
        kappa: 0.0,
        kind: ProfileKind::SubcriticalLayers,
        samples,
        layer_locations: layers.to_vec(),
        half_width: w,
        junctions,
        boundary_margin: Some(room - w),
        eval,
    })
}

/// Open window `(max(G(z⁻), G(z⁺_crit)), G(z_max))` of levels with a closed orbit.
pub fn closed_orbit_window(tilted: &TiltedPotential) -> Result<(f64, f64), PhaseplaneError> {
    if tilted.beta == 0.0 {
        let pr = tilted.params;
        return Ok((0.0, pr.f(0.0)));
    }
    let cps = critical_points(tilted)?;
    Ok((
        tilted.g(cps.z_minus).max(tilted.g(cps.z_plus_crit)),
        tilted.g(cps.z_max),
    ))
}

/// Period `2ε((p-1)/p)^{1/p} ∫_{u_lo}^{u_hi} [G_β - κ]^{-1/p}` of the closed orbit around the
/// interior maximum of `G_β`.
pub fn closed_orbit_period(orbit: OrbitSpec) -> Result<f64, PhaseplaneError> {
    let tp = orbit.tilted;
    let (lo, hi) = closed_orbit_window(&tp)?;
    let kappa = orbit.kappa;
    if !(kappa > lo && kappa < hi) {
        return Err(PhaseplaneError::NoClosedOrbit { kappa, lo, hi });
    }
    let (z_left, z_max, z_right) = if tp.beta == 0.0 {
        (-1.0, 0.0, 1.0)
    } else {
        let c = critical_points(&tp)?;
        (c.z_minus, c.z_max, c.z_plus_crit)
    };
    let gap = |u: f64| tp.g(u) - kappa;
    let dgap = |u: f64| tp.dg(u);
    let u_lo = bisect_newton(gap, dgap, z_left, z_max, 1e-15)
        .ok_or(PhaseplaneError::NoClosedOrbit { kappa, lo, hi })?;
    let u_hi = bisect_newton(gap, dgap, z_max, z_right, 1e-15)
        .ok_or(PhaseplaneError::NoClosedOrbit { kappa, lo, hi })?;
    let branch = profile_inverse(orbit, u_lo, u_hi)?;
    Ok(2.0 * branch.total_length())
}

/// Interior residual `|-ε^p Δ_h^{(p)} u + F'(u) - β|` at node `i`.
fn node_residual(profile: &SteadyProfile, i: usize) -> f64 {
    let pr = &profile.params;
    let u = profile.samples.values();
    let h = profile.samples.grid().h();
    let p = pr.p();
    let q = |j: usize| {
        let du = (u[j + 1] - u[j]) / h;
        du.abs().powf(p - 2.0) * du
    };
    let lap = (q(i) - q(i - 1)) / h;
    (-pr.epsilon().powf(p) * lap + pr.df(u[i]) - profile.beta).abs()
}

/// Maximum discrete residual of the stationary equation over interior nodes.
pub fn residual_check(profile: &SteadyProfile) -> f64 {
    let n = profile.samples.values().len();
    (1..n - 1)
        .map(|i| node_residual(profile, i))
        .fold(0.0, f64::max)
}

/// As [`residual_check`], skipping nodes whose stencil straddles a plateau junction.
pub fn residual_check_away_from_junctions(profile: &SteadyProfile) -> f64 {
    let grid = profile.samples.grid();
    let n = grid.n();
    (1..n - 1)
        .filter(|&i| {
            let (l, r) = (grid.node(i - 1), grid.node(i + 1));
            !profile.junctions.iter().any(|&j| j >= l && j <= r)
        })
        .map(|i| node_residual(profile, i))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::c_p;

    fn params(theta: f64, p: f64, eps: f64) -> PotentialParams {
        PotentialParams::new(theta, p, eps).unwrap()
    }

    #[test]
    fn tanh_branch_matches_closed_form() {
        let eps = 0.05;
        let orbit = OrbitSpec::new(TiltedPotential::new(params(2.0, 2.0, eps), 0.0), 0.0);
        let br = profile_inverse(orbit, 0.0, 0.95).unwrap();
        for k in 1..=9 {
            let u = k as f64 / 10.0;
            let oracle = 2f64.sqrt() * eps * u.atanh();
            assert!((br.x_of(u).unwrap() - oracle).abs() < 1e-8, "u = {u}");
            assert!((br.u_of(oracle) - u).abs() < 1e-10);
        }
    }

    #[test]
    fn empty_branch_has_zero_length() {
        let orbit = OrbitSpec::new(TiltedPotential::new(params(2.0, 2.0, 0.1), 0.0), 0.0);
        let br = profile_inverse(orbit, 0.3, 0.3).unwrap();
        assert_eq!(br.total_length(), 0.0);
        assert_eq!(br.x_of(0.3).unwrap(), 0.0);
    }

    #[test]
    fn negative_gap_is_invalid_window() {
        let tp = TiltedPotential::new(params(2.0, 2.0, 0.1), 0.0);
        // kappa above G at 0.9 but below at 0.
        let orbit = OrbitSpec::new(tp, tp.g(0.5));
        assert!(matches!(
            profile_inverse(orbit, 0.0, 0.9),
            Err(PhaseplaneError::InvalidOrbitWindow { .. })
        ));
        assert!(matches!(
            profile_inverse(orbit, 0.6, 0.2),
            Err(PhaseplaneError::InvalidOrbitWindow { .. })
        ));
    }

    #[test]
    fn critical_endpoint_diverges_for_p_at_most_two() {
        let tp = TiltedPotential::new(params(3.0, 2.0, 0.1), 0.1);
        let (zm, zp) = conjugate_level(&tp).unwrap();
        let orbit = OrbitSpec::new(tp, tp.g(zm));
        assert!(matches!(
            profile_inverse(orbit, zm, zp),
            Err(PhaseplaneError::InfiniteTransitionLength { .. })
        ));
        let tp3 = TiltedPotential::new(params(3.0, 3.0, 0.1), 0.1);
        let (zm, zp) = conjugate_level(&tp3).unwrap();
        let br = profile_inverse(OrbitSpec::new(tp3, tp3.g(zm)), zm, zp).unwrap();
        assert!(br.total_length().is_finite() && br.total_length() > 0.0);
    }

    #[test]
    fn taylor_gap_agrees_with_direct_gap_away_from_endpoint() {
        let tp = TiltedPotential::new(params(3.0, 3.0, 0.1), 0.1);
        let (zm, zp) = conjugate_level(&tp).unwrap();
        let orbit = OrbitSpec::new(tp, tp.g(zm));
        let br = profile_inverse(orbit, zm, zp).unwrap();
        for t in [1e-3, 1e-2, 0.04] {
            let direct_l = tp.g(zm + t) - orbit.kappa;
            let direct_r = tp.g(zp - t) - orbit.kappa;
            assert!((br.left.gap(t) - direct_l).abs() < 1e-12 * (1.0 + direct_l.abs()));
            assert!((br.right.gap(t) - direct_r).abs() < 1e-12 * (1.0 + direct_r.abs()));
        }
    }

    #[test]
    fn heteroclinic_tanh() {
        let eps = 0.05;
        let prof = heteroclinic_profile(params(2.0, 2.0, eps), 2000).unwrap();
        let grid = *prof.samples.grid();
        let err = grid
            .nodes()
            .zip(prof.samples.values())
            .map(|(x, u)| (u - (x / (2f64.sqrt() * eps)).tanh()).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-7, "{err}");
        for (i, v) in prof.samples.values().iter().enumerate() {
            assert!((v + prof.samples.values()[grid.n() - 1 - i]).abs() < 1e-14);
        }
        for x in [0.01, 0.1, 0.3] {
            assert_eq!(prof.eval(-x), -prof.eval(x));
        }
        let moved = prof.recentred(Grid::new(0.0, 1.0, 400).unwrap(), 0.4).unwrap();
        assert_eq!(moved.layer_locations, vec![0.4]);
        assert_eq!(moved.eval(0.45), prof.eval(0.05));
        assert!(residual_check(&moved) < 1e-3);
    }

    #[test]
    fn subcritical_heteroclinic_is_compact() {
        let prof = heteroclinic_profile(params(1.5, 2.0, 0.05), 512).unwrap();
        assert!(prof.half_width.is_finite() && prof.half_width > 0.0);
        assert_eq!(prof.eval(prof.half_width + 1e-9), 1.0);
        assert_eq!(prof.eval(-prof.half_width - 1e-9), -1.0);
        assert!(prof.eval(0.9 * prof.half_width) < 1.0);
        // Width oracle: ε/√2 ∫_{-1}^{1} F^{-1/2} with F = (1-s²)^{3/2}/3; s = sin φ turns it
        // into √3 ∫ cos^{-1/2} φ dφ = √3 B(1/2, 1/4) = √3 Γ(1/2)Γ(1/4)/Γ(3/4).
        let (g14, g34, g12) = (3.625_609_908_221_908_3, 1.225_416_702_465_177_7, std::f64::consts::PI.sqrt());
        let oracle = 0.05 / 2f64.sqrt() * 3f64.sqrt() * g12 * g14 / g34;
        assert!((2.0 * prof.half_width - oracle).abs() < 1e-8 * oracle, "{} {}", 2.0 * prof.half_width, oracle);
    }

    #[test]
    fn pulse_structure() {
        let tp = TiltedPotential::new(params(3.0, 3.0, 0.1), 0.1);
        let pulse = pulse_profile(tp, 4000).unwrap();
        assert_eq!(pulse.eval(0.0), pulse.z_plus);
        assert_eq!(pulse.eval(pulse.omega), pulse.z_minus);
        assert_eq!(pulse.eval(-pulse.omega), pulse.z_minus);
        assert!((tp.g(pulse.z_plus) - tp.g(pulse.z_minus)).abs() < 1e-12);
        let first = pulse.samples.first().unwrap();
        let last = pulse.samples.last().unwrap();
        assert_eq!((first.0, first.1), (-pulse.omega, pulse.z_minus));
        assert_eq!((last.0, last.1), (pulse.omega, pulse.z_minus));
        let half: Vec<_> = pulse.samples.iter().filter(|s| s.0 <= 0.0).collect();
        assert!(half.windows(2).all(|w| w[1].1 > w[0].1));
        for &(x, u) in &pulse.samples {
            assert!((pulse.eval(-x) - u).abs() < 1e-12);
        }
        let r = pulse.first_integral_residual();
        assert!(r < 1e-8, "{r}");
    }

    #[test]
    fn pulse_needs_p_above_two() {
        let tp = TiltedPotential::new(params(3.0, 2.0, 0.1), 0.1);
        assert!(matches!(pulse_profile(tp, 64), Err(PhaseplaneError::NoCompactPulse(_))));
        let tp = TiltedPotential::new(params(3.0, 3.0, 0.1), 5.0);
        assert!(matches!(pulse_profile(tp, 64), Err(PhaseplaneError::Potential(_))));
    }

    #[test]
    fn negative_tilt_mirrors() {
        let pr = params(3.0, 3.0, 0.1);
        let pos = pulse_profile(TiltedPotential::new(pr, 0.1), 200).unwrap();
        let neg = pulse_profile(TiltedPotential::new(pr, -0.1), 200).unwrap();
        assert_eq!(neg.omega, pos.omega);
        for x in [-0.2, -0.05, 0.0, 0.1, 0.3] {
            assert!((neg.eval(x) + pos.eval(-x)).abs() < 1e-14);
        }
        assert_eq!(neg.rest(), -pos.rest());
    }

    #[test]
    fn pulse_width_shrinks_with_tilt() {
        let pr = params(3.0, 3.0, 0.1);
        let w = |b| pulse_profile(TiltedPotential::new(pr, b), 16).unwrap().omega;
        assert!(w(0.2) < w(0.05));
    }

    #[test]
    fn distance_scaling_and_monotonicity() {
        let pr = params(3.0, 3.0, 0.1);
        let pr2 = params(3.0, 3.0, 0.2);
        let mut prev = f64::INFINITY;
        for b in [0.02, 0.05, 0.1, 0.15, 0.2] {
            let d1 = transition_distance(&TiltedPotential::new(pr, b)).unwrap();
            let d2 = transition_distance(&TiltedPotential::new(pr2, b)).unwrap();
            assert!((d2 / d1 - 2.0).abs() < 1e-10);
            assert!(d1 < prev);
            prev = d1;
        }
    }

    #[test]
    fn distance_diverges_logarithmically_for_critical_exponents() {
        // For θ = p the peak approaches 1 like δ ~ β^{1/p} and the integrand behaves like
        // (2p)^{1/p}/(2δ), so d grows by ε (2(p-1))^{1/p} ln(10) / p per decade of 1/β.
        let eps = 0.1;
        let pr = params(3.0, 3.0, eps);
        let d = |b: f64| transition_distance(&TiltedPotential::new(pr, b)).unwrap();
        let slope = eps * 4f64.powf(1.0 / 3.0) * 10f64.ln() / 3.0;
        let per_decade = (d(1e-9) - d(1e-7)) / 2.0;
        assert!((per_decade / slope - 1.0).abs() < 0.03, "{per_decade} vs {slope}");
        assert!(d(1e-4) > 3.0 * d(1e-1));
        assert!(d(1e-12) > d(1e-9) + 2.5 * slope);
    }

    #[test]
    fn distance_vanishes_at_zero_crossing_limit() {
        let pr = params(3.0, 3.0, 0.1);
        let bs = zero_crossing_limit(&pr).unwrap();
        // Independent check: G_β(0) = G_β(z⁻) at β*.
        let tp = TiltedPotential::new(pr, bs);
        let (zm, _) = conjugate_level(&tp).unwrap();
        assert!((tp.g(0.0) - tp.g(zm)).abs() < 1e-12);
        assert!(bs > 0.2 && bs < 0.22);
        let ds: Vec<f64> = [1e-2, 1e-4, 1e-6]
            .iter()
            .map(|f| transition_distance(&TiltedPotential::new(pr, bs * (1.0 - f))).unwrap())
            .collect();
        assert!(ds.windows(2).all(|w| w[1] < w[0]));
        assert!(ds[2] < 1e-2 * ds[0]);
        assert!(matches!(
            transition_distance(&TiltedPotential::new(pr, 0.22)),
            Err(PhaseplaneError::NoZeroCrossing { .. })
        ));
    }

    #[test]
    fn beta_round_trip() {
        let pr = params(3.0, 3.0, 0.1);
        for b0 in [0.01, 0.05, 0.1, 0.2] {
            let d = transition_distance(&TiltedPotential::new(pr, b0)).unwrap();
            let b = solve_beta_for_distance(&pr, d).unwrap();
            assert!((b - b0).abs() < 1e-8, "{b0} -> {b}");
        }
        assert!(solve_beta_for_distance(&pr, -1.0).is_err());
    }

    #[test]
    fn smaller_epsilon_needs_smaller_tilt() {
        let target = 0.2;
        let mut prev_beta = f64::INFINITY;
        let mut prev_gap = f64::INFINITY;
        for eps in [0.1, 0.05, 0.025] {
            let pr = params(3.0, 3.0, eps);
            let b = solve_beta_for_distance(&pr, target).unwrap();
            let d = transition_distance(&TiltedPotential::new(pr, b)).unwrap();
            assert!((d - target).abs() <= 1e-10 * target);
            assert!(b < prev_beta);
            let (zm, zp) = conjugate_level(&TiltedPotential::new(pr, b)).unwrap();
            let gap = (zm + 1.0).abs().max((zp - 1.0).abs());
            assert!(gap < prev_gap);
            prev_beta = b;
            prev_gap = gap;
        }
    }

    #[test]
    fn pulse_chain_spacing_rules() {
        let pr = params(3.0, 3.0, 0.02);
        let grid = Grid::new(0.0, 1.0, 1024).unwrap();
        let chain = build_pulse_chain(pr, grid, &[0.4, 0.6]).unwrap();
        let u = chain.samples.values();
        let crossings: Vec<f64> = (0..u.len() - 1)
            .filter(|&i| u[i].signum() != u[i + 1].signum())
            .map(|i| {
                let (x0, x1) = (grid.node(i), grid.node(i + 1));
                x0 - u[i] * (x1 - x0) / (u[i + 1] - u[i])
            })
            .collect();
        assert_eq!(crossings.len(), 2);
        assert!((crossings[0] - 0.4).abs() < grid.h());
        assert!((crossings[1] - 0.6).abs() < grid.h());
        assert_eq!(u[0], u[u.len() - 1]);

        assert!(matches!(
            build_pulse_chain(pr, grid, &[0.01, 0.21]),
            Err(PhaseplaneError::TooCloseToBoundary(_))
        ));
        assert!(matches!(
            build_pulse_chain(pr, grid, &[0.2, 0.4, 0.7, 0.9]),
            Err(PhaseplaneError::LayerSpacing(_))
        ));

        // The support extends about 0.75 d beyond each zero crossing, at any ε.
        let pr = params(3.0, 3.0, 0.01);
        assert!(matches!(
            build_pulse_chain(pr, grid, &[0.2, 0.4, 0.7, 0.9]),
            Err(PhaseplaneError::LayerSpacing(_))
        ));
        assert!(build_pulse_chain(pr, grid, &[0.15, 0.25, 0.6, 0.7]).is_ok());
        assert!(matches!(
            build_pulse_chain(pr, grid, &[0.15, 0.25, 0.6, 0.75]),
            Err(PhaseplaneError::LayerSpacing(_))
        ));
        // Odd count: last layer at distance d/2 from b.
        assert!(build_pulse_chain(pr, grid, &[0.3, 0.5, 0.9]).is_ok());
        assert!(matches!(
            build_pulse_chain(pr, grid, &[0.3, 0.5, 0.8]),
            Err(PhaseplaneError::LayerSpacing(_))
        ));
    }

    #[test]
    fn pulse_chain_plateaus_are_exact() {
        let pr = params(3.0, 3.0, 0.01);
        let grid = Grid::new(0.0, 1.0, 2048).unwrap();
        let chain = build_pulse_chain(pr, grid, &[0.15, 0.25, 0.6, 0.7]).unwrap();
        let tp = TiltedPotential::new(pr, chain.beta);
        let (zm, _) = conjugate_level(&tp).unwrap();
        let omega = chain.half_width;
        for (x, &u) in grid.nodes().zip(chain.samples.values()) {
            let inside = [0.2, 0.65].iter().any(|c: &f64| (x - c).abs() < omega);
            if !inside {
                assert_eq!(u, zm);
            }
        }
    }

    #[test]
    fn subcritical_errors_and_single_layer() {
        let grid = Grid::new(0.0, 1.0, 1024).unwrap();
        assert!(matches!(
            subcritical_steady(params(2.0, 2.0, 0.01), grid, &[0.2, 0.5, 0.9]),
            Err(PhaseplaneError::RegimeUnsupported(Regime::Critical))
        ));
        assert!(matches!(
            subcritical_steady(params(1.5, 2.0, 0.2), grid, &[0.2, 0.5, 0.9]),
            Err(PhaseplaneError::TransitionsOverlap { .. })
        ));
        let one = subcritical_steady(params(1.5, 2.0, 0.01), grid, &[0.3]).unwrap();
        let u = one.samples.values();
        assert!(u.windows(2).all(|w| w[1] >= w[0]));
        let mass = crate::field::mass(&one.samples);
        // Odd transition around 0.3: mass is that of the sharp step.
        assert!((mass - (0.7 - 0.3)).abs() < 1e-6, "{mass}");
    }

    #[test]
    fn subcritical_energy_is_n_transitions() {
        let pr = params(1.5, 2.0, 0.01);
        let grid = Grid::new(0.0, 1.0, 4096).unwrap();
        let prof = subcritical_steady(pr, grid, &[0.2, 0.5, 0.9]).unwrap();
        // Forward-difference energy, written independently of the dynamics module.
        let u = prof.samples.values();
        let h = grid.h();
        let eps = pr.epsilon();
        let grad: f64 = u.windows(2).map(|w| ((w[1] - w[0]) / h).powi(2) / 2.0).sum::<f64>();
        let pot: f64 = u.iter().map(|&v| pr.f(v)).sum::<f64>();
        let e = h * (eps * grad + pot / eps);
        assert!((e - 3.0 * c_p(&pr)).abs() < 1e-4, "{e} vs {}", 3.0 * c_p(&pr));
    }

    #[test]
    fn closed_orbit_limits() {
        let eps = 0.1;
        let tp = TiltedPotential::new(params(2.0, 2.0, eps), 0.0);
        let (lo, hi) = closed_orbit_window(&tp).unwrap();
        assert_eq!((lo, hi), (0.0, 0.25));
        // Small oscillation about the maximum u = 0: harmonic period 2πε/√|F''(0)|.
        let amp: f64 = 1e-3;
        let kappa = tp.g(amp);
        let per = closed_orbit_period(OrbitSpec::new(tp, kappa)).unwrap();
        let oracle = 2.0 * std::f64::consts::PI * eps;
        assert!((per / oracle - 1.0).abs() < 0.02, "{per} vs {oracle}");
        // Approaching the heteroclinic level the period grows without bound.
        let periods: Vec<f64> = [1e-2, 1e-4, 1e-6, 1e-8]
            .iter()
            .map(|&k| closed_orbit_period(OrbitSpec::new(tp, k)).unwrap())
            .collect();
        // Near the heteroclinic cycle each of the two saddles at ±1 (eigenvalue √2/ε) costs
        // (2ε/√2) ln(1/δ) with δ ~ √κ, so the period gains √2 ε ln(100) per two decades of κ.
        let step = 2f64.sqrt() * eps * 100f64.ln();
        for w in periods.windows(2) {
            assert!(w[1] > w[0]);
        }
        let last = periods[3] - periods[2];
        assert!((last / step - 1.0).abs() < 0.01, "{last} vs {step}");
        let tp2 = TiltedPotential::new(params(2.0, 2.0, 2.0 * eps), 0.0);
        let per2 = closed_orbit_period(OrbitSpec::new(tp2, kappa)).unwrap();
        assert!((per2 / per - 2.0).abs() < 1e-10);
        assert!(matches!(
            closed_orbit_period(OrbitSpec::new(tp, 0.3)),
            Err(PhaseplaneError::NoClosedOrbit { .. })
        ));
    }

    #[test]
    fn closed_orbit_with_tilt() {
        let tp = TiltedPotential::new(params(3.0, 2.5, 0.1), 0.05);
        let (lo, hi) = closed_orbit_window(&tp).unwrap();
        let per = closed_orbit_period(OrbitSpec::new(tp, 0.5 * (lo + hi))).unwrap();
        assert!(per.is_finite() && per > 0.0);
    }

    #[test]
    fn residuals() {
        let grid = Grid::new(0.0, 1.0, 64).unwrap();
        let c = SteadyProfile::constant(params(2.0, 2.0, 0.1), grid, 1.0);
        assert_eq!(residual_check(&c), 0.0);

        let r = |n| {
            let prof = heteroclinic_profile(params(2.0, 2.0, 0.05), n).unwrap();
            residual_check(&prof)
        };
        let (r1, r2) = (r(2048), r(4096));
        let ratio = r1 / r2;
        assert!((ratio - 4.0).abs() < 0.4, "{r1} {r2} {ratio}");
    }

    #[test]
    fn pulse_chain_residual() {
        let pr = params(2.0, 3.0, 0.07);
        let grid = Grid::new(0.0, 1.0, 4096).unwrap();
        let chain = build_pulse_chain(pr, grid, &[0.3, 0.7]).unwrap();
        let r = residual_check_away_from_junctions(&chain);
        assert!(r < 1e-6, "{r}");
    }

    #[test]
    fn pulse_chain_residual_is_second_order() {
        let pr = params(3.0, 3.0, 0.02);
        let r = |n| {
            let grid = Grid::new(0.0, 1.0, n).unwrap();
            residual_check_away_from_junctions(&build_pulse_chain(pr, grid, &[0.4, 0.6]).unwrap())
        };
        let ratio = r(2048) / r(4096);
        assert!((ratio - 4.0).abs() < 0.2, "{ratio}");
    }

    #[test]
    fn csv_header_records_construction() {
        let prof = heteroclinic_profile(params(2.0, 2.0, 0.1), 32).unwrap();
        let mut buf = Vec::new();
        prof.write_csv(&mut buf).unwrap();
        let (field, extra) = Field::read_csv(&buf[..]).unwrap();
        assert_eq!(field, prof.samples);
        assert!(extra.contains(&"kind=heteroclinic".to_string()));
        assert!(extra.iter().any(|l| l.starts_with("theta=")));
    }
}
