//! The double-well potential `F(u) = |1 - u²|^θ / (2θ)`, its tilted variant
//! `G_β(u) = F(u) - βu`, and the model constants `c_p` and `λ_p`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::quadrature::{integrate, QuadOptions};
use crate::roots::{bisect_newton, golden_max};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PotentialError {
    #[error("invalid potential parameters: {0}")]
    InvalidParams(String),
    #[error("range formula unsupported for theta = {0} < 2")]
    RangeFormulaUnsupported(f64),
    #[error("degenerate critical structure: beta = {beta} outside open interval ({lo}, {hi})")]
    DegenerateCriticalStructure { beta: f64, lo: f64, hi: f64 },
    #[error("no admissible beta: conjugate level needs beta != 0 strictly inside the admissible range")]
    NoAdmissibleBeta,
    #[error("conjugate level not found for beta = {0}")]
    ConjugateLevelNotFound(f64),
}

/// Relative tolerance used to decide `θ = p`.
pub const REGIME_TOL: f64 = 1e-12;

/// Root refinement target for critical points.
const ROOT_TOL: f64 = 1e-13;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    /// `θ < p`: compact heteroclinics, arbitrary layer placement.
    Subcritical,
    /// `θ = p`: exponentially slow motion.
    Critical,
    /// `θ > p`: algebraically slow motion.
    Supercritical,
}

/// Exponents `θ`, `p` and interface length scale `ε`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PotentialParams {
    theta: f64,
    p: f64,
    epsilon: f64,
}

impl PotentialParams {
    pub fn new(theta: f64, p: f64, epsilon: f64) -> Result<Self, PotentialError> {
        if !(theta.is_finite() && theta > 1.0) {
            return Err(PotentialError::InvalidParams(format!(
                "theta must exceed 1, got {theta}"
            )));
        }
        if !(p.is_finite() && p > 1.0) {
            return Err(PotentialError::InvalidParams(format!(
                "p must exceed 1, got {p}"
            )));
        }
        if !(epsilon.is_finite() && epsilon > 0.0) {
            return Err(PotentialError::InvalidParams(format!(
                "epsilon must be positive, got {epsilon}"
            )));
        }
        Ok(Self { theta, p, epsilon })
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// Same exponents, different `ε`.
    pub fn with_epsilon(&self, epsilon: f64) -> Result<Self, PotentialError> {
        Self::new(self.theta, self.p, epsilon)
    }

    pub fn regime(&self) -> Regime {
        let scale = self.theta.abs().max(self.p.abs());
        if (self.theta - self.p).abs() <= REGIME_TOL * scale {
            Regime::Critical
        } else if self.theta < self.p {
            Regime::Subcritical
        } else {
            Regime::Supercritical
        }
    }

    pub fn f(&self, u: f64) -> f64 {
        let w = (1.0 - u) * (1.0 + u);
        w.abs().powf(self.theta) / (2.0 * self.theta)
    }

    /// `F'(u) = -u(1-u²)|1-u²|^{θ-2}`, continuously extended by 0 at `u = ±1`.
    pub fn df(&self, u: f64) -> f64 {
        let w = (1.0 - u) * (1.0 + u);
        if w == 0.0 {
            return 0.0;
        }
        -u * w.signum() * w.abs().powf(self.theta - 1.0)
    }

    /// `F''(u) = [(2θ-1)u² - 1]|1-u²|^{θ-2}`.
    ///
    /// For `θ < 2` this is unbounded at `±1`; `|1-u²|` is floored at `1e-12` there so the
    /// value stays finite (it is only used in Jacobians and Newton corrections).
    pub fn d2f(&self, u: f64) -> f64 {
        let w = ((1.0 - u) * (1.0 + u)).abs();
        let w = if self.theta < 2.0 { w.max(1e-12) } else { w };
        ((2.0 * self.theta - 1.0) * u * u - 1.0) * w.powf(self.theta - 2.0)
    }

    /// Inflection points `u_± = ±(2θ-1)^{-1/2}` of `F`.
    pub fn inflection_points(&self) -> (f64, f64) {
        let u = (2.0 * self.theta - 1.0).powf(-0.5);
        (-u, u)
    }
}

pub fn eval_f(u: f64, params: &PotentialParams) -> f64 {
    params.f(u)
}

pub fn eval_df(u: f64, params: &PotentialParams) -> f64 {
    params.df(u)
}

/// `G_β(u) = F(u) - βu`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TiltedPotential {
    pub params: PotentialParams,
    pub beta: f64,
}

impl TiltedPotential {
    pub fn new(params: PotentialParams, beta: f64) -> Self {
        Self { params, beta }
    }

    pub fn g(&self, u: f64) -> f64 {
        self.params.f(u) - self.beta * u
    }

    pub fn dg(&self, u: f64) -> f64 {
        self.params.df(u) - self.beta
    }

    pub fn d2g(&self, u: f64) -> f64 {
        self.params.d2f(u)
    }

    /// The same potential with the tilt reversed; `G_β(u) = G_{-β}(-u)`.
    pub fn mirrored(&self) -> Self {
        Self {
            params: self.params,
            beta: -self.beta,
        }
    }
}

pub fn eval_g(u: f64, tilted: &TiltedPotential) -> f64 {
    tilted.g(u)
}

pub fn eval_dg(u: f64, tilted: &TiltedPotential) -> f64 {
    tilted.dg(u)
}

/// Open interval `(F'(u₊), F'(u₋))` of tilts with three critical points, from the closed
/// form. Only valid for `θ >= 2`.
pub fn admissible_beta_range(params: &PotentialParams) -> Result<(f64, f64), PotentialError> {
    let theta = params.theta();
    if theta < 2.0 {
        return Err(PotentialError::RangeFormulaUnsupported(theta));
    }
    let c = (2.0 * theta - 1.0).powf(0.5 - theta) * (2.0 * theta - 2.0).powf(theta - 1.0);
    Ok((-c, c))
}

/// Same interval located numerically: golden-section search for the extrema of `F'` on
/// `[-1, 0]` and `[0, 1]`. Works for every `θ > 1`.
pub fn admissible_beta_range_numeric(params: &PotentialParams) -> (f64, f64) {
    let u_left = golden_max(|u| params.df(u), -1.0, 0.0, 1e-12);
    let u_right = golden_max(|u| -params.df(u), 0.0, 1.0, 1e-12);
    (params.df(u_right), params.df(u_left))
}

/// Admissible range by the closed form where it applies, numerically otherwise. The flag
/// is `true` when the numeric route was taken.
pub fn beta_range(params: &PotentialParams) -> ((f64, f64), bool) {
    match admissible_beta_range(params) {
        Ok(r) => (r, false),
        Err(_) => (admissible_beta_range_numeric(params), true),
    }
}

/// The three critical points of `G_β` and the inflection points `u_±`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalPointSet {
    pub z_minus: f64,
    pub z_max: f64,
    pub z_plus_crit: f64,
    pub u_minus: f64,
    pub u_plus: f64,
    /// The admissible range was computed numerically (`θ < 2`).
    pub numeric_range: bool,
}

pub fn critical_points(tilted: &TiltedPotential) -> Result<CriticalPointSet, PotentialError> {
    let params = tilted.params;
    let ((lo, hi), numeric_range) = beta_range(&params);
    let beta = tilted.beta;
    if !(beta > lo && beta < hi) {
        return Err(PotentialError::DegenerateCriticalStructure { beta, lo, hi });
    }
    let (u_minus, u_plus) = params.inflection_points();
    let g1 = |u: f64| tilted.dg(u);
    let g2 = |u: f64| tilted.d2g(u);
    let root = |a: f64, b: f64| {
        bisect_newton(g1, g2, a, b, ROOT_TOL).ok_or(PotentialError::DegenerateCriticalStructure {
            beta,
            lo,
            hi,
        })
    };
    // F' -> -inf left of -1 and +inf right of 1; |F'(±2)| = 2·3^{θ-1} exceeds any admissible β.
    let z_minus = root(-2.0, u_minus)?;
    let z_max = root(u_minus, u_plus)?;
    let z_plus_crit = root(u_plus, 2.0)?;
    Ok(CriticalPointSet {
        z_minus,
        z_max,
        z_plus_crit,
        u_minus,
        u_plus,
        numeric_range,
    })
}

/// Rest value and peak of the pulse: `(z⁻, z⁺)` with `G_β(z⁺) = G_β(z⁻)`.
///
/// For `β > 0` the rest value is the leftmost critical point and the peak lies to the right
/// of the interior maximum. For `β < 0` the construction is mirrored, so the rest value is
/// the rightmost critical point (returned as `z_plus`) and `z_minus` is the pulse minimum.
pub fn conjugate_level(tilted: &TiltedPotential) -> Result<(f64, f64), PotentialError> {
    if tilted.beta == 0.0 || !tilted.beta.is_finite() {
        return Err(PotentialError::NoAdmissibleBeta);
    }
    if tilted.beta < 0.0 {
        let (zm, zp) = conjugate_level(&tilted.mirrored())?;
        return Ok((-zp, -zm));
    }
    let cps = critical_points(tilted).map_err(|_| PotentialError::NoAdmissibleBeta)?;
    let level = tilted.g(cps.z_minus);
    let z_plus = bisect_newton(
        |u| tilted.g(u) - level,
        |u| tilted.dg(u),
        cps.z_max,
        cps.z_plus_crit,
        ROOT_TOL,
    )
    .ok_or(PotentialError::ConjugateLevelNotFound(tilted.beta))?;
    Ok((cps.z_minus, z_plus))
}

/// `c_p = (p/(p-1))^{(p-1)/p} ∫_{-1}^{1} F(s)^{(p-1)/p} ds`, the energy of one transition.
pub fn c_p(params: &PotentialParams) -> f64 {
    let p = params.p();
    let expo = (p - 1.0) / p;
    let opts = QuadOptions {
        abs_tol: 5e-14,
        rel_tol: 1e-13,
        max_intervals: 2000,
    };
    // Even integrand: integrate [0, 1] and double.
    let half = integrate(|s| params.f(s).powf(expo), 0.0, 1.0, opts)
        .expect("F^{(p-1)/p} is bounded and continuous on [0, 1]")
        .value;
    (p / (p - 1.0)).powf(expo) * 2.0 * half
}

/// `λ_p = 2^{1-1/p} (p-1)^{-1/p}`.
pub fn lambda_p(p: f64) -> f64 {
    2f64.powf(1.0 - 1.0 / p) * (p - 1.0).powf(-1.0 / p)
}
