//! Adaptive Gauss–Kronrod quadrature with optional algebraic endpoint singularities.
//!
//! The integrator is a global-subdivision scheme in the style of QUADPACK's QAG: the
//! interval with the largest error estimate is bisected until the summed estimate meets
//! the requested tolerance. Endpoint singularities of the form `|s - e|^{-alpha}` with
//! `alpha < 1` are removed by the substitution `s = e ± t^q`, `q = 1/(1 - alpha)`, which
//! turns the integrand into a bounded function of `t`.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuadratureError {
    #[error("quadrature did not converge: estimate {estimate:e} exceeds tolerance {tolerance:e} after {intervals} subintervals")]
    NotConverged {
        estimate: f64,
        tolerance: f64,
        intervals: usize,
    },
    #[error("integrand returned a non-finite value at s = {0}")]
    NonFinite(f64),
    #[error("singularity exponent {0} is not integrable (needs alpha < 1)")]
    NonIntegrable(f64),
}

/// Tolerances for [`integrate`].
#[derive(Debug, Clone, Copy)]
pub struct QuadOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_intervals: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        Self {
            abs_tol: 1e-13,
            rel_tol: 1e-12,
            max_intervals: 4000,
        }
    }
}

impl QuadOptions {
    pub fn with_abs_tol(abs_tol: f64) -> Self {
        Self {
            abs_tol,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct QuadResult {
    pub value: f64,
    pub error: f64,
    pub intervals: usize,
}

// Kronrod abscissae for the 15-point rule; odd indices are the 7-point Gauss nodes.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// One 15-point Kronrod panel on `[a, b]`; returns `(kronrod, |kronrod - gauss|)`.
fn gk15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> Result<(f64, f64), QuadratureError> {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    if !fc.is_finite() {
        return Err(QuadratureError::NonFinite(center));
    }
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = half * XGK[j];
        let (x1, x2) = (center - dx, center + dx);
        let f1 = f(x1);
        let f2 = f(x2);
        if !f1.is_finite() {
            return Err(QuadratureError::NonFinite(x1));
        }
        if !f2.is_finite() {
            return Err(QuadratureError::NonFinite(x2));
        }
        kronrod += WGK[j] * (f1 + f2);
        if j % 2 == 1 {
            gauss += WG[j / 2] * (f1 + f2);
        }
    }
    Ok((kronrod * half, ((kronrod - gauss) * half).abs()))
}

/// Fixed 15-point Kronrod rule on `[a, b]`, for smooth integrands where adaptivity is
/// unnecessary (exact for polynomials up to degree 22).
pub fn fixed_rule<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64) -> f64 {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut sum = f(center) * WGK[7];
    for j in 0..7 {
        let dx = half * XGK[j];
        sum += WGK[j] * (f(center - dx) + f(center + dx));
    }
    sum * half
}

struct Panel {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

/// Adaptive integration of a bounded integrand over `[a, b]`.
pub fn integrate<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    opts: QuadOptions,
) -> Result<QuadResult, QuadratureError> {
    if a == b {
        return Ok(QuadResult {
            value: 0.0,
            error: 0.0,
            intervals: 0,
        });
    }
    let (value, error) = gk15(&mut f, a, b)?;
    let mut heap = BinaryHeap::new();
    heap.push(Panel { a, b, value, error });
    let mut total = value;
    let mut total_err = error;
    let mut count = 1usize;
    loop {
        let tol = opts.abs_tol.max(opts.rel_tol * total.abs());
        if total_err <= tol {
            break;
        }
        if count >= opts.max_intervals {
            return Err(QuadratureError::NotConverged {
                estimate: total_err,
                tolerance: tol,
                intervals: count,
            });
        }
        let worst = heap.pop().expect("heap is never empty");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // Panel can no longer be split in floating point; accept what we have.
            heap.push(Panel {
                error: 0.0,
                ..worst
            });
            total_err -= worst.error;
            continue;
        }
        let (v1, e1) = gk15(&mut f, worst.a, mid)?;
        let (v2, e2) = gk15(&mut f, mid, worst.b)?;
        total += v1 + v2 - worst.value;
        total_err += e1 + e2 - worst.error;
        heap.push(Panel {
            a: worst.a,
            b: mid,
            value: v1,
            error: e1,
        });
        heap.push(Panel {
            a: mid,
            b: worst.b,
            value: v2,
            error: e2,
        });
        count += 1;
    }
    // Re-sum from panels to shed accumulated cancellation in the running total.
    let value: f64 = heap.iter().map(|p| p.value).sum();
    let error: f64 = heap.iter().map(|p| p.error).sum();
    Ok(QuadResult {
        value,
        error,
        intervals: count,
    })
}

/// Behaviour of an integrand at one endpoint.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Endpoint {
    Regular,
    /// Integrand behaves like `|s - e|^{-alpha}` with `0 <= alpha < 1`.
    Singular { alpha: f64 },
}

fn substitution_power(alpha: f64) -> Result<f64, QuadratureError> {
    if !(0.0..1.0).contains(&alpha) {
        return Err(QuadratureError::NonIntegrable(alpha));
    }
    Ok(1.0 / (1.0 - alpha))
}

/// Integrate over `[a, b]` where either endpoint may carry an algebraic singularity.
///
/// A singular endpoint `e` is handled on the half of the interval adjacent to it by
/// `s = e ± t^q`; the integrand closure always receives the physical variable `s`.
pub fn integrate_singular<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    left: Endpoint,
    right: Endpoint,
    opts: QuadOptions,
) -> Result<QuadResult, QuadratureError> {
    integrate_singular_offset(|s, _| f(s), a, b, left, right, opts)
}

/// As [`integrate_singular`], but the closure also receives `d = s - e`, the signed
/// offset from the endpoint `e` of the half containing `s`, computed without rounding
/// through `s`. Integrands with cancellation near `e` should use `d`.
pub fn integrate_singular_offset<F: FnMut(f64, f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    left: Endpoint,
    right: Endpoint,
    opts: QuadOptions,
) -> Result<QuadResult, QuadratureError> {
    if a == b {
        return Ok(QuadResult {
            value: 0.0,
            error: 0.0,
            intervals: 0,
        });
    }
    if b < a {
        let r = integrate_singular_offset(f, b, a, right, left, opts)?;
        return Ok(QuadResult {
            value: -r.value,
            ..r
        });
    }
    if let (Endpoint::Regular, Endpoint::Regular) = (left, right) {
        let mid = 0.5 * (a + b);
        return integrate(
            |s| if s <= mid { f(s, s - a) } else { f(s, s - b) },
            a,
            b,
            opts,
        );
    }
    let mid = 0.5 * (a + b);
    let half_opts = QuadOptions {
        abs_tol: 0.5 * opts.abs_tol,
        ..opts
    };
    let lo = integrate_half(&mut f, a, mid, left, true, half_opts)?;
    let hi = integrate_half(&mut f, mid, b, right, false, half_opts)?;
    Ok(QuadResult {
        value: lo.value + hi.value,
        error: lo.error + hi.error,
        intervals: lo.intervals + hi.intervals,
    })
}

fn integrate_half<F: FnMut(f64, f64) -> f64>(
    f: &mut F,
    a: f64,
    b: f64,
    endpoint: Endpoint,
    singular_at_left: bool,
    opts: QuadOptions,
) -> Result<QuadResult, QuadratureError> {
    let e = if singular_at_left { a } else { b };
    match endpoint {
        Endpoint::Regular => integrate(|s| f(s, s - e), a, b, opts),
        Endpoint::Singular { alpha } => {
            let q = substitution_power(alpha)?;
            let len = b - a;
            let t_max = len.powf(1.0 / q);
            let sign = if singular_at_left { 1.0 } else { -1.0 };
            integrate(
                |t: f64| {
                    if t <= 0.0 {
                        return 0.0;
                    }
                    let d = sign * t.powf(q).min(len);
                    f(e + d, d) * q * t.powf(q - 1.0)
                },
                0.0,
                t_max,
                opts,
            )
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_is_exact() {
        let r = integrate(|x| x * x * x - 2.0 * x, 0.0, 2.0, QuadOptions::default()).unwrap();
        assert!((r.value - 0.0).abs() < 1e-14);
        let r = integrate(|x| x.powi(6), -1.0, 1.0, QuadOptions::default()).unwrap();
        assert!((r.value - 2.0 / 7.0).abs() < 1e-15);
    }

    #[test]
    fn empty_interval_is_zero() {
        let r = integrate(|_| 1.0, 0.3, 0.3, QuadOptions::default()).unwrap();
        assert_eq!(r.value, 0.0);
    }

    #[test]
    fn kink_needs_subdivision() {
        let r = integrate(|x: f64| x.abs(), -1.0, 0.7, QuadOptions::default()).unwrap();
        assert!((r.value - (0.5 + 0.245)).abs() < 1e-12);
    }

    #[test]
    fn inverse_sqrt_singularity() {
        // ∫_0^1 s^{-1/2} ds = 2
        let r = integrate_singular(
            |s: f64| s.powf(-0.5),
            0.0,
            1.0,
            Endpoint::Singular { alpha: 0.5 },
            Endpoint::Regular,
            QuadOptions::default(),
        )
        .unwrap();
        assert!((r.value - 2.0).abs() < 1e-12, "{}", r.value);
    }

    #[test]
    fn beta_function_both_ends() {
        // ∫_0^1 s^{-1/3}(1-s)^{-2/3} ds = B(2/3, 1/3) = π / sin(π/3)
        let exact = std::f64::consts::PI / (std::f64::consts::PI / 3.0).sin();
        let r = integrate_singular_offset(
            |s: f64, d: f64| {
                let (x, y) = if d >= 0.0 { (d, 1.0 - s) } else { (s, -d) };
                x.powf(-1.0 / 3.0) * y.powf(-2.0 / 3.0)
            },
            0.0,
            1.0,
            Endpoint::Singular { alpha: 1.0 / 3.0 },
            Endpoint::Singular { alpha: 2.0 / 3.0 },
            QuadOptions::default(),
        )
        .unwrap();
        assert!((r.value - exact).abs() < 1e-10, "{} vs {}", r.value, exact);
    }

    #[test]
    fn reversed_bounds_negate() {
        let f = |s: f64| (1.0 - s).powf(-0.25);
        let fwd = integrate_singular(
            f,
            0.0,
            1.0,
            Endpoint::Regular,
            Endpoint::Singular { alpha: 0.25 },
            QuadOptions::default(),
        )
        .unwrap();
        let rev = integrate_singular(
            f,
            1.0,
            0.0,
            Endpoint::Singular { alpha: 0.25 },
            Endpoint::Regular,
            QuadOptions::default(),
        )
        .unwrap();
        assert!((fwd.value + rev.value).abs() < 1e-14);
        assert!((fwd.value - 4.0 / 3.0).abs() < 1e-11);
    }

    #[test]
    fn rejects_non_integrable_exponent() {
        let err = integrate_singular(
            |s: f64| 1.0 / s,
            0.0,
            1.0,
            Endpoint::Singular { alpha: 1.0 },
            Endpoint::Regular,
            QuadOptions::default(),
        )
        .unwrap_err();
        assert_eq!(err, QuadratureError::NonIntegrable(1.0));
    }

    #[test]
    fn fixed_rule_on_smooth_function() {
        let v = fixed_rule(|x: f64| x.exp(), 0.0, 1.0);
        assert!((v - (1f64.exp() - 1.0)).abs() < 1e-15);
    }
}
