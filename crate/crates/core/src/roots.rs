//! Scalar root finding and bracketed extremum search.

/// Width at which bracketing hands over to Newton refinement.
const BISECTION_WIDTH: f64 = 1e-6;

/// Root of `f` in `[lo, hi]` (with `f(lo)` and `f(hi)` of opposite sign).
///
/// Bisection shrinks the bracket to `1e-6`, then Newton polishes to `tol`. A Newton step
/// that leaves the bracket or fails to shrink the residual falls back to bisection, which
/// keeps the method safe where `df` is unbounded or discontinuous.
pub fn bisect_newton<F, D>(f: F, df: D, mut lo: f64, mut hi: f64, tol: f64) -> Option<f64>
where
    F: Fn(f64) -> f64,
    D: Fn(f64) -> f64,
{
    let mut f_lo = f(lo);
    let f_hi = f(hi);
    if f_lo == 0.0 {
        return Some(lo);
    }
    if f_hi == 0.0 {
        return Some(hi);
    }
    if f_lo.signum() == f_hi.signum() || !f_lo.is_finite() || !f_hi.is_finite() {
        return None;
    }
    while hi - lo > BISECTION_WIDTH {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid);
        if fm == 0.0 {
            return Some(mid);
        }
        if fm.signum() == f_lo.signum() {
            lo = mid;
            f_lo = fm;
        } else {
            hi = mid;
        }
    }
    let mut x = 0.5 * (lo + hi);
    for _ in 0..200 {
        let fx = f(x);
        if fx == 0.0 {
            return Some(x);
        }
        if fx.signum() == f_lo.signum() {
            lo = x;
            f_lo = fx;
        } else {
            hi = x;
        }
        if hi - lo <= tol {
            return Some(0.5 * (lo + hi));
        }
        let d = df(x);
        let newton = x - fx / d;
        let next = if d.is_finite() && d != 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if (next - x).abs() <= tol {
            return Some(next);
        }
        x = next;
    }
    Some(0.5 * (lo + hi))
}

/// Plain bisection down to an absolute bracket width `tol`.
pub fn bisect<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, tol: f64) -> Option<f64> {
    // A NaN derivative forces every refinement step onto the bisection branch.
    bisect_newton(&f, |_| f64::NAN, lo.min(hi), lo.max(hi), tol)
}

/// Location of the maximum of a unimodal `f` on `[lo, hi]` by golden-section search.
pub fn golden_max<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = hi - inv_phi * (hi - lo);
    let mut d = lo + inv_phi * (hi - lo);
    let mut fc = f(c);
    let mut fd = f(d);
    while hi - lo > tol {
        if fc > fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - inv_phi * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + inv_phi * (hi - lo);
            fd = f(d);
        }
    }
    0.5 * (lo + hi)
}
