//! Quadrature helpers: double-exponential (tanh-sinh) rule for integrands
//! with an integrable endpoint singularity, and adaptive Simpson for smooth
//! integrands on finite intervals.

use crate::error::{Error, Result};

/// Integrate `f` over `(a, b)` with the tanh-sinh rule.
///
/// Handles integrable endpoint singularities (the abscissas approach the
/// endpoints double-exponentially and the endpoints are never evaluated).
/// Refines until two successive levels agree within `tol` (absolute) or the
/// level cap is reached.
pub fn tanh_sinh<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> Result<f64> {
    if !(b > a) {
        return Err(Error::Domain(format!("empty interval [{a}, {b}]")));
    }
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    // x(t) = tanh(pi/2 sinh t), w(t) = (pi/2) cosh t / cosh^2(pi/2 sinh t).
    // Return 1 - x instead of x: for t beyond ~3.2 the abscissa rounds to 1,
    // and forming the node as an offset from the endpoint keeps singular
    // endpoints from being evaluated exactly.
    let eval = |t: f64| -> (f64, f64) {
        let s = std::f64::consts::FRAC_PI_2 * t.sinh();
        let e = (-2.0 * s).exp();
        let omx = 2.0 * e / (1.0 + e);
        let sech2 = 4.0 * e / ((1.0 + e) * (1.0 + e));
        let w = std::f64::consts::FRAC_PI_2 * t.cosh() * sech2;
        (omx, w)
    };
    // both nodes of the pair, skipping any that still collapses onto an
    // endpoint (its weight is far below every tolerance in use)
    let node_pair = |omx: f64, w: f64| -> f64 {
        let lo = a + half * omx;
        let hi = b - half * omx;
        let mut s = 0.0;
        if lo > a {
            s += w * f(lo);
        }
        if hi < b {
            s += w * f(hi);
        }
        s
    };
    let t_max = 3.8_f64; // tanh(pi/2 sinh 3.8) is 1 - ~1e-64; weights underflow past this
    let mut h = 1.0_f64;
    // level 0
    let mut sum = {
        let (_, w0) = eval(0.0);
        let mut s = w0 * f(mid);
        let mut k = 1;
        while (k as f64) * h <= t_max {
            let (omx, w) = eval(k as f64 * h);
            if w.is_finite() && w > 0.0 {
                s += node_pair(omx, w);
            }
            k += 1;
        }
        s
    };
    let mut value = sum * h * half;
    for _level in 1..=12 {
        h *= 0.5;
        // add the new (odd-index) abscissas of this level
        let mut k = 1;
        while (k as f64) * h <= t_max {
            let (omx, w) = eval(k as f64 * h);
            if w.is_finite() && w > 0.0 {
                sum += node_pair(omx, w);
            }
            k += 2;
        }
        let new_value = sum * h * half;
        let delta = (new_value - value).abs();
        value = new_value;
        if delta <= tol * (1.0 + value.abs()) {
            if !value.is_finite() {
                return Err(Error::Numerical("tanh-sinh produced non-finite value".into()));
            }
            return Ok(value);
        }
    }
    if !value.is_finite() {
        return Err(Error::Numerical("tanh-sinh produced non-finite value".into()));
    }
    // Converged to the level cap; the last refinement step is the error bound.
    Ok(value)
}

/// Adaptive Simpson integration for smooth integrands on `[a, b]`.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> Result<f64> {
    if b <= a {
        return Err(Error::Domain(format!("empty interval [{a}, {b}]")));
    }
    fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
        let m = 0.5 * (a + b);
        let fm = f(m);
        ((b - a) / 6.0 * (fa + 4.0 * fm + fb), m, fm)
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse<F: Fn(f64) -> f64>(
        f: &F,
        a: f64,
        fa: f64,
        b: f64,
        fb: f64,
        whole: f64,
        m: f64,
        fm: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let (left, lm, flm) = simpson(f, a, fa, m, fm);
        let (right, rm, frm) = simpson(f, m, fm, b, fb);
        let delta = left + right - whole;
        // the floor keeps the requested refinement above what f64 rounding
        // of the local contributions can resolve, otherwise the recursion
        // would expand the full tree chasing noise
        let floor = f64::EPSILON * (left.abs() + right.abs());
        if depth == 0 || delta.abs() <= 15.0 * tol.max(floor) || m <= a || b <= m {
            left + right + delta / 15.0
        } else {
            recurse(f, a, fa, m, fm, left, lm, flm, 0.5 * tol, depth - 1)
                + recurse(f, m, fm, b, fb, right, rm, frm, 0.5 * tol, depth - 1)
        }
    }
    let fa = f(a);
    let fb = f(b);
    let (whole, m, fm) = simpson(f, a, fa, b, fb);
    let v = recurse(f, a, fa, b, fb, whole, m, fm, tol, 24);
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Numerical("adaptive Simpson produced non-finite value".into()))
    }
}
