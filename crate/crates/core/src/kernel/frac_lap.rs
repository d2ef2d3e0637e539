//! Fractional Laplacian `-(-Δ)^{γ/2}` of a test function, in the symmetrised
//! form
//!
//! `c_γ ∫_0^∞ [G(u+w) + G(u-w) - 2G(u)] w^{-γ-1} dw`,
//!
//! together with a closed-form envelope that dominates it pointwise.
//!
//! The quadrature splits at `w = 3 b_G` (support radius `b_G`): beyond that
//! point the compact support collapses the integrand to a power law that is
//! integrated exactly.  Inside, a Taylor segment below `δ` removes the
//! cancellation of the second difference and the rest is handled adaptively.

use super::test_function::TestFunction;
use super::{check_gamma, normalizer};
use crate::error::{Error, Result};
use crate::quad::adaptive_simpson;

/// `-(-Δ)^{γ/2}` applied to the spatial profile of `g`, at position `u`.
///
/// Absolute accuracy target `1e-9`.
pub fn frac_lap_profile(g: &TestFunction, u: f64, gamma: f64) -> Result<f64> {
    check_gamma(gamma)?;
    let c = normalizer(gamma)?;
    let b = g.support_radius();
    let abs_u = u.abs();
    if abs_u > 2.0 * b {
        // G(u) = 0 and only one of G(u±w) can be nonzero, on a w-interval
        // bounded away from the singularity.
        let lo = abs_u - b;
        let hi = abs_u + b;
        let sgn = if u > 0.0 { -1.0 } else { 1.0 }; // evaluate G(u - w) resp. G(u + w)
        let v = adaptive_simpson(
            &|w: f64| g.profile(u + sgn * w) * w.powf(-gamma - 1.0),
            lo,
            hi,
            1e-12,
        )?;
        return Ok(c * v);
    }
    // |u| <= 2b: all of G(u±w), G(u) may be nonzero; for w >= 3b both G(u±w)
    // vanish, leaving the -2G(u) tail in closed form.
    let cut = 3.0 * b;
    let delta = 1e-3 * g.width();
    // (0, δ]: 2[φ''(u) w^2/2 + φ''''(u) w^4/24 + O(w^6)] w^{-γ-1}, integrated
    let d2 = second_derivative(g, u);
    let d4 = fourth_derivative(g, u);
    let near = d2 * delta.powf(2.0 - gamma) / (2.0 - gamma)
        + d4 / 12.0 * delta.powf(4.0 - gamma) / (4.0 - gamma);
    // [δ, 3b]: second difference is no longer cancellation-dominated
    let mid = adaptive_simpson(
        &|w: f64| {
            (g.profile(u + w) + g.profile(u - w) - 2.0 * g.profile(u)) * w.powf(-gamma - 1.0)
        },
        delta,
        cut,
        1e-12,
    )?;
    let far = -2.0 * g.profile(u) * cut.powf(-gamma) / gamma;
    let v = c * (near + mid + far);
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Numerical(format!("frac_lap not finite at u = {u}")))
    }
}

/// `-(-Δ)^{γ/2} G_s(u) = q(s) · (-(-Δ)^{γ/2} φ)(u)`.
pub fn frac_lap(g: &TestFunction, s: f64, u: f64, gamma: f64) -> Result<f64> {
    Ok(g.time_factor(s) * frac_lap_profile(g, u, gamma)?)
}

/// Closed-form envelope `H(u)` with `|(-(-Δ)^{γ/2} G_s)(u)| <= H(u)`:
///
/// * `|u| <= 2 b_G`: `c_γ ||ΔG_s||_∞ (3 b_G)^{2-γ} / (2-γ)`
/// * `|u| >  2 b_G`: `c_γ ||G_s||_∞ [(|u|-b_G)^{-γ} - (|u|+b_G)^{-γ}] / γ`
pub fn frac_lap_envelope(g: &TestFunction, s: f64, u: f64, gamma: f64) -> Result<f64> {
    check_gamma(gamma)?;
    let c = normalizer(gamma)?;
    let b = g.support_radius();
    let q = g.time_factor(s).abs();
    let abs_u = u.abs();
    if abs_u <= 2.0 * b {
        Ok(c * q * g.profile_dxx_sup() * (3.0 * b).powf(2.0 - gamma) / (2.0 - gamma))
    } else {
        let sup = q * g.profile_sup();
        Ok(c * sup * ((abs_u - b).powf(-gamma) - (abs_u + b).powf(-gamma)) / gamma)
    }
}

fn second_derivative(g: &TestFunction, u: f64) -> f64 {
    g.profile_dxx(u)
}

/// `φ''''(u)` by Faà di Bruno on `ψ(s) = exp(g(s))`, `g = -(1-s^2)^{-1}`.
fn fourth_derivative(g: &TestFunction, u: f64) -> f64 {
    let s = (u - g.center()) / g.width();
    if s.abs() >= 1.0 {
        return 0.0;
    }
    let r = 1.0 - s * s;
    let psi = (-1.0 / r).exp();
    let g1 = -2.0 * s / (r * r);
    let g2 = -2.0 / (r * r) - 8.0 * s * s / r.powi(3);
    let g3 = -24.0 * s / r.powi(3) - 48.0 * s * s * s / r.powi(4);
    let g4 = -24.0 / r.powi(3) - 288.0 * s * s / r.powi(4) - 384.0 * s.powi(4) / r.powi(5);
    let d4 = psi
        * (g4 + 4.0 * g1 * g3 + 3.0 * g2 * g2 + 6.0 * g1 * g1 * g2 + g1.powi(4));
    d4 / g.width().powi(4)
}

/// Used by tests: tanh-sinh evaluation of the full singular integral,
/// exercising a different quadrature path than the production split.
#[cfg(test)]
pub(crate) fn frac_lap_profile_tanh_sinh(g: &TestFunction, u: f64, gamma: f64) -> Result<f64> {
    let c = normalizer(gamma)?;
    let b = g.support_radius();
    let cut = 3.0 * b + u.abs();
    let inner = crate::quad::tanh_sinh(
        |w: f64| {
            (g.profile(u + w) + g.profile(u - w) - 2.0 * g.profile(u)) * w.powf(-gamma - 1.0)
        },
        0.0,
        cut,
        1e-12,
    )?;
    let far = -2.0 * g.profile(u) * cut.powf(-gamma) / gamma;
    Ok(c * (inner + far))
}
