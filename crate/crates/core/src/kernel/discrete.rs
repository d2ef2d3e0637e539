//! Discrete nonlocal operator `K_n` and the diagnostics that quantify its
//! convergence to the fractional Laplacian under `n^γ` speed-up:
//!
//! * `kn_apply` — `K_n G_s(x/n) = Σ_y [G_s(y/n) - G_s(x/n)] p(y-x)`,
//! * `convdisc_gap` — `(1/n) Σ_x sup_s |n^γ K_n G_s - (-(-Δ)^{γ/2})G_s|`,
//! * `convext_lhs` / `convext_rate` — summed magnitude of the generator
//!   remainder term against the rate it must decay at,
//! * `corfrac_sum` — `(1/n) Σ_x sup_s` of consecutive-site differences of
//!   the fractional Laplacian.
//!
//! `kn_apply` is exact: `G` has compact support and `p` unit mass, so
//! `Σ_y G_s(y/n) p(y-x) - G_s(x/n)` has no truncation error at all.  The
//! diagnostics sum over finite windows and add analytic tail bounds; the
//! tails must bound the *differences* appearing in each sum (midpoint-rule
//! error, mean-value bounds), since bounding the operators separately leaves
//! an O(1) floor that does not vanish with `n`.

use super::frac_lap::frac_lap_profile;
use super::test_function::TestFunction;
use super::{delta_gamma, JumpKernel};
use crate::error::Result;

/// `K_n G_s(x/n)`, evaluated exactly via
/// `Σ_{y≠x} G_s(y/n) p(y-x) - G_s(x/n)`.
pub fn kn_apply(g: &TestFunction, s: f64, n: u64, x: i64, kernel: &JumpKernel) -> f64 {
    g.time_factor(s) * kn_profile(g, n, x, kernel)
}

/// Spatial part of `K_n G`: `Σ_{y≠x} φ(y/n) p(y-x) - φ(x/n)`.
pub(crate) fn kn_profile(g: &TestFunction, n: u64, x: i64, kernel: &JumpKernel) -> f64 {
    let (y_lo, y_hi) = support_window(g, n);
    let nf = n as f64;
    let mut sum = 0.0;
    for y in y_lo..=y_hi {
        if y == x {
            continue;
        }
        let v = g.profile(y as f64 / nf);
        if v != 0.0 {
            sum += v * kernel.prob(y - x);
        }
    }
    sum - g.profile(x as f64 / nf)
}

/// Smallest site interval containing the support of the profile.
fn support_window(g: &TestFunction, n: u64) -> (i64, i64) {
    let nf = n as f64;
    let lo = ((g.center() - g.width()) * nf).floor() as i64 - 1;
    let hi = ((g.center() + g.width()) * nf).ceil() as i64 + 1;
    (lo, hi)
}

/// `p(|z|)` for offsets `0..=max`, so window sweeps avoid re-evaluating the
/// power law; entry 0 is 0 (no self jumps).
fn prob_table(kernel: &JumpKernel, max: i64) -> Vec<f64> {
    let mut t = Vec::with_capacity(max as usize + 1);
    t.push(0.0);
    for z in 1..=max {
        t.push(kernel.prob(z));
    }
    t
}

/// Window-plus-tail evaluation of
/// `(1/n) Σ_x sup_s |n^γ K_n G_s(x/n) - (-(-Δ)^{γ/2} G_s)(x/n)|`.
///
/// Window `|x| <= (3 b_G + 1) n` is exact term by term.  Outside it the lattice
/// sum is the midpoint rule for the integral defining the fractional Laplacian
/// (the profile vanishes there), so each term is bounded by the midpoint error
/// `(24 n^2)^{-1} ∫ |∂_v^2 [φ(v) c_γ |v-u|^{-γ-1}]| dv`, summed analytically.
pub fn convdisc_gap(g: &TestFunction, n: u64, kernel: &JumpKernel, horizon: f64) -> Result<f64> {
    let gamma = kernel.gamma();
    let sup_q = g.sup_time_abs(horizon, 64);
    let nf = n as f64;
    let x_max = ((3.0 * g.support_radius() + 1.0) * nf).ceil() as i64;
    let (y_lo, y_hi) = support_window(g, n);
    let phi: Vec<f64> = (y_lo..=y_hi).map(|y| g.profile(y as f64 / nf)).collect();
    let probs = prob_table(kernel, x_max + y_hi.max(-y_lo) + 1);
    let phi_at = |x: i64| -> f64 {
        if (y_lo..=y_hi).contains(&x) {
            phi[(x - y_lo) as usize]
        } else {
            0.0
        }
    };
    let speed = nf.powf(gamma);
    let mut sum = 0.0;
    for x in -x_max..=x_max {
        let mut kn = 0.0;
        for (i, &v) in phi.iter().enumerate() {
            let y = y_lo + i as i64;
            if y != x && v != 0.0 {
                kn += v * probs[(y - x).unsigned_abs() as usize];
            }
        }
        kn -= phi_at(x);
        let continuum = frac_lap_profile(g, x as f64 / nf, gamma)?;
        sum += (speed * kn - continuum).abs();
    }
    Ok(sup_q * (sum / nf + convdisc_tail(g, n, kernel, x_max)))
}

/// Analytic bound on the `|x| > x_max` part of the gap sum: midpoint-rule
/// error of `v ↦ φ(v) c_γ |v-u|^{-γ-1}`, integrated over both tails.
fn convdisc_tail(g: &TestFunction, n: u64, kernel: &JumpKernel, x_max: i64) -> f64 {
    let gamma = kernel.gamma();
    let nf = n as f64;
    let edge = x_max as f64 / nf - g.support_radius();
    debug_assert!(edge > 0.0);
    let l1_phi = 2.0 * g.width() * g.profile_sup();
    let l1_dphi = 2.0 * g.profile_sup();
    let l1_ddphi = 2.0 * g.width() * g.profile_dxx_sup();
    kernel.c_gamma() / (12.0 * nf * nf)
        * (l1_ddphi * edge.powf(-gamma) / gamma
            + 2.0 * l1_dphi * edge.powf(-gamma - 1.0)
            + (gamma + 1.0) * l1_phi * edge.powf(-gamma - 2.0))
}

/// Summed remainder magnitude
/// `(1/n) Σ_{x,y} sup_s n^γ |G_s((x+1)/n) - G_s(x/n) + G_s(y/n) - G_s((y+1)/n)| p(y-x)`.
///
/// Exact: the increments `α_x = φ((x+1)/n) - φ(x/n)` vanish off a finite
/// window `X`, and the mass reaching outside `X` is `1 - Σ_{y∈X} p(y-x)`.
pub fn convext_lhs(g: &TestFunction, n: u64, kernel: &JumpKernel, horizon: f64) -> f64 {
    let gamma = kernel.gamma();
    let sup_q = g.sup_time_abs(horizon, 64);
    let nf = n as f64;
    let (w_lo, w_hi) = support_window(g, n);
    let xs: Vec<i64> = (w_lo - 1..=w_hi).collect();
    let alpha: Vec<f64> = xs
        .iter()
        .map(|&x| g.profile((x + 1) as f64 / nf) - g.profile(x as f64 / nf))
        .collect();
    let m = xs.len();
    let probs = prob_table(kernel, (xs[m - 1] - xs[0]).abs() + 1);
    let mut inside = 0.0;
    let mut boundary = 0.0;
    for i in 0..m {
        let mut kept = 0.0;
        for j in 0..m {
            if i == j {
                continue;
            }
            let p = probs[(xs[j] - xs[i]).unsigned_abs() as usize];
            inside += (alpha[i] - alpha[j]).abs() * p;
            kept += p;
        }
        // pairs with exactly one index in X, both orientations
        boundary += 2.0 * alpha[i].abs() * (1.0 - kept);
    }
    sup_q * nf.powf(gamma - 1.0) * (inside + boundary)
}

/// Decay rate the remainder is required to follow:
/// `max{n^{γ-2}, n^{-1}, n^{γ-1-δ_γ}}`.
pub fn convext_rate(n: u64, gamma: f64) -> f64 {
    let nf = n as f64;
    nf.powf(gamma - 2.0)
        .max(nf.powf(-1.0))
        .max(nf.powf(gamma - 1.0 - delta_gamma(gamma)))
}

/// Reference size for calibrating the implicit constant of the remainder
/// bound, and the safety factor the calibration carries.  For γ > 1 the
/// measured decay approaches the stated rate from above (local slope
/// ~ -0.47 at n = 128, tending to -(2-γ)), so equality at the reference
/// size would be violated by a few percent at larger n; the measured worst
/// ratio over n ≤ 4096 is 1.07.
const CONVEXT_REFERENCE_N: u64 = 128;
const CONVEXT_SLACK: f64 = 1.35;

/// The remainder magnitude together with the rate bound it must satisfy:
/// `rhs = C·max{n^{γ-2}, n^{-1}, n^{γ-1-δ_γ}}` with `C` calibrated at the
/// reference size (or at `n` itself when `n` is below it).
pub fn convext_bound(g: &TestFunction, n: u64, gamma: f64, horizon: f64) -> Result<(f64, f64)> {
    let kernel = JumpKernel::new(gamma, 1)?;
    let lhs = convext_lhs(g, n, &kernel, horizon);
    let n_ref = n.min(CONVEXT_REFERENCE_N);
    let c = convext_lhs(g, n_ref, &kernel, horizon) / convext_rate(n_ref, gamma);
    Ok((lhs, CONVEXT_SLACK * c * convext_rate(n, gamma)))
}

/// `(1/n) Σ_x sup_s |FL G_s((x-1)/n) - FL G_s(x/n)|` with window
/// `|x| <= (3 b_G + 1) n`; outside it each difference is bounded via the mean
/// value theorem by `n^{-1} sup |∂_u FL φ| <= n^{-1} c_γ (γ+1) ||φ||_1 d^{-γ-2}`.
pub fn corfrac_sum(g: &TestFunction, n: u64, kernel: &JumpKernel, horizon: f64) -> Result<f64> {
    let gamma = kernel.gamma();
    let sup_q = g.sup_time_abs(horizon, 64);
    let nf = n as f64;
    let x_max = ((3.0 * g.support_radius() + 1.0) * nf).ceil() as i64;
    let mut prev = frac_lap_profile(g, (-x_max - 1) as f64 / nf, gamma)?;
    let mut sum = 0.0;
    for x in -x_max..=x_max {
        let cur = frac_lap_profile(g, x as f64 / nf, gamma)?;
        sum += (prev - cur).abs();
        prev = cur;
    }
    let edge = (x_max - 1) as f64 / nf - g.support_radius();
    debug_assert!(edge > 0.0);
    let l1_phi = 2.0 * g.width() * g.profile_sup();
    let tail = 2.0 * kernel.c_gamma() * l1_phi * edge.powf(-gamma - 1.0) / nf;
    Ok(sup_q * (sum / nf + tail))
}
