//! Empirical measures of particle configurations, box averages, relative
//! entropy of product measures, and the replacement-gap estimators that track
//! how well local products are approximated by block densities.
//!
//! Macroscopic embedding: site `x` of a ring of `N = n·W` sites sits at
//! `u = (x - N/2) / n`, so the window covers `[-W/2, W/2)` and test-function
//! supports are kept away from the seam.

use crate::error::{Error, Result};
use crate::kernel::TestFunction;
use crate::lattice::{Configuration, ProductMeasure};
use crate::simulator::Trajectory;

/// Macroscopic position of ring site `x` at scale `n`.
pub fn site_position(x: usize, n: u64, sites: usize) -> f64 {
    (x as i64 - sites as i64 / 2) as f64 / n as f64
}

/// `⟨π^n, G_s⟩ = (1/n) Σ_x G_s(x/n) η(x)` over the ring window.
pub fn pair_empirical(eta: &Configuration, g: &TestFunction, s: f64, n: u64) -> f64 {
    let q = g.time_factor(s);
    if q == 0.0 {
        return 0.0;
    }
    q * pair_empirical_with(eta, n, |u| g.profile(u))
}

/// Empirical pairing against an arbitrary profile, for indicator and
/// constant observables the smooth test-function type cannot express.
pub fn pair_empirical_with<F: Fn(f64) -> f64>(eta: &Configuration, n: u64, f: F) -> f64 {
    let sites = eta.size();
    let mut sum = 0.0;
    for x in eta.occupied_sites() {
        sum += f(site_position(x, n, sites));
    }
    sum / n as f64
}

/// Which side of a site a box average covers.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

/// Mean occupancy of the `ell` sites strictly to one side of `x`
/// (right: `x+1..x+ell`, left: `x-ell..x-1`), periodic indexing.
pub fn box_average(eta: &Configuration, x: i64, ell: usize, side: Side) -> Result<f64> {
    check_box(ell, eta.size())?;
    let mut sum = 0u64;
    for y in 1..=ell as i64 {
        let site = match side {
            Side::Right => x + y,
            Side::Left => x - y,
        };
        sum += eta.get(site) as u64;
    }
    Ok(sum as f64 / ell as f64)
}

fn check_box(ell: usize, sites: usize) -> Result<()> {
    if ell == 0 {
        return Err(Error::Parameter("box length must be at least 1".into()));
    }
    if ell > sites {
        return Err(Error::Parameter(format!(
            "box of {ell} sites exceeds the ring ({sites})"
        )));
    }
    Ok(())
}

/// All left/right box averages of one configuration, built by an integer
/// sliding window so every value agrees exactly with a from-scratch sum.
#[derive(Clone, Debug)]
pub struct BoxAverages {
    ell: usize,
    right_sums: Vec<u32>,
    left_sums: Vec<u32>,
    sites: usize,
}

impl BoxAverages {
    pub fn new(eta: &Configuration, ell: usize) -> Result<Self> {
        let sites = eta.size();
        check_box(ell, sites)?;
        let mut right_sums = vec![0u32; sites];
        let mut acc: u32 = (1..=ell as i64).map(|y| eta.get(y) as u32).sum();
        right_sums[0] = acc;
        for x in 1..sites {
            let xi = x as i64;
            acc = acc + eta.get(xi + ell as i64) as u32 - eta.get(xi) as u32;
            right_sums[x] = acc;
        }
        // left box of x is the right box of x - ell - 1
        let left_sums = (0..sites)
            .map(|x| right_sums[(x as i64 - ell as i64 - 1).rem_euclid(sites as i64) as usize])
            .collect();
        Ok(Self {
            ell,
            right_sums,
            left_sums,
            sites,
        })
    }

    pub fn ell(&self) -> usize {
        self.ell
    }

    pub fn right(&self, x: i64) -> f64 {
        self.right_sums[x.rem_euclid(self.sites as i64) as usize] as f64 / self.ell as f64
    }

    pub fn left(&self, x: i64) -> f64 {
        self.left_sums[x.rem_euclid(self.sites as i64) as usize] as f64 / self.ell as f64
    }
}

/// Relative entropy `H(μ | ν_b)` of a product measure with respect to the
/// homogeneous one: `Σ_x [ρ_x ln(ρ_x/b) + (1-ρ_x) ln((1-ρ_x)/(1-b))]`,
/// with `0 ln 0 = 0`.  Always at most `C_b N`, see [`entropy_bound_constant`].
pub fn relative_entropy(mu: &ProductMeasure, b: f64) -> Result<f64> {
    if !(0.0 < b && b < 1.0) {
        return Err(Error::Domain(format!("reference density {b} not in (0,1)")));
    }
    let mut h = 0.0;
    for x in 0..mu.len() {
        let r = mu.marginal(x);
        if r > 0.0 {
            h += r * (r / b).ln();
        }
        if r < 1.0 {
            h += (1.0 - r) * ((1.0 - r) / (1.0 - b)).ln();
        }
    }
    Ok(h)
}

/// `C_b = max(ln(1/b), ln(1/(1-b)))`, the per-site entropy bound.
pub fn entropy_bound_constant(b: f64) -> f64 {
    (1.0 / b).ln().max((1.0 / (1.0 - b)).ln())
}

/// `⌊ε n⌋`, the macroscopic box width in sites; must be at least 1.
pub fn box_width(eps: f64, n: u64) -> Result<usize> {
    let k = (eps * n as f64).floor();
    if k < 1.0 {
        return Err(Error::Parameter(format!(
            "macroscopic box floor(eps*n) = floor({:.3}) < 1",
            eps * n as f64
        )));
    }
    Ok(k as usize)
}

/// `⌊ε n^{γ/2}⌋`, the intermediate box width; must be at least 1.
pub fn replacement_ell(eps: f64, n: u64, gamma: f64) -> Result<usize> {
    let raw = eps * (n as f64).powf(gamma / 2.0);
    if raw.floor() < 1.0 {
        return Err(Error::Parameter(format!(
            "intermediate box floor(eps*n^(gamma/2)) = floor({raw:.3}) < 1"
        )));
    }
    Ok(raw.floor() as usize)
}

/// One-snapshot integrand of the full replacement difference:
/// `(1/n) Σ_x Φ_s(x/n) [η(x)η(x+1) - ←η^{⌊εn⌋}(x) →η^{⌊εn⌋}(x+1)]`.
fn full_integrand(
    eta: &Configuration,
    phi: &TestFunction,
    s: f64,
    n: u64,
    wide: &BoxAverages,
) -> f64 {
    let sites = eta.size();
    let q = phi.time_factor(s);
    let mut sum = 0.0;
    for x in 0..sites {
        let w = q * phi.profile(site_position(x, n, sites));
        if w == 0.0 {
            continue;
        }
        let xi = x as i64;
        let local = (eta.get(xi) * eta.get(xi + 1)) as f64;
        sum += w * (local - wide.left(xi) * wide.right(xi + 1));
    }
    sum / n as f64
}

/// One-snapshot integrands of the three replacement stages; they telescope
/// exactly to the full integrand.
fn staged_integrands(
    eta: &Configuration,
    phi: &TestFunction,
    s: f64,
    n: u64,
    narrow: &BoxAverages,
    wide: &BoxAverages,
) -> (f64, f64, f64) {
    let sites = eta.size();
    let q = phi.time_factor(s);
    let (mut s1, mut s2, mut s3) = (0.0, 0.0, 0.0);
    for x in 0..sites {
        let w = q * phi.profile(site_position(x, n, sites));
        if w == 0.0 {
            continue;
        }
        let xi = x as i64;
        let here = eta.get(xi) as f64;
        let next = eta.get(xi + 1) as f64;
        let small_left = narrow.left(xi);
        let big_left = wide.left(xi);
        let big_right = wide.right(xi + 1);
        s1 += w * (here - small_left) * next;
        s2 += w * small_left * (next - big_right);
        s3 += w * (small_left - big_left) * big_right;
    }
    let nf = n as f64;
    (s1 / nf, s2 / nf, s3 / nf)
}

fn grid_prefix(traj: &Trajectory, t: f64) -> Result<usize> {
    let grid = &traj.snapshots;
    let idx = grid
        .iter()
        .position(|&(s, _)| (s - t).abs() <= 1e-12 * t.abs().max(1.0))
        .ok_or_else(|| Error::Domain(format!("time {t} is not on the snapshot grid")))?;
    Ok(idx)
}

fn check_phi_bounds(phi: &TestFunction, traj: &Trajectory) -> Result<()> {
    // boundedness the replacement estimates assume: finite sup and finite
    // scaled l1 mass of the weight function
    let horizon = traj.params.horizon;
    let sup = phi.profile_sup() * phi.sup_time_abs(horizon, 128);
    if !sup.is_finite() {
        return Err(Error::Domain("weight function is unbounded".into()));
    }
    Ok(())
}

/// Time-integrated full replacement gap
/// `|∫_0^t (1/n) Σ_x Φ_s(x/n)[η_s(x)η_s(x+1) - ←η_s^{⌊εn⌋}(x)→η_s^{⌊εn⌋}(x+1)] ds|`
/// on the snapshot grid (trapezoid rule); `t` must be a grid point.
pub fn replacement_gap(traj: &Trajectory, phi: &TestFunction, eps: f64, t: f64) -> Result<f64> {
    check_phi_bounds(phi, traj)?;
    let n = traj.params.n;
    let k = box_width(eps, n)?;
    let last = grid_prefix(traj, t)?;
    let mut integral = 0.0;
    let mut prev: Option<(f64, f64)> = None;
    for (s, eta) in &traj.snapshots[..=last] {
        let wide = BoxAverages::new(eta, k)?;
        let v = full_integrand(eta, phi, *s, n, &wide);
        if let Some((s0, v0)) = prev {
            integral += 0.5 * (v0 + v) * (s - s0);
        }
        prev = Some((*s, v));
    }
    Ok(integral.abs())
}

/// The three staged replacement gaps (occupied site to narrow block, right
/// factor to wide block, narrow block to wide block), each time-integrated
/// separately as in [`replacement_gap`].
pub fn intermediate_gaps(
    traj: &Trajectory,
    phi: &TestFunction,
    eps: f64,
    t: f64,
) -> Result<(f64, f64, f64)> {
    check_phi_bounds(phi, traj)?;
    let n = traj.params.n;
    let gamma = traj.params.gamma;
    let k = box_width(eps, n)?;
    let ell = replacement_ell(eps, n, gamma)?;
    let last = grid_prefix(traj, t)?;
    let mut integrals = [0.0; 3];
    let mut prev: Option<(f64, [f64; 3])> = None;
    for (s, eta) in &traj.snapshots[..=last] {
        let narrow = BoxAverages::new(eta, ell)?;
        let wide = BoxAverages::new(eta, k)?;
        let (a, b, c) = staged_integrands(eta, phi, *s, n, &narrow, &wide);
        let v = [a, b, c];
        if let Some((s0, v0)) = prev {
            for (acc, (x0, x1)) in integrals.iter_mut().zip(v0.iter().zip(&v)) {
                *acc += 0.5 * (x0 + x1) * (s - s0);
            }
        }
        prev = Some((*s, v));
    }
    Ok((integrals[0].abs(), integrals[1].abs(), integrals[2].abs()))
}

/// Signed time integrals of the full replacement difference and its three
/// stages, over one trajectory.  The stage integrands cancel pairwise
/// against each other, so the stages sum to the full integral up to
/// floating-point rounding; [`replacement_gap`] and [`intermediate_gaps`]
/// report the same quantities with the absolute value taken.
pub fn replacement_decomposition(
    traj: &Trajectory,
    phi: &TestFunction,
    eps: f64,
    t: f64,
) -> Result<(f64, [f64; 3])> {
    check_phi_bounds(phi, traj)?;
    let n = traj.params.n;
    let gamma = traj.params.gamma;
    let k = box_width(eps, n)?;
    let ell = replacement_ell(eps, n, gamma)?;
    let last = grid_prefix(traj, t)?;
    let mut full = 0.0;
    let mut stages = [0.0; 3];
    let mut prev: Option<(f64, f64, [f64; 3])> = None;
    for (s, eta) in &traj.snapshots[..=last] {
        let narrow = BoxAverages::new(eta, ell)?;
        let wide = BoxAverages::new(eta, k)?;
        let f = full_integrand(eta, phi, *s, n, &wide);
        let (a, b, c) = staged_integrands(eta, phi, *s, n, &narrow, &wide);
        let v = [a, b, c];
        if let Some((s0, f0, v0)) = prev {
            full += 0.5 * (f0 + f) * (s - s0);
            for (acc, (x0, x1)) in stages.iter_mut().zip(v0.iter().zip(&v)) {
                *acc += 0.5 * (x0 + x1) * (s - s0);
            }
        }
        prev = Some((*s, f, v));
    }
    Ok((full, stages))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::ProductMeasure;
    use crate::simulator::SimParams;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn pairing_mass_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let eta = ProductMeasure::constant(0.5, 256).unwrap().sample(&mut rng);
        let mass = pair_empirical_with(&eta, 64, |_| 1.0);
        assert_eq!(mass, eta.particle_count() as f64 / 64.0);
    }

    #[test]
    fn pairing_empty_configuration_is_zero() {
        let eta = Configuration::empty(128).unwrap();
        let g = TestFunction::bump(0.0, 1.0).unwrap();
        assert_eq!(pair_empirical(&eta, &g, 0.3, 32), 0.0);
    }

    #[test]
    fn pairing_concentrates_at_half_density() {
        // mean over seeds within 3 sigma of the exact discrete expectation
        let n = 64u64;
        let sites = 256;
        let g = TestFunction::bump(0.0, 1.0).unwrap();
        let exact: f64 = (0..sites)
            .map(|x| 0.5 * g.profile(site_position(x, n, sites)))
            .sum::<f64>()
            / n as f64;
        let var_one: f64 = (0..sites)
            .map(|x| 0.25 * g.profile(site_position(x, n, sites)).powi(2))
            .sum::<f64>()
            / (n as f64).powi(2);
        let reps = 1000;
        let nu = ProductMeasure::constant(0.5, sites).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let mean = (0..reps)
            .map(|_| pair_empirical(&nu.sample(&mut rng), &g, 0.0, n))
            .sum::<f64>()
            / reps as f64;
        let sigma = (var_one / reps as f64).sqrt();
        assert!(
            (mean - exact).abs() < 3.0 * sigma,
            "mean {mean}, exact {exact}, sigma {sigma}"
        );
    }

    #[test]
    fn box_average_edges() {
        let eta = Configuration::from_bits(&[1, 1, 1, 1, 1, 1]).unwrap();
        assert_eq!(box_average(&eta, 2, 3, Side::Right).unwrap(), 1.0);
        let eta = Configuration::from_bits(&[0, 1, 0, 0, 1, 0]).unwrap();
        assert_eq!(
            box_average(&eta, 0, 1, Side::Right).unwrap(),
            eta.get(1) as f64
        );
        assert_eq!(
            box_average(&eta, 0, 1, Side::Left).unwrap(),
            eta.get(-1) as f64
        );
        // periodic wrap: left box of site 1 of length 3 covers sites 4,5,0
        assert_eq!(box_average(&eta, 1, 3, Side::Left).unwrap(), 1.0 / 3.0);
        assert!(box_average(&eta, 0, 0, Side::Left).is_err());
        assert!(box_average(&eta, 0, 7, Side::Left).is_err());
    }

    #[test]
    fn sliding_window_matches_direct_sums() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let nu = ProductMeasure::constant(0.4, 200).unwrap();
        let eta = nu.sample(&mut rng);
        for ell in [1usize, 2, 7, 50, 199] {
            let boxes = BoxAverages::new(&eta, ell).unwrap();
            for x in -10i64..210 {
                assert_eq!(boxes.right(x), box_average(&eta, x, ell, Side::Right).unwrap());
                assert_eq!(boxes.left(x), box_average(&eta, x, ell, Side::Left).unwrap());
            }
        }
    }

    #[test]
    fn entropy_closed_forms() {
        let flat = ProductMeasure::constant(0.37, 50).unwrap();
        assert_eq!(relative_entropy(&flat, 0.37).unwrap(), 0.0);
        let ones = ProductMeasure::constant(1.0, 50).unwrap();
        let h = relative_entropy(&ones, 0.5).unwrap();
        assert!((h - 50.0 * 2.0_f64.ln()).abs() < 1e-12);
        // two-level step profile
        let profile: Vec<f64> = (0..100).map(|x| if x < 50 { 0.8 } else { 0.2 }).collect();
        let mu = ProductMeasure::from_profile(profile).unwrap();
        let per_site = 0.8 * 1.6_f64.ln() + 0.2 * 0.4_f64.ln();
        let h = relative_entropy(&mu, 0.5).unwrap();
        assert!((h - 100.0 * per_site).abs() < 1e-10, "step entropy {h}");
        assert!(relative_entropy(&flat, 0.0).is_err());
        assert!(relative_entropy(&flat, 1.0).is_err());
    }

    #[test]
    fn entropy_nonnegative_and_linearly_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let profile: Vec<f64> = (0..64).map(|_| rand::Rng::gen::<f64>(&mut rng)).collect();
            let mu = ProductMeasure::from_profile(profile).unwrap();
            for b in [0.3, 0.5, 0.8] {
                let h = relative_entropy(&mu, b).unwrap();
                assert!(h >= 0.0);
                assert!(h <= entropy_bound_constant(b) * 64.0 + 1e-12);
            }
        }
    }

    #[test]
    fn box_width_guards() {
        assert_eq!(box_width(0.1, 100).unwrap(), 10);
        assert!(box_width(0.001, 100).is_err());
        assert_eq!(replacement_ell(0.5, 64, 1.0).unwrap(), 4);
        assert!(replacement_ell(0.05, 64, 1.0).is_err());
    }

    #[test]
    fn approximation_of_identity_bound() {
        // indicator pairing vs box average differ by at most 2/(eps n)
        let n = 128u64;
        let sites = 512;
        let eps = 0.1;
        let k = box_width(eps, n).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let nu = ProductMeasure::constant(0.5, sites).unwrap();
        for _ in 0..20 {
            let eta = nu.sample(&mut rng);
            let x = 250usize;
            let u0 = site_position(x, n, sites);
            let paired = pair_empirical_with(&eta, n, |u| {
                if u > u0 && u <= u0 + eps {
                    1.0 / eps
                } else {
                    0.0
                }
            });
            let boxed = box_average(&eta, x as i64, k, Side::Right).unwrap();
            assert!(
                (paired - boxed).abs() <= 2.0 / (eps * n as f64),
                "paired {paired}, boxed {boxed}"
            );
        }
    }

    fn still_trajectory(eta: Configuration, n: u64, gamma: f64) -> Trajectory {
        let window = eta.size() as u64 / n;
        let params = SimParams::new(
            n,
            gamma,
            1.0,
            0,
            window,
            vec![0.0, 0.25, 0.5, 0.75, 1.0],
        )
        .unwrap();
        let snapshots = params
            .record_times
            .iter()
            .map(|&t| (t, eta.clone()))
            .collect();
        Trajectory {
            params,
            snapshots,
            event_count: 0,
            proposal_count: 0,
            elapsed_seconds: 0.0,
        }
    }

    #[test]
    fn replacement_gap_vanishes_on_frozen_full_ring() {
        let eta = Configuration::from_bits(&vec![1u8; 256]).unwrap();
        let traj = still_trajectory(eta, 64, 1.0);
        let phi = TestFunction::bump(0.0, 1.0).unwrap();
        let gap = replacement_gap(&traj, &phi, 0.2, 1.0).unwrap();
        assert!(gap.abs() < 1e-14, "gap {gap}");
    }

    #[test]
    fn stages_telescope_to_the_full_integrand() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let nu = ProductMeasure::constant(0.5, 512).unwrap();
        let phi = TestFunction::bump(0.0, 1.0).unwrap();
        let n = 128u64;
        let eps = 0.25;
        let k = box_width(eps, n).unwrap();
        let ell = replacement_ell(eps, n, 1.0).unwrap();
        for _ in 0..10 {
            let eta = nu.sample(&mut rng);
            let narrow = BoxAverages::new(&eta, ell).unwrap();
            let wide = BoxAverages::new(&eta, k).unwrap();
            let full = full_integrand(&eta, &phi, 0.0, n, &wide);
            let (a, b, c) = staged_integrands(&eta, &phi, 0.0, n, &narrow, &wide);
            assert!(
                (a + b + c - full).abs() < 1e-12,
                "telescoping violated: {} vs {full}",
                a + b + c
            );
        }
    }

    #[test]
    fn gap_time_must_lie_on_the_grid() {
        let eta = Configuration::from_bits(&vec![1u8; 128]).unwrap();
        let traj = still_trajectory(eta, 32, 1.0);
        let phi = TestFunction::bump(0.0, 1.0).unwrap();
        assert!(replacement_gap(&traj, &phi, 0.2, 0.33).is_err());
    }

    #[test]
    fn decomposition_telescopes_and_matches_the_gap_reports() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let n = 64u64;
        let nu = ProductMeasure::constant(0.5, 256).unwrap();
        let eta0 = nu.sample(&mut rng);
        let record: Vec<f64> = (0..=8).map(|k| k as f64 * 0.2 / 8.0).collect();
        let params = SimParams::new(n, 1.0, 0.2, 99, 4, record).unwrap();
        let traj = crate::simulator::run(&eta0, &params).unwrap();
        let phi = TestFunction::bump(0.0, 1.0).unwrap();
        let (eps, t) = (0.25, 0.2);
        let (full, stages) = replacement_decomposition(&traj, &phi, eps, t).unwrap();
        let sum: f64 = stages.iter().sum();
        assert!(
            (sum - full).abs() <= 1e-14 * (1.0 + full.abs()),
            "stages sum {sum} vs full {full}"
        );
        assert_eq!(full.abs(), replacement_gap(&traj, &phi, eps, t).unwrap());
        let (a, b, c) = intermediate_gaps(&traj, &phi, eps, t).unwrap();
        assert_eq!([stages[0].abs(), stages[1].abs(), stages[2].abs()], [a, b, c]);
    }
}
