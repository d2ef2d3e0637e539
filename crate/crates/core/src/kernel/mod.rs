//! Heavy-tailed jump law and the operators built from it.
//!
//! The single-jump distribution on the integers is
//! `p(z) = c_gamma |z|^{-gamma-1}` for `z != 0` and `p(0) = 0`, with
//! `gamma` in `(0, 2)` and `c_gamma = (2 zeta(gamma+1))^{-1}` so that the
//! total mass is one.  Everything downstream (exchange rates, the discrete
//! operator `K_n`, the fractional Laplacian) uses this normalisation.

mod discrete;
mod frac_lap;
mod test_function;

pub use discrete::{convdisc_gap, convext_bound, convext_lhs, convext_rate, corfrac_sum, kn_apply};
pub use frac_lap::{frac_lap, frac_lap_envelope, frac_lap_profile};
pub use test_function::TestFunction;

use crate::error::{Error, Result};
use rand::Rng;

/// Normalising constant `c_gamma = (2 zeta(gamma+1))^{-1}`.
///
/// Accurate to better than `1e-12` (absolute) on `gamma ∈ (0, 2)`.
pub fn normalizer(gamma: f64) -> Result<f64> {
    check_gamma(gamma)?;
    Ok(1.0 / (2.0 * zeta(gamma + 1.0)))
}

/// Exponent `delta_gamma` entering the remainder decay rate
/// `n^{gamma-1-delta_gamma}`: `0` for `gamma < 1`, `1/2` at `gamma = 1`,
/// `1` for `gamma > 1`.
pub fn delta_gamma(gamma: f64) -> f64 {
    if gamma < 1.0 {
        0.0
    } else if gamma == 1.0 {
        0.5
    } else {
        1.0
    }
}

pub(crate) fn check_gamma(gamma: f64) -> Result<()> {
    if gamma.is_finite() && gamma > 0.0 && gamma < 2.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("gamma = {gamma} outside (0, 2)")))
    }
}

/// Riemann zeta on `s ∈ (1, 3]` by partial summation plus an
/// Euler–Maclaurin tail; absolute error far below `1e-13`.  Cheap enough
/// (a few dozen `powf`) to evaluate on every kernel construction.
fn zeta(s: f64) -> f64 {
    const K: u64 = 64;
    // sum smallest terms first to keep rounding error at the epsilon level
    let mut partial = 0.0_f64;
    let mut z = K - 1;
    while z >= 1 {
        partial += (z as f64).powf(-s);
        z -= 1;
    }
    let k = K as f64;
    // sum_{n >= K} n^{-s} = K^{1-s}/(s-1) + K^{-s}/2 + s K^{-s-1}/12
    //                       - s(s+1)(s+2) K^{-s-3}/720
    //                       + s(s+1)...(s+4) K^{-s-5}/30240 - ...
    let tail = k.powf(1.0 - s) / (s - 1.0) + 0.5 * k.powf(-s) + s * k.powf(-s - 1.0) / 12.0
        - s * (s + 1.0) * (s + 2.0) * k.powf(-s - 3.0) / 720.0
        + s * (s + 1.0) * (s + 2.0) * (s + 3.0) * (s + 4.0) * k.powf(-s - 5.0) / 30240.0;
    partial + tail
}

/// `sum_{z >= a} z^{-s}` for integer `a >= 1`: explicit terms up to 64
/// (where the expansion alone is poor), then the same Euler–Maclaurin tail
/// as `zeta`; relative error around `1e-14` uniformly in `a`.
pub(crate) fn power_tail(a: u64, s: f64) -> f64 {
    debug_assert!(a >= 1);
    let start = a.max(64);
    // smallest explicit terms first
    let mut partial = 0.0_f64;
    for z in (a..start).rev() {
        partial += (z as f64).powf(-s);
    }
    let x = start as f64;
    partial + x.powf(1.0 - s) / (s - 1.0) + 0.5 * x.powf(-s) + s * x.powf(-s - 1.0) / 12.0
        - s * (s + 1.0) * (s + 2.0) * x.powf(-s - 3.0) / 720.0
}

/// Symmetric heavy-tailed jump law, optionally truncated for sampling.
///
/// `prob` always reports the untruncated mass `c_gamma |z|^{-gamma-1}`;
/// truncation only affects the sampler and `renorm_mass`.
#[derive(Debug, Clone)]
pub struct JumpKernel {
    gamma: f64,
    c_gamma: f64,
    truncation: i64,
    /// CDF over jump magnitudes `1..=truncation`, strictly increasing,
    /// final entry exactly 1.
    cdf: Vec<f64>,
    renorm_mass: f64,
}

impl JumpKernel {
    /// Build the kernel for `gamma ∈ (0, 2)` with sampling truncated at
    /// `|z| <= truncation` (`truncation >= 1`).
    pub fn new(gamma: f64, truncation: i64) -> Result<Self> {
        check_gamma(gamma)?;
        if truncation < 1 {
            return Err(Error::Parameter(format!(
                "truncation {truncation} must be at least 1"
            )));
        }
        let c_gamma = normalizer(gamma)?;
        let s = gamma + 1.0;
        let l = truncation as usize;
        // magnitude masses 2 c |z|^{-s}, smallest first for accurate total
        let mut mass = vec![0.0_f64; l];
        for (i, m) in mass.iter_mut().enumerate() {
            *m = 2.0 * c_gamma * ((i + 1) as f64).powf(-s);
        }
        let mut total = 0.0;
        for m in mass.iter().rev() {
            total += *m;
        }
        let mut cdf = Vec::with_capacity(l);
        let mut acc = 0.0;
        for m in &mass {
            acc += *m / total;
            cdf.push(acc);
        }
        *cdf.last_mut().expect("nonempty") = 1.0;
        Ok(Self {
            gamma,
            c_gamma,
            truncation,
            cdf,
            renorm_mass: total,
        })
    }

    /// Convenience constructor for a periodic ring of `size` sites: jumps of
    /// half the ring length and longer are dropped, so the sampler truncates
    /// at `floor((size-1)/2)`.
    pub fn for_ring(gamma: f64, size: usize) -> Result<Self> {
        if size < 3 {
            return Err(Error::Parameter(format!("ring size {size} too small")));
        }
        Self::new(gamma, ((size - 1) / 2) as i64)
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn c_gamma(&self) -> f64 {
        self.c_gamma
    }

    pub fn truncation(&self) -> i64 {
        self.truncation
    }

    /// Mass kept by the truncated sampler, `sum_{0 < |z| <= L} p(z)`.
    pub fn renorm_mass(&self) -> f64 {
        self.renorm_mass
    }

    /// Untruncated single-jump probability `p(z)`.
    pub fn prob(&self, z: i64) -> f64 {
        if z == 0 {
            0.0
        } else {
            self.c_gamma * (z.unsigned_abs() as f64).powf(-self.gamma - 1.0)
        }
    }

    /// Analytic bound on the mass dropped beyond magnitude `k`:
    /// `sum_{|z| > k} p(z)`.
    pub fn tail_mass_beyond(&self, k: i64) -> f64 {
        debug_assert!(k >= 0);
        2.0 * self.c_gamma * power_tail(k as u64 + 1, self.gamma + 1.0)
    }

    /// Mass dropped by this kernel's own truncation.
    pub fn truncated_mass(&self) -> f64 {
        self.tail_mass_beyond(self.truncation)
    }

    /// Draw a jump from the truncated law: magnitude by inverse CDF, then an
    /// independent fair sign.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> i64 {
        let u: f64 = rng.gen();
        let idx = self.cdf.partition_point(|&c| c < u);
        let magnitude = (idx.min(self.cdf.len() - 1) + 1) as i64;
        if rng.gen::<bool>() {
            magnitude
        } else {
            -magnitude
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Independent oracle: c_gamma via plain partial sum to 1e7 plus the
    /// integral tail with its trapezoid correction (without the 0.5 f(N)
    /// term the tail is off by ~N^{-s}/2, above 1e-12 for small gamma).
    fn normalizer_oracle(gamma: f64) -> f64 {
        let s = gamma + 1.0;
        let mut sum = 0.0_f64;
        let mut z = 10_000_000_u64;
        while z >= 1 {
            sum += (z as f64).powf(-s);
            z -= 1;
        }
        let tail = (1e7_f64).powf(1.0 - s) / (s - 1.0) - 0.5 * (1e7_f64).powf(-s);
        1.0 / (2.0 * (sum + tail))
    }

    #[test]
    fn normalizer_matches_zeta_two_closed_form() {
        // zeta(2) = pi^2/6, so c_1 = 3/pi^2
        let c = normalizer(1.0).unwrap();
        let exact = 3.0 / (std::f64::consts::PI * std::f64::consts::PI);
        assert!((c - exact).abs() < 1e-12, "c_1 = {c}, want {exact}");
    }

    #[test]
    fn normalizer_matches_partial_sum_oracle() {
        for &gamma in &[0.25, 0.5, 1.0, 1.5, 1.9] {
            let c = normalizer(gamma).unwrap();
            let oracle = normalizer_oracle(gamma);
            assert!(
                (c - oracle).abs() < 1e-12,
                "gamma={gamma}: {c} vs oracle {oracle}"
            );
        }
        // frozen value: 1/(2 zeta(1.5)) with zeta(1.5) = 2.612375348685488...
        let c_half = normalizer(0.5).unwrap();
        assert!((c_half - 0.191396691999713).abs() < 1e-12, "got {c_half}");
    }

    #[test]
    fn normalizer_rejects_out_of_domain() {
        assert!(normalizer(0.0).is_err());
        assert!(normalizer(2.0).is_err());
        assert!(normalizer(-1.0).is_err());
        assert!(normalizer(f64::NAN).is_err());
    }

    #[test]
    fn prob_is_symmetric_zero_at_origin_and_normalised() {
        let k = JumpKernel::new(1.2, 100).unwrap();
        assert_eq!(k.prob(0), 0.0);
        for z in 1..50 {
            assert_eq!(k.prob(z), k.prob(-z));
            assert!(k.prob(z) > k.prob(z + 1));
        }
        // total mass: kept + analytic tail = 1
        let total = k.renorm_mass() + k.truncated_mass();
        assert!((total - 1.0).abs() < 1e-12, "total {total}");
    }

    #[test]
    fn cdf_is_strictly_increasing_and_ends_at_one() {
        let k = JumpKernel::new(0.7, 1000).unwrap();
        for w in k.cdf.windows(2) {
            assert!(w[1] > w[0]);
        }
        assert_eq!(*k.cdf.last().unwrap(), 1.0);
    }

    #[test]
    fn sampler_frequencies_match_truncated_law() {
        // gamma = 1, L = 10^4, 10^6 draws: frequency of |z| = 1 within a
        // 3-sigma binomial band, empirical mean within 3 sigma of 0.
        let k = JumpKernel::new(1.0, 10_000).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
        let n = 1_000_000_usize;
        let mut ones = 0_u64;
        let mut mean = 0.0_f64;
        let mut m2 = 0.0_f64;
        for _ in 0..n {
            let z = k.sample(&mut rng);
            assert!(z != 0 && z.abs() <= 10_000);
            if z.abs() == 1 {
                ones += 1;
            }
            mean += z as f64;
            m2 += (z * z) as f64;
        }
        mean /= n as f64;
        m2 /= n as f64;
        let p1 = 2.0 * k.prob(1) / k.renorm_mass();
        let sigma1 = (p1 * (1.0 - p1) / n as f64).sqrt();
        let freq = ones as f64 / n as f64;
        assert!(
            (freq - p1).abs() <= 3.0 * sigma1,
            "freq {freq} vs p1 {p1} (sigma {sigma1})"
        );
        // exact truncated second moment
        let mut var = 0.0;
        for z in (1..=10_000_u64).rev() {
            var += 2.0 * k.prob(z as i64) / k.renorm_mass() * (z * z) as f64;
        }
        let sigma_mean = (var / n as f64).sqrt();
        assert!(
            mean.abs() <= 3.0 * sigma_mean,
            "mean {mean}, sigma {sigma_mean}"
        );
        let _ = m2;
    }

    #[test]
    fn delta_gamma_branches() {
        assert_eq!(delta_gamma(0.5), 0.0);
        assert_eq!(delta_gamma(1.0), 0.5);
        assert_eq!(delta_gamma(1.5), 1.0);
    }

    #[test]
    fn tail_mass_matches_brute_force() {
        let k = JumpKernel::new(0.8, 50).unwrap();
        // brute force sum_{|z| > 50} p(z) up to 10^7 plus integral remainder
        let mut brute = 0.0;
        for z in (51..=10_000_000_i64).rev() {
            brute += k.prob(z);
        }
        brute *= 2.0;
        brute += 2.0 * k.c_gamma() * (1e7_f64).powf(-0.8) / 0.8;
        let analytic = k.truncated_mass();
        assert!(
            (brute - analytic).abs() < 1e-10,
            "brute {brute} vs analytic {analytic}"
        );
    }
}
