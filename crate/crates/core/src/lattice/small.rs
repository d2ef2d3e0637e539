//! Brute-force small systems: every configuration of a short ring is
//! enumerated as a bitmask, the generator is materialized as a dense rate
//! matrix, and distributions evolve by uniformization.  This is the exact
//! oracle the stochastic engine is measured against.

use super::{rate_c, tilde_c, xi, Configuration};
use crate::error::{Error, Result};
use crate::kernel::JumpKernel;

/// Exhaustive state space of a ring short enough to enumerate.
#[derive(Clone, Copy, Debug)]
pub struct SmallSystem {
    size: usize,
}

impl SmallSystem {
    /// Guarded at 14 sites (16384 states); the dense matrix grows as `4^N`.
    pub fn new(size: usize) -> Result<Self> {
        if size > 14 {
            return Err(Error::Capacity(format!(
                "state space 2^{size} exceeds the dense-matrix guard (N <= 14)"
            )));
        }
        if size < 3 {
            return Err(Error::Parameter(format!(
                "ring needs at least 3 sites, got {size}"
            )));
        }
        Ok(Self { size })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn state_count(&self) -> usize {
        1 << self.size
    }

    /// Configuration whose occupancy at site `i` is bit `i` of `state`.
    pub fn decode(&self, state: usize) -> Configuration {
        let bits: Vec<u8> = (0..self.size).map(|i| ((state >> i) & 1) as u8).collect();
        Configuration::from_bits(&bits).expect("size validated at construction")
    }

    pub fn encode(&self, eta: &Configuration) -> usize {
        assert_eq!(eta.size(), self.size);
        eta.bits()
            .iter()
            .enumerate()
            .fold(0usize, |s, (i, &b)| s | ((b as usize) << i))
    }

    /// Unordered site pairs `{x, x+d}` with `d` the minimal-image
    /// displacement; pairs at exactly half the ring length (even rings) are
    /// ambiguous and dropped, matching the kernel truncation `(N-1)/2`.
    pub fn ring_pairs(&self) -> Vec<(i64, i64)> {
        let n = self.size as i64;
        let mut out = Vec::new();
        for x in 0..n {
            for y in (x + 1)..n {
                let raw = y - x;
                let d = if 2 * raw < n {
                    raw
                } else if 2 * (n - raw) < n {
                    raw - n
                } else {
                    continue;
                };
                out.push((x, x + d));
            }
        }
        out
    }

    /// Dense generator matrix (row-major, `state_count` squared):
    /// `Q[η, η^{x,y}] += p(y-x) c_{x,y}(η) / 2` per unordered kept pair,
    /// diagonal the negative row sum.
    pub fn build_generator(&self, kernel: &JumpKernel) -> Result<Vec<f64>> {
        self.build_generator_with(kernel, rate_c)
    }

    /// Same construction with the pair-rate function swappable, so harness
    /// checks can prove they detect a corrupted rate implementation.
    pub fn build_generator_with<F>(&self, kernel: &JumpKernel, rate: F) -> Result<Vec<f64>>
    where
        F: Fn(&Configuration, i64, i64, &JumpKernel) -> Result<f64>,
    {
        let s_count = self.state_count();
        let pairs = self.ring_pairs();
        let mut q = vec![0.0; s_count * s_count];
        for s in 0..s_count {
            let eta = self.decode(s);
            for &(x, y) in &pairs {
                let (i, j) = (eta.wrap(x), eta.wrap(y));
                if eta.get(x) == eta.get(y) {
                    // exchange is the identity; no transition
                    continue;
                }
                let r = rate(&eta, x, y, kernel)?;
                if r != 0.0 {
                    let target = s ^ ((1 << i) | (1 << j));
                    q[s * s_count + target] += r;
                    q[s * s_count + s] -= r;
                }
            }
        }
        Ok(q)
    }

    /// Worst entrywise violation of `ν_b(η) Q[η,η'] = ν_b(η') Q[η',η]`.
    pub fn detailed_balance_residual(&self, q: &[f64], b: f64) -> f64 {
        let s_count = self.state_count();
        assert_eq!(q.len(), s_count * s_count);
        let w = nu_b_weights(self.size, b);
        let mut worst: f64 = 0.0;
        for s in 0..s_count {
            for t in (s + 1)..s_count {
                worst = worst.max((w[s] * q[s * s_count + t] - w[t] * q[t * s_count + s]).abs());
            }
        }
        worst
    }

    /// Distribution at time `t` from initial distribution `v0`, by
    /// uniformization: `v e^{tQ} = Σ_k Pois_{Λt}(k) v U^k` with
    /// `U = I + Q/Λ` substochastic-free and the Poisson tail cut at 1e-14.
    pub fn evolve(&self, q: &[f64], v0: &[f64], t: f64) -> Result<Vec<f64>> {
        let s_count = self.state_count();
        if q.len() != s_count * s_count || v0.len() != s_count {
            return Err(Error::Parameter(
                "generator/distribution size mismatch".into(),
            ));
        }
        if !(t >= 0.0) {
            return Err(Error::Parameter(format!("negative time {t}")));
        }
        let total: f64 = v0.iter().sum();
        if (total - 1.0).abs() > 1e-9 || v0.iter().any(|&p| p < 0.0) {
            return Err(Error::Domain("initial state is not a distribution".into()));
        }
        let lambda = (0..s_count)
            .map(|s| -q[s * s_count + s])
            .fold(0.0_f64, f64::max);
        let lt = lambda * t;
        if lt == 0.0 {
            return Ok(v0.to_vec());
        }
        let steps = (lt + 12.0 * lt.sqrt() + 25.0).ceil() as usize;
        let mut result = vec![0.0; s_count];
        let mut w = v0.to_vec();
        let mut scratch = vec![0.0; s_count];
        let mut ln_weight = -lt;
        for k in 0..=steps {
            let weight = ln_weight.exp();
            for (r, &wi) in result.iter_mut().zip(&w) {
                *r += weight * wi;
            }
            // w <- w U = w + (w Q)/Λ
            scratch.iter_mut().for_each(|v| *v = 0.0);
            for (i, &wi) in w.iter().enumerate() {
                if wi != 0.0 {
                    let row = &q[i * s_count..(i + 1) * s_count];
                    for (sj, &qij) in scratch.iter_mut().zip(row) {
                        *sj += wi * qij;
                    }
                }
            }
            for (wi, &si) in w.iter_mut().zip(&scratch) {
                *wi += si / lambda;
            }
            ln_weight += (lt / (k + 1) as f64).ln();
        }
        Ok(result)
    }
}

/// `ν_b` weights over bitmask states: `b^k (1-b)^{N-k}` with `k` the
/// particle count.
pub fn nu_b_weights(sites: usize, b: f64) -> Vec<f64> {
    (0..1usize << sites)
        .map(|s| {
            let k = s.count_ones() as i32;
            b.powi(k) * (1.0 - b).powi(sites as i32 - k)
        })
        .collect()
}

/// Dirichlet form of `√f` under `ν_b` together with its nearest-neighbor
/// lower bound:
///
/// * `D  = (1/4) Σ_{x,y} p(x-y) ∫ c_{x,y}(η) [√f(η^{x,y}) - √f(η)]² dν_b`
/// * `D_NN = (1/4) Σ_{|x-y|=1} p(x-y) ∫ [√f(η^{x,y}) - √f(η)]² dν_b`
///
/// Pairs and `p` values match `build_generator` exactly, so
/// `⟨L√f, √f⟩ = -D/2` holds on the ring to rounding.
pub fn dirichlet_form(
    sys: &SmallSystem,
    kernel: &JumpKernel,
    f: &[f64],
    b: f64,
) -> Result<(f64, f64)> {
    let s_count = sys.state_count();
    if f.len() != s_count {
        return Err(Error::Parameter(format!(
            "density over {} states, expected {s_count}",
            f.len()
        )));
    }
    let w = nu_b_weights(sys.size(), b);
    if f.iter().any(|&v| v < 0.0) {
        return Err(Error::Domain("density has negative entries".into()));
    }
    let mass: f64 = f.iter().zip(&w).map(|(&fv, &wv)| fv * wv).sum();
    if (mass - 1.0).abs() > 1e-10 {
        return Err(Error::Domain(format!(
            "density integrates to {mass}, expected 1"
        )));
    }
    let g: Vec<f64> = f.iter().map(|&v| v.sqrt()).collect();
    let mut d_full = 0.0;
    for (x, y) in sys.ring_pairs() {
        let p = kernel.prob(y - x);
        for (s, &ws) in w.iter().enumerate() {
            let eta = sys.decode(s);
            if eta.get(x) == eta.get(y) {
                continue;
            }
            let c = (tilde_c(&eta, x, y)? * xi(&eta, x, y)?) as f64;
            if c == 0.0 {
                continue;
            }
            let target = s ^ ((1 << eta.wrap(x)) | (1 << eta.wrap(y)));
            let delta = g[target] - g[s];
            d_full += 0.5 * p * ws * c * delta * delta;
        }
    }
    let p1 = kernel.prob(1);
    let mut d_nn = 0.0;
    let n = sys.size() as i64;
    for x in 0..n {
        for (s, &ws) in w.iter().enumerate() {
            let eta = sys.decode(s);
            if eta.get(x) == eta.get(x + 1) {
                continue;
            }
            let target = s ^ ((1 << eta.wrap(x)) | (1 << eta.wrap(x + 1)));
            let delta = g[target] - g[s];
            d_nn += 0.5 * p1 * ws * delta * delta;
        }
    }
    Ok((d_full, d_nn))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn system_and_generator(n: usize, gamma: f64) -> (SmallSystem, JumpKernel, Vec<f64>) {
        let sys = SmallSystem::new(n).unwrap();
        let kernel = JumpKernel::for_ring(gamma, n).unwrap();
        let q = sys.build_generator(&kernel).unwrap();
        (sys, kernel, q)
    }

    fn random_density(sys: &SmallSystem, b: f64, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = nu_b_weights(sys.size(), b);
        let raw: Vec<f64> = (0..sys.state_count())
            .map(|_| rng.gen_range(0.05..1.0))
            .collect();
        let z: f64 = raw.iter().zip(&w).map(|(&r, &wv)| r * wv).sum();
        raw.into_iter().map(|r| r / z).collect()
    }

    #[test]
    fn capacity_and_size_guards() {
        assert!(SmallSystem::new(15).is_err());
        assert!(SmallSystem::new(2).is_err());
        assert!(SmallSystem::new(14).is_ok());
    }

    #[test]
    fn encode_decode_roundtrip() {
        let sys = SmallSystem::new(5).unwrap();
        for s in 0..sys.state_count() {
            assert_eq!(sys.encode(&sys.decode(s)), s);
        }
    }

    #[test]
    fn ring_pairs_drop_half_ring_on_even_sizes() {
        let sys = SmallSystem::new(8).unwrap();
        let pairs = sys.ring_pairs();
        // 28 unordered pairs minus the 4 antipodal ones
        assert_eq!(pairs.len(), 24);
        assert!(pairs.iter().all(|&(x, y)| (y - x).abs() <= 3));
        let sys = SmallSystem::new(7).unwrap();
        assert_eq!(sys.ring_pairs().len(), 21);
    }

    #[test]
    fn generator_rows_sum_to_zero_offdiagonals_nonnegative() {
        let (sys, _, q) = system_and_generator(6, 1.0);
        let s_count = sys.state_count();
        for s in 0..s_count {
            let row = &q[s * s_count..(s + 1) * s_count];
            let sum: f64 = row.iter().sum();
            assert!(sum.abs() < 1e-12, "row {s} sums to {sum}");
            for (t, &v) in row.iter().enumerate() {
                if t != s {
                    assert!(v >= 0.0, "negative rate {v} at ({s},{t})");
                }
            }
        }
    }

    #[test]
    fn generator_conserves_particle_number() {
        let (sys, _, q) = system_and_generator(6, 0.5);
        let s_count = sys.state_count();
        for s in 0..s_count {
            for t in 0..s_count {
                if s != t && q[s * s_count + t] != 0.0 {
                    assert_eq!(s.count_ones(), t.count_ones());
                }
            }
        }
    }

    #[test]
    fn detailed_balance_under_bernoulli_measures() {
        let (sys, _, q) = system_and_generator(6, 1.0);
        for b in [0.3, 0.5, 0.8] {
            let r = sys.detailed_balance_residual(&q, b);
            assert!(r < 1e-12, "b={b}: residual {r}");
        }
    }

    #[test]
    fn sign_corrupted_rates_are_detectable() {
        let sys = SmallSystem::new(5).unwrap();
        let kernel = JumpKernel::for_ring(1.0, 5).unwrap();
        let q = sys
            .build_generator_with(&kernel, |eta, x, y, k| {
                rate_c(eta, x, y, k).map(|r| -r)
            })
            .unwrap();
        let s_count = sys.state_count();
        let negative = (0..s_count).any(|s| {
            (0..s_count).any(|t| s != t && q[s * s_count + t] < 0.0)
        });
        assert!(negative, "sign corruption must surface as negative rates");
    }

    #[test]
    fn dirichlet_form_constant_density_vanishes() {
        let (sys, kernel, _) = system_and_generator(5, 1.0);
        let f = vec![1.0; sys.state_count()];
        let (d, d_nn) = dirichlet_form(&sys, &kernel, &f, 0.4).unwrap();
        assert_eq!(d, 0.0);
        assert_eq!(d_nn, 0.0);
    }

    #[test]
    fn dirichlet_form_dominates_nearest_neighbor_part() {
        let (sys, kernel, _) = system_and_generator(6, 1.0);
        for seed in 0..5 {
            let f = random_density(&sys, 0.5, seed);
            let (d, d_nn) = dirichlet_form(&sys, &kernel, &f, 0.5).unwrap();
            assert!(d >= d_nn && d_nn >= 0.0, "D={d}, D_NN={d_nn}");
        }
    }

    #[test]
    fn dirichlet_form_matches_generator_quadratic_form() {
        // <L sqrt(f), sqrt(f)>_nu = -D/2
        let (sys, kernel, q) = system_and_generator(6, 1.0);
        let b = 0.5;
        let f = random_density(&sys, b, 42);
        let w = nu_b_weights(sys.size(), b);
        let g: Vec<f64> = f.iter().map(|&v| v.sqrt()).collect();
        let s_count = sys.state_count();
        let mut lhs = 0.0;
        for s in 0..s_count {
            let lg: f64 = (0..s_count).map(|t| q[s * s_count + t] * g[t]).sum();
            lhs += w[s] * g[s] * lg;
        }
        let (d, _) = dirichlet_form(&sys, &kernel, &f, b).unwrap();
        assert!((lhs + d / 2.0).abs() < 1e-10, "lhs={lhs}, D={d}");
    }

    #[test]
    fn dirichlet_form_rejects_non_densities() {
        let (sys, kernel, _) = system_and_generator(4, 1.0);
        let mut f = vec![1.0; sys.state_count()];
        f[3] = -0.5;
        assert!(dirichlet_form(&sys, &kernel, &f, 0.5).is_err());
        let f = vec![2.0; sys.state_count()];
        assert!(dirichlet_form(&sys, &kernel, &f, 0.5).is_err());
    }

    /// Taylor-with-squaring matrix exponential, the independent oracle for
    /// uniformization.
    fn expm_row(q: &[f64], s_count: usize, t: f64, start: usize) -> Vec<f64> {
        let inf_norm = (0..s_count)
            .map(|i| {
                q[i * s_count..(i + 1) * s_count]
                    .iter()
                    .map(|v| v.abs() * t)
                    .sum::<f64>()
            })
            .fold(0.0_f64, f64::max);
        let squarings = inf_norm.log2().ceil().max(0.0) as usize + 1;
        let scale = t / (1u64 << squarings) as f64;
        // m = exp(Q * scale) by plain Taylor
        let mut m = vec![0.0; s_count * s_count];
        for i in 0..s_count {
            m[i * s_count + i] = 1.0;
        }
        let mut term = m.clone();
        for k in 1..=30 {
            let mut next = vec![0.0; s_count * s_count];
            for i in 0..s_count {
                for l in 0..s_count {
                    let v = term[i * s_count + l];
                    if v != 0.0 {
                        for j in 0..s_count {
                            next[i * s_count + j] += v * q[l * s_count + j] * scale / k as f64;
                        }
                    }
                }
            }
            for (mi, &ni) in m.iter_mut().zip(&next) {
                *mi += ni;
            }
            term = next;
        }
        for _ in 0..squarings {
            let mut sq = vec![0.0; s_count * s_count];
            for i in 0..s_count {
                for l in 0..s_count {
                    let v = m[i * s_count + l];
                    if v != 0.0 {
                        for j in 0..s_count {
                            sq[i * s_count + j] += v * m[l * s_count + j];
                        }
                    }
                }
            }
            m = sq;
        }
        m[start * s_count..(start + 1) * s_count].to_vec()
    }

    #[test]
    fn uniformization_matches_matrix_exponential() {
        let (sys, _, q) = system_and_generator(4, 0.5);
        let s_count = sys.state_count();
        let start = 0b0101;
        let mut v0 = vec![0.0; s_count];
        v0[start] = 1.0;
        let t = 0.7;
        let got = sys.evolve(&q, &v0, t).unwrap();
        let want = expm_row(&q, s_count, t, start);
        let total: f64 = got.iter().sum();
        assert!((total - 1.0).abs() < 1e-12, "mass {total}");
        for (s, (&g, &w)) in got.iter().zip(&want).enumerate() {
            assert!((g - w).abs() < 1e-10, "state {s}: {g} vs {w}");
        }
    }

    #[test]
    fn uniformization_at_time_zero_is_identity() {
        let (sys, _, q) = system_and_generator(4, 1.0);
        let mut v0 = vec![0.0; sys.state_count()];
        v0[7] = 1.0;
        assert_eq!(sys.evolve(&q, &v0, 0.0).unwrap(), v0);
    }

    #[test]
    fn uniformization_rejects_bad_input() {
        let (sys, _, q) = system_and_generator(4, 1.0);
        let v0 = vec![0.5; sys.state_count()];
        assert!(sys.evolve(&q, &v0, 1.0).is_err());
        let mut v1 = vec![0.0; sys.state_count()];
        v1[0] = 1.0;
        assert!(sys.evolve(&q, &v1, -1.0).is_err());
    }
}
