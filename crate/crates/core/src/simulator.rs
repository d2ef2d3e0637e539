//! Event-driven simulation of the constrained long-jump exclusion process on
//! a periodic ring, run in the accelerated time scale `t n^gamma`.
//!
//! The engine is a thinning scheme that is exact in law: proposals fire at the
//! constant rate `n^gamma · 2 · m_L · (#particles)` (`m_L` the kept mass of
//! the ring-truncated jump law), a proposal picks a uniformly random particle
//! and a jump from the truncated law, and is accepted with probability
//! `c_{x,y}(η)/4 ∈ [0, 1]`.  The resulting exchange intensity of the ordered
//! source-occupied pair `(x, x+z)` is `n^gamma p(z) c_{x,x+z}(η)/2`, which is
//! the generator's unordered-pair rate; pairs with both endpoints occupied or
//! both empty are never exchanged, matching the exclusion factor `ξ`.

use crate::error::{Error, Result};
use crate::kernel::{JumpKernel, TestFunction};
use crate::lattice::{tilde_c, Configuration};
use crate::measure::site_position;
use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine as _;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::io::Write;
use std::time::Instant;

/// Parameters of one simulation run on the ring of `n · window` sites.
#[derive(Clone, Debug)]
pub struct SimParams {
    /// Scaling parameter: lattice spacing `1/n`, time speedup `n^gamma`.
    pub n: u64,
    /// Jump-law exponent, in `(0, 2)`.
    pub gamma: f64,
    /// Final macroscopic time.
    pub horizon: f64,
    /// RNG seed; equal seeds give bit-identical trajectories.
    pub seed: u64,
    /// Macroscopic window width; the ring has `n · window` sites covering
    /// `[-window/2, window/2)`.
    pub window: u64,
    /// Sorted times in `[0, horizon]` at which snapshots are kept.
    pub record_times: Vec<f64>,
}

impl SimParams {
    pub fn new(
        n: u64,
        gamma: f64,
        horizon: f64,
        seed: u64,
        window: u64,
        record_times: Vec<f64>,
    ) -> Result<Self> {
        if n < 1 || window < 1 || n * window < 3 {
            return Err(Error::Parameter(format!(
                "ring of {n} x {window} sites is too small"
            )));
        }
        crate::kernel::normalizer(gamma)?;
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::Parameter(format!("horizon {horizon} must be positive")));
        }
        for w in record_times.windows(2) {
            if !(w[1] >= w[0]) {
                return Err(Error::Parameter("record times must be sorted".into()));
            }
        }
        if let (Some(&first), Some(&last)) = (record_times.first(), record_times.last()) {
            if !(first >= 0.0 && last <= horizon) {
                return Err(Error::Parameter(format!(
                    "record times must lie in [0, {horizon}]"
                )));
            }
        }
        if record_times.iter().any(|t| !t.is_finite()) {
            return Err(Error::Parameter("record times must be finite".into()));
        }
        Ok(Self {
            n,
            gamma,
            horizon,
            seed,
            window,
            record_times,
        })
    }

    /// Number of ring sites, `n · window`.
    pub fn ring_size(&self) -> usize {
        (self.n * self.window) as usize
    }
}

/// A simulated path: the parameters it was run with and the configuration at
/// each requested record time.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub params: SimParams,
    pub snapshots: Vec<(f64, Configuration)>,
    /// Accepted exchanges.
    pub event_count: u64,
    /// Proposed exchanges (accepted or not).
    pub proposal_count: u64,
    pub elapsed_seconds: f64,
}

#[derive(Serialize)]
struct MetaRecord<'a> {
    kind: &'a str,
    version: &'a str,
    n: u64,
    gamma: f64,
    window: u64,
    horizon: f64,
    seed: u64,
    sites: usize,
    event_count: u64,
    proposal_count: u64,
    snapshots: usize,
}

#[derive(Serialize)]
struct SnapshotRecord {
    kind: &'static str,
    t: f64,
    n: u64,
    gamma: f64,
    seed: u64,
    particle_count: usize,
    /// Packed occupancy bits (site `x` in byte `x>>3`, bit `x&7`), base64.
    occupancy: String,
}

impl Trajectory {
    /// The recorded configuration at time `t` (must match a record time to
    /// relative precision `1e-12`).
    pub fn snapshot_at(&self, t: f64) -> Result<&Configuration> {
        self.snapshots
            .iter()
            .find(|(s, _)| (s - t).abs() <= 1e-12 * t.abs().max(1.0))
            .map(|(_, eta)| eta)
            .ok_or_else(|| Error::Domain(format!("time {t} was not recorded")))
    }

    /// Writes one meta line followed by one line per snapshot, each a JSON
    /// object, so runs can be streamed to disk and diffed byte-for-byte.
    pub fn export_jsonl<W: Write>(&self, out: &mut W) -> Result<()> {
        let meta = MetaRecord {
            kind: "meta",
            version: env!("CARGO_PKG_VERSION"),
            n: self.params.n,
            gamma: self.params.gamma,
            window: self.params.window,
            horizon: self.params.horizon,
            seed: self.params.seed,
            sites: self.params.ring_size(),
            event_count: self.event_count,
            proposal_count: self.proposal_count,
            snapshots: self.snapshots.len(),
        };
        serde_json::to_writer(&mut *out, &meta).map_err(|e| Error::Io(e.to_string()))?;
        out.write_all(b"\n")?;
        for (t, eta) in &self.snapshots {
            let rec = SnapshotRecord {
                kind: "snapshot",
                t: *t,
                n: self.params.n,
                gamma: self.params.gamma,
                seed: self.params.seed,
                particle_count: eta.particle_count(),
                occupancy: BASE64.encode(eta.packed_bits()),
            };
            serde_json::to_writer(&mut *out, &rec).map_err(|e| Error::Io(e.to_string()))?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// Derives the seed for replica `index` from a base seed (splitmix64 of the
/// shifted index), so replica streams are decorrelated but reproducible.
pub fn replica_seed(base: u64, index: u64) -> u64 {
    let mut z = base.wrapping_add((index + 1).wrapping_mul(0x9E3779B97F4A7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// Runs the process from `initial` and returns the recorded trajectory.
pub fn run(initial: &Configuration, params: &SimParams) -> Result<Trajectory> {
    run_inner(initial, params, None).map(|(traj, _)| traj)
}

/// Runs the process while accumulating, exactly between events, the additive
/// decomposition of the pairing `⟨π^n_t, G_t⟩` for the product test function
/// `G_t(u) = q(t) φ(u)`; returns `(time, residual)` at every record time.
///
/// The residual is the pairing increment minus its integrated compensator,
/// `q(t)A_t - q(0)A_0 - ∫_0^t q'(s) A_s ds - ∫_0^t q(s) n^γ (L A)(η_s) ds`,
/// a mean-zero martingale evaluated with no quadrature error: `A_s` and the
/// generator term are piecewise constant in `s`, and `q`, `∫q` are closed
/// forms.
pub fn run_with_diagnostics(
    initial: &Configuration,
    params: &SimParams,
    g: &TestFunction,
) -> Result<(Trajectory, Vec<(f64, f64)>)> {
    let tracker = DynkinTracker::new(initial, params, g)?;
    let (traj, tracker) = run_inner(initial, params, Some(tracker))?;
    Ok((traj, tracker.expect("tracker round trip").samples))
}

fn run_inner<'a>(
    initial: &Configuration,
    params: &SimParams,
    mut tracker: Option<DynkinTracker<'a>>,
) -> Result<(Trajectory, Option<DynkinTracker<'a>>)> {
    let sites = params.ring_size();
    if initial.size() != sites {
        return Err(Error::Parameter(format!(
            "configuration has {} sites, parameters want {sites}",
            initial.size()
        )));
    }
    let start = Instant::now();
    let kernel = JumpKernel::for_ring(params.gamma, sites)?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut eta = initial.clone();
    let mut positions: Vec<i64> = eta.occupied_sites().map(|x| x as i64).collect();
    let count = positions.len();
    let speedup = (params.n as f64).powf(params.gamma);
    let proposal_rate = speedup * 2.0 * kernel.renorm_mass() * count as f64;

    let rec = &params.record_times;
    let mut snapshots = Vec::with_capacity(rec.len());
    let mut next_rec = 0usize;
    let mut flush = |r: f64, eta: &Configuration, tracker: &mut Option<DynkinTracker>| {
        snapshots.push((r, eta.clone()));
        if let Some(tr) = tracker {
            tr.record(r);
        }
    };

    let mut event_count = 0u64;
    let mut proposal_count = 0u64;

    if count > 0 && proposal_rate > 0.0 {
        let mut t = 0.0_f64;
        loop {
            let u: f64 = rng.gen();
            // 1 - u lies in (0, 1], so the wait is finite and nonnegative
            let t_next = t - (1.0 - u).ln() / proposal_rate;
            while next_rec < rec.len() && rec[next_rec] <= t_next {
                flush(rec[next_rec], &eta, &mut tracker);
                next_rec += 1;
            }
            if t_next > params.horizon {
                break;
            }
            t = t_next;
            proposal_count += 1;
            let i = rng.gen_range(0..count);
            let x = positions[i];
            let z = kernel.sample(&mut rng);
            let y = x + z;
            let u_acc: f64 = rng.gen();
            if eta.get(y) == 0 {
                let tc = tilde_c(&eta, x, y)?;
                debug_assert!(tc <= 4, "constraint value {tc} exceeds the thinning bound");
                if u_acc * 4.0 < tc as f64 {
                    event_count += 1;
                    if let Some(tr) = tracker.as_mut() {
                        tr.advance_to(t);
                        tr.apply_swap(&eta, x, y);
                    }
                    eta.swap_sites(x, y)?;
                    positions[i] = eta.wrap(y) as i64;
                }
            }
        }
    }
    // a frozen or exhausted run still reports every requested time
    while next_rec < rec.len() {
        flush(rec[next_rec], &eta, &mut tracker);
        next_rec += 1;
    }

    Ok((
        Trajectory {
            params: params.clone(),
            snapshots,
            event_count,
            proposal_count,
            elapsed_seconds: start.elapsed().as_secs_f64(),
        },
        tracker,
    ))
}

/// Exact between-event accumulator for the decomposition tracked by
/// [`run_with_diagnostics`].
///
/// State: `a = ⟨π^n, φ⟩` (O(1) update per exchange) and `b_raw`, the raw
/// double sum `Σ_x Σ_z p(z) tilde_c_{x,x+z} (η(x+z)-η(x)) (φ̂(x)-φ̂(x+z))`
/// whose `n^γ/(4n)` multiple is the generator applied to the pairing.  An
/// exchange at `{x, y}` only touches summands referencing a site whose
/// occupancy or neighbor count changed, i.e. rows `x ∈ S` or columns
/// `x+z ∈ S` for `S = {x±1, x, y±1, y}`; by the summand's symmetry under
/// `(x, z) -> (x+z, -z)` that restricted sum is `2 Σ_{x∈S} Row(x) - Inner(S)`.
struct DynkinTracker<'a> {
    g: &'a TestFunction,
    phi_hat: Vec<f64>,
    /// `p(|z|)` for `|z| = 0..=L`; entry 0 unused.
    prob: Vec<f64>,
    trunc: usize,
    /// `n^gamma / (4 n)`.
    pref: f64,
    inv_n: f64,
    a: f64,
    a0: f64,
    q0: f64,
    b_raw: f64,
    i1: f64,
    i2_raw: f64,
    t_last: f64,
    samples: Vec<(f64, f64)>,
}

impl<'a> DynkinTracker<'a> {
    fn new(initial: &Configuration, params: &SimParams, g: &'a TestFunction) -> Result<Self> {
        let sites = params.ring_size();
        let kernel = JumpKernel::for_ring(params.gamma, sites)?;
        let trunc = kernel.truncation() as usize;
        let phi_hat: Vec<f64> = (0..sites)
            .map(|x| g.profile(site_position(x, params.n, sites)))
            .collect();
        let prob: Vec<f64> = (0..=trunc).map(|m| kernel.prob(m as i64)).collect();
        let nf = params.n as f64;
        let mut tracker = Self {
            g,
            phi_hat,
            prob,
            trunc,
            pref: nf.powf(params.gamma) / (4.0 * nf),
            inv_n: 1.0 / nf,
            a: 0.0,
            a0: 0.0,
            q0: g.time_factor(0.0),
            b_raw: 0.0,
            i1: 0.0,
            i2_raw: 0.0,
            t_last: 0.0,
            samples: Vec::new(),
        };
        tracker.a = initial
            .occupied_sites()
            .map(|x| tracker.phi_hat[x])
            .sum::<f64>()
            * tracker.inv_n;
        tracker.a0 = tracker.a;
        tracker.b_raw = (0..sites).map(|x| tracker.row(initial, x)).sum();
        Ok(tracker)
    }

    /// One summand pair factor: `p(d) tilde_c (η(y)-η(x)) (φ̂(x)-φ̂(y))`,
    /// symmetric in `x <-> y`.
    #[inline]
    fn term(&self, occ: &[u8], x: usize, y: usize, mag: usize) -> f64 {
        let sites = self.phi_hat.len();
        let prev = |s: usize| if s == 0 { sites - 1 } else { s - 1 };
        let next = |s: usize| if s + 1 == sites { 0 } else { s + 1 };
        let tc = (occ[prev(x)] + occ[next(x)] + occ[prev(y)] + occ[next(y)]) as f64;
        self.prob[mag] * tc * (occ[y] as f64 - occ[x] as f64) * (self.phi_hat[x] - self.phi_hat[y])
    }

    /// `Row(x) = Σ_{1<=|z|<=L} term(x, x+z)`.
    fn row(&self, eta: &Configuration, x: usize) -> f64 {
        let sites = self.phi_hat.len();
        let occ = eta.bits();
        let mut up = x;
        let mut down = x;
        let mut sum = 0.0;
        for mag in 1..=self.trunc {
            up += 1;
            if up == sites {
                up = 0;
            }
            down = if down == 0 { sites - 1 } else { down - 1 };
            sum += self.term(occ, x, up, mag) + self.term(occ, x, down, mag);
        }
        sum
    }

    /// Sum of all summands referencing the neighborhoods of the swapped pair.
    fn affected(&self, eta: &Configuration, s: &[usize]) -> f64 {
        let sites = self.phi_hat.len();
        let occ = eta.bits();
        let rows: f64 = s.iter().map(|&x| self.row(eta, x)).sum();
        let mut inner = 0.0;
        for &x in s {
            for &y in s {
                if x == y {
                    continue;
                }
                let raw = (y + sites - x) % sites;
                let mag = raw.min(sites - raw);
                if mag <= self.trunc {
                    inner += self.term(occ, x, y, mag);
                }
            }
        }
        2.0 * rows - inner
    }

    fn advance_to(&mut self, t: f64) {
        self.i1 += self.a * (self.g.time_factor(t) - self.g.time_factor(self.t_last));
        self.i2_raw +=
            self.b_raw * (self.g.time_factor_integral(t) - self.g.time_factor_integral(self.t_last));
        self.t_last = t;
    }

    /// Updates `a` and `b_raw` for the exchange moving the particle at `x`
    /// to the empty site `y`; `eta` is the configuration before the swap.
    fn apply_swap(&mut self, eta: &Configuration, x: i64, y: i64) {
        let sites = self.phi_hat.len();
        let (xi, yi) = (eta.wrap(x), eta.wrap(y));
        let mut s: Vec<usize> = [
            xi + sites - 1,
            xi,
            xi + 1,
            yi + sites - 1,
            yi,
            yi + 1,
        ]
        .iter()
        .map(|&v| v % sites)
        .collect();
        s.sort_unstable();
        s.dedup();
        let before = self.affected(eta, &s);
        let mut swapped = eta.clone();
        swapped.swap_sites(x, y).expect("distinct sites");
        let after = self.affected(&swapped, &s);
        self.b_raw += after - before;
        self.a += (self.phi_hat[yi] - self.phi_hat[xi]) * self.inv_n;
    }

    fn record(&mut self, t: f64) {
        self.advance_to(t);
        let residual = self.g.time_factor(t) * self.a
            - self.q0 * self.a0
            - self.i1
            - self.pref * self.i2_raw;
        self.samples.push((t, residual));
    }
}

/// Splits the accelerated generator action on the pairing into its principal
/// part and remainder:
///
/// `n^γ (L ⟨π^n, G_s⟩)(η) = (n^γ/2n) Σ_x (K_n G_s)(x/n) η(x)[η(x-1)+η(x+1)]
///                         + (n^γ/2n) R_n(η, G_s)`,
///
/// with `(K_n G)(x/n) = Σ_z p(z)[G((x+z)/n) - G(x/n)]` and
/// `R_n = Σ_x η(x) Σ_z p(z)[G_s((x+1)/n) - G_s(x/n) + G_s((x+z)/n)
///        - G_s((x+z+1)/n)] η(x+z+1)`.
///
/// Both pieces are evaluated on the ring (displacements `1 <= |z| <= L`,
/// wrapped positions), under which the split is an exact identity with the
/// direct form [`generator_action_direct`].
pub fn generator_action(
    eta: &Configuration,
    g: &TestFunction,
    s: f64,
    params: &SimParams,
) -> Result<(f64, f64)> {
    let sites = params.ring_size();
    if eta.size() != sites {
        return Err(Error::Parameter(format!(
            "configuration has {} sites, parameters want {sites}",
            eta.size()
        )));
    }
    let kernel = JumpKernel::for_ring(params.gamma, sites)?;
    let trunc = kernel.truncation();
    let ghat: Vec<f64> = (0..sites)
        .map(|x| g.eval(s, site_position(x, params.n, sites)))
        .collect();
    let at = |x: i64| ghat[x.rem_euclid(sites as i64) as usize];
    let nf = params.n as f64;
    let pref = nf.powf(params.gamma) / (2.0 * nf);

    let mut principal = 0.0;
    let mut remainder = 0.0;
    for x in 0..sites as i64 {
        let neighbors = (eta.get(x - 1) + eta.get(x + 1)) as f64;
        let here = eta.get(x) as f64;
        let mut kn = 0.0;
        let mut rem = 0.0;
        for m in 1..=trunc {
            for &z in &[m, -m] {
                let p = kernel.prob(z);
                kn += p * (at(x + z) - at(x));
                rem += p
                    * (at(x + 1) - at(x) + at(x + z) - at(x + z + 1))
                    * eta.get(x + z + 1) as f64;
            }
        }
        principal += kn * here * neighbors;
        remainder += here * rem;
    }
    Ok((pref * principal, pref * remainder))
}

/// The accelerated generator applied to the pairing, summed directly:
/// `(n^γ/4n) Σ_x Σ_z p(z) tilde_c_{x,x+z}(η) (η(x+z)-η(x)) (Ĝ(x)-Ĝ(x+z))`.
pub fn generator_action_direct(
    eta: &Configuration,
    g: &TestFunction,
    s: f64,
    params: &SimParams,
) -> Result<f64> {
    let sites = params.ring_size();
    if eta.size() != sites {
        return Err(Error::Parameter(format!(
            "configuration has {} sites, parameters want {sites}",
            eta.size()
        )));
    }
    let kernel = JumpKernel::for_ring(params.gamma, sites)?;
    let trunc = kernel.truncation();
    let ghat: Vec<f64> = (0..sites)
        .map(|x| g.eval(s, site_position(x, params.n, sites)))
        .collect();
    let at = |x: i64| ghat[x.rem_euclid(sites as i64) as usize];
    let nf = params.n as f64;

    let mut sum = 0.0;
    for x in 0..sites as i64 {
        let here = eta.get(x) as f64;
        for m in 1..=trunc {
            for &z in &[m, -m] {
                let y = x + z;
                let tc = (eta.get(x - 1) + eta.get(x + 1) + eta.get(y - 1) + eta.get(y + 1)) as f64;
                sum += kernel.prob(z) * tc * (eta.get(y) as f64 - here) * (at(x) - at(y));
            }
        }
    }
    Ok(nf.powf(params.gamma) / (4.0 * nf) * sum)
}

/// Trapezoid-rule estimate of the decomposition residual on the snapshot
/// grid: the pairing increment minus `∫ (∂_s + n^γ L)⟨π^n, G_s⟩ ds` with the
/// integrand evaluated at recorded times only.  `t` must be a grid point.
/// Unlike [`run_with_diagnostics`] this sees nothing between snapshots, so it
/// carries quadrature error on top of the martingale fluctuation.
pub fn dynkin_residual(traj: &Trajectory, g: &TestFunction, t: f64) -> Result<f64> {
    let grid = &traj.snapshots;
    let last = grid
        .iter()
        .position(|&(s, _)| (s - t).abs() <= 1e-12 * t.abs().max(1.0))
        .ok_or_else(|| Error::Domain(format!("time {t} is not on the snapshot grid")))?;
    let n = traj.params.n;
    let integrand = |s: f64, eta: &Configuration| -> Result<f64> {
        let dt_part = g.time_factor_dt(s)
            * crate::measure::pair_empirical_with(eta, n, |u| g.profile(u));
        Ok(dt_part + generator_action_direct(eta, g, s, &traj.params)?)
    };
    let (t0, eta0) = &grid[0];
    let (tl, etal) = &grid[last];
    let mut integral = 0.0;
    let mut prev: Option<(f64, f64)> = None;
    for (s, eta) in &grid[..=last] {
        let v = integrand(*s, eta)?;
        if let Some((s0, v0)) = prev {
            integral += 0.5 * (v0 + v) * (s - s0);
        }
        prev = Some((*s, v));
    }
    Ok(crate::measure::pair_empirical(etal, g, *tl, n)
        - crate::measure::pair_empirical(eta0, g, *t0, n)
        - integral)
}
