//! Executable acceptance checks.  Each function exercises one end-to-end
//! contract of the crate and returns a [`CheckReport`] with the measured
//! numbers, so the same code backs the integration suite and the `verify`
//! subcommand of the CLI.
//!
//! Every check is deterministic: random inputs derive from seeds pinned
//! here, and replica fan-out collects results in replica order before
//! reducing.  The two trend checks share one replica experiment
//! ([`hydro_experiment`]) because they are statements about the same
//! trajectories.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::kernel::{
    convext_bound, delta_gamma, frac_lap, frac_lap_envelope, JumpKernel, TestFunction,
};
use crate::kernel::convdisc_gap;
use crate::lattice::{nn_rate_identity, rate_c, Configuration, ProductMeasure, SmallSystem};
use crate::measure::{intermediate_gaps, pair_empirical, replacement_decomposition};
use crate::paths::{bond_multiplicity, mpl_path_for};
use crate::pde::{linear_reference, weak_residual, GridSpec, PdeParams, Solver};
use crate::simulator::{replica_seed, run, run_with_diagnostics, SimParams};
use crate::{Error, Result};

/// Outcome of one check: its stable name, verdict, a human-readable summary
/// with the measured quantities, and the wall time it took.
#[derive(Clone, Debug, Serialize)]
pub struct CheckReport {
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
    /// Wall time; skipped in serialized reports so reruns are byte-identical.
    #[serde(skip)]
    pub seconds: f64,
}

impl CheckReport {
    fn finish(name: &'static str, pass: bool, detail: String, started: Instant) -> Self {
        Self {
            name,
            pass,
            detail,
            seconds: started.elapsed().as_secs_f64(),
        }
    }
}

/// Entrywise detailed-balance tolerance for exact generators.
pub const REVERSIBILITY_TOL: f64 = 1e-12;
/// Total-variation budget for the sampled law against the matrix exponential.
pub const SMALL_LAW_TV: f64 = 0.02;
const SMALL_LAW_REPLICAS: u64 = 100_000;
const SMALL_LAW_SEED: u64 = 3;
const SMALL_LAW_T: f64 = 0.5;
/// Grid for the operator-convergence and remainder-decay scans.
const SCAN_NS: [u64; 6] = [128, 256, 512, 1024, 2048, 4096];
const SCAN_GAMMAS: [f64; 3] = [0.5, 1.0, 1.5];
const SCAN_HORIZON: f64 = 1.0;
/// Two-sided tolerance on the measured log-log remainder slope.
pub const SLOPE_TOL: f64 = 0.15;
const ENVELOPE_POINTS: usize = 1000;
const DYNKIN_NS: [u64; 3] = [128, 256, 512];
const DYNKIN_WINDOW: u64 = 2;
const DYNKIN_T: f64 = 0.2;
const DYNKIN_GAMMA: f64 = 1.0;
const DYNKIN_REPLICAS: u64 = 64;
const DYNKIN_SEED: u64 = 7;
/// Headroom on the variance constant calibrated at the smallest size; it
/// covers the sampling noise of a 64-replica variance estimate (relative
/// standard deviation about `sqrt(2/64) = 18%`).
pub const DYNKIN_VAR_SLACK: f64 = 1.5;
const PATHS_SEED: u64 = 21;
const PATHS_RANDOM_CASES: usize = 200;
const LINEAR_N_PDE: u64 = 2048;
const LINEAR_WIDTH: f64 = 8.0;
const LINEAR_B: f64 = 0.3;
const LINEAR_T: f64 = 0.25;
/// L1 budget for the solver against the closed-form linear evolution.
pub const LINEAR_L1_TOL: f64 = 5e-3;
const WEAK_N_PDES: [u64; 2] = [512, 1024];
/// Absolute budget for the weak-form functional on solver output.
pub const WEAK_F_TOL: f64 = 1e-3;
/// The worst residual must at least halve when the grid is refined 2x;
/// measured headroom over exact halving absorbs the quadrature floor of the
/// functional itself.
pub const WEAK_REFINE_RATIO: f64 = 0.6;
/// Worst per-replica defect allowed in the staged-gap telescoping identity.
pub const TELESCOPE_TOL: f64 = 1e-12;

/// Builds the exact generator on small rings and checks two things for each
/// `(N, gamma)`: that it is a valid rate matrix (nonnegative off-diagonal,
/// vanishing row sums) and that it is in detailed balance with the
/// occupancy-count product weights for every `b`.  The validity half is what
/// catches a sign corruption of the constraint: negating `tilde_c` negates
/// both sides of the balance relation at once, so balance alone would still
/// hold.
pub fn reversibility(mutate_tilde_c: bool) -> Result<CheckReport> {
    let started = Instant::now();
    let mut worst_balance: f64 = 0.0;
    let mut worst_row: f64 = 0.0;
    let mut min_offdiag: f64 = f64::INFINITY;
    for &size in &[4usize, 6, 8] {
        let sys = SmallSystem::new(size)?;
        for &gamma in &SCAN_GAMMAS {
            let kernel = JumpKernel::for_ring(gamma, size)?;
            let q = if mutate_tilde_c {
                sys.build_generator_with(&kernel, |eta, x, y, k| {
                    rate_c(eta, x, y, k).map(|r| -r)
                })?
            } else {
                sys.build_generator(&kernel)?
            };
            let states = sys.state_count();
            for s in 0..states {
                let mut row = 0.0;
                for t in 0..states {
                    row += q[s * states + t];
                    if s != t {
                        min_offdiag = min_offdiag.min(q[s * states + t]);
                    }
                }
                worst_row = worst_row.max(row.abs());
            }
            for &b in &[0.3, 0.5, 0.8] {
                worst_balance = worst_balance.max(sys.detailed_balance_residual(&q, b));
            }
        }
    }
    let pass = worst_balance <= REVERSIBILITY_TOL
        && worst_row <= REVERSIBILITY_TOL
        && min_offdiag >= 0.0;
    let detail = format!(
        "worst balance residual {worst_balance:.2e} (tol {REVERSIBILITY_TOL:.0e}), \
         worst row sum {worst_row:.2e}, smallest off-diagonal rate {min_offdiag:.2e}"
    );
    Ok(CheckReport::finish("reversibility", pass, detail, started))
}

/// Simulates the 8-site ring to a fixed microscopic time and compares the
/// empirical law over all 256 states with the matrix exponential of the
/// exact generator, in total variation.
pub fn small_system_law() -> Result<CheckReport> {
    let started = Instant::now();
    let sys = SmallSystem::new(8)?;
    let kernel = JumpKernel::for_ring(1.0, 8)?;
    let q = sys.build_generator(&kernel)?;
    let eta0 = Configuration::from_bits(&[1, 0, 1, 0, 1, 0, 1, 0])?;
    let mut v0 = vec![0.0; sys.state_count()];
    v0[sys.encode(&eta0)] = 1.0;
    let law = sys.evolve(&q, &v0, SMALL_LAW_T)?;
    let counts: Vec<u64> = (0..SMALL_LAW_REPLICAS)
        .into_par_iter()
        .map(|r| -> Result<usize> {
            let params = SimParams::new(
                1,
                1.0,
                SMALL_LAW_T,
                replica_seed(SMALL_LAW_SEED, r),
                8,
                vec![SMALL_LAW_T],
            )?;
            let traj = run(&eta0, &params)?;
            Ok(sys.encode(traj.snapshot_at(SMALL_LAW_T)?))
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .fold(vec![0u64; sys.state_count()], |mut acc, idx| {
            acc[idx] += 1;
            acc
        });
    let tv: f64 = 0.5
        * counts
            .iter()
            .zip(law.iter())
            .map(|(&c, &p)| (c as f64 / SMALL_LAW_REPLICAS as f64 - p).abs())
            .sum::<f64>();
    let pass = tv <= SMALL_LAW_TV;
    let detail = format!(
        "TV distance {tv:.4} over {} replicas at t = {SMALL_LAW_T} (tol {SMALL_LAW_TV})",
        SMALL_LAW_REPLICAS
    );
    Ok(CheckReport::finish("small-system-law", pass, detail, started))
}

/// Exhaustive check of the nearest-neighbor rate identity over all 16 local
/// occupancy patterns: the general constrained rate and its separated form
/// must agree exactly.
pub fn nn_identity() -> Result<CheckReport> {
    let started = Instant::now();
    let mut checked = 0usize;
    let mut worst: f64 = 0.0;
    for pattern in 0u8..16 {
        let mut bits = [0u8; 6];
        for k in 0..4 {
            bits[1 + k] = (pattern >> k) & 1;
        }
        let eta = Configuration::from_bits(&bits)?;
        let (lhs, rhs) = nn_rate_identity(&eta, 2);
        worst = worst.max((lhs - rhs).abs());
        checked += 1;
    }
    let pass = worst == 0.0 && checked == 16;
    let detail = format!("16 patterns, worst |lhs - rhs| = {worst:.1e} (exact match required)");
    Ok(CheckReport::finish("nn-identity", pass, detail, started))
}

/// Scans the uniform gap between the scaled discrete operator and the
/// fractional Laplacian over doubling lattice sizes: the gap must fall
/// strictly at every doubling and end below a quarter of its starting
/// value, for each jump exponent.
pub fn operator_convergence() -> Result<CheckReport> {
    let started = Instant::now();
    let g = TestFunction::bump(0.0, 1.0)?;
    let mut pass = true;
    let mut lines = Vec::new();
    for &gamma in &SCAN_GAMMAS {
        let kernel = JumpKernel::new(gamma, 1)?;
        let gaps: Vec<f64> = SCAN_NS
            .iter()
            .map(|&n| convdisc_gap(&g, n, &kernel, SCAN_HORIZON))
            .collect::<Result<Vec<_>>>()?;
        let decreasing = gaps.windows(2).all(|w| w[1] < w[0]);
        let quartered = gaps[SCAN_NS.len() - 1] < gaps[0] / 4.0;
        pass &= decreasing && quartered;
        lines.push(format!(
            "gamma {gamma}: {:.3e} -> {:.3e} ({}, ratio {:.3})",
            gaps[0],
            gaps[SCAN_NS.len() - 1],
            if decreasing { "monotone" } else { "NOT monotone" },
            gaps[SCAN_NS.len() - 1] / gaps[0],
        ));
    }
    Ok(CheckReport::finish(
        "operator-convergence",
        pass,
        lines.join("; "),
        started,
    ))
}

fn least_squares_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(&x, &y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|&x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// Measures the log-log decay slope of the generator remainder sum over the
/// same size scan and compares it with the stated rate
/// `-min(2-gamma, 1, 1+delta-gamma)`; the remainder must also sit below its
/// calibrated envelope at every size.
pub fn remainder_slope() -> Result<CheckReport> {
    let started = Instant::now();
    let g = TestFunction::bump(0.0, 1.0)?;
    let mut pass = true;
    let mut lines = Vec::new();
    for &gamma in &SCAN_GAMMAS {
        let mut lhs = Vec::new();
        let mut enveloped = true;
        for &n in &SCAN_NS {
            let (value, bound) = convext_bound(&g, n, gamma, SCAN_HORIZON)?;
            enveloped &= value <= bound;
            lhs.push(value);
        }
        let xs: Vec<f64> = SCAN_NS.iter().map(|&n| (n as f64).ln()).collect();
        let ys: Vec<f64> = lhs.iter().map(|v| v.ln()).collect();
        let slope = least_squares_slope(&xs, &ys);
        let target = -(2.0 - gamma).min(1.0).min(1.0 + delta_gamma(gamma) - gamma);
        let ok = (slope - target).abs() <= SLOPE_TOL && enveloped;
        pass &= ok;
        lines.push(format!(
            "gamma {gamma}: slope {slope:.3} vs target {target:.2} +/- {SLOPE_TOL} \
             ({}, envelope {})",
            if (slope - target).abs() <= SLOPE_TOL { "within" } else { "OUTSIDE" },
            if enveloped { "held" } else { "BROKEN" },
        ));
    }
    Ok(CheckReport::finish(
        "remainder-slope",
        pass,
        lines.join("; "),
        started,
    ))
}

/// Evaluates the fractional Laplacian of three bump test functions on a
/// 1000-point grid spanning well past their supports and counts violations
/// of the closed-form envelope.
pub fn envelope() -> Result<CheckReport> {
    let started = Instant::now();
    let cases = [
        (TestFunction::bump(0.0, 1.0)?, 0.5),
        (TestFunction::bump(-0.3, 0.7)?, 1.0),
        (TestFunction::bump(0.4, 0.55)?, 1.5),
    ];
    let mut violations = 0usize;
    let mut tightest: f64 = 0.0;
    for (g, gamma) in &cases {
        let radius = g.support_radius();
        let lo = g.center() - 4.0 * radius;
        let hi = g.center() + 4.0 * radius;
        for i in 0..ENVELOPE_POINTS {
            let u = lo + (hi - lo) * i as f64 / (ENVELOPE_POINTS - 1) as f64;
            let value = frac_lap(g, 0.0, u, *gamma)?.abs();
            let cap = frac_lap_envelope(g, 0.0, u, *gamma)?;
            if value > cap + 1e-12 * (1.0 + cap) {
                violations += 1;
            }
            if cap > 0.0 {
                tightest = tightest.max(value / cap);
            }
        }
    }
    let pass = violations == 0;
    let detail = format!(
        "{violations} violations over {} points x {} functions; tightest ratio {tightest:.3}",
        ENVELOPE_POINTS,
        cases.len()
    );
    Ok(CheckReport::finish("envelope", pass, detail, started))
}

/// Runs the event-driven martingale tracker on stationary starts over three
/// lattice sizes: the replica mean at the middle size must sit within three
/// standard errors of zero, and the replica variance must obey the
/// `t * max(n^(gamma-2), 1/n)` scaling with the constant calibrated at the
/// smallest size.
pub fn dynkin_martingale() -> Result<CheckReport> {
    let started = Instant::now();
    let g = TestFunction::bump(0.0, 0.45)?;
    let mut means = Vec::new();
    let mut ses = Vec::new();
    let mut vars = Vec::new();
    for &n in &DYNKIN_NS {
        let sites = (n * DYNKIN_WINDOW) as usize;
        let mu = ProductMeasure::constant(0.5, sites)?;
        let samples: Vec<f64> = (0..DYNKIN_REPLICAS)
            .into_par_iter()
            .map(|r| -> Result<f64> {
                let seed = replica_seed(DYNKIN_SEED, r);
                let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x1111);
                let eta0 = mu.sample(&mut rng);
                let params = SimParams::new(
                    n,
                    DYNKIN_GAMMA,
                    DYNKIN_T,
                    seed,
                    DYNKIN_WINDOW,
                    vec![0.0, DYNKIN_T],
                )?;
                let (_, diag) = run_with_diagnostics(&eta0, &params, &g)?;
                Ok(diag.last().expect("recorded endpoint").1)
            })
            .collect::<Result<Vec<_>>>()?;
        let rf = DYNKIN_REPLICAS as f64;
        let mean = samples.iter().sum::<f64>() / rf;
        let var = samples.iter().map(|m| (m - mean) * (m - mean)).sum::<f64>() / (rf - 1.0);
        means.push(mean);
        ses.push((var / rf).sqrt());
        vars.push(var);
    }
    let rate = |n: u64| {
        DYNKIN_T * (n as f64).powf(DYNKIN_GAMMA - 2.0).max(1.0 / n as f64)
    };
    let c_cal = vars[0] / rate(DYNKIN_NS[0]);
    let mean_ok = means[1].abs() <= 3.0 * ses[1];
    let var_ok = (1..DYNKIN_NS.len())
        .all(|k| vars[k] <= DYNKIN_VAR_SLACK * c_cal * rate(DYNKIN_NS[k]));
    let pass = mean_ok && var_ok;
    let detail = format!(
        "mean at n={} is {:.2e} ({:.2} se); var {:.2e}/{:.2e}/{:.2e} vs scaling const {:.2e} \
         (slack {DYNKIN_VAR_SLACK})",
        DYNKIN_NS[1],
        means[1],
        (means[1] / ses[1]).abs(),
        vars[0],
        vars[1],
        vars[2],
        c_cal,
    );
    Ok(CheckReport::finish("dynkin-martingale", pass, detail, started))
}

fn audit_path(eta: &Configuration, x: i64, r: i64, j: i64) -> Result<bool> {
    let path = mpl_path_for(eta, x, r, j)?;
    let outcome = path.apply_checked(eta)?;
    let want = eta.exchange(x, x + r)?;
    // hop lengths stay within twice the midpoint scale
    Ok(outcome.configuration.bits() == want.bits()
        && outcome.min_tilde_c >= 1
        && outcome.all_exchanges_active
        && path.max_jump() <= 2 * ((r + 1) / 2))
}

/// Validates the long-bond exchange paths: exhaustively over every local
/// occupancy pattern for bond lengths 3..=10 and every intermediate-site
/// choice, then on randomized configurations with bond lengths up to 100.
/// Each path must land on the target exchange with every step active and
/// constrained-allowed, and no bond may be reused more than twice across
/// the intermediate-site family.
pub fn moving_particle_paths() -> Result<CheckReport> {
    let started = Instant::now();
    let x = 2i64;
    let mut cases = 0usize;
    let mut failures = 0usize;
    for r in 3i64..=10 {
        let m = (r + 1) / 2;
        let size = (r + 5) as usize;
        for pattern in 0u32..(1 << (r + 1)) {
            let mut bits = vec![0u8; size];
            bits[0] = 1;
            bits[1] = 1;
            for k in 0..=r {
                bits[(x + k) as usize] = ((pattern >> k) & 1) as u8;
            }
            let eta = Configuration::from_bits(&bits)?;
            for j in 1..=m {
                cases += 1;
                if !audit_path(&eta, x, r, j)? {
                    failures += 1;
                }
            }
        }
        if bond_multiplicity(0..r, r)? > 2 {
            failures += 1;
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(PATHS_SEED);
    let mut worst_mult = 0u32;
    for _ in 0..PATHS_RANDOM_CASES {
        use rand::Rng;
        let r = rng.gen_range(11i64..=100);
        let size = (r + 6) as usize;
        let mu = ProductMeasure::constant(0.5, size)?;
        let mut eta = mu.sample(&mut rng);
        eta.set(0, 1);
        eta.set(1, 1);
        let m = (r + 1) / 2;
        let j = rng.gen_range(1..=m);
        cases += 1;
        if !audit_path(&eta, x, r, j)? {
            failures += 1;
        }
        worst_mult = worst_mult.max(bond_multiplicity(0..2, r)?);
    }
    let pass = failures == 0 && worst_mult <= 2;
    let detail = format!(
        "{cases} path audits, {failures} failures; worst bond multiplicity {worst_mult} (cap 2)"
    );
    Ok(CheckReport::finish(
        "moving-particle-paths",
        pass,
        detail,
        started,
    ))
}

/// Integrates the linear-pressure equation from a bump perturbation and
/// compares with the closed-form convolution solution in L1 on the grid.
pub fn pde_linear_oracle() -> Result<CheckReport> {
    let started = Instant::now();
    let grid = GridSpec::window(LINEAR_N_PDE, LINEAR_WIDTH)?;
    let params = PdeParams::new(1.0, 1, LINEAR_B, 0.5)?;
    let solver = Solver::new(grid, params)?;
    let test = TestFunction::bump(0.0, 0.45)?;
    let g0 = grid.sample(|u| LINEAR_B + test.profile(u));
    let fields = solver.integrate(&g0, &[LINEAR_T])?;
    let want = linear_reference(&test, LINEAR_B, LINEAR_T, &grid)?;
    let l1: f64 = fields[0]
        .values()
        .iter()
        .zip(want.iter())
        .map(|(a, b)| (a - b).abs())
        .sum::<f64>()
        * grid.h();
    let pass = l1 <= LINEAR_L1_TOL;
    let detail = format!(
        "L1 distance {l1:.2e} at t = {LINEAR_T} on {} cells (tol {LINEAR_L1_TOL:.0e})",
        grid.cells()
    );
    Ok(CheckReport::finish("pde-linear-oracle", pass, detail, started))
}

fn weak_panel_worst(n_pde: u64) -> Result<f64> {
    let tests = [
        TestFunction::polynomial_time_bump(-0.6, 0.5, vec![1.0])?,
        TestFunction::polynomial_time_bump(0.0, 0.7, vec![1.0, -0.4])?,
        TestFunction::polynomial_time_bump(0.5, 0.45, vec![0.8, 0.5])?,
        TestFunction::polynomial_time_bump(-0.2, 0.6, vec![1.0, 0.2, -0.3])?,
        TestFunction::polynomial_time_bump(0.3, 0.8, vec![0.5, 1.0])?,
    ];
    let grid = GridSpec::window(n_pde, 4.0)?;
    let params = PdeParams::new(1.0, 2, 0.5, 0.5)?;
    let solver = Solver::new(grid, params)?;
    let lump = TestFunction::bump(0.0, 0.7)?;
    let peak = lump.profile(0.0);
    let g0 = grid.sample(|u| 0.5 + 0.3 * lump.profile(u) / peak);
    let times: Vec<f64> = (0..=32).map(|k| k as f64 * 0.1 / 32.0).collect();
    let fields = solver.integrate(&g0, &times)?;
    let mut worst = 0.0f64;
    for g in &tests {
        for k in [4usize, 8, 16, 24, 32] {
            let t = 0.1 * k as f64 / 32.0;
            worst = worst.max(weak_residual(&fields, &g0, g, t)?.value.abs());
        }
    }
    Ok(worst)
}

/// Evaluates the weak-formulation functional of the quadratic-pressure
/// solver over a 5x5 panel of space-time test functions on two grids: the
/// worst residual must sit under the absolute budget and shrink by at least
/// the pinned factor under refinement.
pub fn weak_residual_panel() -> Result<CheckReport> {
    let started = Instant::now();
    let coarse = weak_panel_worst(WEAK_N_PDES[0])?;
    let fine = weak_panel_worst(WEAK_N_PDES[1])?;
    let pass = coarse <= WEAK_F_TOL && fine <= WEAK_F_TOL && fine <= WEAK_REFINE_RATIO * coarse;
    let detail = format!(
        "max |F| {coarse:.3e} on {} cells, {fine:.3e} on {} cells (budget {WEAK_F_TOL:.0e}, \
         refinement ratio {:.3} vs cap {WEAK_REFINE_RATIO})",
        WEAK_N_PDES[0],
        WEAK_N_PDES[1],
        fine / coarse,
    );
    Ok(CheckReport::finish("weak-residual", pass, detail, started))
}

/// Initial macroscopic profile for a replica experiment.
#[derive(Clone, Copy, Debug)]
pub enum ProfileSpec {
    /// Constant density.
    Constant(f64),
    /// Piecewise-constant step: `left` for `u < 0`, `right` for `u >= 0`.
    Step { left: f64, right: f64 },
}

impl ProfileSpec {
    pub fn density(&self, u: f64) -> f64 {
        match *self {
            ProfileSpec::Constant(b) => b,
            ProfileSpec::Step { left, right } => {
                if u < 0.0 {
                    left
                } else {
                    right
                }
            }
        }
    }

    /// The far-field/background level the reference equation runs around.
    pub fn background(&self) -> f64 {
        match *self {
            ProfileSpec::Constant(b) => b,
            ProfileSpec::Step { left, right } => 0.5 * (left + right),
        }
    }
}

/// Parameters of the shared replica experiment behind the two trend checks
/// and the `hydro` subcommand.
#[derive(Clone, Debug)]
pub struct HydroSettings {
    pub gamma: f64,
    /// Macroscopic ring width in units of `1/n` times `n` (sites = n * window).
    pub window: u64,
    /// Comparison time.
    pub t: f64,
    /// Lattice sizes, one replica batch each.
    pub ns: Vec<u64>,
    /// Replica count per lattice size (same length as `ns`).
    pub replicas: Vec<u64>,
    pub seed: u64,
    pub initial: ProfileSpec,
    /// Pairing test functions; the deviation statistic is the worst one.
    pub panel: Vec<TestFunction>,
    /// Box scale for the staged replacement gaps.
    pub eps: f64,
    /// Weight function for the staged replacement gaps.
    pub phi: TestFunction,
    /// Grid resolution of the reference solve (cells = ref_n_pde * window).
    pub ref_n_pde: u64,
    /// Snapshot count for the time integrals (includes both endpoints).
    pub record_points: usize,
}

impl HydroSettings {
    /// The uniform snapshot grid on `[0, t]`.
    pub fn record_times(&self) -> Vec<f64> {
        (0..self.record_points)
            .map(|i| self.t * i as f64 / (self.record_points - 1) as f64)
            .collect()
    }
}

/// The pinned configuration used by the acceptance checks: step initial
/// data around one shock, unit jump exponent, replica counts sized so the
/// deviation standard errors resolve the drop between consecutive lattice
/// sizes.
pub fn default_hydro_settings() -> Result<HydroSettings> {
    Ok(HydroSettings {
        gamma: 1.0,
        window: 4,
        t: 0.1,
        ns: vec![256, 512, 1024],
        replicas: vec![24576, 16384, 16384],
        seed: 11,
        initial: ProfileSpec::Step { left: 0.8, right: 0.2 },
        panel: vec![
            TestFunction::bump(0.0, 0.4)?,
            TestFunction::bump(0.0, 0.15)?,
            TestFunction::bump(0.05, 0.15)?,
            TestFunction::bump(0.05, 0.12)?,
            TestFunction::bump(0.1, 0.15)?,
            TestFunction::bump(0.2, 0.2)?,
        ],
        eps: 0.1,
        phi: TestFunction::bump(-0.8, 0.3)?,
        ref_n_pde: 4096,
        record_points: 9,
    })
}

/// Replica statistics at one lattice size.
#[derive(Clone, Debug, Serialize)]
pub struct HydroRun {
    pub n: u64,
    pub replicas: u64,
    /// Snapshot times the deviations were measured at.
    pub times: Vec<f64>,
    /// Replica mean of the pairing deviation from the reference, indexed
    /// `[time][panel entry]`, with standard errors alongside.
    pub dev_mean: Vec<Vec<f64>>,
    pub dev_se: Vec<Vec<f64>>,
    /// Replica means of the three staged replacement gaps over `[0, t]`.
    pub stage_mean: [f64; 3],
    pub stage_se: [f64; 3],
    /// Replica mean of the unstaged replacement gap.
    pub full_mean: f64,
    pub full_se: f64,
    /// Worst per-replica defect of the staged telescoping identity.
    pub telescope_defect: f64,
    #[serde(skip)]
    pub seconds: f64,
}

/// The full experiment output: one [`HydroRun`] per lattice size plus the
/// reference pairings it was measured against, indexed `[time][panel entry]`.
#[derive(Clone, Debug)]
pub struct HydroExperiment {
    pub settings: HydroSettings,
    pub reference: Vec<Vec<f64>>,
    pub runs: Vec<HydroRun>,
}

struct ReplicaStats {
    /// Pairing deviations, time-major.
    devs: Vec<f64>,
    stages: [f64; 3],
    full: f64,
    defect: f64,
}

/// Solves the reference equation on the matching ring and returns the
/// pairing of its solution with each panel function at every record time.
pub fn reference_pairings(settings: &HydroSettings) -> Result<Vec<Vec<f64>>> {
    let grid = GridSpec::ring(settings.ref_n_pde, settings.window as f64)?;
    let params = PdeParams::new(settings.gamma, 2, settings.initial.background(), 0.5)?;
    let solver = Solver::new(grid, params)?;
    let g0 = grid.sample(|u| settings.initial.density(u));
    let fields = solver.integrate(&g0, &settings.record_times())?;
    Ok(fields
        .iter()
        .map(|field| {
            let rho = field.values();
            settings
                .panel
                .iter()
                .map(|g| {
                    grid.h()
                        * rho
                            .iter()
                            .enumerate()
                            .map(|(i, &r)| g.eval(field.time(), grid.position(i)) * r)
                            .sum::<f64>()
                })
                .collect()
        })
        .collect())
}

/// Runs the replica batches for every lattice size in `settings` and
/// aggregates the pairing deviations and staged replacement gaps.
pub fn hydro_experiment(settings: &HydroSettings) -> Result<HydroExperiment> {
    if settings.ns.len() != settings.replicas.len() || settings.ns.is_empty() {
        return Err(Error::Parameter(
            "need one replica count per lattice size".into(),
        ));
    }
    if settings.record_points < 2 {
        return Err(Error::Parameter("need at least two record points".into()));
    }
    let reference = reference_pairings(settings)?;
    let record = settings.record_times();
    let mut runs = Vec::new();
    for (&n, &replicas) in settings.ns.iter().zip(&settings.replicas) {
        let run_started = Instant::now();
        let sites = (n * settings.window) as usize;
        let marginals: Vec<f64> = (0..sites)
            .map(|x| {
                settings
                    .initial
                    .density(crate::measure::site_position(x, n, sites))
            })
            .collect();
        let mu = ProductMeasure::from_profile(marginals)?;
        let per_replica: Vec<ReplicaStats> = (0..replicas)
            .into_par_iter()
            .map(|r| -> Result<ReplicaStats> {
                let seed = replica_seed(settings.seed, r);
                let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xA5A5);
                let eta0 = mu.sample(&mut rng);
                let params = SimParams::new(
                    n,
                    settings.gamma,
                    settings.t,
                    seed,
                    settings.window,
                    record.clone(),
                )?;
                let traj = run(&eta0, &params)?;
                let mut devs = Vec::with_capacity(record.len() * settings.panel.len());
                for ((s, eta), wants) in traj.snapshots.iter().zip(&reference) {
                    for (g, &want) in settings.panel.iter().zip(wants) {
                        devs.push(pair_empirical(eta, g, *s, n) - want);
                    }
                }
                let (g1, g2, g3) =
                    intermediate_gaps(&traj, &settings.phi, settings.eps, settings.t)?;
                let (full, parts) =
                    replacement_decomposition(&traj, &settings.phi, settings.eps, settings.t)?;
                let defect = (full - parts.iter().sum::<f64>()).abs();
                Ok(ReplicaStats {
                    devs,
                    stages: [g1, g2, g3],
                    full: full.abs(),
                    defect,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let rf = replicas as f64;
        let panel_len = settings.panel.len();
        let flat_len = record.len() * panel_len;
        let mut dev_mean_flat = vec![0.0; flat_len];
        let mut stage_mean = [0.0; 3];
        let mut full_mean = 0.0;
        let mut telescope_defect = 0.0f64;
        for stats in &per_replica {
            for (acc, &v) in dev_mean_flat.iter_mut().zip(&stats.devs) {
                *acc += v;
            }
            for (acc, &v) in stage_mean.iter_mut().zip(&stats.stages) {
                *acc += v;
            }
            full_mean += stats.full;
            telescope_defect = telescope_defect.max(stats.defect);
        }
        for acc in dev_mean_flat.iter_mut() {
            *acc /= rf;
        }
        for acc in stage_mean.iter_mut() {
            *acc /= rf;
        }
        full_mean /= rf;
        let mut dev_se_flat = vec![0.0; flat_len];
        let mut stage_se = [0.0; 3];
        let mut full_se = 0.0;
        for stats in &per_replica {
            for ((acc, &v), &m) in dev_se_flat.iter_mut().zip(&stats.devs).zip(&dev_mean_flat) {
                *acc += (v - m) * (v - m);
            }
            for ((acc, &v), &m) in stage_se.iter_mut().zip(&stats.stages).zip(&stage_mean) {
                *acc += (v - m) * (v - m);
            }
            full_se += (stats.full - full_mean) * (stats.full - full_mean);
        }
        for acc in dev_se_flat.iter_mut() {
            *acc = (*acc / (rf - 1.0) / rf).sqrt();
        }
        for acc in stage_se.iter_mut() {
            *acc = (*acc / (rf - 1.0) / rf).sqrt();
        }
        full_se = (full_se / (rf - 1.0) / rf).sqrt();
        let unflatten = |flat: Vec<f64>| -> Vec<Vec<f64>> {
            flat.chunks(panel_len).map(|row| row.to_vec()).collect()
        };
        runs.push(HydroRun {
            n,
            replicas,
            times: record.clone(),
            dev_mean: unflatten(dev_mean_flat),
            dev_se: unflatten(dev_se_flat),
            stage_mean,
            stage_se,
            full_mean,
            full_se,
            telescope_defect,
            seconds: run_started.elapsed().as_secs_f64(),
        });
    }
    Ok(HydroExperiment {
        settings: settings.clone(),
        reference,
        runs,
    })
}

/// The worst-pairing deviation statistic of one run: its value, the panel
/// index achieving it, and that entry's standard error.
pub fn worst_deviation(run: &HydroRun) -> (f64, usize, f64) {
    let means = run.dev_mean.last().expect("at least one record time");
    let ses = run.dev_se.last().expect("at least one record time");
    let mut best = (0.0f64, 0usize, 0.0f64);
    for (idx, (&m, &se)) in means.iter().zip(ses).enumerate() {
        if m.abs() >= best.0 {
            best = (m.abs(), idx, se);
        }
    }
    best
}

/// Checks that the worst pairing deviation falls strictly at every lattice
/// doubling and that the 95% intervals of the first and last sizes do not
/// overlap.
pub fn hydro_trend(exp: &HydroExperiment) -> CheckReport {
    let started = Instant::now();
    let stats: Vec<(f64, usize, f64)> = exp.runs.iter().map(worst_deviation).collect();
    let decreasing = stats.windows(2).all(|w| w[1].0 < w[0].0);
    let (first, last) = (&stats[0], &stats[stats.len() - 1]);
    let separated = first.0 - 1.96 * first.2 > last.0 + 1.96 * last.2;
    let pass = decreasing && separated;
    let detail = exp
        .runs
        .iter()
        .zip(&stats)
        .map(|(run, (d, idx, se))| {
            format!(
                "n={}: D {:.3e} +/- {:.1e} (panel {idx}, {} replicas)",
                run.n,
                d,
                1.96 * se,
                run.replicas
            )
        })
        .collect::<Vec<_>>()
        .join("; ")
        + &format!(
            " | {}, 95% CIs {}",
            if decreasing { "decreasing" } else { "NOT decreasing" },
            if separated { "separated" } else { "OVERLAP" }
        );
    CheckReport::finish("hydro-trend", pass, detail, started)
}

/// Checks that each staged replacement gap falls at every lattice doubling
/// and that the stage decomposition telescopes to the full gap exactly.
pub fn replacement_trend(exp: &HydroExperiment) -> CheckReport {
    let started = Instant::now();
    let mut pass = true;
    let mut lines = Vec::new();
    for stage in 0..3 {
        let values: Vec<f64> = exp.runs.iter().map(|r| r.stage_mean[stage]).collect();
        let decreasing = values.windows(2).all(|w| w[1] < w[0]);
        pass &= decreasing;
        lines.push(format!(
            "stage {}: {} ({})",
            stage + 1,
            values
                .iter()
                .map(|v| format!("{v:.3e}"))
                .collect::<Vec<_>>()
                .join(" -> "),
            if decreasing { "decreasing" } else { "NOT decreasing" },
        ));
    }
    let worst_defect = exp
        .runs
        .iter()
        .map(|r| r.telescope_defect)
        .fold(0.0f64, f64::max);
    pass &= worst_defect <= TELESCOPE_TOL;
    lines.push(format!(
        "telescoping defect {worst_defect:.1e} (tol {TELESCOPE_TOL:.0e})"
    ));
    CheckReport::finish("replacement-trend", pass, lines.join("; "), started)
}

/// Names of all checks in report order.
pub const CHECK_NAMES: [&str; 12] = [
    "reversibility",
    "small-system-law",
    "nn-identity",
    "operator-convergence",
    "remainder-slope",
    "envelope",
    "dynkin-martingale",
    "moving-particle-paths",
    "pde-linear-oracle",
    "weak-residual",
    "hydro-trend",
    "replacement-trend",
];

/// Runs every check in order.  `mutate_tilde_c` corrupts the constraint
/// sign inside the reversibility check only, to prove the harness notices.
pub fn all_checks(mutate_tilde_c: bool) -> Result<Vec<CheckReport>> {
    let mut reports = vec![
        reversibility(mutate_tilde_c)?,
        small_system_law()?,
        nn_identity()?,
        operator_convergence()?,
        remainder_slope()?,
        envelope()?,
        dynkin_martingale()?,
        moving_particle_paths()?,
        pde_linear_oracle()?,
        weak_residual_panel()?,
    ];
    let exp = hydro_experiment(&default_hydro_settings()?)?;
    reports.push(hydro_trend(&exp));
    reports.push(replacement_trend(&exp));
    Ok(reports)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nn_identity_is_exact() {
        let report = nn_identity().unwrap();
        assert!(report.pass, "{}", report.detail);
    }

    #[test]
    fn reversibility_holds_and_the_mutation_is_caught() {
        let clean = reversibility(false).unwrap();
        assert!(clean.pass, "{}", clean.detail);
        let broken = reversibility(true).unwrap();
        assert!(!broken.pass, "{}", broken.detail);
    }

    #[test]
    fn path_audit_passes() {
        let report = moving_particle_paths().unwrap();
        assert!(report.pass, "{}", report.detail);
    }

    #[test]
    fn worst_deviation_picks_the_largest_entry() {
        let run = HydroRun {
            n: 4,
            replicas: 2,
            times: vec![0.0, 0.1],
            dev_mean: vec![vec![9e-4, 0.0, 0.0], vec![1e-4, -3e-4, 2e-4]],
            dev_se: vec![vec![1e-6, 1e-6, 1e-6], vec![1e-6, 2e-6, 3e-6]],
            stage_mean: [0.0; 3],
            stage_se: [0.0; 3],
            full_mean: 0.0,
            full_se: 0.0,
            telescope_defect: 0.0,
            seconds: 0.0,
        };
        let (d, idx, se) = worst_deviation(&run);
        assert_eq!(idx, 1);
        assert_eq!(d, 3e-4);
        assert_eq!(se, 2e-6);
    }

    #[test]
    fn profile_spec_reports_its_background() {
        let step = ProfileSpec::Step { left: 0.8, right: 0.2 };
        assert_eq!(step.background(), 0.5);
        assert_eq!(step.density(-0.3), 0.8);
        assert_eq!(step.density(0.0), 0.2);
        assert_eq!(ProfileSpec::Constant(0.4).background(), 0.4);
    }
}
