//! Constructive exchange paths: moving a particle across a long bond through
//! an intermediate site with hops of bounded length, and the
//! relocate-exchange-restore scheme that first drags two particles next to
//! the bond to unlock it.
//!
//! The long-bond path for `{x, x+r}` picks an intermediate site `z1` strictly
//! between the endpoints, parks the two particles guaranteed at `x-1`, `x-2`
//! next to `z1` (steps 1-2), performs the two principal hops `x -> z1 -> x+r`
//! (steps 3-4), and parks the auxiliaries back (steps 5-6).  Every kept step
//! has `tilde_c >= 1` at the moment it is applied, and all hop lengths stay
//! below twice the midpoint scale `m ~ r/2`.

use crate::error::{Error, Result};
use crate::lattice::{tilde_c, xi, Configuration};

/// A finite sequence of exchanges with a declared target bond and the
/// occupancy pattern under which the sequence realizes that exchange.
#[derive(Clone, Debug)]
pub struct ExchangePath {
    steps: Vec<(i64, i64)>,
    required_support: String,
    target: (i64, i64),
}

/// Result of driving a configuration through a path.
#[derive(Clone, Debug)]
pub struct PathOutcome {
    pub configuration: Configuration,
    /// Minimum constraint value over applied steps (4, the maximum, for an
    /// empty path).
    pub min_tilde_c: u8,
    /// Whether every step exchanged unequal occupancies (`ξ = 1`).
    pub all_exchanges_active: bool,
}

impl ExchangePath {
    fn new(steps: Vec<(i64, i64)>, required_support: String, target: (i64, i64)) -> Self {
        Self {
            steps,
            required_support,
            target,
        }
    }

    pub fn steps(&self) -> &[(i64, i64)] {
        &self.steps
    }

    /// The exchange this path realizes on configurations matching
    /// [`ExchangePath::required_support`].
    pub fn target(&self) -> (i64, i64) {
        self.target
    }

    pub fn required_support(&self) -> &str {
        &self.required_support
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Longest exchange distance used by any step.
    pub fn max_jump(&self) -> i64 {
        self.steps
            .iter()
            .map(|&(a, b)| (b - a).abs())
            .max()
            .unwrap_or(0)
    }

    /// Number of nearest-neighbor steps.
    pub fn nn_step_count(&self) -> usize {
        self.steps
            .iter()
            .filter(|&&(a, b)| (b - a).abs() == 1)
            .count()
    }

    /// Applies the steps in order, failing with a path error if any step
    /// finds `tilde_c = 0` at its application time.
    pub fn apply_checked(&self, eta: &Configuration) -> Result<PathOutcome> {
        let mut current = eta.clone();
        let mut min_tc = 4u8;
        let mut all_active = true;
        for (k, &(a, b)) in self.steps.iter().enumerate() {
            let tc = tilde_c(&current, a, b)?;
            if tc == 0 {
                return Err(Error::PathInvalid(format!(
                    "step {k} ({a}, {b}) has no occupied neighbor"
                )));
            }
            min_tc = min_tc.min(tc);
            if xi(&current, a, b)? == 0 {
                all_active = false;
            }
            current.swap_sites(a, b)?;
        }
        Ok(PathOutcome {
            configuration: current,
            min_tilde_c: min_tc,
            all_exchanges_active: all_active,
        })
    }

    /// JSON array of `[a, b]` bond pairs, for external audit.
    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.steps).expect("bond list serializes")
    }
}

/// Midpoint scale of a bond of length `r`: `r/2` for even `r`, `(r+1)/2`
/// for odd.
fn midpoint_scale(r: i64) -> i64 {
    if r % 2 == 0 {
        r / 2
    } else {
        (r + 1) / 2
    }
}

fn check_positive_r(r: i64) -> Result<i64> {
    if r < 1 {
        return Err(Error::Domain(format!(
            "bond length {r} must be positive (negative bonds mirror)"
        )));
    }
    Ok(midpoint_scale(r))
}

/// The intermediate-site triples `(z0, z1, z2)` for the bond `{x, x+r}`,
/// one for each `j = 1..=m`: `z0 = x`, `z2 = x+r`, and
/// `z1 = x+m+j` (`r = 2m`) or `z1 = x+m-1+j` (`r = 2m-1`).
///
/// For each `j` the two hop lengths are `z1-z0` and `z2-z1`; over all `j`
/// the nonzero lengths are pairwise distinct and bounded by `2m` (the
/// `j = m` second hop has length zero and is treated as absent).
pub fn midpoint_sites(x: i64, r: i64) -> Result<Vec<(i64, i64, i64)>> {
    let m = check_positive_r(r)?;
    let base = if r % 2 == 0 { x + m } else { x + m - 1 };
    Ok((1..=m).map(|j| (x, base + j, x + r)).collect())
}

/// Which principal hop fires first.
///
/// When the intermediate site looks like the far endpoint
/// (`η(z1) = η(x+r)`), the mass at `x` moves out first (`(z0, z1)` then
/// `(z1, z2)`); when it looks like the near endpoint (`η(z1) = η(x)`), the
/// far exchange must fire first to make room.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HopOrder {
    NearFirst,
    FarFirst,
}

/// Builds the step list for given `(x, r, j)` and hop order, applying the
/// structural skips that do not depend on occupancies:
///
/// * the second principal hop is absent when `z1 = z2` (`j = m`);
/// * an auxiliary exchange is dropped when its parking site collides with a
///   principal site or an auxiliary source (`r <= 3` edge cases), where the
///   out-and-back cancellation would otherwise break.
fn assemble(x: i64, r: i64, j: i64, order: HopOrder) -> Result<Vec<(i64, i64)>> {
    let m = check_positive_r(r)?;
    if !(1..=m).contains(&j) {
        return Err(Error::Parameter(format!(
            "intermediate index {j} outside 1..={m} for bond length {r}"
        )));
    }
    let z0 = x;
    let z1 = if r % 2 == 0 { x + m + j } else { x + m - 1 + j };
    let z2 = x + r;
    let forbidden = [z0, z2, x - 1, x - 2];
    let aux: Vec<(i64, i64)> = (1..=2)
        .filter(|k| !forbidden.contains(&(z1 - k)))
        .map(|k| (x - k, z1 - k))
        .collect();
    let mut principal = Vec::with_capacity(2);
    match order {
        HopOrder::NearFirst => {
            principal.push((z0, z1));
            if z1 != z2 {
                principal.push((z1, z2));
            }
        }
        HopOrder::FarFirst => {
            if z1 != z2 {
                principal.push((z1, z2));
            }
            principal.push((z0, z1));
        }
    }
    let mut steps = aux.clone();
    steps.extend(principal);
    steps.extend(aux);
    Ok(steps)
}

/// The canonical path exchanging `{x, x+r}` through the `j`-th intermediate
/// site, as drawn for the pattern `η(x) = 1`, `η(z1) = 0`, `η(x+r) = 0`
/// (mass flows `x -> z1 -> x+r`).  Auxiliary steps that happen to exchange
/// equal occupancies are harmless no-ops: the out-and-back structure still
/// cancels them, so the composite is the target exchange for every
/// configuration with `η(x-2) = η(x-1) = 1` and that endpoint pattern.
pub fn mpl_path(x: i64, r: i64, j: i64) -> Result<ExchangePath> {
    let steps = assemble(x, r, j, HopOrder::NearFirst)?;
    Ok(ExchangePath::new(
        steps,
        format!("η({})=η({})=1, η({x})=1, η({})=0", x - 2, x - 1, x + r),
        (x, x + r),
    ))
}

/// The path exchanging `{x, x+r}` tailored to a concrete configuration:
/// hop order chosen from the occupancies, auxiliary no-ops dropped, and the
/// empty path returned when the endpoints already agree.  Every kept step
/// exchanges unequal occupancies and has `tilde_c >= 1` when applied.
pub fn mpl_path_for(eta: &Configuration, x: i64, r: i64, j: i64) -> Result<ExchangePath> {
    check_positive_r(r)?;
    if eta.get(x - 2) != 1 || eta.get(x - 1) != 1 {
        return Err(Error::PathInvalid(format!(
            "sites {} and {} must both be occupied",
            x - 2,
            x - 1
        )));
    }
    let support = format!("η({})=η({})=1", x - 2, x - 1);
    if eta.get(x) == eta.get(x + r) {
        return Ok(ExchangePath::new(Vec::new(), support, (x, x + r)));
    }
    let m = midpoint_scale(r);
    let z1 = if r % 2 == 0 { x + m + j } else { x + m - 1 + j };
    let order = if eta.get(z1) == eta.get(x + r) {
        HopOrder::NearFirst
    } else {
        HopOrder::FarFirst
    };
    let steps = assemble(x, r, j, order)?
        .into_iter()
        .filter(|&(a, b)| eta.get(a) != eta.get(b) || ![x - 1, x - 2].contains(&a))
        .collect::<Vec<_>>();
    // the filter above only drops auxiliary no-ops: parking sites already
    // holding a particle (their occupancies are untouched by other steps,
    // so the build-time comparison is also the application-time one)
    Ok(ExchangePath::new(steps, support, (x, x + r)))
}

/// Maximum multiplicity of an undirected bond in the union, over
/// `j = 1..=m`, of the distinct bonds used by the paths starting at one
/// site, maximized over starting sites in `x_range`.
///
/// Shifted starting sites reuse translated copies of the same bonds by
/// construction, so the across-start union is not the meaningful count; per
/// start, the hop-length separation makes every bond appear exactly once.
/// The contract is `<= 2`.
pub fn bond_multiplicity(x_range: std::ops::Range<i64>, r: i64) -> Result<u32> {
    let m = check_positive_r(r)?;
    let mut worst = 0u32;
    for x in x_range {
        let mut counts = std::collections::HashMap::new();
        for j in 1..=m {
            let steps = assemble(x, r, j, HopOrder::NearFirst)?;
            let mut seen = Vec::new();
            for &(a, b) in &steps {
                let bond = (a.min(b), a.max(b));
                if !seen.contains(&bond) {
                    seen.push(bond);
                    *counts.entry(bond).or_insert(0u32) += 1;
                }
            }
        }
        worst = worst.max(counts.values().copied().max().unwrap_or(0));
    }
    Ok(worst)
}

/// The relocate-exchange-restore path for the bond `{x+1, x+1+r}`: with at
/// least two particles in the block `{x-ell, ..., x-1}`, drag the two
/// nearest ones to `x` and `x-1` by nearest-neighbor steps (at most `2 ell`
/// of them), run the long-bond path for `{x+1, x+1+r}` with `j = 1`, then
/// retrace the nearest-neighbor steps.  Nearest-neighbor exchanges moving a
/// particle always carry `tilde_c >= 1` (the moving particle neighbors its
/// own bond), so the prefix and suffix are never blocked.
pub fn relocation_path(eta: &Configuration, x: i64, r: i64, ell: i64) -> Result<ExchangePath> {
    check_positive_r(r)?;
    if ell < 1 {
        return Err(Error::Parameter(format!(
            "block length {ell} must be at least 1"
        )));
    }
    let in_block = (1..=ell).filter(|&k| eta.get(x - k) == 1).count();
    if in_block < 2 {
        return Err(Error::PathInvalid(format!(
            "need two particles in {{{}..{}}}, found {in_block}",
            x - ell,
            x - 1
        )));
    }
    let mut work = eta.clone();
    let mut prefix: Vec<(i64, i64)> = Vec::new();
    for target in [x, x - 1] {
        if work.get(target) == 1 {
            continue;
        }
        let mut s = target - 1;
        while work.get(s) == 0 {
            s -= 1;
            debug_assert!(s >= x - ell, "block particle must exist below {target}");
        }
        while s < target {
            prefix.push((s, s + 1));
            work.swap_sites(s, s + 1)?;
            s += 1;
        }
    }
    let inner = mpl_path_for(&work, x + 1, r, 1)?;
    let mut steps = prefix.clone();
    steps.extend_from_slice(inner.steps());
    steps.extend(prefix.iter().rev().copied());
    Ok(ExchangePath::new(
        steps,
        format!("two or more particles in {{{}..{}}}", x - ell, x - 1),
        (x + 1, x + 1 + r),
    ))
}
