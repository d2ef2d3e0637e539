//! Microscopic configurations on a periodic ring, the exchange rates of the
//! kinetically constrained long-jump dynamics, and Bernoulli product measures.
//!
//! The infinite-lattice process is simulated on a ring of `N` sites; all site
//! indices wrap modulo `N`.  Rates factor as `c_{x,y} = tilde_c_{x,y} ξ_{x,y}`
//! where `ξ` asks that exactly one of the endpoints is occupied and `tilde_c`
//! counts occupied neighbors of the endpoints.  When `|x-y| <= 2` some of the
//! four neighbor sites coincide with the endpoints themselves; the sum is
//! evaluated literally in that case, which is exactly what makes every
//! nearest-neighbor exchange with an adjacent particle admissible.

mod small;

pub use small::{dirichlet_form, nu_b_weights, SmallSystem};

use crate::error::{Error, Result};
use crate::kernel::JumpKernel;
use rand::Rng;

/// Occupancy configuration on a periodic ring.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Configuration {
    size: usize,
    occupancy: Vec<u8>,
    particle_count: usize,
}

impl Configuration {
    /// Empty ring of `size` sites.
    pub fn empty(size: usize) -> Result<Self> {
        if size < 3 {
            return Err(Error::Parameter(format!(
                "ring needs at least 3 sites, got {size}"
            )));
        }
        Ok(Self {
            size,
            occupancy: vec![0; size],
            particle_count: 0,
        })
    }

    /// Ring initialized from explicit 0/1 values.
    pub fn from_bits(bits: &[u8]) -> Result<Self> {
        let mut eta = Self::empty(bits.len())?;
        for (x, &b) in bits.iter().enumerate() {
            if b > 1 {
                return Err(Error::Domain(format!("occupancy {b} at site {x}")));
            }
            eta.occupancy[x] = b;
        }
        eta.particle_count = eta.occupancy.iter().map(|&b| b as usize).sum();
        Ok(eta)
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn particle_count(&self) -> usize {
        self.particle_count
    }

    /// Canonical ring index of a (possibly negative) site label.
    pub fn wrap(&self, x: i64) -> usize {
        x.rem_euclid(self.size as i64) as usize
    }

    /// Occupancy at site `x` (wrapped).
    pub fn get(&self, x: i64) -> u8 {
        self.occupancy[self.wrap(x)]
    }

    /// Sets site `x` (wrapped), keeping the particle count cached.
    pub fn set(&mut self, x: i64, value: u8) {
        debug_assert!(value <= 1);
        let i = self.wrap(x);
        self.particle_count = self.particle_count + value as usize - self.occupancy[i] as usize;
        self.occupancy[i] = value;
    }

    pub fn bits(&self) -> &[u8] {
        &self.occupancy
    }

    pub fn occupied_sites(&self) -> impl Iterator<Item = usize> + '_ {
        self.occupancy
            .iter()
            .enumerate()
            .filter(|(_, &b)| b == 1)
            .map(|(x, _)| x)
    }

    /// Swaps the occupancies at `x` and `y` in place.
    pub fn swap_sites(&mut self, x: i64, y: i64) -> Result<()> {
        let (i, j) = (self.wrap(x), self.wrap(y));
        if i == j {
            return Err(Error::Domain(format!("exchange needs two sites, got {i}")));
        }
        self.occupancy.swap(i, j);
        Ok(())
    }

    /// The exchanged configuration `η^{x,y}`.
    pub fn exchange(&self, x: i64, y: i64) -> Result<Self> {
        let mut eta = self.clone();
        eta.swap_sites(x, y)?;
        Ok(eta)
    }

    /// Serializes as a packed bitstring with header. Byte layout, all
    /// little-endian:
    ///
    /// ```text
    /// offset  0: u32  number of sites N (the length prefix)
    /// offset  4: u64  seed
    /// offset 12: f64  time
    /// offset 20: ceil(N/8) bytes; site x lives in byte x>>3, bit x&7
    /// ```
    pub fn to_snapshot(&self, seed: u64, time: f64) -> Vec<u8> {
        let mut out = Vec::with_capacity(20 + self.size.div_ceil(8));
        out.extend_from_slice(&(self.size as u32).to_le_bytes());
        out.extend_from_slice(&seed.to_le_bytes());
        out.extend_from_slice(&time.to_le_bytes());
        out.extend_from_slice(&self.packed_bits());
        out
    }

    /// The bit payload of [`Configuration::to_snapshot`] on its own:
    /// site `x` in byte `x>>3`, bit `x&7`.
    pub fn packed_bits(&self) -> Vec<u8> {
        let mut packed = vec![0u8; self.size.div_ceil(8)];
        for (x, &b) in self.occupancy.iter().enumerate() {
            packed[x >> 3] |= b << (x & 7);
        }
        packed
    }

    /// Parses a snapshot produced by [`Configuration::to_snapshot`].
    pub fn from_snapshot(bytes: &[u8]) -> Result<(Self, SnapshotHeader)> {
        if bytes.len() < 20 {
            return Err(Error::Domain(format!(
                "snapshot header needs 20 bytes, got {}",
                bytes.len()
            )));
        }
        let sites = u32::from_le_bytes(bytes[0..4].try_into().unwrap());
        let seed = u64::from_le_bytes(bytes[4..12].try_into().unwrap());
        let time = f64::from_le_bytes(bytes[12..20].try_into().unwrap());
        let n_bytes = (sites as usize).div_ceil(8);
        if bytes.len() != 20 + n_bytes {
            return Err(Error::Domain(format!(
                "snapshot of {sites} sites needs {} bytes, got {}",
                20 + n_bytes,
                bytes.len()
            )));
        }
        let mut eta = Self::empty(sites as usize)?;
        let mut count = 0usize;
        for x in 0..sites as usize {
            let b = (bytes[20 + (x >> 3)] >> (x & 7)) & 1;
            eta.occupancy[x] = b;
            count += b as usize;
        }
        eta.particle_count = count;
        Ok((eta, SnapshotHeader { sites, seed, time }))
    }
}

/// Header carried by serialized configuration snapshots.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SnapshotHeader {
    pub sites: u32,
    pub seed: u64,
    pub time: f64,
}

fn distinct_sites(eta: &Configuration, x: i64, y: i64) -> Result<()> {
    if eta.wrap(x) == eta.wrap(y) {
        return Err(Error::Domain(format!(
            "sites {x} and {y} coincide on a ring of {}",
            eta.size()
        )));
    }
    Ok(())
}

/// `ξ_{x,y}(η) = η(x)[1-η(y)] + η(y)[1-η(x)]`: 1 iff exactly one endpoint
/// is occupied.
pub fn xi(eta: &Configuration, x: i64, y: i64) -> Result<u8> {
    distinct_sites(eta, x, y)?;
    let (a, b) = (eta.get(x), eta.get(y));
    Ok(a * (1 - b) + b * (1 - a))
}

/// `tilde_c_{x,y}(η) = η(x-1) + η(x+1) + η(y-1) + η(y+1)`, summed literally
/// even when neighbor sites coincide with `x` or `y` themselves.
pub fn tilde_c(eta: &Configuration, x: i64, y: i64) -> Result<u8> {
    distinct_sites(eta, x, y)?;
    Ok(eta.get(x - 1) + eta.get(x + 1) + eta.get(y - 1) + eta.get(y + 1))
}

/// Unordered-pair exchange rate `p(y-x) c_{x,y}(η) / 2`; the generator's
/// double sum visits each pair twice under a `1/4` prefactor.  The
/// displacement is taken literally, so ring callers pass `y = x + z` with
/// `z` already reduced to the minimal image.
pub fn rate_c(eta: &Configuration, x: i64, y: i64, kernel: &JumpKernel) -> Result<f64> {
    let c = (tilde_c(eta, x, y)? * xi(eta, x, y)?) as f64;
    Ok(kernel.prob(y - x) * c / 2.0)
}

/// Nearest-neighbor rate identity: the full rate `c_{x,x+1}` always equals
/// `ξ_{x,x+1}(η) [η(x-1) + η(x+2) + 1]`, so an exchange with an adjacent
/// particle is never blocked.
pub fn nn_rate_identity(eta: &Configuration, x: i64) -> (f64, f64) {
    let lhs = (tilde_c(eta, x, x + 1).unwrap() * xi(eta, x, x + 1).unwrap()) as f64;
    let rhs = (xi(eta, x, x + 1).unwrap() * (eta.get(x - 1) + eta.get(x + 2) + 1)) as f64;
    (lhs, rhs)
}

/// Bernoulli product measure with per-site marginals.
#[derive(Clone, Debug)]
pub struct ProductMeasure {
    profile: Vec<f64>,
}

impl ProductMeasure {
    /// Constant-marginal measure `ν_b` on `size` sites.
    pub fn constant(b: f64, size: usize) -> Result<Self> {
        Self::from_profile(vec![b; size])
    }

    /// Site-dependent marginals (profile-associated initial measure).
    pub fn from_profile(profile: Vec<f64>) -> Result<Self> {
        if profile.len() < 3 {
            return Err(Error::Parameter(format!(
                "measure needs at least 3 sites, got {}",
                profile.len()
            )));
        }
        for (x, &p) in profile.iter().enumerate() {
            if !(0.0..=1.0).contains(&p) || !p.is_finite() {
                return Err(Error::Domain(format!("marginal {p} at site {x}")));
            }
        }
        Ok(Self { profile })
    }

    pub fn len(&self) -> usize {
        self.profile.len()
    }

    pub fn is_empty(&self) -> bool {
        self.profile.is_empty()
    }

    pub fn marginal(&self, x: usize) -> f64 {
        self.profile[x]
    }

    /// Probability weight of a full configuration under the product measure.
    pub fn prob_of(&self, eta: &Configuration) -> f64 {
        assert_eq!(eta.size(), self.profile.len());
        self.profile
            .iter()
            .zip(eta.bits())
            .map(|(&p, &b)| if b == 1 { p } else { 1.0 - p })
            .product()
    }

    /// Independent Bernoulli draw per site.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Configuration {
        let bits: Vec<u8> = self
            .profile
            .iter()
            .map(|&p| u8::from(rng.gen::<f64>() < p))
            .collect();
        Configuration::from_bits(&bits).expect("profile length validated at construction")
    }
}
