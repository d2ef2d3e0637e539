//! Kinetically constrained exclusion process with long jumps on a
//! one-dimensional lattice, together with the nonlocal (fractional) porous
//! medium equation that describes its density profile under `n^gamma` time
//! speed-up.
//!
//! The crate is organised around the objects of that scaling picture:
//!
//! * [`kernel`] — the heavy-tailed jump law `p(z) ∝ |z|^{-gamma-1}`, smooth
//!   compactly supported test functions, the discrete nonlocal operator
//!   `K_n` and its continuum limit, the fractional Laplacian.
//! * [`lattice`] — occupancy configurations on a ring, the constrained
//!   exchange rates, Bernoulli product measures, and exact generator
//!   matrices for small systems.
//! * [`simulator`] — an exact-in-law kinetic Monte Carlo engine for the
//!   speeded-up process, with event-driven martingale diagnostics.
//! * [`paths`] — explicit sequences of allowed exchanges that realise a
//!   long-distance exchange through short jumps (used to compare Dirichlet
//!   forms and to audit the constraint structure).
//! * [`measure`] — empirical measures, box averages, relative entropy, and
//!   the staged replacement-lemma gaps.
//! * [`pde`] — a method-of-lines solver for `∂_t ρ = -(-Δ)^{γ/2} ρ^m`
//!   sharing the discrete operator with the particle system, plus weak-form
//!   residuals.
//! * [`verify`] — the executable acceptance suite tying everything
//!   together.

pub mod error;
pub mod kernel;
pub mod lattice;
pub mod measure;
pub mod paths;
pub mod pde;
pub mod quad;
pub mod simulator;
pub mod verify;

pub use error::{Error, Result};
