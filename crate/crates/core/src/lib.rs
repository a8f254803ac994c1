//! Current-carrying stationary states on one-dimensional quantum lattices.
//!
//! The crate is organised bottom-up:
//!
//! * [`algebra`]: finitely supported operators as dense matrices, with
//!   embedding, products, commutators, norms and lattice translation.
//! * [`models`]: nearest-neighbour bond/charge pairs, the derived charge and
//!   energy currents, region Hamiltonians and charges, and the model file parser.
//! * [`dynamics`]: exact diagonalization on finite rings: Heisenberg evolution,
//!   stationary states, expectations and two-time correlators.
//! * [`freefermion`]: quasi-free states on large rings (boosted Fermi seas) and
//!   two-time Wick contraction.
//! * [`bounds`]: the explicit Lieb-Robinson bound and the sum-rule envelope,
//!   together with measured commutator norms.
//! * [`sumrule`]: the charge/energy sum rule, its overlap decomposition, the
//!   correlation grid, the spectral density and its smeared sum rule.
//! * [`identities`]: the operator-identity suite used by the CLI `verify`
//!   command and the acceptance tests.
//!
//! Units: ħ = 1 and energies are measured in units of the hopping/coupling
//! scale, so times are in inverse coupling units.

pub mod algebra;
pub mod bounds;
pub mod dynamics;
mod error;
pub mod exec;
pub mod freefermion;
pub mod identities;
pub mod linalg;
pub mod models;
pub mod sumrule;

pub use error::{Error, Result};
pub use exec::Exec;
pub use num_complex::Complex64;
