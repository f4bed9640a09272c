//! Discrete stochastic-calculus workbench on finite filtered scenario trees.
//!
//! Processes on a uniform grid over [0, 1] are driven by a binary Wiener
//! approximation (±√dt per step) and/or Bernoulli jump marks with
//! compensated increments. The crate provides:
//!
//! - [`space`]: scenario trees, exact conditional expectation, path sampling
//! - [`process`]: process containers, the L_p / N_p / H_p / DH_p / L_p(Π)
//!   norms and the duality pairings
//! - [`integrate`]: the forward integration operators L, J, P and their
//!   matrix assembly
//! - [`kernel`]: Clark-type kernel extraction, martingale representation,
//!   kernel-driven integrals and image projections
//! - [`adjoint`]: closed-form conjugates L*, J*, P*, the Gram-transpose
//!   oracle, and the θ decomposition
//! - [`verify`]: inequality and identity check suites with reports
//! - [`mc`]: tree-free Monte Carlo estimators for grids too large for
//!   exact enumeration
//!
//! All randomness is ChaCha8 seeded; every result except report timestamps
//! is bit-for-bit deterministic for a fixed seed.

pub mod adjoint;
pub mod error;
pub mod integrate;
pub mod kernel;
pub mod mc;
pub mod process;
pub mod space;
pub mod verify;

pub use error::{Error, Result};
pub use space::{MarkSet, Model, ScenarioTree};
