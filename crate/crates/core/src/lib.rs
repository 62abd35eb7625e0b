//! Monte Carlo laboratory for randomly biased random walks on Galton–Watson
//! trees in the boundary case `ψ(1) = ψ'(1) = 0`.
//!
//! The crate is organised bottom-up:
//!
//! - [`env`]: environment laws, boundary calibration and the lazily realised
//!   tree-with-potential.
//! - [`walk`]: the quenched nearest-neighbour walk on `T ∪ {e*}` with its
//!   local-time ledgers.
//! - [`range`]: generalized ranges `R_n(g_n, f^n)` and the limit predictions
//!   for the four example families.
//! - [`spine`]: the many-to-one (tilted) walk and its estimators.
//! - [`analytic`]: Brownian-meander tail, `ρ(c)` and `c_β`.
//! - [`oracle`]: exact ground truth on small instances.
//! - [`harness`]: seeded sweeps, persistence and slope fitting.

pub mod analytic;
pub mod env;
pub mod error;
pub mod harness;
pub mod oracle;
pub mod quad;
pub mod range;
pub mod rng;
pub mod spine;
pub mod stats;
pub mod walk;

pub use error::{Error, Result};
