//! Dynamic programming for non-Markovian stochastic control problems driven by
//! Brownian motion, discretized on the random skeleton of hitting times at
//! which each Brownian coordinate moves by `±ε_k`.
//!
//! The crate is organised bottom-up:
//!
//! * [`distributions`]: exit time of Brownian motion from `[-1, 1]`, the
//!   truncated-normal surrogate for non-exiting coordinates, and the one-step
//!   transition kernel of the skeleton.
//! * [`skeleton`]: simulation of skeleton paths and their mesh diagnostics.
//! * [`structures`]: controlled state recursions driven by a skeleton
//!   (path-dependent Euler scheme, fractional Brownian drivers, rough volatility).
//! * [`dp`]: regression Monte Carlo backward induction over histories and
//!   extraction of near-optimal grid policies.
//! * [`hedging`]: the two-asset exchange-option quadratic hedging benchmark.
//! * [`io`]: the frozen `χ_d` table, binary skeleton dumps, CSV preambles.

pub mod distributions;
pub mod dp;
pub mod error;
pub mod hedging;
pub mod io;
pub mod quadrature;
pub mod rng;
pub mod skeleton;
pub mod stats;
pub mod structures;

pub use error::{Error, Result};
pub use stats::ValueEstimate;

/// Version string echoed into every emitted file.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
