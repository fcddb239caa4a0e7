//! Numerical toolkit for one-dimensional random walks in random potentials.
//!
//! The library covers the full pipeline from disordered environments to
//! spectral verdicts:
//!
//! * [`environment`] — i.i.d. environments, the associated potential
//!   landscape, diffusive rescaling and the reversible measure.
//! * [`extrema`] — h-extrema of piecewise-linear paths, saddle points,
//!   metastable labelings and the decimation algorithm that reproduces them.
//! * [`potential_theory`] — closed-form equilibrium potentials, capacities,
//!   Dirichlet Green functions and hitting-time moments for the reversible
//!   chain.
//! * [`spectral`] — Dirichlet generators, exact tridiagonal spectra,
//!   capacity-based eigenvalue predictions and structural spectrum checks.
//! * [`brownian`] — Brownian path sampling and the renewal statistics of
//!   h-extrema (slope heights, spacings, tail bounds).
//! * [`walk`] — trajectory simulation, valley localization and exponential
//!   relaxation curves via exact propagators.
//!
//! Everything is deterministic given a seed; batch computations run on a
//! rayon pool when the `parallel` feature (default) is enabled and fall back
//! to sequential iteration otherwise.

pub mod brownian;
pub mod environment;
pub mod error;
pub mod extrema;
pub mod numeric;
pub mod parallel;
pub mod potential_theory;
pub mod rng;
pub mod spectral;
pub mod stats;
pub mod walk;

pub use error::{Error, Result};

/// Library version embedded in machine-readable reports.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
