//! Spin-based sensing of magnetic noise with adaptive Bayesian estimation.
//!
//! A single spin probes the Ornstein-Uhlenbeck magnetic noise around it:
//! the noise dephases the spin, the dephasing time encodes the noise
//! parameters, and a sequence of binary measurements recovers it. This
//! crate simulates that pipeline end to end:
//!
//! - [`noise_model`] — the noise process and its exact dephasing law,
//! - [`spin_dynamics`] — probe evolution, measurement statistics, and
//!   seeded per-trial randomness,
//! - [`fisher_info`] — quantum and classical Fisher information, and the
//!   optimal evolution time they imply,
//! - [`bayes_estimation`] — grid posteriors and point estimators,
//! - [`sensing_schemes`] — repeated, adaptive, and least-squares
//!   measurement strategies,
//! - [`sim_harness`] — ensemble benchmarks against the Cramér-Rao bound
//!   and reproducible dataset generation,
//! - [`numeric`] — the small numerics toolbox the rest shares.
//!
//! # Quick start
//!
//! Simulate an adaptive sensing run against a system whose true
//! dephasing time is 1:
//!
//! ```
//! use noisescope::sensing_schemes::{
//!     run_adaptive, AdaptiveVariant, PriorSpec, RecordMode, Scheme, SchemeConfig,
//! };
//! use noisescope::spin_dynamics::{trial_rng, Protocol};
//!
//! let cfg = SchemeConfig {
//!     scheme: Scheme::AdaptiveCfi,
//!     protocol: Protocol::SpinEcho,
//!     prior: PriorSpec::default_tphi(),
//!     n_max: 200,
//! };
//! let mut rng = trial_rng(7, 0);
//! let record =
//!     run_adaptive(&cfg, AdaptiveVariant::Cfi, 1.0, &mut rng, RecordMode::Checkpoints)?;
//! let (_, estimate) = record.recorded_estimates().last().unwrap();
//! assert!((estimate.point - 1.0).abs() < 0.5);
//! # Ok::<(), noisescope::Error>(())
//! ```
//!
//! The companion guide in `book/` walks through each module with worked
//! examples; its code blocks compile and run as part of this crate's
//! test suite (see the `book_snippets` doctests).

pub mod bayes_estimation;
pub mod error;
pub mod fisher_info;
pub mod noise_model;
pub mod numeric;
pub mod sensing_schemes;
pub mod sim_harness;
pub mod spin_dynamics;

pub use error::{Error, Result};

/// Runs every Rust code block in the mdbook guide as a doctest, so the
/// book cannot drift out of sync with the crate.
#[cfg(doctest)]
mod book_snippets {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/noise-model.md")]
    mod noise_model {}
    #[doc = include_str!("../../../book/src/fisher-information.md")]
    mod fisher_information {}
    #[doc = include_str!("../../../book/src/bayesian-estimation.md")]
    mod bayesian_estimation {}
    #[doc = include_str!("../../../book/src/sensing-schemes.md")]
    mod sensing_schemes {}
    #[doc = include_str!("../../../book/src/simulations.md")]
    mod simulations {}
}
