//! Identification of complex-stiffness (hysteretic damping) joint impedance
//! models and synthesis of fractional-order strength amplification
//! controllers.
//!
//! The crate is organized along the analysis pipeline:
//!
//! * [`model`]: impedance models M1/M2/M3 and the 1-parameter reduced model,
//!   natural frequencies, loss factor and the SEA low-pass.
//! * [`protocol`]: the nine-experiment sinusoidal perturbation protocol and
//!   a synthetic subject generator.
//! * [`sysid`]: phasor extraction and frequency-domain least squares.
//! * [`stats`]: RSS aggregation, nested-model F-tests and F quantiles.
//! * [`scaling`]: the log-log power law linking hysteretic damping to
//!   stiffness.
//! * [`fractional`]: proportional rule, fractional order selection and the
//!   lag-filter cascade realization.
//! * [`loop_analysis`]: open-loop Bode evaluation, phase margins, stiffness
//!   sweeps, marginal order search and amplification predictions.
//! * [`pipeline`]: cohort-level glue used by the CLI and the acceptance suite.

// `!(x > 0.0)` is used on purpose so NaN inputs are rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod fractional;
pub mod loop_analysis;
pub mod model;
pub mod pipeline;
pub mod protocol;
pub mod scaling;
pub mod stats;
pub mod sysid;

pub use error::{Error, Result};
pub use num_complex::Complex64;

/// Tag written into every JSON document emitted by the crate.
pub const FORMAT_VERSION: &str = "joint-impedance/1";

/// Logarithmically spaced grid from `lo` to `hi` (inclusive) with
/// `per_decade` points per decade.
pub fn log_grid(lo: f64, hi: f64, per_decade: usize) -> Vec<f64> {
    assert!(lo > 0.0 && hi > lo && per_decade > 0);
    let decades = (hi / lo).log10();
    let n = (decades * per_decade as f64).ceil() as usize;
    (0..=n)
        .map(|i| lo * 10f64.powf(decades * i as f64 / n as f64))
        .collect()
}
