//! Long-term surface-EMG gesture recognition.
//!
//! The crate covers the whole across-day pipeline:
//!
//! - [`signal`]: band-pass design, causal filtering, windowing, MAV and MSA.
//! - [`kernel`]: a small fixed-graph backprop kernel (dilated causal conv,
//!   multi-domain batch norm, gradient reversal, Adam) and checkpoint files.
//! - [`model`]: the TCN classifier, its domain head and the two-network
//!   TADANN fusion.
//! - [`training`]: supervised training with early stopping, ADANN
//!   pre-training and the four calibration schemes.
//! - [`datasets`]: the canonical on-disk format and a synthetic multi-session
//!   generator with intensity, limb position, electrode shift and day drift.
//! - [`evaluation`]: accuracy tables, paired statistics and binned analyses.

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod datasets;
pub mod error;
pub mod evaluation;
pub mod kernel;
pub mod model;
pub mod rng;
pub mod signal;
pub mod training;

pub use error::{Error, Result};

/// Number of electrodes on the armband.
pub const NUM_CHANNELS: usize = 10;
/// Number of gesture classes (neutral included).
pub const NUM_GESTURES: usize = 11;
/// Armband sampling rate in Hz.
pub const SAMPLE_RATE_HZ: f64 = 1000.0;
