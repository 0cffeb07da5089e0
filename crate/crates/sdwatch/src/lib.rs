//! Autonomous recognition of state-detection faults in a BB84 receiver's
//! raw key stream.
//!
//! A passive four-detector QKD receiver that silently loses one of its
//! detectors keeps producing raw key, but with a skewed 0/1 ratio and
//! correspondingly less entropy per bit. This crate simulates such streams,
//! watches them with a sliding-window estimate of the bit mean sized by the
//! Chernoff-Hoeffding bound, recognizes the skew once the estimate leaves a
//! tolerated band, and executes the recovery: discard the compromised
//! stretch of key and continue as 3-state BB84 without the lost state.
//!
//! Module map:
//! - [`keystream`] — Bernoulli and detector-model raw-key generators with
//!   scheduled faults, plus the stream dump format.
//! - [`stats`] — entropy measures, Chernoff-Hoeffding window sizing, and
//!   the sliding mean estimator.
//! - [`recognizer`] — the band check, the streaming monitor, and the
//!   analytic delay predictions.
//! - [`countermeasure`] — discard sizing, key-rate adjustment, and the
//!   BB84 → 3-state BB84 session transition.
//! - [`montecarlo`] — delay-calibration sweeps, regression fits, and
//!   discard-coverage measurement.

pub mod countermeasure;
pub mod keystream;
pub mod montecarlo;
pub mod recognizer;
pub mod stats;

pub use countermeasure::{
    adjusted_rate, discard_count, discard_count_from_components, mean_recognition_bits,
    post_transition_mean, std_recognition_bits, ClassicalMessage, CountermeasurePlan,
    Protocol, RegressionModel, SessionState,
};
pub use keystream::{
    generate, Basis, DetectorBank, DetectorId, ErrorSchedule, Fault, KeyStream, StreamConfig,
    StreamMode,
};
pub use montecarlo::{
    coverage_check, fit_linear, fit_sqrt, run_sweep, CoverageConfig, SweepConfig, SweepResult,
};
pub use recognizer::{
    check, expected_recognition_fraction, run_recognition, weighted_mean_prediction, Direction,
    Monitor, RecognitionEvent, RecognizerConfig, Status,
};
pub use stats::{
    binary_entropy, min_entropy_per_bit, skr_cap, window_size, EstimatorParams, SlidingEstimator,
};
