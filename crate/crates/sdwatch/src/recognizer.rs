//! Threshold-based recognition of a state-detection error from the sliding
//! estimate, plus the analytic predictions for when recognition occurs.
//!
//! Under nominal conditions the window mean stays inside the closed band
//! `[μ_N − t, μ_N + t]`. The recognition threshold `t` must satisfy
//! `t ≥ δ_μ`, otherwise ordinary statistical fluctuation would produce false
//! positives beyond the `(δ_μ, ε)` specification. Recognition fires on the
//! first ready estimate strictly outside the band.

use thiserror::Error;

use crate::stats::{EstimatorParams, SlidingEstimator};

#[derive(Debug, Error, PartialEq)]
pub enum RecognizerError {
    #[error("nominal mean {0} must lie strictly inside (0, 1)")]
    NominalMeanOutOfRange(f64),
    #[error("threshold t={t} below precision delta_mu={delta_mu}; false positives would exceed the confidence spec")]
    ThresholdBelowPrecision { t: f64, delta_mu: f64 },
    #[error("probability {0} outside [0, 1]")]
    ProbabilityOutOfRange(f64),
    #[error("degenerate shift: post-onset mean equals the pre-onset mean ({0})")]
    DegenerateShift(f64),
    #[error("unrecognizable shift: mean {mu1} lies inside the tolerated band [{lo}, {hi}]")]
    UnrecognizableShift { mu1: f64, lo: f64, hi: f64 },
    #[error("empty window: n0 + n1 must be positive")]
    EmptyWindow,
}

fn check_probability(p: f64) -> Result<f64, RecognizerError> {
    if !(0.0..=1.0).contains(&p) {
        return Err(RecognizerError::ProbabilityOutOfRange(p));
    }
    Ok(p)
}

/// Which side of the band the estimate left through.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Below,
    Above,
}

impl std::fmt::Display for Direction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Direction::Below => write!(f, "below"),
            Direction::Above => write!(f, "above"),
        }
    }
}

/// Outcome of checking one estimate against the band.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Nominal,
    Recognized(Direction),
}

/// Nominal mean, recognition threshold, and the estimator parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecognizerConfig {
    mu_nominal: f64,
    threshold_t: f64,
    params: EstimatorParams,
}

impl RecognizerConfig {
    pub fn new(
        mu_nominal: f64,
        threshold_t: f64,
        params: EstimatorParams,
    ) -> Result<Self, RecognizerError> {
        if !(mu_nominal > 0.0 && mu_nominal < 1.0) {
            return Err(RecognizerError::NominalMeanOutOfRange(mu_nominal));
        }
        if !(threshold_t >= params.delta_mu()) {
            return Err(RecognizerError::ThresholdBelowPrecision {
                t: threshold_t,
                delta_mu: params.delta_mu(),
            });
        }
        Ok(Self {
            mu_nominal,
            threshold_t,
            params,
        })
    }

    /// The closest admissible threshold, `t = δ_μ`.
    pub fn with_tightest_threshold(
        mu_nominal: f64,
        params: EstimatorParams,
    ) -> Result<Self, RecognizerError> {
        Self::new(mu_nominal, params.delta_mu(), params)
    }

    pub fn mu_nominal(&self) -> f64 {
        self.mu_nominal
    }

    pub fn threshold_t(&self) -> f64 {
        self.threshold_t
    }

    pub fn params(&self) -> &EstimatorParams {
        &self.params
    }

    pub fn window_n(&self) -> usize {
        self.params.window_n()
    }

    /// Closed tolerated band `[μ_N − t, μ_N + t]`.
    pub fn band(&self) -> (f64, f64) {
        (
            self.mu_nominal - self.threshold_t,
            self.mu_nominal + self.threshold_t,
        )
    }
}

/// First crossing of the recognition threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecognitionEvent {
    /// Raw-key bit index whose estimate first left the band.
    pub trigger_index: u64,
    pub estimate_at_trigger: f64,
    pub direction: Direction,
}

/// Band check for a single ready estimate. Values exactly on a band edge
/// are nominal; only a strict crossing is recognized.
pub fn check(mu_hat: f64, cfg: &RecognizerConfig) -> Status {
    debug_assert!((0.0..=1.0).contains(&mu_hat));
    let (lo, hi) = cfg.band();
    if mu_hat < lo {
        Status::Recognized(Direction::Below)
    } else if mu_hat > hi {
        Status::Recognized(Direction::Above)
    } else {
        Status::Nominal
    }
}

/// Stateful recognizer: a sliding estimator plus the band check, evaluated
/// at every bit arrival. Latches the first recognition; [`Monitor::reset`]
/// re-arms it after a countermeasure completes.
#[derive(Debug, Clone)]
pub struct Monitor {
    cfg: RecognizerConfig,
    estimator: SlidingEstimator,
    next_index: u64,
    event: Option<RecognitionEvent>,
}

impl Monitor {
    pub fn new(cfg: RecognizerConfig) -> Self {
        let estimator = SlidingEstimator::new(cfg.window_n()).expect("window_n is positive");
        Self {
            cfg,
            estimator,
            next_index: 0,
            event: None,
        }
    }

    pub fn config(&self) -> &RecognizerConfig {
        &self.cfg
    }

    /// Current window mean, if the warm-up has completed.
    pub fn mean(&self) -> Option<f64> {
        self.estimator.mean()
    }

    pub fn event(&self) -> Option<&RecognitionEvent> {
        self.event.as_ref()
    }

    /// Absorb one raw-key bit and evaluate the band. Once an event has
    /// latched, later bits keep updating the estimate but the latched event
    /// is retained and `Nominal` is reported.
    pub fn push(&mut self, bit: bool) -> Status {
        let index = self.next_index;
        self.next_index += 1;
        self.estimator.push(bit);
        if self.event.is_some() {
            return Status::Nominal;
        }
        let Some(mu_hat) = self.estimator.mean() else {
            return Status::Nominal;
        };
        match check(mu_hat, &self.cfg) {
            Status::Nominal => Status::Nominal,
            Status::Recognized(direction) => {
                let event = RecognitionEvent {
                    trigger_index: index,
                    estimate_at_trigger: mu_hat,
                    direction,
                };
                debug_assert!(index >= self.cfg.window_n() as u64 - 1);
                self.event = Some(event);
                Status::Recognized(direction)
            }
        }
    }

    /// Bits observed so far.
    pub fn bits_seen(&self) -> u64 {
        self.next_index
    }

    /// Clear the window and the latched event; indices keep counting.
    pub fn reset(&mut self) {
        self.estimator.reset();
        self.event = None;
    }
}

/// Feed a bit sequence through a fresh [`Monitor`] and return the first
/// recognition, if any.
pub fn run_recognition<I>(bits: I, cfg: &RecognizerConfig) -> Option<RecognitionEvent>
where
    I: IntoIterator<Item = bool>,
{
    let mut monitor = Monitor::new(*cfg);
    for bit in bits {
        if let Status::Recognized(_) = monitor.push(bit) {
            return monitor.event().copied();
        }
    }
    None
}

/// Expected fraction of the window occupied by post-onset bits at the first
/// threshold crossing, for a mean shift `mu0 → mu1`.
///
/// Setting the window's weighted mean equal to the crossed band edge and
/// normalising the window to 1 gives
/// `n₁ = (μ_N ± t − μ₀) / (μ₁ − μ₀)`, with the upper edge for an upward
/// shift and the lower edge for a downward shift, so the fraction is
/// positive in both directions.
pub fn expected_recognition_fraction(
    mu_nominal: f64,
    threshold_t: f64,
    mu0: f64,
    mu1: f64,
) -> Result<f64, RecognizerError> {
    check_probability(mu_nominal)?;
    check_probability(mu0)?;
    check_probability(mu1)?;
    if mu1 == mu0 {
        return Err(RecognizerError::DegenerateShift(mu0));
    }
    let lo = mu_nominal - threshold_t;
    let hi = mu_nominal + threshold_t;
    if (lo..=hi).contains(&mu1) {
        return Err(RecognizerError::UnrecognizableShift { mu1, lo, hi });
    }
    let crossed_edge = if mu1 > mu0 { hi } else { lo };
    Ok((crossed_edge - mu0) / (mu1 - mu0))
}

/// Model of the estimator while the window straddles the onset: the
/// weighted average `(μ₀·n₀ + μ₁·n₁) / (n₀ + n₁)` of the two distributions
/// by their sample counts.
pub fn weighted_mean_prediction(
    mu0: f64,
    mu1: f64,
    n0: f64,
    n1: f64,
) -> Result<f64, RecognizerError> {
    check_probability(mu0)?;
    check_probability(mu1)?;
    if !(n0 >= 0.0 && n1 >= 0.0 && n0 + n1 > 0.0) {
        return Err(RecognizerError::EmptyWindow);
    }
    Ok((mu0 * n0 + mu1 * n1) / (n0 + n1))
}
