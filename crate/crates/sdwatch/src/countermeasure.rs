//! Discard sizing, key-rate adjustment, and the protocol transition that
//! follow a recognized state-detection error.
//!
//! The region of raw key between the fault onset and its recognition is
//! partially insecure. Its expected length scales linearly with the window
//! width and its spread with the square root, so the discard size is the
//! calibrated mean delay plus `k` standard deviations, every component
//! rounded up to a whole bit. After discarding, the session drops the state
//! the receiver can no longer detect and continues as 3-state BB84: the
//! basis with both detectors alive generates key, the surviving state of
//! the broken basis is kept for parameter estimation, and only the
//! transmitter changes behaviour.

use std::fmt;
use std::ops::RangeInclusive;
use std::str::FromStr;

use thiserror::Error;

use crate::keystream::{Basis, DetectorBank, DetectorId};
use crate::recognizer::RecognitionEvent;

/// Measured mean recognition delay at a 50,000-bit window in the bundled
/// calibration dataset, rounded up to a whole bit. Evaluating
/// [`RegressionModel::DEFAULT_LINEAR`] at the same window gives 14,995
/// bits; both paths are kept and callers record which one they used.
pub const CALIBRATION_MEAN_DELAY_BITS_50K: u64 = 14_993;

/// Measured recognition-delay standard deviation at a 50,000-bit window in
/// the bundled calibration dataset, rounded up to a whole bit.
pub const CALIBRATION_STD_DELAY_BITS_50K: u64 = 661;

#[derive(Debug, Error, PartialEq)]
pub enum CountermeasureError {
    #[error("window {n} too small for the {kind} model: alpha*n - beta = {value} is not positive")]
    WindowTooSmall { kind: ModelKind, n: usize, value: f64 },
    #[error("expected a {expected} model, got {got}")]
    ModelKindMismatch { expected: ModelKind, got: ModelKind },
    #[error("k_sigma must be non-negative, got {0}")]
    NegativeKSigma(f64),
    #[error("discard count {discard} exceeds raw key length {raw_len}")]
    DiscardExceedsKey { discard: u64, raw_len: u64 },
    #[error("raw key length must be positive")]
    EmptyRawKey,
    #[error("session is already in 3-state mode")]
    AlreadyTransitioned,
    #[error("session has not transitioned to 3-state mode")]
    NotTransitioned,
    #[error("both {basis}-basis detectors are dead; no key basis available")]
    KeyBasisDead { basis: Basis },
    #[error("malformed classical message: {0}")]
    MalformedMessage(String),
}

/// Functional form of a delay calibration model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    /// `alpha*n - beta`
    Linear,
    /// `sqrt(alpha*n - beta)`
    Sqrt,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelKind::Linear => write!(f, "linear"),
            ModelKind::Sqrt => write!(f, "sqrt"),
        }
    }
}

/// Calibration model for the recognition delay as a function of the window
/// width `n`: the linear kind predicts the mean delay, the sqrt kind its
/// standard deviation. `rmse` is the fit residual in bits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegressionModel {
    pub kind: ModelKind,
    pub alpha: f64,
    pub beta: f64,
    pub rmse: f64,
}

impl RegressionModel {
    /// Stock mean-delay calibration, fitted over 2,500-trial sweeps of the
    /// half-to-third mean shift. Re-fit with a fresh sweep to recalibrate.
    pub const DEFAULT_LINEAR: RegressionModel = RegressionModel {
        kind: ModelKind::Linear,
        alpha: 0.300,
        beta: 5.058,
        rmse: 9.156,
    };

    /// Stock delay-spread calibration from the same sweeps.
    pub const DEFAULT_SQRT: RegressionModel = RegressionModel {
        kind: ModelKind::Sqrt,
        alpha: 8.770,
        beta: 2332.743,
        rmse: 11.068,
    };

    pub fn linear(alpha: f64, beta: f64, rmse: f64) -> Self {
        Self {
            kind: ModelKind::Linear,
            alpha,
            beta,
            rmse,
        }
    }

    pub fn sqrt(alpha: f64, beta: f64, rmse: f64) -> Self {
        Self {
            kind: ModelKind::Sqrt,
            alpha,
            beta,
            rmse,
        }
    }

    /// Evaluate the model at window width `n`.
    pub fn predict(&self, n: usize) -> Result<f64, CountermeasureError> {
        let value = self.alpha * n as f64 - self.beta;
        if value <= 0.0 {
            return Err(CountermeasureError::WindowTooSmall {
                kind: self.kind,
                n,
                value,
            });
        }
        Ok(match self.kind {
            ModelKind::Linear => value,
            ModelKind::Sqrt => value.sqrt(),
        })
    }

    fn expect_kind(&self, expected: ModelKind) -> Result<(), CountermeasureError> {
        if self.kind != expected {
            return Err(CountermeasureError::ModelKindMismatch {
                expected,
                got: self.kind,
            });
        }
        Ok(())
    }
}

/// Expected bits between fault onset and recognition for window width `n`,
/// rounded up: `ceil(alpha*n - beta)`.
pub fn mean_recognition_bits(
    model: &RegressionModel,
    n: usize,
) -> Result<u64, CountermeasureError> {
    model.expect_kind(ModelKind::Linear)?;
    Ok(model.predict(n)?.ceil() as u64)
}

/// Recognition-delay standard deviation for window width `n`, rounded up:
/// `ceil(sqrt(alpha*n - beta))`.
pub fn std_recognition_bits(
    model: &RegressionModel,
    n: usize,
) -> Result<u64, CountermeasureError> {
    model.expect_kind(ModelKind::Sqrt)?;
    Ok(model.predict(n)?.ceil() as u64)
}

/// Bits to discard after recognition: mean delay plus `k_sigma` standard
/// deviations, each component rounded up before summing.
pub fn discard_count(
    n: usize,
    k_sigma: f64,
    linear: &RegressionModel,
    sqrt: &RegressionModel,
) -> Result<u64, CountermeasureError> {
    let mean = mean_recognition_bits(linear, n)?;
    let std = std_recognition_bits(sqrt, n)?;
    Ok(discard_count_from_components(mean, std, k_sigma)?)
}

/// Same arithmetic from already-rounded components, for callers holding
/// measured values rather than models.
pub fn discard_count_from_components(
    mean_bits: u64,
    std_bits: u64,
    k_sigma: f64,
) -> Result<u64, CountermeasureError> {
    if !(k_sigma >= 0.0) {
        return Err(CountermeasureError::NegativeKSigma(k_sigma));
    }
    Ok(mean_bits + (k_sigma * std_bits as f64).ceil() as u64)
}

/// Key rate after dropping `n_d` of `l_r` raw bits:
/// `R' = ((l_r - n_d) / l_r) * R`.
pub fn adjusted_rate(raw_len: u64, discarded: u64, base_rate: f64) -> Result<f64, CountermeasureError> {
    if raw_len == 0 {
        return Err(CountermeasureError::EmptyRawKey);
    }
    if discarded > raw_len {
        return Err(CountermeasureError::DiscardExceedsKey {
            discard: discarded,
            raw_len,
        });
    }
    Ok((raw_len - discarded) as f64 / raw_len as f64 * base_rate)
}

/// Discard size, confidence margin, and the state being dropped, resolved
/// against a concrete raw-key length.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CountermeasurePlan {
    pub discard_count: u64,
    pub k_sigma: f64,
    pub missing_state: DetectorId,
    /// `(l_r - n_d) / l_r` for the raw key length the plan was sized against.
    pub adjusted_rate_factor: f64,
}

impl CountermeasurePlan {
    pub fn from_models(
        window_n: usize,
        k_sigma: f64,
        missing_state: DetectorId,
        linear: &RegressionModel,
        sqrt: &RegressionModel,
        raw_key_length: u64,
    ) -> Result<Self, CountermeasureError> {
        let discard = discard_count(window_n, k_sigma, linear, sqrt)?;
        Self::from_discard(discard, k_sigma, missing_state, raw_key_length)
    }

    pub fn from_components(
        mean_bits: u64,
        std_bits: u64,
        k_sigma: f64,
        missing_state: DetectorId,
        raw_key_length: u64,
    ) -> Result<Self, CountermeasureError> {
        let discard = discard_count_from_components(mean_bits, std_bits, k_sigma)?;
        Self::from_discard(discard, k_sigma, missing_state, raw_key_length)
    }

    fn from_discard(
        discard: u64,
        k_sigma: f64,
        missing_state: DetectorId,
        raw_key_length: u64,
    ) -> Result<Self, CountermeasureError> {
        let factor = adjusted_rate(raw_key_length, discard, 1.0)?;
        Ok(Self {
            discard_count: discard,
            k_sigma,
            missing_state,
            adjusted_rate_factor: factor,
        })
    }
}

/// Protocol the session is currently running.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Protocol {
    Bb84,
    ThreeStateBb84 {
        /// State no longer detected by the receiver.
        missing: DetectorId,
        /// Basis with both detectors operational; generates all key bits.
        key_basis: Basis,
    },
}

/// Cleartext notification to the transmitter: drop `missing_state` and run
/// 3-state BB84 from `effective_index` onward. Carries no key material;
/// an eavesdropper learns nothing beyond the protocol in use.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClassicalMessage {
    pub missing_state: DetectorId,
    pub effective_index: u64,
}

impl fmt::Display for ClassicalMessage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "SWITCH3S state={} effective={}",
            self.missing_state, self.effective_index
        )
    }
}

impl FromStr for ClassicalMessage {
    type Err = CountermeasureError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let malformed = |m: &str| CountermeasureError::MalformedMessage(m.to_string());
        let mut parts = s.split_whitespace();
        if parts.next() != Some("SWITCH3S") {
            return Err(malformed("expected SWITCH3S tag"));
        }
        let state = parts
            .next()
            .and_then(|p| p.strip_prefix("state="))
            .ok_or_else(|| malformed("missing state= field"))?;
        let missing_state = state.parse::<DetectorId>().map_err(|e| malformed(&e))?;
        let effective = parts
            .next()
            .and_then(|p| p.strip_prefix("effective="))
            .ok_or_else(|| malformed("missing effective= field"))?;
        let effective_index = effective
            .parse::<u64>()
            .map_err(|_| malformed("effective index is not a u64"))?;
        if parts.next().is_some() {
            return Err(malformed("trailing fields"));
        }
        Ok(Self {
            missing_state,
            effective_index,
        })
    }
}

/// Protocol mode plus countermeasure bookkeeping for one QKD session.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SessionState {
    protocol: Protocol,
    raw_key_length: u64,
    discarded: u64,
}

impl SessionState {
    /// Fresh BB84 session with `raw_key_length` bits already collected.
    pub fn new_bb84(raw_key_length: u64) -> Self {
        Self {
            protocol: Protocol::Bb84,
            raw_key_length,
            discarded: 0,
        }
    }

    pub fn protocol(&self) -> Protocol {
        self.protocol
    }

    pub fn raw_key_length(&self) -> u64 {
        self.raw_key_length
    }

    pub fn discarded(&self) -> u64 {
        self.discarded
    }

    /// Record additionally collected raw key bits.
    pub fn extend_raw_key(&mut self, bits: u64) {
        self.raw_key_length += bits;
    }

    /// In 3-state mode, the surviving state of the broken basis, used for
    /// parameter estimation.
    pub fn param_estimation_state(&self) -> Option<DetectorId> {
        match self.protocol {
            Protocol::Bb84 => None,
            Protocol::ThreeStateBb84 { missing, .. } => Some(missing.partner()),
        }
    }

    /// Execute the two-part countermeasure: mark the `discard_count` bits up
    /// to and including the trigger as discarded, emit the switch message
    /// for the transmitter, and enter 3-state mode keyed on the intact
    /// basis. Returns the message and the discarded index range.
    pub fn apply_countermeasure(
        &mut self,
        event: &RecognitionEvent,
        plan: &CountermeasurePlan,
    ) -> Result<(ClassicalMessage, RangeInclusive<u64>), CountermeasureError> {
        if self.protocol != Protocol::Bb84 {
            return Err(CountermeasureError::AlreadyTransitioned);
        }
        let discard = plan.discard_count;
        if discard > event.trigger_index + 1 || discard > self.raw_key_length {
            return Err(CountermeasureError::DiscardExceedsKey {
                discard,
                raw_len: self.raw_key_length.min(event.trigger_index + 1),
            });
        }
        let range = (event.trigger_index + 1 - discard)..=event.trigger_index;
        self.raw_key_length -= discard;
        self.discarded += discard;
        self.protocol = Protocol::ThreeStateBb84 {
            missing: plan.missing_state,
            key_basis: plan.missing_state.basis().other(),
        };
        let message = ClassicalMessage {
            missing_state: plan.missing_state,
            effective_index: event.trigger_index + 1,
        };
        Ok((message, range))
    }
}

/// Ones-fraction of key-basis sifted bits after the transition:
/// `η_b1 / (η_b0 + η_b1)` for key basis `b`.
pub fn post_transition_mean(
    bank: &DetectorBank,
    session: &SessionState,
) -> Result<f64, CountermeasureError> {
    let Protocol::ThreeStateBb84 { key_basis, .. } = session.protocol else {
        return Err(CountermeasureError::NotTransitioned);
    };
    let (zero, one) = match key_basis {
        Basis::Z => (DetectorId::Z0, DetectorId::Z1),
        Basis::X => (DetectorId::X0, DetectorId::X1),
    };
    let total = bank.efficiency(zero) + bank.efficiency(one);
    if total == 0.0 {
        return Err(CountermeasureError::KeyBasisDead { basis: key_basis });
    }
    Ok(bank.efficiency(one) / total)
}
