//! Entropy measures, Chernoff-Hoeffding window sizing, and the sliding-window
//! mean estimator.
//!
//! The estimator treats the raw key as a stream of Bernoulli samples. For a
//! precision `δ_μ` and confidence parameter `ε`, the Chernoff-Hoeffding bound
//!
//! ```text
//! n ≥ ln(2/ε) / (2·δ_μ²)
//! ```
//!
//! gives the minimum window width `n` such that `|μ − μ̂| ≤ δ_μ` holds with
//! probability at least `1 − ε`.

use thiserror::Error;

/// Errors from the statistics layer.
#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("probability {0} outside [0, 1]")]
    ProbabilityOutOfRange(f64),
    #[error("precision delta_mu must be positive, got {0}")]
    NonPositiveDelta(f64),
    #[error("confidence epsilon must lie in (0, 1], got {0}")]
    EpsilonOutOfRange(f64),
    #[error("window width must be positive")]
    ZeroWindow,
    #[error("window {given} is below the Chernoff-Hoeffding bound {required} for delta_mu={delta_mu}, epsilon={epsilon}")]
    WindowBelowBound {
        given: usize,
        required: usize,
        delta_mu: f64,
        epsilon: f64,
    },
}

fn check_probability(p: f64) -> Result<f64, StatsError> {
    if !(0.0..=1.0).contains(&p) {
        return Err(StatsError::ProbabilityOutOfRange(p));
    }
    Ok(p)
}

/// Binary Shannon entropy `H₂(p) = −p·log₂(p) − (1−p)·log₂(1−p)` in bits,
/// with `0·log₂(0)` taken as 0.
pub fn binary_entropy(p: f64) -> Result<f64, StatsError> {
    let p = check_probability(p)?;
    let term = |x: f64| if x == 0.0 { 0.0 } else { -x * x.log2() };
    Ok(term(p) + term(1.0 - p))
}

/// Per-bit min-entropy `−log₂ max(p, 1−p)` in bits.
///
/// This is the non-smooth single-letter quantity; it bounds how much a raw
/// key with ones-fraction `p` can contribute per bit after privacy
/// amplification in the best case.
pub fn min_entropy_per_bit(p: f64) -> Result<f64, StatsError> {
    let p = check_probability(p)?;
    Ok(-p.max(1.0 - p).log2())
}

/// Best-case secret-key-rate ceiling for a raw key with ones-fraction `p`,
/// in bits per raw-key bit.
///
/// With a perfect channel and an ignorant eavesdropper the rate is capped by
/// the entropy of the raw key itself, so this is just [`binary_entropy`].
pub fn skr_cap(p: f64) -> Result<f64, StatsError> {
    binary_entropy(p)
}

/// The Chernoff-Hoeffding sample bound `ln(2/ε) / (2·δ_μ²)` before rounding.
pub(crate) fn hoeffding_sample_bound(delta_mu: f64, epsilon: f64) -> f64 {
    (2.0 / epsilon).ln() / (2.0 * delta_mu * delta_mu)
}

/// Minimum window width (in bits) so that the estimate `μ̂` over the window
/// satisfies `|μ − μ̂| ≤ delta_mu` with probability at least `1 − epsilon`.
///
/// Returns the exact ceiling of the Chernoff-Hoeffding bound, never a looser
/// round number.
pub fn window_size(delta_mu: f64, epsilon: f64) -> Result<usize, StatsError> {
    if !(delta_mu > 0.0) {
        return Err(StatsError::NonPositiveDelta(delta_mu));
    }
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(StatsError::EpsilonOutOfRange(epsilon));
    }
    Ok(hoeffding_sample_bound(delta_mu, epsilon).ceil() as usize)
}

/// Estimator parameterization: precision `δ_μ`, confidence `ε`, and the
/// window width `n` they imply.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatorParams {
    delta_mu: f64,
    epsilon: f64,
    window_n: usize,
}

impl EstimatorParams {
    /// Derive the window width from `(delta_mu, epsilon)` via [`window_size`].
    pub fn derive(delta_mu: f64, epsilon: f64) -> Result<Self, StatsError> {
        let window_n = window_size(delta_mu, epsilon)?;
        Ok(Self {
            delta_mu,
            epsilon,
            window_n,
        })
    }

    /// Use an explicit window width, which must not be below the
    /// Chernoff-Hoeffding bound for `(delta_mu, epsilon)` — a smaller window
    /// would void the confidence guarantee.
    pub fn with_window(delta_mu: f64, epsilon: f64, window_n: usize) -> Result<Self, StatsError> {
        let required = window_size(delta_mu, epsilon)?;
        if window_n < required {
            return Err(StatsError::WindowBelowBound {
                given: window_n,
                required,
                delta_mu,
                epsilon,
            });
        }
        Ok(Self {
            delta_mu,
            epsilon,
            window_n,
        })
    }

    pub fn delta_mu(&self) -> f64 {
        self.delta_mu
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn window_n(&self) -> usize {
        self.window_n
    }
}

/// Running mean over the latest `window_n` raw-key bits.
///
/// Bits enter one at a time; once the window is full the oldest bit is
/// evicted on each push. No mean is reported until the window has filled —
/// a partially filled window does not carry the `(δ_μ, ε)` guarantee.
#[derive(Debug, Clone)]
pub struct SlidingEstimator {
    buffer: Box<[u8]>,
    head: usize,
    filled: usize,
    ones: usize,
}

impl SlidingEstimator {
    pub fn new(window_n: usize) -> Result<Self, StatsError> {
        if window_n == 0 {
            return Err(StatsError::ZeroWindow);
        }
        Ok(Self {
            buffer: vec![0u8; window_n].into_boxed_slice(),
            head: 0,
            filled: 0,
            ones: 0,
        })
    }

    pub fn window_n(&self) -> usize {
        self.buffer.len()
    }

    /// Number of bits absorbed so far, saturating at the window width.
    pub fn filled(&self) -> usize {
        self.filled
    }

    /// Count of ones currently in the window.
    pub fn ones(&self) -> usize {
        self.ones
    }

    pub fn is_ready(&self) -> bool {
        self.filled == self.buffer.len()
    }

    /// Absorb one bit, evicting the oldest once the window is full.
    pub fn push(&mut self, bit: bool) {
        if self.filled == self.buffer.len() {
            self.ones -= self.buffer[self.head] as usize;
        } else {
            self.filled += 1;
        }
        self.buffer[self.head] = bit as u8;
        self.ones += bit as usize;
        self.head += 1;
        if self.head == self.buffer.len() {
            self.head = 0;
        }
    }

    /// Window mean `μ̂`, or `None` while the window is still warming up.
    pub fn mean(&self) -> Option<f64> {
        if self.is_ready() {
            Some(self.ones as f64 / self.buffer.len() as f64)
        } else {
            None
        }
    }

    /// Drop all buffered bits and start a fresh warm-up.
    pub fn reset(&mut self) {
        self.buffer.fill(0);
        self.head = 0;
        self.filled = 0;
        self.ones = 0;
    }

    #[cfg(test)]
    fn recount_ones(&self) -> usize {
        self.buffer[..self.filled.min(self.buffer.len())]
            .iter()
            .map(|&b| b as usize)
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn entropy_symmetric_point_is_exactly_one() {
        assert_eq!(binary_entropy(0.5).unwrap(), 1.0);
    }

    #[test]
    fn entropy_degenerate_distributions_are_zero() {
        assert_eq!(binary_entropy(0.0).unwrap(), 0.0);
        assert_eq!(binary_entropy(1.0).unwrap(), 0.0);
    }

    #[test]
    fn entropy_at_one_third() {
        let h = binary_entropy(1.0 / 3.0).unwrap();
        assert!((h - 0.918296).abs() < 1e-6, "H2(1/3) = {h}");
    }

    #[test]
    fn entropy_rejects_out_of_range() {
        assert!(binary_entropy(-0.1).is_err());
        assert!(binary_entropy(1.1).is_err());
        assert!(binary_entropy(f64::NAN).is_err());
    }

    #[test]
    fn min_entropy_values() {
        assert_eq!(min_entropy_per_bit(0.5).unwrap(), 1.0);
        assert_eq!(min_entropy_per_bit(1.0).unwrap(), 0.0);
        let m = min_entropy_per_bit(1.0 / 3.0).unwrap();
        assert!((m - 0.584963).abs() < 1e-6, "Hmin(1/3) = {m}");
    }

    #[test]
    fn skr_cap_matches_entropy() {
        for p in [0.0, 0.1, 1.0 / 3.0, 0.5, 0.9] {
            assert_eq!(skr_cap(p).unwrap(), binary_entropy(p).unwrap());
        }
        let a = skr_cap(1.0 / 3.0).unwrap();
        let b = skr_cap(2.0 / 3.0).unwrap();
        assert!((a - 0.918296).abs() < 1e-6);
        assert!((a - b).abs() < 1e-12, "H2 symmetry: {a} vs {b}");
    }

    #[test]
    fn window_size_reference_points() {
        assert_eq!(window_size(0.05, 0.001).unwrap(), 1521);
        assert_eq!(window_size(0.1, 0.01).unwrap(), 265);
    }

    #[test]
    fn window_size_rejects_bad_domain() {
        assert!(window_size(0.0, 0.001).is_err());
        assert!(window_size(-0.05, 0.001).is_err());
        assert!(window_size(0.05, 0.0).is_err());
        assert!(window_size(0.05, 1.5).is_err());
    }

    #[test]
    fn halving_delta_quadruples_the_raw_bound() {
        for (delta, eps) in [(0.05, 0.001), (0.1, 0.01), (0.02, 0.5)] {
            let full = hoeffding_sample_bound(delta, eps);
            let half = hoeffding_sample_bound(delta / 2.0, eps);
            assert_eq!(half, 4.0 * full, "delta={delta} eps={eps}");
        }
    }

    #[test]
    fn params_with_window_enforces_bound() {
        assert!(EstimatorParams::with_window(0.05, 0.001, 1520).is_err());
        let p = EstimatorParams::with_window(0.05, 0.001, 50_000).unwrap();
        assert_eq!(p.window_n(), 50_000);
        let d = EstimatorParams::derive(0.05, 0.001).unwrap();
        assert_eq!(d.window_n(), 1521);
    }

    #[test]
    fn estimator_basic_mean() {
        let mut est = SlidingEstimator::new(4).unwrap();
        for bit in [false, true, false, true] {
            est.push(bit);
        }
        assert_eq!(est.mean(), Some(0.5));
    }

    #[test]
    fn estimator_evicts_fifo() {
        let mut est = SlidingEstimator::new(2).unwrap();
        est.push(true);
        est.push(true);
        assert_eq!(est.mean(), Some(1.0));
        est.push(false); // evicts the oldest 1
        assert_eq!(est.mean(), Some(0.5));
    }

    #[test]
    fn estimator_not_ready_while_warming_up() {
        let mut est = SlidingEstimator::new(3).unwrap();
        assert_eq!(est.mean(), None);
        est.push(true);
        est.push(true);
        assert_eq!(est.mean(), None);
        est.push(true);
        assert_eq!(est.mean(), Some(1.0));
    }

    #[test]
    fn estimator_window_count_example() {
        let mut est = SlidingEstimator::new(1521).unwrap();
        for i in 0..1521 {
            est.push(i < 722);
        }
        let m = est.mean().unwrap();
        assert!((m - 722.0 / 1521.0).abs() < 1e-15, "mean = {m}");
    }

    #[test]
    fn estimator_rejects_zero_window() {
        assert!(SlidingEstimator::new(0).is_err());
    }

    #[test]
    fn estimator_reset_restarts_warmup() {
        let mut est = SlidingEstimator::new(2).unwrap();
        est.push(true);
        est.push(true);
        est.reset();
        assert_eq!(est.mean(), None);
        est.push(false);
        est.push(false);
        assert_eq!(est.mean(), Some(0.0));
    }

    proptest! {
        #[test]
        fn running_sum_matches_recount(window in 1usize..32, bits in proptest::collection::vec(any::<bool>(), 0..200)) {
            let mut est = SlidingEstimator::new(window).unwrap();
            for bit in bits {
                est.push(bit);
                prop_assert_eq!(est.ones(), est.recount_ones());
                if let Some(m) = est.mean() {
                    prop_assert!((0.0..=1.0).contains(&m));
                }
            }
        }

        #[test]
        fn window_size_monotone_and_minimal(
            delta in 0.005f64..0.5,
            eps in 0.0001f64..1.0,
        ) {
            let n = window_size(delta, eps).unwrap();
            let raw = hoeffding_sample_bound(delta, eps);
            // smallest integer satisfying the bound
            prop_assert!(n as f64 >= raw);
            prop_assert!((n as f64) - 1.0 < raw);
            // non-increasing in both parameters
            prop_assert!(window_size(delta * 1.5, eps).unwrap() <= n);
            prop_assert!(window_size(delta, (eps * 1.5).min(1.0)).unwrap() <= n);
        }

        #[test]
        fn entropy_symmetry_dense(p in 0.0f64..=1.0) {
            let a = binary_entropy(p).unwrap();
            let b = binary_entropy(1.0 - p).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
        }
    }
}
