//! Monte Carlo calibration of the recognition delay: window-size sweeps,
//! regression fits for the delay mean and spread, and discard-coverage
//! checks.
//!
//! Every trial derives its seed deterministically from
//! `(master_seed, window_size, trial_index)`, so a sweep is reproducible
//! bit-for-bit regardless of how trials are scheduled.

use std::io::{BufRead, Write};

use thiserror::Error;

use crate::countermeasure::{discard_count, CountermeasureError, ModelKind, RegressionModel};
use crate::keystream::{mix64, KeystreamError, StreamConfig};
use crate::recognizer::{Monitor, RecognizerConfig, RecognizerError, Status};
use crate::stats::{EstimatorParams, StatsError};

#[derive(Debug, Error, PartialEq)]
pub enum MonteCarloError {
    #[error("sweep needs at least one window size")]
    NoWindowSizes,
    #[error("need at least 2 trials per window size, got {0}")]
    TooFewTrials(usize),
    #[error("coverage check needs at least 100 trials, got {0}")]
    TooFewCoverageTrials(usize),
    #[error("fit needs at least {needed} points, got {got}")]
    InsufficientPoints { needed: usize, got: usize },
    #[error("fit needs at least 2 distinct window sizes")]
    DegenerateAbscissae,
    #[error("standard deviation {0} must be non-negative")]
    NegativeSigma(f64),
    #[error("csv line {line}: {message}")]
    MalformedCsv { line: usize, message: String },
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Recognizer(#[from] RecognizerError),
    #[error(transparent)]
    Keystream(#[from] KeystreamError),
    #[error(transparent)]
    Countermeasure(#[from] CountermeasureError),
}

/// Recognition scenario shared by sweep and coverage trials: recognizer
/// parameters plus the simulated mean shift `mu0 → mu1` injected once the
/// warm-up window has filled.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialSetup {
    pub mu_nominal: f64,
    pub threshold_t: f64,
    pub delta_mu: f64,
    pub epsilon: f64,
    pub mu0: f64,
    pub mu1: f64,
    /// Trials that have not recognized within `horizon_factor * n`
    /// post-onset bits count as failures.
    pub horizon_factor: u32,
}

impl Default for TrialSetup {
    /// The canonical half-to-third shift at the tightest threshold.
    fn default() -> Self {
        Self {
            mu_nominal: 0.5,
            threshold_t: 0.05,
            delta_mu: 0.05,
            epsilon: 0.001,
            mu0: 0.5,
            mu1: 1.0 / 3.0,
            horizon_factor: 10,
        }
    }
}

impl TrialSetup {
    fn recognizer_config(&self, window_n: usize) -> Result<RecognizerConfig, MonteCarloError> {
        let params = EstimatorParams::with_window(self.delta_mu, self.epsilon, window_n)?;
        Ok(RecognizerConfig::new(self.mu_nominal, self.threshold_t, params)?)
    }
}

/// Window sizes used when no explicit sweep is configured.
pub const DEFAULT_SWEEP_SIZES: [usize; 8] =
    [5_000, 10_000, 20_000, 30_000, 40_000, 50_000, 75_000, 100_000];

/// Trials per window size used by the calibration runs.
pub const DEFAULT_TRIALS_PER_SIZE: usize = 2_500;

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub window_sizes: Vec<usize>,
    pub trials_per_size: usize,
    pub master_seed: u64,
    pub setup: TrialSetup,
}

impl SweepConfig {
    pub fn new(window_sizes: Vec<usize>, trials_per_size: usize, master_seed: u64) -> Self {
        Self {
            window_sizes,
            trials_per_size,
            master_seed,
            setup: TrialSetup::default(),
        }
    }

    fn validate(&self) -> Result<(), MonteCarloError> {
        if self.window_sizes.is_empty() {
            return Err(MonteCarloError::NoWindowSizes);
        }
        if self.trials_per_size < 2 {
            return Err(MonteCarloError::TooFewTrials(self.trials_per_size));
        }
        for &n in &self.window_sizes {
            self.setup.recognizer_config(n)?;
        }
        Ok(())
    }
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self::new(DEFAULT_SWEEP_SIZES.to_vec(), DEFAULT_TRIALS_PER_SIZE, 0)
    }
}

/// Aggregate recognition-delay statistics for one window size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub window_n: usize,
    pub trials: usize,
    /// Mean of (trigger index − onset index) over recognized trials;
    /// NaN if fewer than two trials recognized.
    pub mean_delay_bits: f64,
    /// Sample standard deviation (divisor trials−1) of the delay.
    pub std_delay_bits: f64,
    /// Trials with no recognition inside the horizon.
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    /// `(window_n, mean delay)` points for the linear fit, skipping rows
    /// without a defined mean.
    pub fn mean_points(&self) -> Vec<(f64, f64)> {
        self.rows
            .iter()
            .filter(|r| r.mean_delay_bits.is_finite())
            .map(|r| (r.window_n as f64, r.mean_delay_bits))
            .collect()
    }

    /// `(window_n, delay std)` points for the sqrt fit.
    pub fn std_points(&self) -> Vec<(f64, f64)> {
        self.rows
            .iter()
            .filter(|r| r.std_delay_bits.is_finite())
            .map(|r| (r.window_n as f64, r.std_delay_bits))
            .collect()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "window_n,trials,mean_nr_bits,std_bits,failures")?;
        for row in &self.rows {
            writeln!(
                w,
                "{},{},{},{},{}",
                row.window_n, row.trials, row.mean_delay_bits, row.std_delay_bits, row.failures
            )?;
        }
        Ok(())
    }
}

/// Parse a CSV produced by [`SweepResult::write_csv`].
pub fn parse_sweep_csv<R: BufRead>(r: R) -> Result<Vec<SweepRow>, MonteCarloError> {
    let malformed = |line: usize, message: String| MonteCarloError::MalformedCsv { line, message };
    let mut rows = Vec::new();
    let mut lines = r.lines().enumerate();

    let (_, header) = lines
        .next()
        .ok_or_else(|| malformed(1, "empty file".into()))?;
    let header = header.map_err(|e| malformed(1, e.to_string()))?;
    if header.trim() != "window_n,trials,mean_nr_bits,std_bits,failures" {
        return Err(malformed(1, format!("unexpected header {header:?}")));
    }

    for (idx, line) in lines {
        let line = line.map_err(|e| malformed(idx + 1, e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(malformed(idx + 1, format!("expected 5 fields, got {}", fields.len())));
        }
        let parse_num = |s: &str, what: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| malformed(idx + 1, format!("{what} {s:?} is not a number")))
        };
        let window_n = fields[0]
            .trim()
            .parse::<usize>()
            .map_err(|_| malformed(idx + 1, format!("window_n {:?} is not an integer", fields[0])))?;
        let trials = fields[1]
            .trim()
            .parse::<usize>()
            .map_err(|_| malformed(idx + 1, format!("trials {:?} is not an integer", fields[1])))?;
        let mean = parse_num(fields[2], "mean_nr_bits")?;
        let std = parse_num(fields[3], "std_bits")?;
        if !mean.is_finite() || !std.is_finite() {
            return Err(malformed(idx + 1, "mean/std must be finite".into()));
        }
        let failures = fields[4]
            .trim()
            .parse::<usize>()
            .map_err(|_| malformed(idx + 1, format!("failures {:?} is not an integer", fields[4])))?;
        rows.push(SweepRow {
            window_n,
            trials,
            mean_delay_bits: mean,
            std_delay_bits: std,
            failures,
        });
    }
    Ok(rows)
}

/// Deterministic per-trial seed from `(master_seed, window_n, trial)`.
pub fn derive_trial_seed(master_seed: u64, window_n: u64, trial: u64) -> u64 {
    mix64(mix64(mix64(master_seed) ^ window_n) ^ trial)
}

/// Outcome of one simulated SD error.
enum TrialOutcome {
    /// Delay in bits: trigger index minus onset index.
    Recognized(i64),
    NoRecognition,
}

/// Simulate one SD error: warm the window up on `mu0`, shift to `mu1`, and
/// measure the recognition delay.
fn run_trial(
    setup: &TrialSetup,
    window_n: usize,
    seed: u64,
) -> Result<TrialOutcome, MonteCarloError> {
    let cfg = setup.recognizer_config(window_n)?;
    let onset = window_n as u64;
    let total_bits = onset + setup.horizon_factor as u64 * window_n as u64;
    let stream_cfg = StreamConfig::bernoulli(setup.mu0, seed).with_mean_shift(onset, setup.mu1);
    let mut stream = crate::keystream::KeyStream::new(&stream_cfg)?;
    let mut monitor = Monitor::new(cfg);
    for _ in 0..total_bits {
        if let Status::Recognized(_) = monitor.push(stream.next_bit()) {
            let trigger = monitor.event().expect("event latched").trigger_index;
            return Ok(TrialOutcome::Recognized(trigger as i64 - onset as i64));
        }
    }
    Ok(TrialOutcome::NoRecognition)
}

/// Run `trials_per_size` SD-error simulations at every window size and
/// aggregate delay mean and spread. Failures (no recognition inside the
/// horizon) are excluded from the statistics but reported per row.
pub fn run_sweep(cfg: &SweepConfig) -> Result<SweepResult, MonteCarloError> {
    cfg.validate()?;
    let mut rows = Vec::with_capacity(cfg.window_sizes.len());
    for &window_n in &cfg.window_sizes {
        let mut delays: Vec<f64> = Vec::with_capacity(cfg.trials_per_size);
        let mut failures = 0usize;
        for trial in 0..cfg.trials_per_size {
            let seed = derive_trial_seed(cfg.master_seed, window_n as u64, trial as u64);
            match run_trial(&cfg.setup, window_n, seed)? {
                TrialOutcome::Recognized(delay) => delays.push(delay as f64),
                TrialOutcome::NoRecognition => failures += 1,
            }
        }
        let (mean, std) = mean_and_sample_std(&delays);
        rows.push(SweepRow {
            window_n,
            trials: cfg.trials_per_size,
            mean_delay_bits: mean,
            std_delay_bits: std,
            failures,
        });
    }
    Ok(SweepResult { rows })
}

fn mean_and_sample_std(values: &[f64]) -> (f64, f64) {
    if values.len() < 2 {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    (mean, (ss / (n - 1.0)).sqrt())
}

fn check_fit_points(points: &[(f64, f64)]) -> Result<(), MonteCarloError> {
    if points.len() < 2 {
        return Err(MonteCarloError::InsufficientPoints {
            needed: 2,
            got: points.len(),
        });
    }
    let first = points[0].0;
    if points.iter().all(|&(x, _)| x == first) {
        return Err(MonteCarloError::DegenerateAbscissae);
    }
    Ok(())
}

/// Ordinary least squares slope/intercept in centered form.
fn ols(points: &[(f64, f64)]) -> (f64, f64) {
    let n = points.len() as f64;
    let mean_x = points.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = points.iter().map(|p| p.1).sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for &(x, y) in points {
        sxx += (x - mean_x) * (x - mean_x);
        sxy += (x - mean_x) * (y - mean_y);
    }
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    (slope, intercept)
}

/// Fit the mean recognition delay as `n_r = alpha*n - beta` by ordinary
/// least squares; `rmse` is over the input points, in bits.
pub fn fit_linear(points: &[(f64, f64)]) -> Result<RegressionModel, MonteCarloError> {
    check_fit_points(points)?;
    let (slope, intercept) = ols(points);
    let (alpha, beta) = (slope, -intercept);
    let ss: f64 = points
        .iter()
        .map(|&(x, y)| {
            let r = y - (alpha * x - beta);
            r * r
        })
        .sum();
    Ok(RegressionModel::linear(
        alpha,
        beta,
        (ss / points.len() as f64).sqrt(),
    ))
}

/// Fit the delay spread as `sigma = sqrt(alpha*n - beta)`, linearized as
/// ordinary least squares on `sigma²`; `rmse` is reported back in
/// sigma-space (bits).
pub fn fit_sqrt(points: &[(f64, f64)]) -> Result<RegressionModel, MonteCarloError> {
    check_fit_points(points)?;
    for &(_, sigma) in points {
        if sigma < 0.0 {
            return Err(MonteCarloError::NegativeSigma(sigma));
        }
    }
    let squared: Vec<(f64, f64)> = points.iter().map(|&(x, s)| (x, s * s)).collect();
    let (slope, intercept) = ols(&squared);
    let (alpha, beta) = (slope, -intercept);
    let ss: f64 = points
        .iter()
        .map(|&(x, sigma)| {
            let predicted = (alpha * x - beta).max(0.0).sqrt();
            let r = sigma - predicted;
            r * r
        })
        .sum();
    Ok(RegressionModel::sqrt(
        alpha,
        beta,
        (ss / points.len() as f64).sqrt(),
    ))
}

/// Format a fitted model as its one-line CSV form `kind,alpha,beta,rmse`.
pub fn fit_csv_line(model: &RegressionModel) -> String {
    format!("{},{},{},{}", model.kind, model.alpha, model.beta, model.rmse)
}

/// Parse a `kind,alpha,beta,rmse` line back into a model. `line_no` is
/// used for error attribution.
pub fn parse_fit_line(line: &str, line_no: usize) -> Result<RegressionModel, MonteCarloError> {
    let malformed =
        |message: String| MonteCarloError::MalformedCsv { line: line_no, message };
    let fields: Vec<&str> = line.split(',').collect();
    if fields.len() != 4 {
        return Err(malformed(format!("expected 4 fields, got {}", fields.len())));
    }
    let kind = match fields[0].trim() {
        "linear" => ModelKind::Linear,
        "sqrt" => ModelKind::Sqrt,
        other => return Err(malformed(format!("unknown model kind {other:?}"))),
    };
    let mut nums = [0.0f64; 3];
    for (i, (field, what)) in fields[1..]
        .iter()
        .zip(["alpha", "beta", "rmse"])
        .enumerate()
    {
        nums[i] = field
            .trim()
            .parse::<f64>()
            .map_err(|_| malformed(format!("{what} {field:?} is not a number")))?;
    }
    Ok(RegressionModel {
        kind,
        alpha: nums[0],
        beta: nums[1],
        rmse: nums[2],
    })
}

/// Configuration for a discard-coverage measurement at one window size.
#[derive(Debug, Clone, PartialEq)]
pub struct CoverageConfig {
    pub window_n: usize,
    pub k_sigma: f64,
    pub trials: usize,
    pub master_seed: u64,
    pub setup: TrialSetup,
    pub linear: RegressionModel,
    pub sqrt: RegressionModel,
}

impl CoverageConfig {
    pub fn new(window_n: usize, k_sigma: f64, trials: usize, master_seed: u64) -> Self {
        Self {
            window_n,
            k_sigma,
            trials,
            master_seed,
            setup: TrialSetup::default(),
            linear: RegressionModel::DEFAULT_LINEAR,
            sqrt: RegressionModel::DEFAULT_SQRT,
        }
    }
}

/// Fraction of simulated SD errors whose actual recognition delay is
/// covered by `discard_count(window_n, k_sigma, models)`. Trials that never
/// recognize count as uncovered.
pub fn coverage_check(cfg: &CoverageConfig) -> Result<f64, MonteCarloError> {
    if cfg.trials < 100 {
        return Err(MonteCarloError::TooFewCoverageTrials(cfg.trials));
    }
    let discard = discard_count(cfg.window_n, cfg.k_sigma, &cfg.linear, &cfg.sqrt)?;
    let mut covered = 0usize;
    for trial in 0..cfg.trials {
        let seed = derive_trial_seed(cfg.master_seed, cfg.window_n as u64, trial as u64);
        match run_trial(&cfg.setup, cfg.window_n, seed)? {
            TrialOutcome::Recognized(delay) => {
                if delay <= discard as i64 {
                    covered += 1;
                }
            }
            TrialOutcome::NoRecognition => {}
        }
    }
    Ok(covered as f64 / cfg.trials as f64)
}
