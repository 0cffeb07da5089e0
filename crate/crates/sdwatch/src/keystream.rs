//! Raw-key bit stream generation for a BB84 receiver.
//!
//! Two stream models are provided. The Bernoulli model draws bits i.i.d.
//! from a bare probability distribution, which is what the recognition
//! simulations operate on. The detector model grounds that distribution in a
//! four-detector passive receiver: Alice picks one of the four BB84 states
//! uniformly, a beamsplitter routes the photon to a measurement basis with
//! probability 1/2 each, sifting keeps only matched-basis rounds, and the
//! detector for the encoded state clicks with its configured efficiency.
//! Rounds without a click never enter the raw key, so stream indices count
//! sifted key bits, not channel uses.
//!
//! An optional [`ErrorSchedule`] switches the stream to a degraded
//! distribution from a given bit index onward: a shifted mean in Bernoulli
//! mode, or a reduced detector efficiency in detector mode.

use std::fmt;
use std::io::{self, BufRead, Write};
use std::str::FromStr;

use thiserror::Error;

/// Name of the pseudo-random generator behind every stream; recorded in
/// run metadata so outputs stay reproducible across builds.
pub const RNG_ALGORITHM: &str = "splitmix64";

#[derive(Debug, Error, PartialEq)]
pub enum KeystreamError {
    #[error("detector efficiency {0} outside [0, 1]")]
    EfficiencyOutOfRange(f64),
    #[error("no detectable states: all four detector efficiencies are zero")]
    NoDetectableStates,
    #[error("bernoulli mean {0} outside [0, 1]")]
    MeanOutOfRange(f64),
    #[error("schedule kind does not match stream mode")]
    ScheduleModeMismatch,
    #[error("new efficiency {new} is not strictly below the nominal efficiency {nominal} of {detector}")]
    EfficiencyNotDegraded {
        detector: DetectorId,
        nominal: f64,
        new: f64,
    },
    #[error("degraded bank has no detectable states")]
    DegradedBankDead,
    #[error("stream file line {line}: {message}")]
    MalformedStreamFile { line: usize, message: String },
    #[error("io error: {0}")]
    Io(String),
}

impl From<io::Error> for KeystreamError {
    fn from(e: io::Error) -> Self {
        KeystreamError::Io(e.to_string())
    }
}

/// Measurement basis of the passive receiver.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Basis {
    /// Computational basis (|0⟩, |1⟩).
    Z,
    /// Phase basis (|+⟩, |−⟩).
    X,
}

impl Basis {
    pub fn other(self) -> Basis {
        match self {
            Basis::Z => Basis::X,
            Basis::X => Basis::Z,
        }
    }
}

impl fmt::Display for Basis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Basis::Z => write!(f, "Z"),
            Basis::X => write!(f, "X"),
        }
    }
}

/// One of the four detectors of the passive receiver, named after the BB84
/// state it detects: Z0 ↦ |0⟩, Z1 ↦ |1⟩, X0 ↦ |+⟩, X1 ↦ |−⟩.
///
/// Z0 and X0 produce raw-key bit 0; Z1 and X1 produce bit 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DetectorId {
    Z0,
    Z1,
    X0,
    X1,
}

impl DetectorId {
    pub const ALL: [DetectorId; 4] = [DetectorId::Z0, DetectorId::Z1, DetectorId::X0, DetectorId::X1];

    pub fn basis(self) -> Basis {
        match self {
            DetectorId::Z0 | DetectorId::Z1 => Basis::Z,
            DetectorId::X0 | DetectorId::X1 => Basis::X,
        }
    }

    /// Raw-key bit value this detector encodes.
    pub fn bit(self) -> bool {
        matches!(self, DetectorId::Z1 | DetectorId::X1)
    }

    /// The other detector of the same basis.
    pub fn partner(self) -> DetectorId {
        match self {
            DetectorId::Z0 => DetectorId::Z1,
            DetectorId::Z1 => DetectorId::Z0,
            DetectorId::X0 => DetectorId::X1,
            DetectorId::X1 => DetectorId::X0,
        }
    }

    fn index(self) -> usize {
        match self {
            DetectorId::Z0 => 0,
            DetectorId::Z1 => 1,
            DetectorId::X0 => 2,
            DetectorId::X1 => 3,
        }
    }
}

impl fmt::Display for DetectorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            DetectorId::Z0 => "Z0",
            DetectorId::Z1 => "Z1",
            DetectorId::X0 => "X0",
            DetectorId::X1 => "X1",
        };
        write!(f, "{s}")
    }
}

impl FromStr for DetectorId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "Z0" => Ok(DetectorId::Z0),
            "Z1" => Ok(DetectorId::Z1),
            "X0" => Ok(DetectorId::X0),
            "X1" => Ok(DetectorId::X1),
            other => Err(format!("unknown detector id {other:?} (expected Z0|Z1|X0|X1)")),
        }
    }
}

/// Per-detector click efficiencies of the passive receiver, each in [0, 1].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorBank {
    efficiencies: [f64; 4],
}

impl DetectorBank {
    pub fn new(z0: f64, z1: f64, x0: f64, x1: f64) -> Result<Self, KeystreamError> {
        let efficiencies = [z0, z1, x0, x1];
        for &eta in &efficiencies {
            if !(0.0..=1.0).contains(&eta) {
                return Err(KeystreamError::EfficiencyOutOfRange(eta));
            }
        }
        Ok(Self { efficiencies })
    }

    /// All four detectors at unit efficiency.
    pub fn ideal() -> Self {
        Self {
            efficiencies: [1.0; 4],
        }
    }

    pub fn efficiency(&self, detector: DetectorId) -> f64 {
        self.efficiencies[detector.index()]
    }

    /// Copy of the bank with one detector's efficiency replaced.
    pub fn with_efficiency(&self, detector: DetectorId, eta: f64) -> Result<Self, KeystreamError> {
        if !(0.0..=1.0).contains(&eta) {
            return Err(KeystreamError::EfficiencyOutOfRange(eta));
        }
        let mut bank = *self;
        bank.efficiencies[detector.index()] = eta;
        Ok(bank)
    }

    fn total_efficiency(&self) -> f64 {
        self.efficiencies.iter().sum()
    }

    /// Probability that a sifted raw-key bit equals 1.
    ///
    /// Alice's state choice is uniform, the passive basis choice is 50/50,
    /// and sifting keeps only matched-basis clicks, so each detector
    /// contributes in proportion to its efficiency:
    /// `(η_Z1 + η_X1) / (η_Z0 + η_Z1 + η_X0 + η_X1)`.
    pub fn sifted_bit_mean(&self) -> Result<f64, KeystreamError> {
        let total = self.total_efficiency();
        if total == 0.0 {
            return Err(KeystreamError::NoDetectableStates);
        }
        let ones = self.efficiency(DetectorId::Z1) + self.efficiency(DetectorId::X1);
        Ok(ones / total)
    }
}

/// What goes wrong at the scheduled onset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Fault {
    /// Bernoulli mode: bits from the onset onwards use this mean.
    MeanShift { new_mean: f64 },
    /// Detector mode: one detector drops to a lower efficiency
    /// (0 models a dead detector, intermediate values a partial fault).
    DetectorFault {
        detector: DetectorId,
        new_efficiency: f64,
    },
}

/// When and how the stream degrades. `onset_index` is a position in the
/// sifted raw-key bit sequence, not a channel-use count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorSchedule {
    pub onset_index: u64,
    pub fault: Fault,
}

/// Bit-distribution model for the stream.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StreamMode {
    Bernoulli { mean: f64 },
    Detector { bank: DetectorBank },
}

/// Full description of a raw-key stream. Equal configs produce identical
/// bit sequences.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StreamConfig {
    pub mode: StreamMode,
    pub seed: u64,
    pub schedule: Option<ErrorSchedule>,
}

impl StreamConfig {
    pub fn bernoulli(mean: f64, seed: u64) -> Self {
        Self {
            mode: StreamMode::Bernoulli { mean },
            seed,
            schedule: None,
        }
    }

    pub fn detector(bank: DetectorBank, seed: u64) -> Self {
        Self {
            mode: StreamMode::Detector { bank },
            seed,
            schedule: None,
        }
    }

    pub fn with_mean_shift(mut self, onset_index: u64, new_mean: f64) -> Self {
        self.schedule = Some(ErrorSchedule {
            onset_index,
            fault: Fault::MeanShift { new_mean },
        });
        self
    }

    pub fn with_detector_fault(
        mut self,
        onset_index: u64,
        detector: DetectorId,
        new_efficiency: f64,
    ) -> Self {
        self.schedule = Some(ErrorSchedule {
            onset_index,
            fault: Fault::DetectorFault {
                detector,
                new_efficiency,
            },
        });
        self
    }

    pub fn validate(&self) -> Result<(), KeystreamError> {
        match self.mode {
            StreamMode::Bernoulli { mean } => {
                if !(0.0..=1.0).contains(&mean) {
                    return Err(KeystreamError::MeanOutOfRange(mean));
                }
            }
            StreamMode::Detector { bank } => {
                // also rejects the all-zero bank
                bank.sifted_bit_mean()?;
            }
        }
        if let Some(schedule) = self.schedule {
            match (self.mode, schedule.fault) {
                (StreamMode::Bernoulli { .. }, Fault::MeanShift { new_mean }) => {
                    if !(0.0..=1.0).contains(&new_mean) {
                        return Err(KeystreamError::MeanOutOfRange(new_mean));
                    }
                }
                (
                    StreamMode::Detector { bank },
                    Fault::DetectorFault {
                        detector,
                        new_efficiency,
                    },
                ) => {
                    let nominal = bank.efficiency(detector);
                    if !(0.0..1.0).contains(&new_efficiency) || new_efficiency >= nominal {
                        return Err(KeystreamError::EfficiencyNotDegraded {
                            detector,
                            nominal,
                            new: new_efficiency,
                        });
                    }
                    let degraded = bank.with_efficiency(detector, new_efficiency)?;
                    if degraded.total_efficiency() == 0.0 {
                        return Err(KeystreamError::DegradedBankDead);
                    }
                }
                _ => return Err(KeystreamError::ScheduleModeMismatch),
            }
        }
        Ok(())
    }

    /// Compact description for file headers and run summaries, e.g.
    /// `bernoulli:0.5>0.33333333` or `detector:1,1,1,1>X1:0`.
    pub fn mode_label(&self) -> String {
        let mut label = match self.mode {
            StreamMode::Bernoulli { mean } => format!("bernoulli:{mean}"),
            StreamMode::Detector { bank } => format!(
                "detector:{},{},{},{}",
                bank.efficiency(DetectorId::Z0),
                bank.efficiency(DetectorId::Z1),
                bank.efficiency(DetectorId::X0),
                bank.efficiency(DetectorId::X1),
            ),
        };
        if let Some(schedule) = self.schedule {
            match schedule.fault {
                Fault::MeanShift { new_mean } => label.push_str(&format!(">{new_mean}")),
                Fault::DetectorFault {
                    detector,
                    new_efficiency,
                } => label.push_str(&format!(">{detector}:{new_efficiency}")),
            }
        }
        label
    }
}

/// SplitMix64 generator (Steele, Lea and Flood's `java.util.SplittableRandom`
/// step function). A 64-bit Weyl counter mixed down to the output; period
/// exactly 2⁶⁴.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        mix64(self.state)
    }
}

/// SplitMix64 finalizer: a bijective avalanche mix of a 64-bit word.
pub(crate) fn mix64(z: u64) -> u64 {
    let z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    let z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Bernoulli(p) as a threshold test on a uniform u64: true iff
/// `u < round(p·2⁶⁴)`. `None` encodes p ≥ 1 (always true).
#[derive(Debug, Clone, Copy)]
struct BitThreshold(Option<u64>);

impl BitThreshold {
    fn new(p: f64) -> Self {
        if p >= 1.0 {
            BitThreshold(None)
        } else {
            // exact: multiplying an f64 by 2^64 only shifts the exponent
            BitThreshold(Some((p * 18_446_744_073_709_551_616.0) as u64))
        }
    }

    fn sample(&self, rng: &mut SplitMix64) -> bool {
        match self.0 {
            None => true,
            Some(t) => rng.next_u64() < t,
        }
    }
}

enum Phase {
    Bernoulli {
        threshold: BitThreshold,
    },
    Detector {
        bank: DetectorBank,
        thresholds: [BitThreshold; 4],
    },
}

impl Phase {
    fn for_bernoulli(mean: f64) -> Phase {
        Phase::Bernoulli {
            threshold: BitThreshold::new(mean),
        }
    }

    fn for_detector(bank: DetectorBank) -> Phase {
        Phase::Detector {
            bank,
            thresholds: [
                BitThreshold::new(bank.efficiency(DetectorId::Z0)),
                BitThreshold::new(bank.efficiency(DetectorId::Z1)),
                BitThreshold::new(bank.efficiency(DetectorId::X0)),
                BitThreshold::new(bank.efficiency(DetectorId::X1)),
            ],
        }
    }
}

/// Deterministic, single-owner raw-key bit generator. Infinite iterator;
/// callers bound it with `take` or an explicit count.
pub struct KeyStream {
    rng: SplitMix64,
    nominal: Phase,
    degraded: Option<(u64, Phase)>,
    index: u64,
}

impl KeyStream {
    pub fn new(config: &StreamConfig) -> Result<Self, KeystreamError> {
        config.validate()?;
        let nominal = match config.mode {
            StreamMode::Bernoulli { mean } => Phase::for_bernoulli(mean),
            StreamMode::Detector { bank } => Phase::for_detector(bank),
        };
        let degraded = match (config.mode, config.schedule) {
            (_, None) => None,
            (StreamMode::Bernoulli { .. }, Some(schedule)) => match schedule.fault {
                Fault::MeanShift { new_mean } => {
                    Some((schedule.onset_index, Phase::for_bernoulli(new_mean)))
                }
                _ => unreachable!("validated"),
            },
            (StreamMode::Detector { bank }, Some(schedule)) => match schedule.fault {
                Fault::DetectorFault {
                    detector,
                    new_efficiency,
                } => {
                    let degraded_bank = bank.with_efficiency(detector, new_efficiency)?;
                    Some((schedule.onset_index, Phase::for_detector(degraded_bank)))
                }
                _ => unreachable!("validated"),
            },
        };
        Ok(Self {
            rng: SplitMix64::new(config.seed),
            nominal,
            degraded,
            index: 0,
        })
    }

    /// Index of the next bit to be produced.
    pub fn index(&self) -> u64 {
        self.index
    }

    pub fn next_bit(&mut self) -> bool {
        let phase = match &self.degraded {
            Some((onset, degraded)) if self.index >= *onset => degraded,
            _ => &self.nominal,
        };
        let bit = match phase {
            Phase::Bernoulli { threshold } => threshold.sample(&mut self.rng),
            Phase::Detector { bank, thresholds } => loop {
                // one passive-receiver round: state, basis split, click
                let state = DetectorId::ALL[(self.rng.next_u64() >> 62) as usize];
                let bob_basis = if self.rng.next_u64() >> 63 == 1 {
                    Basis::X
                } else {
                    Basis::Z
                };
                if state.basis() != bob_basis {
                    continue; // sifted out
                }
                debug_assert!(bank.total_efficiency() > 0.0);
                if thresholds[state.index()].sample(&mut self.rng) {
                    break state.bit();
                }
            },
        };
        self.index += 1;
        bit
    }
}

impl Iterator for KeyStream {
    type Item = bool;

    fn next(&mut self) -> Option<bool> {
        Some(self.next_bit())
    }
}

/// Generate `count` raw-key bits for `config`.
pub fn generate(config: &StreamConfig, count: usize) -> Result<Vec<bool>, KeystreamError> {
    let stream = KeyStream::new(config)?;
    Ok(stream.take(count).collect())
}

/// Header line of a stream dump: seed, mode label, and onset (if any).
#[derive(Debug, Clone, PartialEq)]
pub struct StreamHeader {
    pub seed: u64,
    pub mode: String,
    pub onset: Option<u64>,
}

impl StreamHeader {
    pub fn for_config(config: &StreamConfig) -> Self {
        Self {
            seed: config.seed,
            mode: config.mode_label(),
            onset: config.schedule.map(|s| s.onset_index),
        }
    }
}

const STREAM_LINE_BITS: usize = 64;

/// Dump a bit stream as ASCII '0'/'1' characters, 64 per line, preceded by
/// a one-line `# seed=<u64> mode=<...> onset=<...>` header.
pub fn write_stream<W: Write>(
    mut w: W,
    header: &StreamHeader,
    bits: &[bool],
) -> Result<(), KeystreamError> {
    let onset = match header.onset {
        Some(i) => i.to_string(),
        None => "none".to_string(),
    };
    writeln!(w, "# seed={} mode={} onset={}", header.seed, header.mode, onset)?;
    for chunk in bits.chunks(STREAM_LINE_BITS) {
        let line: String = chunk.iter().map(|&b| if b { '1' } else { '0' }).collect();
        writeln!(w, "{line}")?;
    }
    Ok(())
}

/// Read back a stream dump produced by [`write_stream`].
pub fn read_stream<R: BufRead>(r: R) -> Result<(StreamHeader, Vec<bool>), KeystreamError> {
    let malformed = |line: usize, message: &str| KeystreamError::MalformedStreamFile {
        line,
        message: message.to_string(),
    };

    let mut lines = r.lines().enumerate();
    let (_, first) = lines
        .next()
        .ok_or_else(|| malformed(1, "empty file, expected header"))?;
    let first = first?;
    let rest = first
        .strip_prefix("# ")
        .ok_or_else(|| malformed(1, "expected header starting with '# '"))?;

    let mut seed = None;
    let mut mode = None;
    let mut onset = None;
    for field in rest.split_whitespace() {
        let (key, value) = field
            .split_once('=')
            .ok_or_else(|| malformed(1, "header fields must be key=value"))?;
        match key {
            "seed" => {
                seed = Some(
                    value
                        .parse::<u64>()
                        .map_err(|_| malformed(1, "seed is not a u64"))?,
                )
            }
            "mode" => mode = Some(value.to_string()),
            "onset" => {
                onset = if value == "none" {
                    None
                } else {
                    Some(
                        value
                            .parse::<u64>()
                            .map_err(|_| malformed(1, "onset is not a u64 or 'none'"))?,
                    )
                }
            }
            other => return Err(malformed(1, &format!("unknown header field {other:?}"))),
        }
    }
    let header = StreamHeader {
        seed: seed.ok_or_else(|| malformed(1, "missing seed field"))?,
        mode: mode.ok_or_else(|| malformed(1, "missing mode field"))?,
        onset,
    };

    let mut bits = Vec::new();
    for (idx, line) in lines {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        if line.len() > STREAM_LINE_BITS {
            return Err(malformed(idx + 1, "line longer than 64 bits"));
        }
        for c in line.chars() {
            match c {
                '0' => bits.push(false),
                '1' => bits.push(true),
                other => {
                    return Err(malformed(
                        idx + 1,
                        &format!("unexpected character {other:?}, want '0' or '1'"),
                    ))
                }
            }
        }
    }
    Ok((header, bits))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bank(z0: f64, z1: f64, x0: f64, x1: f64) -> DetectorBank {
        DetectorBank::new(z0, z1, x0, x1).unwrap()
    }

    fn empirical_mean(bits: &[bool]) -> f64 {
        bits.iter().filter(|&&b| b).count() as f64 / bits.len() as f64
    }

    #[test]
    fn sifted_mean_symmetric_bank() {
        assert_eq!(DetectorBank::ideal().sifted_bit_mean().unwrap(), 0.5);
    }

    #[test]
    fn sifted_mean_dead_one_detector() {
        let m = bank(1.0, 1.0, 1.0, 0.0).sifted_bit_mean().unwrap();
        assert!((m - 1.0 / 3.0).abs() < 1e-15, "dead X1 -> {m}");
        let m = bank(0.0, 1.0, 1.0, 1.0).sifted_bit_mean().unwrap();
        assert!((m - 2.0 / 3.0).abs() < 1e-15, "dead Z0 -> {m}");
    }

    #[test]
    fn sifted_mean_partial_fault() {
        let m = bank(1.0, 0.5, 1.0, 1.0).sifted_bit_mean().unwrap();
        assert!((m - 1.5 / 3.5).abs() < 1e-15, "eta_Z1=0.5 -> {m}");
    }

    #[test]
    fn sifted_mean_all_dead_is_error() {
        assert_eq!(
            bank(0.0, 0.0, 0.0, 0.0).sifted_bit_mean(),
            Err(KeystreamError::NoDetectableStates)
        );
    }

    #[test]
    fn detector_id_geometry() {
        assert_eq!(DetectorId::Z0.basis(), Basis::Z);
        assert_eq!(DetectorId::X1.basis(), Basis::X);
        assert!(!DetectorId::Z0.bit());
        assert!(DetectorId::Z1.bit());
        assert!(!DetectorId::X0.bit());
        assert!(DetectorId::X1.bit());
        assert_eq!(DetectorId::X1.partner(), DetectorId::X0);
        assert_eq!("Z1".parse::<DetectorId>().unwrap(), DetectorId::Z1);
        assert!("Q3".parse::<DetectorId>().is_err());
    }

    #[test]
    fn generate_count_zero_is_empty() {
        let cfg = StreamConfig::bernoulli(0.5, 7);
        assert!(generate(&cfg, 0).unwrap().is_empty());
    }

    #[test]
    fn generate_is_deterministic() {
        let cfg = StreamConfig::bernoulli(0.3, 99).with_mean_shift(50, 0.9);
        assert_eq!(generate(&cfg, 200).unwrap(), generate(&cfg, 200).unwrap());

        let dcfg = StreamConfig::detector(bank(1.0, 0.7, 0.9, 1.0), 41)
            .with_detector_fault(80, DetectorId::X0, 0.1);
        assert_eq!(generate(&dcfg, 300).unwrap(), generate(&dcfg, 300).unwrap());
    }

    #[test]
    fn bernoulli_mean_within_three_sigma() {
        let cfg = StreamConfig::bernoulli(0.5, 12345);
        let bits = generate(&cfg, 1_000_000).unwrap();
        let sigma3 = 3.0 * (0.25_f64 / 1e6).sqrt();
        let m = empirical_mean(&bits);
        assert!((m - 0.5).abs() < sigma3, "mean {m} vs 0.5 +- {sigma3}");
    }

    #[test]
    fn mean_shift_takes_effect_at_onset() {
        let onset = 100_000u64;
        let cfg = StreamConfig::bernoulli(0.5, 777).with_mean_shift(onset, 1.0 / 3.0);
        let bits = generate(&cfg, 200_000).unwrap();
        let post = &bits[onset as usize..];
        let sigma3 = 3.0 * ((1.0 / 3.0) * (2.0 / 3.0) / post.len() as f64).sqrt();
        let m = empirical_mean(post);
        assert!((m - 1.0 / 3.0).abs() < sigma3, "post mean {m}");
        let pre = &bits[..onset as usize];
        let sigma3 = 3.0 * (0.25 / pre.len() as f64).sqrt();
        let m = empirical_mean(pre);
        assert!((m - 0.5).abs() < sigma3, "pre mean {m}");
    }

    #[test]
    fn detector_stream_tracks_sifted_mean() {
        for (seed, b) in [
            (1u64, DetectorBank::ideal()),
            (2, bank(1.0, 1.0, 1.0, 0.0)),
            (3, bank(0.8, 0.5, 0.9, 0.25)),
        ] {
            let expect = b.sifted_bit_mean().unwrap();
            let cfg = StreamConfig::detector(b, seed);
            let n = 1_000_000;
            let bits = generate(&cfg, n).unwrap();
            let sigma4 = 4.0 * (expect * (1.0 - expect) / n as f64).sqrt();
            let m = empirical_mean(&bits);
            assert!((m - expect).abs() <= sigma4, "bank {b:?}: {m} vs {expect} +- {sigma4}");
        }
    }

    #[test]
    fn detector_fault_shifts_stream_mean() {
        let b = DetectorBank::ideal();
        let onset = 50_000u64;
        let cfg = StreamConfig::detector(b, 5).with_detector_fault(onset, DetectorId::X1, 0.0);
        let bits = generate(&cfg, 150_000).unwrap();
        let post = &bits[onset as usize..];
        let m = empirical_mean(post);
        let sigma4 = 4.0 * ((1.0 / 3.0) * (2.0 / 3.0) / post.len() as f64).sqrt();
        assert!((m - 1.0 / 3.0).abs() < sigma4, "post-fault mean {m}");
    }

    #[test]
    fn validation_rejects_bad_configs() {
        assert!(StreamConfig::bernoulli(1.5, 0).validate().is_err());
        assert!(StreamConfig::bernoulli(0.5, 0)
            .with_mean_shift(10, -0.1)
            .validate()
            .is_err());

        // schedule kind must match mode
        let mut cfg = StreamConfig::detector(DetectorBank::ideal(), 0);
        cfg.schedule = Some(ErrorSchedule {
            onset_index: 1,
            fault: Fault::MeanShift { new_mean: 0.3 },
        });
        assert_eq!(cfg.validate(), Err(KeystreamError::ScheduleModeMismatch));

        // fault must strictly degrade
        let cfg = StreamConfig::detector(bank(0.5, 1.0, 1.0, 1.0), 0)
            .with_detector_fault(1, DetectorId::Z0, 0.5);
        assert!(matches!(
            cfg.validate(),
            Err(KeystreamError::EfficiencyNotDegraded { .. })
        ));

        // degrading the only live detector kills the bank
        let cfg = StreamConfig::detector(bank(0.0, 0.0, 0.0, 1.0), 0)
            .with_detector_fault(1, DetectorId::X1, 0.0);
        assert_eq!(cfg.validate(), Err(KeystreamError::DegradedBankDead));

        let all_dead = StreamConfig::detector(bank(0.0, 0.0, 0.0, 0.0), 0);
        assert_eq!(all_dead.validate(), Err(KeystreamError::NoDetectableStates));
    }

    #[test]
    fn stream_dump_round_trips() {
        let cfg = StreamConfig::bernoulli(0.5, 42).with_mean_shift(100, 1.0 / 3.0);
        let bits = generate(&cfg, 333).unwrap();
        let header = StreamHeader::for_config(&cfg);

        let mut buf = Vec::new();
        write_stream(&mut buf, &header, &bits).unwrap();
        let (read_header, read_bits) = read_stream(buf.as_slice()).unwrap();
        assert_eq!(read_header, header);
        assert_eq!(read_bits, bits);
        assert_eq!(read_header.onset, Some(100));
    }

    #[test]
    fn stream_dump_rejects_garbage() {
        let bad = b"# seed=1 mode=bernoulli:0.5 onset=none\n01x1\n";
        let err = read_stream(&bad[..]).unwrap_err();
        assert!(matches!(
            err,
            KeystreamError::MalformedStreamFile { line: 2, .. }
        ));

        let no_header = b"0101\n";
        assert!(read_stream(&no_header[..]).is_err());

        let bad_seed = b"# seed=xyz mode=m onset=none\n";
        assert!(read_stream(&bad_seed[..]).is_err());
    }

    proptest! {
        #[test]
        fn prefix_property(seed in any::<u64>(), short in 0usize..150, extra in 0usize..150) {
            let cfg = StreamConfig::bernoulli(0.42, seed).with_mean_shift(60, 0.9);
            let small = generate(&cfg, short).unwrap();
            let large = generate(&cfg, short + extra).unwrap();
            prop_assert_eq!(&small[..], &large[..short]);
        }

        #[test]
        fn detector_prefix_property(seed in any::<u64>(), short in 0usize..120, extra in 0usize..120) {
            let cfg = StreamConfig::detector(DetectorBank::ideal(), seed)
                .with_detector_fault(40, DetectorId::Z0, 0.2);
            let small = generate(&cfg, short).unwrap();
            let large = generate(&cfg, short + extra).unwrap();
            prop_assert_eq!(&small[..], &large[..short]);
        }

        #[test]
        fn dump_round_trip_random(seed in any::<u64>(), count in 0usize..300) {
            let cfg = StreamConfig::bernoulli(0.5, seed);
            let bits = generate(&cfg, count).unwrap();
            let header = StreamHeader::for_config(&cfg);
            let mut buf = Vec::new();
            write_stream(&mut buf, &header, &bits).unwrap();
            let (h, b) = read_stream(buf.as_slice()).unwrap();
            prop_assert_eq!(h, header);
            prop_assert_eq!(b, bits);
        }
    }
}
