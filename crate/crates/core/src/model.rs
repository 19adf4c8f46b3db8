//! Domain types shared by every analysis stage.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// Ordered quadrature-component amplitude set of a square QAM constellation.
///
/// Every QAM symbol is a pair of these levels, so an `M'`-level set describes an
/// `M'^2`-ary QAM alphabet.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Constellation {
    levels: Vec<f64>,
}

impl Constellation {
    /// Builds a constellation from strictly increasing finite levels.
    ///
    /// A single level is accepted as a degenerate alphabet (zero error rate).
    pub fn new(levels: Vec<f64>) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::InvalidConstellation("no levels".into()));
        }
        if let Some(v) = levels.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidConstellation(format!("non-finite level {v}")));
        }
        if let Some(w) = levels.windows(2).find(|w| w[0] >= w[1]) {
            return Err(Error::InvalidConstellation(format!(
                "levels not strictly increasing at {} >= {}",
                w[0], w[1]
            )));
        }
        let c = Constellation { levels };
        let p = c.average_power();
        if !(p > 0.0 && p.is_finite()) {
            return Err(Error::InvalidConstellation(format!(
                "average power {p} is not positive and finite"
            )));
        }
        Ok(c)
    }

    /// Builds `{±a_1, ..., ±a_n}` from the positive half.
    pub fn symmetric(positive: &[f64]) -> Result<Self> {
        let mut levels: Vec<f64> = positive.iter().rev().map(|a| -a).collect();
        levels.extend_from_slice(positive);
        Constellation::new(levels)
    }

    /// Equidistant `M'`-ASK levels `{±1, ±3, ...}`.
    pub fn equidistant(m: usize) -> Result<Self> {
        let levels = (0..m).map(|i| (2 * i) as f64 - (m as f64 - 1.0)).collect();
        Constellation::new(levels)
    }

    /// Classical square QAM of order `m` (16, 36, 64, ...).
    pub fn square_qam(order: usize) -> Result<Self> {
        let side = (order as f64).sqrt().round() as usize;
        if side * side != order || side < 2 {
            return Err(Error::InvalidConstellation(format!(
                "{order} is not a square QAM order"
            )));
        }
        Constellation::equidistant(side)
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    /// Number of quadrature-component levels `M'`.
    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    /// QAM order `M = M'^2`.
    pub fn qam_order(&self) -> usize {
        self.levels.len() * self.levels.len()
    }

    /// Average QAM symbol power `2 * mean(levels^2)`.
    pub fn average_power(&self) -> f64 {
        2.0 * self.levels.iter().map(|x| x * x).sum::<f64>() / self.levels.len() as f64
    }

    /// True when `levels[i] == -levels[M'-1-i]` exactly.
    pub fn is_symmetric(&self) -> bool {
        let n = self.levels.len();
        (0..n).all(|i| self.levels[i] == -self.levels[n - 1 - i])
    }
}

impl<'de> Deserialize<'de> for Constellation {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let levels = Vec::<f64>::deserialize(d)?;
        Constellation::new(levels).map_err(serde::de::Error::custom)
    }
}

/// Uniform midrise quantizer with `2^bits` levels and step `step`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantizerSpec {
    bits: u32,
    step: f64,
}

impl QuantizerSpec {
    pub const MAX_BITS: u32 = 16;

    pub fn new(bits: u32, step: f64) -> Result<Self> {
        if bits == 0 || bits > Self::MAX_BITS {
            return Err(Error::InvalidQuantizer(format!(
                "bits must be in 1..={}, got {bits}",
                Self::MAX_BITS
            )));
        }
        if !(step > 0.0 && step.is_finite()) {
            return Err(Error::InvalidQuantizer(format!(
                "step must be positive and finite, got {step}"
            )));
        }
        Ok(QuantizerSpec { bits, step })
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    /// Number of output levels `K = 2^b`.
    pub fn levels(&self) -> usize {
        1usize << self.bits
    }
}

/// Oversampling factor together with the per-branch noise level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SystemConfig {
    oversampling: usize,
    snr_db: f64,
    noise_std: f64,
}

impl SystemConfig {
    /// Derives the per-component noise standard deviation from the SNR and the
    /// actual average power of `constellation`: `s = sqrt(sigma_x^2 / (2 SNR))`.
    pub fn from_snr_db(oversampling: usize, snr_db: f64, constellation: &Constellation) -> Result<Self> {
        if !snr_db.is_finite() {
            return Err(Error::InvalidConfig(format!("snr_db must be finite, got {snr_db}")));
        }
        let snr = 10f64.powf(snr_db / 10.0);
        let noise_std = (constellation.average_power() / (2.0 * snr)).sqrt();
        SystemConfig::checked(oversampling, snr_db, noise_std)
    }

    /// Uses an explicit per-component noise standard deviation.
    pub fn from_noise_std(oversampling: usize, noise_std: f64, constellation: &Constellation) -> Result<Self> {
        let snr = constellation.average_power() / (2.0 * noise_std * noise_std);
        SystemConfig::checked(oversampling, 10.0 * snr.log10(), noise_std)
    }

    fn checked(oversampling: usize, snr_db: f64, noise_std: f64) -> Result<Self> {
        if oversampling == 0 {
            return Err(Error::InvalidConfig("oversampling factor must be >= 1".into()));
        }
        if !(noise_std > 0.0 && noise_std.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "noise standard deviation must be positive and finite, got {noise_std}"
            )));
        }
        Ok(SystemConfig {
            oversampling,
            snr_db,
            noise_std,
        })
    }

    /// Number of receive branches `N`.
    pub fn oversampling(&self) -> usize {
        self.oversampling
    }

    pub fn snr_db(&self) -> f64 {
        self.snr_db
    }

    pub fn snr_linear(&self) -> f64 {
        10f64.powf(self.snr_db / 10.0)
    }

    /// Per-component noise standard deviation `s` of one branch.
    pub fn noise_std(&self) -> f64 {
        self.noise_std
    }
}

/// Number of observations per quantization level across the `N` branches.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct KappaVector(Vec<u32>);

impl KappaVector {
    pub fn new(counts: Vec<u32>) -> Self {
        KappaVector(counts)
    }

    /// Validates that the counts fit `levels` levels and sum to `n`.
    pub fn checked(counts: Vec<u32>, n: usize, levels: usize) -> Result<Self> {
        if counts.len() != levels {
            return Err(Error::InvalidKappa(format!(
                "expected {levels} counts, got {}",
                counts.len()
            )));
        }
        let total: u64 = counts.iter().map(|&c| c as u64).sum();
        if total != n as u64 {
            return Err(Error::InvalidKappa(format!("counts sum to {total}, expected {n}")));
        }
        Ok(KappaVector(counts))
    }

    pub fn counts(&self) -> &[u32] {
        &self.0
    }

    pub fn total(&self) -> u64 {
        self.0.iter().map(|&c| c as u64).sum()
    }

    /// Index of the detection-variable grid point this vector maps to:
    /// `sum_k kappa_k * k` with zero-based level indices.
    pub fn grid_index(&self) -> usize {
        self.0.iter().enumerate().map(|(k, &c)| k * c as usize).sum()
    }
}

/// Exact distribution of the averaged detection variable for one input amplitude.
///
/// Grid point `j` sits at `z(1) + j * step / N`; values are held as log-probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionPmf {
    oversampling: usize,
    quantizer: QuantizerSpec,
    ln_probs: Vec<f64>,
}

impl DetectionPmf {
    pub(crate) fn from_ln_probs(oversampling: usize, quantizer: QuantizerSpec, ln_probs: Vec<f64>) -> Self {
        debug_assert_eq!(ln_probs.len(), grid_len(oversampling, quantizer.levels()));
        DetectionPmf {
            oversampling,
            quantizer,
            ln_probs,
        }
    }

    pub fn oversampling(&self) -> usize {
        self.oversampling
    }

    pub fn quantizer(&self) -> QuantizerSpec {
        self.quantizer
    }

    /// Number of grid points `N(K-1)+1`.
    pub fn len(&self) -> usize {
        self.ln_probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ln_probs.is_empty()
    }

    /// Detection-variable value at grid index `j`.
    pub fn d(&self, j: usize) -> f64 {
        grid_value(j, self.oversampling, self.quantizer)
    }

    pub fn grid(&self) -> Vec<f64> {
        (0..self.len()).map(|j| self.d(j)).collect()
    }

    /// Spacing between grid points, `step / N`.
    pub fn spacing(&self) -> f64 {
        self.quantizer.step() / self.oversampling as f64
    }

    pub fn ln_probs(&self) -> &[f64] {
        &self.ln_probs
    }

    pub fn prob(&self, j: usize) -> f64 {
        self.ln_probs[j].exp()
    }

    pub fn probs(&self) -> Vec<f64> {
        self.ln_probs.iter().map(|v| v.exp()).collect()
    }

    pub fn total(&self) -> f64 {
        self.probs().iter().sum()
    }

    pub fn mean(&self) -> f64 {
        (0..self.len()).map(|j| self.d(j) * self.prob(j)).sum()
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        (0..self.len())
            .map(|j| {
                let e = self.d(j) - m;
                e * e * self.prob(j)
            })
            .sum()
    }

    /// The same distribution reflected about `d = 0`.
    pub fn mirrored(&self) -> DetectionPmf {
        let mut ln_probs = self.ln_probs.clone();
        ln_probs.reverse();
        DetectionPmf { ln_probs, ..*self }
    }
}

/// Number of detection-variable grid points `N(K-1)+1`.
pub fn grid_len(oversampling: usize, levels: usize) -> usize {
    oversampling * (levels - 1) + 1
}

/// `d_j = (2j - N(K-1)) * step / (2N)`, exact for grid points symmetric about 0.
pub fn grid_value(j: usize, oversampling: usize, q: QuantizerSpec) -> f64 {
    let n = oversampling as f64;
    let span = (oversampling * (q.levels() - 1)) as f64;
    (2.0 * j as f64 - span) * q.step() / (2.0 * n)
}

/// Symbol detector variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Detector {
    /// Exact maximum likelihood on the averaged detection variable.
    Ml,
    /// Gaussian (central-limit) approximation of the detection-variable law.
    Clt,
    /// Midpoints of the conditional means.
    Mindist,
    /// Maximum likelihood on the full observation counts, no averaging filter.
    Nofilt,
    /// Unquantized reception benchmark with the same oversampling.
    Unquantized,
}

impl Detector {
    pub const ALL: [Detector; 5] = [
        Detector::Ml,
        Detector::Clt,
        Detector::Mindist,
        Detector::Nofilt,
        Detector::Unquantized,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Detector::Ml => "ml",
            Detector::Clt => "clt",
            Detector::Mindist => "mindist",
            Detector::Nofilt => "nofilt",
            Detector::Unquantized => "unquantized",
        }
    }

    /// Detectors that act by comparing `d` against thresholds.
    pub fn is_threshold_rule(&self) -> bool {
        matches!(self, Detector::Ml | Detector::Clt | Detector::Mindist)
    }
}

impl fmt::Display for Detector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Detector {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Detector::ALL
            .iter()
            .copied()
            .find(|d| d.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::UnsupportedDetector(s.to_string()))
    }
}

/// Ordered thresholds partitioning the detection-variable axis into `M'` regions.
///
/// Region `i` is `[b_{i-1}, b_i)`, the first starts at the lowest grid value and
/// the last is closed at the highest grid value.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecisionRule {
    pub(crate) detector: Detector,
    pub(crate) thresholds: Vec<f64>,
    pub(crate) d_min: f64,
    pub(crate) d_max: f64,
    pub(crate) fallback: bool,
}

/// Outcome of a threshold decision.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Decision {
    pub index: usize,
    /// The input was outside the detection-variable range and was clamped.
    pub clamped: bool,
}

impl DecisionRule {
    /// Builds a rule after checking that the thresholds are non-decreasing.
    ///
    /// Equal neighbours leave an empty decision region, which happens when
    /// several inputs saturate the quantizer identically.
    pub fn new(detector: Detector, thresholds: Vec<f64>, d_min: f64, d_max: f64) -> Result<Self> {
        if !detector.is_threshold_rule() {
            return Err(Error::UnsupportedDetector(detector.to_string()));
        }
        for (i, w) in thresholds.windows(2).enumerate() {
            if w[1].is_nan() || w[0].is_nan() || w[1] < w[0] {
                return Err(Error::NonMonotoneCrossing {
                    index: i + 1,
                    value: w[1],
                });
            }
        }
        Ok(DecisionRule {
            detector,
            thresholds,
            d_min,
            d_max,
            fallback: false,
        })
    }

    pub fn detector(&self) -> Detector {
        self.detector
    }

    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }

    /// True when at least one threshold fell back to the midpoint of means.
    pub fn fallback(&self) -> bool {
        self.fallback
    }

    pub fn d_range(&self) -> (f64, f64) {
        (self.d_min, self.d_max)
    }

    /// Zero-based index of the region containing `d`.
    pub fn detect(&self, d: f64) -> Decision {
        let clamped = d < self.d_min || d > self.d_max;
        let index = self.thresholds.partition_point(|&b| b <= d);
        Decision { index, clamped }
    }

    /// For each threshold, the number of grid points `d_j` lying strictly below it.
    ///
    /// Thresholds within `1e-9` grid spacings of a grid point are snapped to it, so
    /// thresholds produced on the grid map back exactly.
    pub fn grid_splits(&self, oversampling: usize, q: QuantizerSpec) -> Vec<usize> {
        let len = grid_len(oversampling, q.levels());
        let d0 = grid_value(0, oversampling, q);
        let spacing = q.step() / oversampling as f64;
        self.thresholds
            .iter()
            .map(|&b| {
                if b == f64::INFINITY {
                    return len;
                }
                if b == f64::NEG_INFINITY {
                    return 0;
                }
                let t = (b - d0) / spacing;
                let r = t.round();
                let s = if (t - r).abs() < 1e-9 { r } else { t.ceil() };
                s.clamp(0.0, len as f64) as usize
            })
            .collect()
    }
}
