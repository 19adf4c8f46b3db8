//! Uniform midrise `b`-bit quantizer: transfer law, decision regions, per-level
//! probabilities under Gaussian noise and conditional output moments.
//!
//! Level indices are zero-based here: level `k` has value
//! `z(k) = (k + 1/2 - K/2) * step` for `k = 0..K`.

use crate::error::{Error, Result};
use crate::model::QuantizerSpec;
use crate::special::{ln_gaussian_interval, q_function};

/// Per-level probabilities and output moments for one input amplitude.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelStats {
    pub probs: Vec<f64>,
    pub mean: f64,
    pub variance: f64,
}

/// Index of the level a real sample falls into. Samples on a threshold go to the
/// upper level and zero maps to the first positive level.
pub fn quantize_index(y: f64, spec: QuantizerSpec) -> usize {
    let k = spec.levels() as f64;
    let half = k / 2.0;
    let t = (y / spec.step()).clamp(-half - 1.0, half + 1.0).floor() + half;
    t.clamp(0.0, k - 1.0) as usize
}

/// Quantizer output for sample `y`.
pub fn quantize(y: f64, spec: QuantizerSpec) -> f64 {
    level_value_unchecked(quantize_index(y, spec), spec)
}

#[inline]
pub(crate) fn level_value_unchecked(k: usize, spec: QuantizerSpec) -> f64 {
    (k as f64 + 0.5 - spec.levels() as f64 / 2.0) * spec.step()
}

fn check_level(k: usize, spec: QuantizerSpec) -> Result<()> {
    if k >= spec.levels() {
        Err(Error::LevelOutOfRange {
            index: k,
            levels: spec.levels(),
        })
    } else {
        Ok(())
    }
}

/// Output value `z(k)` of level `k`.
pub fn level_value(k: usize, spec: QuantizerSpec) -> Result<f64> {
    check_level(k, spec)?;
    Ok(level_value_unchecked(k, spec))
}

/// All `K` output values in increasing order.
pub fn level_values(spec: QuantizerSpec) -> Vec<f64> {
    (0..spec.levels()).map(|k| level_value_unchecked(k, spec)).collect()
}

#[inline]
fn thresholds_unchecked(k: usize, spec: QuantizerSpec) -> (f64, f64) {
    let z = level_value_unchecked(k, spec);
    let half = spec.step() / 2.0;
    let lower = if k == 0 { f64::NEG_INFINITY } else { z - half };
    let upper = if k + 1 == spec.levels() { f64::INFINITY } else { z + half };
    (lower, upper)
}

/// Decision region `[lower, upper)` of level `k`; the outermost regions are unbounded.
pub fn thresholds(k: usize, spec: QuantizerSpec) -> Result<(f64, f64)> {
    check_level(k, spec)?;
    Ok(thresholds_unchecked(k, spec))
}

/// `ln P_k(x)` for every level, given input amplitude `x` and per-component noise
/// standard deviation `s`.
///
/// Negative inputs are evaluated through the mirror image of `-x`, so the result is
/// exactly reflection-symmetric.
pub fn ln_level_probabilities(x: f64, s: f64, spec: QuantizerSpec) -> Vec<f64> {
    if x < 0.0 {
        let mut v = ln_level_probabilities(-x, s, spec);
        v.reverse();
        return v;
    }
    (0..spec.levels())
        .map(|k| {
            let (lo, up) = thresholds_unchecked(k, spec);
            ln_gaussian_interval((lo - x) / s, (up - x) / s)
        })
        .collect()
}

/// `P_k(x)` for every level.
pub fn level_probabilities(x: f64, s: f64, spec: QuantizerSpec) -> Vec<f64> {
    ln_level_probabilities(x, s, spec).into_iter().map(f64::exp).collect()
}

/// `P_k(x) = Q((tau_low - x)/s) - Q((tau_up - x)/s)`.
pub fn level_probability(k: usize, x: f64, s: f64, spec: QuantizerSpec) -> Result<f64> {
    Ok(ln_level_probability(k, x, s, spec)?.exp())
}

pub fn ln_level_probability(k: usize, x: f64, s: f64, spec: QuantizerSpec) -> Result<f64> {
    check_level(k, spec)?;
    if x < 0.0 {
        return ln_level_probability(spec.levels() - 1 - k, -x, s, spec);
    }
    let (lo, up) = thresholds_unchecked(k, spec);
    Ok(ln_gaussian_interval((lo - x) / s, (up - x) / s))
}

/// Conditional mean of one quantized observation,
/// `step * (sum_{k<K-1} Q((tau_up(k) - x)/s) - (K-1)/2)`.
pub fn cond_mean(x: f64, s: f64, spec: QuantizerSpec) -> f64 {
    if x < 0.0 {
        return -cond_mean(-x, s, spec);
    }
    let k = spec.levels();
    let tail: f64 = (0..k - 1)
        .map(|i| q_function((thresholds_unchecked(i, spec).1 - x) / s))
        .sum();
    spec.step() * (tail - (k as f64 - 1.0) / 2.0)
}

/// Conditional variance of one quantized observation,
/// `step^2 * (sum_{k<K-1} (2k - K + 2) Q((tau_up(k) - x)/s) + ((K-1)/2)^2) - mean^2`
/// (zero-based `k`), clamped at zero against cancellation.
pub fn cond_variance(x: f64, s: f64, spec: QuantizerSpec) -> f64 {
    if x < 0.0 {
        return cond_variance(-x, s, spec);
    }
    let k = spec.levels();
    let kf = k as f64;
    let weighted: f64 = (0..k - 1)
        .map(|i| {
            let w = 2.0 * (i as f64 + 1.0) - kf;
            w * q_function((thresholds_unchecked(i, spec).1 - x) / s)
        })
        .sum();
    let half = (kf - 1.0) / 2.0;
    let mean = cond_mean(x, s, spec);
    let v = spec.step() * spec.step() * (weighted + half * half) - mean * mean;
    v.max(0.0)
}

/// Level probabilities with the closed-form mean and variance.
pub fn level_stats(x: f64, s: f64, spec: QuantizerSpec) -> LevelStats {
    LevelStats {
        probs: level_probabilities(x, s, spec),
        mean: cond_mean(x, s, spec),
        variance: cond_variance(x, s, spec),
    }
}
