//! Symbol detectors operating on the quantized observations of one symbol.
//!
//! The three threshold rules (`ml`, `clt`, `mindist`) decide from the averaged
//! detection variable `d`; `nofilt` uses the full count vector.

use crate::error::{Error, Result};
use crate::model::{grid_len, grid_value, Constellation, DecisionRule, DetectionPmf, Detector, KappaVector, QuantizerSpec, SystemConfig};
use crate::quantizer::ln_level_probabilities;
use crate::special::{ln_kappa_likelihood, LnFactorials};
use crate::stats::{composition_count, d_moments, enumerate_compositions, level_pmfs, CltDensity};

fn d_bounds(oversampling: usize, spec: QuantizerSpec) -> (f64, f64) {
    let len = grid_len(oversampling, spec.levels());
    (
        grid_value(0, oversampling, spec),
        grid_value(len - 1, oversampling, spec),
    )
}

/// Maximum-likelihood thresholds on the exact law of `d`.
pub fn ml_thresholds(cfg: &SystemConfig, spec: QuantizerSpec, constellation: &Constellation) -> Result<DecisionRule> {
    let pmfs = level_pmfs(cfg, spec, constellation);
    ml_rule_from_pmfs(&pmfs)
}

/// Threshold `b_i` is the smallest grid value where the likelihood of level
/// `i+1` reaches that of level `i`. Grid points where both likelihoods are
/// exactly zero carry no information and are skipped. Without a crossing the
/// threshold sits one grid step above the range of `d`.
pub fn ml_rule_from_pmfs(pmfs: &[DetectionPmf]) -> Result<DecisionRule> {
    let first = pmfs
        .first()
        .ok_or_else(|| Error::InvalidConstellation("no levels".into()))?;
    let (n, spec) = (first.oversampling(), first.quantizer());
    let (d_min, d_max) = d_bounds(n, spec);
    let len = first.len();
    let thresholds = pmfs
        .windows(2)
        .map(|w| {
            let (lo, hi) = (w[0].ln_probs(), w[1].ln_probs());
            let j = (0..len)
                .find(|&j| hi[j] >= lo[j] && hi[j] > f64::NEG_INFINITY)
                .unwrap_or(len);
            grid_value(j, n, spec)
        })
        .collect();
    DecisionRule::new(Detector::Ml, thresholds, d_min, d_max)
}

/// Crossing of two Gaussian densities between their means.
///
/// Returns `None` when the variances are degenerate or no root lies between the
/// means.
pub fn gaussian_crossing(a: &CltDensity, b: &CltDensity) -> Option<f64> {
    let (m1, v1, m2, v2) = (a.mean, a.variance, b.mean, b.variance);
    if !(v1 > 0.0 && v2 > 0.0) {
        return None;
    }
    let (lo, hi) = if m1 <= m2 { (m1, m2) } else { (m2, m1) };
    if ((v1 - v2) / v1.max(v2)).abs() < 1e-12 {
        return Some(0.5 * (m1 + m2));
    }
    // (d-m1)^2/v1 + ln v1 = (d-m2)^2/v2 + ln v2
    let qa = 1.0 / v1 - 1.0 / v2;
    let qb = -2.0 * (m1 / v1 - m2 / v2);
    let qc = m1 * m1 / v1 - m2 * m2 / v2 + (v1 / v2).ln();
    let disc = qb * qb - 4.0 * qa * qc;
    if disc < 0.0 {
        return None;
    }
    let t = -0.5 * (qb + qb.signum() * disc.sqrt());
    let mut roots = Vec::with_capacity(2);
    if qa != 0.0 {
        roots.push(t / qa);
    }
    if t != 0.0 {
        roots.push(qc / t);
    }
    let mid = 0.5 * (m1 + m2);
    roots
        .into_iter()
        .filter(|r| r.is_finite() && *r >= lo && *r <= hi)
        .min_by(|x, y| (x - mid).abs().total_cmp(&(y - mid).abs()))
}

/// Thresholds at the crossings of the Gaussian approximations of `d`.
///
/// Pairs with no crossing between the means use the midpoint, and the rule is
/// flagged via [`DecisionRule::fallback`].
pub fn clt_thresholds(cfg: &SystemConfig, spec: QuantizerSpec, constellation: &Constellation) -> Result<DecisionRule> {
    let dens: Vec<CltDensity> = constellation
        .levels()
        .iter()
        .map(|&x| d_moments(x, cfg, spec))
        .collect();
    let mut fallback = false;
    let thresholds = dens
        .windows(2)
        .map(|w| {
            gaussian_crossing(&w[0], &w[1]).unwrap_or_else(|| {
                fallback = true;
                0.5 * (w[0].mean + w[1].mean)
            })
        })
        .collect();
    let (d_min, d_max) = d_bounds(cfg.oversampling(), spec);
    let mut rule = DecisionRule::new(Detector::Clt, thresholds, d_min, d_max)?;
    rule.fallback = fallback;
    Ok(rule)
}

/// Midpoints between consecutive conditional means of `d`.
pub fn mindist_thresholds(cfg: &SystemConfig, spec: QuantizerSpec, constellation: &Constellation) -> Result<DecisionRule> {
    let means: Vec<f64> = constellation
        .levels()
        .iter()
        .map(|&x| d_moments(x, cfg, spec).mean)
        .collect();
    let thresholds = means.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
    let (d_min, d_max) = d_bounds(cfg.oversampling(), spec);
    DecisionRule::new(Detector::Mindist, thresholds, d_min, d_max)
}

/// Threshold rule for one of the threshold detectors.
pub fn decision_rule(
    detector: Detector,
    cfg: &SystemConfig,
    spec: QuantizerSpec,
    constellation: &Constellation,
) -> Result<DecisionRule> {
    match detector {
        Detector::Ml => ml_thresholds(cfg, spec, constellation),
        Detector::Clt => clt_thresholds(cfg, spec, constellation),
        Detector::Mindist => mindist_thresholds(cfg, spec, constellation),
        other => Err(Error::UnsupportedDetector(other.to_string())),
    }
}

/// Count-vector likelihood detector.
#[derive(Debug, Clone)]
pub struct NoFiltDetector {
    ln_probs: Vec<Vec<f64>>,
    table: LnFactorials,
}

impl NoFiltDetector {
    pub fn new(cfg: &SystemConfig, spec: QuantizerSpec, constellation: &Constellation) -> Self {
        let s = cfg.noise_std();
        NoFiltDetector {
            ln_probs: constellation
                .levels()
                .iter()
                .map(|&x| ln_level_probabilities(x, s, spec))
                .collect(),
            table: LnFactorials::new(cfg.oversampling()),
        }
    }

    /// Per-symbol, per-quantizer-level log-probabilities.
    pub fn level_ln_probs(&self) -> &[Vec<f64>] {
        &self.ln_probs
    }

    /// Index of the symbol maximising `sum_k kappa_k ln P_k(x)`.
    ///
    /// Ties go to the larger index, the same side the likelihood-crossing
    /// thresholds assign a tie to. The multinomial coefficient is included so the
    /// scores are bitwise the ones the exact law of `d` is built from.
    pub fn decide(&self, counts: &[u32]) -> usize {
        let coeff = self.table.ln_multinomial(counts);
        let mut best = 0;
        let mut best_ll = f64::NEG_INFINITY;
        for (i, lp) in self.ln_probs.iter().enumerate() {
            let ll = coeff + ln_kappa_likelihood(counts, lp);
            if ll >= best_ll {
                best = i;
                best_ll = ll;
            }
        }
        best
    }

    pub fn detect(&self, kappa: &KappaVector) -> usize {
        self.decide(kappa.counts())
    }
}

/// Count vectors grouped by the symbol `nofilt` decides for them.
pub fn nofilt_decision_sets(
    cfg: &SystemConfig,
    spec: QuantizerSpec,
    constellation: &Constellation,
    cap: u128,
) -> Result<Vec<Vec<KappaVector>>> {
    let det = NoFiltDetector::new(cfg, spec, constellation);
    let mut sets = vec![Vec::new(); constellation.len()];
    for kv in enumerate_compositions(cfg.oversampling(), spec.levels(), cap)? {
        sets[det.detect(&kv)].push(kv);
    }
    Ok(sets)
}

/// Number of count vectors `nofilt` must score for one symbol.
pub fn nofilt_work(cfg: &SystemConfig, spec: QuantizerSpec) -> u128 {
    composition_count(cfg.oversampling(), spec.levels())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn setup(n: usize, snr_db: f64, qam: usize) -> (SystemConfig, Constellation) {
        let c = Constellation::square_qam(qam).unwrap();
        (SystemConfig::from_snr_db(n, snr_db, &c).unwrap(), c)
    }

    #[test]
    fn thresholds_antisymmetric_up_to_one_step() {
        for &(b, step, n) in &[(1u32, 2.0, 64usize), (2, 4.0, 16), (3, 1.0, 8)] {
            let spec = QuantizerSpec::new(b, step).unwrap();
            for &snr in &[0.0, 8.0, 20.0] {
                let (cfg, c) = setup(n, snr, 16);
                let h = step / n as f64;
                let ml = ml_thresholds(&cfg, spec, &c).unwrap();
                let t = ml.thresholds();
                for i in 0..t.len() {
                    let s = t[i] + t[t.len() - 1 - i];
                    assert!(s.abs() < 1e-12 || (s - h).abs() < 1e-12, "ml sum {s}");
                }
                for det in [Detector::Clt, Detector::Mindist] {
                    let r = decision_rule(det, &cfg, spec, &c).unwrap();
                    let t = r.thresholds();
                    for i in 0..t.len() {
                        assert!((t[i] + t[t.len() - 1 - i]).abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn mindist_example() {
        let c = Constellation::equidistant(4).unwrap();
        let spec = QuantizerSpec::new(1, 2.0).unwrap();
        let cfg = SystemConfig::from_noise_std(1, 1.0, &c).unwrap();
        let r = mindist_thresholds(&cfg, spec, &c).unwrap();
        // mu(1) = 1 - 2 Q(1), mu(3) = 1 - 2 Q(3)
        let q = crate::special::q_function;
        let expected = 0.5 * ((1.0 - 2.0 * q(1.0)) + (1.0 - 2.0 * q(3.0)));
        assert_relative_eq!(r.thresholds()[2], expected, epsilon = 1e-12);
        assert_relative_eq!(r.thresholds()[2], 0.8399949, epsilon = 1e-7);
        assert_eq!(r.thresholds()[1], 0.0);
    }

    #[test]
    fn plus_one_plus_three_thresholds_at_zero_db() {
        let (cfg, c) = setup(64, 0.0, 16);
        let spec = QuantizerSpec::new(1, 2.0).unwrap();
        let ml = ml_thresholds(&cfg, spec, &c).unwrap().thresholds()[2];
        let clt = clt_thresholds(&cfg, spec, &c).unwrap().thresholds()[2];
        let md = mindist_thresholds(&cfg, spec, &c).unwrap().thresholds()[2];
        assert!(ml > md && clt > md, "{ml} {clt} {md}");
        assert_eq!(ml, 0.625);
        assert_relative_eq!(clt, 0.6317569406, epsilon = 1e-9);
        assert_relative_eq!(md, 0.5827833296, epsilon = 1e-9);
    }

    #[test]
    fn gaussian_crossing_cases() {
        let a = CltDensity { mean: 0.0, variance: 1.0 };
        let b = CltDensity { mean: 2.0, variance: 1.0 };
        assert_eq!(gaussian_crossing(&a, &b), Some(1.0));
        let c = CltDensity { mean: 2.0, variance: 0.25 };
        let r = gaussian_crossing(&a, &c).unwrap();
        // densities equal at the crossing
        let pdf = |d: f64, g: &CltDensity| (-(d - g.mean).powi(2) / (2.0 * g.variance)).exp() / g.variance.sqrt();
        assert_relative_eq!(pdf(r, &a), pdf(r, &c), max_relative = 1e-10);
        assert!(r > 0.0 && r < 2.0);
        let z = CltDensity { mean: 1.0, variance: 0.0 };
        assert_eq!(gaussian_crossing(&a, &z), None);
    }

    #[test]
    fn clt_falls_back_on_degenerate_variance() {
        // at very high SNR the 1-bit outputs are deterministic
        let (cfg, c) = setup(4, 200.0, 16);
        let spec = QuantizerSpec::new(1, 2.0).unwrap();
        let r = clt_thresholds(&cfg, spec, &c).unwrap();
        assert!(r.fallback());
    }

    #[test]
    fn nofilt_matches_ml_for_one_bit() {
        let spec = QuantizerSpec::new(1, 2.0).unwrap();
        for &snr in &[-3.0, 5.0, 12.0] {
            let (cfg, c) = setup(16, snr, 16);
            let ml = ml_thresholds(&cfg, spec, &c).unwrap();
            let nf = NoFiltDetector::new(&cfg, spec, &c);
            for kv in enumerate_compositions(16, 2, 1000).unwrap() {
                let d = crate::stats::detection_value(&kv, spec);
                assert_eq!(nf.detect(&kv), ml.detect(d).index, "snr {snr} kappa {:?}", kv.counts());
            }
        }
    }

    #[test]
    fn decision_sets_partition() {
        let spec = QuantizerSpec::new(2, 4.0).unwrap();
        let (cfg, c) = setup(4, 10.0, 16);
        let sets = nofilt_decision_sets(&cfg, spec, &c, 1000).unwrap();
        let total: usize = sets.iter().map(|s| s.len()).sum();
        assert_eq!(total as u128, nofilt_work(&cfg, spec));
    }
}
