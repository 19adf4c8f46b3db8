//! Analytic symbol error rates.
//!
//! Per-symbol error probabilities are accumulated over the grid points (or
//! count vectors) outside each decision region in log space, so very small rates
//! keep their relative accuracy.

use crate::detectors::{decision_rule, NoFiltDetector};
use crate::error::{Error, Result};
use crate::model::{Constellation, DecisionRule, DetectionPmf, Detector, QuantizerSpec, SystemConfig};
use crate::special::{ln_kappa_likelihood, log_sum_exp, q_function, LnFactorials, LogSumExp};
use crate::stats::{composition_count, compositions_with_last, level_pmfs};
use rayon::prelude::*;
use serde::Serialize;

/// Error rate of one detector at one SNR.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SerPoint {
    pub snr_db: f64,
    pub detector: Detector,
    /// Square-QAM symbol error rate.
    pub ser: f64,
    /// Error rate of one real component (the ASK constellation).
    pub ser_component: f64,
    /// A threshold used the midpoint fallback.
    pub fallback: bool,
}

/// Minimum of the SER over an SNR grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MinSer {
    pub ser: f64,
    pub snr_db: f64,
}

/// Square-QAM error rate from the per-component rate, `2p - p^2`.
pub fn qam_ser(ser_component: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&ser_component) {
        return Err(Error::ProbabilityDomain(ser_component));
    }
    Ok(ser_component * (2.0 - ser_component))
}

/// Inclusive grid from `start` to `stop` in steps of `step`, values rounded to
/// 1e-9 so decimal steps print cleanly.
pub fn snr_grid(start: f64, stop: f64, step: f64) -> Result<Vec<f64>> {
    if !(start.is_finite() && stop.is_finite() && step > 0.0) || stop < start {
        return Err(Error::InvalidConfig(format!(
            "bad SNR grid {start}..{stop} step {step}"
        )));
    }
    let n = ((stop - start) / step + 1e-9).floor() as usize;
    Ok((0..=n)
        .map(|i| ((start + i as f64 * step) * 1e9).round() / 1e9)
        .collect())
}

/// Per-symbol error probabilities of a threshold rule given the exact laws of `d`.
pub fn per_symbol_from_pmfs(pmfs: &[DetectionPmf], rule: &DecisionRule) -> Vec<f64> {
    let first = &pmfs[0];
    let len = first.len();
    let mut bounds = vec![0];
    bounds.extend(rule.grid_splits(first.oversampling(), first.quantizer()));
    bounds.push(len);
    pmfs.iter()
        .enumerate()
        .map(|(i, pmf)| {
            let (a, b) = (bounds[i], bounds[i + 1].max(bounds[i]));
            let lp = pmf.ln_probs();
            let outside: Vec<f64> = lp[..a].iter().chain(&lp[b..]).copied().collect();
            log_sum_exp(&outside).exp().clamp(0.0, 1.0)
        })
        .collect()
}

/// Per-symbol error probabilities of `nofilt`, by exhaustive scoring of the
/// count vectors. Fails if there are more than `cap` of them.
pub fn per_symbol_nofilt(
    cfg: &SystemConfig,
    spec: QuantizerSpec,
    constellation: &Constellation,
    cap: u128,
) -> Result<Vec<f64>> {
    let n = cfg.oversampling();
    let k = spec.levels();
    let count = composition_count(n, k);
    if count > cap {
        return Err(Error::EnumerationTooLarge { count, cap });
    }
    let det = NoFiltDetector::new(cfg, spec, constellation);
    let m = constellation.len();
    let table = LnFactorials::new(n);
    let blocks: Vec<Vec<f64>> = (0..=n as u32)
        .into_par_iter()
        .map(|last| {
            let mut err = vec![LogSumExp::default(); m];
            let mut scores = vec![0.0; m];
            for counts in compositions_with_last(n, k, last) {
                let coeff = table.ln_multinomial(&counts);
                for (s, lp) in scores.iter_mut().zip(det.level_ln_probs()) {
                    *s = coeff + ln_kappa_likelihood(&counts, lp);
                }
                let chosen = det.decide(&counts);
                for (i, &s) in scores.iter().enumerate() {
                    if i != chosen {
                        err[i].push(s);
                    }
                }
            }
            err.iter().map(|a| a.ln()).collect()
        })
        .collect();
    Ok((0..m)
        .map(|i| {
            let parts: Vec<f64> = blocks.iter().map(|b| b[i]).collect();
            log_sum_exp(&parts).exp().clamp(0.0, 1.0)
        })
        .collect())
}

/// Per-symbol error probabilities of the unquantized receiver: the `N`
/// observations are averaged without quantization and compared against the
/// midpoints between levels.
pub fn per_symbol_unquantized(cfg: &SystemConfig, constellation: &Constellation) -> Vec<f64> {
    let sigma = cfg.noise_std() / (cfg.oversampling() as f64).sqrt();
    let x = constellation.levels();
    (0..x.len())
        .map(|i| {
            let below = if i > 0 {
                q_function((x[i] - x[i - 1]) / (2.0 * sigma))
            } else {
                0.0
            };
            let above = if i + 1 < x.len() {
                q_function((x[i + 1] - x[i]) / (2.0 * sigma))
            } else {
                0.0
            };
            (below + above).min(1.0)
        })
        .collect()
}

/// Per-symbol error probabilities and the fallback flag for any detector.
pub fn per_symbol_errors(
    detector: Detector,
    cfg: &SystemConfig,
    spec: QuantizerSpec,
    constellation: &Constellation,
    cap: u128,
) -> Result<(Vec<f64>, bool)> {
    match detector {
        Detector::Nofilt => Ok((per_symbol_nofilt(cfg, spec, constellation, cap)?, false)),
        Detector::Unquantized => Ok((per_symbol_unquantized(cfg, constellation), false)),
        det => {
            let rule = decision_rule(det, cfg, spec, constellation)?;
            let pmfs = level_pmfs(cfg, spec, constellation);
            Ok((per_symbol_from_pmfs(&pmfs, &rule), rule.fallback()))
        }
    }
}

/// SER of `detector` at the operating point `cfg`.
pub fn analytic_ser(
    detector: Detector,
    cfg: &SystemConfig,
    spec: QuantizerSpec,
    constellation: &Constellation,
    cap: u128,
) -> Result<SerPoint> {
    let (per_symbol, fallback) = per_symbol_errors(detector, cfg, spec, constellation, cap)?;
    let ser_component = per_symbol.iter().sum::<f64>() / per_symbol.len() as f64;
    Ok(SerPoint {
        snr_db: cfg.snr_db(),
        detector,
        ser: qam_ser(ser_component)?,
        ser_component,
        fallback,
    })
}

/// SER of `detector` over `snr_db`, evaluated in parallel.
pub fn sweep(
    detector: Detector,
    oversampling: usize,
    spec: QuantizerSpec,
    constellation: &Constellation,
    snr_db: &[f64],
    cap: u128,
) -> Result<Vec<SerPoint>> {
    if snr_db.is_empty() {
        return Err(Error::EmptySnrGrid);
    }
    if detector == Detector::Nofilt {
        let count = composition_count(oversampling, spec.levels());
        if count > cap {
            return Err(Error::EnumerationTooLarge { count, cap });
        }
    }
    snr_db
        .par_iter()
        .map(|&snr| {
            let cfg = SystemConfig::from_snr_db(oversampling, snr, constellation)?;
            analytic_ser(detector, &cfg, spec, constellation, cap)
        })
        .collect()
}

/// Smallest SER over a sweep; ties go to the smallest SNR.
pub fn min_of_sweep(points: &[SerPoint]) -> Result<MinSer> {
    let mut best: Option<MinSer> = None;
    for p in points {
        let better = match best {
            None => true,
            Some(b) => p.ser < b.ser || (p.ser == b.ser && p.snr_db < b.snr_db),
        };
        if better {
            best = Some(MinSer {
                ser: p.ser,
                snr_db: p.snr_db,
            });
        }
    }
    best.ok_or(Error::EmptySnrGrid)
}

/// Minimum SER of `detector` over `snr_db`.
pub fn min_ser_over_snr(
    detector: Detector,
    oversampling: usize,
    spec: QuantizerSpec,
    constellation: &Constellation,
    snr_db: &[f64],
    cap: u128,
) -> Result<MinSer> {
    min_of_sweep(&sweep(detector, oversampling, spec, constellation, snr_db, cap)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::DEFAULT_ENUMERATION_CAP;
    use approx::assert_relative_eq;

    #[test]
    fn qam_combination() {
        assert_relative_eq!(qam_ser(0.1).unwrap(), 0.19, epsilon = 1e-15);
        assert_eq!(qam_ser(0.0).unwrap(), 0.0);
        assert!(matches!(qam_ser(1.5), Err(Error::ProbabilityDomain(_))));
        assert!(matches!(qam_ser(-0.1), Err(Error::ProbabilityDomain(_))));
    }

    #[test]
    fn grid_helper() {
        let g = snr_grid(-10.0, 40.0, 0.1).unwrap();
        assert_eq!(g.len(), 501);
        assert_eq!(g[156], 5.6);
        assert_eq!(*g.last().unwrap(), 40.0);
        assert!(snr_grid(1.0, 0.0, 0.1).is_err());
    }

    #[test]
    fn empty_grid_rejected() {
        let c = Constellation::square_qam(16).unwrap();
        let spec = QuantizerSpec::new(1, 2.0).unwrap();
        assert_eq!(
            sweep(Detector::Ml, 4, spec, &c, &[], 100).unwrap_err(),
            Error::EmptySnrGrid
        );
    }

    #[test]
    fn per_symbol_ml_matches_direct_sum() {
        let c = Constellation::square_qam(16).unwrap();
        let spec = QuantizerSpec::new(2, 4.0).unwrap();
        let cfg = SystemConfig::from_snr_db(8, 6.0, &c).unwrap();
        let (errs, _) = per_symbol_errors(Detector::Ml, &cfg, spec, &c, DEFAULT_ENUMERATION_CAP).unwrap();
        let rule = decision_rule(Detector::Ml, &cfg, spec, &c).unwrap();
        for (i, &x) in c.levels().iter().enumerate() {
            let pmf = crate::stats::pmf_of_d(x, &cfg, spec);
            let correct: f64 = (0..pmf.len())
                .filter(|&j| rule.detect(pmf.d(j)).index == i)
                .map(|j| pmf.prob(j))
                .sum();
            assert_relative_eq!(errs[i], 1.0 - correct, epsilon = 1e-12);
        }
    }

    #[test]
    fn nofilt_equals_ml_one_bit() {
        let c = Constellation::square_qam(16).unwrap();
        let spec = QuantizerSpec::new(1, 2.0).unwrap();
        for &snr in &[0.0, 5.6, 15.0] {
            let cfg = SystemConfig::from_snr_db(32, snr, &c).unwrap();
            let ml = analytic_ser(Detector::Ml, &cfg, spec, &c, 1000).unwrap();
            let nf = analytic_ser(Detector::Nofilt, &cfg, spec, &c, 1000).unwrap();
            assert_eq!(ml.ser, nf.ser);
        }
    }

    #[test]
    fn nofilt_budget() {
        let c = Constellation::square_qam(16).unwrap();
        let spec = QuantizerSpec::new(3, 1.0).unwrap();
        let cfg = SystemConfig::from_snr_db(64, 5.0, &c).unwrap();
        let e = analytic_ser(Detector::Nofilt, &cfg, spec, &c, 1000).unwrap_err();
        assert!(e.is_budget());
    }

    #[test]
    fn unquantized_matches_closed_form() {
        let c = Constellation::square_qam(16).unwrap();
        let cfg = SystemConfig::from_snr_db(4, 10.0, &c).unwrap();
        let sigma = cfg.noise_std() / 2.0;
        let p = analytic_ser(Detector::Unquantized, &cfg, QuantizerSpec::new(1, 2.0).unwrap(), &c, 0).unwrap();
        // 4-ASK with spacing 2: 2 (M-1)/M Q(1/sigma)
        assert_relative_eq!(p.ser_component, 1.5 * q_function(1.0 / sigma), max_relative = 1e-12);
    }
}
