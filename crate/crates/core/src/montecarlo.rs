//! Trial-based simulation of the oversampled, quantized receiver.
//!
//! Every trial draws from its own ChaCha stream keyed by `(seed, trial)`, so the
//! error count does not depend on how trials are split across threads.

use crate::detectors::{decision_rule, NoFiltDetector};
use crate::error::{Error, Result};
use crate::model::{grid_value, Constellation, DecisionRule, Detector, QuantizerSpec, SystemConfig};
use crate::quantizer::quantize_index;
use crate::ser::{min_ser_over_snr, MinSer};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Stream offset separating channel-error draws from per-trial noise draws.
const CHANNEL_STREAM_BASE: u64 = 1 << 63;

/// Trials per parallel work item.
const CHUNK: u64 = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McConfig {
    pub trials: u64,
    pub seed: u64,
    /// Complex variance of the artificial noise added in front of the ADC.
    #[serde(default)]
    pub artificial_noise_var: f64,
    /// Complex variance of the per-branch channel estimation error.
    #[serde(default)]
    pub channel_error_var: f64,
    /// Number of consecutive symbols sharing one channel error realization.
    #[serde(default = "one")]
    pub channel_block_len: u64,
    pub detector: Detector,
}

fn one() -> u64 {
    1
}

impl McConfig {
    pub fn new(trials: u64, seed: u64, detector: Detector) -> Self {
        McConfig {
            trials,
            seed,
            artificial_noise_var: 0.0,
            channel_error_var: 0.0,
            channel_block_len: 1,
            detector,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::InvalidConfig("trials must be >= 1".into()));
        }
        if !(self.artificial_noise_var >= 0.0 && self.artificial_noise_var.is_finite()) {
            return Err(Error::InvalidConfig("artificial noise variance must be >= 0".into()));
        }
        if !(self.channel_error_var >= 0.0 && self.channel_error_var.is_finite()) {
            return Err(Error::InvalidConfig("channel error variance must be >= 0".into()));
        }
        if self.channel_block_len == 0 {
            return Err(Error::InvalidConfig("channel block length must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McResult {
    pub ser: f64,
    pub stderr: f64,
    pub errors: u64,
    pub trials: u64,
}

enum Decider {
    Threshold(DecisionRule),
    Counts(NoFiltDetector),
    Midpoints(Vec<f64>),
}

/// Noise seen by the detector design: thermal plus artificial noise.
pub fn effective_config(cfg: &SystemConfig, constellation: &Constellation, artificial_noise_var: f64) -> Result<SystemConfig> {
    if artificial_noise_var == 0.0 {
        return Ok(*cfg);
    }
    let s = cfg.noise_std();
    let total = (s * s + 0.5 * artificial_noise_var).sqrt();
    SystemConfig::from_noise_std(cfg.oversampling(), total, constellation)
}

/// Estimates the QAM symbol error rate at `cfg`.
///
/// Detection rules are designed for the effective SNR including artificial
/// noise; channel estimation errors are unknown to the receiver.
pub fn simulate_ser(cfg: &SystemConfig, spec: QuantizerSpec, constellation: &Constellation, mc: &McConfig) -> Result<McResult> {
    mc.validate()?;
    let design = effective_config(cfg, constellation, mc.artificial_noise_var)?;
    let decider = match mc.detector {
        Detector::Nofilt => Decider::Counts(NoFiltDetector::new(&design, spec, constellation)),
        Detector::Unquantized => Decider::Midpoints(
            constellation
                .levels()
                .windows(2)
                .map(|w| 0.5 * (w[0] + w[1]))
                .collect(),
        ),
        det => Decider::Threshold(decision_rule(det, &design, spec, constellation)?),
    };
    let sim = Simulator {
        n: cfg.oversampling(),
        spec,
        levels: constellation.levels(),
        noise_std: cfg.noise_std(),
        dither_std: (0.5 * mc.artificial_noise_var).sqrt(),
        error_std: (0.5 * mc.channel_error_var).sqrt(),
        block_len: mc.channel_block_len,
        decider: &decider,
        base: ChaCha8Rng::seed_from_u64(mc.seed),
    };
    let chunks = mc.trials.div_ceil(CHUNK);
    let errors: u64 = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let lo = c * CHUNK;
            let hi = (lo + CHUNK).min(mc.trials);
            sim.run(lo..hi)
        })
        .sum();
    let p = errors as f64 / mc.trials as f64;
    Ok(McResult {
        ser: p,
        stderr: (p * (1.0 - p) / mc.trials as f64).sqrt(),
        errors,
        trials: mc.trials,
    })
}

struct Simulator<'a> {
    n: usize,
    spec: QuantizerSpec,
    levels: &'a [f64],
    noise_std: f64,
    dither_std: f64,
    error_std: f64,
    block_len: u64,
    decider: &'a Decider,
    base: ChaCha8Rng,
}

impl Simulator<'_> {
    fn stream(&self, id: u64) -> ChaCha8Rng {
        let mut rng = self.base.clone();
        rng.set_stream(id);
        rng.set_word_pos(0);
        rng
    }

    fn run(&self, trials: std::ops::Range<u64>) -> u64 {
        let n = self.n;
        let k = self.spec.levels();
        let mut gains = vec![Complex64::new(1.0, 0.0); n];
        let mut block = u64::MAX;
        let mut idx_i = vec![0usize; n];
        let mut idx_q = vec![0usize; n];
        let mut counts_i = vec![0u32; k];
        let mut counts_q = vec![0u32; k];
        let mut errors = 0;
        for t in trials {
            if self.error_std > 0.0 && t / self.block_len != block {
                block = t / self.block_len;
                let mut rng = self.stream(CHANNEL_STREAM_BASE | block);
                for g in gains.iter_mut() {
                    let e = Complex64::new(
                        self.error_std * rng.sample::<f64, _>(StandardNormal),
                        self.error_std * rng.sample::<f64, _>(StandardNormal),
                    );
                    // receiver multiplies by conj(h_est) / |h_est|^2 = 1 / (1 + e)
                    *g = (Complex64::new(1.0, 0.0) + e).inv();
                }
            }
            let mut rng = self.stream(t);
            let m = self.levels.len();
            let si = rng.random_range(0..m);
            let sq = rng.random_range(0..m);
            let x = Complex64::new(self.levels[si], self.levels[sq]);
            let mut sum_i = 0.0;
            let mut sum_q = 0.0;
            for b in 0..n {
                let noise = Complex64::new(
                    self.noise_std * rng.sample::<f64, _>(StandardNormal),
                    self.noise_std * rng.sample::<f64, _>(StandardNormal),
                );
                let mut y = (x + noise) * gains[b];
                if self.dither_std > 0.0 {
                    y += Complex64::new(
                        self.dither_std * rng.sample::<f64, _>(StandardNormal),
                        self.dither_std * rng.sample::<f64, _>(StandardNormal),
                    );
                }
                idx_i[b] = quantize_index(y.re, self.spec);
                idx_q[b] = quantize_index(y.im, self.spec);
                sum_i += y.re;
                sum_q += y.im;
            }
            let (di, dq) = match self.decider {
                Decider::Threshold(rule) => {
                    let ji: usize = idx_i.iter().sum();
                    let jq: usize = idx_q.iter().sum();
                    (
                        rule.detect(grid_value(ji, n, self.spec)).index,
                        rule.detect(grid_value(jq, n, self.spec)).index,
                    )
                }
                Decider::Counts(det) => {
                    counts_i.fill(0);
                    counts_q.fill(0);
                    idx_i.iter().for_each(|&j| counts_i[j] += 1);
                    idx_q.iter().for_each(|&j| counts_q[j] += 1);
                    (det.decide(&counts_i), det.decide(&counts_q))
                }
                Decider::Midpoints(mid) => (
                    mid.partition_point(|&b| b <= sum_i / n as f64),
                    mid.partition_point(|&b| b <= sum_q / n as f64),
                ),
            };
            if di != si || dq != sq {
                errors += 1;
            }
        }
        errors
    }
}

/// Artificial noise that lowers the effective SNR to the one minimising the
/// analytic SER.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DitherChoice {
    /// Complex variance to add; zero when the actual SNR is already at or below
    /// the optimum.
    pub variance: f64,
    pub optimum: MinSer,
    pub applied: bool,
}

pub fn optimum_dither(
    cfg: &SystemConfig,
    spec: QuantizerSpec,
    constellation: &Constellation,
    detector: Detector,
    snr_grid: &[f64],
    cap: u128,
) -> Result<DitherChoice> {
    let optimum = min_ser_over_snr(detector, cfg.oversampling(), spec, constellation, snr_grid, cap)?;
    if cfg.snr_db() <= optimum.snr_db {
        return Ok(DitherChoice {
            variance: 0.0,
            optimum,
            applied: false,
        });
    }
    let power = constellation.average_power();
    let target = power / 10f64.powf(optimum.snr_db / 10.0);
    let actual = power / cfg.snr_linear();
    Ok(DitherChoice {
        variance: target - actual,
        optimum,
        applied: true,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ser::analytic_ser;
    use crate::stats::DEFAULT_ENUMERATION_CAP;

    fn qam16() -> Constellation {
        Constellation::square_qam(16).unwrap()
    }

    #[test]
    fn deterministic_replay_independent_of_threads() {
        let c = qam16();
        let cfg = SystemConfig::from_snr_db(8, 4.0, &c).unwrap();
        let spec = QuantizerSpec::new(1, 2.0).unwrap();
        let mc = McConfig::new(20_000, 7, Detector::Ml);
        let a = simulate_ser(&cfg, spec, &c, &mc).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| simulate_ser(&cfg, spec, &c, &mc).unwrap());
        assert_eq!(a, b);
        let other = simulate_ser(&cfg, spec, &c, &McConfig::new(20_000, 8, Detector::Ml)).unwrap();
        assert_ne!(a.errors, other.errors);
    }

    #[test]
    fn noiseless_representable_constellation() {
        let c = qam16();
        let cfg = SystemConfig::from_noise_std(4, 1e-9, &c).unwrap();
        let spec = QuantizerSpec::new(3, 1.0).unwrap();
        let r = simulate_ser(&cfg, spec, &c, &McConfig::new(5000, 1, Detector::Ml)).unwrap();
        assert_eq!(r.errors, 0);
    }

    #[test]
    fn huge_noise_is_guessing() {
        let c = qam16();
        let cfg = SystemConfig::from_noise_std(2, 1e6, &c).unwrap();
        let spec = QuantizerSpec::new(2, 4.0).unwrap();
        let r = simulate_ser(&cfg, spec, &c, &McConfig::new(40_000, 3, Detector::Mindist)).unwrap();
        assert!((r.ser - 15.0 / 16.0).abs() < 4.0 * r.stderr.max(1e-3), "{r:?}");
    }

    #[test]
    fn agrees_with_analytic() {
        let c = qam16();
        let spec = QuantizerSpec::new(2, 4.0).unwrap();
        for det in [Detector::Ml, Detector::Nofilt, Detector::Unquantized] {
            let cfg = SystemConfig::from_snr_db(8, 3.0, &c).unwrap();
            let a = analytic_ser(det, &cfg, spec, &c, DEFAULT_ENUMERATION_CAP).unwrap();
            let r = simulate_ser(&cfg, spec, &c, &McConfig::new(100_000, 11, det)).unwrap();
            assert!((r.ser - a.ser).abs() <= 4.0 * r.stderr, "{det}: {} vs {}", r.ser, a.ser);
        }
    }

    #[test]
    fn dither_needs_snr_above_optimum() {
        let c = qam16();
        let spec = QuantizerSpec::new(1, 2.0).unwrap();
        let grid: Vec<f64> = (0..=20).map(|i| i as f64).collect();
        let low = SystemConfig::from_snr_db(16, -5.0, &c).unwrap();
        let d = optimum_dither(&low, spec, &c, Detector::Ml, &grid, 0).unwrap();
        assert!(!d.applied && d.variance == 0.0);
        let high = SystemConfig::from_snr_db(16, 30.0, &c).unwrap();
        let d = optimum_dither(&high, spec, &c, Detector::Ml, &grid, 0).unwrap();
        assert!(d.applied);
        let eff = effective_config(&high, &c, d.variance).unwrap();
        assert!((eff.snr_db() - d.optimum.snr_db).abs() < 1e-9);
    }
}
