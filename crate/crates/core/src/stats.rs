//! Exact statistics of the averaged detection variable `d`.
//!
//! The conditional law of `d` is computed by successive log-domain convolution of
//! the single-observation level distribution on the `step / N` grid. Enumerating
//! every count vector (multinomial terms binned by their `d` value) gives the same
//! law and is kept as an independent route.

use crate::error::{Error, Result};
use crate::model::{grid_len, Constellation, DetectionPmf, KappaVector, QuantizerSpec, SystemConfig};
use rayon::prelude::*;
use crate::quantizer::{cond_mean, cond_variance, level_value_unchecked, ln_level_probabilities};
use crate::special::{ln_kappa_probability, LnFactorials, LogSumExp};
use std::f64::consts::PI;

/// Default cap on the number of enumerated count vectors.
pub const DEFAULT_ENUMERATION_CAP: u128 = 100_000_000;

/// Gaussian approximation of the detection-variable law.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CltDensity {
    pub mean: f64,
    pub variance: f64,
}

impl CltDensity {
    pub fn std_dev(&self) -> f64 {
        self.variance.sqrt()
    }
}

/// Number of count vectors of `n` observations over `k` levels, `C(n+k-1, k-1)`.
/// Saturates at `u128::MAX`.
pub fn composition_count(n: usize, k: usize) -> u128 {
    let r = (k - 1).min(n) as u128;
    let top = (n + k - 1) as u128;
    let mut acc: u128 = 1;
    for i in 0..r {
        // acc * (top - i) / (i + 1) stays integral at every step
        acc = match acc.checked_mul(top - i) {
            Some(v) => v / (i + 1),
            None => return u128::MAX,
        };
    }
    acc
}

/// Iterator over all count vectors summing to `n`, in colexicographic order
/// (the last component varies slowest).
#[derive(Debug, Clone)]
pub struct Compositions {
    current: Vec<u32>,
    done: bool,
}

impl Compositions {
    fn new(n: u32, k: usize) -> Self {
        let mut current = vec![0; k];
        current[0] = n;
        Compositions {
            current,
            done: false,
        }
    }

    /// Advances in place; returns `false` once the sequence is exhausted.
    fn advance(&mut self) -> bool {
        let k = self.current.len();
        let i = match self.current.iter().position(|&c| c > 0) {
            Some(i) => i,
            None => return false,
        };
        if i + 1 == k {
            return false;
        }
        let v = self.current[i];
        self.current[i] = 0;
        self.current[i + 1] += 1;
        self.current[0] = v - 1;
        true
    }

    /// Calls `f` on every remaining vector without allocating.
    pub fn for_each_counts(mut self, mut f: impl FnMut(&[u32])) {
        if self.done {
            return;
        }
        loop {
            f(&self.current);
            if !self.advance() {
                break;
            }
        }
    }
}

impl Iterator for Compositions {
    type Item = KappaVector;

    fn next(&mut self) -> Option<KappaVector> {
        if self.done {
            return None;
        }
        let out = KappaVector::new(self.current.clone());
        self.done = !self.advance();
        Some(out)
    }
}

fn check_enumeration(n: usize, k: usize, cap: u128) -> Result<()> {
    if n == 0 || k < 2 {
        return Err(Error::InvalidConfig(format!(
            "enumeration needs N >= 1 and K >= 2, got N = {n}, K = {k}"
        )));
    }
    if n > u32::MAX as usize {
        return Err(Error::InvalidConfig(format!("N = {n} too large")));
    }
    let count = composition_count(n, k);
    if count > cap {
        return Err(Error::EnumerationTooLarge { count, cap });
    }
    Ok(())
}

/// All count vectors of `n` observations over `k` levels.
pub fn enumerate_compositions(n: usize, k: usize, cap: u128) -> Result<Compositions> {
    check_enumeration(n, k, cap)?;
    Ok(Compositions::new(n as u32, k))
}

/// The contiguous colexicographic block of vectors whose last component is `last`.
pub(crate) fn compositions_with_last(n: usize, k: usize, last: u32) -> impl Iterator<Item = Vec<u32>> {
    let rest = Compositions::new(n as u32 - last, k - 1);
    rest.map(move |kv| {
        let mut v = kv.counts().to_vec();
        v.push(last);
        v
    })
}

/// `d = (1/N) sum_k kappa_k z(k)`.
pub fn detection_value(kappa: &KappaVector, spec: QuantizerSpec) -> f64 {
    let n = kappa.total() as f64;
    kappa
        .counts()
        .iter()
        .enumerate()
        .map(|(k, &c)| c as f64 * level_value_unchecked(k, spec))
        .sum::<f64>()
        / n
}

/// Exact conditional law of `d` given input amplitude `x`.
pub fn pmf_of_d(x: f64, cfg: &SystemConfig, spec: QuantizerSpec) -> DetectionPmf {
    if x < 0.0 {
        return pmf_of_d(-x, cfg, spec).mirrored();
    }
    let ln_p = ln_level_probabilities(x, cfg.noise_std(), spec);
    pmf_from_level_ln_probs(&ln_p, cfg.oversampling(), spec)
}

/// Conditional laws of `d` for every level of `constellation`, in level order.
///
/// For symmetric constellations only the non-negative half is computed and the
/// rest is mirrored, which makes the set exactly reflection-symmetric.
pub fn level_pmfs(cfg: &SystemConfig, spec: QuantizerSpec, constellation: &Constellation) -> Vec<DetectionPmf> {
    let levels = constellation.levels();
    let m = levels.len();
    if constellation.is_symmetric() {
        let half: Vec<DetectionPmf> = levels[m / 2..]
            .par_iter()
            .map(|&x| pmf_of_d(x, cfg, spec))
            .collect();
        let mut out: Vec<DetectionPmf> = half[m % 2..].iter().rev().map(|p| p.mirrored()).collect();
        out.extend(half);
        out
    } else {
        levels.par_iter().map(|&x| pmf_of_d(x, cfg, spec)).collect()
    }
}

/// Conditional law of `d` from per-level log-probabilities of one observation.
///
/// For one-bit quantization the count vector is a function of `d`, so each grid
/// point carries exactly one binomial term; otherwise the law is built by `N`
/// successive convolutions.
pub fn pmf_from_level_ln_probs(ln_p: &[f64], n: usize, spec: QuantizerSpec) -> DetectionPmf {
    let k = spec.levels();
    assert_eq!(ln_p.len(), k);
    let ln_probs = if k == 2 {
        let table = LnFactorials::new(n);
        (0..=n)
            .map(|j| {
                let counts = [(n - j) as u32, j as u32];
                ln_kappa_probability(&counts, ln_p, &table)
            })
            .collect()
    } else {
        ln_convolve_power(ln_p, n)
    };
    DetectionPmf::from_ln_probs(n, spec, ln_probs)
}

/// Log-domain `n`-fold self convolution of a distribution over `0..K`.
fn ln_convolve_power(ln_p: &[f64], n: usize) -> Vec<f64> {
    let k = ln_p.len();
    let mut cur = vec![0.0];
    let mut next = Vec::with_capacity(n * (k - 1) + 1);
    let mut terms = vec![0.0; k];
    for _ in 0..n {
        next.clear();
        let len = cur.len() + k - 1;
        for j in 0..len {
            let lo = j.saturating_sub(cur.len() - 1);
            let hi = j.min(k - 1);
            let mut max = f64::NEG_INFINITY;
            for (t, kk) in (lo..=hi).enumerate() {
                let v = cur[j - kk] + ln_p[kk];
                terms[t] = v;
                if v > max {
                    max = v;
                }
            }
            if max == f64::NEG_INFINITY {
                next.push(max);
                continue;
            }
            let s: f64 = terms[..=hi - lo].iter().map(|&v| (v - max).exp()).sum();
            next.push(max + s.ln());
        }
        std::mem::swap(&mut cur, &mut next);
    }
    cur
}

/// Same law as [`pmf_of_d`], obtained by enumerating every count vector and
/// binning its multinomial probability at its grid point.
pub fn pmf_by_enumeration(x: f64, cfg: &SystemConfig, spec: QuantizerSpec, cap: u128) -> Result<DetectionPmf> {
    let n = cfg.oversampling();
    let k = spec.levels();
    let comps = enumerate_compositions(n, k, cap)?;
    let ln_p = ln_level_probabilities(x, cfg.noise_std(), spec);
    let table = LnFactorials::new(n);
    let mut acc = vec![LogSumExp::default(); grid_len(n, k)];
    comps.for_each_counts(|c| {
        let j: usize = c.iter().enumerate().map(|(i, &v)| i * v as usize).sum();
        acc[j].push(ln_kappa_probability(c, &ln_p, &table));
    });
    Ok(DetectionPmf::from_ln_probs(n, spec, acc.iter().map(|a| a.ln()).collect()))
}

/// Mean `mu_z(x)` and variance `sigma_z^2(x) / N` of `d`.
pub fn d_moments(x: f64, cfg: &SystemConfig, spec: QuantizerSpec) -> CltDensity {
    let s = cfg.noise_std();
    CltDensity {
        mean: cond_mean(x, s, spec),
        variance: cond_variance(x, s, spec) / cfg.oversampling() as f64,
    }
}

/// Gaussian density of the central-limit approximation at `d`.
pub fn clt_pdf(d: f64, density: &CltDensity) -> f64 {
    let sd = density.std_dev();
    let e = (d - density.mean) / sd;
    (-0.5 * e * e).exp() / ((2.0 * PI).sqrt() * sd)
}

/// Largest absolute deviation between a PMF and the CLT density scaled by the grid
/// spacing `step / N`.
pub fn clt_max_deviation(pmf: &DetectionPmf, density: &CltDensity) -> f64 {
    let h = pmf.spacing();
    (0..pmf.len())
        .map(|j| (pmf.prob(j) - h * clt_pdf(pmf.d(j), density)).abs())
        .fold(0.0, f64::max)
}
