//! Scalar numerics: Gaussian tail function in linear and log space, log-domain
//! combinatorics and log-sum-exp accumulation.

use crate::model::KappaVector;
use libm::{erfc, lgamma as ln_gamma};
use std::f64::consts::{FRAC_1_SQRT_2, PI};

/// Above this argument the log tail is evaluated with the Mills-ratio continued
/// fraction instead of `ln(erfc(..))`.
const LN_Q_SERIES_SWITCH: f64 = 8.0;

/// Gaussian tail probability `Q(x) = P(Z > x)` for a standard normal `Z`.
///
/// Saturates to exactly 0 or 1 far in the tails.
pub fn q_function(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    0.5 * erfc(x * FRAC_1_SQRT_2)
}

/// Natural logarithm of [`q_function`], accurate deep into the upper tail where
/// `Q(x)` itself underflows.
pub fn ln_q(x: f64) -> f64 {
    if x.is_nan() {
        f64::NAN
    } else if x == f64::INFINITY {
        f64::NEG_INFINITY
    } else if x == f64::NEG_INFINITY {
        0.0
    } else if x < -5.0 {
        (-q_function(-x)).ln_1p()
    } else if x <= LN_Q_SERIES_SWITCH {
        q_function(x).ln()
    } else {
        -0.5 * x * x - (2.0 * PI).sqrt().ln() + ln_mills_ratio(x)
    }
}

/// `ln(Q(x) / phi(x))` for large positive `x`, via the continued fraction
/// `1 / (x + 1/(x + 2/(x + 3/(x + ...))))` evaluated with the modified Lentz method.
fn ln_mills_ratio(x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let mut f = x;
    let mut c = f;
    let mut d = 0.0;
    for n in 1..500 {
        let a = n as f64;
        d = x + a * d;
        if d == 0.0 {
            d = TINY;
        }
        c = x + a / c;
        if c == 0.0 {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    -f.ln()
}

/// Log of the standard normal probability mass in `[lower, upper)`.
///
/// The difference of tails is taken on the side where both tails are small, so the
/// result keeps full relative accuracy for intervals far from the origin.
pub fn ln_gaussian_interval(lower: f64, upper: f64) -> f64 {
    debug_assert!(lower <= upper);
    if lower >= upper {
        return f64::NEG_INFINITY;
    }
    if lower >= 0.0 {
        // Q(lower) - Q(upper), both small
        let hi = ln_q(lower);
        let lo = ln_q(upper);
        hi + ln_one_minus_exp(lo - hi)
    } else if upper <= 0.0 {
        // Phi(upper) - Phi(lower) = Q(-upper) - Q(-lower)
        let hi = ln_q(-upper);
        let lo = ln_q(-lower);
        hi + ln_one_minus_exp(lo - hi)
    } else {
        // interval straddles zero: 1 - Phi(lower) - Q(upper)
        (-(q_function(-lower) + q_function(upper))).ln_1p()
    }
}

/// `ln(1 - e^t)` for `t <= 0`.
fn ln_one_minus_exp(t: f64) -> f64 {
    if t == f64::NEG_INFINITY {
        0.0
    } else if t > -std::f64::consts::LN_2 {
        (-t.exp_m1()).ln()
    } else {
        (-t.exp()).ln_1p()
    }
}

/// Table of `ln(k!)` for `k = 0..=n`.
#[derive(Debug, Clone)]
pub struct LnFactorials(Vec<f64>);

impl LnFactorials {
    pub fn new(n: usize) -> Self {
        LnFactorials((0..=n).map(|k| ln_gamma(k as f64 + 1.0)).collect())
    }

    #[inline]
    pub fn get(&self, k: usize) -> f64 {
        self.0[k]
    }

    pub fn max(&self) -> usize {
        self.0.len() - 1
    }

    /// `ln(n! / (k_1! ... k_K!))` for counts summing to `n`.
    #[inline]
    pub fn ln_multinomial(&self, counts: &[u32]) -> f64 {
        let n: usize = counts.iter().map(|&c| c as usize).sum();
        // summing the denominator first makes the two-level case symmetric in
        // its arguments, bit for bit
        self.get(n) - counts.iter().map(|&c| self.get(c as usize)).sum::<f64>()
    }
}

/// `ln(N! / (kappa_1! ... kappa_K!))` with `N = sum(kappa)`.
pub fn log_multinomial_coeff(kappa: &KappaVector) -> f64 {
    let n = kappa.total() as usize;
    LnFactorials::new(n).ln_multinomial(kappa.counts())
}

/// Log-probability of a count vector under a multinomial law with per-level
/// log-probabilities `ln_probs`. Levels that are never observed contribute a
/// factor of one even when their probability is zero.
#[inline]
pub fn ln_kappa_probability(counts: &[u32], ln_probs: &[f64], table: &LnFactorials) -> f64 {
    table.ln_multinomial(counts) + ln_kappa_likelihood(counts, ln_probs)
}

/// `sum_k kappa_k ln P_k` with the `0 * ln 0 = 0` convention.
#[inline]
pub fn ln_kappa_likelihood(counts: &[u32], ln_probs: &[f64]) -> f64 {
    counts
        .iter()
        .zip(ln_probs)
        .filter(|(&c, _)| c > 0)
        .map(|(&c, &lp)| c as f64 * lp)
        .sum()
}

/// `ln(sum(exp(v)))` over a slice, two-pass and max-shifted.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    let sum: f64 = values.iter().map(|&v| (v - max).exp()).sum();
    max + sum.ln()
}

/// Streaming log-sum-exp accumulator. The result depends only on the sequence of
/// pushed values, so two callers that push the same sequence get identical bits.
#[derive(Debug, Clone, Copy)]
pub struct LogSumExp {
    max: f64,
    scaled: f64,
}

impl Default for LogSumExp {
    fn default() -> Self {
        LogSumExp {
            max: f64::NEG_INFINITY,
            scaled: 0.0,
        }
    }
}

impl LogSumExp {
    #[inline]
    pub fn push(&mut self, v: f64) {
        if v == f64::NEG_INFINITY {
            return;
        }
        if v <= self.max {
            self.scaled += (v - self.max).exp();
        } else {
            self.scaled = self.scaled * (self.max - v).exp() + 1.0;
            self.max = v;
        }
    }

    pub fn ln(&self) -> f64 {
        if self.max == f64::NEG_INFINITY {
            f64::NEG_INFINITY
        } else {
            self.max + self.scaled.ln()
        }
    }

    pub fn value(&self) -> f64 {
        self.ln().exp()
    }
}
