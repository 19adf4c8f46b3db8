//! Line-of-sight channel gain, SNR bookkeeping and the ADC power model.

use crate::error::{Error, Result};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Free-space link with molecular absorption.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LosChannelParams {
    pub carrier_hz: f64,
    pub distance_m: f64,
    /// Absorption coefficient in 1/m.
    #[serde(default)]
    pub absorption_per_m: f64,
}

impl LosChannelParams {
    pub fn new(carrier_hz: f64, distance_m: f64, absorption_per_m: f64) -> Result<Self> {
        let p = LosChannelParams {
            carrier_hz,
            distance_m,
            absorption_per_m,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.carrier_hz > 0.0 && self.carrier_hz.is_finite()) {
            return Err(Error::InvalidChannel(format!("carrier {} Hz", self.carrier_hz)));
        }
        if !(self.distance_m > 0.0 && self.distance_m.is_finite()) {
            return Err(Error::InvalidChannel(format!("distance {} m", self.distance_m)));
        }
        if !(self.absorption_per_m >= 0.0 && self.absorption_per_m.is_finite()) {
            return Err(Error::InvalidChannel(format!(
                "absorption {} 1/m",
                self.absorption_per_m
            )));
        }
        Ok(())
    }
}

/// `c / (4 pi f d) * exp(-kappa d / 2) * exp(-j 2 pi f d / c)`.
pub fn los_coefficient(p: &LosChannelParams) -> Complex64 {
    let spreading = SPEED_OF_LIGHT / (4.0 * PI * p.carrier_hz * p.distance_m);
    let absorption = (-0.5 * p.absorption_per_m * p.distance_m).exp();
    // reduce the phase in cycles first to keep precision at large f d
    let cycles = (p.carrier_hz * p.distance_m / SPEED_OF_LIGHT).fract();
    Complex64::from_polar(spreading * absorption, -2.0 * PI * cycles)
}

/// `||h||^2 sigma_x^2 / (N sigma_n^2)`.
pub fn snr_from_channel(h: &[Complex64], signal_power: f64, noise_power: f64) -> Result<f64> {
    if h.is_empty() {
        return Err(Error::InvalidChannel("empty gain vector".into()));
    }
    if noise_power.is_nan() || noise_power <= 0.0 {
        return Err(Error::InvalidChannel(format!("noise power {noise_power}")));
    }
    let norm2: f64 = h.iter().map(|g| g.norm_sqr()).sum();
    Ok(norm2 * signal_power / (h.len() as f64 * noise_power))
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(lin: f64) -> f64 {
    10.0 * lin.log10()
}

/// Parameters of the ADC power model `gamma * N * 2^(zeta q) * f_s^nu`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdcPowerSpec {
    #[serde(default = "unit")]
    pub gamma: f64,
    #[serde(default = "one")]
    pub zeta: u32,
    #[serde(default = "one")]
    pub nu: u32,
    pub bits: u32,
    #[serde(default = "unit")]
    pub sample_rate_hz: f64,
    pub branches: usize,
}

fn unit() -> f64 {
    1.0
}

fn one() -> u32 {
    1
}

impl AdcPowerSpec {
    /// Spec with `gamma = 1`, `zeta = nu = 1` and unit sample rate.
    pub fn relative(bits: u32, branches: usize) -> Self {
        AdcPowerSpec {
            gamma: 1.0,
            zeta: 1,
            nu: 1,
            bits,
            sample_rate_hz: 1.0,
            branches,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidConfig(format!("adc power: {what}")));
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return bad("gamma must be positive");
        }
        if !(1..=2).contains(&self.zeta) {
            return bad("zeta must be 1 or 2");
        }
        if !(1..=2).contains(&self.nu) {
            return bad("nu must be 1 or 2");
        }
        if self.bits == 0 || self.bits > 30 {
            return bad("bits out of range");
        }
        if !(self.sample_rate_hz > 0.0 && self.sample_rate_hz.is_finite()) {
            return bad("sample rate must be positive");
        }
        if self.branches == 0 {
            return bad("branches must be positive");
        }
        Ok(())
    }
}

pub fn adc_power(spec: &AdcPowerSpec) -> f64 {
    spec.gamma
        * spec.branches as f64
        * 2f64.powi((spec.zeta * spec.bits) as i32)
        * spec.sample_rate_hz.powi(spec.nu as i32)
}

/// Configurations with the same ADC power as a base one.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IsoPowerSet {
    /// `(bits, N)` sorted by bits.
    pub configs: Vec<(u32, usize)>,
    /// Resolutions dropped because `N` would not be a positive integer.
    pub dropped: Vec<u32>,
}

/// Trades one bit of resolution against a factor two in `N` over `bits`.
pub fn iso_power_configs(base: &AdcPowerSpec, bits: std::ops::RangeInclusive<u32>) -> Result<IsoPowerSet> {
    base.validate()?;
    if base.zeta != 1 {
        return Err(Error::InvalidConfig(
            "adc power: iso-power exchange needs zeta = 1".into(),
        ));
    }
    let total = (base.branches as u128) << base.bits;
    let mut configs = Vec::new();
    let mut dropped = Vec::new();
    for b in bits {
        if b == 0 || b > 30 {
            continue;
        }
        let unit = 1u128 << b;
        if total.is_multiple_of(unit) {
            configs.push((b, (total / unit) as usize));
        } else {
            dropped.push(b);
        }
    }
    Ok(IsoPowerSet { configs, dropped })
}
