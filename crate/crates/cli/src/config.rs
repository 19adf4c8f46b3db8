use qser::optimizer::{ParamGrid, SearchMode, SearchSpace, DEFAULT_BUDGET};
use qser::ser::snr_grid;
use qser::stats::DEFAULT_ENUMERATION_CAP;
use qser::{Constellation, Detector, QuantizerSpec};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

/// Invalid configuration; the message starts with the offending key.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn bad<T>(key: &str, msg: impl fmt::Display) -> Result<T, ConfigError> {
    Err(ConfigError(format!("{key}: {msg}")))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    pub quantizer: QuantizerConfig,
    pub oversampling: usize,
    pub constellation: ConstellationConfig,
    #[serde(default = "default_detectors")]
    pub detectors: Vec<Detector>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snr_grid: Option<SnrGrid>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub operating_snr_db: Option<OperatingPoint>,
    /// Extra (quantizer, oversampling) setups evaluated side by side.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub variants: Vec<Variant>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub enumeration_cap: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pmf: Option<PmfSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mc: Option<McSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub power: Option<PowerSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub optimize: Option<OptimizeSection>,
}

fn default_detectors() -> Vec<Detector> {
    vec![Detector::Ml]
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuantizerConfig {
    pub bits: u32,
    pub step: f64,
}

impl QuantizerConfig {
    fn spec(&self, key: &str) -> Result<QuantizerSpec, ConfigError> {
        QuantizerSpec::new(self.bits, self.step).or_else(|e| bad(key, e))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ConstellationConfig {
    /// Equidistant square QAM of the given order.
    Qam(usize),
    /// Positive amplitudes, mirrored to the negative axis.
    Symmetric(Vec<f64>),
    /// Explicit per-component amplitudes.
    Levels(Vec<f64>),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SnrGrid {
    Range { start: f64, stop: f64, step: f64 },
    Values(Vec<f64>),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OperatingPoint {
    Db(f64),
    /// Minimum of the analytic SER over `snr_grid`.
    Optimum,
}

impl Serialize for OperatingPoint {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            OperatingPoint::Db(v) => s.serialize_f64(*v),
            OperatingPoint::Optimum => s.serialize_str("optimum"),
        }
    }
}

impl<'de> Deserialize<'de> for OperatingPoint {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Db(f64),
            Word(String),
        }
        match Raw::deserialize(d)? {
            Raw::Db(v) => Ok(OperatingPoint::Db(v)),
            Raw::Word(w) if w == "optimum" => Ok(OperatingPoint::Optimum),
            Raw::Word(w) => Err(serde::de::Error::custom(format!(
                "expected a number or \"optimum\", got \"{w}\""
            ))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Variant {
    pub label: String,
    pub quantizer: QuantizerConfig,
    pub oversampling: usize,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PmfSection {
    /// Amplitudes to evaluate; all constellation levels when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub amplitudes: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Dither {
    #[default]
    Off,
    /// Lower the effective SNR to the analytic optimum when above it.
    Auto,
    /// Fixed complex variance.
    Variance(f64),
}

impl FromStr for Dither {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "off" => Ok(Dither::Off),
            "auto" => Ok(Dither::Auto),
            v => v
                .parse::<f64>()
                .map(Dither::Variance)
                .map_err(|_| format!("expected off, auto or a variance, got \"{v}\"")),
        }
    }
}

impl Serialize for Dither {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Dither::Off => s.serialize_str("off"),
            Dither::Auto => s.serialize_str("auto"),
            Dither::Variance(v) => s.serialize_f64(*v),
        }
    }
}

impl<'de> Deserialize<'de> for Dither {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Var(f64),
            Word(String),
        }
        match Raw::deserialize(d)? {
            Raw::Var(v) => Ok(Dither::Variance(v)),
            Raw::Word(w) => w.parse().map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McSection {
    #[serde(default = "default_trials")]
    pub trials: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub dither: Dither,
    /// Complex variance of the channel estimation error.
    #[serde(default)]
    pub channel_error_var: f64,
    #[serde(default = "one")]
    pub channel_block_len: u64,
    /// Grid searched for the analytic optimum when dithering automatically.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dither_search: Option<SnrGrid>,
}

fn default_trials() -> u64 {
    10_000_000
}

fn one() -> u64 {
    1
}

impl Default for McSection {
    fn default() -> Self {
        McSection {
            trials: default_trials(),
            seed: 0,
            dither: Dither::Off,
            channel_error_var: 0.0,
            channel_block_len: 1,
            dither_search: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerSection {
    /// Defaults to the quantizer resolution.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_bits: Option<u32>,
    /// Defaults to the oversampling factor.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_branches: Option<usize>,
    #[serde(default = "default_bit_range")]
    pub bit_range: [u32; 2],
    #[serde(default = "unit")]
    pub gamma: f64,
    #[serde(default = "one_u32")]
    pub zeta: u32,
    #[serde(default = "one_u32")]
    pub nu: u32,
    #[serde(default = "unit")]
    pub sample_rate_hz: f64,
}

fn default_bit_range() -> [u32; 2] {
    [1, 3]
}

fn unit() -> f64 {
    1.0
}

fn one_u32() -> u32 {
    1
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizeSection {
    pub mode: SearchMode,
    pub grids: Vec<ParamGrid>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget: Option<u64>,
}

/// One (quantizer, oversampling) setup after validation.
#[derive(Debug, Clone)]
pub struct Setup {
    /// Empty for the base setup when no variants are given.
    pub label: String,
    pub spec: QuantizerSpec,
    pub oversampling: usize,
}

/// Validated view of a [`RunConfig`].
#[derive(Debug, Clone)]
pub struct Resolved {
    pub constellation: Constellation,
    pub setups: Vec<Setup>,
    pub snr_grid: Option<Vec<f64>>,
    pub cap: u128,
}

pub fn load(path: &Path) -> anyhow::Result<(RunConfig, Vec<u8>)> {
    let bytes = std::fs::read(path).map_err(|e| anyhow::anyhow!("reading {}: {e}", path.display()))?;
    let cfg = parse(&bytes)?;
    Ok((cfg, bytes))
}

pub fn parse(bytes: &[u8]) -> Result<RunConfig, ConfigError> {
    let de = &mut serde_json::Deserializer::from_slice(bytes);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let key = if path == "." { "config".to_string() } else { path };
        ConfigError(format!("{key}: {}", e.inner()))
    })
}

fn grid_values(key: &str, g: &SnrGrid) -> Result<Vec<f64>, ConfigError> {
    let v = match g {
        SnrGrid::Values(v) => v.clone(),
        SnrGrid::Range { start, stop, step } => {
            if !(start.is_finite() && stop.is_finite() && step.is_finite()) {
                return bad(key, "start, stop and step must be finite");
            }
            if *step <= 0.0 {
                return bad(key, "step must be positive");
            }
            if start > stop {
                return bad(key, "empty (start > stop)");
            }
            snr_grid(*start, *stop, *step).or_else(|e| bad(key, e))?
        }
    };
    if v.is_empty() {
        return bad(key, "empty");
    }
    if v.iter().any(|x| !x.is_finite()) {
        return bad(key, "values must be finite");
    }
    Ok(v)
}

fn check_label(key: &str, label: &str) -> Result<(), ConfigError> {
    let ok = !label.is_empty()
        && label
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.');
    if ok {
        Ok(())
    } else {
        bad(key, "labels use letters, digits, '-', '_' or '.'")
    }
}

impl RunConfig {
    pub fn resolve(&self) -> Result<Resolved, ConfigError> {
        check_label("name", &self.name)?;
        let constellation = match &self.constellation {
            ConstellationConfig::Qam(m) => Constellation::square_qam(*m),
            ConstellationConfig::Symmetric(p) => Constellation::symmetric(p),
            ConstellationConfig::Levels(l) => Constellation::new(l.clone()),
        }
        .or_else(|e| bad("constellation", e))?;
        if self.oversampling == 0 {
            return bad("oversampling", "must be >= 1");
        }
        let mut setups = vec![Setup {
            label: String::new(),
            spec: self.quantizer.spec("quantizer")?,
            oversampling: self.oversampling,
        }];
        if !self.variants.is_empty() {
            setups.clear();
            for (i, v) in self.variants.iter().enumerate() {
                check_label(&format!("variants[{i}].label"), &v.label)?;
                if setups.iter().any(|s| s.label == v.label) {
                    return bad(&format!("variants[{i}].label"), format!("duplicate \"{}\"", v.label));
                }
                if v.oversampling == 0 {
                    return bad(&format!("variants[{i}].oversampling"), "must be >= 1");
                }
                setups.push(Setup {
                    label: v.label.clone(),
                    spec: v.quantizer.spec(&format!("variants[{i}].quantizer"))?,
                    oversampling: v.oversampling,
                });
            }
        }
        if self.detectors.is_empty() {
            return bad("detectors", "empty");
        }
        for (i, d) in self.detectors.iter().enumerate() {
            if self.detectors[..i].contains(d) {
                return bad("detectors", format!("{d} listed twice"));
            }
        }
        let snr_grid = self.snr_grid.as_ref().map(|g| grid_values("snr_grid", g)).transpose()?;
        if let Some(OperatingPoint::Db(v)) = self.operating_snr_db {
            if !v.is_finite() {
                return bad("operating_snr_db", "must be finite");
            }
        }
        let cap = match self.enumeration_cap {
            Some(0) => return bad("enumeration_cap", "must be >= 1"),
            Some(c) => c as u128,
            None => DEFAULT_ENUMERATION_CAP,
        };
        if let Some(mc) = &self.mc {
            validate_mc(mc)?;
        }
        if let Some(p) = &self.power {
            if p.bit_range[0] == 0 || p.bit_range[0] > p.bit_range[1] || p.bit_range[1] > 30 {
                return bad("power.bit_range", "need 1 <= low <= high <= 30");
            }
        }
        if let Some(o) = &self.optimize {
            if let Some(0) = o.budget {
                return bad("optimize.budget", "must be >= 1");
            }
            SearchSpace {
                mode: o.mode,
                grids: o.grids.clone(),
            }
            .validate()
            .or_else(|e| bad("optimize.grids", e))?;
        }
        Ok(Resolved {
            constellation,
            setups,
            snr_grid,
            cap,
        })
    }

    pub fn require_grid<'a>(&self, r: &'a Resolved) -> Result<&'a [f64], ConfigError> {
        match &r.snr_grid {
            Some(g) => Ok(g),
            None => bad("snr_grid", "missing"),
        }
    }

    pub fn search_space(&self) -> Result<(SearchSpace, u128), ConfigError> {
        let Some(o) = &self.optimize else {
            return bad("optimize", "missing section");
        };
        let space = SearchSpace {
            mode: o.mode,
            grids: o.grids.clone(),
        };
        Ok((space, o.budget.map_or(DEFAULT_BUDGET, u128::from)))
    }
}

pub fn validate_mc(mc: &McSection) -> Result<(), ConfigError> {
    if mc.trials == 0 {
        return bad("mc.trials", "must be >= 1");
    }
    if let Dither::Variance(v) = mc.dither {
        if !(v >= 0.0 && v.is_finite()) {
            return bad("mc.dither", "variance must be >= 0");
        }
    }
    if !(mc.channel_error_var >= 0.0 && mc.channel_error_var.is_finite()) {
        return bad("mc.channel_error_var", "must be >= 0");
    }
    if mc.channel_block_len == 0 {
        return bad("mc.channel_block_len", "must be >= 1");
    }
    if let Some(g) = &mc.dither_search {
        grid_values("mc.dither_search", g)?;
    }
    Ok(())
}

pub fn dither_search_grid(mc: &McSection) -> Result<Vec<f64>, ConfigError> {
    match &mc.dither_search {
        Some(g) => grid_values("mc.dither_search", g),
        None => snr_grid(-10.0, 40.0, 0.1).or_else(|e| bad("mc.dither_search", e)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"{
        "name": "t",
        "quantizer": {"bits": 1, "step": 2.0},
        "oversampling": 64,
        "constellation": {"qam": 16},
        "snr_grid": {"start": -10, "stop": 20, "step": 0.5}
    }"#;

    #[test]
    fn parses_minimal() {
        let c = parse(BASE.as_bytes()).unwrap();
        let r = c.resolve().unwrap();
        assert_eq!(r.snr_grid.unwrap().len(), 61);
        assert_eq!(r.setups.len(), 1);
        assert_eq!(c.detectors, vec![Detector::Ml]);
    }

    #[test]
    fn unknown_key_named() {
        let s = BASE.replace("\"oversampling\"", "\"oversampling_factor\": 1, \"oversampling\"");
        let e = parse(s.as_bytes()).unwrap_err().to_string();
        assert!(e.contains("oversampling_factor"), "{e}");
        let s = BASE.replace("\"step\": 2.0}", "\"step\": 2.0, \"offset\": 1}");
        let e = parse(s.as_bytes()).unwrap_err().to_string();
        assert!(e.starts_with("quantizer"), "{e}");
    }

    #[test]
    fn empty_grid_named() {
        let s = BASE.replace(r#"{"start": -10, "stop": 20, "step": 0.5}"#, "[]");
        let e = parse(s.as_bytes()).unwrap().resolve().unwrap_err().to_string();
        assert_eq!(e, "snr_grid: empty");
        let s = BASE.replace("\"stop\": 20", "\"stop\": -20");
        let e = parse(s.as_bytes()).unwrap().resolve().unwrap_err().to_string();
        assert!(e.starts_with("snr_grid: empty"), "{e}");
    }

    #[test]
    fn bad_quantizer_named() {
        let s = BASE.replace("\"bits\": 1", "\"bits\": 0");
        let e = parse(s.as_bytes()).unwrap().resolve().unwrap_err().to_string();
        assert!(e.starts_with("quantizer:"), "{e}");
    }

    #[test]
    fn dither_forms() {
        assert_eq!("off".parse::<Dither>().unwrap(), Dither::Off);
        assert_eq!("auto".parse::<Dither>().unwrap(), Dither::Auto);
        assert_eq!("0.25".parse::<Dither>().unwrap(), Dither::Variance(0.25));
        assert!("x".parse::<Dither>().is_err());
        let m: McSection = serde_json::from_str(r#"{"dither": 0.5}"#).unwrap();
        assert_eq!(m.dither, Dither::Variance(0.5));
        let m: McSection = serde_json::from_str(r#"{"dither": "auto"}"#).unwrap();
        assert_eq!(m.dither, Dither::Auto);
    }

    #[test]
    fn operating_point_forms() {
        let s = BASE.replace("\"oversampling\"", "\"operating_snr_db\": \"optimum\", \"oversampling\"");
        assert_eq!(parse(s.as_bytes()).unwrap().operating_snr_db, Some(OperatingPoint::Optimum));
        let s = BASE.replace("\"oversampling\"", "\"operating_snr_db\": \"best\", \"oversampling\"");
        assert!(parse(s.as_bytes()).unwrap_err().to_string().starts_with("operating_snr_db"));
    }
}
