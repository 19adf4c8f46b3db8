use crate::config::{dither_search_grid, ConfigError, Dither, McSection, OperatingPoint, Resolved, RunConfig, Setup};
use crate::output::{plain, sci, Csv, Outputs};
use crate::plot::{Plot, Style};
use anyhow::Result;
use qser::channel::{adc_power, iso_power_configs, AdcPowerSpec};
use qser::detectors::decision_rule;
use qser::montecarlo::{effective_config, optimum_dither, simulate_ser, McConfig};
use qser::optimizer::{detect_plateau, optimize, profile, Objective, PLATEAU_TOLERANCE};
use qser::ser::{analytic_ser, min_ser_over_snr, min_of_sweep, per_symbol_errors, sweep};
use qser::stats::{clt_pdf, d_moments, level_pmfs, pmf_of_d};
use qser::{Detector, SystemConfig};
use serde_json::{json, Value};

pub struct Run<'a> {
    pub cfg: &'a RunConfig,
    pub res: Resolved,
    pub plot: bool,
    pub out: Outputs,
}

fn config_err<T>(key: &str, msg: impl std::fmt::Display) -> Result<T> {
    Err(ConfigError(format!("{key}: {msg}")).into())
}

fn stem(cmd: &str, setup: &Setup) -> String {
    if setup.label.is_empty() {
        cmd.to_string()
    } else {
        format!("{cmd}_{}", setup.label)
    }
}

fn setup_name(setup: &Setup) -> String {
    if setup.label.is_empty() {
        format!("b={} N={}", setup.spec.bits(), setup.oversampling)
    } else {
        setup.label.clone()
    }
}

fn amplitude_tag(x: f64) -> String {
    format!("x{x}")
}

impl Run<'_> {
    fn title(&self, what: &str) -> String {
        format!("{} {what}", self.cfg.name)
    }

    fn operating_snr(&self, setup: &Setup, det: Detector) -> Result<f64> {
        match self.cfg.operating_snr_db {
            Some(OperatingPoint::Db(v)) => Ok(v),
            Some(OperatingPoint::Optimum) => {
                let grid = self.cfg.require_grid(&self.res)?;
                let m = min_ser_over_snr(
                    det,
                    setup.oversampling,
                    setup.spec,
                    &self.res.constellation,
                    grid,
                    self.res.cap,
                )?;
                Ok(m.snr_db)
            }
            None => config_err("operating_snr_db", "missing"),
        }
    }

    pub fn ser_sweep(&mut self) -> Result<Value> {
        let grid = self.cfg.require_grid(&self.res)?.to_vec();
        let c = &self.res.constellation;
        let mut plot = Plot::new(&self.title("SER"), "SNR [dB]", "SER", true);
        let mut summary = Vec::new();
        for setup in &self.res.setups {
            let mut csv = Csv::new(&["snr_db", "detector", "ser", "ser_component"]);
            for &det in &self.cfg.detectors {
                let pts = sweep(det, setup.oversampling, setup.spec, c, &grid, self.res.cap)?;
                for p in &pts {
                    csv.row(&[plain(p.snr_db), det.to_string(), sci(p.ser), sci(p.ser_component)]);
                }
                let best = min_of_sweep(&pts)?;
                summary.push(json!({
                    "setup": setup_name(setup),
                    "detector": det,
                    "min_ser": best.ser,
                    "argmin_snr_db": best.snr_db,
                    "fallback_points": pts.iter().filter(|p| p.fallback).count(),
                }));
                let name = if self.res.setups.len() > 1 {
                    format!("{} {det}", setup_name(setup))
                } else {
                    det.to_string()
                };
                plot.add(name, pts.iter().map(|p| (p.snr_db, p.ser)).collect(), Style::Line);
            }
            self.out.csv(&format!("{}.csv", stem("ser-sweep", setup)), csv)?;
        }
        if self.plot {
            self.out.svg("ser-sweep.svg", plot.render())?;
        }
        Ok(json!({ "minima": summary }))
    }

    pub fn pmf(&mut self) -> Result<Value> {
        let c = &self.res.constellation;
        let amplitudes = self
            .cfg
            .pmf
            .as_ref()
            .and_then(|p| p.amplitudes.clone())
            .unwrap_or_else(|| c.levels().to_vec());
        if amplitudes.is_empty() || amplitudes.iter().any(|x| !x.is_finite()) {
            return config_err("pmf.amplitudes", "need finite values");
        }
        let mut summary = Vec::new();
        for setup in &self.res.setups {
            let snr = self.operating_snr(setup, self.cfg.detectors[0])?;
            let cfg = SystemConfig::from_snr_db(setup.oversampling, snr, c)?;
            let mut plot = Plot::new(
                &format!("{} PMF of d, {} at {snr} dB", self.cfg.name, setup_name(setup)),
                "d",
                "probability",
                true,
            );
            for &x in &amplitudes {
                let pmf = pmf_of_d(x, &cfg, setup.spec);
                let mut csv = Csv::new(&["d", "prob"]);
                let mut pts = Vec::with_capacity(pmf.len());
                for j in 0..pmf.len() {
                    let p = pmf.prob(j);
                    csv.row(&[plain(pmf.d(j)), sci(p)]);
                    pts.push((pmf.d(j), p));
                }
                let density = d_moments(x, &cfg, setup.spec);
                summary.push(json!({
                    "setup": setup_name(setup),
                    "snr_db": snr,
                    "amplitude": x,
                    "mean": pmf.mean(),
                    "variance": pmf.variance(),
                    "total": pmf.total(),
                }));
                self.out.csv(&format!("{}_{}.csv", stem("pmf", setup), amplitude_tag(x)), csv)?;
                let h = pmf.spacing();
                let clt: Vec<(f64, f64)> = pts.iter().map(|&(d, _)| (d, clt_pdf(d, &density) * h)).collect();
                plot.add(format!("x={x}"), pts, Style::Markers);
                plot.add(format!("x={x} Gaussian"), clt, Style::Line);
            }
            if self.plot {
                self.out.svg(&format!("{}.svg", stem("pmf", setup)), plot.render())?;
            }
        }
        Ok(json!({ "pmfs": summary }))
    }

    pub fn thresholds(&mut self) -> Result<Value> {
        if let Some(d) = self.cfg.detectors.iter().find(|d| !d.is_threshold_rule()) {
            return config_err("detectors", format!("{d} has no thresholds"));
        }
        let c = &self.res.constellation;
        let mut summary = Vec::new();
        for setup in &self.res.setups {
            let mut csv = Csv::new(&["detector", "i", "b_i"]);
            let snr = self.operating_snr(setup, self.cfg.detectors[0])?;
            let cfg = SystemConfig::from_snr_db(setup.oversampling, snr, c)?;
            let mut plot = Plot::new(
                &format!("{} thresholds, {} at {snr} dB", self.cfg.name, setup_name(setup)),
                "d",
                "probability",
                true,
            );
            for &det in &self.cfg.detectors {
                let rule = decision_rule(det, &cfg, setup.spec, c)?;
                for (i, &b) in rule.thresholds().iter().enumerate() {
                    csv.row(&[det.to_string(), (i + 1).to_string(), plain(b)]);
                    plot.markers.push((b, format!("{det} b{}", i + 1)));
                }
                summary.push(json!({
                    "setup": setup_name(setup),
                    "snr_db": snr,
                    "detector": det,
                    "thresholds": rule.thresholds(),
                    "fallback": rule.fallback(),
                }));
            }
            self.out.csv(&format!("{}.csv", stem("thresholds", setup)), csv)?;
            if self.plot {
                for (x, pmf) in c.levels().iter().zip(level_pmfs(&cfg, setup.spec, c)) {
                    let pts = (0..pmf.len()).map(|j| (pmf.d(j), pmf.prob(j))).collect();
                    plot.add(format!("x={x}"), pts, Style::Markers);
                }
                self.out.svg(&format!("{}.svg", stem("thresholds", setup)), plot.render())?;
            }
        }
        Ok(json!({ "rules": summary }))
    }

    pub fn per_symbol(&mut self) -> Result<Value> {
        let c = &self.res.constellation;
        let mut summary = Vec::new();
        for setup in &self.res.setups {
            let mut plot = Plot::new(
                &format!("{} per-symbol errors, {}", self.cfg.name, setup_name(setup)),
                "level",
                "error rate",
                true,
            );
            for &det in &self.cfg.detectors {
                let snr = self.operating_snr(setup, det)?;
                let cfg = SystemConfig::from_snr_db(setup.oversampling, snr, c)?;
                let (rates, fallback) = per_symbol_errors(det, &cfg, setup.spec, c, self.res.cap)?;
                let mut csv = Csv::new(&["level", "error_rate"]);
                for (x, r) in c.levels().iter().zip(&rates) {
                    csv.row(&[plain(*x), sci(*r)]);
                }
                let component = rates.iter().sum::<f64>() / rates.len() as f64;
                summary.push(json!({
                    "setup": setup_name(setup),
                    "detector": det,
                    "snr_db": snr,
                    "ser": qser::ser::qam_ser(component)?,
                    "fallback": fallback,
                }));
                self.out.csv(&format!("{}_{det}.csv", stem("per-symbol", setup)), csv)?;
                plot.add(
                    format!("{det} at {snr} dB"),
                    c.levels().iter().copied().zip(rates).collect(),
                    Style::LineMarkers,
                );
            }
            if self.plot {
                self.out.svg(&format!("{}.svg", stem("per-symbol", setup)), plot.render())?;
            }
        }
        Ok(json!({ "operating_points": summary }))
    }

    pub fn mc(&mut self) -> Result<Value> {
        let grid = self.cfg.require_grid(&self.res)?.to_vec();
        let section = self.cfg.mc.clone().unwrap_or_default();
        let search = match section.dither {
            Dither::Auto => Some(dither_search_grid(&section)?),
            _ => None,
        };
        let c = &self.res.constellation;
        let mut summary = Vec::new();
        let mut plot = Plot::new(&self.title("Monte Carlo SER"), "SNR [dB]", "SER", true);
        for setup in &self.res.setups {
            for &det in &self.cfg.detectors {
                let mut csv = Csv::new(&["snr_db", "ser_mc", "stderr", "ser_analytic"]);
                let (mut mc_pts, mut an_pts) = (Vec::new(), Vec::new());
                for &snr in &grid {
                    let cfg = SystemConfig::from_snr_db(setup.oversampling, snr, c)?;
                    let variance = match section.dither {
                        Dither::Off => 0.0,
                        Dither::Variance(v) => v,
                        Dither::Auto => {
                            let grid = search.as_deref().unwrap_or_default();
                            optimum_dither(&cfg, setup.spec, c, det, grid, self.res.cap)?.variance
                        }
                    };
                    let mc = mc_config(&section, det, variance);
                    let r = simulate_ser(&cfg, setup.spec, c, &mc)?;
                    let eff = effective_config(&cfg, c, variance)?;
                    let a = analytic_ser(det, &eff, setup.spec, c, self.res.cap)?.ser;
                    csv.row(&[plain(snr), sci(r.ser), sci(r.stderr), sci(a)]);
                    summary.push(json!({
                        "setup": setup_name(setup),
                        "detector": det,
                        "snr_db": snr,
                        "dither_variance": variance,
                        "effective_snr_db": eff.snr_db(),
                        "errors": r.errors,
                        "trials": r.trials,
                    }));
                    mc_pts.push((snr, r.ser));
                    an_pts.push((snr, a));
                }
                self.out.csv(&format!("{}_{det}.csv", stem("mc", setup)), csv)?;
                let name = if self.res.setups.len() > 1 {
                    format!("{} {det}", setup_name(setup))
                } else {
                    det.to_string()
                };
                plot.add(format!("{name} analytic"), an_pts, Style::Line);
                plot.add(format!("{name} simulated"), mc_pts, Style::Markers);
            }
        }
        if self.plot {
            self.out.svg("mc.svg", plot.render())?;
        }
        Ok(json!({ "points": summary }))
    }

    pub fn power(&mut self) -> Result<Value> {
        let Some(p) = &self.cfg.power else {
            return config_err("power", "missing section");
        };
        let base = AdcPowerSpec {
            gamma: p.gamma,
            zeta: p.zeta,
            nu: p.nu,
            bits: p.base_bits.unwrap_or(self.cfg.quantizer.bits),
            sample_rate_hz: p.sample_rate_hz,
            branches: p.base_branches.unwrap_or(self.cfg.oversampling),
        };
        if let Err(e) = base.validate() {
            return config_err("power", e);
        }
        let set = match iso_power_configs(&base, p.bit_range[0]..=p.bit_range[1]) {
            Ok(s) => s,
            Err(e) => return config_err("power", e),
        };
        let mut csv = Csv::new(&["bits", "N", "power_watts"]);
        let mut pts = Vec::new();
        for &(b, n) in &set.configs {
            let w = adc_power(&AdcPowerSpec { bits: b, branches: n, ..base });
            csv.row(&[b.to_string(), n.to_string(), sci(w)]);
            pts.push((b as f64, w));
        }
        self.out.csv("power.csv", csv)?;
        if self.plot {
            let mut plot = Plot::new(&self.title("iso-power configurations"), "bits", "ADC power [W]", true);
            plot.add("iso-power", pts, Style::LineMarkers);
            self.out.svg("power.svg", plot.render())?;
        }
        Ok(json!({
            "base_power_watts": adc_power(&base),
            "configs": set.configs,
            "dropped_bits": set.dropped,
        }))
    }

    pub fn optimize(&mut self) -> Result<Value> {
        let (space, budget) = self.cfg.search_space()?;
        if self.cfg.detectors.len() != 1 {
            return config_err("detectors", "optimize takes exactly one detector");
        }
        if !self.cfg.variants.is_empty() {
            return config_err("variants", "optimize uses the base quantizer only");
        }
        let grid = self.cfg.require_grid(&self.res)?.to_vec();
        let setup = &self.res.setups[0];
        let obj = Objective {
            oversampling: setup.oversampling,
            quantizer: setup.spec,
            detector: self.cfg.detectors[0],
            snr_db: &grid,
            enumeration_cap: self.res.cap,
        };
        let o = optimize(&space, &obj, budget)?;
        let mut csv = Csv::new(&["a1", "a2", "a3", "a4", "min_ser", "argmin_snr_db"]);
        for p in &o.landscape {
            let mut cells: Vec<String> = (0..4).map(|i| p.params.get(i).map(|v| plain(*v)).unwrap_or_default()).collect();
            cells.push(sci(p.min_ser));
            cells.push(plain(p.argmin_snr_db));
            csv.row(&cells);
        }
        self.out.csv("landscape.csv", csv)?;
        let plateaus: Vec<_> = (0..space.grids.len())
            .map(|i| detect_plateau(&o.landscape, i, PLATEAU_TOLERANCE))
            .collect();
        if self.plot {
            let mut plot = Plot::new(&self.title("minimum SER profiles"), "parameter value", "minimum SER", true);
            for i in 0..space.grids.len() {
                plot.add(format!("a{}", i + 1), profile(&o.landscape, i), Style::LineMarkers);
            }
            self.out.svg("landscape.svg", plot.render())?;
        }
        Ok(json!({
            "cells": o.landscape.len(),
            "snr_points": grid.len(),
            "best": o.best,
            "best_levels": space.constellation(&o.best.params)?.levels(),
            "plateaus": plateaus,
        }))
    }
}

fn mc_config(section: &McSection, det: Detector, variance: f64) -> McConfig {
    McConfig {
        trials: section.trials,
        seed: section.seed,
        artificial_noise_var: variance,
        channel_error_var: section.channel_error_var,
        channel_block_len: section.channel_block_len,
        detector: det,
    }
}
