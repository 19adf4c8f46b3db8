//! Exhaustive grid search over symmetric constellation parameters.

use crate::error::{Error, Result};
use crate::model::{Constellation, Detector, QuantizerSpec};
use crate::ser::min_ser_over_snr;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Default cap on `cells * snr_points`.
pub const DEFAULT_BUDGET: u128 = 100_000 * 501;

/// Relative spread below which a tail of the landscape counts as flat.
pub const PLATEAU_TOLERANCE: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchMode {
    /// Positive levels `{1, a1, ..., ap}` with `1 < a1 < ... < ap`.
    OneBitFixedInner,
    /// Positive levels `{a1, ..., ap}` with `0 < a1 < ... < ap`.
    TwoBitFreeLevels,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamGrid {
    pub min: f64,
    pub max: f64,
    pub step: f64,
}

impl ParamGrid {
    pub fn new(min: f64, max: f64, step: f64) -> Self {
        ParamGrid { min, max, step }
    }

    pub fn single(v: f64) -> Self {
        ParamGrid {
            min: v,
            max: v,
            step: 1.0,
        }
    }

    /// Grid values, rounded to 1e-9.
    pub fn values(&self) -> Vec<f64> {
        let n = ((self.max - self.min) / self.step + 1e-9).floor() as usize;
        (0..=n)
            .map(|i| ((self.min + i as f64 * self.step) * 1e9).round() / 1e9)
            .collect()
    }

    fn validate(&self, i: usize) -> Result<()> {
        let ok = self.min.is_finite() && self.max.is_finite() && self.step > 0.0 && self.max >= self.min;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidSearchSpace(format!(
                "grid {i}: need finite min <= max and step > 0"
            )))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchSpace {
    pub mode: SearchMode,
    pub grids: Vec<ParamGrid>,
}

impl SearchSpace {
    pub fn validate(&self) -> Result<()> {
        if self.grids.is_empty() || self.grids.len() > 4 {
            return Err(Error::InvalidSearchSpace(format!(
                "expected 1 to 4 free parameters, got {}",
                self.grids.len()
            )));
        }
        for (i, g) in self.grids.iter().enumerate() {
            g.validate(i)?;
        }
        Ok(())
    }

    /// Feasible parameter tuples in lexicographic order.
    pub fn cells(&self) -> Result<Vec<Vec<f64>>> {
        self.validate()?;
        let floor = match self.mode {
            SearchMode::OneBitFixedInner => 1.0,
            SearchMode::TwoBitFreeLevels => 0.0,
        };
        let axes: Vec<Vec<f64>> = self.grids.iter().map(|g| g.values()).collect();
        let mut out = Vec::new();
        let mut cur = Vec::with_capacity(axes.len());
        fn walk(axes: &[Vec<f64>], lower: f64, cur: &mut Vec<f64>, out: &mut Vec<Vec<f64>>) {
            match axes.split_first() {
                None => out.push(cur.clone()),
                Some((axis, rest)) => {
                    for &v in axis.iter().filter(|&&v| v > lower) {
                        cur.push(v);
                        walk(rest, v, cur, out);
                        cur.pop();
                    }
                }
            }
        }
        walk(&axes, floor, &mut cur, &mut out);
        if out.is_empty() {
            return Err(Error::InvalidSearchSpace(
                "no parameter tuple satisfies the ordering constraint".into(),
            ));
        }
        Ok(out)
    }

    pub fn constellation(&self, params: &[f64]) -> Result<Constellation> {
        let mut positive = Vec::with_capacity(params.len() + 1);
        if self.mode == SearchMode::OneBitFixedInner {
            positive.push(1.0);
        }
        positive.extend_from_slice(params);
        Constellation::symmetric(&positive)
    }
}

/// One evaluated cell of the landscape.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LandscapePoint {
    pub params: Vec<f64>,
    pub min_ser: f64,
    pub argmin_snr_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Optimization {
    pub best: LandscapePoint,
    pub landscape: Vec<LandscapePoint>,
}

/// Shared evaluation settings.
#[derive(Debug, Clone, PartialEq)]
pub struct Objective<'a> {
    pub oversampling: usize,
    pub quantizer: QuantizerSpec,
    pub detector: Detector,
    pub snr_db: &'a [f64],
    pub enumeration_cap: u128,
}

pub fn evaluate_constellation(params: &[f64], constellation: &Constellation, obj: &Objective) -> Result<LandscapePoint> {
    let m = min_ser_over_snr(
        obj.detector,
        obj.oversampling,
        obj.quantizer,
        constellation,
        obj.snr_db,
        obj.enumeration_cap,
    )?;
    Ok(LandscapePoint {
        params: params.to_vec(),
        min_ser: m.ser,
        argmin_snr_db: m.snr_db,
    })
}

/// Evaluates every feasible cell; the best cell has the smallest minimum SER,
/// ties going to the lexicographically smallest parameters.
pub fn optimize(space: &SearchSpace, obj: &Objective, budget: u128) -> Result<Optimization> {
    if obj.snr_db.is_empty() {
        return Err(Error::EmptySnrGrid);
    }
    let cells = space.cells()?;
    let required = cells.len() as u128 * obj.snr_db.len() as u128;
    if required > budget {
        return Err(Error::BudgetExceeded { required, budget });
    }
    let landscape: Vec<LandscapePoint> = cells
        .par_iter()
        .map(|p| evaluate_constellation(p, &space.constellation(p)?, obj))
        .collect::<Result<_>>()?;
    let best = landscape
        .iter()
        .fold(None::<&LandscapePoint>, |acc, p| match acc {
            Some(b) if b.min_ser <= p.min_ser => Some(b),
            _ => Some(p),
        })
        .cloned()
        .expect("non-empty landscape");
    Ok(Optimization { best, landscape })
}

/// Flatness of the landscape along one parameter.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Plateau {
    pub param: usize,
    /// Relative spread `(max - min) / min` of the profile over the top decile of
    /// the parameter's grid values.
    pub tail_spread: f64,
    pub is_plateau: bool,
    /// Smallest parameter value from which the profile stays within the
    /// tolerance of its tail minimum.
    pub onset: Option<f64>,
}

/// Profile of the landscape along parameter `param`: for each value, the best
/// `min_ser` over all other parameters.
pub fn profile(landscape: &[LandscapePoint], param: usize) -> Vec<(f64, f64)> {
    let mut out: Vec<(f64, f64)> = Vec::new();
    let mut pts: Vec<(f64, f64)> = landscape.iter().map(|p| (p.params[param], p.min_ser)).collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    for (v, s) in pts {
        match out.last_mut() {
            Some(last) if last.0 == v => last.1 = last.1.min(s),
            _ => out.push((v, s)),
        }
    }
    out
}

pub fn detect_plateau(landscape: &[LandscapePoint], param: usize, tolerance: f64) -> Plateau {
    let prof = profile(landscape, param);
    let n = prof.len();
    let tail_len = (n.div_ceil(10)).max(2).min(n);
    let tail = &prof[n - tail_len..];
    let lo = tail.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let hi = tail.iter().map(|p| p.1).fold(0.0, f64::max);
    let tail_spread = if lo > 0.0 { (hi - lo) / lo } else if hi == 0.0 { 0.0 } else { f64::INFINITY };
    let is_plateau = n >= 2 && tail_spread < tolerance;
    let onset = if is_plateau {
        let mut start = n - 1;
        while start > 0 && (prof[start - 1].1 - lo).abs() <= tolerance * lo {
            start -= 1;
        }
        Some(prof[start].0)
    } else {
        None
    };
    Plateau {
        param,
        tail_spread,
        is_plateau,
        onset,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn obj(grid: &[f64]) -> Objective<'_> {
        Objective {
            oversampling: 16,
            quantizer: QuantizerSpec::new(1, 2.0).unwrap(),
            detector: Detector::Ml,
            snr_db: grid,
            enumeration_cap: 0,
        }
    }

    #[test]
    fn cells_respect_ordering() {
        let s = SearchSpace {
            mode: SearchMode::OneBitFixedInner,
            grids: vec![ParamGrid::new(0.5, 3.0, 0.5), ParamGrid::new(2.0, 4.0, 1.0)],
        };
        let cells = s.cells().unwrap();
        assert!(cells.iter().all(|c| 1.0 < c[0] && c[0] < c[1]));
        assert_eq!(cells.first().unwrap(), &vec![1.5, 2.0]);
        assert_eq!(cells.len(), 3 + 2 + 2 + 1);
        let mut sorted = cells.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(sorted, cells);
    }

    #[test]
    fn infeasible_space_rejected() {
        let s = SearchSpace {
            mode: SearchMode::TwoBitFreeLevels,
            grids: vec![ParamGrid::single(3.0), ParamGrid::single(2.0)],
        };
        assert!(matches!(s.cells(), Err(Error::InvalidSearchSpace(_))));
    }

    #[test]
    fn single_point_grid() {
        let grid = [0.0, 5.0, 10.0];
        let s = SearchSpace {
            mode: SearchMode::OneBitFixedInner,
            grids: vec![ParamGrid::single(3.0)],
        };
        let o = optimize(&s, &obj(&grid), DEFAULT_BUDGET).unwrap();
        assert_eq!(o.landscape.len(), 1);
        assert_eq!(o.best.params, vec![3.0]);
    }

    #[test]
    fn budget_enforced() {
        let grid: Vec<f64> = (0..100).map(|i| i as f64).collect();
        let s = SearchSpace {
            mode: SearchMode::OneBitFixedInner,
            grids: vec![ParamGrid::new(2.0, 20.0, 0.1)],
        };
        let e = optimize(&s, &obj(&grid), 1000).unwrap_err();
        assert!(e.is_budget());
    }

    #[test]
    fn plateau_detection() {
        let mk = |v: f64, s: f64| LandscapePoint {
            params: vec![v],
            min_ser: s,
            argmin_snr_db: 0.0,
        };
        let flat: Vec<_> = (0..20)
            .map(|i| mk(i as f64, if i < 8 { 1.0 - 0.1 * i as f64 } else { 0.2 }))
            .collect();
        let p = detect_plateau(&flat, 0, PLATEAU_TOLERANCE);
        assert!(p.is_plateau);
        assert_eq!(p.onset, Some(8.0));
        let slope: Vec<_> = (0..20).map(|i| mk(i as f64, 1.0 - 0.04 * i as f64)).collect();
        assert!(!detect_plateau(&slope, 0, PLATEAU_TOLERANCE).is_plateau);
    }
}
