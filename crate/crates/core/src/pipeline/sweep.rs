//! Ablation harness: rerun the model with one setting varied.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::model::{run_model, ModelReport};
use crate::config::QuantConfig;
use crate::error::{Error, Result};
use crate::synth::LayerData;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepParam {
    Beta,
    Gamma,
    Alpha,
    /// Outlier channel clipping on (nonzero) or off (zero).
    Clip,
    /// Channel smoothing on (nonzero) or off (zero).
    Smooth,
}

impl SweepParam {
    pub fn apply(self, base: &QuantConfig, value: f64) -> QuantConfig {
        let mut cfg = base.clone();
        match self {
            SweepParam::Beta => cfg.beta = value,
            SweepParam::Gamma => cfg.gamma = value,
            SweepParam::Alpha => cfg.alpha = value,
            SweepParam::Clip => cfg.clip_outliers = value != 0.0,
            SweepParam::Smooth => cfg.smoothing = value != 0.0,
        }
        cfg
    }
}

impl fmt::Display for SweepParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepParam::Beta => "beta",
            SweepParam::Gamma => "gamma",
            SweepParam::Alpha => "alpha",
            SweepParam::Clip => "clip",
            SweepParam::Smooth => "smooth",
        })
    }
}

impl FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "beta" => Ok(SweepParam::Beta),
            "gamma" => Ok(SweepParam::Gamma),
            "alpha" => Ok(SweepParam::Alpha),
            "clip" => Ok(SweepParam::Clip),
            "smooth" | "smoothing" => Ok(SweepParam::Smooth),
            other => Err(Error::InvalidParameter(format!("unknown sweep parameter '{other}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    pub int4_fraction: f64,
    pub flatten_ratio_x: f64,
    pub flatten_ratio_w: f64,
    pub output_mse: f64,
    pub sqnr_db: f64,
    pub total_bytes: u64,
}

impl SweepRow {
    fn from_report(value: f64, r: &ModelReport) -> Self {
        Self {
            value,
            int4_fraction: r.int4_fraction,
            flatten_ratio_x: r.mean_flatten_ratio_x,
            flatten_ratio_w: r.mean_flatten_ratio_w,
            output_mse: r.mean_output_mse,
            sqnr_db: r.mean_sqnr_db,
            total_bytes: r.total_bytes,
        }
    }
}

pub fn sweep(param: SweepParam, values: &[f64], base: &QuantConfig, model: &[LayerData]) -> Result<Vec<SweepRow>> {
    if values.is_empty() {
        return Err(Error::InvalidParameter("sweep needs at least one value".into()));
    }
    values
        .iter()
        .map(|&v| run_model(model, &param.apply(base, v)).map(|r| SweepRow::from_report(v, &r)))
        .collect()
}

pub fn sweep_csv(param: SweepParam, rows: &[SweepRow]) -> String {
    let mut out = format!("{param},int4_fraction,flatten_ratio_x,flatten_ratio_w,output_mse,sqnr_db,total_bytes\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.value, r.int4_fraction, r.flatten_ratio_x, r.flatten_ratio_w, r.output_mse, r.sqnr_db, r.total_bytes
        ));
    }
    out
}

/// True when `f` never increases along the rows.
pub fn non_increasing(rows: &[SweepRow], f: impl Fn(&SweepRow) -> f64) -> bool {
    rows.windows(2).all(|w| f(&w[1]) <= f(&w[0]))
}

pub fn non_decreasing(rows: &[SweepRow], f: impl Fn(&SweepRow) -> f64) -> bool {
    rows.windows(2).all(|w| f(&w[1]) >= f(&w[0]))
}
