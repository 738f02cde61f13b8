//! A model is a named list of independent linear layers.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::layer::{quantize_layer, LayerQuantConfig};
use super::report::{evaluate_layer, LayerReport};
use crate::config::QuantConfig;
use crate::error::{Error, Result};
use crate::quantize::BitWidth;
use crate::synth::LayerData;
use crate::tensor_io::Matrix;

#[derive(Clone, Debug, PartialEq)]
pub struct ModelLayer {
    pub name: String,
    pub weight: Matrix,
    pub calib: Vec<Matrix>,
}

impl From<&LayerData> for ModelLayer {
    fn from(d: &LayerData) -> Self {
        Self {
            name: d.name.clone(),
            weight: d.weight.clone(),
            calib: d.calib.clone(),
        }
    }
}

/// Quantizes every layer, in parallel, preserving order.
pub fn quantize_model(layers: &[ModelLayer], cfg: &QuantConfig) -> Result<Vec<LayerQuantConfig>> {
    cfg.validate()?;
    layers
        .par_iter()
        .map(|l| quantize_layer(&l.weight, &l.calib, cfg))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedLayerReport {
    pub layer: String,
    #[serde(flatten)]
    pub report: LayerReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelReport {
    pub layers: Vec<NamedLayerReport>,
    /// Fraction of layers quantized to INT4.
    pub int4_fraction: f64,
    pub total_bytes: u64,
    pub total_bytes_fp16: u64,
    pub total_bitops: u64,
    pub mean_output_mse: f64,
    pub mean_sqnr_db: f64,
    pub mean_flatten_ratio_x: f64,
    pub mean_flatten_ratio_w: f64,
    pub saturation_events: usize,
}

impl ModelReport {
    pub fn from_layers(layers: Vec<NamedLayerReport>) -> Self {
        let n = layers.len().max(1) as f64;
        let mean = |f: fn(&LayerReport) -> f64| layers.iter().map(|l| f(&l.report)).sum::<f64>() / n;
        Self {
            int4_fraction: layers.iter().filter(|l| l.report.bits == BitWidth::Int4).count() as f64 / n,
            total_bytes: layers.iter().map(|l| l.report.weight_bytes_quantized).sum(),
            total_bytes_fp16: layers.iter().map(|l| l.report.weight_bytes_fp16).sum(),
            total_bitops: layers.iter().map(|l| l.report.bitops).sum(),
            mean_output_mse: mean(|r| r.output_mse),
            mean_sqnr_db: mean(|r| r.sqnr_db),
            mean_flatten_ratio_x: mean(|r| r.flatten_ratio_x),
            mean_flatten_ratio_w: mean(|r| r.flatten_ratio_w),
            saturation_events: layers.iter().map(|l| l.report.saturation_events).sum(),
            layers,
        }
    }

    /// FP16 bytes over quantized bytes.
    pub fn compression(&self) -> f64 {
        self.total_bytes_fp16 as f64 / self.total_bytes as f64
    }
}

/// Evaluates quantized layers on held-out inputs, one per layer.
pub fn evaluate_model(
    layers: &[ModelLayer],
    quantized: &[LayerQuantConfig],
    eval: &[Matrix],
) -> Result<ModelReport> {
    if layers.len() != quantized.len() || layers.len() != eval.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} layers, {} recipes, {} evaluation inputs",
            layers.len(),
            quantized.len(),
            eval.len()
        )));
    }
    let reports = layers
        .par_iter()
        .zip(quantized)
        .zip(eval)
        .map(|((l, q), x)| {
            Ok(NamedLayerReport {
                layer: l.name.clone(),
                report: evaluate_layer(q, x, &l.weight)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ModelReport::from_layers(reports))
}

/// Quantizes and evaluates generated layers in one call.
pub fn run_model(data: &[LayerData], cfg: &QuantConfig) -> Result<ModelReport> {
    let layers: Vec<ModelLayer> = data.iter().map(ModelLayer::from).collect();
    let eval: Vec<Matrix> = data.iter().map(|d| d.eval.clone()).collect();
    let quantized = quantize_model(&layers, cfg)?;
    evaluate_model(&layers, &quantized, &eval)
}
