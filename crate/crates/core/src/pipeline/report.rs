use serde::{Deserialize, Serialize};

use super::layer::{run_layer, LayerQuantConfig};
use crate::error::{Error, Result};
use crate::quantize::BitWidth;
use crate::tensor_io::Matrix;

/// SQNR reported for an exact match.
pub const SQNR_CAP_DB: f64 = 300.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorMetrics {
    pub output_mse: f64,
    pub sqnr_db: f64,
    pub cosine_sim: f64,
    pub max_abs_error: f64,
}

impl ErrorMetrics {
    pub fn between(output: &Matrix, reference: &Matrix) -> Result<Self> {
        if (output.rows(), output.cols()) != (reference.rows(), reference.cols()) {
            return Err(Error::ShapeMismatch(format!(
                "output {}x{} vs reference {}x{}",
                output.rows(),
                output.cols(),
                reference.rows(),
                reference.cols()
            )));
        }
        let n = output.data().len() as f64;
        let (mut err, mut sig, mut dot, mut out_sq, mut max_err) = (0.0, 0.0, 0.0, 0.0, 0.0f64);
        for (&o, &r) in output.data().iter().zip(reference.data()) {
            let d = o - r;
            err += d * d;
            sig += r * r;
            dot += o * r;
            out_sq += o * o;
            max_err = max_err.max(d.abs());
        }
        let sqnr_db = if err == 0.0 {
            SQNR_CAP_DB
        } else if sig == 0.0 {
            -SQNR_CAP_DB
        } else {
            (10.0 * (sig / err).log10()).min(SQNR_CAP_DB)
        };
        let cosine_sim = if sig == 0.0 && out_sq == 0.0 {
            1.0
        } else if sig == 0.0 || out_sq == 0.0 {
            0.0
        } else {
            dot / (sig.sqrt() * out_sq.sqrt())
        };
        Ok(Self {
            output_mse: err / n,
            sqnr_db,
            cosine_sim,
            max_abs_error: max_err,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerReport {
    pub output_mse: f64,
    pub sqnr_db: f64,
    pub cosine_sim: f64,
    pub max_abs_error: f64,
    pub flatten_ratio_x: f64,
    pub flatten_ratio_w: f64,
    pub bits: BitWidth,
    pub padded_width: usize,
    pub weight_bytes_quantized: u64,
    pub weight_bytes_fp16: u64,
    pub bitops: u64,
    pub saturation_events: usize,
}

/// Bytes of an integer weight with `rows` (padded) input channels.
pub fn quantized_weight_bytes(rows: usize, cols: usize, bits: BitWidth) -> u64 {
    rows as u64 * cols as u64 * bits.bits() as u64 / 8
}

pub fn fp16_weight_bytes(rows: usize, cols: usize) -> u64 {
    rows as u64 * cols as u64 * 2
}

/// `2 M N K bits_x bits_w`, the bit-operation count of the low-bit GEMM.
pub fn gemm_bitops(m: usize, n: usize, k: usize, bits_x: u32, bits_w: u32) -> u64 {
    2 * m as u64 * n as u64 * k as u64 * bits_x as u64 * bits_w as u64
}

/// Runs the quantized layer on `x_test` and compares against `x_test W_ref`
/// in double precision.
pub fn evaluate_layer(cfg: &LayerQuantConfig, x_test: &Matrix, w_ref: &Matrix) -> Result<LayerReport> {
    if (w_ref.rows(), w_ref.cols()) != (cfg.in_features, cfg.out_features) {
        return Err(Error::ShapeMismatch(format!(
            "reference weight {}x{} vs layer {}x{}",
            w_ref.rows(),
            w_ref.cols(),
            cfg.in_features,
            cfg.out_features
        )));
    }
    let out = run_layer(cfg, x_test)?;
    let reference = x_test.matmul(w_ref)?;
    let metrics = ErrorMetrics::between(&out.y, &reference)?;
    let k = cfg.padded_width();
    let bits = cfg.bits.bits();
    Ok(LayerReport {
        output_mse: metrics.output_mse,
        sqnr_db: metrics.sqnr_db,
        cosine_sim: metrics.cosine_sim,
        max_abs_error: metrics.max_abs_error,
        flatten_ratio_x: cfg.plan_x.flatten_ratio(),
        flatten_ratio_w: cfg.plan_w.flatten_ratio(),
        bits: cfg.bits,
        padded_width: k,
        weight_bytes_quantized: quantized_weight_bytes(k, cfg.out_features, cfg.bits),
        weight_bytes_fp16: fp16_weight_bytes(cfg.in_features, cfg.out_features),
        bitops: gemm_bitops(x_test.rows(), cfg.out_features, k, bits, bits),
        saturation_events: out.saturation_events,
    })
}
