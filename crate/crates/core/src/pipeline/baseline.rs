//! Per-tensor INT8 reference methods without flattening.

use crate::error::Result;
use crate::calibration::collect_channel_maxes;
use crate::quantize::{int_matmul, quantize_per_tensor, BitWidth, QuantParams, QuantizedTensor};
use crate::smoothing::{divide_columns, scale_rows};
use crate::tensor_io::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Baseline {
    /// Static per-tensor W8A8 on the raw tensors.
    NaiveW8A8,
    /// `s_j = max|X_j|^alpha / max|W_j|^(1 - alpha)` then static W8A8.
    SmoothQuant { alpha_permille: u32 },
}

impl Baseline {
    pub fn smoothquant(alpha: f64) -> Self {
        Baseline::SmoothQuant {
            alpha_permille: (alpha * 1000.0).round() as u32,
        }
    }
}

#[derive(Clone, Debug)]
pub struct BaselineLayer {
    pub divisor: Vec<f64>,
    pub act_params: QuantParams,
    pub weight_q: QuantizedTensor,
}

/// Classic max-ratio smoothing factors. Channels with a zero maximum on
/// either side keep a factor of 1.
pub fn smoothquant_scales(act_maxes: &[f64], weight_maxes: &[f64], alpha: f64) -> Vec<f64> {
    act_maxes
        .iter()
        .zip(weight_maxes)
        .map(|(&a, &w)| {
            if a > 0.0 && w > 0.0 {
                a.powf(alpha) / w.powf(1.0 - alpha)
            } else {
                1.0
            }
        })
        .collect()
}

pub fn build_baseline(kind: Baseline, w: &Matrix, calib: &[Matrix]) -> Result<BaselineLayer> {
    let stats = collect_channel_maxes(calib)?;
    let divisor = match kind {
        Baseline::NaiveW8A8 => vec![1.0; w.rows()],
        Baseline::SmoothQuant { alpha_permille } => {
            smoothquant_scales(&stats.max_abs, &w.row_max_abs(), alpha_permille as f64 / 1000.0)
        }
    };
    let act_max = stats
        .max_abs
        .iter()
        .zip(&divisor)
        .fold(0.0f64, |m, (a, d)| m.max(a / d));
    let ws = scale_rows(w, &divisor)?;
    Ok(BaselineLayer {
        act_params: QuantParams::for_max(BitWidth::Int8, act_max)?,
        weight_q: quantize_per_tensor(&ws, BitWidth::Int8, None)?,
        divisor,
    })
}

impl BaselineLayer {
    pub fn run(&self, x: &Matrix) -> Result<Matrix> {
        let xs = divide_columns(x, &self.divisor)?;
        let qx = quantize_per_tensor(&xs, BitWidth::Int8, Some(self.act_params.scale))?;
        int_matmul(&qx, &self.weight_q)
    }
}
