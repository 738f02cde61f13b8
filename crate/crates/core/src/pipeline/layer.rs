//! One linear layer `Y = X W` through the full framework.
//!
//! Quantization time: collect activation maxima, smooth, fence outlier
//! channels, derive `T_x`, plan and flatten activations, repeat weight rows,
//! derive `T_w` from the repeated weight, flatten weight rows, choose the bit
//! width, round the weight (round-to-nearest or GPTQ).
//!
//! Inference time: divide by the smoothing scales, flatten with the static
//! plan, repeat columns for the weight plan, quantize with the static scale
//! `T_x / qmax` and run the integer GEMM.

use serde::{Deserialize, Serialize};

use crate::calibration::{collect_channel_maxes, ChannelStats, TruncationPolicy};
use crate::config::{Mode, QuantConfig};
use crate::error::{Error, Result};
use crate::flatten::{
    build_flatten_plan, flatten_rows, flatten_tensor, flatten_tensor_saturating, repeat_channels,
    repeat_columns, FlattenPlan,
};
use crate::gptq::{gptq_optimize, hessian_from_calibration};
use crate::quantize::{
    int_matmul, quantize_per_tensor, select_bit_width, BitSelection, BitWidth, KlRatio, QuantParams,
    QuantizedTensor,
};
use crate::smoothing::{divide_columns, scale_rows, smoothing_scales, SmoothingScales};
use crate::tensor_io::Matrix;

/// Calibration-time state for the activation side of a layer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerCalibration {
    pub act_stats: ChannelStats,
    pub smoothing: SmoothingScales,
    /// Activation channel maxima after dividing by the smoothing scales.
    pub smoothed_max_abs: Vec<f64>,
    pub truncation: TruncationPolicy,
    pub plan_x: FlattenPlan,
}

pub fn calibrate_layer(w: &Matrix, calib: &[Matrix], cfg: &QuantConfig) -> Result<LayerCalibration> {
    cfg.validate()?;
    let act_stats = collect_channel_maxes(calib)?;
    if act_stats.channels() != w.rows() {
        return Err(Error::ShapeMismatch(format!(
            "calibration has {} channels, weight has {} input channels",
            act_stats.channels(),
            w.rows()
        )));
    }
    let smoothing = if cfg.smoothing {
        smoothing_scales(&act_stats.max_abs, &w.row_max_abs(), cfg.alpha)?
    } else {
        SmoothingScales::identity(w.rows())
    };
    // division by a positive scale is monotone, so the smoothed maxima are
    // exactly the maxima of the smoothed samples
    let smoothed_max_abs: Vec<f64> = act_stats
        .max_abs
        .iter()
        .zip(&smoothing.s)
        .map(|(m, s)| m / s)
        .collect();
    let truncation = TruncationPolicy::from_maxes(&smoothed_max_abs, cfg.beta, cfg.clip_outliers)?;
    let plan_x = build_flatten_plan(&smoothed_max_abs, truncation.threshold, cfg.block)?;
    Ok(LayerCalibration {
        act_stats,
        smoothing,
        smoothed_max_abs,
        truncation,
        plan_x,
    })
}

/// Complete recipe for one quantized linear layer.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerQuantConfig {
    pub config: QuantConfig,
    pub in_features: usize,
    pub out_features: usize,
    pub bits: BitWidth,
    pub smooth_scales: SmoothingScales,
    pub truncation: TruncationPolicy,
    pub weight_truncation: TruncationPolicy,
    pub plan_x: FlattenPlan,
    pub plan_w: FlattenPlan,
    pub weight_q: QuantizedTensor,
    pub act_scale: f64,
    pub kl_ratio_act: KlRatio,
    pub kl_ratio_w: KlRatio,
}

impl LayerQuantConfig {
    pub fn mode(&self) -> Mode {
        self.config.mode
    }

    pub fn gptq(&self) -> bool {
        self.config.mode.uses_gptq()
    }

    /// Contraction width seen by the integer GEMM.
    pub fn padded_width(&self) -> usize {
        self.plan_w.padded_width()
    }

    pub fn act_params(&self) -> QuantParams {
        QuantParams {
            bits: self.bits,
            scale: self.act_scale,
        }
    }
}

/// Activation after smoothing and both flatten stages.
pub(crate) fn expand_activation(
    x: &Matrix,
    smoothing: &SmoothingScales,
    plan_x: &FlattenPlan,
    plan_w: &FlattenPlan,
    saturate: bool,
) -> Result<(Matrix, usize)> {
    let xs = divide_columns(x, &smoothing.s)?;
    let (x1, saturated) = if saturate {
        flatten_tensor_saturating(&xs, plan_x)?
    } else {
        (flatten_tensor(&xs, plan_x)?, 0)
    };
    Ok((repeat_columns(&x1, plan_w)?, saturated))
}

/// Intermediate tensors of the weight path, exposed for analysis.
#[derive(Clone, Debug)]
pub struct FlattenedLayer {
    pub weight: Matrix,
    pub calib: Vec<Matrix>,
    pub plan_w: FlattenPlan,
    pub weight_truncation: TruncationPolicy,
}

pub fn flatten_layer(
    w: &Matrix,
    calib: &[Matrix],
    calibration: &LayerCalibration,
    cfg: &QuantConfig,
) -> Result<FlattenedLayer> {
    let plan_x = &calibration.plan_x;
    let w1 = repeat_channels(&scale_rows(w, &calibration.smoothing.s)?, plan_x)?;
    let row_max = w1.row_max_abs();
    // pad rows are not channels, keep them out of the weight threshold
    let weight_truncation =
        TruncationPolicy::from_maxes(&row_max[..plan_x.expanded_width()], cfg.beta, cfg.clip_outliers)?;
    let plan_w = build_flatten_plan(&row_max, weight_truncation.threshold, cfg.block)?;
    let weight = flatten_rows(&w1, &plan_w)?;
    let calib = calib
        .iter()
        .map(|x| expand_activation(x, &calibration.smoothing, plan_x, &plan_w, false).map(|(m, _)| m))
        .collect::<Result<Vec<_>>>()?;
    Ok(FlattenedLayer {
        weight,
        calib,
        plan_w,
        weight_truncation,
    })
}

pub fn quantize_layer(w: &Matrix, calib: &[Matrix], cfg: &QuantConfig) -> Result<LayerQuantConfig> {
    let calibration = calibrate_layer(w, calib, cfg)?;
    quantize_calibrated_layer(w, calib, &calibration, cfg)
}

/// Weight-side stages for a layer whose activation calibration is known.
pub fn quantize_calibrated_layer(
    w: &Matrix,
    calib: &[Matrix],
    calibration: &LayerCalibration,
    cfg: &QuantConfig,
) -> Result<LayerQuantConfig> {
    cfg.validate()?;
    if calibration.plan_x.channels() != w.rows() {
        return Err(Error::ShapeMismatch(format!(
            "calibration plan has {} channels, weight has {} input channels",
            calibration.plan_x.channels(),
            w.rows()
        )));
    }
    let flat = flatten_layer(w, calib, calibration, cfg)?;
    let stacked = Matrix::vstack(&flat.calib)?;
    let selection = select_bit_width(&stacked, &flat.weight, cfg.gamma, cfg.bins)?;
    let bits = if cfg.mode.mixed_precision() {
        selection.bits
    } else {
        BitWidth::Int8
    };
    let weight_params = QuantParams::for_max(bits, flat.weight.max_abs())?;
    let weight_q = if cfg.mode.uses_gptq() {
        let h = hessian_from_calibration(&flat.calib, cfg.damping)?;
        gptq_optimize(&flat.weight, &h, weight_params)?
    } else {
        quantize_per_tensor(&flat.weight, bits, Some(weight_params.scale))?
    };
    let BitSelection { act, weight, .. } = selection;
    Ok(LayerQuantConfig {
        config: cfg.clone(),
        in_features: w.rows(),
        out_features: w.cols(),
        bits,
        smooth_scales: calibration.smoothing.clone(),
        truncation: calibration.truncation.clone(),
        weight_truncation: flat.weight_truncation,
        plan_x: calibration.plan_x.clone(),
        plan_w: flat.plan_w,
        weight_q,
        act_scale: calibration.truncation.threshold / bits.qmax() as f64,
        kl_ratio_act: act,
        kl_ratio_w: weight,
    })
}

#[derive(Clone, Debug)]
pub struct LayerOutput {
    pub y: Matrix,
    /// Activation elements clamped to their channel capacity.
    pub saturation_events: usize,
}

pub fn run_layer(cfg: &LayerQuantConfig, x: &Matrix) -> Result<LayerOutput> {
    if x.cols() != cfg.in_features {
        return Err(Error::ShapeMismatch(format!(
            "input has {} channels, layer expects {}",
            x.cols(),
            cfg.in_features
        )));
    }
    let (x2, saturation_events) = expand_activation(x, &cfg.smooth_scales, &cfg.plan_x, &cfg.plan_w, true)?;
    let qx = quantize_per_tensor(&x2, cfg.bits, Some(cfg.act_scale))?;
    Ok(LayerOutput {
        y: int_matmul(&qx, &cfg.weight_q)?,
        saturation_events,
    })
}
