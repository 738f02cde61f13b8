//! Per-layer orchestration, model-level reports and ablation sweeps.

pub mod baseline;
pub mod layer;
pub mod model;
pub mod report;
pub mod sweep;

pub use baseline::{build_baseline, smoothquant_scales, Baseline, BaselineLayer};
pub use layer::{
    calibrate_layer, flatten_layer, quantize_calibrated_layer, quantize_layer, run_layer, FlattenedLayer,
    LayerCalibration, LayerOutput, LayerQuantConfig,
};
pub use model::{evaluate_model, quantize_model, run_model, ModelLayer, ModelReport, NamedLayerReport};
pub use report::{
    evaluate_layer, fp16_weight_bytes, gemm_bitops, quantized_weight_bytes, ErrorMetrics, LayerReport,
    SQNR_CAP_DB,
};
pub use sweep::{non_decreasing, non_increasing, sweep, sweep_csv, SweepParam, SweepRow};
