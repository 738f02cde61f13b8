//! Seeded synthetic linear layers with planted outlier channels.
//!
//! Bulk activations are Gaussian with a log-normal per-channel standard
//! deviation. A fraction of channels is magnified so that its calibration
//! maximum is `factor` times the median bulk channel maximum, with `factor`
//! drawn uniformly from a range (20 to 100 by default). Weights are Gaussian
//! with a mild log-normal per-row spread.

use rand::{Rng, SeedableRng};
use rand::seq::index::sample;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::calibration::{collect_channel_maxes, quantile};
use crate::error::{Error, Result};
use crate::tensor_io::Matrix;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub layers: usize,
    pub channels: usize,
    pub out_features: usize,
    pub calib_batches: usize,
    pub tokens_per_batch: usize,
    pub eval_tokens: usize,
    pub outlier_fraction: f64,
    pub outlier_factor_min: f64,
    pub outlier_factor_max: f64,
    /// Standard deviation of `ln(sigma_j)` for bulk activation channels.
    pub act_channel_spread: f64,
    /// Standard deviation of `ln(sigma_j)` for weight rows.
    pub weight_row_spread: f64,
    pub weight_scale: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            layers: 24,
            channels: 512,
            out_features: 256,
            calib_batches: 4,
            tokens_per_batch: 128,
            eval_tokens: 128,
            outlier_fraction: 0.01,
            outlier_factor_min: 20.0,
            outlier_factor_max: 100.0,
            act_channel_spread: 0.1,
            weight_row_spread: 0.1,
            weight_scale: 0.05,
            seed: crate::config::DEFAULT_SEED,
        }
    }
}

impl SyntheticConfig {
    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.to_string()));
        if self.layers == 0 || self.channels == 0 || self.out_features == 0 {
            return bad("layers, channels and out_features must be positive");
        }
        if self.calib_batches == 0 || self.tokens_per_batch == 0 || self.eval_tokens == 0 {
            return bad("calibration and evaluation sets must be non-empty");
        }
        if !(0.0..=1.0).contains(&self.outlier_fraction) {
            return bad("outlier_fraction must lie in [0, 1]");
        }
        if !(self.outlier_factor_min > 0.0 && self.outlier_factor_max >= self.outlier_factor_min) {
            return bad("outlier factor range must be positive and ordered");
        }
        Ok(())
    }

    pub fn outlier_count(&self) -> usize {
        if self.outlier_fraction == 0.0 {
            0
        } else {
            ((self.outlier_fraction * self.channels as f64).round() as usize).clamp(1, self.channels)
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerData {
    pub name: String,
    pub weight: Matrix,
    pub calib: Vec<Matrix>,
    pub eval: Matrix,
    pub outlier_channels: Vec<usize>,
}

pub fn layer_name(index: usize) -> String {
    format!("layer{index:03}")
}

pub fn generate_layer(cfg: &SyntheticConfig, index: usize) -> Result<LayerData> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(index as u64);
    let c = cfg.channels;

    let spread = Normal::new(0.0, cfg.act_channel_spread.max(0.0)).expect("finite spread");
    let sigma: Vec<f64> = (0..c).map(|_| spread.sample(&mut rng).exp()).collect();
    let mut outliers: Vec<usize> = sample(&mut rng, c, cfg.outlier_count()).into_vec();
    outliers.sort_unstable();
    let factors: Vec<f64> = outliers
        .iter()
        .map(|_| rng.random_range(cfg.outlier_factor_min..=cfg.outlier_factor_max))
        .collect();

    let draw = |rows: usize, rng: &mut ChaCha8Rng| {
        Matrix::from_fn(rows, c, |_, j| sigma[j] * rng.sample::<f64, _>(StandardNormal))
    };
    let mut calib: Vec<Matrix> = (0..cfg.calib_batches)
        .map(|_| draw(cfg.tokens_per_batch, &mut rng))
        .collect();
    let mut eval = draw(cfg.eval_tokens, &mut rng);

    if !outliers.is_empty() {
        let maxes = collect_channel_maxes(&calib)?.max_abs;
        let bulk: Vec<f64> = (0..c)
            .filter(|j| outliers.binary_search(j).is_err())
            .map(|j| maxes[j])
            .collect();
        let reference = if bulk.is_empty() { 1.0 } else { quantile(&bulk, 0.5) };
        let mut gain = vec![1.0; c];
        for (&j, &f) in outliers.iter().zip(&factors) {
            gain[j] = f * reference / maxes[j];
        }
        for m in calib.iter_mut().chain(std::iter::once(&mut eval)) {
            *m = Matrix::from_fn(m.rows(), c, |i, j| m.get(i, j) * gain[j]);
        }
    }

    let wspread = Normal::new(0.0, cfg.weight_row_spread.max(0.0)).expect("finite spread");
    let row_sd: Vec<f64> = (0..c).map(|_| cfg.weight_scale * wspread.sample(&mut rng).exp()).collect();
    let weight = Matrix::from_fn(c, cfg.out_features, |i, _| {
        row_sd[i] * rng.sample::<f64, _>(StandardNormal)
    });

    Ok(LayerData {
        name: layer_name(index),
        weight,
        calib,
        eval,
        outlier_channels: outliers,
    })
}

pub fn generate_model(cfg: &SyntheticConfig) -> Result<Vec<LayerData>> {
    (0..cfg.layers).map(|i| generate_layer(cfg, i)).collect()
}
