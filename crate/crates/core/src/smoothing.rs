//! Cross-channel smoothing with sigmoid-normalized channel maxima.
//!
//! For channel `j`
//!
//! ```text
//! s_j = sigmoid((ax_j - mu_x) / sigma_x)^alpha / sigmoid((aw_j - mu_w) / sigma_w)^(1 - alpha)
//! ```
//!
//! where `ax`, `aw` are the activation and weight channel maxima and
//! `mu`, `sigma` are the mean and population standard deviation of each
//! vector. Activations are divided by `s`, weight rows multiplied by it, so
//! `X W` is unchanged.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor_io::Matrix;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmoothingScales {
    pub alpha: f64,
    pub s: Vec<f64>,
    pub mu_x: f64,
    pub sigma_x: f64,
    pub mu_w: f64,
    pub sigma_w: f64,
}

impl SmoothingScales {
    /// All-ones scales, used when smoothing is switched off.
    pub fn identity(channels: usize) -> Self {
        Self {
            alpha: 0.5,
            s: vec![1.0; channels],
            mu_x: 0.0,
            sigma_x: 0.0,
            mu_w: 0.0,
            sigma_w: 0.0,
        }
    }

    pub fn channels(&self) -> usize {
        self.s.len()
    }

    pub fn reciprocal(&self) -> Self {
        Self {
            s: self.s.iter().map(|v| 1.0 / v).collect(),
            ..self.clone()
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Mean and population standard deviation.
pub(crate) fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mu = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / n;
    (mu, var.sqrt())
}

fn normalized(x: f64, mu: f64, sigma: f64) -> f64 {
    if sigma > 0.0 {
        (x - mu) / sigma
    } else {
        0.0
    }
}

pub fn smoothing_scales(act_maxes: &[f64], weight_maxes: &[f64], alpha: f64) -> Result<SmoothingScales> {
    if act_maxes.len() != weight_maxes.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} activation channels vs {} weight channels",
            act_maxes.len(),
            weight_maxes.len()
        )));
    }
    if act_maxes.is_empty() {
        return Err(Error::EmptyCalibration);
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidParameter(format!("alpha must lie in [0, 1], got {alpha}")));
    }
    let (mu_x, sigma_x) = mean_std(act_maxes);
    let (mu_w, sigma_w) = mean_std(weight_maxes);
    let s = act_maxes
        .iter()
        .zip(weight_maxes)
        .map(|(&ax, &aw)| {
            let num = sigmoid(normalized(ax, mu_x, sigma_x)).powf(alpha);
            let den = sigmoid(normalized(aw, mu_w, sigma_w)).powf(1.0 - alpha);
            num / den
        })
        .collect();
    Ok(SmoothingScales {
        alpha,
        s,
        mu_x,
        sigma_x,
        mu_w,
        sigma_w,
    })
}

/// `X diag(s)^-1`.
pub fn divide_columns(x: &Matrix, s: &[f64]) -> Result<Matrix> {
    if x.cols() != s.len() {
        return Err(Error::ShapeMismatch(format!(
            "activation has {} channels, scales {}",
            x.cols(),
            s.len()
        )));
    }
    let mut out = x.clone();
    for i in 0..out.rows() {
        for (v, d) in out.row_mut(i).iter_mut().zip(s) {
            *v /= d;
        }
    }
    Ok(out)
}

/// `diag(s) W`.
pub fn scale_rows(w: &Matrix, s: &[f64]) -> Result<Matrix> {
    if w.rows() != s.len() {
        return Err(Error::ShapeMismatch(format!(
            "weight has {} input channels, scales {}",
            w.rows(),
            s.len()
        )));
    }
    let mut out = w.clone();
    for (i, &f) in s.iter().enumerate() {
        out.row_mut(i).iter_mut().for_each(|v| *v *= f);
    }
    Ok(out)
}

pub fn apply_smoothing(x: &Matrix, w: &Matrix, scales: &SmoothingScales) -> Result<(Matrix, Matrix)> {
    Ok((divide_columns(x, &scales.s)?, scale_rows(w, &scales.s)?))
}
