//! Per-channel activation statistics and the truncation threshold.
//!
//! The threshold is `T = beta * mean(clipped)`, where `clipped` are the
//! channel maxima after boxplot fencing at `[Q1 - 1.5 IQR, Q3 + 1.5 IQR]`.
//! Quartiles are taken over the channel maxima with linear interpolation
//! between order statistics (position `p * (n - 1)`).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor_io::Matrix;

/// Boxplot fence multiplier.
pub const FENCE: f64 = 1.5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelStats {
    pub max_abs: Vec<f64>,
    pub sample_count: usize,
}

impl ChannelStats {
    pub fn channels(&self) -> usize {
        self.max_abs.len()
    }

    /// Folds another batch of statistics into this one.
    pub fn merge(&mut self, other: &ChannelStats) -> Result<()> {
        if other.channels() != self.channels() {
            return Err(Error::ShapeMismatch(format!(
                "merging stats with {} and {} channels",
                self.channels(),
                other.channels()
            )));
        }
        for (a, b) in self.max_abs.iter_mut().zip(&other.max_abs) {
            *a = a.max(*b);
        }
        self.sample_count += other.sample_count;
        Ok(())
    }
}

/// Column-wise `max |x|` over every row of every sample.
pub fn collect_channel_maxes(samples: &[Matrix]) -> Result<ChannelStats> {
    let (first, rest) = samples.split_first().ok_or(Error::EmptyCalibration)?;
    let mut stats = ChannelStats {
        max_abs: first.col_max_abs(),
        sample_count: first.rows(),
    };
    for s in rest {
        if s.cols() != stats.channels() {
            return Err(Error::ShapeMismatch(format!(
                "calibration sample has {} channels, expected {}",
                s.cols(),
                stats.channels()
            )));
        }
        stats.merge(&ChannelStats {
            max_abs: s.col_max_abs(),
            sample_count: s.rows(),
        })?;
    }
    Ok(stats)
}

/// Quantile of `values` with linear interpolation between order statistics.
pub fn quantile(values: &[f64], p: f64) -> f64 {
    assert!(!values.is_empty(), "quantile of an empty vector");
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let pos = p.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

#[derive(Clone, Debug, PartialEq)]
pub struct BoxplotClip {
    pub q1: f64,
    pub q3: f64,
    pub iqr: f64,
    pub clipped: Vec<f64>,
}

impl BoxplotClip {
    pub fn lower_fence(&self) -> f64 {
        self.q1 - FENCE * self.iqr
    }

    pub fn upper_fence(&self) -> f64 {
        self.q3 + FENCE * self.iqr
    }
}

/// Clips each channel maximum into the boxplot fences. Both fences apply.
pub fn clip_outlier_channels(maxes: &[f64]) -> BoxplotClip {
    let q1 = quantile(maxes, 0.25);
    let q3 = quantile(maxes, 0.75);
    let iqr = (q3 - q1).max(0.0);
    let (lo, hi) = (q1 - FENCE * iqr, q3 + FENCE * iqr);
    BoxplotClip {
        q1,
        q3,
        iqr,
        clipped: maxes.iter().map(|&m| m.clamp(lo, hi)).collect(),
    }
}

/// `T = beta * mean(clipped)`.
pub fn truncation_threshold(clipped: &[f64], beta: f64) -> Result<f64> {
    if !(beta > 0.0) {
        return Err(Error::InvalidParameter(format!("beta must be positive, got {beta}")));
    }
    if clipped.is_empty() {
        return Err(Error::EmptyCalibration);
    }
    let mean = clipped.iter().sum::<f64>() / clipped.len() as f64;
    if !(mean > 0.0) {
        return Err(Error::DegenerateCalibration(
            "all channel maxima are zero, threshold would be 0".into(),
        ));
    }
    Ok(beta * mean)
}

/// Everything that went into a threshold, kept for recipes and reports.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruncationPolicy {
    pub beta: f64,
    pub q1: f64,
    pub q3: f64,
    pub iqr: f64,
    pub clipped_max: Vec<f64>,
    pub threshold: f64,
    /// `false` when the boxplot stage was disabled (ablation).
    pub clip_enabled: bool,
}

impl TruncationPolicy {
    pub fn from_maxes(maxes: &[f64], beta: f64, clip: bool) -> Result<Self> {
        if maxes.is_empty() {
            return Err(Error::EmptyCalibration);
        }
        let mut fenced = clip_outlier_channels(maxes);
        if !clip {
            fenced.clipped = maxes.to_vec();
        }
        let threshold = truncation_threshold(&fenced.clipped, beta)?;
        Ok(Self {
            beta,
            q1: fenced.q1,
            q3: fenced.q3,
            iqr: fenced.iqr,
            clipped_max: fenced.clipped,
            threshold,
            clip_enabled: clip,
        })
    }
}
