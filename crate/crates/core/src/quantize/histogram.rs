//! Histograms, KL divergence and the INT4/INT8 decision.
//!
//! A layer drops to INT4 only when, for both its activation and its weight,
//! `KL(P, Q4) / KL(P, Q8) < gamma`, where `P` is the histogram of the tensor
//! and `Qb` the histogram of its `b`-bit fake-quantized copy on the same
//! bins.

use serde::{Deserialize, Serialize};

use super::{fake_quantize, BitWidth};
use crate::error::{Error, Result};
use crate::tensor_io::Matrix;

/// Histogram resolution for the KL ratio.
pub const DEFAULT_BINS: usize = 550;
/// Additive floor applied to every bin before renormalizing.
pub const EPSILON: f64 = 1e-10;
/// Denominator used when `KL(P, Q8)` is numerically zero.
pub const KL_FLOOR: f64 = 1e-12;
pub const MIN_BINS: usize = 16;

#[derive(Clone, Debug, PartialEq)]
pub struct HistogramDistribution {
    pub bin_count: usize,
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<u64>,
    pub probs: Vec<f64>,
}

impl HistogramDistribution {
    fn from_counts(counts: Vec<u64>, bound: f64) -> Self {
        let total: u64 = counts.iter().sum();
        let n = total.max(1) as f64;
        let raw: Vec<f64> = counts.iter().map(|&c| c as f64 / n + EPSILON).collect();
        let z: f64 = raw.iter().sum();
        Self {
            bin_count: counts.len(),
            lo: -bound,
            hi: bound,
            probs: raw.into_iter().map(|p| p / z).collect(),
            counts,
        }
    }

    /// Adds another histogram on the same layout.
    pub fn merge(&self, other: &HistogramDistribution) -> Result<Self> {
        self.check_layout(other)?;
        let counts = self.counts.iter().zip(&other.counts).map(|(a, b)| a + b).collect();
        Ok(Self::from_counts(counts, self.hi))
    }

    fn check_layout(&self, other: &HistogramDistribution) -> Result<()> {
        if self.bin_count != other.bin_count || self.lo != other.lo || self.hi != other.hi {
            return Err(Error::HistogramMismatch(format!(
                "{} bins on [{}, {}] vs {} bins on [{}, {}]",
                self.bin_count, self.lo, self.hi, other.bin_count, other.lo, other.hi
            )));
        }
        Ok(())
    }
}

fn check_bins(bins: usize) -> Result<()> {
    if bins < MIN_BINS {
        return Err(Error::InvalidParameter(format!(
            "histogram needs at least {MIN_BINS} bins, got {bins}"
        )));
    }
    Ok(())
}

/// Histogram of `values` over `[-bound, bound]` with uniform bins. Values
/// outside the range land in the edge bins; a zero bound puts all mass in
/// the center bin.
pub fn build_histogram_in_range(values: &[f64], bound: f64, bins: usize) -> Result<HistogramDistribution> {
    check_bins(bins)?;
    let mut counts = vec![0u64; bins];
    if bound > 0.0 {
        let scale = bins as f64 / (2.0 * bound);
        for &v in values {
            let idx = ((v + bound) * scale).floor();
            let idx = idx.clamp(0.0, (bins - 1) as f64) as usize;
            counts[idx] += 1;
        }
    } else {
        counts[bins / 2] = values.len() as u64;
    }
    Ok(HistogramDistribution::from_counts(counts, bound.max(0.0)))
}

/// Histogram over the symmetric range `[-max|m|, max|m|]`.
pub fn build_histogram(m: &Matrix, bins: usize) -> Result<HistogramDistribution> {
    build_histogram_in_range(m.data(), m.max_abs(), bins)
}

/// `sum p ln(p / q)`.
pub fn kl_divergence(p: &HistogramDistribution, q: &HistogramDistribution) -> Result<f64> {
    p.check_layout(q)?;
    let kl = p
        .probs
        .iter()
        .zip(&q.probs)
        .map(|(&a, &b)| a * (a / b).ln())
        .sum::<f64>();
    // rounding in the sum can leave a tiny negative value for P == Q
    Ok(kl.max(0.0))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KlRatio {
    pub kl_int4: f64,
    pub kl_int8: f64,
    pub ratio: f64,
}

/// `KL(P, Q4) / KL(P, Q8)` for one tensor, with `KL(P, Q8)` floored at
/// [`KL_FLOOR`].
pub fn kl_ratio(m: &Matrix, bins: usize) -> Result<KlRatio> {
    check_bins(bins)?;
    let bound = m.max_abs();
    let p = build_histogram_in_range(m.data(), bound, bins)?;
    let q4 = build_histogram_in_range(fake_quantize(m, BitWidth::Int4).data(), bound, bins)?;
    let q8 = build_histogram_in_range(fake_quantize(m, BitWidth::Int8).data(), bound, bins)?;
    let kl_int4 = kl_divergence(&p, &q4)?;
    let kl_int8 = kl_divergence(&p, &q8)?;
    Ok(KlRatio {
        kl_int4,
        kl_int8,
        ratio: kl_int4 / kl_int8.max(KL_FLOOR),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BitSelection {
    pub bits: BitWidth,
    pub act: KlRatio,
    pub weight: KlRatio,
}

impl BitSelection {
    /// Re-evaluates the decision for another `gamma` without recomputing
    /// histograms.
    pub fn decide(act: KlRatio, weight: KlRatio, gamma: f64) -> Self {
        let bits = if act.ratio < gamma && weight.ratio < gamma {
            BitWidth::Int4
        } else {
            BitWidth::Int8
        };
        Self { bits, act, weight }
    }
}

pub fn select_bit_width(act: &Matrix, weight: &Matrix, gamma: f64, bins: usize) -> Result<BitSelection> {
    Ok(BitSelection::decide(kl_ratio(act, bins)?, kl_ratio(weight, bins)?, gamma))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn gaussian(n: usize, seed: u64) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Matrix::from_fn(1, n, |_, _| rng.sample::<f64, _>(StandardNormal))
    }

    #[test]
    fn probabilities_normalized_and_positive() {
        let h = build_histogram(&gaussian(1000, 1), 2048).unwrap();
        assert!((h.probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(h.probs.iter().all(|&p| p > 0.0));
        assert_eq!(h.counts.iter().sum::<u64>(), 1000);
    }

    #[test]
    fn constant_tensor_is_one_spike() {
        let h = build_histogram(&Matrix::from_fn(4, 4, |_, _| 3.0), 64).unwrap();
        assert_eq!(h.counts[63], 16);
        assert!(h.probs[63] > 1.0 - 1e-8);
        let z = build_histogram(&Matrix::zeros(2, 2), 64).unwrap();
        assert_eq!(z.counts[32], 4);
    }

    #[test]
    fn uniform_samples_are_roughly_flat() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let m = Matrix::from_fn(1, 64_000, |_, _| rng.random_range(-1.0..1.0));
        let h = build_histogram(&m, 16).unwrap();
        for &c in &h.counts {
            // expected 4000 per bin, sd ~ 61
            assert!((c as f64 - 4000.0).abs() < 400.0, "{c}");
        }
    }

    #[test]
    fn too_few_bins() {
        assert!(build_histogram(&Matrix::zeros(1, 1), 8).is_err());
    }

    #[test]
    fn kl_basics() {
        let p = build_histogram(&gaussian(500, 2), 128).unwrap();
        assert_eq!(kl_divergence(&p, &p).unwrap(), 0.0);
        let other = build_histogram(&gaussian(500, 3), 64).unwrap();
        assert!(matches!(kl_divergence(&p, &other), Err(Error::HistogramMismatch(_))));
    }

    #[test]
    fn coarser_grid_distorts_more() {
        for seed in 0..10 {
            let m = gaussian(4096, seed);
            let r = kl_ratio(&m, DEFAULT_BINS).unwrap();
            assert!(r.kl_int8 <= r.kl_int4, "seed {seed}: {r:?}");
        }
    }

    #[test]
    fn grid_tensor_selects_int4() {
        // every value already sits on the 15-level grid with scale 0.25
        let m = Matrix::from_fn(8, 15, |i, j| ((i + j) % 15) as f64 * 0.25 - 1.75);
        let r = kl_ratio(&m, DEFAULT_BINS).unwrap();
        assert_eq!(r.kl_int4, 0.0);
        let sel = select_bit_width(&m, &m, 1.86, DEFAULT_BINS).unwrap();
        assert_eq!(sel.bits, BitWidth::Int4);
    }

    #[test]
    fn zero_gamma_forces_int8() {
        let m = Matrix::from_fn(8, 15, |i, j| ((i + j) % 15) as f64 * 0.25 - 1.75);
        let sel = select_bit_width(&m, &m, 0.0, DEFAULT_BINS).unwrap();
        assert_eq!(sel.bits, BitWidth::Int8);
    }

    #[test]
    fn histograms_merge_additively() {
        let a = gaussian(300, 4).map(|v| v.clamp(-2.0, 2.0));
        let b = gaussian(200, 5).map(|v| v.clamp(-2.0, 2.0));
        let ha = build_histogram_in_range(a.data(), 2.0, 32).unwrap();
        let hb = build_histogram_in_range(b.data(), 2.0, 32).unwrap();
        let both = Matrix::vstack(&[a.transpose(), b.transpose()]).unwrap();
        let hab = build_histogram_in_range(both.data(), 2.0, 32).unwrap();
        assert_eq!(ha.merge(&hb).unwrap().counts, hab.counts);
    }

    proptest! {
        #[test]
        fn kl_is_non_negative(seed_a in 0u64..1000, seed_b in 0u64..1000) {
            let a = gaussian(200, seed_a).map(|v| v.clamp(-3.0, 3.0));
            let b = gaussian(200, seed_b).map(|v| v.clamp(-3.0, 3.0) * 0.5);
            let p = build_histogram_in_range(a.data(), 3.0, 64).unwrap();
            let q = build_histogram_in_range(b.data(), 3.0, 64).unwrap();
            prop_assert!(kl_divergence(&p, &q).unwrap() >= 0.0);
        }

        #[test]
        fn kl_ratio_is_scale_invariant(seed in 0u64..1000, k in -20i32..20) {
            // power-of-two scales keep every bin assignment bit-identical
            let m = gaussian(512, seed);
            let lambda = 2f64.powi(k);
            let a = kl_ratio(&m, 512).unwrap();
            let b = kl_ratio(&m.map(|v| v * lambda), 512).unwrap();
            prop_assert!((a.ratio - b.ratio).abs() <= 1e-12 * a.ratio.abs().max(1.0));
        }
    }
}
