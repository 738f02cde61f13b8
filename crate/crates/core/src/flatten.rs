//! Channel flattening.
//!
//! A channel whose maximum exceeds the threshold `T` is widened into
//! `E_j = floor(max_j / T)` extra slots. Every element is split
//! sign-preservingly into `[T, .., T, |x| mod T]` spread over the channel's
//! slots, and the partner tensor's matching channel is repeated into the same
//! slots, so the contraction `X W` is unchanged. The expanded width is
//! padded with zero channels up to a multiple of the block size.
//!
//! Slot layout for `C` original channels: channel `j` owns slot `j` plus the
//! contiguous run `C + sum_{k<j} E_k .. C + sum_{k<=j} E_k`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor_io::Matrix;

pub const DEFAULT_BLOCK: usize = 32;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PlanRepr", into = "PlanRepr")]
pub struct FlattenPlan {
    threshold: f64,
    extensions: Vec<usize>,
    block: usize,
    // derived
    offsets: Vec<usize>,
    c_extend: usize,
    padded_width: usize,
}

/// Splits `v >= 0` into `n` whole steps of `t` and a remainder in `[0, t)`.
///
/// `%` on `f64` is the exact IEEE remainder, so `n * t + r == v` holds in
/// real arithmetic.
pub fn whole_steps(v: f64, t: f64) -> (usize, f64) {
    let r = v % t;
    let n = ((v - r) / t).round();
    (n as usize, r)
}

impl FlattenPlan {
    pub fn new(threshold: f64, extensions: Vec<usize>, block: usize) -> Result<Self> {
        if !(threshold > 0.0) || !threshold.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "flatten threshold must be positive and finite, got {threshold}"
            )));
        }
        if block == 0 {
            return Err(Error::InvalidParameter("block size must be positive".into()));
        }
        if extensions.is_empty() {
            return Err(Error::InvalidParameter("flatten plan needs at least one channel".into()));
        }
        let channels = extensions.len();
        let mut offsets = Vec::with_capacity(channels);
        let mut acc = channels;
        for &e in &extensions {
            offsets.push(acc);
            acc += e;
        }
        let c_extend = acc - channels;
        let padded_width = acc.div_ceil(block) * block;
        Ok(Self {
            threshold,
            extensions,
            block,
            offsets,
            c_extend,
            padded_width,
        })
    }

    /// Plan with no extensions, only padding.
    pub fn identity(channels: usize, threshold: f64, block: usize) -> Result<Self> {
        Self::new(threshold, vec![0; channels], block)
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn extensions(&self) -> &[usize] {
        &self.extensions
    }

    pub fn channels(&self) -> usize {
        self.extensions.len()
    }

    pub fn c_extend(&self) -> usize {
        self.c_extend
    }

    /// `channels + c_extend`, before padding.
    pub fn expanded_width(&self) -> usize {
        self.channels() + self.c_extend
    }

    pub fn padded_width(&self) -> usize {
        self.padded_width
    }

    pub fn block(&self) -> usize {
        self.block
    }

    /// Extended channels over original channels.
    pub fn flatten_ratio(&self) -> f64 {
        self.c_extend as f64 / self.channels() as f64
    }

    /// Ordered slots owned by channel `j`: the original slot, then its
    /// extension run.
    pub fn slots(&self, j: usize) -> impl Iterator<Item = usize> + '_ {
        let start = self.offsets[j];
        std::iter::once(j).chain(start..start + self.extensions[j])
    }

    /// Largest magnitude channel `j` can carry: `(E_j + 1) * T`.
    pub fn capacity(&self, j: usize) -> f64 {
        (self.extensions[j] + 1) as f64 * self.threshold
    }

    /// Writes the split of `x` into `out`, indexed by slot. Returns `false`
    /// when `x` exceeded the channel capacity and was saturated.
    fn split_into(&self, j: usize, x: f64, out: &mut [f64]) -> bool {
        let t = self.threshold;
        let e = self.extensions[j];
        let sign = if x < 0.0 { -1.0 } else { 1.0 };
        let (n, r) = whole_steps(x.abs(), t);
        let fits = n <= e || (n == e + 1 && r == 0.0);
        let full = if fits { n.min(e + 1) } else { e + 1 };
        for (k, slot) in self.slots(j).enumerate() {
            out[slot] = if k < full {
                sign * t
            } else if k == full && fits {
                sign * r
            } else {
                0.0
            };
        }
        fits
    }
}

#[derive(Serialize, Deserialize)]
struct PlanRepr {
    #[serde(rename = "T")]
    threshold: f64,
    #[serde(rename = "E")]
    extensions: Vec<usize>,
    c_extend: usize,
    padded_width: usize,
    flatten_ratio: f64,
    block: usize,
}

impl From<FlattenPlan> for PlanRepr {
    fn from(p: FlattenPlan) -> Self {
        Self {
            threshold: p.threshold,
            flatten_ratio: p.flatten_ratio(),
            c_extend: p.c_extend,
            padded_width: p.padded_width,
            block: p.block,
            extensions: p.extensions,
        }
    }
}

impl TryFrom<PlanRepr> for FlattenPlan {
    type Error = Error;

    fn try_from(r: PlanRepr) -> Result<Self> {
        let plan = FlattenPlan::new(r.threshold, r.extensions, r.block)?;
        if plan.c_extend != r.c_extend || plan.padded_width != r.padded_width {
            return Err(Error::Recipe(format!(
                "plan header (c_extend {}, padded_width {}) disagrees with extensions",
                r.c_extend, r.padded_width
            )));
        }
        Ok(plan)
    }
}

/// `E_j = floor(max_j / T)` for every channel.
pub fn build_flatten_plan(channel_maxes: &[f64], threshold: f64, block: usize) -> Result<FlattenPlan> {
    if !(threshold > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "flatten threshold must be positive, got {threshold}"
        )));
    }
    if let Some(m) = channel_maxes.iter().find(|m| !(**m >= 0.0)) {
        return Err(Error::InvalidParameter(format!("channel maximum {m} is negative")));
    }
    let extensions = channel_maxes
        .iter()
        .map(|&m| whole_steps(m, threshold).0)
        .collect();
    FlattenPlan::new(threshold, extensions, block)
}

fn check_channels(actual: usize, plan: &FlattenPlan, what: &str) -> Result<()> {
    if actual != plan.channels() {
        return Err(Error::ShapeMismatch(format!(
            "{what} has {actual} channels, plan expects {}",
            plan.channels()
        )));
    }
    Ok(())
}

fn flatten_columns(x: &Matrix, plan: &FlattenPlan, saturate: bool) -> Result<(Matrix, usize)> {
    check_channels(x.cols(), plan, "activation")?;
    let width = plan.padded_width();
    let mut out = Matrix::zeros(x.rows(), width);
    let mut saturated = 0;
    for i in 0..x.rows() {
        let dst = out.row_mut(i);
        for (j, &v) in x.row(i).iter().enumerate() {
            if !plan.split_into(j, v, dst) {
                if !saturate {
                    return Err(Error::PlanCapacityExceeded {
                        channel: j,
                        value: v,
                        capacity: plan.capacity(j),
                    });
                }
                saturated += 1;
            }
        }
    }
    Ok((out, saturated))
}

/// Flattens the columns of `x`. Fails if any element exceeds its channel
/// capacity.
pub fn flatten_tensor(x: &Matrix, plan: &FlattenPlan) -> Result<Matrix> {
    flatten_columns(x, plan, false).map(|(m, _)| m)
}

/// Inference-time flatten: over-capacity elements are clamped to the channel
/// capacity. Returns the number of clamped elements.
pub fn flatten_tensor_saturating(x: &Matrix, plan: &FlattenPlan) -> Result<(Matrix, usize)> {
    flatten_columns(x, plan, true)
}

/// Copies row `j` of `w` into every slot of channel `j`; pad rows stay zero.
pub fn repeat_channels(w: &Matrix, plan: &FlattenPlan) -> Result<Matrix> {
    check_channels(w.rows(), plan, "weight")?;
    let mut out = Matrix::zeros(plan.padded_width(), w.cols());
    for j in 0..w.rows() {
        for slot in plan.slots(j) {
            out.row_mut(slot).copy_from_slice(w.row(j));
        }
    }
    Ok(out)
}

/// Flattens the rows of a weight (rows are the contraction axis).
pub fn flatten_rows(w: &Matrix, plan: &FlattenPlan) -> Result<Matrix> {
    check_channels(w.rows(), plan, "weight")?;
    Ok(flatten_tensor(&w.transpose(), plan)?.transpose())
}

/// Repeats the columns of an activation to match a row-flattened weight.
pub fn repeat_columns(x: &Matrix, plan: &FlattenPlan) -> Result<Matrix> {
    check_channels(x.cols(), plan, "activation")?;
    let mut out = Matrix::zeros(x.rows(), plan.padded_width());
    for i in 0..x.rows() {
        let src = x.row(i);
        let dst = out.row_mut(i);
        for (j, &v) in src.iter().enumerate() {
            for slot in plan.slots(j) {
                dst[slot] = v;
            }
        }
    }
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct FlattenedPair {
    pub x: Matrix,
    pub w: Matrix,
    pub plan_x: FlattenPlan,
    pub plan_w: FlattenPlan,
}

/// Flattens activations, then weights.
///
/// Stage one plans on the column maxima of `x` with `t_x`, flattens `x` and
/// repeats the rows of `w`. Stage two plans on the row maxima of that
/// weight with `t_w`, flattens its rows and repeats the matching columns of
/// the stage-one activation.
pub fn flatten_pair(x: &Matrix, w: &Matrix, t_x: f64, t_w: f64, block: usize) -> Result<FlattenedPair> {
    if x.cols() != w.rows() {
        return Err(Error::ShapeMismatch(format!(
            "activation has {} channels, weight {} rows",
            x.cols(),
            w.rows()
        )));
    }
    let plan_x = build_flatten_plan(&x.col_max_abs(), t_x, block)?;
    let x1 = flatten_tensor(x, &plan_x)?;
    let w1 = repeat_channels(w, &plan_x)?;
    let plan_w = build_flatten_plan(&w1.row_max_abs(), t_w, block)?;
    Ok(FlattenedPair {
        w: flatten_rows(&w1, &plan_w)?,
        x: repeat_columns(&x1, &plan_w)?,
        plan_x,
        plan_w,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn row(v: &[f64]) -> Matrix {
        Matrix::from_rows(&[v.to_vec()]).unwrap()
    }

    #[test]
    fn single_channel_plan() {
        let p = build_flatten_plan(&[7.0], 2.0, 32).unwrap();
        assert_eq!(p.extensions(), &[3]);
        assert_eq!(p.c_extend(), 3);
        assert_eq!(p.slots(0).collect::<Vec<_>>(), vec![0, 1, 2, 3]);
        assert_eq!(p.padded_width(), 32);
    }

    #[test]
    fn identity_plan() {
        let p = build_flatten_plan(&[1.0, 1.0, 1.0], 2.0, 32).unwrap();
        assert_eq!(p.extensions(), &[0, 0, 0]);
        assert_eq!(p.c_extend(), 0);
        assert_eq!(p.padded_width(), 32);
        let x = Matrix::from_rows(&[vec![0.5, -1.0, 1.5], vec![0.0, 0.25, -0.75]]).unwrap();
        let f = flatten_tensor(&x, &p).unwrap();
        for i in 0..2 {
            assert_eq!(&f.row(i)[..3], x.row(i));
            assert!(f.row(i)[3..].iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn large_layer_padding() {
        // 4096 channels with 1024 extensions in total
        let mut maxes = vec![1.0; 4096];
        for m in maxes.iter_mut().take(256) {
            *m = 4.5;
        }
        let p = build_flatten_plan(&maxes, 1.1, 32).unwrap();
        assert_eq!(p.c_extend(), 1024);
        assert_eq!(p.padded_width(), 5120);
    }

    #[test]
    fn slot_layout_for_several_channels() {
        let p = build_flatten_plan(&[5.0, 0.5, 2.0], 2.0, 4).unwrap();
        assert_eq!(p.extensions(), &[2, 0, 1]);
        assert_eq!(p.slots(0).collect::<Vec<_>>(), vec![0, 3, 4]);
        assert_eq!(p.slots(1).collect::<Vec<_>>(), vec![1]);
        assert_eq!(p.slots(2).collect::<Vec<_>>(), vec![2, 5]);
        assert_eq!(p.padded_width(), 8);
    }

    #[test]
    fn split_positive_and_negative() {
        let p = build_flatten_plan(&[7.0], 2.0, 4).unwrap();
        let f = flatten_tensor(&row(&[7.0]), &p).unwrap();
        assert_eq!(f.row(0), &[2.0, 2.0, 2.0, 1.0]);
        let g = flatten_tensor(&row(&[-5.0]), &p).unwrap();
        assert_eq!(g.row(0), &[-2.0, -2.0, -1.0, 0.0]);
        assert_eq!(g.row(0).iter().sum::<f64>(), -5.0);
    }

    #[test]
    fn exact_multiples() {
        let p = build_flatten_plan(&[6.0], 2.0, 4).unwrap();
        assert_eq!(p.extensions(), &[3]);
        let f = flatten_tensor(&row(&[4.0]), &p).unwrap();
        assert_eq!(f.row(0), &[2.0, 2.0, 0.0, 0.0]);
        // exactly at capacity (E + 1) * T
        let full = flatten_tensor(&row(&[8.0]), &p).unwrap();
        assert_eq!(full.row(0), &[2.0; 4]);
    }

    #[test]
    fn over_capacity_errors_or_saturates() {
        let p = build_flatten_plan(&[3.0], 2.0, 2).unwrap();
        assert_eq!(p.capacity(0), 4.0);
        let err = flatten_tensor(&row(&[4.5]), &p).unwrap_err();
        assert!(matches!(err, Error::PlanCapacityExceeded { channel: 0, .. }));
        let (f, n) = flatten_tensor_saturating(&row(&[-4.5]), &p).unwrap();
        assert_eq!(n, 1);
        assert_eq!(f.row(0), &[-2.0, -2.0]);
    }

    #[test]
    fn repeat_single_row() {
        let p = build_flatten_plan(&[7.0], 2.0, 32).unwrap();
        let r = repeat_channels(&row(&[5.0]), &p).unwrap();
        assert_eq!(r.rows(), 32);
        assert_eq!(&r.data()[..4], &[5.0; 4]);
        assert!(r.data()[4..].iter().all(|&v| v == 0.0));
        let id = FlattenPlan::identity(1, 1.0, 32).unwrap();
        let r = repeat_channels(&row(&[5.0]), &id).unwrap();
        assert_eq!(r.data()[0], 5.0);
        assert!(r.data()[1..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn plan_rejects_bad_threshold() {
        assert!(build_flatten_plan(&[1.0], 0.0, 32).is_err());
        assert!(build_flatten_plan(&[1.0], -1.0, 32).is_err());
        assert!(build_flatten_plan(&[1.0], 1.0, 0).is_err());
    }

    #[test]
    fn shape_checks() {
        let p = build_flatten_plan(&[1.0, 2.0], 1.0, 4).unwrap();
        assert!(flatten_tensor(&row(&[1.0]), &p).is_err());
        assert!(repeat_channels(&row(&[1.0, 2.0]), &p).is_err());
    }

    #[test]
    fn pair_scalar_example() {
        let x = row(&[6.0]);
        let w = row(&[6.0]);
        let fp = flatten_pair(&x, &w, 2.0, 3.0, 32).unwrap();
        assert_eq!(fp.plan_x.extensions(), &[3]);
        let x1 = flatten_tensor(&x, &fp.plan_x).unwrap();
        assert_eq!(&x1.row(0)[..4], &[2.0, 2.0, 2.0, 0.0]);
        // every stage-one weight row is 6, so E = 2 for the four real rows
        assert_eq!(&fp.plan_w.extensions()[..4], &[2, 2, 2, 2]);
        assert!(fp.plan_w.extensions()[4..].iter().all(|&e| e == 0));
        for slot in fp.plan_w.slots(0) {
            assert!(fp.w.get(slot, 0) == 3.0 || fp.w.get(slot, 0) == 0.0);
        }
        assert_eq!(fp.w.max_abs(), 3.0);
        assert_eq!(fp.x.matmul(&fp.w).unwrap().data(), &[36.0]);
    }

    #[test]
    fn pair_identity_when_thresholds_exceed_maxima() {
        let x = Matrix::from_rows(&[vec![1.0, -2.0], vec![0.5, 0.0]]).unwrap();
        let w = Matrix::from_rows(&[vec![0.3, 0.1], vec![-0.2, 0.4]]).unwrap();
        let fp = flatten_pair(&x, &w, 10.0, 10.0, 2).unwrap();
        assert_eq!(fp.x, x);
        assert_eq!(fp.w, w);
    }

    #[test]
    fn serde_round_trip_checks_header() {
        let p = build_flatten_plan(&[5.0, 0.5, 2.0], 2.0, 4).unwrap();
        let json = serde_json::to_string(&p).unwrap();
        assert!(json.contains("\"flatten_ratio\":1.0"));
        let back: FlattenPlan = serde_json::from_str(&json).unwrap();
        assert_eq!(back, p);
        let bad = json.replace("\"c_extend\":3", "\"c_extend\":4");
        assert!(serde_json::from_str::<FlattenPlan>(&bad).is_err());
    }

    fn dyadic_matrix(rows: usize, cols: usize) -> impl Strategy<Value = Matrix> {
        prop::collection::vec(-4096i32..4096, rows * cols).prop_map(move |v| {
            Matrix::new(rows, cols, v.into_iter().map(|k| k as f64 / 64.0).collect()).unwrap()
        })
    }

    proptest! {
        #[test]
        fn slot_sums_reproduce_elements(x in dyadic_matrix(4, 5), t in 1u32..200) {
            let t = t as f64 / 16.0;
            let plan = build_flatten_plan(&x.col_max_abs(), t, 8).unwrap();
            let f = flatten_tensor(&x, &plan).unwrap();
            for i in 0..x.rows() {
                for j in 0..x.cols() {
                    let s: f64 = plan.slots(j).map(|k| f.get(i, k)).sum();
                    prop_assert_eq!(s, x.get(i, j));
                }
            }
            prop_assert!(f.max_abs() <= t);
        }

        #[test]
        fn flatten_repeat_preserves_product(
            x in prop::collection::vec(-100.0f64..100.0, 3 * 6),
            w in prop::collection::vec(-1.0f64..1.0, 6 * 4),
            t in 0.5f64..50.0,
        ) {
            let x = Matrix::new(3, 6, x).unwrap();
            let w = Matrix::new(6, 4, w).unwrap();
            let plan = build_flatten_plan(&x.col_max_abs(), t, 32).unwrap();
            let got = flatten_tensor(&x, &plan).unwrap().matmul(&repeat_channels(&w, &plan).unwrap()).unwrap();
            let reference = x.matmul(&w).unwrap();
            prop_assert!(got.max_abs_diff(&reference) <= 1e-9 * reference.max_abs().max(1.0));
        }

        #[test]
        fn raising_threshold_never_adds_channels(
            maxes in prop::collection::vec(0.0f64..100.0, 1..40),
            t in 0.1f64..20.0,
            dt in 0.0f64..20.0,
        ) {
            let lo = build_flatten_plan(&maxes, t, 32).unwrap();
            let hi = build_flatten_plan(&maxes, t + dt, 32).unwrap();
            prop_assert!(hi.c_extend() <= lo.c_extend());
        }

        #[test]
        fn slots_partition_expanded_width(maxes in prop::collection::vec(0.0f64..20.0, 1..20), t in 0.5f64..5.0) {
            let plan = build_flatten_plan(&maxes, t, 32).unwrap();
            let mut seen = vec![false; plan.expanded_width()];
            for j in 0..plan.channels() {
                for s in plan.slots(j) {
                    prop_assert!(!seen[s]);
                    seen[s] = true;
                }
            }
            prop_assert!(seen.iter().all(|&b| b));
            prop_assert_eq!(plan.padded_width() % 32, 0);
            prop_assert!(plan.padded_width() >= plan.expanded_width());
            prop_assert!(plan.padded_width() < plan.expanded_width() + 32);
            for (j, &m) in maxes.iter().enumerate() {
                if m < t {
                    prop_assert_eq!(plan.extensions()[j], 0);
                }
            }
        }
    }
}
