//! Hessian-guided weight rounding on a frozen per-tensor grid.
//!
//! Input channels (weight rows) are quantized in index order. After each
//! row is rounded its error is pushed into the rows not yet quantized
//! through the upper Cholesky factor of `H^-1`, with lazy batched updates
//! over blocks of [`GPTQ_BLOCK`] rows. The scale never changes, so the
//! result stays executable as a single per-tensor GEMM.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::quantize::{QuantParams, QuantizedTensor};
use crate::tensor_io::{IntMatrix, Matrix};

pub const DEFAULT_DAMPING: f64 = 0.01;
pub const GPTQ_BLOCK: usize = 128;

#[derive(Clone, Debug, PartialEq)]
pub struct HessianEstimate {
    pub h: Matrix,
    pub damping: f64,
    pub sample_count: usize,
}

/// Running `sum 2 X^T X` over calibration batches.
#[derive(Clone, Debug)]
pub struct HessianAccumulator {
    dim: usize,
    sum: Vec<f64>,
    rows: usize,
}

impl HessianAccumulator {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            sum: vec![0.0; dim * dim],
            rows: 0,
        }
    }

    pub fn add(&mut self, x: &Matrix) -> Result<()> {
        if x.cols() != self.dim {
            return Err(Error::ShapeMismatch(format!(
                "calibration activation has {} columns, Hessian is {}",
                x.cols(),
                self.dim
            )));
        }
        let d = self.dim;
        for i in 0..x.rows() {
            let r = x.row(i);
            for (a, &ra) in r.iter().enumerate() {
                if ra == 0.0 {
                    continue;
                }
                let dst = &mut self.sum[a * d..(a + 1) * d];
                for (o, &rb) in dst.iter_mut().zip(r) {
                    *o += 2.0 * ra * rb;
                }
            }
        }
        self.rows += x.rows();
        Ok(())
    }

    pub fn merge(&mut self, other: &HessianAccumulator) -> Result<()> {
        if other.dim != self.dim {
            return Err(Error::ShapeMismatch("merging Hessians of different size".into()));
        }
        self.sum.iter_mut().zip(&other.sum).for_each(|(a, b)| *a += b);
        self.rows += other.rows;
        Ok(())
    }

    /// Adds `damping * mean(diag(H)) * I`.
    pub fn finish(&self, damping: f64) -> Result<HessianEstimate> {
        if !(damping > 0.0) {
            return Err(Error::InvalidParameter(format!("damping must be positive, got {damping}")));
        }
        if self.rows == 0 {
            return Err(Error::EmptyCalibration);
        }
        let d = self.dim;
        let mut h = self.sum.clone();
        let mean_diag = (0..d).map(|i| h[i * d + i]).sum::<f64>() / d as f64;
        for i in 0..d {
            h[i * d + i] += damping * mean_diag;
        }
        Ok(HessianEstimate {
            h: Matrix::new(d, d, h)?,
            damping,
            sample_count: self.rows,
        })
    }
}

pub fn hessian_from_calibration(flattened_acts: &[Matrix], damping: f64) -> Result<HessianEstimate> {
    let first = flattened_acts.first().ok_or(Error::EmptyCalibration)?;
    let mut acc = HessianAccumulator::new(first.cols());
    for x in flattened_acts {
        acc.add(x)?;
    }
    acc.finish(damping)
}

/// `tr(D^T H D)` for `D = w - w_hat`.
pub fn hessian_objective(w: &Matrix, w_hat: &Matrix, h: &Matrix) -> f64 {
    let k = w.rows();
    let n = w.cols();
    let mut total = 0.0;
    for col in 0..n {
        let d: Vec<f64> = (0..k).map(|i| w.get(i, col) - w_hat.get(i, col)).collect();
        for a in 0..k {
            if d[a] == 0.0 {
                continue;
            }
            total += d[a] * h.row(a).iter().zip(&d).map(|(x, y)| x * y).sum::<f64>();
        }
    }
    total
}

fn to_dmatrix(m: &Matrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(m.rows(), m.cols(), m.data())
}

/// Upper Cholesky factor of `H^-1`.
fn inverse_hessian_factor(h: &Matrix) -> Result<DMatrix<f64>> {
    let chol = to_dmatrix(h).cholesky().ok_or(Error::IllConditionedHessian)?;
    let hinv = chol.inverse();
    let lower = hinv.cholesky().ok_or(Error::IllConditionedHessian)?.unpack();
    Ok(lower.transpose())
}

pub fn gptq_optimize(w_flat: &Matrix, h: &HessianEstimate, params: QuantParams) -> Result<QuantizedTensor> {
    let k = w_flat.rows();
    let n = w_flat.cols();
    if h.h.rows() != k {
        return Err(Error::ShapeMismatch(format!(
            "weight has {k} input channels, Hessian is {}",
            h.h.rows()
        )));
    }
    let u = inverse_hessian_factor(&h.h)?;
    let s = params.scale;
    let mut w = w_flat.clone();
    let mut codes = vec![0i32; k * n];
    let mut errs = vec![0.0f64; GPTQ_BLOCK.min(k) * n];

    let mut start = 0;
    while start < k {
        let end = (start + GPTQ_BLOCK).min(k);
        for i in start..end {
            let d = u[(i, i)];
            let err_row = &mut errs[(i - start) * n..(i - start + 1) * n];
            for (c, e) in err_row.iter_mut().enumerate() {
                let v = w.get(i, c);
                let q = params.quantize_value(v);
                codes[i * n + c] = q;
                *e = (v - q as f64 * s) / d;
            }
            let err_row = &errs[(i - start) * n..(i - start + 1) * n];
            for j in i + 1..end {
                let f = u[(i, j)];
                for (x, e) in w.row_mut(j).iter_mut().zip(err_row) {
                    *x -= e * f;
                }
            }
        }
        // lazy update of every row after the block
        for j in end..k {
            let row = w.row_mut(j);
            for i in start..end {
                let f = u[(i, j)];
                if f == 0.0 {
                    continue;
                }
                let err_row = &errs[(i - start) * n..(i - start + 1) * n];
                for (x, e) in row.iter_mut().zip(err_row) {
                    *x -= e * f;
                }
            }
        }
        start = end;
    }
    QuantizedTensor::new(IntMatrix::new(k, n, codes)?, params)
}
