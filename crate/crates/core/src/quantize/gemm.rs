use super::QuantizedTensor;
use crate::error::{Error, Result};
use crate::tensor_io::{IntMatrix, Matrix};

/// Largest inner dimension whose worst-case dot product fits in `i32`.
pub fn max_safe_inner_dim(qmax_x: i32, qmax_w: i32) -> usize {
    let per_term = qmax_x as i64 * qmax_w as i64;
    if per_term == 0 {
        return usize::MAX;
    }
    (i32::MAX as i64 / per_term) as usize
}

/// Integer product with `i32` accumulators.
///
/// `qmax_x` and `qmax_w` bound the codes; the shape is rejected up front
/// when `k * qmax_x * qmax_w` could exceed `i32::MAX`.
pub fn integer_gemm(x: &IntMatrix, w: &IntMatrix, qmax_x: i32, qmax_w: i32) -> Result<IntMatrix> {
    let k = x.cols();
    if k != w.rows() {
        return Err(Error::ShapeMismatch(format!(
            "int_matmul {}x{} by {}x{}",
            x.rows(),
            k,
            w.rows(),
            w.cols()
        )));
    }
    let limit = max_safe_inner_dim(qmax_x, qmax_w);
    if k > limit {
        return Err(Error::AccumulatorOverflow(format!(
            "inner dimension {k} with |codes| <= {qmax_x} x {qmax_w} may exceed i32; limit is {limit}"
        )));
    }
    if x.max_abs() > qmax_x || w.max_abs() > qmax_w {
        return Err(Error::AccumulatorOverflow(format!(
            "codes exceed declared ranges ({} > {qmax_x} or {} > {qmax_w})",
            x.max_abs(),
            w.max_abs()
        )));
    }
    let n = w.cols();
    let mut acc = vec![0i32; x.rows() * n];
    for i in 0..x.rows() {
        let out = &mut acc[i * n..(i + 1) * n];
        for (kk, &a) in x.row(i).iter().enumerate() {
            if a == 0 {
                continue;
            }
            for (o, &b) in out.iter_mut().zip(w.row(kk)) {
                *o += a * b;
            }
        }
    }
    IntMatrix::new(x.rows(), n, acc)
}

/// Low-bit matmul followed by dequantization with `s_x * s_w`.
pub fn int_matmul(qx: &QuantizedTensor, qw: &QuantizedTensor) -> Result<Matrix> {
    let acc = integer_gemm(&qx.q, &qw.q, qx.params.qmax(), qw.params.qmax())?;
    let s = qx.params.scale * qw.params.scale;
    Matrix::new(
        acc.rows(),
        acc.cols(),
        acc.data().iter().map(|&v| v as f64 * s).collect(),
    )
}
