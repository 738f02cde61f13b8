//! Integer GEMM with i32 accumulation and per-tensor dequantization.

use flattenquant::quantize::{
    dequantize, int_matmul, integer_gemm, max_safe_inner_dim, quantize_per_tensor, BitWidth,
};
use flattenquant::Matrix;

fn main() -> flattenquant::Result<()> {
    let x = Matrix::from_fn(4, 64, |i, j| ((i * 9 + j) % 13) as f64 / 6.0 - 1.0);
    let w = Matrix::from_fn(64, 3, |i, j| ((i + j * 5) % 11) as f64 / 50.0 - 0.1);
    for bits in [BitWidth::Int4, BitWidth::Int8] {
        let qx = quantize_per_tensor(&x, bits, None)?;
        let qw = quantize_per_tensor(&w, bits, None)?;
        let acc = integer_gemm(&qx.q, &qw.q, bits.qmax(), bits.qmax())?;
        let y = int_matmul(&qx, &qw)?;
        let fake = dequantize(&qx).matmul(&dequantize(&qw))?;
        println!(
            "{bits:?}: acc[0][0] {} safe K {}, |int - fake| {:.2e}, |int - fp| {:.3e}",
            acc.get(0, 0),
            max_safe_inner_dim(bits.qmax(), bits.qmax()),
            y.max_abs_diff(&fake),
            y.max_abs_diff(&x.matmul(&w)?)
        );
    }
    Ok(())
}
