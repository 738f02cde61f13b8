//! Sigmoid-normalized smoothing scales keep X W unchanged.

use flattenquant::smoothing::{apply_smoothing, smoothing_scales};
use flattenquant::Matrix;

fn main() -> flattenquant::Result<()> {
    let x = Matrix::from_fn(32, 6, |i, j| ((i + 2 * j) % 5) as f64 - 2.0 + if j == 2 { 40.0 } else { 0.0 });
    let w = Matrix::from_fn(6, 4, |i, j| 0.1 * ((i * 3 + j) % 7) as f64 - 0.3);

    let s = smoothing_scales(&x.col_max_abs(), &w.row_max_abs(), 0.5)?;
    println!("scales: {:.4?}", s.s);
    println!("mu_x {:.4} sigma_x {:.4} mu_w {:.4} sigma_w {:.4}", s.mu_x, s.sigma_x, s.mu_w, s.sigma_w);

    let (xs, ws) = apply_smoothing(&x, &w, &s)?;
    println!("activation max {:.3} -> {:.3}", x.max_abs(), xs.max_abs());
    let err = xs.matmul(&ws)?.max_abs_diff(&x.matmul(&w)?);
    println!("max |XW - X'W'| = {err:.3e}");
    Ok(())
}
