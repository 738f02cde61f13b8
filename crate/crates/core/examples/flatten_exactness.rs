//! Flattens an activation/weight pair and checks the product is preserved.

use flattenquant::calibration::TruncationPolicy;
use flattenquant::flatten::{flatten_pair, DEFAULT_BLOCK};
use flattenquant::Matrix;

fn main() -> flattenquant::Result<()> {
    let x = Matrix::from_fn(8, 40, |i, j| {
        let v = (((i * 13 + j * 7) % 17) as f64 - 8.0) / 8.0;
        if j == 3 { v * 50.0 } else { v }
    });
    let w = Matrix::from_fn(40, 16, |i, j| (((i * 5 + j * 11) % 19) as f64 - 9.0) / 90.0);

    let t_x = TruncationPolicy::from_maxes(&x.col_max_abs(), 1.3, true)?.threshold;
    let t_w = TruncationPolicy::from_maxes(&w.row_max_abs(), 1.3, true)?.threshold;
    let pair = flatten_pair(&x, &w, t_x, t_w, DEFAULT_BLOCK)?;

    println!("T_x {t_x:.4}, channel 3 extra slots {}", pair.plan_x.extensions()[3]);
    println!(
        "activation {} -> {} (padded {}), flatten ratio {:.3}",
        x.cols(),
        pair.plan_x.expanded_width(),
        pair.plan_x.padded_width(),
        pair.plan_x.flatten_ratio()
    );
    println!("weight rows {} -> {}", pair.plan_w.channels(), pair.plan_w.padded_width());
    println!("max |flattened| {:.4} <= T_x", pair.x.max_abs());
    let err = pair.x.matmul(&pair.w)?.max_abs_diff(&x.matmul(&w)?);
    println!("max |XW - X~W~| = {err:.3e}");
    Ok(())
}
