//! KL divergence ratio between INT4 and INT8 fake quantization, and the
//! resulting bit-width choice.

use flattenquant::quantize::{kl_ratio, select_bit_width, DEFAULT_BINS};
use flattenquant::Matrix;

fn main() -> flattenquant::Result<()> {
    let flat = Matrix::from_fn(64, 64, |i, j| ((i * 31 + j * 17) % 97) as f64 / 48.0 - 1.0);
    let spiky = flat.map(|v| if v.abs() > 0.99 { v * 30.0 } else { v });
    for (name, m) in [("uniform", &flat), ("spiky", &spiky)] {
        let k = kl_ratio(m, DEFAULT_BINS)?;
        println!("{name}: KL4 {:.4e} KL8 {:.4e} ratio {:.4}", k.kl_int4, k.kl_int8, k.ratio);
    }
    for gamma in [1.5, 1.86, 3.0] {
        let sel = select_bit_width(&flat, &flat, gamma, DEFAULT_BINS)?;
        println!("gamma {gamma}: {:?}", sel.bits);
    }
    Ok(())
}
