//! GPTQ against round-to-nearest on correlated calibration inputs.

use flattenquant::gptq::{gptq_optimize, hessian_from_calibration, hessian_objective, DEFAULT_DAMPING};
use flattenquant::quantize::{dequantize, quantize_per_tensor, BitWidth, QuantParams};
use flattenquant::Matrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn main() -> flattenquant::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut randn = |r, c| Matrix::from_fn(r, c, |_, _| StandardNormal.sample(&mut rng));
    let k = 96;
    let x = randn(512, k).matmul(&randn(k, k))?;
    let w = randn(k, 32);

    let h = hessian_from_calibration(&[x], DEFAULT_DAMPING)?;
    let params = QuantParams::for_max(BitWidth::Int4, w.max_abs())?;
    let rtn = dequantize(&quantize_per_tensor(&w, BitWidth::Int4, Some(params.scale))?);
    let opt = dequantize(&gptq_optimize(&w, &h, params)?);

    println!("damping {:.4e}, samples {}", h.damping, h.sample_count);
    println!("round-to-nearest objective {:.4e}", hessian_objective(&w, &rtn, &h.h));
    println!("GPTQ objective             {:.4e}", hessian_objective(&w, &opt, &h.h));
    Ok(())
}
