//! Quantizes the reference synthetic model and prints the cost report.

use flattenquant::pipeline::run_model;
use flattenquant::synth::{generate_model, SyntheticConfig};
use flattenquant::{Mode, QuantConfig};

fn main() -> flattenquant::Result<()> {
    let model = generate_model(&SyntheticConfig::default())?;
    for mode in [Mode::O1, Mode::O2] {
        let r = run_model(&model, &QuantConfig::default().with_mode(mode))?;
        println!(
            "{mode}: INT4 {:.3}, bytes {} vs FP16 {} ({:.2}x), bitops {:.3e}, mse {:.4e}, sqnr {:.2} dB, saturations {}",
            r.int4_fraction,
            r.total_bytes,
            r.total_bytes_fp16,
            r.compression(),
            r.total_bitops as f64,
            r.mean_output_mse,
            r.mean_sqnr_db,
            r.saturation_events
        );
    }
    Ok(())
}
