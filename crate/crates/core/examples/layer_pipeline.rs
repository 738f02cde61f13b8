//! One synthetic layer through O1, O2 and O3, compared with two baselines.

use flattenquant::pipeline::{build_baseline, evaluate_layer, quantize_layer, Baseline, ErrorMetrics};
use flattenquant::synth::{generate_layer, SyntheticConfig};
use flattenquant::{Mode, QuantConfig};

fn main() -> flattenquant::Result<()> {
    let d = generate_layer(&SyntheticConfig::default(), 0)?;
    println!("{}: weight {}x{}, outlier channels {:?}", d.name, d.weight.rows(), d.weight.cols(), d.outlier_channels);

    for mode in [Mode::O1, Mode::O2, Mode::O3] {
        let q = quantize_layer(&d.weight, &d.calib, &QuantConfig::default().with_mode(mode))?;
        let r = evaluate_layer(&q, &d.eval, &d.weight)?;
        println!(
            "{mode}: {:?} K={} mse {:.4e} sqnr {:.2} dB, flatten x {:.3} w {:.3}, KL ratios {:.3}/{:.3}",
            r.bits, r.padded_width, r.output_mse, r.sqnr_db, r.flatten_ratio_x, r.flatten_ratio_w,
            q.kl_ratio_act.ratio, q.kl_ratio_w.ratio
        );
    }
    let reference = d.eval.matmul(&d.weight)?;
    for (name, kind) in [("naive W8A8", Baseline::NaiveW8A8), ("smoothing W8A8", Baseline::smoothquant(0.5))] {
        let y = build_baseline(kind, &d.weight, &d.calib)?.run(&d.eval)?;
        println!("{name}: mse {:.4e}", ErrorMetrics::between(&y, &reference)?.output_mse);
    }
    Ok(())
}
