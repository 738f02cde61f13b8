//! Channel maxima, boxplot clipping and the truncation threshold.

use flattenquant::calibration::{collect_channel_maxes, TruncationPolicy};
use flattenquant::Matrix;

fn main() -> flattenquant::Result<()> {
    // eight channels, channel 5 carries an outlier
    let batches: Vec<Matrix> = (0..4)
        .map(|b| Matrix::from_fn(16, 8, |i, j| {
            let v = ((i * 7 + j * 3 + b) % 11) as f64 / 10.0 - 0.5;
            if j == 5 { v * 60.0 } else { v * (1.0 + 0.15 * j as f64) }
        }))
        .collect();
    let stats = collect_channel_maxes(&batches)?;
    println!("channel maxima: {:?}", stats.max_abs);

    for clip in [true, false] {
        let p = TruncationPolicy::from_maxes(&stats.max_abs, 1.3, clip)?;
        println!(
            "clip={clip}: q1 {:.3} q3 {:.3} iqr {:.3} T {:.4}",
            p.q1, p.q3, p.iqr, p.threshold
        );
    }
    Ok(())
}
