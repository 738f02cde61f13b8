//! Sweeps beta and gamma and toggles clipping and smoothing.

use flattenquant::pipeline::{sweep, sweep_csv, SweepParam};
use flattenquant::synth::{generate_model, SyntheticConfig};
use flattenquant::QuantConfig;

fn main() -> flattenquant::Result<()> {
    let model = generate_model(&SyntheticConfig { layers: 8, ..SyntheticConfig::default() })?;
    let base = QuantConfig::default();
    for (param, values) in [
        (SweepParam::Beta, vec![1.1, 1.3, 1.5]),
        (SweepParam::Gamma, vec![1.82, 1.86, 1.90]),
        (SweepParam::Clip, vec![0.0, 1.0]),
        (SweepParam::Smooth, vec![0.0, 1.0]),
    ] {
        let rows = sweep(param, &values, &base, &model)?;
        print!("{}", sweep_csv(param, &rows));
        println!();
    }
    Ok(())
}
