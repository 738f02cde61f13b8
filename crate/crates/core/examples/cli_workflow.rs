//! The gen, calibrate, quantize and report commands driven from code.

use flattenquant::cli::{self, GenArgs, QuantArgs};

fn main() -> flattenquant::Result<()> {
    let dir = std::env::temp_dir().join("flattenquant-cli-example");
    let gen = GenArgs { layers: 4, channels: 128, out_features: 64, ..GenArgs::new(&dir) };
    cli::cmd_gen(&gen)?;
    let (model, calib) = (dir.join("model.fqta"), dir.join("calib"));
    cli::cmd_calibrate(&cli::CalibrateArgs {
        model: model.clone(),
        calib: calib.clone(),
        out: dir.join("stats.json"),
        quant: QuantArgs::default(),
    })?;
    cli::cmd_quantize(&cli::QuantizeArgs {
        model: model.clone(),
        calib,
        stats: Some(dir.join("stats.json")),
        plan: None,
        out: dir.join("quantized.fqta"),
        recipe: dir.join("recipe.json"),
        quant: QuantArgs::default(),
    })?;
    cli::cmd_report(&cli::ReportArgs {
        model,
        recipe: dir.join("recipe.json"),
        quantized: dir.join("quantized.fqta"),
        eval: dir.join("eval.fqta"),
        out: dir.join("report.json"),
    })?;
    for (name, _) in cli::load_quantized(&dir.join("recipe.json"), &dir.join("quantized.fqta"))? {
        println!("quantized {name}");
    }
    println!("outputs in {}", dir.display());
    Ok(())
}
