//! Command-line workflows: gen, calibrate, plan, quantize, infer, report and
//! sweep. Every command is deterministic in its inputs and flags.

mod commands;
pub mod docs;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use commands::{
    cmd_calibrate, cmd_gen, cmd_infer, cmd_plan, cmd_quantize, cmd_report, cmd_sweep, load_eval, load_model,
    load_quantized,
};

use crate::config::{Mode, QuantConfig, DEFAULT_ALPHA, DEFAULT_BETA, DEFAULT_GAMMA, DEFAULT_SEED};
use crate::error::Result;
use crate::flatten::DEFAULT_BLOCK;
use crate::gptq::DEFAULT_DAMPING;
use crate::pipeline::SweepParam;
use crate::quantize::DEFAULT_BINS;
use crate::synth::SyntheticConfig;

#[derive(Debug, Parser)]
#[command(name = "flattenquant", version, about = "Per-tensor INT4/INT8 quantization with channel flattening")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Debug, Args)]
pub struct QuantArgs {
    #[arg(long, default_value_t = Mode::O2)]
    pub mode: Mode,
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    pub alpha: f64,
    #[arg(long, default_value_t = DEFAULT_BETA)]
    pub beta: f64,
    #[arg(long, default_value_t = DEFAULT_GAMMA)]
    pub gamma: f64,
    #[arg(long, default_value_t = DEFAULT_BLOCK)]
    pub block: usize,
    #[arg(long, default_value_t = DEFAULT_BINS)]
    pub bins: usize,
    #[arg(long, default_value_t = DEFAULT_DAMPING)]
    pub damping: f64,
    /// Skip channel smoothing.
    #[arg(long)]
    pub no_smoothing: bool,
    /// Skip boxplot clipping of outlier channel maxima.
    #[arg(long)]
    pub no_clip: bool,
}

impl Default for QuantArgs {
    fn default() -> Self {
        QuantArgs::from(&QuantConfig::default())
    }
}

impl From<&QuantConfig> for QuantArgs {
    fn from(c: &QuantConfig) -> Self {
        Self {
            mode: c.mode,
            alpha: c.alpha,
            beta: c.beta,
            gamma: c.gamma,
            block: c.block,
            bins: c.bins,
            damping: c.damping,
            no_smoothing: !c.smoothing,
            no_clip: !c.clip_outliers,
        }
    }
}

impl QuantArgs {
    pub fn config(&self) -> Result<QuantConfig> {
        let cfg = QuantConfig {
            mode: self.mode,
            alpha: self.alpha,
            beta: self.beta,
            gamma: self.gamma,
            block: self.block,
            bins: self.bins,
            damping: self.damping,
            smoothing: !self.no_smoothing,
            clip_outliers: !self.no_clip,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Clone, Debug, Args)]
pub struct GenArgs {
    /// Output directory for model.fqta, calib/, eval.fqta and gen.json.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = SyntheticConfig::default().layers)]
    pub layers: usize,
    #[arg(long, default_value_t = SyntheticConfig::default().channels)]
    pub channels: usize,
    #[arg(long, default_value_t = SyntheticConfig::default().out_features)]
    pub out_features: usize,
    #[arg(long, default_value_t = SyntheticConfig::default().calib_batches)]
    pub calib_batches: usize,
    #[arg(long, default_value_t = SyntheticConfig::default().tokens_per_batch)]
    pub tokens: usize,
    #[arg(long, default_value_t = SyntheticConfig::default().eval_tokens)]
    pub eval_tokens: usize,
    #[arg(long, default_value_t = SyntheticConfig::default().outlier_fraction)]
    pub outlier_fraction: f64,
    #[arg(long, default_value_t = SyntheticConfig::default().outlier_factor_min)]
    pub factor_min: f64,
    #[arg(long, default_value_t = SyntheticConfig::default().outlier_factor_max)]
    pub factor_max: f64,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
}

impl GenArgs {
    pub fn new(out: impl Into<PathBuf>) -> Self {
        let d = SyntheticConfig::default();
        Self {
            out: out.into(),
            layers: d.layers,
            channels: d.channels,
            out_features: d.out_features,
            calib_batches: d.calib_batches,
            tokens: d.tokens_per_batch,
            eval_tokens: d.eval_tokens,
            outlier_fraction: d.outlier_fraction,
            factor_min: d.outlier_factor_min,
            factor_max: d.outlier_factor_max,
            seed: d.seed,
        }
    }

    pub fn synthetic_config(&self) -> SyntheticConfig {
        SyntheticConfig {
            layers: self.layers,
            channels: self.channels,
            out_features: self.out_features,
            calib_batches: self.calib_batches,
            tokens_per_batch: self.tokens,
            eval_tokens: self.eval_tokens,
            outlier_fraction: self.outlier_fraction,
            outlier_factor_min: self.factor_min,
            outlier_factor_max: self.factor_max,
            seed: self.seed,
            ..SyntheticConfig::default()
        }
    }
}

#[derive(Clone, Debug, Args)]
pub struct CalibrateArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Directory holding one `<layer>.fqta` archive of batches per layer.
    #[arg(long)]
    pub calib: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub quant: QuantArgs,
}

#[derive(Clone, Debug, Args)]
pub struct PlanArgs {
    #[arg(long)]
    pub stats: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Padding block; defaults to the block recorded in the stats.
    #[arg(long)]
    pub block: Option<usize>,
}

#[derive(Clone, Debug, Args)]
pub struct QuantizeArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub calib: PathBuf,
    /// Reuse activation statistics from `calibrate` instead of recomputing.
    #[arg(long)]
    pub stats: Option<PathBuf>,
    /// Override activation plans with the output of `plan`; needs --stats.
    #[arg(long, requires = "stats")]
    pub plan: Option<PathBuf>,
    /// Quantized archive of INT weight codes.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub recipe: PathBuf,
    #[command(flatten)]
    pub quant: QuantArgs,
}

#[derive(Clone, Debug, Args)]
pub struct InferArgs {
    #[arg(long)]
    pub recipe: PathBuf,
    #[arg(long)]
    pub quantized: PathBuf,
    /// Archive with one input matrix per layer, named after the layer.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Debug, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub recipe: PathBuf,
    #[arg(long)]
    pub quantized: PathBuf,
    #[arg(long)]
    pub eval: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub calib: PathBuf,
    #[arg(long)]
    pub eval: PathBuf,
    #[arg(long)]
    pub param: SweepParam,
    /// Comma separated; clip and smooth take 0 or 1.
    #[arg(long, value_delimiter = ',', required = true)]
    pub values: Vec<f64>,
    #[arg(long)]
    pub out_csv: PathBuf,
    #[arg(long)]
    pub out_json: PathBuf,
    #[command(flatten)]
    pub quant: QuantArgs,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a seeded synthetic model with outlier channels.
    Gen(GenArgs),
    /// Collect per-layer activation statistics and thresholds.
    Calibrate(CalibrateArgs),
    /// Build activation flatten plans from statistics.
    Plan(PlanArgs),
    /// Quantize every layer and write codes plus recipes.
    Quantize(QuantizeArgs),
    /// Run quantized layers on input matrices.
    Infer(InferArgs),
    /// Error and cost report against the full-precision model.
    Report(ReportArgs),
    /// Rerun the model over values of one setting.
    Sweep(SweepArgs),
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Gen(a) => cmd_gen(&a),
        Command::Calibrate(a) => cmd_calibrate(&a),
        Command::Plan(a) => cmd_plan(&a),
        Command::Quantize(a) => cmd_quantize(&a),
        Command::Infer(a) => cmd_infer(&a),
        Command::Report(a) => cmd_report(&a),
        Command::Sweep(a) => cmd_sweep(&a),
    }
}
