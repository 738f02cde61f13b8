use std::fs;
use std::path::Path;

use super::docs::{
    check_schema, to_json, GenDoc, LayerPlan, LayerRecipe, LayerStats, PlanDoc, RecipeDoc, ReportDoc, StatsDoc,
    SweepDoc, SCHEMA_VERSION,
};
use super::{CalibrateArgs, GenArgs, InferArgs, PlanArgs, QuantizeArgs, ReportArgs, SweepArgs};
use crate::config::QuantConfig;
use crate::error::{Error, Result};
use crate::flatten::build_flatten_plan;
use crate::pipeline::{
    calibrate_layer, evaluate_layer, quantize_calibrated_layer, run_layer, sweep, sweep_csv, LayerCalibration,
    LayerQuantConfig, ModelLayer, ModelReport, NamedLayerReport,
};
use crate::synth::{generate_model, LayerData};
use crate::tensor_io::{read_archive, write_archive, Matrix, Tensor, TensorArchive};
use rayon::prelude::*;

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, text)?;
    Ok(())
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

fn save_archive(archive: &TensorArchive, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    write_archive(archive, path)
}

pub fn cmd_gen(args: &GenArgs) -> Result<()> {
    let cfg = args.synthetic_config();
    let layers = generate_model(&cfg)?;
    let mut model = TensorArchive::new();
    let mut eval = TensorArchive::new();
    for l in &layers {
        model.insert_matrix(l.name.clone(), l.weight.clone())?;
        eval.insert_matrix(l.name.clone(), l.eval.clone())?;
        let mut calib = TensorArchive::new();
        for (i, b) in l.calib.iter().enumerate() {
            calib.insert_matrix(format!("batch{i}"), b.clone())?;
        }
        save_archive(&calib, &args.out.join("calib").join(format!("{}.fqta", l.name)))?;
    }
    save_archive(&model, &args.out.join("model.fqta"))?;
    save_archive(&eval, &args.out.join("eval.fqta"))?;
    let doc = GenDoc {
        schema_version: SCHEMA_VERSION,
        config: cfg,
        layers: layers.iter().map(|l| l.name.clone()).collect(),
    };
    write_text(&args.out.join("gen.json"), &to_json(&doc)?)
}

/// Weights from `model`, calibration batches from `calib_dir/<layer>.fqta`.
pub fn load_model(model: &Path, calib_dir: &Path) -> Result<Vec<ModelLayer>> {
    let archive = read_archive(model)?;
    archive
        .entries()
        .iter()
        .map(|(name, t)| {
            let weight = match t {
                Tensor::F64(m) => m.clone(),
                Tensor::I32(_) => {
                    return Err(Error::InvalidParameter(format!("model tensor '{name}' is not f64")));
                }
            };
            let calib = read_archive(calib_dir.join(format!("{name}.fqta")))?;
            let calib = calib.matrices().into_iter().cloned().collect();
            Ok(ModelLayer {
                name: name.clone(),
                weight,
                calib,
            })
        })
        .collect()
}

/// One evaluation matrix per layer, looked up by layer name.
pub fn load_eval(eval: &Path, layers: &[ModelLayer]) -> Result<Vec<Matrix>> {
    let archive = read_archive(eval)?;
    layers.iter().map(|l| archive.matrix(&l.name).cloned()).collect()
}

pub fn cmd_calibrate(args: &CalibrateArgs) -> Result<()> {
    let cfg = args.quant.config()?;
    let layers = load_model(&args.model, &args.calib)?;
    let stats = layers
        .par_iter()
        .map(|l| {
            Ok(LayerStats {
                layer: l.name.clone(),
                calibration: calibrate_layer(&l.weight, &l.calib, &cfg)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let doc = StatsDoc {
        schema_version: SCHEMA_VERSION,
        config: cfg,
        layers: stats,
    };
    write_text(&args.out, &to_json(&doc)?)
}

pub fn cmd_plan(args: &PlanArgs) -> Result<()> {
    let stats: StatsDoc = read_json(&args.stats)?;
    check_schema(stats.schema_version)?;
    let mut config = stats.config.clone();
    if let Some(b) = args.block {
        config.block = b;
    }
    config.validate()?;
    let layers = stats
        .layers
        .iter()
        .map(|l| {
            let c = &l.calibration;
            Ok(LayerPlan {
                layer: l.layer.clone(),
                plan: build_flatten_plan(&c.smoothed_max_abs, c.truncation.threshold, config.block)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let doc = PlanDoc {
        schema_version: SCHEMA_VERSION,
        config,
        layers,
    };
    write_text(&args.out, &to_json(&doc)?)
}

fn same_calibration_settings(a: &QuantConfig, b: &QuantConfig) -> bool {
    a.alpha == b.alpha && a.beta == b.beta && a.smoothing == b.smoothing && a.clip_outliers == b.clip_outliers
}

fn stored_calibrations(args: &QuantizeArgs, cfg: &QuantConfig, layers: &[ModelLayer]) -> Result<Option<Vec<LayerCalibration>>> {
    let Some(path) = &args.stats else { return Ok(None) };
    let stats: StatsDoc = read_json(path)?;
    check_schema(stats.schema_version)?;
    if !same_calibration_settings(&stats.config, cfg) {
        return Err(Error::Recipe(
            "stats were computed with different alpha, beta, smoothing or clipping settings".into(),
        ));
    }
    let plans = match &args.plan {
        Some(p) => {
            let doc: PlanDoc = read_json(p)?;
            check_schema(doc.schema_version)?;
            Some(doc)
        }
        None => None,
    };
    layers
        .iter()
        .map(|l| {
            let mut cal = stats
                .layers
                .iter()
                .find(|s| s.layer == l.name)
                .map(|s| s.calibration.clone())
                .ok_or_else(|| Error::Recipe(format!("stats have no entry for layer {}", l.name)))?;
            if let Some(doc) = &plans {
                let plan = doc
                    .layers
                    .iter()
                    .find(|p| p.layer == l.name)
                    .ok_or_else(|| Error::Recipe(format!("plan has no entry for layer {}", l.name)))?;
                if plan.plan.threshold() != cal.truncation.threshold {
                    return Err(Error::Recipe(format!("plan threshold for layer {} differs from stats", l.name)));
                }
                cal.plan_x = plan.plan.clone();
            } else if cal.plan_x.block() != cfg.block {
                cal.plan_x = build_flatten_plan(&cal.smoothed_max_abs, cal.truncation.threshold, cfg.block)?;
            }
            Ok(cal)
        })
        .collect::<Result<Vec<_>>>()
        .map(Some)
}

pub fn cmd_quantize(args: &QuantizeArgs) -> Result<()> {
    let cfg = args.quant.config()?;
    let layers = load_model(&args.model, &args.calib)?;
    let stored = stored_calibrations(args, &cfg, &layers)?;
    let quantized = layers
        .par_iter()
        .enumerate()
        .map(|(i, l)| {
            let cal = match &stored {
                Some(c) => c[i].clone(),
                None => calibrate_layer(&l.weight, &l.calib, &cfg)?,
            };
            quantize_calibrated_layer(&l.weight, &l.calib, &cal, &cfg)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut archive = TensorArchive::new();
    let mut recipes = Vec::with_capacity(layers.len());
    for (l, q) in layers.iter().zip(&quantized) {
        let recipe = LayerRecipe::from_layer(&l.name, q);
        archive.insert_int(recipe.weight_tensor.clone(), q.weight_q.q.clone())?;
        recipes.push(recipe);
    }
    save_archive(&archive, &args.out)?;
    let doc = RecipeDoc {
        schema_version: SCHEMA_VERSION,
        config: cfg,
        layers: recipes,
    };
    write_text(&args.recipe, &to_json(&doc)?)
}

/// Rebuilds quantized layers from a recipe and its archive of codes.
pub fn load_quantized(recipe: &Path, quantized: &Path) -> Result<Vec<(String, LayerQuantConfig)>> {
    let doc: RecipeDoc = read_json(recipe)?;
    check_schema(doc.schema_version)?;
    let archive = read_archive(quantized)?;
    doc.layers
        .iter()
        .map(|r| Ok((r.layer.clone(), r.to_layer(archive.int_matrix(&r.weight_tensor)?)?)))
        .collect()
}

pub fn cmd_infer(args: &InferArgs) -> Result<()> {
    let layers = load_quantized(&args.recipe, &args.quantized)?;
    let input = read_archive(&args.input)?;
    let mut out = TensorArchive::new();
    for (name, t) in input.entries() {
        let Tensor::F64(x) = t else {
            return Err(Error::InvalidParameter(format!("input tensor '{name}' is not f64")));
        };
        let (_, layer) = layers
            .iter()
            .find(|(n, _)| n == name)
            .ok_or_else(|| Error::MissingTensor(format!("recipe layer for input '{name}'")))?;
        out.insert_matrix(name.clone(), run_layer(layer, x)?.y)?;
    }
    save_archive(&out, &args.out)
}

pub fn cmd_report(args: &ReportArgs) -> Result<()> {
    let layers = load_quantized(&args.recipe, &args.quantized)?;
    let model = read_archive(&args.model)?;
    let eval = read_archive(&args.eval)?;
    let reports = layers
        .par_iter()
        .map(|(name, q)| {
            Ok(NamedLayerReport {
                layer: name.clone(),
                report: evaluate_layer(q, eval.matrix(name)?, model.matrix(name)?)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let config = layers
        .first()
        .map(|(_, q)| q.config.clone())
        .unwrap_or_default();
    let doc = ReportDoc {
        schema_version: SCHEMA_VERSION,
        config,
        report: ModelReport::from_layers(reports),
    };
    write_text(&args.out, &to_json(&doc)?)
}

pub fn cmd_sweep(args: &SweepArgs) -> Result<()> {
    let cfg = args.quant.config()?;
    let layers = load_model(&args.model, &args.calib)?;
    let eval = load_eval(&args.eval, &layers)?;
    let data: Vec<LayerData> = layers
        .into_iter()
        .zip(eval)
        .map(|(l, e)| LayerData {
            name: l.name,
            weight: l.weight,
            calib: l.calib,
            eval: e,
            outlier_channels: Vec::new(),
        })
        .collect();
    let rows = sweep(args.param, &args.values, &cfg, &data)?;
    write_text(&args.out_csv, &sweep_csv(args.param, &rows))?;
    let doc = SweepDoc {
        schema_version: SCHEMA_VERSION,
        config: cfg,
        param: args.param,
        rows,
    };
    write_text(&args.out_json, &to_json(&doc)?)
}
