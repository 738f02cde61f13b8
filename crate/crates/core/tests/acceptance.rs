//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero when any criterion fails.

use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use num_bigint::BigInt;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use flattenquant::calibration::TruncationPolicy;
use flattenquant::cli::{self, GenArgs, QuantArgs};
use flattenquant::flatten::{flatten_pair, DEFAULT_BLOCK};
use flattenquant::gptq::{gptq_optimize, hessian_from_calibration, hessian_objective, HessianEstimate};
use flattenquant::pipeline::{
    build_baseline, calibrate_layer, flatten_layer, non_decreasing, non_increasing, quantize_calibrated_layer,
    quantized_weight_bytes, run_layer, run_model, sweep, Baseline, ErrorMetrics, SweepParam,
};
use flattenquant::quantize::{dequantize, int_matmul, BitWidth, QuantParams, QuantizedTensor};
use flattenquant::smoothing::{apply_smoothing, smoothing_scales};
use flattenquant::synth::{generate_layer, generate_model, SyntheticConfig};
use flattenquant::{IntMatrix, Matrix, Mode, QuantConfig};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn randn(rows: usize, cols: usize, sd: f64, rng: &mut ChaCha8Rng) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| sd * rng.sample::<f64, _>(StandardNormal))
}

/// Gaussian activations with a few columns magnified 20 to 100 times.
fn outlier_activations(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
    let mut gain = vec![1.0; cols];
    for _ in 0..2 {
        gain[rng.random_range(0..cols)] = rng.random_range(20.0..=100.0);
    }
    Matrix::from_fn(rows, cols, |_, j| gain[j] * rng.sample::<f64, _>(StandardNormal))
}

fn flatten_exactness() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let x = outlier_activations(64, 128, &mut rng);
        let w = randn(128, 64, 0.1, &mut rng);
        let t_x = TruncationPolicy::from_maxes(&x.col_max_abs(), 1.3, true).unwrap().threshold;
        let t_w = TruncationPolicy::from_maxes(&w.row_max_abs(), 1.3, true).unwrap().threshold;
        let pair = flatten_pair(&x, &w, t_x, t_w, DEFAULT_BLOCK).unwrap();
        let exact = x.matmul(&w).unwrap();
        let err = pair.x.matmul(&pair.w).unwrap().max_abs_diff(&exact);
        worst = worst.max(err / exact.max_abs().max(1.0));
    }
    let elapsed = start.elapsed();
    outcome(
        worst <= 1e-9 && elapsed < Duration::from_secs(10),
        format!("worst relative error {worst:.2e} over 200 pairs in {:.2}s", elapsed.as_secs_f64()),
    )
}

fn max_suppression(model: &[flattenquant::synth::LayerData]) -> Outcome {
    let cfg = QuantConfig::default();
    let mut samples = 0;
    let mut violations = 0;
    for layer in model {
        let cal = calibrate_layer(&layer.weight, &layer.calib, &cfg).unwrap();
        let flat = flatten_layer(&layer.weight, &layer.calib, &cal, &cfg).unwrap();
        for x in &flat.calib {
            samples += 1;
            if x.max_abs() > cal.truncation.threshold {
                violations += 1;
            }
        }
    }
    outcome(
        violations == 0,
        format!("{violations} of {samples} flattened calibration batches exceed T"),
    )
}

fn smoothing_exactness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let x = outlier_activations(64, 128, &mut rng);
        let w = randn(128, 64, 0.1, &mut rng);
        let s = smoothing_scales(&x.col_max_abs(), &w.row_max_abs(), 0.5).unwrap();
        let (xs, ws) = apply_smoothing(&x, &w, &s).unwrap();
        let exact = x.matmul(&w).unwrap();
        worst = worst.max(xs.matmul(&ws).unwrap().max_abs_diff(&exact) / exact.max_abs());
    }
    outcome(worst <= 1e-10, format!("worst relative error {worst:.2e} over 200 pairs"))
}

fn random_codes(rows: usize, cols: usize, qmax: i32, rng: &mut ChaCha8Rng) -> IntMatrix {
    IntMatrix::new(rows, cols, (0..rows * cols).map(|_| rng.random_range(-qmax..=qmax)).collect()).unwrap()
}

fn gemm_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut mismatches = 0;
    for case in 0..100 {
        let bits = if case % 2 == 0 { BitWidth::Int4 } else { BitWidth::Int8 };
        let (m, k, n) = if case < 2 {
            (256, 256, 256)
        } else {
            (rng.random_range(1..=256), rng.random_range(1..=256), rng.random_range(1..=256))
        };
        let sx = rng.random_range(0.001..1.0);
        let sw = rng.random_range(0.001..1.0);
        let qx = QuantizedTensor::new(random_codes(m, k, bits.qmax(), &mut rng), QuantParams::new(bits, sx).unwrap())
            .unwrap();
        let qw = QuantizedTensor::new(random_codes(k, n, bits.qmax(), &mut rng), QuantParams::new(bits, sw).unwrap())
            .unwrap();
        let got = int_matmul(&qx, &qw).unwrap();
        'outer: for i in 0..m {
            for j in 0..n {
                let mut acc = BigInt::from(0);
                for t in 0..k {
                    acc += BigInt::from(qx.q.get(i, t)) * BigInt::from(qw.q.get(t, j));
                }
                let acc: i64 = acc.try_into().unwrap();
                let expected = acc as f64 * (sx * sw);
                if got.get(i, j).to_bits() != expected.to_bits() {
                    mismatches += 1;
                    break 'outer;
                }
            }
        }
    }
    outcome(mismatches == 0, format!("{mismatches} of 100 INT4/INT8 pairs differ from the big-integer GEMM"))
}

fn accuracy_ordering() -> Outcome {
    let cfg_gen = SyntheticConfig {
        layers: 100,
        ..SyntheticConfig::default()
    };
    let cfg = QuantConfig::default().with_mode(Mode::O1);
    let (mut beat_naive, mut beat_smooth) = (0, 0);
    for i in 0..cfg_gen.layers {
        let d = generate_layer(&cfg_gen, i).unwrap();
        let reference = d.eval.matmul(&d.weight).unwrap();
        let mse = |y: &Matrix| ErrorMetrics::between(y, &reference).unwrap().output_mse;
        let q = flattenquant::pipeline::quantize_layer(&d.weight, &d.calib, &cfg).unwrap();
        let o1 = mse(&run_layer(&q, &d.eval).unwrap().y);
        let naive = mse(&build_baseline(Baseline::NaiveW8A8, &d.weight, &d.calib).unwrap().run(&d.eval).unwrap());
        let smooth = mse(
            &build_baseline(Baseline::smoothquant(0.5), &d.weight, &d.calib)
                .unwrap()
                .run(&d.eval)
                .unwrap(),
        );
        beat_naive += (o1 < naive) as usize;
        beat_smooth += (o1 <= smooth) as usize;
    }
    outcome(
        beat_naive >= 95 && beat_smooth >= 80,
        format!("O1 beats naive W8A8 on {beat_naive}/100 layers, matches or beats smoothing-only INT8 on {beat_smooth}/100"),
    )
}

fn gptq_improvement(model: &[flattenquant::synth::LayerData]) -> Outcome {
    let cfg = QuantConfig::default();
    let mut improved = 0;
    for layer in model {
        let cal = calibrate_layer(&layer.weight, &layer.calib, &cfg).unwrap();
        let flat = flatten_layer(&layer.weight, &layer.calib, &cal, &cfg).unwrap();
        let h = hessian_from_calibration(&flat.calib, cfg.damping).unwrap();
        let o2 = quantize_calibrated_layer(&layer.weight, &layer.calib, &cal, &cfg.clone().with_mode(Mode::O2)).unwrap();
        let o3 = quantize_calibrated_layer(&layer.weight, &layer.calib, &cal, &cfg.clone().with_mode(Mode::O3)).unwrap();
        let rtn = hessian_objective(&flat.weight, &dequantize(&o2.weight_q), &h.h);
        let opt = hessian_objective(&flat.weight, &dequantize(&o3.weight_q), &h.h);
        improved += (opt <= rtn) as usize;
    }

    let w = Matrix::from_rows(&[vec![0.6], vec![0.6]]).unwrap();
    let h = Matrix::from_rows(&[vec![1.0, 0.5], vec![0.5, 1.0]]).unwrap();
    let est = HessianEstimate {
        h: h.clone(),
        damping: 0.0,
        sample_count: 0,
    };
    let g = gptq_optimize(&w, &est, QuantParams::new(BitWidth::Int4, 1.0).unwrap()).unwrap();
    let toy = hessian_objective(&w, &dequantize(&g), &h);
    let mut best = f64::INFINITY;
    for a in -7..=7 {
        for b in -7..=7 {
            let cand = Matrix::from_rows(&[vec![a as f64], vec![b as f64]]).unwrap();
            best = best.min(hessian_objective(&w, &cand, &h));
        }
    }
    outcome(
        improved == model.len() && (toy - best).abs() <= 1e-9,
        format!(
            "O3 <= O2 Hessian objective on {improved}/{} layers; toy objective {toy:.12} vs brute force {best:.12}",
            model.len()
        ),
    )
}

fn beta_sweep(model: &[flattenquant::synth::LayerData]) -> Outcome {
    let rows = sweep(SweepParam::Beta, &[1.1, 1.2, 1.3, 1.4, 1.5], &QuantConfig::default(), model).unwrap();
    let trend: Vec<String> = rows.iter().map(|r| format!("{:.4}", r.flatten_ratio_x)).collect();
    outcome(
        non_increasing(&rows, |r| r.flatten_ratio_x),
        format!("activation flatten ratio over beta 1.1..1.5: {}", trend.join(" ")),
    )
}

fn gamma_sweep(model: &[flattenquant::synth::LayerData]) -> Outcome {
    let rows = sweep(SweepParam::Gamma, &[1.82, 1.84, 1.86, 1.88, 1.90], &QuantConfig::default(), model).unwrap();
    let trend: Vec<String> = rows.iter().map(|r| format!("{:.3}", r.int4_fraction)).collect();
    let at_default = rows[2].int4_fraction;
    outcome(
        non_decreasing(&rows, |r| r.int4_fraction) && (0.30..=0.60).contains(&at_default),
        format!("INT4 fraction over gamma 1.82..1.90: {}; at default {at_default:.3}", trend.join(" ")),
    )
}

fn memory_model(model: &[flattenquant::synth::LayerData]) -> Outcome {
    let report = run_model(model, &QuantConfig::default()).unwrap();
    let o1 = run_model(model, &QuantConfig::default().with_mode(Mode::O1)).unwrap();
    let hand = quantized_weight_bytes(5120, 4096, BitWidth::Int4) == 5120 * 4096 / 2
        && quantized_weight_bytes(5120, 4096, BitWidth::Int8) == 5120 * 4096;
    let recomputed: u64 = report
        .layers
        .iter()
        .map(|l| l.report.padded_width as u64 * 256 * l.report.bits.bits() as u64 / 8)
        .sum();
    let ratio = report.total_bytes as f64 / report.total_bytes_fp16 as f64;
    let ordered = report.total_bytes < o1.total_bytes && o1.total_bytes < o1.total_bytes_fp16;
    outcome(
        hand && recomputed == report.total_bytes && ordered && ratio <= 0.55,
        format!(
            "O2 weight bytes {} = {ratio:.4} x FP16 {} ({:.2}x smaller), INT4 fraction {:.3}, mean flatten ratio x {:.3} w {:.3}; O1 bytes {}; byte formula checks {}",
            report.total_bytes,
            report.total_bytes_fp16,
            report.compression(),
            report.int4_fraction,
            report.mean_flatten_ratio_x,
            report.mean_flatten_ratio_w,
            o1.total_bytes,
            if hand && recomputed == report.total_bytes { "ok" } else { "FAILED" },
        ),
    )
}

fn run_cli_pipeline(dir: &Path) {
    cli::cmd_gen(&GenArgs::new(dir)).unwrap();
    let model = dir.join("model.fqta");
    let calib = dir.join("calib");
    let quant = QuantArgs::default();
    cli::cmd_calibrate(&cli::CalibrateArgs {
        model: model.clone(),
        calib: calib.clone(),
        out: dir.join("stats.json"),
        quant: quant.clone(),
    })
    .unwrap();
    cli::cmd_plan(&cli::PlanArgs {
        stats: dir.join("stats.json"),
        out: dir.join("plan.json"),
        block: None,
    })
    .unwrap();
    cli::cmd_quantize(&cli::QuantizeArgs {
        model: model.clone(),
        calib: calib.clone(),
        stats: Some(dir.join("stats.json")),
        plan: Some(dir.join("plan.json")),
        out: dir.join("quantized.fqta"),
        recipe: dir.join("recipe.json"),
        quant: quant.clone(),
    })
    .unwrap();
    cli::cmd_infer(&cli::InferArgs {
        recipe: dir.join("recipe.json"),
        quantized: dir.join("quantized.fqta"),
        input: dir.join("eval.fqta"),
        out: dir.join("outputs.fqta"),
    })
    .unwrap();
    cli::cmd_report(&cli::ReportArgs {
        model: model.clone(),
        recipe: dir.join("recipe.json"),
        quantized: dir.join("quantized.fqta"),
        eval: dir.join("eval.fqta"),
        out: dir.join("report.json"),
    })
    .unwrap();
    cli::cmd_sweep(&cli::SweepArgs {
        model: dir.join("model.fqta"),
        calib,
        eval: dir.join("eval.fqta"),
        param: SweepParam::Gamma,
        values: vec![1.82, 1.86, 1.90],
        out_csv: dir.join("sweep.csv"),
        out_json: dir.join("sweep.json"),
        quant,
    })
    .unwrap();
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                out.push((rel, fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn determinism(suite_start: Instant) -> Outcome {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run_cli_pipeline(a.path());
    run_cli_pipeline(b.path());
    let fa = files(a.path());
    let fb = files(b.path());
    let differing: Vec<&str> = fa
        .iter()
        .zip(&fb)
        .filter(|(x, y)| x != y)
        .map(|(x, _)| x.0.as_str())
        .collect();
    let elapsed = suite_start.elapsed();
    outcome(
        fa.len() == fb.len() && differing.is_empty() && elapsed < Duration::from_secs(300),
        format!(
            "{} output files compared, {} differ; suite time {:.1}s",
            fa.len(),
            differing.len(),
            elapsed.as_secs_f64()
        ),
    )
}

fn main() {
    let start = Instant::now();
    let model = generate_model(&SyntheticConfig::default()).unwrap();
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome + '_>)> = vec![
        ("flatten exactness", Box::new(flatten_exactness)),
        ("max suppression", Box::new(|| max_suppression(&model))),
        ("smoothing exactness", Box::new(smoothing_exactness)),
        ("integer GEMM oracle", Box::new(gemm_oracle)),
        ("accuracy ordering", Box::new(accuracy_ordering)),
        ("GPTQ improvement", Box::new(|| gptq_improvement(&model))),
        ("beta sweep", Box::new(|| beta_sweep(&model))),
        ("gamma sweep", Box::new(|| gamma_sweep(&model))),
        ("memory model", Box::new(|| memory_model(&model))),
        ("determinism", Box::new(|| determinism(start))),
    ];
    let mut passed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let o = check();
        passed += o.pass as usize;
        println!(
            "{} {:>2} {name}: {} [{:.1}s]",
            if o.pass { "PASS" } else { "FAIL" },
            i + 1,
            o.detail,
            t.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {passed}/{} criteria passed in {:.1}s", criteria.len(), start.elapsed().as_secs_f64());
    if passed != criteria.len() {
        std::process::exit(1);
    }
}
