//! Evaluation: mean 3D distance error per joint, success-frame curve
//! (max per-joint error within threshold), and batch-1 throughput.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::element::Element;
use crate::error::{Error, Result};
use crate::model::{extract_poses, ModelGraph};
use crate::pipeline::HandSample;
use crate::tensor::{BnMode, Tape};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ThroughputStats {
    pub fps: f64,
    pub mean_ms: f64,
    pub p50_ms: f64,
    pub p99_ms: f64,
    pub iterations: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EvalReport {
    pub frames: usize,
    pub mean_error_mm: f64,
    pub per_joint_error_mm: Vec<f64>,
    /// (threshold mm, fraction of frames whose worst joint is within it).
    pub success_curve: Vec<(f64, f64)>,
    pub throughput: Option<ThroughputStats>,
}

/// Fig. 8's x-range: thresholds 0..=80 mm in 2 mm steps.
pub fn default_thresholds() -> Vec<f64> {
    (0..=40).map(|i| (i * 2) as f64).collect()
}

/// Metrics from already-denormalized predictions. The core of `evaluate`,
/// also used to score externally produced prediction files.
pub fn evaluate_predictions(
    predictions_mm: &[Vec<[f64; 3]>],
    ground_truth_mm: &[Vec<[f64; 3]>],
    thresholds: &[f64],
) -> Result<EvalReport> {
    if predictions_mm.is_empty() {
        return Err(Error::Usage("evaluate requires at least one frame".into()));
    }
    if predictions_mm.len() != ground_truth_mm.len() {
        return Err(Error::dim(
            "evaluate",
            format!("{} predictions vs {} ground-truth frames", predictions_mm.len(), ground_truth_mm.len()),
        ));
    }
    let joints = ground_truth_mm[0].len();
    let frames = predictions_mm.len();
    let mut per_joint = vec![0.0; joints];
    let mut worst_per_frame = Vec::with_capacity(frames);
    for (pred, gt) in predictions_mm.iter().zip(ground_truth_mm) {
        if pred.len() != joints || gt.len() != joints {
            return Err(Error::dim(
                "evaluate",
                format!("frame with {} predicted / {} gt joints, expected {}", pred.len(), gt.len(), joints),
            ));
        }
        let mut worst = 0.0f64;
        for (j, (p, g)) in pred.iter().zip(gt).enumerate() {
            let err = ((p[0] - g[0]).powi(2) + (p[1] - g[1]).powi(2) + (p[2] - g[2]).powi(2)).sqrt();
            per_joint[j] += err;
            worst = worst.max(err);
        }
        worst_per_frame.push(worst);
    }
    for e in &mut per_joint {
        *e /= frames as f64;
    }
    let mean = per_joint.iter().sum::<f64>() / joints as f64;
    // Success uses the max criterion: a frame succeeds only if every
    // joint is within the threshold.
    let success_curve = thresholds
        .iter()
        .map(|&thr| {
            let ok = worst_per_frame.iter().filter(|&&w| w <= thr).count();
            (thr, ok as f64 / frames as f64)
        })
        .collect();
    Ok(EvalReport {
        frames,
        mean_error_mm: mean,
        per_joint_error_mm: per_joint,
        success_curve,
        throughput: None,
    })
}

/// Per-frame prediction: batch-1 forward in infer mode, global pose
/// denormalized through the sample's crop.
pub fn predict_mm<T: Element>(model: &ModelGraph<T>, sample: &HandSample) -> Result<Vec<[f64; 3]>> {
    let input = super::batch_inputs::<T>(&[sample])?;
    let tape = Tape::no_grad();
    let output = model.forward(&tape, &input, BnMode::Infer)?;
    let pose = extract_poses(&output, model.topology()).remove(0);
    Ok(pose.global.iter().map(|&j| sample.crop.denormalize_point(j)).collect())
}

/// Evaluates the model over samples; optionally times batch-1 forward
/// passes (after warmup) for the throughput block.
pub fn evaluate<T: Element>(
    model: &ModelGraph<T>,
    samples: &[HandSample],
    thresholds: &[f64],
    with_throughput: bool,
) -> Result<EvalReport> {
    if samples.is_empty() {
        return Err(Error::Usage("evaluate requires at least one frame".into()));
    }
    let mut predictions = Vec::with_capacity(samples.len());
    let mut gts = Vec::with_capacity(samples.len());
    for s in samples {
        predictions.push(predict_mm(model, s)?);
        gts.push(s.joints_mm());
    }
    let mut report = evaluate_predictions(&predictions, &gts, thresholds)?;
    if with_throughput {
        report.throughput = Some(time_forward(model, samples, samples.len().clamp(8, 64))?);
    }
    Ok(report)
}

fn time_forward<T: Element>(
    model: &ModelGraph<T>,
    samples: &[HandSample],
    iterations: usize,
) -> Result<ThroughputStats> {
    let warmup = 3.min(iterations);
    for i in 0..warmup {
        predict_mm(model, &samples[i % samples.len()])?;
    }
    let mut latencies_ms = Vec::with_capacity(iterations);
    for i in 0..iterations {
        let sample = &samples[i % samples.len()];
        let start = Instant::now();
        predict_mm(model, sample)?;
        latencies_ms.push(start.elapsed().as_secs_f64() * 1e3);
    }
    Ok(throughput_from_latencies(latencies_ms))
}

fn throughput_from_latencies(mut latencies_ms: Vec<f64>) -> ThroughputStats {
    let iterations = latencies_ms.len();
    let mean = latencies_ms.iter().sum::<f64>() / iterations as f64;
    latencies_ms.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let pick = |q: f64| latencies_ms[((iterations as f64 - 1.0) * q).round() as usize];
    ThroughputStats {
        fps: 1000.0 / mean,
        mean_ms: mean,
        p50_ms: pick(0.5),
        p99_ms: pick(0.99),
        iterations,
    }
}

/// Timed batch-1 forward passes on one fixed sample; the bench command's
/// engine.
pub fn bench_forward<T: Element>(
    model: &ModelGraph<T>,
    sample: &HandSample,
    iterations: usize,
) -> Result<ThroughputStats> {
    if iterations == 0 {
        return Err(Error::Usage("bench requires at least one iteration".into()));
    }
    let warmup = 5.min(iterations);
    for _ in 0..warmup {
        predict_mm(model, sample)?;
    }
    let mut latencies_ms = Vec::with_capacity(iterations);
    for _ in 0..iterations {
        let start = Instant::now();
        predict_mm(model, sample)?;
        latencies_ms.push(start.elapsed().as_secs_f64() * 1e3);
    }
    Ok(throughput_from_latencies(latencies_ms))
}

/// Two-column CSV matching the success-curve export format.
pub fn success_curve_csv(report: &EvalReport) -> String {
    let mut out = String::from("threshold_mm,fraction\n");
    for (thr, frac) in &report.success_curve {
        out.push_str(&format!("{thr},{frac}\n"));
    }
    out
}
