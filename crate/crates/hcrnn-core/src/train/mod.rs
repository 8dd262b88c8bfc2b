//! Optimizer, learning-rate schedule, and the training loop.

mod ablate;
mod eval;

pub use ablate::{parity_counts, run_ablation, AblationReport, AblationRow, VARIANTS};
pub use eval::{
    bench_forward, default_thresholds, evaluate, evaluate_predictions, success_curve_csv,
    EvalReport, ThroughputStats,
};

use serde::{Deserialize, Serialize};

use crate::element::Element;
use crate::error::{Error, Result};
use crate::model::{total_loss, ModelGraph};
use crate::pipeline::{augment_random, HandSample, PATCH_SIZE};
use crate::rng::{keyed_rng, Stream};
use crate::tensor::{BnMode, Tape, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F32,
    F64,
}

/// Training hyperparameters. Defaults are the published recipe: Adam at
/// 1e-3, batch 32, weight decay 1e-5, ×0.96 every 2000 iterations,
/// 120 epochs, λ = 1.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr0: f64,
    pub batch_size: usize,
    pub weight_decay: f64,
    pub lr_decay: f64,
    pub lr_decay_every: usize,
    pub epochs: usize,
    pub lambda: f64,
    pub seed: u64,
    pub precision: Precision,
    /// Online augmentation during training.
    pub augment: bool,
    /// Optional hard cap on optimizer steps (desk-scale runs).
    pub max_iterations: Option<usize>,
    /// Stop once train-set mean error drops below this many millimeters.
    pub target_error_mm: Option<f64>,
    /// How often (iterations) to evaluate when `target_error_mm` is set.
    pub eval_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr0: 1e-3,
            batch_size: 32,
            weight_decay: 1e-5,
            lr_decay: 0.96,
            lr_decay_every: 2000,
            epochs: 120,
            lambda: 1.0,
            seed: 0,
            precision: Precision::F32,
            augment: true,
            max_iterations: None,
            target_error_mm: None,
            eval_every: 50,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lr0 <= 0.0
            || self.batch_size == 0
            || self.weight_decay < 0.0
            || self.lr_decay <= 0.0
            || self.lr_decay_every == 0
            || self.epochs == 0
            || self.eval_every == 0
        {
            return Err(Error::Config("train config fields must be positive".into()));
        }
        Ok(())
    }

    /// Piecewise-constant schedule: lr0 · decay^⌊t / every⌋.
    pub fn learning_rate(&self, t: usize) -> f64 {
        self.lr0 * self.lr_decay.powi((t / self.lr_decay_every) as i32)
    }
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// First/second moment buffers, aligned with a parameter list.
pub struct AdamState<T: Element> {
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
}

impl<T: Element> AdamState<T> {
    pub fn new(params: &[(String, Tensor<T>)]) -> Self {
        AdamState {
            m: params.iter().map(|(_, p)| vec![T::zero(); p.numel()]).collect(),
            v: params.iter().map(|(_, p)| vec![T::zero(); p.numel()]).collect(),
        }
    }
}

/// One Adam step at iteration `t` (1-based) with decoupled weight decay
/// applied before the moment update, so the moment statistics see pure
/// loss gradients. Missing gradients are treated as zero.
pub fn adam_step<T: Element>(
    params: &[(String, Tensor<T>)],
    state: &mut AdamState<T>,
    t: usize,
    cfg: &TrainConfig,
) -> Result<()> {
    if t == 0 {
        return Err(Error::Usage("adam_step iteration count is 1-based".into()));
    }
    let lr = T::from_f64(cfg.learning_rate(t));
    let wd = T::from_f64(cfg.weight_decay);
    let b1 = T::from_f64(BETA1);
    let b2 = T::from_f64(BETA2);
    let eps = T::from_f64(ADAM_EPS);
    let corr1 = T::one() - T::from_f64(BETA1.powi(t as i32));
    let corr2 = T::one() - T::from_f64(BETA2.powi(t as i32));

    for (i, (name, p)) in params.iter().enumerate() {
        let grad = p.grad();
        if let Some(g) = &grad {
            if g.len() != p.numel() {
                return Err(Error::dim(
                    "adam_step",
                    format!("gradient of `{name}` has {} elements, parameter has {}", g.len(), p.numel()),
                ));
            }
        }
        let m = &mut state.m[i];
        let v = &mut state.v[i];
        let mut data = p.data_mut();
        for j in 0..data.len() {
            let g = grad.as_ref().map_or(T::zero(), |g| g[j]);
            // Decoupled decay: p ← p − lr·wd·p.
            data[j] = data[j] - lr * wd * data[j];
            m[j] = b1 * m[j] + (T::one() - b1) * g;
            v[j] = b2 * v[j] + (T::one() - b2) * g * g;
            let m_hat = m[j] / corr1;
            let v_hat = v[j] / corr2;
            data[j] = data[j] - lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

/// One loss-log line.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LossRecord {
    pub iteration: usize,
    pub loss: f64,
    pub lr: f64,
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub loss_log: Vec<LossRecord>,
    pub iterations: usize,
    /// Train-set mean error at the last early-stop evaluation, if any ran.
    pub last_train_error_mm: Option<f64>,
}

/// Stacks samples (optionally augmented) into one input batch.
pub fn batch_inputs<T: Element>(samples: &[&HandSample]) -> Result<Tensor<T>> {
    let n = samples.len();
    let mut data = Vec::with_capacity(n * PATCH_SIZE * PATCH_SIZE);
    for s in samples {
        data.extend(s.patch.iter().map(|&v| T::from_f64(v)));
    }
    Tensor::from_vec(&[n, 1, PATCH_SIZE, PATCH_SIZE], data)
}

/// Shuffled-minibatch training with online augmentation: forward →
/// total loss → backward → Adam, emitting one loss record per iteration.
/// Runs `cfg.epochs` passes (capped by `max_iterations`), optionally
/// stopping early once the train-set error target is met.
pub fn train<T: Element>(
    model: &ModelGraph<T>,
    samples: &[HandSample],
    cfg: &TrainConfig,
    mut checkpoint_hook: impl FnMut(usize, &ModelGraph<T>) -> Result<()>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if samples.is_empty() {
        return Err(Error::Usage("train requires at least one sample".into()));
    }
    let t_joints = model.topology().total_joints();
    for (i, s) in samples.iter().enumerate() {
        if s.joints_norm.len() != t_joints {
            return Err(Error::Validation(format!(
                "sample {i} has {} joints, model topology expects {t_joints}",
                s.joints_norm.len()
            )));
        }
    }

    let params = model.trainable();
    let mut state = AdamState::new(&params);
    let mut log = Vec::new();
    let mut t = 0usize;
    let mut last_error = None;
    let lambda = T::from_f64(cfg.lambda);

    'epochs: for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..samples.len()).collect();
        shuffle(&mut order, &mut keyed_rng(cfg.seed, Stream::Data, epoch as u64));

        for chunk in order.chunks(cfg.batch_size) {
            // Batch-norm train mode needs at least two samples.
            if chunk.len() < 2 {
                continue;
            }
            if let Some(max) = cfg.max_iterations {
                if t >= max {
                    break 'epochs;
                }
            }
            t += 1;

            let batch: Vec<HandSample> = chunk
                .iter()
                .map(|&idx| {
                    if cfg.augment {
                        let mut rng = keyed_rng(
                            cfg.seed,
                            Stream::Augment,
                            (epoch * samples.len() + idx) as u64,
                        );
                        augment_random(&samples[idx], &mut rng)
                    } else {
                        samples[idx].clone()
                    }
                })
                .collect();
            let refs: Vec<&HandSample> = batch.iter().collect();
            let input = batch_inputs::<T>(&refs)?;
            let joints: Vec<Vec<[f64; 3]>> =
                batch.iter().map(|s| s.joints_norm.clone()).collect();
            let targets = model.build_targets(&joints)?;

            let tape = Tape::new();
            let output = model.forward(&tape, &input, BnMode::Train)?;
            let loss = total_loss(&tape, &output, &targets, lambda)?;
            model.zero_grads();
            tape.backward(&loss)?;
            adam_step(&params, &mut state, t, cfg)?;

            log.push(LossRecord {
                iteration: t,
                loss: loss.item().as_f64(),
                lr: cfg.learning_rate(t),
            });
            checkpoint_hook(t, model)?;

            if let Some(target) = cfg.target_error_mm {
                if t % cfg.eval_every == 0 {
                    let report = evaluate(model, samples, &[target], false)?;
                    last_error = Some(report.mean_error_mm);
                    if report.mean_error_mm < target {
                        break 'epochs;
                    }
                }
            }
        }
    }
    Ok(TrainOutcome { loss_log: log, iterations: t, last_train_error_mm: last_error })
}

/// Fisher–Yates with the provided RNG.
fn shuffle<R: rand::Rng>(order: &mut [usize], rng: &mut R) {
    for i in (1..order.len()).rev() {
        let j = rng.gen_range(0..=i);
        order.swap(i, j);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradients_and_zero_decay_leave_parameters_unchanged() {
        let p = Tensor::from_vec(&[3], vec![1.0f64, -2.0, 0.5]).unwrap().requires_grad();
        let params = vec![("p".to_string(), p.clone())];
        let mut state = AdamState::new(&params);
        let cfg = TrainConfig { weight_decay: 0.0, ..TrainConfig::default() };
        adam_step(&params, &mut state, 1, &cfg).unwrap();
        assert_eq!(p.to_vec(), vec![1.0, -2.0, 0.5]);
    }

    #[test]
    fn first_step_magnitude_is_the_learning_rate() {
        // Bias-corrected first step with g = 1: m̂ = 1, v̂ = 1, so
        // Δ = lr / (1 + ε) ≈ lr.
        let p = Tensor::from_vec(&[1], vec![0.0f64]).unwrap().requires_grad();
        p.accumulate_grad(&[1.0]);
        let params = vec![("p".to_string(), p.clone())];
        let mut state = AdamState::new(&params);
        let cfg = TrainConfig { weight_decay: 0.0, ..TrainConfig::default() };
        adam_step(&params, &mut state, 1, &cfg).unwrap();
        let delta = -p.to_vec()[0];
        assert!((delta - cfg.lr0).abs() < 1e-6 * cfg.lr0, "first step {delta} vs lr {}", cfg.lr0);
    }

    #[test]
    fn schedule_values_are_exact() {
        let cfg = TrainConfig::default();
        assert_eq!(cfg.learning_rate(1), 1e-3);
        assert_eq!(cfg.learning_rate(1999), 1e-3);
        assert_eq!(cfg.learning_rate(2000), 1e-3 * 0.96);
        assert_eq!(cfg.learning_rate(4000), 1e-3 * 0.96 * 0.96);
        assert!((cfg.learning_rate(4000) - 9.216e-4).abs() < 1e-19);
    }

    #[test]
    fn iteration_zero_is_rejected() {
        let p = Tensor::from_vec(&[1], vec![0.0f64]).unwrap().requires_grad();
        let params = vec![("p".to_string(), p)];
        let mut state = AdamState::new(&params);
        assert!(adam_step(&params, &mut state, 0, &TrainConfig::default()).is_err());
    }

    #[test]
    fn decoupled_decay_shrinks_parameters_without_touching_moments() {
        let p = Tensor::from_vec(&[1], vec![100.0f64]).unwrap().requires_grad();
        let params = vec![("p".to_string(), p.clone())];
        let mut state = AdamState::new(&params);
        let cfg = TrainConfig { weight_decay: 1e-2, ..TrainConfig::default() };
        adam_step(&params, &mut state, 1, &cfg).unwrap();
        // No gradient: the only change is p ← p(1 − lr·wd).
        let expect = 100.0 * (1.0 - cfg.lr0 * 1e-2);
        assert!((p.to_vec()[0] - expect).abs() < 1e-12);
        assert_eq!(state.m[0][0], 0.0);
        assert_eq!(state.v[0][0], 0.0);
    }
}
