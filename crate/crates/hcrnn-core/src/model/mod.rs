//! The wired network: encoder → six regression branches → ensemble,
//! plus the two ablation variants, parameter registry, and checkpoints.

mod branches;
mod checkpoint;
mod encoder;
pub(crate) mod layers;
mod loss;

pub use branches::{BranchHead, Ensemble, FcFingerBranch, FingerBranch, PalmBranch};
pub use checkpoint::{load_model, load_precision, save_model};
pub use encoder::{Encoder, INPUT_SIZE};
pub use layers::ParamKind;
pub use loss::{smooth_l1, smooth_l1_grad, total_loss, PoseTargets, SMOOTH_L1_DELTA};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::element::Element;
use crate::error::{Error, Result};
use crate::tensor::ops::BnMode;
use crate::tensor::{Tape, Tensor};
use crate::topology::JointTopology;

/// Architecture variants: the six-branch network and the two
/// self-comparison baselines.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Full,
    TwoBranch,
    FcRegression,
}

impl Variant {
    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::TwoBranch => "two_branch",
            Variant::FcRegression => "fc_regression",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Variant::Full),
            "two_branch" => Ok(Variant::TwoBranch),
            "fc_regression" => Ok(Variant::FcRegression),
            other => Err(Error::Config(format!(
                "unknown variant `{other}` (expected full, two_branch, or fc_regression)"
            ))),
        }
    }
}

/// Widths and hyperparameters fixing one concrete network.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModelConfig {
    pub topology: JointTopology,
    pub variant: Variant,
    /// Encoder residual-block output channels.
    pub channels: [usize; 5],
    /// Branch feature width (= GRU hidden size).
    pub branch_width: usize,
    pub ensemble_hidden: usize,
    /// Unified finger-branch width for `two_branch`; resolved by a
    /// parameter-parity search when absent.
    pub finger_width: Option<usize>,
    pub bn_eps: f64,
    pub bn_momentum: f64,
}

impl ModelConfig {
    /// Paper-scale widths: channels 64/64/128/256/256, 256-wide branches,
    /// 1024-wide ensemble.
    pub fn full_scale(topology: JointTopology, variant: Variant) -> Self {
        ModelConfig {
            topology,
            variant,
            channels: [64, 64, 128, 256, 256],
            branch_width: 256,
            ensemble_hidden: 1024,
            finger_width: None,
            bn_eps: 1e-5,
            bn_momentum: 0.9,
        }
    }

    /// Desk-scale widths for gradient checks and overfit experiments.
    pub fn tiny(topology: JointTopology, variant: Variant) -> Self {
        ModelConfig {
            topology,
            variant,
            channels: [8, 8, 16, 32, 32],
            branch_width: 16,
            ensemble_hidden: 128,
            finger_width: None,
            bn_eps: 1e-5,
            bn_momentum: 0.9,
        }
    }

    fn uniform_chain_len(&self) -> Result<usize> {
        let lens = self.topology.finger_lengths();
        let n = lens[0];
        if lens.iter().any(|&l| l != n) {
            return Err(Error::Config(
                "two_branch variant requires a uniform finger chain length".into(),
            ));
        }
        Ok(n)
    }

    /// Fills `finger_width` for `two_branch` so the variant's trainable
    /// parameter count lands as close as possible to the full variant's.
    pub fn resolve(mut self) -> Result<Self> {
        self.topology.validate()?;
        if self.variant == Variant::TwoBranch && self.finger_width.is_none() {
            let target = {
                let mut full = self.clone();
                full.variant = Variant::Full;
                count_params(&full)?
            };
            let mut best = (usize::MAX, self.branch_width);
            for w2 in 1..=self.branch_width * 8 {
                let mut candidate = self.clone();
                candidate.finger_width = Some(w2);
                let count = count_params(&candidate)?;
                let gap = count.abs_diff(target);
                if gap < best.0 {
                    best = (gap, w2);
                }
            }
            self.finger_width = Some(best.1);
        }
        Ok(self)
    }
}

fn conv_count(o: usize, i: usize, k: usize) -> usize {
    o * i * k * k + o
}

fn bn_count(c: usize) -> usize {
    2 * c
}

fn fc_count(o: usize, i: usize) -> usize {
    o * i + o
}

fn gru_count(d_in: usize, d_h: usize, d_out: usize) -> usize {
    3 * (d_h * d_in + d_h * d_h + d_h) + fc_count(d_out, d_h)
}

fn block_count(i: usize, o: usize) -> usize {
    bn_count(i) + conv_count(o, i, 3) + bn_count(o) + conv_count(o, o, 3) + conv_count(o, i, 1)
}

/// Trainable parameter total, computed analytically from the config.
/// An independent route from counting the constructed graph's tensors.
pub fn count_params(cfg: &ModelConfig) -> Result<usize> {
    let ch = &cfg.channels;
    let enc: usize = {
        let mut total = 0;
        let mut in_ch = 1;
        for &out_ch in ch {
            total += block_count(in_ch, out_ch);
            in_ch = out_ch;
        }
        total
    };
    let enc_out = ch[4];
    let w = cfg.branch_width;
    let p = cfg.topology.palm_count();
    let t = cfg.topology.total_joints();
    let head = |width: usize| conv_count(width, enc_out, 3) + bn_count(width);
    let palm = 2 * fc_count(w, w) + fc_count(3 * p, w);

    Ok(match cfg.variant {
        Variant::Full => {
            let fingers: usize = cfg
                .topology
                .finger_lengths()
                .iter()
                .map(|&n| n * fc_count(w, w) + gru_count(w, w, 3))
                .sum();
            enc + 6 * head(w) + palm + fingers + fc_count(cfg.ensemble_hidden, 6 * w)
                + fc_count(3 * t, cfg.ensemble_hidden)
        }
        Variant::FcRegression => {
            let fingers: usize = cfg
                .topology
                .finger_lengths()
                .iter()
                .map(|&n| n * fc_count(w, w) + fc_count(w, w) + fc_count(3, w))
                .sum();
            enc + 6 * head(w) + palm + fingers + fc_count(cfg.ensemble_hidden, 6 * w)
                + fc_count(3 * t, cfg.ensemble_hidden)
        }
        Variant::TwoBranch => {
            let n = cfg.uniform_chain_len()?;
            let w2 = cfg.finger_width.unwrap_or(w);
            enc + head(w) + head(w2) + palm + n * fc_count(w2, w2) + gru_count(w2, w2, 15)
                + fc_count(cfg.ensemble_hidden, w + w2)
                + fc_count(3 * t, cfg.ensemble_hidden)
        }
    })
}

enum Fingers<T: Element> {
    /// One recurrent branch per finger (full variant).
    PerFinger(Vec<FingerBranch<T>>),
    /// One FC-regression branch per finger (fc_regression variant).
    PerFingerFc(Vec<FcFingerBranch<T>>),
    /// Single recurrent branch emitting all five fingers per step
    /// (two_branch variant; readout width 15).
    Unified(FingerBranch<T>),
}

/// Batched forward-pass outputs, still attached to the tape.
///
/// `finger_blocks` partitions the finger-joint predictions into tensors of
/// concatenated 3-vectors; `layouts` records which (finger, joint) each
/// 3-slot corresponds to, since the two_branch variant emits step-major.
pub struct ForwardOutput<T: Element> {
    pub global: Tensor<T>,
    pub palm_local: Tensor<T>,
    pub finger_blocks: Vec<Tensor<T>>,
    pub layouts: Vec<Vec<(usize, usize)>>,
}

/// Per-sample pose in normalized cube coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct PoseOutput {
    /// All T joints, topology order (the ensemble's global estimate).
    pub global: Vec<[f64; 3]>,
    pub palm_local: Vec<[f64; 3]>,
    /// Five chains, MCP first (local branch estimates).
    pub finger_local: Vec<Vec<[f64; 3]>>,
}

/// The trainable HCRNN with its topology, variant, and named parameters.
pub struct ModelGraph<T: Element> {
    config: ModelConfig,
    encoder: Encoder<T>,
    heads: Vec<BranchHead<T>>,
    palm: PalmBranch<T>,
    fingers: Fingers<T>,
    ensemble: Ensemble<T>,
}

impl<T: Element> ModelGraph<T> {
    pub fn init<R: Rng>(config: ModelConfig, rng: &mut R) -> Result<Self> {
        let config = config.resolve()?;
        let (eps, mom) = (config.bn_eps, config.bn_momentum);
        let enc_out = config.channels[4];
        let w = config.branch_width;
        let p = config.topology.palm_count();
        let t = config.topology.total_joints();
        let lens = config.topology.finger_lengths();

        let encoder = Encoder::init(&config.channels, eps, mom, rng);
        let (heads, fingers, ensemble) = match config.variant {
            Variant::Full => {
                let heads: Vec<_> =
                    (0..6).map(|_| BranchHead::init(enc_out, w, eps, mom, rng)).collect();
                let fingers = Fingers::PerFinger(
                    lens.iter().map(|&n| FingerBranch::init(w, n, 3, rng)).collect(),
                );
                let ensemble = Ensemble::init(6 * w, config.ensemble_hidden, t, rng);
                (heads, fingers, ensemble)
            }
            Variant::FcRegression => {
                let heads: Vec<_> =
                    (0..6).map(|_| BranchHead::init(enc_out, w, eps, mom, rng)).collect();
                let fingers = Fingers::PerFingerFc(
                    lens.iter().map(|&n| FcFingerBranch::init(w, n, rng)).collect(),
                );
                let ensemble = Ensemble::init(6 * w, config.ensemble_hidden, t, rng);
                (heads, fingers, ensemble)
            }
            Variant::TwoBranch => {
                let n = config.uniform_chain_len()?;
                let w2 = config.finger_width.expect("resolved");
                let heads = vec![
                    BranchHead::init(enc_out, w, eps, mom, rng),
                    BranchHead::init(enc_out, w2, eps, mom, rng),
                ];
                let fingers = Fingers::Unified(FingerBranch::init(w2, n, 15, rng));
                let ensemble = Ensemble::init(w + w2, config.ensemble_hidden, t, rng);
                (heads, fingers, ensemble)
            }
        };
        let palm = PalmBranch::init(w, p, rng);
        Ok(ModelGraph { config, encoder, heads, palm, fingers, ensemble })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn topology(&self) -> &JointTopology {
        &self.config.topology
    }

    pub fn encoder(&self) -> &Encoder<T> {
        &self.encoder
    }

    /// Recurrent branch for finger `k` (full variant only).
    pub fn finger_branch(&self, k: usize) -> Option<&FingerBranch<T>> {
        match &self.fingers {
            Fingers::PerFinger(branches) => branches.get(k),
            _ => None,
        }
    }

    /// Joint layout of each finger block, fixed by variant + topology.
    pub fn layouts(&self) -> Vec<Vec<(usize, usize)>> {
        let lens = self.config.topology.finger_lengths();
        match &self.fingers {
            Fingers::PerFinger(_) | Fingers::PerFingerFc(_) => lens
                .iter()
                .enumerate()
                .map(|(k, &n)| (0..n).map(|j| (k, j)).collect())
                .collect(),
            Fingers::Unified(_) => {
                let n = lens[0];
                vec![(0..n).flat_map(|j| (0..5).map(move |k| (k, j))).collect()]
            }
        }
    }

    /// Full forward pass over a `[N,1,96,96]` batch.
    pub fn forward(&self, tape: &Tape<T>, input: &Tensor<T>, mode: BnMode) -> Result<ForwardOutput<T>> {
        let feat = self.encoder.forward(tape, input, mode)?;
        let layouts = self.layouts();
        match &self.fingers {
            Fingers::PerFinger(_) | Fingers::PerFingerFc(_) => {
                let branch_feats: Vec<Tensor<T>> = self
                    .heads
                    .iter()
                    .map(|h| h.forward(tape, &feat, mode))
                    .collect::<Result<_>>()?;
                let (palm_joints, palm_feat) = self.palm.forward(tape, &branch_feats[0])?;
                let mut blocks = Vec::with_capacity(5);
                let mut finals = Vec::with_capacity(5);
                for k in 0..5 {
                    let (ys, h_final) = match &self.fingers {
                        Fingers::PerFinger(b) => b[k].forward(tape, &branch_feats[k + 1])?,
                        Fingers::PerFingerFc(b) => b[k].forward(tape, &branch_feats[k + 1])?,
                        Fingers::Unified(_) => unreachable!(),
                    };
                    let refs: Vec<&Tensor<T>> = ys.iter().collect();
                    let axis = refs[0].shape().len() - 1;
                    blocks.push(tape.concat(&refs, axis)?);
                    finals.push(h_final);
                }
                let mut parts: Vec<&Tensor<T>> = vec![&palm_feat];
                parts.extend(finals.iter());
                let global = self.ensemble.forward(tape, &parts)?;
                Ok(ForwardOutput { global, palm_local: palm_joints, finger_blocks: blocks, layouts })
            }
            Fingers::Unified(branch) => {
                let palm_in = self.heads[0].forward(tape, &feat, mode)?;
                let finger_in = self.heads[1].forward(tape, &feat, mode)?;
                let (palm_joints, palm_feat) = self.palm.forward(tape, &palm_in)?;
                let (ys, h_final) = branch.forward(tape, &finger_in)?;
                let refs: Vec<&Tensor<T>> = ys.iter().collect();
                let axis = refs[0].shape().len() - 1;
                let block = tape.concat(&refs, axis)?;
                let global = self.ensemble.forward(tape, &[&palm_feat, &h_final])?;
                Ok(ForwardOutput {
                    global,
                    palm_local: palm_joints,
                    finger_blocks: vec![block],
                    layouts,
                })
            }
        }
    }

    /// All named tensors in stable checkpoint order.
    pub fn named_tensors(&self) -> layers::NamedTensors<T> {
        let mut out = Vec::new();
        self.encoder.visit("encoder", &mut out);
        for (i, head) in self.heads.iter().enumerate() {
            head.visit(&format!("head{i}"), &mut out);
        }
        self.palm.visit("palm", &mut out);
        match &self.fingers {
            Fingers::PerFinger(branches) => {
                for (k, b) in branches.iter().enumerate() {
                    b.visit(&format!("finger{k}"), &mut out);
                }
            }
            Fingers::PerFingerFc(branches) => {
                for (k, b) in branches.iter().enumerate() {
                    b.visit(&format!("finger{k}"), &mut out);
                }
            }
            Fingers::Unified(b) => b.visit("fingers", &mut out),
        }
        self.ensemble.visit("ensemble", &mut out);
        out
    }

    /// Trainable parameters in registry order.
    pub fn trainable(&self) -> Vec<(String, Tensor<T>)> {
        self.named_tensors()
            .into_iter()
            .filter(|(_, _, k)| *k == ParamKind::Trainable)
            .map(|(n, t, _)| (n, t))
            .collect()
    }

    /// Trainable scalar count (the parameter-count oracle's other route
    /// is [`count_params`]).
    pub fn param_count(&self) -> usize {
        self.trainable().iter().map(|(_, t)| t.numel()).sum()
    }

    pub fn zero_grads(&self) {
        for (_, t) in self.trainable() {
            t.zero_grad();
        }
    }

    /// Assembles loss targets from per-sample normalized joints
    /// (topology order) to match this model's output blocks.
    pub fn build_targets(&self, joints: &[Vec<[f64; 3]>]) -> Result<PoseTargets<T>> {
        let t = self.config.topology.total_joints();
        let p = self.config.topology.palm_count();
        let lens = self.config.topology.finger_lengths();
        let batch = joints.len();
        if batch == 0 {
            return Err(Error::Usage("empty target batch".into()));
        }
        for (i, row) in joints.iter().enumerate() {
            if row.len() != t {
                return Err(Error::Validation(format!(
                    "sample {i} has {} joints, topology expects {t}",
                    row.len()
                )));
            }
        }
        // Finger joint (k, n) lives at topology-order index P + Σ_{i<k} N_i + n.
        let finger_base: Vec<usize> = lens
            .iter()
            .scan(p, |acc, &n| {
                let base = *acc;
                *acc += n;
                Some(base)
            })
            .collect();

        let mut global = Vec::with_capacity(batch * 3 * t);
        let mut palm = Vec::with_capacity(batch * 3 * p);
        for row in joints {
            for j in row {
                global.extend(j.iter().map(|&v| T::from_f64(v)));
            }
            for j in &row[..p] {
                palm.extend(j.iter().map(|&v| T::from_f64(v)));
            }
        }
        let mut blocks = Vec::new();
        for layout in self.layouts() {
            let mut data = Vec::with_capacity(batch * 3 * layout.len());
            for row in joints {
                for &(k, n) in &layout {
                    let j = row[finger_base[k] + n];
                    data.extend(j.iter().map(|&v| T::from_f64(v)));
                }
            }
            blocks.push(Tensor::from_vec(&[batch, 3 * layout.len()], data)?);
        }
        Ok(PoseTargets {
            global: Tensor::from_vec(&[batch, 3 * t], global)?,
            palm: Tensor::from_vec(&[batch, 3 * p], palm)?,
            finger_blocks: blocks,
        })
    }
}

/// Splits batched forward outputs into per-sample poses.
pub fn extract_poses<T: Element>(
    out: &ForwardOutput<T>,
    topology: &JointTopology,
) -> Vec<PoseOutput> {
    let batch = out.global.shape()[0];
    let t = topology.total_joints();
    let p = topology.palm_count();
    let lens = topology.finger_lengths();
    let gd = out.global.data();
    let pd = out.palm_local.data();

    let mut poses = Vec::with_capacity(batch);
    for s in 0..batch {
        let take3 = |data: &[T], base: usize| -> [f64; 3] {
            [data[base].as_f64(), data[base + 1].as_f64(), data[base + 2].as_f64()]
        };
        let global: Vec<[f64; 3]> = (0..t).map(|j| take3(&gd, s * 3 * t + 3 * j)).collect();
        let palm_local: Vec<[f64; 3]> = (0..p).map(|j| take3(&pd, s * 3 * p + 3 * j)).collect();
        let mut finger_local: Vec<Vec<[f64; 3]>> =
            lens.iter().map(|&n| vec![[0.0; 3]; n]).collect();
        for (block, layout) in out.finger_blocks.iter().zip(&out.layouts) {
            let bd = block.data();
            let row = 3 * layout.len();
            for (slot, &(k, n)) in layout.iter().enumerate() {
                finger_local[k][n] = take3(&bd, s * row + 3 * slot);
            }
        }
        poses.push(PoseOutput { global, palm_local, finger_local });
    }
    poses
}
