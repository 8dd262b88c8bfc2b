//! Regression SubNet branches: per-branch feature heads, the palm FC
//! stack, the recurrent finger branches (and their FC-regression
//! replacement), and the ensemble head producing the global pose.

use rand::Rng;

use crate::element::Element;
use crate::error::{Error, Result};
use crate::model::layers::{BnLayer, ConvLayer, FcLayer, NamedTensors};
use crate::recurrent::{gru_unroll, GruParams};
use crate::tensor::ops::BnMode;
use crate::tensor::{Tape, Tensor};

/// Per-branch feature extractor: 3×3 conv (+BN+ReLU) on the encoder map,
/// then global average pooling down to a width-long feature vector.
#[derive(Clone)]
pub struct BranchHead<T: Element> {
    conv: ConvLayer<T>,
    bn: BnLayer<T>,
}

impl<T: Element> BranchHead<T> {
    pub fn init<R: Rng>(enc_ch: usize, width: usize, eps: f64, momentum: f64, rng: &mut R) -> Self {
        BranchHead {
            conv: ConvLayer::init(width, enc_ch, 3, 1, rng),
            bn: BnLayer::init(width, eps, momentum),
        }
    }

    pub fn forward(&self, tape: &Tape<T>, feat: &Tensor<T>, mode: BnMode) -> Result<Tensor<T>> {
        let x = self.conv.forward(tape, feat)?;
        let x = tape.relu(&self.bn.forward(tape, &x, mode)?)?;
        tape.global_avg_pool(&x)
    }

    pub fn visit(&self, prefix: &str, out: &mut NamedTensors<T>) {
        self.conv.visit(&format!("{prefix}.conv"), out);
        self.bn.visit(&format!("{prefix}.bn"), out);
    }
}

/// Palm joints are regressed directly: two hidden FC+ReLU layers and a
/// linear head. The last hidden feature also feeds the ensemble.
#[derive(Clone)]
pub struct PalmBranch<T: Element> {
    fc1: FcLayer<T>,
    fc2: FcLayer<T>,
    head: FcLayer<T>,
}

impl<T: Element> PalmBranch<T> {
    pub fn init<R: Rng>(width: usize, palm_joints: usize, rng: &mut R) -> Self {
        PalmBranch {
            fc1: FcLayer::init(width, width, rng),
            fc2: FcLayer::init(width, width, rng),
            head: FcLayer::init(3 * palm_joints, width, rng),
        }
    }

    /// Returns (joints `[N,3P]`, ensemble feature `[N,width]`).
    pub fn forward(&self, tape: &Tape<T>, f0: &Tensor<T>) -> Result<(Tensor<T>, Tensor<T>)> {
        let h = tape.relu(&self.fc1.forward(tape, f0)?)?;
        let h = tape.relu(&self.fc2.forward(tape, &h)?)?;
        let joints = self.head.forward(tape, &h)?;
        Ok((joints, h))
    }

    pub fn visit(&self, prefix: &str, out: &mut NamedTensors<T>) {
        self.fc1.visit(&format!("{prefix}.fc1"), out);
        self.fc2.visit(&format!("{prefix}.fc2"), out);
        self.head.visit(&format!("{prefix}.head"), out);
    }
}

/// Recurrent finger branch: N distinct FC layers lift the branch feature
/// into a joint-feature sequence; the GRU consumes it from the zero state
/// and a readout shared across steps maps each hidden state to a joint.
#[derive(Clone)]
pub struct FingerBranch<T: Element> {
    pub joint_fcs: Vec<FcLayer<T>>,
    pub gru: GruParams<T>,
}

impl<T: Element> FingerBranch<T> {
    pub fn init<R: Rng>(width: usize, chain_len: usize, d_out: usize, rng: &mut R) -> Self {
        FingerBranch {
            joint_fcs: (0..chain_len).map(|_| FcLayer::init(width, width, rng)).collect(),
            gru: GruParams::init(width, width, d_out, rng),
        }
    }

    /// Joint-feature sequence f^(1)..f^(N) from the branch feature.
    pub fn joint_features(&self, tape: &Tape<T>, f_k: &Tensor<T>) -> Result<Vec<Tensor<T>>> {
        self.joint_fcs
            .iter()
            .map(|fc| tape.relu(&fc.forward(tape, f_k)?))
            .collect()
    }

    /// Runs the recurrence over an explicit feature sequence. Returns the
    /// per-step joint outputs and the final hidden state.
    pub fn regress(
        &self,
        tape: &Tape<T>,
        features: &[Tensor<T>],
    ) -> Result<(Vec<Tensor<T>>, Tensor<T>)> {
        if features.len() != self.joint_fcs.len() {
            return Err(Error::Config(format!(
                "finger branch built for {} joints, got {} features",
                self.joint_fcs.len(),
                features.len()
            )));
        }
        let (ys, state) = gru_unroll(tape, &self.gru, features)?;
        Ok((ys, state.h))
    }

    pub fn forward(
        &self,
        tape: &Tape<T>,
        f_k: &Tensor<T>,
    ) -> Result<(Vec<Tensor<T>>, Tensor<T>)> {
        let features = self.joint_features(tape, f_k)?;
        self.regress(tape, &features)
    }

    pub fn visit(&self, prefix: &str, out: &mut NamedTensors<T>) {
        for (i, fc) in self.joint_fcs.iter().enumerate() {
            fc.visit(&format!("{prefix}.joint_fc{i}"), out);
        }
        for (name, t) in self.gru.tensors() {
            out.push((format!("{prefix}.gru.{name}"), t.clone(), super::layers::ParamKind::Trainable));
        }
    }
}

/// Ablation branch: the recurrence is replaced by one shared FC, so each
/// joint is regressed from its own feature with no cross-joint state.
#[derive(Clone)]
pub struct FcFingerBranch<T: Element> {
    pub joint_fcs: Vec<FcLayer<T>>,
    pub step_fc: FcLayer<T>,
    pub readout: FcLayer<T>,
}

impl<T: Element> FcFingerBranch<T> {
    pub fn init<R: Rng>(width: usize, chain_len: usize, rng: &mut R) -> Self {
        FcFingerBranch {
            joint_fcs: (0..chain_len).map(|_| FcLayer::init(width, width, rng)).collect(),
            step_fc: FcLayer::init(width, width, rng),
            readout: FcLayer::init(3, width, rng),
        }
    }

    pub fn forward(
        &self,
        tape: &Tape<T>,
        f_k: &Tensor<T>,
    ) -> Result<(Vec<Tensor<T>>, Tensor<T>)> {
        let mut joints = Vec::with_capacity(self.joint_fcs.len());
        let mut last_hidden = None;
        for fc in &self.joint_fcs {
            let feat = tape.relu(&fc.forward(tape, f_k)?)?;
            let hidden = tape.relu(&self.step_fc.forward(tape, &feat)?)?;
            joints.push(self.readout.forward(tape, &hidden)?);
            last_hidden = Some(hidden);
        }
        Ok((joints, last_hidden.expect("chain_len >= 1")))
    }

    pub fn visit(&self, prefix: &str, out: &mut NamedTensors<T>) {
        for (i, fc) in self.joint_fcs.iter().enumerate() {
            fc.visit(&format!("{prefix}.joint_fc{i}"), out);
        }
        self.step_fc.visit(&format!("{prefix}.step_fc"), out);
        self.readout.visit(&format!("{prefix}.readout"), out);
    }
}

/// Fuses the palm feature with the finger branches' final hidden states:
/// concat → FC(hidden)+ReLU → linear head to all 3T global coordinates.
#[derive(Clone)]
pub struct Ensemble<T: Element> {
    fc1: FcLayer<T>,
    head: FcLayer<T>,
}

impl<T: Element> Ensemble<T> {
    pub fn init<R: Rng>(concat_width: usize, hidden: usize, total_joints: usize, rng: &mut R) -> Self {
        Ensemble {
            fc1: FcLayer::init(hidden, concat_width, rng),
            head: FcLayer::init(3 * total_joints, hidden, rng),
        }
    }

    /// `parts` = palm feature followed by the finger final states.
    pub fn forward(&self, tape: &Tape<T>, parts: &[&Tensor<T>]) -> Result<Tensor<T>> {
        let axis = parts[0].shape().len() - 1;
        let cat = tape.concat(parts, axis)?;
        let h = tape.relu(&self.fc1.forward(tape, &cat)?)?;
        self.head.forward(tape, &h)
    }

    pub fn visit(&self, prefix: &str, out: &mut NamedTensors<T>) {
        self.fc1.visit(&format!("{prefix}.fc1"), out);
        self.head.visit(&format!("{prefix}.head"), out);
    }
}
