//! Conv / batch-norm / fully-connected parameter bundles shared by the
//! encoder and the regression branches.

use rand::Rng;

use crate::element::Element;
use crate::error::Result;
use crate::tensor::ops::BnMode;
use crate::tensor::{Tape, Tensor};

/// Whether a named tensor is trained or is a running buffer.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum ParamKind {
    Trainable,
    Buffer,
}

pub(crate) type NamedTensors<T> = Vec<(String, Tensor<T>, ParamKind)>;

fn fan_in_uniform<T: Element, R: Rng>(shape: &[usize], fan_in: usize, rng: &mut R) -> Tensor<T> {
    let bound = T::from_f64((1.0 / fan_in as f64).sqrt());
    Tensor::rand_uniform(shape, bound, rng).requires_grad()
}

#[derive(Clone)]
pub struct ConvLayer<T: Element> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
    pub stride: usize,
    pub padding: usize,
}

impl<T: Element> ConvLayer<T> {
    pub fn init<R: Rng>(
        out_ch: usize,
        in_ch: usize,
        k: usize,
        padding: usize,
        rng: &mut R,
    ) -> Self {
        ConvLayer {
            weight: fan_in_uniform(&[out_ch, in_ch, k, k], in_ch * k * k, rng),
            bias: Tensor::zeros(&[out_ch]).requires_grad(),
            stride: 1,
            padding,
        }
    }

    pub fn forward(&self, tape: &Tape<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
        tape.conv2d(x, &self.weight, &self.bias, self.stride, self.padding)
    }

    pub fn visit(&self, prefix: &str, out: &mut NamedTensors<T>) {
        out.push((format!("{prefix}.weight"), self.weight.clone(), ParamKind::Trainable));
        out.push((format!("{prefix}.bias"), self.bias.clone(), ParamKind::Trainable));
    }
}

#[derive(Clone)]
pub struct BnLayer<T: Element> {
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
    pub running_mean: Tensor<T>,
    pub running_var: Tensor<T>,
    pub eps: T,
    pub momentum: T,
}

impl<T: Element> BnLayer<T> {
    pub fn init(channels: usize, eps: f64, momentum: f64) -> Self {
        BnLayer {
            gamma: Tensor::full(&[channels], T::one()).requires_grad(),
            beta: Tensor::zeros(&[channels]).requires_grad(),
            running_mean: Tensor::zeros(&[channels]),
            running_var: Tensor::full(&[channels], T::one()),
            eps: T::from_f64(eps),
            momentum: T::from_f64(momentum),
        }
    }

    pub fn forward(&self, tape: &Tape<T>, x: &Tensor<T>, mode: BnMode) -> Result<Tensor<T>> {
        tape.batch_norm(
            x,
            &self.gamma,
            &self.beta,
            &self.running_mean,
            &self.running_var,
            self.eps,
            self.momentum,
            mode,
        )
    }

    pub fn visit(&self, prefix: &str, out: &mut NamedTensors<T>) {
        out.push((format!("{prefix}.gamma"), self.gamma.clone(), ParamKind::Trainable));
        out.push((format!("{prefix}.beta"), self.beta.clone(), ParamKind::Trainable));
        out.push((format!("{prefix}.running_mean"), self.running_mean.clone(), ParamKind::Buffer));
        out.push((format!("{prefix}.running_var"), self.running_var.clone(), ParamKind::Buffer));
    }
}

#[derive(Clone)]
pub struct FcLayer<T: Element> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

impl<T: Element> FcLayer<T> {
    pub fn init<R: Rng>(d_out: usize, d_in: usize, rng: &mut R) -> Self {
        FcLayer {
            weight: fan_in_uniform(&[d_out, d_in], d_in, rng),
            bias: Tensor::zeros(&[d_out]).requires_grad(),
        }
    }

    pub fn forward(&self, tape: &Tape<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
        tape.fully_connected(x, &self.weight, &self.bias)
    }

    pub fn visit(&self, prefix: &str, out: &mut NamedTensors<T>) {
        out.push((format!("{prefix}.weight"), self.weight.clone(), ParamKind::Trainable));
        out.push((format!("{prefix}.bias"), self.bias.clone(), ParamKind::Trainable));
    }
}
