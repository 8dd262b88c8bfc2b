//! Feature encoder: five full pre-activation residual blocks with 1×1
//! convolutional shortcuts, average pooling after the first three blocks.
//! Maps `[N,1,96,96]` to `[N,channels[4],12,12]` (spatial trace 96→48→24→12).

use rand::Rng;

use crate::element::Element;
use crate::error::{Error, Result};
use crate::model::layers::{BnLayer, ConvLayer, NamedTensors};
use crate::tensor::ops::BnMode;
use crate::tensor::{Tape, Tensor};

#[derive(Clone)]
pub struct ResidualBlock<T: Element> {
    bn1: BnLayer<T>,
    conv1: ConvLayer<T>,
    bn2: BnLayer<T>,
    conv2: ConvLayer<T>,
    shortcut: ConvLayer<T>,
}

impl<T: Element> ResidualBlock<T> {
    fn init<R: Rng>(in_ch: usize, out_ch: usize, eps: f64, momentum: f64, rng: &mut R) -> Self {
        ResidualBlock {
            bn1: BnLayer::init(in_ch, eps, momentum),
            conv1: ConvLayer::init(out_ch, in_ch, 3, 1, rng),
            bn2: BnLayer::init(out_ch, eps, momentum),
            conv2: ConvLayer::init(out_ch, out_ch, 3, 1, rng),
            shortcut: ConvLayer::init(out_ch, in_ch, 1, 0, rng),
        }
    }

    /// Pre-activation ordering: the shortcut projects the first
    /// pre-activation, so out = conv1x1(a) + conv2(relu(bn2(conv1(a))))
    /// with a = relu(bn1(x)).
    fn forward(&self, tape: &Tape<T>, x: &Tensor<T>, mode: BnMode) -> Result<Tensor<T>> {
        let a = tape.relu(&self.bn1.forward(tape, x, mode)?)?;
        let main = self.conv1.forward(tape, &a)?;
        let main = tape.relu(&self.bn2.forward(tape, &main, mode)?)?;
        let main = self.conv2.forward(tape, &main)?;
        let skip = self.shortcut.forward(tape, &a)?;
        tape.add(&main, &skip)
    }

    fn visit(&self, prefix: &str, out: &mut NamedTensors<T>) {
        self.bn1.visit(&format!("{prefix}.bn1"), out);
        self.conv1.visit(&format!("{prefix}.conv1"), out);
        self.bn2.visit(&format!("{prefix}.bn2"), out);
        self.conv2.visit(&format!("{prefix}.conv2"), out);
        self.shortcut.visit(&format!("{prefix}.shortcut"), out);
    }
}

#[derive(Clone)]
pub struct Encoder<T: Element> {
    blocks: Vec<ResidualBlock<T>>,
}

pub const INPUT_SIZE: usize = 96;

impl<T: Element> Encoder<T> {
    pub fn init<R: Rng>(channels: &[usize; 5], eps: f64, momentum: f64, rng: &mut R) -> Self {
        let mut blocks = Vec::with_capacity(5);
        let mut in_ch = 1;
        for &out_ch in channels {
            blocks.push(ResidualBlock::init(in_ch, out_ch, eps, momentum, rng));
            in_ch = out_ch;
        }
        Encoder { blocks }
    }

    pub fn forward(&self, tape: &Tape<T>, x: &Tensor<T>, mode: BnMode) -> Result<Tensor<T>> {
        match x.shape() {
            [_, 1, h, w] if *h == INPUT_SIZE && *w == INPUT_SIZE => {}
            other => {
                return Err(Error::dim(
                    "encode",
                    format!("expected [N,1,{size},{size}] input, got {:?}", other, size = INPUT_SIZE),
                ))
            }
        }
        let mut feat = x.clone();
        for (i, block) in self.blocks.iter().enumerate() {
            feat = block.forward(tape, &feat, mode)?;
            if i < 3 {
                feat = tape.avg_pool2d(&feat)?;
            }
        }
        Ok(feat)
    }

    pub fn visit(&self, prefix: &str, out: &mut NamedTensors<T>) {
        for (i, block) in self.blocks.iter().enumerate() {
            block.visit(&format!("{prefix}.block{i}"), out);
        }
    }
}
