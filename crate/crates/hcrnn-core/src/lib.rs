//! HCRNN: hierarchically-structured convolutional recurrent network for
//! 3D hand pose estimation from single depth maps.
//!
//! The crate is self-contained: a dense-tensor engine with reverse-mode
//! autodiff ([`tensor`]), the GRU cell ([`recurrent`]), the six-branch
//! model with its losses and checkpoint format ([`model`]), depth-map
//! preprocessing plus a synthetic articulated-hand renderer ([`pipeline`]),
//! and the training/evaluation engine ([`train`]).

pub mod check;
mod element;
mod error;
pub mod model;
pub mod pipeline;
pub mod recurrent;
pub mod rng;
pub mod tensor;
pub mod topology;
pub mod train;

pub use element::Element;
pub use error::{Error, Result};
pub use model::{ModelConfig, ModelGraph, PoseOutput, Variant};
pub use pipeline::{CropSpec, HandSample, RawFrame};
pub use tensor::{Tape, Tensor};
pub use topology::JointTopology;
pub use train::{EvalReport, TrainConfig};
