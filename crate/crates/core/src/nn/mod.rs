//! Tensor, tape, parameter and optimizer substrate.

pub mod adam;
pub mod backend;
pub mod checkpoint;
pub mod conv;
pub mod gradcheck;
pub mod graph;
pub mod kernels;
pub mod ops;
mod real;
pub mod tensor;
pub mod weights;

pub use adam::Adam;
pub use backend::{Backend, ConvLayer, GraphBackend, InferenceWeights, NoiseSource, StreamBackend, StreamSlots};
pub use checkpoint::Checkpoint;
pub use conv::{causal_conv1d, StreamCtx};
pub use graph::{Gradients, Graph, Var};
pub use kernels::ConvSpec;
pub use ops::{channel_norm, softmax_gated_tanh};
pub use real::Real;
pub use tensor::Tensor;
pub use weights::{ParamGrads, ParamId, WeightStore};
