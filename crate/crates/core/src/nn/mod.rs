//! Minimal neural-network engine: tensors, the layer kinds the classifier
//! needs, SoftMax/Gumbel-SoftMax heads, the hybrid loss, reverse-mode
//! gradients and Adam.

pub mod codec;
pub mod gradcheck;
pub mod loss;
pub mod network;
pub mod optim;
pub mod params;
pub mod spec;
pub mod tensor;

pub use loss::{gumbel_softmax, hybrid_loss, softmax, GumbelMode, HybridLossConfig};
pub use network::{argmax, backward_from_logits, forward, forward_trace, loss_and_gradients, predict, Mode};
pub use optim::{OptimizerConfig, OptimizerKind, OptimizerState};
pub use params::{ModelParameters, ParamEntry};
pub use spec::{Activation, LayerSpec, ModelSpec};
pub use tensor::Tensor;
