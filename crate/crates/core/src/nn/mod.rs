//! A small f64 neural-network engine: tensors, convolution, fully-connected
//! layers, ReLU, softmax cross-entropy, Adam and finite-difference checks.

pub mod adam;
pub mod checkpoint;
pub mod conv;
pub mod dense;
pub mod gradcheck;
pub mod layer;
pub mod linalg;
pub mod loss;
pub mod tensor;

pub use adam::{Adam, AdamConfig};
pub use checkpoint::{Checkpoint, ParamBlock};
pub use conv::{conv1d_backward, conv1d_forward, conv2d_backward, conv2d_forward, ConvGrads, ConvSpec};
pub use dense::{fc_backward, fc_forward, relu, relu_backward, FcGrads};
pub use gradcheck::{grad_check, CheckLoss, GradCheckConfig, GradCheckReport, Objective, SequentialObjective};
pub use layer::{Layer, LayerSpec, Sequential, Trace};
pub use loss::{batch_cross_entropy, softmax_cross_entropy};
pub use tensor::Tensor;
