//! Reverse-mode differentiable core for 1-D convolutional regression networks.

pub mod checkpoint;
pub mod gradcheck;
mod kernels;
pub mod layer;
pub mod loss;
pub mod network;
pub mod optim;
pub mod tensor;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use gradcheck::{grad_check, GradCheckReport};
pub use layer::{conv_output_len, infer_shapes, LayerSpec, Shape};
pub use loss::mse_loss;
pub use network::{BlockRole, Gradients, Mode, Network, ParamBlock, ParamSnapshot, Tape};
pub use optim::{OptimizerConfig, OptimizerKind, OptimizerState};
pub use tensor::Tensor1D;
