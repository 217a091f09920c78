//! Minimal double-precision neural network stack: tensors, dense /
//! convolution / LSTM layers with exact backpropagation, a diagonal
//! Gaussian policy head, an Adam optimizer, and a binary checkpoint format.

mod checkpoint;
pub mod gaussian;
pub mod layers;
mod network;
mod optim;
mod tensor;

pub use checkpoint::{load as load_checkpoint, save as save_checkpoint};
pub use network::{
    ForwardCache, NetConfig, NetKind, NnError, PolicyNetwork, PolicyOutput, RecurrentState, LOG_STD_RANGE,
    PROPRIO_DIM,
};
pub use optim::{adam_step, clip_grad_norm, AdamState};
pub use tensor::Tensor;
