//! Minimal differentiable numeric substrate.
//!
//! Dense 64-bit tensors, layers with analytic forward/backward passes,
//! SGD/Adam optimizers, and a central finite-difference gradient oracle
//! that every backward pass in the crate is checked against.

mod fd;
mod layers;
mod optim;
mod tensor;

pub use fd::{fd_grad_flat, finite_difference_grad, max_rel_error, DEFAULT_FD_EPS};
pub use layers::{
    attention_forward, lstm_forward, softmax, softmax_backward, Activation, AttentionCache,
    AttentionUnit, LinearCache, LinearLayer, LstmCache, LstmCell,
};
pub use optim::{sgd_step, sgd_step_flat, Adam, FlatAdam};
pub use tensor::{Parameter, Tensor};
