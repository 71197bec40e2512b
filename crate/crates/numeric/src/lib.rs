//! Dense 64-bit tensors with reverse-mode automatic differentiation, the
//! layer primitives needed for recurrent sequence models (linear, 1-D
//! convolution, LSTM/BiLSTM, activations), and Adam with a Noam learning-rate
//! schedule.
//!
//! The autodiff core is a per-forward-pass tape: every operation on a
//! [`Graph`] records its inputs and enough saved state to run its backward
//! rule, and [`Graph::backward`] replays the tape in reverse. A graph and its
//! tensors belong to one thread for the duration of a forward/backward pass;
//! independent graphs on independent threads are safe.

pub mod graph;
pub mod kernels;
pub mod layers;
pub mod optim;
pub mod tensor;

pub use graph::{ActKind, Graph, Var};
pub use layers::{BiLstm, Conv1dLayer, Linear, LstmDir};
pub use optim::{noam_lr, Adam, AdamConfig};
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NumericError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("backward requires a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("empty sequence")]
    EmptySequence,
    #[error("non-finite gradient for parameter `{0}`")]
    NonFiniteGrad(String),
    #[error("non-finite loss")]
    NonFiniteLoss,
}

pub type Result<T> = std::result::Result<T, NumericError>;

/// Named-parameter traversal used by the optimizer and checkpointing.
///
/// Implementations must visit the same tensors in the same order from both
/// methods; that order is the canonical parameter order of the model.
pub trait VisitParams {
    fn visit_params(&self, f: &mut dyn FnMut(&str, &Tensor));
    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor));

    fn param_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        self.visit_params(&mut |name, _| names.push(name.to_string()));
        names
    }

    fn zero_grads(&mut self) {
        self.visit_params_mut(&mut |_, t| t.clear_grad());
    }
}
