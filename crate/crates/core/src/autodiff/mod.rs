//! Reverse-mode automatic differentiation: tensors, the tape, tanh MLPs,
//! and the Adam optimizer.

pub mod adam;
pub mod mlp;
pub mod tape;
pub mod tensor;

pub use adam::AdamState;
pub use mlp::{
    mlp_forward, mlp_forward_value, mlp_input_gradient, mlp_input_gradient_value, Activation,
    MlpSpec, ModelParams, StagedMlp,
};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;
