//! Minimal neural-network substrate: tensors, seven layer kinds with
//! hand-written backward passes, softmax cross-entropy, Adam, a
//! finite-difference gradient checker, and NNCK checkpoints.

mod adam;
mod checkpoint;
mod gradcheck;
mod layer;
mod loss;
mod lstm;
mod model;
pub(crate) mod ops;
mod tensor;

pub use adam::Adam;
pub use checkpoint::{Checkpoint, MAGIC, VERSION};
pub use gradcheck::{grad_check, relative_error, standard_cases, GradCase, MAX_CHECK_PARAMS};
pub use layer::{infer_shapes, LayerSpec, ParamShape};
pub use loss::{softmax_xent, softmax_xent_slice};
pub use lstm::{lstm_step, LstmCell, LstmGrads, LstmStepCache};
pub use model::{ActivationTrace, Model, Parameter};
pub use ops::{log_sum_exp, softmax_row};
pub use tensor::{argmax, matmul, numel, Real, Tensor};
