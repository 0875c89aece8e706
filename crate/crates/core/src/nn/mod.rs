//! Float64 neural toolkit: embedding, stacked LSTM, decoder, cross-entropy,
//! exact BPTT, optimizers, gradient checking and checkpoints.

mod batchnorm;
mod checkpoint;
mod gradcheck;
mod lm;
mod loss;
mod lstm;
mod optim;
mod param;

pub use batchnorm::{is_buffer, BatchNorm, BatchNormCache, BN_EPS, BN_MOMENTUM};
pub use checkpoint::{Architecture, Checkpoint, CheckpointError, Header, Stage, TensorSpec, MAGIC, VERSION};
pub use gradcheck::{
    check_lm_gradients, gradient_check, gradient_check_piecewise, relative_error, GradCheckReport, DEFAULT_SAMPLES,
    MAX_STEP_REDUCTIONS, REL_ERROR_FLOOR,
};
pub use lm::{Encoder, EncoderPass, LanguageModel, LmConfig, LmStep};
pub use loss::{log_sum_exp, row_nll, softmax_cross_entropy};
pub use lstm::{LstmCache, LstmLayer, LstmOutput, LstmState};
pub use optim::{all_trainable, Optimizer, OptimizerKind};
pub use param::{clip_grad_norm, grad_norm, Param, ParamMut, ParamRef, Parameters};

#[derive(Debug, thiserror::Error)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("target {target} out of range for {classes} classes")]
    TargetOutOfRange { target: usize, classes: usize },
    #[error("token id {id} out of range for vocabulary of {vocab}")]
    TokenOutOfRange { id: usize, vocab: usize },
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("corpus needs at least two tokens")]
    EmptyCorpus,
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
