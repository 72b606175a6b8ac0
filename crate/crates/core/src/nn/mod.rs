//! Dense message-passing models with and without a virtual node.
//!
//! Node states are `n x d` matrices with one row per node. Layer weights act
//! on column feature vectors, so `Omega h_i` appears as `H Omega^T`. The
//! linear models, and the attention projections, multiply on the right.

mod features;
mod forward;
mod model;
mod readout;
pub mod tape;
mod task;
mod train;

use thiserror::Error;

pub use features::read_features_csv;
pub use forward::{forward, forward_from, ForwardTrace, LayerState};
pub use model::{
    init_params, Activation, Arch, MeanAugment, ModelSpec, Params, Readout, Slot, VnNormalizer, Weight,
};
pub use readout::{cosine_distance, cosine_trace, readout_mean, readout_v};
pub use task::{make_mixing_task, mixing_experiment, MixingConfig, MixingRow};
pub use train::{
    fd_gradient, gradient_probe, loss, loss_and_gradient, train, GradientMethod, ProbeReport, Sample,
    TrainConfig, TrainReport, FD_STEP, PROBE_TOLERANCE,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("unknown architecture `{0}`")]
    UnknownArch(String),
    #[error("invalid model: {0}")]
    InvalidSpec(String),
    #[error("layer {layer} has no {weight:?} weight")]
    MissingWeight { layer: usize, weight: Weight },
    #[error("{what}: expected shape {expected:?}, got {got:?}")]
    Shape {
        what: String,
        expected: (usize, usize),
        got: (usize, usize),
    },
    #[error("malformed parameter file: {0}")]
    Json(String),
    #[error("loss became {loss} at step {step}")]
    Diverged { step: usize, loss: f64 },
    #[error("gradient probe disagrees: reverse {reverse}, finite difference {finite_difference}")]
    GradientMismatch { reverse: f64, finite_difference: f64 },
}

impl ModelError {
    pub fn is_input_error(&self) -> bool {
        !matches!(self, ModelError::Diverged { .. } | ModelError::GradientMismatch { .. })
    }
}
