//! Layer Jacobians `dh_i / dh_k`, attention statistics and the mixing
//! estimator.
//!
//! Jacobian blocks are `d x d` with entry `(a, b) = d h_i^a / d h_k^b`, always
//! taken with respect to the node states entering a layer while the virtual
//! node state and previous-layer states are held fixed.

mod attention;
mod jacobian;
mod mixing;

use serde::Serialize;
use thiserror::Error;

use crate::linalg::{row_major, Mat};
use crate::nn::ModelError;

pub use attention::{
    attention_column_std, attention_matrix, attention_output, attention_to_csv, mean_project_attention,
    AttentionMatrix,
};
pub use jacobian::{
    analytic_jacobian_attention, analytic_jacobian_vn, analytic_jacobian_vng, fd_attention_jacobian,
    fd_jacobian, homogeneity_report, HomogeneityReport, HOMOGENEITY_TOLERANCE, KINK_MARGIN,
};
pub use mixing::{mixing_estimate, model_function, MixingEstimate};

/// Default central-difference step.
pub const DEFAULT_FD_STEP: f64 = 1e-5;

#[derive(Debug, Error)]
pub enum SensitivityError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("not applicable: {0}")]
    NotApplicable(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("csv output failed: {0}")]
    Io(String),
}

impl SensitivityError {
    pub fn is_input_error(&self) -> bool {
        match self {
            SensitivityError::Model(e) => e.is_input_error(),
            SensitivityError::Io(_) => false,
            _ => true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum JacobianMethod {
    Analytic,
    FiniteDifference,
}

#[derive(Debug, Clone, Serialize)]
pub struct JacobianReport {
    pub i: usize,
    pub k: usize,
    pub layer_from: usize,
    pub layer_to: usize,
    #[serde(with = "row_major")]
    pub block: Mat,
    pub method: JacobianMethod,
    /// Max-abs difference to the other method, when both were computed.
    pub fd_residual: Option<f64>,
    pub warnings: Vec<String>,
}

impl JacobianReport {
    /// Records the max-abs residual against `other` on both reports.
    pub fn compare(&mut self, other: &mut JacobianReport) -> f64 {
        let r = crate::linalg::max_abs_diff(&self.block, &other.block);
        self.fd_residual = Some(r);
        other.fd_residual = Some(r);
        r
    }
}
