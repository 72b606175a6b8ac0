use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Graph(#[from] crate::graph::GraphError),
    #[error(transparent)]
    Spectral(#[from] crate::spectral::SpectralError),
    #[error(transparent)]
    Model(#[from] crate::nn::ModelError),
    #[error(transparent)]
    Sensitivity(#[from] crate::sensitivity::SensitivityError),
    #[error(transparent)]
    Filter(#[from] crate::filters::FilterError),
}

impl Error {
    /// True when the failure stems from malformed or inadmissible input rather
    /// than from a numerical breakdown.
    pub fn is_input_error(&self) -> bool {
        match self {
            Error::Graph(e) => !matches!(e, crate::graph::GraphError::GenerationFailed { .. }),
            Error::Spectral(e) => e.is_input_error(),
            Error::Model(e) => e.is_input_error(),
            Error::Sensitivity(e) => e.is_input_error(),
            Error::Filter(e) => e.is_input_error(),
        }
    }
}
