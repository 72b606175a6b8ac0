//! Graph-level polynomial filters `y = sum_k Theta_k Mean(A^k X)` and the
//! expressivity of the linear models.
//!
//! A filter of degree `m` stores `Theta_0 .. Theta_m`, each mapping input
//! channels to output channels. Constant inputs recover graph moments.

mod construct;
mod extract;
mod fit;
mod fourier;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::graph::Graph;
use crate::linalg::{column_means, from_rows, to_rows, Mat, Vector};
use crate::nn::ModelError;
use crate::spectral::SpectralError;

pub use construct::construct_vn_weights;
pub use extract::{
    det_constraint_check, embedding_target_reachability, extract_filter, v_pool_extract, DetReport,
    Reachability, VPoolFilter, MAX_EXTRACT_DEGREE,
};
pub use fit::{fit_filter, probe_inputs, FitInit, FitMethod, FitReport, DEFAULT_PROBES};
pub use fourier::{fourier_pooling_profile, FourierMode, FourierProfile};

/// Largest degree [`apply_filter`] evaluates.
pub const MAX_APPLY_DEGREE: usize = 12;
/// `|v^T 1|` at or below this counts as orthogonal to the ones vector.
pub const ORTHOGONALITY_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum FilterError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("degree {0} exceeds the limit of {MAX_APPLY_DEGREE}")]
    DegreeTooLarge(usize),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("term `{word}` depends on the graph beyond a polynomial in A")]
    GraphDependent { word: String },
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("Theta_0 is singular")]
    Singular,
}

impl FilterError {
    pub fn is_input_error(&self) -> bool {
        match self {
            FilterError::Model(e) => e.is_input_error(),
            FilterError::Spectral(e) => e.is_input_error(),
            _ => true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolynomialFilter {
    pub theta: Vec<Mat>,
}

impl PolynomialFilter {
    pub fn new(theta: Vec<Mat>) -> Result<Self, FilterError> {
        let Some(first) = theta.first() else {
            return Err(FilterError::Shape("a filter needs at least Theta_0".into()));
        };
        let shape = first.shape();
        if theta.iter().any(|t| t.shape() != shape) {
            return Err(FilterError::Shape("coefficient matrices differ in shape".into()));
        }
        Ok(PolynomialFilter { theta })
    }

    pub fn zero(degree: usize, out_dim: usize, in_dim: usize) -> Self {
        PolynomialFilter {
            theta: vec![Mat::zeros(out_dim, in_dim); degree + 1],
        }
    }

    pub fn degree(&self) -> usize {
        self.theta.len() - 1
    }

    pub fn out_dim(&self) -> usize {
        self.theta[0].nrows()
    }

    pub fn in_dim(&self) -> usize {
        self.theta[0].ncols()
    }

    /// Largest max-abs coefficient difference; filters of different degree
    /// are padded with zeros.
    pub fn max_abs_diff(&self, other: &PolynomialFilter) -> f64 {
        let len = self.theta.len().max(other.theta.len());
        let zero = Mat::zeros(self.out_dim(), self.in_dim());
        (0..len)
            .map(|k| {
                let a = self.theta.get(k).unwrap_or(&zero);
                let b = other.theta.get(k).unwrap_or(&zero);
                crate::linalg::max_abs_diff(a, b)
            })
            .fold(0.0, f64::max)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("filter serialises")
    }

    pub fn from_json(s: &str) -> Result<Self, FilterError> {
        serde_json::from_str(s).map_err(|e| FilterError::Shape(e.to_string()))
    }
}

#[derive(Serialize, Deserialize)]
struct FilterRepr {
    degree: usize,
    theta: Vec<Vec<Vec<f64>>>,
}

impl Serialize for PolynomialFilter {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        FilterRepr {
            degree: self.degree(),
            theta: self.theta.iter().map(to_rows).collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for PolynomialFilter {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        let r = FilterRepr::deserialize(d)?;
        if r.theta.len() != r.degree + 1 {
            return Err(D::Error::custom(format!(
                "degree {} needs {} matrices, got {}",
                r.degree,
                r.degree + 1,
                r.theta.len()
            )));
        }
        let theta = r
            .theta
            .iter()
            .map(|m| from_rows(m))
            .collect::<Result<Vec<_>, _>>()
            .map_err(D::Error::custom)?;
        PolynomialFilter::new(theta).map_err(D::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolingVector {
    pub v: Vec<f64>,
    pub orthogonal_to_ones: bool,
}

impl PoolingVector {
    pub fn new(v: Vector) -> Self {
        PoolingVector {
            orthogonal_to_ones: v.sum().abs() <= ORTHOGONALITY_TOLERANCE,
            v: v.iter().copied().collect(),
        }
    }

    /// `1 / n`, the vector behind mean pooling.
    pub fn mean(n: usize) -> Self {
        Self::new(Vector::from_element(n, 1.0 / n as f64))
    }

    pub fn vector(&self) -> Vector {
        Vector::from_vec(self.v.clone())
    }

    pub fn len(&self) -> usize {
        self.v.len()
    }

    pub fn is_empty(&self) -> bool {
        self.v.is_empty()
    }
}

fn powers_applied(g: &Graph, h: &Mat, degree: usize) -> Vec<Mat> {
    let a = g.adjacency();
    let mut out = Vec::with_capacity(degree + 1);
    out.push(h.clone());
    for k in 0..degree {
        out.push(a * &out[k]);
    }
    out
}

fn check_apply(f: &PolynomialFilter, g: &Graph, h: &Mat) -> Result<(), FilterError> {
    if f.degree() > MAX_APPLY_DEGREE {
        return Err(FilterError::DegreeTooLarge(f.degree()));
    }
    if h.nrows() != g.n() || h.ncols() != f.in_dim() {
        return Err(FilterError::Shape(format!(
            "features are {}x{}, expected {}x{}",
            h.nrows(),
            h.ncols(),
            g.n(),
            f.in_dim()
        )));
    }
    Ok(())
}

/// `sum_k Theta_k Mean(A^k H)` by repeated multiplication with `A`.
pub fn apply_filter(f: &PolynomialFilter, g: &Graph, h: &Mat) -> Result<Vector, FilterError> {
    check_apply(f, g, h)?;
    Ok(powers_applied(g, h, f.degree())
        .iter()
        .zip(&f.theta)
        .fold(Vector::zeros(f.out_dim()), |acc, (ah, t)| acc + t * column_means(ah)))
}

/// `sum_k Theta_k (A^k H)^T v`, the filter under pooling by `v`.
pub fn apply_filter_v(f: &PolynomialFilter, g: &Graph, h: &Mat, v: &PoolingVector) -> Result<Vector, FilterError> {
    check_apply(f, g, h)?;
    if v.len() != g.n() {
        return Err(FilterError::Shape(format!("pooling vector has {} entries for n = {}", v.len(), g.n())));
    }
    let vv = v.vector();
    Ok(powers_applied(g, h, f.degree())
        .iter()
        .zip(&f.theta)
        .fold(Vector::zeros(f.out_dim()), |acc, (ah, t)| acc + t * (ah.transpose() * &vv)))
}
