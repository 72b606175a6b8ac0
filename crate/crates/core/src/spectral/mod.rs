//! Laplacian spectra, effective resistance and commute times, and the
//! closed-form effect of a virtual node on commute time.
//!
//! Conventions:
//!
//! - Eigenvalues are ascending. Near-zero eigenvalues (below
//!   [`ZERO_EIGENVALUE_THRESHOLD`]) count as kernel directions; a connected
//!   graph has exactly one.
//! - `tau(i, j) = 2 |E| R(i, j)`. On an augmented graph `|E|` is replaced by
//!   `|E| + n` (the VN self-loop is excluded), see
//!   [`Graph::commute_edge_count`].
//! - Average deltas are taken over all `n^2` ordered pairs, diagonal included.

mod commute;
mod eigen;
mod vn;
mod walk;

use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::graph::Graph;
use crate::linalg::{Mat, Vector};

pub use commute::{commute_time, effective_resistance, laplacian_pseudoinverse, CommuteReport};
pub use vn::{
    alpha, depth_lower_bound, histogram, GraphBounds, vn_avg_commute_delta, vn_commute_delta,
    vn_delta_alpha_bounds, vn_delta_matrix, vn_depth_lower_bound, vn_effect_report,
    vn_spectrum_analytic, AlphaBounds, DepthBound, HistogramBin, PairDelta, VnEffectReport,
};
pub use walk::{mc_commute_time, walk_commute_time, McEstimate, MC_STEP_CAP};

/// Eigenvalues with magnitude below this count as zero.
pub const ZERO_EIGENVALUE_THRESHOLD: f64 = 1e-9;

/// Maximum asymmetry tolerated by [`eigendecompose`].
pub const SYMMETRY_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum SpectralError {
    #[error("matrix is not symmetric (max asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },
    #[error("matrix is not square: {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("eigensolver failed to converge at index {index}")]
    NoConvergence { index: usize },
    #[error("graph is disconnected ({zero_modes} near-zero Laplacian eigenvalues)")]
    Disconnected { zero_modes: usize },
    #[error("node index {index} out of range for {n} nodes")]
    NodeOutOfRange { index: usize, n: usize },
    #[error("operation needs a graph without a virtual node")]
    AugmentedInput,
    #[error("operation needs distinct nodes, got i = j = {0}")]
    SameNode(usize),
    #[error("decomposition has {got} nodes but the graph has {expected}")]
    SizeMismatch { expected: usize, got: usize },
}

impl SpectralError {
    pub fn is_input_error(&self) -> bool {
        !matches!(self, SpectralError::NoConvergence { .. })
    }
}

/// Eigenvalues (ascending) with orthonormal eigenvector columns.
#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    pub eigenvalues: Vector,
    pub eigenvectors: Mat,
    /// SHA-256 over the decomposed matrix, hex encoded.
    pub source_hash: String,
}

impl SpectralDecomposition {
    pub fn n(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn zero_modes(&self) -> usize {
        self.eigenvalues
            .iter()
            .filter(|l| l.abs() < ZERO_EIGENVALUE_THRESHOLD)
            .count()
    }

    /// Errors unless exactly one eigenvalue is numerically zero.
    pub fn require_connected(&self) -> Result<(), SpectralError> {
        match self.zero_modes() {
            1 => Ok(()),
            zero_modes => Err(SpectralError::Disconnected { zero_modes }),
        }
    }

    /// Column `l` as a vector.
    pub fn mode(&self, l: usize) -> nalgebra::DVectorView<'_, f64> {
        self.eigenvectors.column(l)
    }

    /// Sum over nonzero modes of `weight(lambda) * (v(i) - v(j))^2`.
    pub(crate) fn pair_sum(&self, i: usize, j: usize, weight: impl Fn(f64) -> f64) -> f64 {
        (1..self.n())
            .map(|l| {
                let diff = self.eigenvectors[(i, l)] - self.eigenvectors[(j, l)];
                weight(self.eigenvalues[l]) * diff * diff
            })
            .sum()
    }

    pub(crate) fn check_index(&self, i: usize) -> Result<(), SpectralError> {
        if i < self.n() {
            Ok(())
        } else {
            Err(SpectralError::NodeOutOfRange {
                index: i,
                n: self.n(),
            })
        }
    }
}

/// Eigendecomposition of a symmetric matrix.
///
/// `tol` bounds the accepted per-column residual `||M v - lambda v||`,
/// relative to `max(1, |lambda|)`.
pub fn eigendecompose(m: &Mat, tol: f64) -> Result<SpectralDecomposition, SpectralError> {
    if m.nrows() != m.ncols() {
        return Err(SpectralError::NotSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    let asymmetry = (m - m.transpose()).amax();
    if asymmetry > SYMMETRY_TOLERANCE {
        return Err(SpectralError::NotSymmetric { asymmetry });
    }
    let (eigenvalues, eigenvectors) = eigen::symmetric_eigen(m)?;
    for k in 0..eigenvalues.len() {
        let col = eigenvectors.column(k);
        let resid = (m * col - col * eigenvalues[k]).norm();
        if resid > tol * eigenvalues[k].abs().max(1.0) {
            return Err(SpectralError::NoConvergence { index: k });
        }
    }
    Ok(SpectralDecomposition {
        eigenvalues,
        eigenvectors,
        source_hash: matrix_hash(m),
    })
}

/// Residual tolerance used for Laplacian decompositions.
pub const DEFAULT_EIGEN_TOLERANCE: f64 = 1e-8;

/// Decomposes `L = D - A` of a connected graph, clamping the kernel eigenvalue
/// to exactly zero.
pub fn laplacian_spectrum(g: &Graph) -> Result<SpectralDecomposition, SpectralError> {
    let mut spec = eigendecompose(&g.laplacian(), DEFAULT_EIGEN_TOLERANCE)?;
    spec.require_connected()?;
    spec.eigenvalues[0] = 0.0;
    Ok(spec)
}

/// Decomposes the adjacency matrix (used by the graph Fourier profile).
pub fn adjacency_spectrum(g: &Graph) -> Result<SpectralDecomposition, SpectralError> {
    eigendecompose(g.adjacency(), DEFAULT_EIGEN_TOLERANCE)
}

fn matrix_hash(m: &Mat) -> String {
    let mut hasher = Sha256::new();
    hasher.update((m.nrows() as u64).to_le_bytes());
    hasher.update((m.ncols() as u64).to_le_bytes());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            hasher.update(m[(i, j)].to_bits().to_le_bytes());
        }
    }
    hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Eigenvalue listing for reports.
#[derive(Debug, Clone, Serialize)]
pub struct SpectrumReport {
    pub graph_id: String,
    pub n: usize,
    pub laplacian_eigenvalues: Vec<f64>,
    pub source_hash: String,
    /// Present for simple graphs: the augmented spectrum predicted from the
    /// base spectrum, next to the one computed directly.
    pub vn_analytic: Option<Vec<f64>>,
    pub vn_numeric: Option<Vec<f64>>,
    pub vn_max_abs_error: Option<f64>,
}

pub fn spectrum_report(g: &Graph, graph_id: &str) -> Result<SpectrumReport, SpectralError> {
    let spec = laplacian_spectrum(g)?;
    let (vn_analytic, vn_numeric, vn_max_abs_error) = if g.has_vn() {
        (None, None, None)
    } else {
        let analytic = vn_spectrum_analytic(&spec, g)?;
        let aug = laplacian_spectrum(&g.augment_with_vn().map_err(|_| SpectralError::AugmentedInput)?)?;
        let numeric: Vec<f64> = aug.eigenvalues.iter().copied().collect();
        let err = analytic
            .iter()
            .zip(&numeric)
            .fold(0.0_f64, |acc, (a, b)| acc.max((a - b).abs()));
        (Some(analytic), Some(numeric), Some(err))
    };
    Ok(SpectrumReport {
        graph_id: graph_id.to_string(),
        n: g.n(),
        laplacian_eigenvalues: spec.eigenvalues.iter().copied().collect(),
        source_hash: spec.source_hash,
        vn_analytic,
        vn_numeric,
        vn_max_abs_error,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{generate, GenSpec};

    fn spectrum(spec: GenSpec) -> Vec<f64> {
        laplacian_spectrum(&generate(&spec).unwrap())
            .unwrap()
            .eigenvalues
            .iter()
            .copied()
            .collect()
    }

    fn assert_close(a: &[f64], b: &[f64], tol: f64) {
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() < tol, "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn small_spectra() {
        assert_close(&spectrum(GenSpec::path(2)), &[0.0, 2.0], 1e-12);
        assert_close(&spectrum(GenSpec::complete(4)), &[0.0, 4.0, 4.0, 4.0], 1e-12);
        assert_close(&spectrum(GenSpec::cycle(4)), &[0.0, 2.0, 2.0, 4.0], 1e-12);
    }

    #[test]
    fn kernel_vector_is_constant() {
        for spec in [GenSpec::path(7), GenSpec::grid(3, 3), GenSpec::star(6)] {
            let g = generate(&spec).unwrap();
            let s = laplacian_spectrum(&g).unwrap();
            let target = 1.0 / (g.n() as f64).sqrt();
            for x in s.mode(0).iter() {
                assert!((x.abs() - target).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn rejects_asymmetric() {
        let m = Mat::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0]);
        assert!(matches!(
            eigendecompose(&m, 1e-8),
            Err(SpectralError::NotSymmetric { .. })
        ));
        assert!(eigendecompose(&Mat::zeros(2, 3), 1e-8).is_err());
    }

    #[test]
    fn disconnected_detected() {
        let g = Graph::from_edges(4, &[(0, 1), (2, 3)]).unwrap();
        assert!(matches!(
            laplacian_spectrum(&g),
            Err(SpectralError::Disconnected { zero_modes: 2 })
        ));
    }

    #[test]
    fn hash_is_stable_and_sensitive() {
        let a = generate(&GenSpec::path(5)).unwrap().laplacian();
        let b = generate(&GenSpec::cycle(5)).unwrap().laplacian();
        assert_eq!(matrix_hash(&a), matrix_hash(&a.clone()));
        assert_ne!(matrix_hash(&a), matrix_hash(&b));
    }
}
