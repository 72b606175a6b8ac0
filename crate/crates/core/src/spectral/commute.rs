use serde::Serialize;

use super::{SpectralDecomposition, SpectralError};
use crate::graph::Graph;
use crate::linalg::Mat;

use super::walk::McEstimate;

/// `L^+ = sum_{l >= 1} v_l v_l^T / lambda_l`.
pub fn laplacian_pseudoinverse(spec: &SpectralDecomposition) -> Result<Mat, SpectralError> {
    spec.require_connected()?;
    let n = spec.n();
    let mut pinv = Mat::zeros(n, n);
    for l in 1..n {
        let v = spec.mode(l);
        pinv += (v * v.transpose()) / spec.eigenvalues[l];
    }
    Ok(pinv)
}

/// `R(i, j) = sum_{l >= 1} (v_l(i) - v_l(j))^2 / lambda_l`.
pub fn effective_resistance(
    spec: &SpectralDecomposition,
    i: usize,
    j: usize,
) -> Result<f64, SpectralError> {
    spec.check_index(i)?;
    spec.check_index(j)?;
    spec.require_connected()?;
    if i == j {
        return Ok(0.0);
    }
    Ok(spec.pair_sum(i, j, |l| 1.0 / l))
}

#[derive(Debug, Clone, Serialize)]
pub struct CommuteReport {
    pub i: usize,
    pub j: usize,
    pub resistance: f64,
    pub commute_time: f64,
    /// `|E|` entering `tau = 2 |E| R`.
    pub edge_count: usize,
    pub monte_carlo: Option<McEstimate>,
}

/// Commute time from the spectrum. `spec` must decompose `g.laplacian()`.
pub fn commute_time(
    g: &Graph,
    spec: &SpectralDecomposition,
    i: usize,
    j: usize,
) -> Result<CommuteReport, SpectralError> {
    if spec.n() != g.n() {
        return Err(SpectralError::SizeMismatch {
            expected: g.n(),
            got: spec.n(),
        });
    }
    let resistance = effective_resistance(spec, i, j)?;
    let edge_count = g.commute_edge_count();
    Ok(CommuteReport {
        i,
        j,
        resistance,
        commute_time: 2.0 * edge_count as f64 * resistance,
        edge_count,
        monte_carlo: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{generate, GenSpec};
    use crate::spectral::laplacian_spectrum;

    fn setup(spec: GenSpec) -> (Graph, SpectralDecomposition) {
        let g = generate(&spec).unwrap();
        let s = laplacian_spectrum(&g).unwrap();
        (g, s)
    }

    #[test]
    fn pseudoinverse_examples() {
        let (_, s) = setup(GenSpec::path(2));
        let p = laplacian_pseudoinverse(&s).unwrap();
        let expected = Mat::from_row_slice(2, 2, &[0.25, -0.25, -0.25, 0.25]);
        assert!((p - expected).amax() < 1e-12);

        let (_, s) = setup(GenSpec::complete(4));
        let p = laplacian_pseudoinverse(&s).unwrap();
        let expected = (Mat::identity(4, 4) - Mat::from_element(4, 4, 0.25)) / 4.0;
        assert!((p - expected).amax() < 1e-12);
    }

    #[test]
    fn pseudoinverse_kernel_and_projector() {
        let (g, s) = setup(GenSpec::erdos_renyi(15, 0.3, 4));
        let p = laplacian_pseudoinverse(&s).unwrap();
        let n = g.n();
        let ones = crate::Vector::from_element(n, 1.0);
        assert!((&p * ones).amax() < 1e-10);
        let proj = Mat::identity(n, n) - Mat::from_element(n, n, 1.0 / n as f64);
        assert!((g.laplacian() * &p - proj).amax() < 1e-7);
    }

    #[test]
    fn resistance_examples() {
        let (_, s) = setup(GenSpec::path(2));
        assert!((effective_resistance(&s, 0, 1).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(effective_resistance(&s, 1, 1).unwrap(), 0.0);
        let (_, s) = setup(GenSpec::cycle(4));
        assert!((effective_resistance(&s, 0, 2).unwrap() - 1.0).abs() < 1e-12);
        assert!((effective_resistance(&s, 0, 1).unwrap() - 0.75).abs() < 1e-12);
    }

    #[test]
    fn resistance_matches_pseudoinverse_entries() {
        let (g, s) = setup(GenSpec::grid(3, 4));
        let p = laplacian_pseudoinverse(&s).unwrap();
        for i in 0..g.n() {
            for j in 0..g.n() {
                let direct = p[(i, i)] + p[(j, j)] - 2.0 * p[(i, j)];
                assert!((effective_resistance(&s, i, j).unwrap() - direct).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn commute_examples() {
        let (g, s) = setup(GenSpec::path(2));
        assert!((commute_time(&g, &s, 0, 1).unwrap().commute_time - 2.0).abs() < 1e-12);
        let (g, s) = setup(GenSpec::complete(4));
        for (i, j) in [(0, 1), (1, 3), (2, 3)] {
            assert!((commute_time(&g, &s, i, j).unwrap().commute_time - 6.0).abs() < 1e-12);
        }
        let (g, s) = setup(GenSpec::cycle(4));
        let r = commute_time(&g, &s, 0, 2).unwrap();
        assert!((r.commute_time - 8.0).abs() < 1e-12);
        let back = commute_time(&g, &s, 2, 0).unwrap();
        assert_eq!(r.commute_time, back.commute_time);
    }

    #[test]
    fn out_of_range() {
        let (g, s) = setup(GenSpec::path(3));
        assert!(commute_time(&g, &s, 0, 3).is_err());
    }
}
