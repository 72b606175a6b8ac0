use serde::Serialize;

use super::{apply_filter_v, FilterError, PolynomialFilter, PoolingVector};
use crate::graph::Graph;
use crate::linalg::{Mat, Vector};
use crate::spectral::adjacency_spectrum;

#[derive(Debug, Clone, Serialize)]
pub struct FourierMode {
    /// Eigenvalue `lambda_i` of the adjacency matrix.
    pub eigenvalue: f64,
    /// `c_i = <v, psi_i>`.
    pub coefficient: f64,
    /// `<h^p, psi_i>` for every input channel `p`.
    pub projections: Vec<f64>,
    /// `sum_k lambda_i^k c_i Theta_k H^T psi_i`.
    pub contribution: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct FourierProfile {
    pub modes: Vec<FourierMode>,
    pub reconstructed: Vec<f64>,
    pub direct: Vec<f64>,
    pub reconstruction_error: f64,
}

/// Decomposes the `v`-pooled filter output over the adjacency eigenbasis.
pub fn fourier_pooling_profile(
    g: &Graph,
    v: &PoolingVector,
    h: &Mat,
    f: &PolynomialFilter,
) -> Result<FourierProfile, FilterError> {
    let direct = apply_filter_v(f, g, h, v)?;
    let spec = adjacency_spectrum(g)?;
    let vv = v.vector();
    let mut total = Vector::zeros(f.out_dim());
    let modes = (0..g.n())
        .map(|i| {
            let psi = spec.eigenvectors.column(i);
            let lambda = spec.eigenvalues[i];
            let c = vv.dot(&psi);
            let proj = h.transpose() * psi;
            let mut contribution = Vector::zeros(f.out_dim());
            let mut power = 1.0;
            for t in &f.theta {
                contribution += t * &proj * (power * c);
                power *= lambda;
            }
            total += &contribution;
            FourierMode {
                eigenvalue: lambda,
                coefficient: c,
                projections: proj.iter().copied().collect(),
                contribution: contribution.iter().copied().collect(),
            }
        })
        .collect();
    Ok(FourierProfile {
        modes,
        reconstruction_error: (&total - &direct).amax(),
        reconstructed: total.iter().copied().collect(),
        direct: direct.iter().copied().collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{generate, GenSpec};
    use crate::linalg::column_means;

    #[test]
    fn mean_pool_constant_filter() {
        let g = generate(&GenSpec::grid(2, 3)).unwrap();
        let h = Mat::from_fn(6, 2, |i, j| (i as f64 - j as f64).sin());
        let f = PolynomialFilter::new(vec![Mat::identity(2, 2)]).unwrap();
        let p = fourier_pooling_profile(&g, &PoolingVector::mean(6), &h, &f).unwrap();
        let expected = column_means(&h);
        assert!(p.reconstructed.iter().zip(expected.iter()).all(|(a, b)| (a - b).abs() < 1e-12));
        assert!(p.reconstruction_error < 1e-12);
    }

    #[test]
    fn orthogonal_modes_give_zero() {
        let g = generate(&GenSpec::cycle(6)).unwrap();
        let spec = adjacency_spectrum(&g).unwrap();
        let top = spec.eigenvectors.column(5).into_owned();
        let other = spec.eigenvectors.column(2).into_owned();
        let h = Mat::from_columns(&[other]);
        let f = PolynomialFilter::new(vec![Mat::zeros(1, 1), Mat::identity(1, 1)]).unwrap();
        let p = fourier_pooling_profile(&g, &PoolingVector::new(top), &h, &f).unwrap();
        assert!(p.direct[0].abs() < 1e-12);
        assert!(p.modes.iter().all(|m| m.contribution[0].abs() < 1e-12));
    }
}
