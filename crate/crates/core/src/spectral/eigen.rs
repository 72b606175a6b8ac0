//! Dense symmetric eigensolver: Householder tridiagonalisation followed by the
//! implicit QL iteration with Wilkinson-style shifts.
//!
//! This is the classic EISPACK `tred2`/`tql2` pair, in the form popularised
//! by JAMA. It is deterministic for a fixed input and copes with repeated
//! eigenvalues (complete graphs, cycles) without special handling.

use super::SpectralError;
use crate::linalg::{Mat, Vector};

/// QL sweeps allowed per eigenvalue before giving up.
const MAX_QL_ITERATIONS: usize = 64;

/// Eigenvalues ascending, eigenvectors as the matching columns of `vectors`.
pub(crate) fn symmetric_eigen(m: &Mat) -> Result<(Vector, Mat), SpectralError> {
    let n = m.nrows();
    if n == 0 {
        return Ok((Vector::zeros(0), Mat::zeros(0, 0)));
    }
    // Row-major working copy; v[i * n + j] = V[i][j].
    let mut v: Vec<f64> = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            v.push(m[(i, j)]);
        }
    }
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    tred2(n, &mut v, &mut d, &mut e);
    tql2(n, &mut v, &mut d, &mut e)?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| d[a].total_cmp(&d[b]));
    let values = Vector::from_iterator(n, order.iter().map(|&k| d[k]));
    let mut vectors = Mat::zeros(n, n);
    for (col, &k) in order.iter().enumerate() {
        // Fix the sign so the largest-magnitude entry is positive.
        let mut pivot = 0;
        for i in 1..n {
            if v[i * n + k].abs() > v[pivot * n + k].abs() + 1e-12 {
                pivot = i;
            }
        }
        let sign = if v[pivot * n + k] < 0.0 { -1.0 } else { 1.0 };
        for i in 0..n {
            vectors[(i, col)] = sign * v[i * n + k];
        }
    }
    Ok((values, vectors))
}

fn tred2(n: usize, v: &mut [f64], d: &mut [f64], e: &mut [f64]) {
    let at = |i: usize, j: usize| i * n + j;
    for j in 0..n {
        d[j] = v[at(n - 1, j)];
    }
    for i in (1..n).rev() {
        let mut scale = 0.0;
        let mut h = 0.0;
        for k in 0..i {
            scale += d[k].abs();
        }
        if scale == 0.0 {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = v[at(i - 1, j)];
                v[at(i, j)] = 0.0;
                v[at(j, i)] = 0.0;
            }
        } else {
            for k in 0..i {
                d[k] /= scale;
                h += d[k] * d[k];
            }
            let mut f = d[i - 1];
            let mut g = h.sqrt();
            if f > 0.0 {
                g = -g;
            }
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            for ej in e.iter_mut().take(i) {
                *ej = 0.0;
            }
            for j in 0..i {
                f = d[j];
                v[at(j, i)] = f;
                g = e[j] + v[at(j, j)] * f;
                for k in j + 1..i {
                    g += v[at(k, j)] * d[k];
                    e[k] += v[at(k, j)] * f;
                }
                e[j] = g;
            }
            f = 0.0;
            for j in 0..i {
                e[j] /= h;
                f += e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] -= hh * d[j];
            }
            for j in 0..i {
                f = d[j];
                g = e[j];
                for k in j..i {
                    v[at(k, j)] -= f * e[k] + g * d[k];
                }
                d[j] = v[at(i - 1, j)];
                v[at(i, j)] = 0.0;
            }
        }
        d[i] = h;
    }

    for i in 0..n - 1 {
        v[at(n - 1, i)] = v[at(i, i)];
        v[at(i, i)] = 1.0;
        let h = d[i + 1];
        if h != 0.0 {
            for k in 0..=i {
                d[k] = v[at(k, i + 1)] / h;
            }
            for j in 0..=i {
                let mut g = 0.0;
                for k in 0..=i {
                    g += v[at(k, i + 1)] * v[at(k, j)];
                }
                for k in 0..=i {
                    v[at(k, j)] -= g * d[k];
                }
            }
        }
        for k in 0..=i {
            v[at(k, i + 1)] = 0.0;
        }
    }
    for j in 0..n {
        d[j] = v[at(n - 1, j)];
        v[at(n - 1, j)] = 0.0;
    }
    v[at(n - 1, n - 1)] = 1.0;
    e[0] = 0.0;
}

fn tql2(n: usize, v: &mut [f64], d: &mut [f64], e: &mut [f64]) -> Result<(), SpectralError> {
    let at = |i: usize, j: usize| i * n + j;
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;

    let mut f = 0.0;
    let mut tst1 = 0.0_f64;
    let eps = f64::EPSILON;
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n - 1 && e[m].abs() > eps * tst1 {
            m += 1;
        }
        if m > l {
            let mut iter = 0;
            loop {
                iter += 1;
                if iter > MAX_QL_ITERATIONS {
                    return Err(SpectralError::NoConvergence { index: l });
                }
                let mut g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = p.hypot(1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for di in d.iter_mut().skip(l + 2) {
                    *di -= h;
                }
                f += h;

                p = d[m];
                let mut c = 1.0;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = 0.0;
                let mut s2 = 0.0;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    for k in 0..n {
                        h = v[at(k, i + 1)];
                        v[at(k, i + 1)] = s * v[at(k, i)] + c * h;
                        v[at(k, i)] = c * v[at(k, i)] - s * h;
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = 0.0;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn check_decomposition(m: &Mat, tol: f64) {
        let (vals, vecs) = symmetric_eigen(m).unwrap();
        let n = m.nrows();
        for k in 0..n {
            let col = vecs.column(k);
            let resid = (m * col - col * vals[k]).norm();
            assert!(resid <= tol * vals[k].abs().max(1.0), "residual {resid}");
        }
        let gram = vecs.transpose() * &vecs;
        assert!((gram - Mat::identity(n, n)).amax() < tol);
        for k in 1..n {
            assert!(vals[k - 1] <= vals[k]);
        }
    }

    #[test]
    fn one_by_one() {
        let (vals, vecs) = symmetric_eigen(&Mat::from_element(1, 1, 3.5)).unwrap();
        assert_eq!(vals[0], 3.5);
        assert_eq!(vecs[(0, 0)], 1.0);
    }

    #[test]
    fn diagonal_input() {
        let m = Mat::from_diagonal(&Vector::from_vec(vec![3.0, -1.0, 2.0]));
        let (vals, _) = symmetric_eigen(&m).unwrap();
        assert_eq!(vals.as_slice(), &[-1.0, 2.0, 3.0]);
    }

    #[test]
    fn random_symmetric_matches_nalgebra() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for n in [2, 3, 5, 17, 40] {
            let a = Mat::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
            let m = &a + a.transpose();
            check_decomposition(&m, 1e-10);
            let mut reference: Vec<f64> = m.clone().symmetric_eigen().eigenvalues.iter().copied().collect();
            reference.sort_by(f64::total_cmp);
            let (vals, _) = symmetric_eigen(&m).unwrap();
            for (a, b) in vals.iter().zip(&reference) {
                assert!((a - b).abs() < 1e-10, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn repeated_eigenvalues() {
        // K_5 Laplacian: {0, 5, 5, 5, 5}.
        let m = Mat::from_fn(5, 5, |i, j| if i == j { 4.0 } else { -1.0 });
        check_decomposition(&m, 1e-12);
        let (vals, _) = symmetric_eigen(&m).unwrap();
        assert!(vals[0].abs() < 1e-12);
        for k in 1..5 {
            assert!((vals[k] - 5.0).abs() < 1e-12);
        }
    }
}
