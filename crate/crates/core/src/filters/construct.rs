use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{extract_filter, FilterError, PolynomialFilter};
use crate::linalg::{max_abs, Mat};
use crate::nn::{init_params, Arch, ModelSpec, Params, Weight};

const NEWTON_STARTS: usize = 16;
const NEWTON_ITERATIONS: usize = 100;

/// Block-diagonal rotation by 90 degrees; squares to `-I`.
fn quarter_turn(d: usize) -> Mat {
    let mut r = Mat::zeros(d, d);
    for b in (0..d).step_by(2) {
        r[(b, b + 1)] = -1.0;
        r[(b + 1, b)] = 1.0;
    }
    r
}

/// Denman-Beavers iteration for the principal square root.
fn principal_sqrt(m: &Mat) -> Option<Mat> {
    let d = m.nrows();
    let mut y = m.clone();
    let mut z = Mat::identity(d, d);
    for _ in 0..200 {
        let yi = y.clone().try_inverse()?;
        let zi = z.clone().try_inverse()?;
        let y_next = (&y + zi) * 0.5;
        let z_next = (&z + yi) * 0.5;
        let step = crate::linalg::max_abs_diff(&y_next, &y);
        y = y_next;
        z = z_next;
        if !y.iter().all(|v| v.is_finite()) {
            return None;
        }
        if step <= 1e-15 * max_abs(&y).max(1.0) {
            break;
        }
    }
    (crate::linalg::max_abs_diff(&(&y * &y), m) <= 1e-12 * max_abs(m).max(1.0)).then_some(y)
}

/// Newton's method on `a^2 - t1 a + t2 = 0`.
fn newton_solvent(t1: &Mat, t2: &Mat, start: Mat) -> Option<Mat> {
    let d = t1.nrows();
    let eye = Mat::identity(d, d);
    let scale = max_abs(t1).max(max_abs(t2)).max(1.0);
    let mut a = start;
    for _ in 0..NEWTON_ITERATIONS {
        let f = &a * &a - t1 * &a + t2;
        if max_abs(&f) <= 1e-14 * scale {
            return Some(a);
        }
        let k = eye.kronecker(&(&a - t1)) + a.transpose().kronecker(&eye);
        let rhs = nalgebra::DVector::from_column_slice(f.as_slice());
        let delta = k.lu().solve(&(-rhs))?;
        a += Mat::from_column_slice(d, d, delta.as_slice());
        if !a.iter().all(|v| v.is_finite()) {
            return None;
        }
    }
    None
}

/// Splits `t1 = a + b`, `t2 = b a`.
fn factor(t1: &Mat, t2: &Mat) -> Result<(Mat, Mat), FilterError> {
    let d = t1.nrows();
    let half = t1 * 0.5;
    let m = &half * &half - t2;
    let scale = max_abs(t1).max(max_abs(t2)).max(1.0);
    let c = -m.trace() / d as f64;
    let negative_scalar = c > 0.0 && max_abs(&(&m + Mat::identity(d, d) * c)) <= 1e-14 * scale;
    let mut candidates = Vec::new();
    if negative_scalar {
        if d % 2 == 1 {
            if max_abs(t1) == 0.0 {
                return Err(FilterError::Infeasible(format!(
                    "Theta_1 = 0 and Theta_2 = {c} I need W^2 = -{c} I, which has no real solution in odd dimension {d}"
                )));
            }
        } else {
            candidates.push(quarter_turn(d) * c.sqrt());
        }
    } else if max_abs(&m) == 0.0 {
        candidates.push(Mat::zeros(d, d));
    } else if let Some(s) = principal_sqrt(&m) {
        candidates.push(s);
    }
    let ok = |a: &Mat| {
        let b = t1 - a;
        crate::linalg::max_abs_diff(&(&b * a), t2) <= 1e-13 * scale
    };
    for s in &candidates {
        let a = &half + s;
        if ok(&a) {
            return Ok((a.clone(), t1 - a));
        }
        if let Some(a) = newton_solvent(t1, t2, a) {
            if ok(&a) {
                return Ok((a.clone(), t1 - a));
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for _ in 0..NEWTON_STARTS {
        let start = &half + Mat::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0)) * scale;
        if let Some(a) = newton_solvent(t1, t2, start) {
            if ok(&a) {
                return Ok((a.clone(), t1 - a));
            }
        }
    }
    Err(FilterError::Infeasible(
        "no real a, b with a + b = Theta_1 and b a = Theta_2 were found".into(),
    ))
}

/// Depth-2 `linear-mpnn-vn` weights with `Theta~ = I`,
/// `Q^(1) = (Theta_0 - I)^T`, `W^(0)^T + W^(1)^T = Theta_1` and
/// `W^(1)^T W^(0)^T = Theta_2`.
pub fn construct_vn_weights(target: &PolynomialFilter) -> Result<(ModelSpec, Params), FilterError> {
    if target.degree() != 2 {
        return Err(FilterError::Unsupported(format!("degree {} target; construction is for degree 2", target.degree())));
    }
    let d = target.in_dim();
    if target.out_dim() != d {
        return Err(FilterError::Unsupported("construction needs square coefficients".into()));
    }
    let (a, b) = factor(&target.theta[1], &target.theta[2])?;
    let spec = ModelSpec::new(Arch::LinearMpnnVn, 2, d);
    let mut p = init_params(&spec, 0)?;
    p.readout = Mat::identity(d, d);
    p.set(0, Weight::W, a.transpose());
    p.set(1, Weight::W, b.transpose());
    p.set(1, Weight::Q, (&target.theta[0] - Mat::identity(d, d)).transpose());
    let err = extract_filter(&spec, &p)?.max_abs_diff(target);
    let scale = target.theta.iter().map(max_abs).fold(1.0, f64::max);
    if err > 1e-12 * scale {
        return Err(FilterError::Infeasible(format!("construction reproduces the target only to {err:e}")));
    }
    Ok((spec, p))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn target(t0: Mat, t1: Mat, t2: Mat) -> PolynomialFilter {
        PolynomialFilter::new(vec![t0, t1, t2]).unwrap()
    }

    #[test]
    fn quadratic_only_even_dimension() {
        let t = target(Mat::zeros(2, 2), Mat::zeros(2, 2), Mat::identity(2, 2));
        let (spec, p) = construct_vn_weights(&t).unwrap();
        let w0t = p.weight(0, Weight::W).unwrap().transpose();
        assert_eq!(w0t, Mat::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]));
        assert_eq!(p.weight(1, Weight::W).unwrap().transpose(), -w0t);
        assert_eq!(p.weight(1, Weight::Q).unwrap(), &-Mat::identity(2, 2));
        assert!(extract_filter(&spec, &p).unwrap().max_abs_diff(&t) < 1e-12);
    }

    #[test]
    fn linear_only() {
        let t = target(Mat::zeros(3, 3), Mat::identity(3, 3), Mat::zeros(3, 3));
        let (_, p) = construct_vn_weights(&t).unwrap();
        assert!((p.weight(0, Weight::W).unwrap() - Mat::identity(3, 3)).amax() < 1e-15);
        assert!(p.weight(1, Weight::W).unwrap().amax() < 1e-15);
    }

    #[test]
    fn odd_dimension_infeasible() {
        let t = target(Mat::zeros(3, 3), Mat::zeros(3, 3), Mat::identity(3, 3));
        assert!(matches!(construct_vn_weights(&t), Err(FilterError::Infeasible(_))));
    }

    #[test]
    fn generic_targets_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut built = 0;
        for _ in 0..10 {
            let m = |rng: &mut ChaCha8Rng| Mat::from_fn(3, 3, |_, _| rng.random_range(-1.0..1.0));
            let t = target(m(&mut rng), m(&mut rng), m(&mut rng));
            match construct_vn_weights(&t) {
                Ok((spec, p)) => {
                    built += 1;
                    assert!(extract_filter(&spec, &p).unwrap().max_abs_diff(&t) < 1e-12);
                }
                Err(e) => assert!(matches!(e, FilterError::Infeasible(_))),
            }
        }
        assert!(built >= 5, "{built}");
    }
}
