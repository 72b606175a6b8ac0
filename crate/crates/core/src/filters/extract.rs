use std::collections::BTreeMap;

use serde::Serialize;

use super::{apply_filter, apply_filter_v, FilterError, PolynomialFilter, PoolingVector};
use crate::graph::Graph;
use crate::linalg::{max_abs, Mat, Vector};
use crate::nn::{Arch, MeanAugment, ModelSpec, Params, VnNormalizer, Weight};

/// Largest depth expanded symbolically.
pub const MAX_EXTRACT_DEGREE: usize = 3;

/// Node states as `sum_w w X C_w` over words `w` in the letters `A` and `J`
/// (`J = 1 1^T / n`), leftmost letter applied last.
type Expansion = BTreeMap<String, Mat>;

fn check_linear(spec: &ModelSpec, params: &Params) -> Result<(), FilterError> {
    spec.validate()?;
    params.check(spec)?;
    if !spec.arch.is_linear() {
        return Err(FilterError::Unsupported(format!(
            "{} is not linear; extraction needs linear-mpnn, linear-mpnn-vn or pairnorm-vn",
            spec.arch
        )));
    }
    if spec.depth > MAX_EXTRACT_DEGREE {
        return Err(FilterError::Unsupported(format!(
            "depth {} exceeds the symbolic limit {MAX_EXTRACT_DEGREE}",
            spec.depth
        )));
    }
    if spec.vn_normalizer != VnNormalizer::Mean {
        return Err(FilterError::Unsupported(
            "sum aggregation scales the VN term by n; extraction needs mean aggregation".into(),
        ));
    }
    if spec.mean_augment != MeanAugment::None {
        return Err(FilterError::Unsupported("mean augmentation is not expanded".into()));
    }
    Ok(())
}

fn expand(spec: &ModelSpec, params: &Params) -> Result<Expansion, FilterError> {
    let start = match &params.embed {
        Some(e) => e.clone(),
        None => Mat::identity(spec.width, spec.width),
    };
    let mut current: Expansion = BTreeMap::from([(String::new(), start)]);
    let mut previous: Option<Expansion> = None;
    for l in 0..spec.depth {
        let w = params.weight(l, Weight::W)?;
        let mut next = current.clone();
        for (word, c) in &current {
            *next
                .entry(format!("A{word}"))
                .or_insert_with(|| Mat::zeros(c.nrows(), c.ncols())) += c * w;
        }
        if let (Some(prev), Some(q)) = (&previous, params.get(l, Weight::Q)) {
            for (word, c) in prev {
                *next
                    .entry(format!("J{word}"))
                    .or_insert_with(|| Mat::zeros(c.nrows(), c.ncols())) += c * q;
            }
        }
        previous = Some(current);
        current = next;
    }
    Ok(current)
}

/// Adds the mean-pooled contribution of `word` to `theta`.
fn add_mean_term(theta: &mut [Mat], readout: &Mat, word: &str, c: &Mat) -> Result<(), FilterError> {
    let body = word.trim_start_matches('J');
    if body.contains('J') {
        if max_abs(c) == 0.0 {
            return Ok(());
        }
        return Err(FilterError::GraphDependent { word: word.to_string() });
    }
    theta[body.len()] += readout * c.transpose();
    Ok(())
}

/// Coefficients `Theta_k` of the mean-pooled output of a linear model.
pub fn extract_filter(spec: &ModelSpec, params: &Params) -> Result<PolynomialFilter, FilterError> {
    check_linear(spec, params)?;
    let terms = expand(spec, params)?;
    let mut f = PolynomialFilter::zero(spec.depth, spec.output_dim, spec.input_dim);
    for (word, c) in &terms {
        add_mean_term(&mut f.theta, &params.readout, word, c)?;
    }
    Ok(f)
}

/// Output of a linear model under pooling by `v`:
/// `sum_k V_k (A^k X)^T v + sum_k M_k Mean(A^k X)`. The mean part comes from
/// VN terms, carries the factor `v^T 1`, and is absent when `v` is orthogonal
/// to the ones vector.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VPoolFilter {
    pub v_terms: PolynomialFilter,
    pub mean_terms: Option<PolynomialFilter>,
}

impl VPoolFilter {
    pub fn apply(&self, g: &Graph, x: &Mat, v: &PoolingVector) -> Result<Vector, FilterError> {
        let mut y = apply_filter_v(&self.v_terms, g, x, v)?;
        if let Some(m) = &self.mean_terms {
            y += apply_filter(m, g, x)?;
        }
        Ok(y)
    }

    /// Single mean-pooled filter, valid when `v = 1 / n`.
    pub fn collapse_mean(&self) -> PolynomialFilter {
        let mut f = self.v_terms.clone();
        if let Some(m) = &self.mean_terms {
            for (a, b) in f.theta.iter_mut().zip(&m.theta) {
                *a += b;
            }
        }
        f
    }
}

pub fn v_pool_extract(spec: &ModelSpec, params: &Params, v: &PoolingVector) -> Result<VPoolFilter, FilterError> {
    check_linear(spec, params)?;
    let terms = expand(spec, params)?;
    let mut v_terms = PolynomialFilter::zero(spec.depth, spec.output_dim, spec.input_dim);
    let mut mean_terms = PolynomialFilter::zero(spec.depth, spec.output_dim, spec.input_dim);
    let scale: f64 = v.v.iter().sum();
    for (word, c) in &terms {
        if let Some(rest) = word.strip_prefix('J') {
            if !v.orthogonal_to_ones {
                add_mean_term(&mut mean_terms.theta, &(&params.readout * scale), rest, c)?;
            }
        } else if word.contains('J') {
            if max_abs(c) != 0.0 {
                return Err(FilterError::GraphDependent { word: word.clone() });
            }
        } else {
            v_terms.theta[word.len()] += &params.readout * c.transpose();
        }
    }
    Ok(VPoolFilter {
        v_terms,
        mean_terms: (!v.orthogonal_to_ones).then_some(mean_terms),
    })
}

/// Check of `det(Theta_0^-1 Theta_2) = (-1)^d det(W^(1))^2` for a depth-2
/// linear-mpnn with an input embedding and `W^(0) = -W^(1)`.
#[derive(Debug, Clone, Serialize)]
pub struct DetReport {
    pub d: usize,
    pub theta1_norm: f64,
    pub det_ratio: f64,
    pub predicted: f64,
    pub sign: f64,
    pub expected_sign: f64,
    pub relative_error: f64,
    pub consistent: bool,
}

fn parity(d: usize) -> f64 {
    if d % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

fn det_ratio(theta0: &Mat, theta2: &Mat) -> Result<f64, FilterError> {
    let lu = theta0.clone().lu();
    let det0 = lu.determinant();
    if det0.abs() < 1e-12 * max_abs(theta0).max(1.0).powi(theta0.nrows() as i32) {
        return Err(FilterError::Singular);
    }
    Ok(theta2.determinant() / det0)
}

pub fn det_constraint_check(spec: &ModelSpec, params: &Params) -> Result<DetReport, FilterError> {
    if spec.arch != Arch::LinearMpnn || spec.depth != 2 || params.embed.is_none() {
        return Err(FilterError::Unsupported(
            "the determinant constraint concerns depth-2 linear-mpnn with an embedding".into(),
        ));
    }
    let d = spec.width;
    if spec.input_dim != d || spec.output_dim != d {
        return Err(FilterError::Unsupported("square input, hidden and output dimensions required".into()));
    }
    let f = extract_filter(spec, params)?;
    let theta1_norm = max_abs(&f.theta[1]);
    if theta1_norm > 1e-8 {
        return Err(FilterError::Precondition(format!("||Theta_1|| = {theta1_norm:e} exceeds 1e-8")));
    }
    let det_ratio = det_ratio(&f.theta[0], &f.theta[2])?;
    let predicted = parity(d) * params.weight(1, Weight::W)?.determinant().powi(2);
    let relative_error = (det_ratio - predicted).abs() / predicted.abs().max(1e-300);
    let sign = det_ratio.signum();
    Ok(DetReport {
        d,
        theta1_norm,
        det_ratio,
        predicted,
        sign,
        expected_sign: parity(d),
        relative_error,
        consistent: sign == parity(d) && relative_error < 1e-8,
    })
}

/// Necessary sign condition for an embedding-layer linear-mpnn of depth 2 to
/// reach a target with `Theta_1 = 0`.
#[derive(Debug, Clone, Serialize)]
pub struct Reachability {
    pub d: usize,
    pub det_ratio: f64,
    pub required_sign: f64,
    pub sign_condition_met: bool,
}

pub fn embedding_target_reachability(target: &PolynomialFilter) -> Result<Reachability, FilterError> {
    if target.degree() != 2 || target.in_dim() != target.out_dim() {
        return Err(FilterError::Unsupported("square degree-2 targets only".into()));
    }
    if max_abs(&target.theta[1]) > 1e-8 {
        return Err(FilterError::Precondition("the sign condition assumes Theta_1 = 0".into()));
    }
    let d = target.in_dim();
    let det_ratio = det_ratio(&target.theta[0], &target.theta[2])?;
    Ok(Reachability {
        d,
        det_ratio,
        required_sign: parity(d),
        sign_condition_met: det_ratio == 0.0 || det_ratio.signum() == parity(d),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{generate, GenSpec};
    use crate::nn::{forward, init_params, readout_v, Readout};
    use rand::{Rng, SeedableRng};

    fn random(r: usize, c: usize, seed: u64) -> Mat {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        Mat::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn linear_mpnn_coefficients() {
        let spec = ModelSpec::new(Arch::LinearMpnn, 2, 3);
        let p = init_params(&spec, 1).unwrap();
        let f = extract_filter(&spec, &p).unwrap();
        let (w0, w1, t) = (p.weight(0, Weight::W).unwrap(), p.weight(1, Weight::W).unwrap(), &p.readout);
        assert!((&f.theta[0] - t).amax() < 1e-15);
        assert!((&f.theta[1] - t * (w0.transpose() + w1.transpose())).amax() < 1e-15);
        assert!((&f.theta[2] - t * w1.transpose() * w0.transpose()).amax() < 1e-15);
    }

    #[test]
    fn round_trip_all_linear() {
        let g = generate(&GenSpec::erdos_renyi(8, 0.4, 3)).unwrap();
        for arch in [Arch::LinearMpnn, Arch::LinearMpnnVn, Arch::PairnormVn] {
            for depth in 1..=3 {
                let spec = ModelSpec::new(arch, depth, 2).with_io(3, 2);
                let p = init_params(&spec, depth as u64).unwrap();
                let res = extract_filter(&spec, &p);
                if arch != Arch::LinearMpnn && depth == 3 {
                    assert!(matches!(res, Err(FilterError::GraphDependent { .. })));
                    continue;
                }
                let f = res.unwrap();
                let x = random(8, 3, 9);
                let direct = forward(&spec, &p, &g, &x).unwrap().output;
                assert!((apply_filter(&f, &g, &x).unwrap() - direct).amax() < 1e-12, "{arch} {depth}");
            }
        }
    }

    #[test]
    fn pairnorm_has_no_constant_term() {
        let spec = ModelSpec::new(Arch::PairnormVn, 2, 3);
        let f = extract_filter(&spec, &init_params(&spec, 4).unwrap()).unwrap();
        assert!(f.theta[0].amax() < 1e-15);
    }

    #[test]
    fn rejects_nonlinear_and_deep() {
        let spec = ModelSpec::new(Arch::Gcn, 2, 2);
        assert!(extract_filter(&spec, &init_params(&spec, 0).unwrap()).is_err());
        let spec = ModelSpec::new(Arch::LinearMpnn, 4, 2);
        assert!(extract_filter(&spec, &init_params(&spec, 0).unwrap()).is_err());
    }

    #[test]
    fn v_pool_hides_q() {
        let g = generate(&GenSpec::path(4)).unwrap();
        let spec = ModelSpec::new(Arch::LinearMpnnVn, 2, 2).with_readout(Readout::VPool);
        let mut p = init_params(&spec, 2).unwrap();
        p.set(1, Weight::Q, -Mat::identity(2, 2));
        p.readout = Mat::identity(2, 2);
        let v = PoolingVector::new(Vector::from_vec(vec![1.0, -1.0, 2.0, -2.0]));
        let vf = v_pool_extract(&spec, &p, &v).unwrap();
        assert_eq!(vf.v_terms.theta[0], Mat::identity(2, 2));
        assert!(vf.mean_terms.is_none());
        let x = random(4, 2, 1);
        let t = forward(&spec, &p, &g, &x).unwrap();
        let direct = readout_v(&p, &t, &v.vector()).unwrap();
        assert!((vf.apply(&g, &x, &v).unwrap() - direct).amax() < 1e-12);
    }

    #[test]
    fn v_pool_mean_reduces_to_standard() {
        let g = generate(&GenSpec::cycle(5)).unwrap();
        let spec = ModelSpec::new(Arch::LinearMpnnVn, 2, 2);
        let p = init_params(&spec, 3).unwrap();
        let v = PoolingVector::mean(5);
        let vf = v_pool_extract(&spec, &p, &v).unwrap();
        assert!(vf.collapse_mean().max_abs_diff(&extract_filter(&spec, &p).unwrap()) < 1e-15);
        let x = random(5, 2, 4);
        let direct = forward(&spec, &p, &g, &x).unwrap().output;
        assert!((vf.apply(&g, &x, &v).unwrap() - direct).amax() < 1e-12);
        let mut zero = p.clone();
        zero.readout = Mat::zeros(2, 2);
        let z = v_pool_extract(&spec, &zero, &v).unwrap();
        assert_eq!(z.collapse_mean().theta.iter().map(max_abs).fold(0.0, f64::max), 0.0);
    }

    #[test]
    fn determinant_sign_follows_parity() {
        for d in 2..=4 {
            let spec = ModelSpec::new(Arch::LinearMpnn, 2, d).with_embedding(true);
            let mut p = init_params(&spec, d as u64).unwrap();
            p.embed = Some(random(d, d, 10 + d as u64));
            let w1 = random(d, d, 20 + d as u64);
            p.set(0, Weight::W, -&w1);
            p.set(1, Weight::W, w1);
            let r = det_constraint_check(&spec, &p).unwrap();
            assert!(r.consistent, "{r:?}");
        }
    }

    #[test]
    fn identity_target_reachability() {
        for d in 2..=5 {
            let t = PolynomialFilter::new(vec![Mat::identity(d, d), Mat::zeros(d, d), Mat::identity(d, d)]).unwrap();
            let r = embedding_target_reachability(&t).unwrap();
            assert_eq!(r.sign_condition_met, d % 2 == 0);
        }
    }
}
