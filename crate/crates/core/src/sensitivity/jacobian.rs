use rayon::prelude::*;
use serde::Serialize;

use super::attention::{attention_matrix, attention_output};
use super::{JacobianMethod, JacobianReport, SensitivityError};
use crate::graph::{Graph, UNREACHABLE};
use crate::linalg::{Mat, Vector};
use crate::nn::tape::sigmoid;
use crate::nn::{forward, forward_from, Activation, ForwardTrace, MeanAugment, ModelSpec, Params, Weight};

/// Pre-activations closer than this to zero trigger a relu warning.
pub const KINK_MARGIN: f64 = 1e-6;
/// Blocks whose max pairwise difference stays below this count as identical.
pub const HOMOGENEITY_TOLERANCE: f64 = 1e-9;

fn check_nodes(g: &Graph, i: usize, k: usize) -> Result<(), SensitivityError> {
    let n = g.n();
    if i >= n || k >= n {
        return Err(SensitivityError::InvalidInput(format!("nodes ({i}, {k}) out of range for n = {n}")));
    }
    Ok(())
}

fn check_span(spec: &ModelSpec, layer: usize, span: usize) -> Result<(), SensitivityError> {
    if !(1..=2).contains(&span) {
        return Err(SensitivityError::InvalidInput(format!("span {span} not in {{1, 2}}")));
    }
    if layer + span > spec.depth {
        return Err(SensitivityError::InvalidInput(format!(
            "layers {layer}..{} exceed depth {}",
            layer + span,
            spec.depth
        )));
    }
    Ok(())
}

fn distance(g: &Graph, i: usize, k: usize) -> usize {
    g.bfs_distance(i)[k]
}

fn kink_warnings(spec: &ModelSpec, trace: &ForwardTrace, layers: std::ops::Range<usize>) -> Vec<String> {
    if spec.effective_activation() != Activation::Relu {
        return Vec::new();
    }
    let mut out = Vec::new();
    for l in layers {
        let near = trace.pre_activation[l].iter().any(|z| z.abs() < KINK_MARGIN)
            || trace.vn_pre_activation[l]
                .as_ref()
                .is_some_and(|v| v.iter().any(|z| z.abs() < KINK_MARGIN));
        if near {
            out.push(format!("layer {l}: relu pre-activation within {KINK_MARGIN:e} of the kink"));
        }
    }
    out
}

fn fd_block_from_trace(
    spec: &ModelSpec,
    params: &Params,
    g: &Graph,
    trace: &ForwardTrace,
    layer: usize,
    i: usize,
    k: usize,
    span: usize,
    eps: f64,
) -> Result<Mat, SensitivityError> {
    let d = spec.width;
    let state = trace.state(layer);
    let cols: Vec<Vector> = (0..d)
        .into_par_iter()
        .map(|b| {
            let eval = |delta: f64| -> Result<Vector, SensitivityError> {
                let mut st = state.clone();
                st.h[(k, b)] += delta;
                let outs = forward_from(spec, params, g, layer, span, &st)?;
                Ok(outs.last().expect("span >= 1").row(i).transpose())
            };
            Ok((eval(eps)? - eval(-eps)?) / (2.0 * eps))
        })
        .collect::<Result<_, SensitivityError>>()?;
    Ok(Mat::from_columns(&cols))
}

/// Central-difference block `d h_i^(layer+span) / d h_k^(layer)` on the trace
/// of input features `x`.
#[allow(clippy::too_many_arguments)]
pub fn fd_jacobian(
    spec: &ModelSpec,
    params: &Params,
    g: &Graph,
    x: &Mat,
    layer: usize,
    i: usize,
    k: usize,
    span: usize,
    eps: f64,
) -> Result<JacobianReport, SensitivityError> {
    if !(eps > 0.0) {
        return Err(SensitivityError::InvalidInput(format!("step {eps} must be positive")));
    }
    check_nodes(g, i, k)?;
    check_span(spec, layer, span)?;
    let trace = forward(spec, params, g, x)?;
    let block = fd_block_from_trace(spec, params, g, &trace, layer, i, k, span, eps)?;
    Ok(JacobianReport {
        i,
        k,
        layer_from: layer,
        layer_to: layer + span,
        block,
        method: JacobianMethod::FiniteDifference,
        fd_residual: None,
        warnings: kink_warnings(spec, &trace, layer..layer + span),
    })
}

fn sigma_prime(act: Activation, z: impl Iterator<Item = f64>) -> Vector {
    Vector::from_vec(z.map(|v| act.derivative(v)).collect())
}

fn row_vec(m: &Mat, r: usize) -> Vector {
    m.row(r).transpose()
}

fn no_mean_augment(spec: &ModelSpec) -> Result<(), SensitivityError> {
    if spec.mean_augment != MeanAugment::None {
        return Err(SensitivityError::NotApplicable(
            "closed forms assume no mean augmentation".into(),
        ));
    }
    Ok(())
}

/// Span-2 block through the virtual node,
/// `diag(s'(z_i)) diag(s'(z_vn)) W_vn / n~`, valid when `dist(i, k) > 2`.
pub fn analytic_jacobian_vn(
    spec: &ModelSpec,
    params: &Params,
    g: &Graph,
    x: &Mat,
    layer: usize,
    i: usize,
    k: usize,
) -> Result<JacobianReport, SensitivityError> {
    if !spec.arch.has_vn_state() {
        return Err(SensitivityError::NotApplicable(format!("{} has no virtual node state", spec.arch)));
    }
    no_mean_augment(spec)?;
    check_nodes(g, i, k)?;
    check_span(spec, layer, 2)?;
    let dist = distance(g, i, k);
    if dist <= 2 {
        return Err(SensitivityError::NotApplicable(format!(
            "nodes {i} and {k} are {dist} hops apart; the formula needs more than 2"
        )));
    }
    let trace = forward(spec, params, g, x)?;
    let act = spec.effective_activation();
    let s_i = sigma_prime(act, trace.pre_activation[layer + 1].row(i).iter().copied());
    let s_vn = sigma_prime(
        act,
        trace.vn_pre_activation[layer].as_ref().expect("vn pre-activation").iter().copied(),
    );
    let w_vn = params.weight(layer, Weight::WVn)?;
    let nt = spec.vn_normalizer.value(g.n());
    let block = Mat::from_diagonal(&s_i) * Mat::from_diagonal(&s_vn) * w_vn / nt;
    Ok(JacobianReport {
        i,
        k,
        layer_from: layer,
        layer_to: layer + 2,
        block,
        method: JacobianMethod::Analytic,
        fd_residual: None,
        warnings: kink_warnings(spec, &trace, layer..layer + 2),
    })
}

/// Span-1 block of a VN_G layer,
/// `Q [diag(s'(z_k))(Omega + sum_u d1 psi_ku) + sum_u diag(s'(z_u)) d2 psi_uk] / n~`
/// over `u` in `N(k)`, valid when `dist(i, k) >= 2`.
pub fn analytic_jacobian_vng(
    spec: &ModelSpec,
    params: &Params,
    g: &Graph,
    x: &Mat,
    layer: usize,
    i: usize,
    k: usize,
) -> Result<JacobianReport, SensitivityError> {
    if !spec.arch.is_vng() {
        return Err(SensitivityError::NotApplicable(format!("{} is not a VN_G model", spec.arch)));
    }
    no_mean_augment(spec)?;
    check_nodes(g, i, k)?;
    check_span(spec, layer, 1)?;
    let dist = distance(g, i, k);
    if dist < 2 {
        return Err(SensitivityError::NotApplicable(format!(
            "node {k} is inside the neighbourhood of {i}"
        )));
    }
    let trace = forward(spec, params, g, x)?;
    let act = spec.effective_activation();
    let h = &trace.hidden[layer];
    let z = &trace.pre_activation[layer];
    let sp = |u: usize| Mat::from_diagonal(&sigma_prime(act, z.row(u).iter().copied()));
    let omega = params.weight(layer, Weight::Omega)?;
    let q = params.weight(layer, Weight::Q)?;
    let mut inner = omega.clone();
    let mut outer = Mat::zeros(spec.width, spec.width);
    if spec.arch.is_gated() {
        let w1 = params.weight(layer, Weight::W1)?;
        let w2 = params.weight(layer, Weight::W2)?;
        let w3 = params.weight(layer, Weight::W3)?;
        let hk = row_vec(h, k);
        for &u in g.neighbors(k) {
            let hu = row_vec(h, u);
            // Receiver k, sender u.
            let logit = w2 * &hk + w3 * &hu;
            let gate_d = logit.map(|t| sigmoid(t) * (1.0 - sigmoid(t)));
            inner += Mat::from_diagonal(&(w1 * &hu).component_mul(&gate_d)) * w2;
            // Receiver u, sender k.
            let logit = w2 * &hu + w3 * &hk;
            let gate = logit.map(sigmoid);
            let gate_d = logit.map(|t| sigmoid(t) * (1.0 - sigmoid(t)));
            let d2 = Mat::from_diagonal(&gate) * w1 + Mat::from_diagonal(&(w1 * &hk).component_mul(&gate_d)) * w3;
            outer += sp(u) * d2;
        }
    } else {
        let w = params.weight(layer, Weight::W)?;
        for &u in g.neighbors(k) {
            outer += sp(u) * w / (g.degree(u) * g.degree(k)).sqrt();
        }
    }
    let nt = spec.vn_normalizer.value(g.n());
    let block = q * (sp(k) * inner + outer) / nt;
    Ok(JacobianReport {
        i,
        k,
        layer_from: layer,
        layer_to: layer + 1,
        block,
        method: JacobianMethod::Analytic,
        fd_residual: None,
        warnings: kink_warnings(spec, &trace, layer..layer + 1),
    })
}

/// Block `d Att_i / d h_k` of the attention sublayer at `layer` with node
/// states `h`. With `M = W_Q W_K^T / sqrt(d)`, `V = W_V^T` and
/// `g_l = s_il (V h_l - Att_i)`:
/// `s_ik V + g_k (M^T h_i)^T + [i = k] sum_l g_l (M h_l)^T`.
pub fn analytic_jacobian_attention(
    params: &Params,
    layer: usize,
    h: &Mat,
    i: usize,
    k: usize,
) -> Result<JacobianReport, SensitivityError> {
    let n = h.nrows();
    if i >= n || k >= n {
        return Err(SensitivityError::InvalidInput(format!("nodes ({i}, {k}) out of range for n = {n}")));
    }
    let s = attention_matrix(params, layer, h)?.scores;
    let d = h.ncols();
    let m = params.weight(layer, Weight::WQ)? * params.weight(layer, Weight::WK)?.transpose() / (d as f64).sqrt();
    let v = params.weight(layer, Weight::WV)?.transpose();
    let vh: Vec<Vector> = (0..n).map(|l| &v * row_vec(h, l)).collect();
    let att: Vector = (0..n).fold(Vector::zeros(d), |acc, l| acc + &vh[l] * s[(i, l)]);
    let gl = |l: usize| (&vh[l] - &att) * s[(i, l)];
    let hi = row_vec(h, i);
    let mut block = &v * s[(i, k)] + gl(k) * (m.transpose() * &hi).transpose();
    if i == k {
        for l in 0..n {
            block += gl(l) * (&m * row_vec(h, l)).transpose();
        }
    }
    Ok(JacobianReport {
        i,
        k,
        layer_from: layer,
        layer_to: layer + 1,
        block,
        method: JacobianMethod::Analytic,
        fd_residual: None,
        warnings: Vec::new(),
    })
}

/// Central-difference oracle for [`analytic_jacobian_attention`].
pub fn fd_attention_jacobian(
    params: &Params,
    layer: usize,
    h: &Mat,
    i: usize,
    k: usize,
    eps: f64,
) -> Result<JacobianReport, SensitivityError> {
    if !(eps > 0.0) {
        return Err(SensitivityError::InvalidInput(format!("step {eps} must be positive")));
    }
    let n = h.nrows();
    if i >= n || k >= n {
        return Err(SensitivityError::InvalidInput(format!("nodes ({i}, {k}) out of range for n = {n}")));
    }
    let cols = (0..h.ncols())
        .map(|b| {
            let eval = |delta: f64| -> Result<Vector, SensitivityError> {
                let mut hp = h.clone();
                hp[(k, b)] += delta;
                Ok(row_vec(&attention_output(params, layer, &hp)?, i))
            };
            Ok((eval(eps)? - eval(-eps)?) / (2.0 * eps))
        })
        .collect::<Result<Vec<_>, SensitivityError>>()?;
    Ok(JacobianReport {
        i,
        k,
        layer_from: layer,
        layer_to: layer + 1,
        block: Mat::from_columns(&cols),
        method: JacobianMethod::FiniteDifference,
        fd_residual: None,
        warnings: Vec::new(),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct HomogeneityReport {
    pub i: usize,
    pub layer: usize,
    pub span: usize,
    /// Nodes `k` at distance at least this from `i` are compared.
    pub min_distance: usize,
    pub eligible: Vec<usize>,
    /// Largest max-abs difference between any two blocks.
    pub max_pairwise_diff: f64,
    pub max_block_abs: f64,
    pub homogeneous: bool,
    /// No node was far enough from `i`.
    pub empty: bool,
}

/// Compares finite-difference blocks `d h_i / d h_k` over every `k` beyond
/// the local receptive field: span 2 and distance above 2 for models with a
/// virtual node state, span 1 and distance at least 2 otherwise.
pub fn homogeneity_report(
    spec: &ModelSpec,
    params: &Params,
    g: &Graph,
    x: &Mat,
    layer: usize,
    i: usize,
    eps: f64,
) -> Result<HomogeneityReport, SensitivityError> {
    let (span, min_distance) = if spec.arch.has_vn_state() { (2, 3) } else { (1, 2) };
    check_nodes(g, i, i)?;
    check_span(spec, layer, span)?;
    let trace = forward(spec, params, g, x)?;
    let dist = g.bfs_distance(i);
    let eligible: Vec<usize> = (0..g.n())
        .filter(|&k| dist[k] == UNREACHABLE || dist[k] >= min_distance)
        .collect();
    let blocks: Vec<Mat> = eligible
        .par_iter()
        .map(|&k| fd_block_from_trace(spec, params, g, &trace, layer, i, k, span, eps))
        .collect::<Result<_, _>>()?;
    let mut max_pairwise_diff: f64 = 0.0;
    for a in 0..blocks.len() {
        for b in a + 1..blocks.len() {
            max_pairwise_diff = max_pairwise_diff.max(crate::linalg::max_abs_diff(&blocks[a], &blocks[b]));
        }
    }
    let max_block_abs = blocks.iter().map(crate::linalg::max_abs).fold(0.0, f64::max);
    let empty = eligible.is_empty();
    Ok(HomogeneityReport {
        i,
        layer,
        span,
        min_distance,
        homogeneous: !empty && max_pairwise_diff < HOMOGENEITY_TOLERANCE,
        empty,
        eligible,
        max_pairwise_diff,
        max_block_abs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{generate, GenSpec};
    use crate::nn::{init_params, Arch};
    use rand::{Rng, SeedableRng};

    fn features(n: usize, d: usize, seed: u64) -> Mat {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        Mat::from_fn(n, d, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn linear_span_one_is_a_w() {
        let g = generate(&GenSpec::path(4)).unwrap();
        let spec = ModelSpec::new(Arch::LinearMpnn, 1, 3);
        let p = init_params(&spec, 2).unwrap();
        let r = fd_jacobian(&spec, &p, &g, &features(4, 3, 1), 0, 1, 2, 1, 1e-5).unwrap();
        // Row form H + A H W gives dh_i/dh_k = A_ik W^T.
        let expected = p.weight(0, Weight::W).unwrap().transpose();
        assert!((r.block - expected).amax() < 1e-9);
    }

    #[test]
    fn locality_of_plain_gcn() {
        let g = generate(&GenSpec::path(6)).unwrap();
        let spec = ModelSpec::new(Arch::Gcn, 3, 2);
        let p = init_params(&spec, 3).unwrap();
        let x = features(6, 2, 4);
        assert_eq!(fd_jacobian(&spec, &p, &g, &x, 0, 0, 2, 1, 1e-5).unwrap().block.amax(), 0.0);
        assert_eq!(fd_jacobian(&spec, &p, &g, &x, 1, 0, 3, 2, 1e-5).unwrap().block.amax(), 0.0);
        assert!(fd_jacobian(&spec, &p, &g, &x, 1, 0, 2, 2, 1e-5).unwrap().block.amax() > 0.0);
    }

    #[test]
    fn vn_block_matches_fd() {
        let g = generate(&GenSpec::path(7)).unwrap();
        for arch in [Arch::GcnVn, Arch::GatedgcnVn] {
            let spec = ModelSpec::new(arch, 3, 3);
            let p = init_params(&spec, 5).unwrap();
            let x = features(7, 3, 6);
            let mut a = analytic_jacobian_vn(&spec, &p, &g, &x, 1, 0, 5).unwrap();
            let mut f = fd_jacobian(&spec, &p, &g, &x, 1, 0, 5, 2, 1e-5).unwrap();
            assert!(a.compare(&mut f) < 1e-5, "{arch}");
            let b = analytic_jacobian_vn(&spec, &p, &g, &x, 1, 0, 6).unwrap();
            assert!((a.block - b.block).amax() < 1e-12);
        }
    }

    #[test]
    fn vn_identity_activation_collapses() {
        let g = generate(&GenSpec::path(5)).unwrap();
        let spec = ModelSpec::new(Arch::GcnVn, 2, 2).with_activation(Activation::Identity);
        let p = init_params(&spec, 1).unwrap();
        let r = analytic_jacobian_vn(&spec, &p, &g, &features(5, 2, 2), 0, 0, 4).unwrap();
        assert!((r.block - p.weight(0, Weight::WVn).unwrap() / 5.0).amax() < 1e-15);
    }

    #[test]
    fn vn_rejects_near_nodes() {
        let g = generate(&GenSpec::path(5)).unwrap();
        let spec = ModelSpec::new(Arch::GcnVn, 2, 2);
        let p = init_params(&spec, 1).unwrap();
        let e = analytic_jacobian_vn(&spec, &p, &g, &features(5, 2, 2), 0, 0, 2).unwrap_err();
        assert!(matches!(e, SensitivityError::NotApplicable(_)));
    }

    #[test]
    fn vng_block_matches_fd() {
        let g = generate(&GenSpec::grid(3, 3)).unwrap();
        for arch in [Arch::GcnVng, Arch::GatedgcnVng] {
            let spec = ModelSpec::new(arch, 2, 3);
            let p = init_params(&spec, 7).unwrap();
            let x = features(9, 3, 8);
            let mut a = analytic_jacobian_vng(&spec, &p, &g, &x, 1, 0, 4).unwrap();
            let mut f = fd_jacobian(&spec, &p, &g, &x, 1, 0, 4, 1, 1e-5).unwrap();
            assert!(a.compare(&mut f) < 1e-5, "{arch}");
            assert!(analytic_jacobian_vng(&spec, &p, &g, &x, 1, 0, 1).is_err());
        }
    }

    #[test]
    fn attention_matches_fd() {
        let spec = ModelSpec::new(Arch::GpsLite, 1, 3);
        let p = init_params(&spec, 9).unwrap();
        let h = features(5, 3, 10);
        for (i, k) in [(0, 0), (0, 3), (2, 1)] {
            let a = analytic_jacobian_attention(&p, 0, &h, i, k).unwrap();
            let f = fd_attention_jacobian(&p, 0, &h, i, k, 1e-5).unwrap();
            assert!((a.block - f.block).amax() < 1e-8);
        }
    }

    #[test]
    fn attention_special_cases() {
        let spec = ModelSpec::new(Arch::GpsLite, 1, 2);
        let mut p = init_params(&spec, 9).unwrap();
        let wv = p.weight(0, Weight::WV).unwrap().transpose();
        let r = analytic_jacobian_attention(&p, 0, &features(1, 2, 0), 0, 0).unwrap();
        assert!((r.block - &wv).amax() < 1e-14);
        p.set(0, Weight::WQ, Mat::zeros(2, 2));
        let r = analytic_jacobian_attention(&p, 0, &features(4, 2, 1), 0, 2).unwrap();
        assert!((r.block - &wv / 4.0).amax() < 1e-14);
    }

    #[test]
    fn homogeneity_cases() {
        let g = generate(&GenSpec::path(7)).unwrap();
        let x = features(7, 2, 3);
        let spec = ModelSpec::new(Arch::GcnVn, 2, 2);
        let p = init_params(&spec, 4).unwrap();
        let r = homogeneity_report(&spec, &p, &g, &x, 0, 0, 1e-5).unwrap();
        assert_eq!(r.eligible, vec![3, 4, 5, 6]);
        assert!(r.homogeneous && r.max_block_abs > 1e-6, "{r:?}");
        let spec = ModelSpec::new(Arch::GpsLite, 1, 2);
        let p = init_params(&spec, 4).unwrap();
        assert!(!homogeneity_report(&spec, &p, &g, &x, 0, 0, 1e-5).unwrap().homogeneous);
        let k3 = generate(&GenSpec::complete(3)).unwrap();
        let r = homogeneity_report(&spec, &p, &k3, &features(3, 2, 1), 0, 0, 1e-5).unwrap();
        assert!(r.empty && !r.homogeneous);
    }

    #[test]
    fn relu_kink_warning() {
        let g = generate(&GenSpec::path(3)).unwrap();
        let spec = ModelSpec::new(Arch::Gcn, 1, 2).with_activation(Activation::Relu);
        let p = init_params(&spec, 0).unwrap();
        let r = fd_jacobian(&spec, &p, &g, &Mat::zeros(3, 2), 0, 0, 1, 1, 1e-5).unwrap();
        assert_eq!(r.warnings.len(), 1);
    }
}
