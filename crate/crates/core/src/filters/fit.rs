use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{apply_filter, construct_vn_weights, extract_filter, FilterError, PolynomialFilter};
use crate::graph::Graph;
use crate::linalg::Mat;
use crate::nn::{forward, init_params, loss, train, Arch, ModelError, ModelSpec, Params, Sample, Slot, TrainConfig};

pub const DEFAULT_PROBES: usize = 32;
/// Central-difference step for the residual Jacobian of the damped
/// Gauss-Newton fit.
const JACOBIAN_STEP: f64 = 1e-6;

/// Probe feature matrices, i.i.d. uniform on `[-1, 1]`.
pub fn probe_inputs(n: usize, d: usize, probes: usize, seed: u64) -> Vec<Mat> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..probes)
        .map(|_| Mat::from_fn(n, d, |_, _| rng.random_range(-1.0..=1.0)))
        .collect()
}

#[derive(Debug, Clone)]
pub enum FitInit {
    Random { seed: u64 },
    /// Start from [`construct_vn_weights`]; `linear-mpnn-vn` only.
    Constructive,
    Given(Params),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FitMethod {
    /// Plain gradient descent with the configured step size.
    GradientDescent,
    /// Damped Gauss-Newton; `steps` caps the number of iterations.
    LevenbergMarquardt,
}

#[derive(Debug, Clone, Serialize)]
pub struct FitReport {
    pub arch: Arch,
    pub method: FitMethod,
    pub probes: usize,
    /// Sum over probes of the squared distance between target and model
    /// outputs.
    pub residual: f64,
    pub initial_residual: f64,
    pub residual_curve: Vec<f64>,
    pub coefficients: PolynomialFilter,
    pub steps: usize,
}

/// Gradient-descent fit of a linear model of depth `target.degree()` to the
/// outputs of `target` on random probe inputs over `g`.
pub fn fit_filter(
    arch: Arch,
    target: &PolynomialFilter,
    g: &Graph,
    probes: usize,
    probe_seed: u64,
    init: FitInit,
    method: FitMethod,
    cfg: &TrainConfig,
) -> Result<FitReport, FilterError> {
    if !arch.is_linear() {
        return Err(FilterError::Unsupported(format!("{arch} is not a linear architecture")));
    }
    if probes == 0 || target.degree() == 0 {
        return Err(FilterError::Unsupported("fitting needs probes and a target of degree >= 1".into()));
    }
    let spec = ModelSpec::new(arch, target.degree(), target.in_dim()).with_io(target.in_dim(), target.out_dim());
    let mut params = match init {
        FitInit::Random { seed } => init_params(&spec, seed)?,
        FitInit::Given(p) => p,
        FitInit::Constructive => {
            if arch != Arch::LinearMpnnVn {
                return Err(FilterError::Unsupported("constructive start exists for linear-mpnn-vn only".into()));
            }
            let (built, p) = construct_vn_weights(target)?;
            if built != spec {
                return Err(FilterError::Unsupported("constructive start needs a square target".into()));
            }
            p
        }
    };
    let data: Vec<Sample> = probe_inputs(g.n(), target.in_dim(), probes, probe_seed)
        .into_iter()
        .map(|x| {
            Ok(Sample {
                target: apply_filter(target, g, &x)?,
                graph: g.clone(),
                features: x,
                pool: None,
            })
        })
        .collect::<Result<_, FilterError>>()?;
    let scale = (probes * target.out_dim()) as f64;
    let curve: Vec<f64> = if cfg.steps == 0 {
        vec![loss(&spec, &params, &data)?]
    } else if method == FitMethod::GradientDescent {
        train(&spec, &mut params, &data, cfg)?.losses
    } else {
        levenberg_marquardt(&spec, &mut params, &data, cfg.steps)?
            .into_iter()
            .map(|c| c / scale)
            .collect()
    };
    let residual_curve: Vec<f64> = curve.iter().map(|l| l * scale).collect();
    Ok(FitReport {
        arch,
        method,
        probes,
        residual: *residual_curve.last().expect("non-empty curve"),
        initial_residual: residual_curve[0],
        coefficients: extract_filter(&spec, &params)?,
        steps: cfg.steps,
        residual_curve,
    })
}

fn residuals(spec: &ModelSpec, params: &Params, data: &[Sample]) -> Result<Vec<f64>, ModelError> {
    let mut out = Vec::with_capacity(data.len() * spec.output_dim);
    for s in data {
        let y = forward(spec, params, &s.graph, &s.features)?.output;
        out.extend((y - &s.target).iter().copied());
    }
    Ok(out)
}

fn slot_entries(spec: &ModelSpec, params: &Params) -> Vec<(Slot, usize)> {
    params
        .trainable_slots(spec)
        .into_iter()
        .flat_map(|s| (0..params.slot(s).len()).map(move |i| (s, i)))
        .collect()
}

/// Minimises the sum of squared residuals and returns its value before each
/// iteration followed by the final value.
fn levenberg_marquardt(
    spec: &ModelSpec,
    params: &mut Params,
    data: &[Sample],
    max_iter: usize,
) -> Result<Vec<f64>, FilterError> {
    let entries = slot_entries(spec, params);
    let cost = |r: &[f64]| r.iter().map(|x| x * x).sum::<f64>();
    let mut r = residuals(spec, params, data)?;
    let mut curve = vec![cost(&r)];
    let mut mu = 1e-3;
    for step in 0..max_iter {
        let c0 = *curve.last().expect("non-empty");
        if c0 < 1e-30 {
            break;
        }
        let mut jac = Mat::zeros(r.len(), entries.len());
        for (col, &(slot, idx)) in entries.iter().enumerate() {
            let orig = params.slot(slot)[idx];
            params.slot_mut(slot)[idx] = orig + JACOBIAN_STEP;
            let up = residuals(spec, params, data)?;
            params.slot_mut(slot)[idx] = orig - JACOBIAN_STEP;
            let down = residuals(spec, params, data)?;
            params.slot_mut(slot)[idx] = orig;
            for row in 0..r.len() {
                jac[(row, col)] = (up[row] - down[row]) / (2.0 * JACOBIAN_STEP);
            }
        }
        let rv = crate::linalg::Vector::from_column_slice(&r);
        let jtj = jac.transpose() * &jac;
        let jtr = jac.transpose() * &rv;
        let mut accepted = false;
        while mu < 1e16 {
            let mut lhs = jtj.clone();
            for i in 0..lhs.nrows() {
                lhs[(i, i)] += mu * (jtj[(i, i)] + 1e-12);
            }
            let Some(delta) = lhs.lu().solve(&(-&jtr)) else {
                mu *= 4.0;
                continue;
            };
            let mut trial = params.clone();
            for (k, &(slot, idx)) in entries.iter().enumerate() {
                trial.slot_mut(slot)[idx] += delta[k];
            }
            let rt = residuals(spec, &trial, data)?;
            let ct = cost(&rt);
            if !ct.is_finite() {
                return Err(ModelError::Diverged { step, loss: ct }.into());
            }
            if ct < c0 {
                *params = trial;
                r = rt;
                curve.push(ct);
                mu = (mu / 3.0).max(1e-12);
                accepted = true;
                break;
            }
            mu *= 4.0;
        }
        if !accepted {
            break;
        }
    }
    Ok(curve)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{generate, GenSpec};

    #[test]
    fn realizable_target_is_fitted() {
        let g = generate(&GenSpec::path(4)).unwrap();
        let spec = ModelSpec::new(Arch::LinearMpnn, 1, 2);
        let teacher = init_params(&spec, 7).unwrap();
        let target = extract_filter(&spec, &teacher).unwrap();
        let cfg = TrainConfig {
            steps: 200,
            ..TrainConfig::default()
        };
        let r = fit_filter(Arch::LinearMpnn, &target, &g, 16, 1, FitInit::Random { seed: 3 }, FitMethod::LevenbergMarquardt, &cfg).unwrap();
        assert!(r.residual < 1e-8, "{}", r.residual);
        assert!(r.residual_curve.windows(2).all(|w| w[1] <= w[0]));
        let gd = TrainConfig {
            steps: 2000,
            step_size: 0.2,
            ..TrainConfig::default()
        };
        let slow = fit_filter(Arch::LinearMpnn, &target, &g, 16, 1, FitInit::Random { seed: 3 }, FitMethod::GradientDescent, &gd)
            .unwrap();
        assert!(slow.residual < slow.initial_residual);
    }

    #[test]
    fn constructive_start_is_exact() {
        let g = generate(&GenSpec::complete(3)).unwrap();
        let target = PolynomialFilter::new(vec![Mat::zeros(2, 2), Mat::zeros(2, 2), Mat::identity(2, 2)]).unwrap();
        let cfg = TrainConfig {
            steps: 10,
            step_size: 0.01,
            ..TrainConfig::default()
        };
        let r = fit_filter(Arch::LinearMpnnVn, &target, &g, 8, 0, FitInit::Constructive, FitMethod::GradientDescent, &cfg).unwrap();
        assert!(r.residual < 1e-20);
        assert!(fit_filter(Arch::LinearMpnn, &target, &g, 8, 0, FitInit::Constructive, FitMethod::GradientDescent, &cfg).is_err());
        assert!(fit_filter(Arch::Gcn, &target, &g, 8, 0, FitInit::Random { seed: 0 }, FitMethod::GradientDescent, &cfg).is_err());
    }

    #[test]
    fn zero_steps_evaluates() {
        let g = generate(&GenSpec::path(3)).unwrap();
        let target = PolynomialFilter::new(vec![Mat::identity(1, 1), Mat::zeros(1, 1)]).unwrap();
        let cfg = TrainConfig {
            steps: 0,
            ..TrainConfig::default()
        };
        let r = fit_filter(Arch::PairnormVn, &target, &g, 4, 0, FitInit::Random { seed: 0 }, FitMethod::GradientDescent, &cfg).unwrap();
        assert_eq!(r.residual_curve.len(), 1);
        assert!(r.residual > 0.0);
    }
}
