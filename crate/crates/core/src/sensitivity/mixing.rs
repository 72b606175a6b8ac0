use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::SensitivityError;
use crate::graph::Graph;
use crate::linalg::{Mat, Vector};
use crate::nn::{forward, ModelSpec, Params};

#[derive(Debug, Clone, Serialize)]
pub struct MixingEstimate {
    pub i: usize,
    pub j: usize,
    /// Feature channels of `i` and `j` and the output channel attaining the
    /// maximum.
    pub alpha: usize,
    pub beta: usize,
    pub output: usize,
    pub value: f64,
    pub samples: usize,
    pub eps: f64,
    pub seed: u64,
    pub note: &'static str,
}

/// Largest `|d^2 y_c / dh_i^a dh_j^b|` over `samples` feature matrices drawn
/// uniformly from `[-1, 1]^(n x d)`, all channel pairs and output channels,
/// by the central mixed second difference. A sampled lower bound of the
/// supremum over all inputs.
#[allow(clippy::too_many_arguments)]
pub fn mixing_estimate<F>(
    f: F,
    n: usize,
    d: usize,
    i: usize,
    j: usize,
    samples: usize,
    eps: f64,
    seed: u64,
) -> Result<MixingEstimate, SensitivityError>
where
    F: Fn(&Mat) -> Result<Vector, SensitivityError>,
{
    if samples == 0 || !(eps > 0.0) || i >= n || j >= n || d == 0 {
        return Err(SensitivityError::InvalidInput(
            "mixing needs samples >= 1, eps > 0 and nodes in range".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best = MixingEstimate {
        i,
        j,
        alpha: 0,
        beta: 0,
        output: 0,
        value: 0.0,
        samples,
        eps,
        seed,
        note: "sampled lower bound of the supremum over inputs",
    };
    for _ in 0..samples {
        let h = Mat::from_fn(n, d, |_, _| rng.random_range(-1.0..=1.0));
        for a in 0..d {
            for b in 0..d {
                let eval = |sa: f64, sb: f64| {
                    let mut hp = h.clone();
                    hp[(i, a)] += sa * eps;
                    hp[(j, b)] += sb * eps;
                    f(&hp)
                };
                let mixed = (eval(1.0, 1.0)? - eval(1.0, -1.0)? - eval(-1.0, 1.0)? + eval(-1.0, -1.0)?)
                    / (4.0 * eps * eps);
                for (c, v) in mixed.iter().enumerate() {
                    if v.abs() > best.value {
                        best.value = v.abs();
                        best.alpha = a;
                        best.beta = b;
                        best.output = c;
                    }
                }
            }
        }
    }
    Ok(best)
}

/// The graph-level function `X -> Theta~ Mean(H^(m))` of a model on `g`.
pub fn model_function<'a>(
    spec: &'a ModelSpec,
    params: &'a Params,
    g: &'a Graph,
) -> impl Fn(&Mat) -> Result<Vector, SensitivityError> + 'a {
    move |x| Ok(forward(spec, params, g, x)?.output)
}
