use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::forward::{forward, initial_tape_state, run_layers, TapeGraph, TapeParams};
use super::model::{Activation, ModelSpec, Params, Readout, Slot};
use super::tape::Tape;
use super::ModelError;
use crate::graph::Graph;
use crate::linalg::{Mat, Vector};

/// Finite-difference step for gradients and the pre-run probe.
pub const FD_STEP: f64 = 1e-5;
/// Relative tolerance of the probe comparing the two gradient routes.
pub const PROBE_TOLERANCE: f64 = 1e-4;
/// Directional derivatives smaller than this are compared in absolute terms,
/// since the central difference carries an `O(FD_STEP^2)` truncation error.
pub const PROBE_SCALE_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone)]
pub struct Sample {
    pub graph: Graph,
    pub features: Mat,
    pub target: Vector,
    /// Pooling vector for `v-pool` readout.
    pub pool: Option<Vector>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GradientMethod {
    ReverseAccumulation,
    FiniteDifference,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub steps: usize,
    pub step_size: f64,
    pub seed: u64,
    pub gradient: GradientMethod,
    /// Compare both gradient routes along a random direction before training.
    pub probe: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            steps: 1000,
            step_size: 0.05,
            seed: 0,
            gradient: GradientMethod::ReverseAccumulation,
            probe: true,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ProbeReport {
    pub reverse: f64,
    pub finite_difference: f64,
    pub relative_error: f64,
    /// Some relu pre-activation changes sign between the two shifted
    /// parameter sets, so the central difference straddles a kink and the
    /// comparison is not meaningful.
    pub kink_crossed: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainReport {
    /// Loss before each step, followed by the final loss.
    pub losses: Vec<f64>,
    pub initial_loss: f64,
    pub final_loss: f64,
    pub steps: usize,
    pub probe: Option<ProbeReport>,
}

fn sample_loss_on_tape(
    spec: &ModelSpec,
    params: &Params,
    s: &Sample,
    tape: &mut Tape,
) -> Result<(super::tape::Var, TapeParams), ModelError> {
    if s.target.len() != spec.output_dim {
        return Err(ModelError::Shape {
            what: "target".into(),
            expected: (spec.output_dim, 1),
            got: (s.target.len(), 1),
        });
    }
    let tg = TapeGraph::new(tape, spec, &s.graph);
    let tp = TapeParams::new(tape, params);
    let state = initial_tape_state(tape, spec, &tp, &s.features);
    let (states, _) = run_layers(tape, spec, &tp, &tg, 0, spec.depth, state)?;
    let h = states.last().expect("state").h;
    let pool = match (spec.readout, &s.pool) {
        (Readout::VPool, Some(v)) => tape.leaf(Mat::from_row_slice(1, v.len(), v.as_slice())),
        (Readout::VPool, None) => {
            return Err(ModelError::InvalidSpec("v-pool readout needs a pooling vector".into()))
        }
        (Readout::Mean, _) => tg.mean,
    };
    let pooled = tape.matmul(pool, h);
    let rt = tape.transpose(tp.readout);
    let y = tape.matmul(pooled, rt);
    let t = tape.leaf(Mat::from_row_slice(1, s.target.len(), s.target.as_slice()));
    let diff = tape.sub(y, t);
    let sq = tape.hadamard(diff, diff);
    let total = tape.sum(sq);
    Ok((total, tp))
}

fn validate(spec: &ModelSpec, params: &Params, data: &[Sample]) -> Result<(), ModelError> {
    spec.validate()?;
    params.check(spec)?;
    if data.is_empty() {
        return Err(ModelError::InvalidSpec("empty dataset".into()));
    }
    for s in data {
        if s.features.nrows() != s.graph.n() || s.features.ncols() != spec.input_dim {
            return Err(ModelError::Shape {
                what: "features".into(),
                expected: (s.graph.n(), spec.input_dim),
                got: s.features.shape(),
            });
        }
    }
    Ok(())
}

fn normaliser(spec: &ModelSpec, data: &[Sample]) -> f64 {
    1.0 / (data.len() * spec.output_dim) as f64
}

/// Mean squared error over samples and output channels.
pub fn loss(spec: &ModelSpec, params: &Params, data: &[Sample]) -> Result<f64, ModelError> {
    validate(spec, params, data)?;
    let parts: Vec<f64> = data
        .par_iter()
        .map(|s| {
            let mut tape = Tape::new();
            let (total, _) = sample_loss_on_tape(spec, params, s, &mut tape)?;
            Ok(tape.value(total)[(0, 0)])
        })
        .collect::<Result<_, ModelError>>()?;
    Ok(parts.iter().sum::<f64>() * normaliser(spec, data))
}

/// Loss and its gradient for every trainable slot, by reverse accumulation.
pub fn loss_and_gradient(
    spec: &ModelSpec,
    params: &Params,
    data: &[Sample],
) -> Result<(f64, Vec<(Slot, Mat)>), ModelError> {
    validate(spec, params, data)?;
    let slots = params.trainable_slots(spec);
    let parts: Vec<(f64, Vec<Mat>)> = data
        .par_iter()
        .map(|s| {
            let mut tape = Tape::new();
            let (total, tp) = sample_loss_on_tape(spec, params, s, &mut tape)?;
            let grads = tape.backward(total);
            let per_slot = slots
                .iter()
                .map(|&slot| {
                    let var = match slot {
                        Slot::Embed => tp.embed.expect("embedding var"),
                        Slot::Layer(l, w) => tp.layers[l][&w],
                        Slot::Readout => tp.readout,
                    };
                    let shape = params.slot(slot).shape();
                    grads
                        .get(var)
                        .cloned()
                        .unwrap_or_else(|| Mat::zeros(shape.0, shape.1))
                })
                .collect();
            Ok((tape.value(total)[(0, 0)], per_slot))
        })
        .collect::<Result<_, ModelError>>()?;
    let scale = normaliser(spec, data);
    let mut total = 0.0;
    let mut acc: Vec<Mat> = slots
        .iter()
        .map(|&s| {
            let (r, c) = params.slot(s).shape();
            Mat::zeros(r, c)
        })
        .collect();
    for (l, grads) in parts {
        total += l;
        for (a, g) in acc.iter_mut().zip(grads) {
            *a += g;
        }
    }
    Ok((
        total * scale,
        slots.into_iter().zip(acc.into_iter().map(|g| g * scale)).collect(),
    ))
}

/// Gradient by central differences with step [`FD_STEP`].
pub fn fd_gradient(
    spec: &ModelSpec,
    params: &Params,
    data: &[Sample],
) -> Result<Vec<(Slot, Mat)>, ModelError> {
    let mut out = Vec::new();
    let mut work = params.clone();
    for slot in params.trainable_slots(spec) {
        let (r, c) = params.slot(slot).shape();
        let mut g = Mat::zeros(r, c);
        for idx in 0..r * c {
            let orig = work.slot(slot)[idx];
            work.slot_mut(slot)[idx] = orig + FD_STEP;
            let up = loss(spec, &work, data)?;
            work.slot_mut(slot)[idx] = orig - FD_STEP;
            let down = loss(spec, &work, data)?;
            work.slot_mut(slot)[idx] = orig;
            g[idx] = (up - down) / (2.0 * FD_STEP);
        }
        out.push((slot, g));
    }
    Ok(out)
}

/// Directional derivative along a random unit-scale direction, computed both
/// ways.
pub fn gradient_probe(
    spec: &ModelSpec,
    params: &Params,
    data: &[Sample],
    seed: u64,
) -> Result<ProbeReport, ModelError> {
    let (_, grads) = loss_and_gradient(spec, params, data)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let dirs: Vec<(Slot, Mat)> = grads
        .iter()
        .map(|(s, g)| (*s, Mat::from_fn(g.nrows(), g.ncols(), |_, _| rng.random_range(-1.0..1.0))))
        .collect();
    let reverse: f64 = grads.iter().zip(&dirs).map(|((_, g), (_, u))| g.dot(u)).sum();
    let shifted = |sign: f64| {
        let mut p = params.clone();
        for (s, u) in &dirs {
            *p.slot_mut(*s) += u * (sign * FD_STEP);
        }
        p
    };
    let (up, down) = (shifted(1.0), shifted(-1.0));
    let finite_difference = (loss(spec, &up, data)? - loss(spec, &down, data)?) / (2.0 * FD_STEP);
    let kink_crossed = spec.effective_activation() == Activation::Relu
        && relu_pattern(spec, &up, data)? != relu_pattern(spec, &down, data)?;
    let scale = reverse.abs().max(finite_difference.abs());
    let diff = (reverse - finite_difference).abs();
    let relative_error = diff / scale.max(PROBE_SCALE_FLOOR);
    Ok(ProbeReport {
        reverse,
        finite_difference,
        relative_error,
        kink_crossed,
    })
}

/// Signs of the traced pre-activations over the data set.
fn relu_pattern(spec: &ModelSpec, params: &Params, data: &[Sample]) -> Result<Vec<bool>, ModelError> {
    let mut out = Vec::new();
    for s in data {
        let t = forward(spec, params, &s.graph, &s.features)?;
        for z in &t.pre_activation {
            out.extend(z.iter().map(|&v| v > 0.0));
        }
        for z in t.vn_pre_activation.iter().flatten() {
            out.extend(z.iter().map(|&v| v > 0.0));
        }
    }
    Ok(out)
}

/// Full-batch gradient descent on the mean squared error.
pub fn train(
    spec: &ModelSpec,
    params: &mut Params,
    data: &[Sample],
    cfg: &TrainConfig,
) -> Result<TrainReport, ModelError> {
    if cfg.steps == 0 || !(cfg.step_size > 0.0) {
        return Err(ModelError::InvalidSpec(
            "training needs steps >= 1 and a positive step size".into(),
        ));
    }
    validate(spec, params, data)?;
    let probe = if cfg.probe {
        let p = gradient_probe(spec, params, data, cfg.seed)?;
        if !p.kink_crossed && !(p.relative_error < PROBE_TOLERANCE) {
            return Err(ModelError::GradientMismatch {
                reverse: p.reverse,
                finite_difference: p.finite_difference,
            });
        }
        Some(p)
    } else {
        None
    };
    let mut losses = Vec::with_capacity(cfg.steps + 1);
    for step in 0..cfg.steps {
        let (l, grads) = match cfg.gradient {
            GradientMethod::ReverseAccumulation => loss_and_gradient(spec, params, data)?,
            GradientMethod::FiniteDifference => (loss(spec, params, data)?, fd_gradient(spec, params, data)?),
        };
        if !l.is_finite() {
            return Err(ModelError::Diverged { step, loss: l });
        }
        losses.push(l);
        for (slot, g) in grads {
            *params.slot_mut(slot) -= g * cfg.step_size;
        }
    }
    let final_loss = loss(spec, params, data)?;
    if !final_loss.is_finite() {
        return Err(ModelError::Diverged {
            step: cfg.steps,
            loss: final_loss,
        });
    }
    losses.push(final_loss);
    Ok(TrainReport {
        initial_loss: losses[0],
        final_loss,
        steps: cfg.steps,
        probe,
        losses,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{generate, GenSpec};
    use crate::nn::{forward, init_params, Activation, Arch, Weight};

    fn random(r: usize, c: usize, seed: u64) -> Mat {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Mat::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
    }

    fn dataset(spec: &ModelSpec, target_of: impl Fn(&Mat, &Graph) -> Vector) -> Vec<Sample> {
        let g = generate(&GenSpec::cycle(5)).unwrap();
        (0..6)
            .map(|k| {
                let x = random(5, spec.input_dim, k);
                Sample {
                    target: target_of(&x, &g),
                    graph: g.clone(),
                    features: x,
                    pool: None,
                }
            })
            .collect()
    }

    #[test]
    fn zero_target_zero_readout() {
        let spec = ModelSpec::new(Arch::Gcn, 2, 3);
        let mut p = init_params(&spec, 0).unwrap();
        p.readout = Mat::zeros(3, 3);
        let data = dataset(&spec, |_, _| Vector::zeros(3));
        assert_eq!(loss(&spec, &p, &data).unwrap(), 0.0);
    }

    #[test]
    fn reverse_matches_finite_differences() {
        for arch in Arch::ALL {
            let spec = ModelSpec::new(arch, 2, 2).with_io(2, 1).with_embedding(true);
            let p = init_params(&spec, 3).unwrap();
            let data = dataset(&spec, |x, _| Vector::from_element(1, x[(0, 0)] * x[(1, 1)]));
            let (_, rev) = loss_and_gradient(&spec, &p, &data).unwrap();
            let fd = fd_gradient(&spec, &p, &data).unwrap();
            for ((s1, a), (s2, b)) in rev.iter().zip(&fd) {
                assert_eq!(s1, s2);
                assert!((a - b).amax() < 1e-7, "{arch} {s1:?}");
            }
            assert!(gradient_probe(&spec, &p, &data, 1).unwrap().relative_error < PROBE_TOLERANCE);
        }
    }

    #[test]
    fn relu_kink_is_flagged_not_fatal() {
        // With W = 0 node 0 has pre-activation exactly 0, and any change of W
        // moves it to one side.
        let g = generate(&GenSpec::path(2)).unwrap();
        let spec = ModelSpec::new(Arch::Gcn, 1, 1).with_activation(Activation::Relu);
        let mut p = init_params(&spec, 0).unwrap();
        p.set(0, Weight::Omega, Mat::identity(1, 1));
        p.set(0, Weight::W, Mat::zeros(1, 1));
        let data = vec![Sample {
            graph: g,
            features: Mat::from_column_slice(2, 1, &[0.0, 1.0]),
            target: Vector::from_element(1, 1.0),
            pool: None,
        }];
        assert!(gradient_probe(&spec, &p, &data, 0).unwrap().kink_crossed);
        let tanh = spec.clone().with_activation(Activation::Tanh);
        assert!(!gradient_probe(&tanh, &p, &data, 0).unwrap().kink_crossed);
        let cfg = TrainConfig {
            steps: 3,
            ..TrainConfig::default()
        };
        assert!(train(&spec, &mut p, &data, &cfg).is_ok());
    }

    #[test]
    fn realizable_linear_target_is_learned() {
        let spec = ModelSpec::new(Arch::LinearMpnn, 1, 2);
        let mut teacher = init_params(&spec, 11).unwrap();
        teacher.set(0, Weight::W, Mat::zeros(2, 2));
        let data = dataset(&spec, |x, g| forward(&spec, &teacher, g, x).unwrap().output);
        let mut p = init_params(&spec, 12).unwrap();
        p.set(0, Weight::W, Mat::zeros(2, 2));
        let cfg = TrainConfig {
            steps: 5000,
            step_size: 0.5,
            ..TrainConfig::default()
        };
        let report = train(&spec, &mut p, &data, &cfg).unwrap();
        assert!(report.final_loss < 1e-6, "{}", report.final_loss);
        assert!(report.probe.unwrap().relative_error < PROBE_TOLERANCE);
    }

    #[test]
    fn finite_difference_training_runs() {
        let spec = ModelSpec::new(Arch::Gcn, 1, 2).with_activation(Activation::Identity);
        let mut p = init_params(&spec, 1).unwrap();
        let data = dataset(&spec, |x, _| Vector::from_vec(vec![x[(0, 0)], 0.0]));
        let cfg = TrainConfig {
            steps: 20,
            step_size: 0.1,
            gradient: GradientMethod::FiniteDifference,
            ..TrainConfig::default()
        };
        let r = train(&spec, &mut p, &data, &cfg).unwrap();
        assert!(r.final_loss < r.initial_loss);
        assert_eq!(r.losses.len(), 21);
    }

    #[test]
    fn divergence_is_reported() {
        let spec = ModelSpec::new(Arch::LinearMpnn, 3, 2);
        let mut p = init_params(&spec, 1).unwrap();
        let data = dataset(&spec, |_, _| Vector::from_element(2, 1.0));
        let cfg = TrainConfig {
            steps: 200,
            step_size: 1e6,
            probe: false,
            ..TrainConfig::default()
        };
        assert!(matches!(
            train(&spec, &mut p, &data, &cfg),
            Err(ModelError::Diverged { .. })
        ));
    }

    #[test]
    fn v_pool_training_needs_vector() {
        let spec = ModelSpec::new(Arch::Gcn, 1, 2).with_readout(Readout::VPool);
        let p = init_params(&spec, 1).unwrap();
        let mut data = dataset(&spec, |_, _| Vector::zeros(2));
        assert!(loss(&spec, &p, &data).is_err());
        for s in &mut data {
            s.pool = Some(Vector::from_vec(vec![1.0, -1.0, 0.0, 0.0, 0.0]));
        }
        assert!(loss(&spec, &p, &data).is_ok());
    }
}
