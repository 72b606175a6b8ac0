use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::model::{init_params, Activation, Arch, ModelSpec};
use super::train::{train, Sample, TrainConfig};
use super::ModelError;
use crate::graph::{generate, GenSpec};
use crate::linalg::{Mat, Vector};

/// Path graphs with i.i.d. `±1` scalar features; the target is the product of
/// the two endpoint features.
pub fn make_mixing_task(path_len: usize, samples: usize, seed: u64) -> Result<Vec<Sample>, ModelError> {
    if path_len < 3 {
        return Err(ModelError::InvalidSpec(format!("path length {path_len} < 3")));
    }
    let graph = generate(&GenSpec::path(path_len))
        .map_err(|e| ModelError::InvalidSpec(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..samples)
        .map(|_| {
            let x = Mat::from_fn(path_len, 1, |_, _| if rng.random_bool(0.5) { 1.0 } else { -1.0 });
            Sample {
                target: Vector::from_element(1, x[(0, 0)] * x[(path_len - 1, 0)]),
                graph: graph.clone(),
                features: x,
                pool: None,
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixingConfig {
    pub arch: Arch,
    pub path_len: usize,
    pub depth: usize,
    pub width: usize,
    pub samples: usize,
    pub seeds: usize,
    pub seed: u64,
    pub activation: Activation,
    pub train: TrainConfig,
}

impl Default for MixingConfig {
    fn default() -> Self {
        MixingConfig {
            arch: Arch::GcnVn,
            path_len: 12,
            depth: 3,
            width: 8,
            samples: 64,
            seeds: 5,
            seed: 0,
            activation: Activation::Relu,
            train: TrainConfig {
                steps: 3000,
                step_size: 0.3,
                ..TrainConfig::default()
            },
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MixingRow {
    pub seed: u64,
    pub initial_loss: f64,
    pub final_loss: f64,
}

/// Trains one model per seed on the mixing task and collects the losses. The
/// dataset is shared across seeds; seeds vary the initialisation and run in
/// parallel.
pub fn mixing_experiment(cfg: &MixingConfig) -> Result<Vec<MixingRow>, ModelError> {
    let data = make_mixing_task(cfg.path_len, cfg.samples, cfg.seed)?;
    let spec = ModelSpec::new(cfg.arch, cfg.depth, cfg.width)
        .with_io(1, 1)
        .with_embedding(true)
        .with_activation(if cfg.arch.is_linear() {
            Activation::Identity
        } else {
            cfg.activation
        });
    (0..cfg.seeds as u64)
        .into_par_iter()
        .map(|k| {
            let seed = cfg.seed.wrapping_add(k);
            let mut params = init_params(&spec, seed)?;
            let tc = TrainConfig {
                seed,
                ..cfg.train.clone()
            };
            let r = train(&spec, &mut params, &data, &tc)?;
            Ok(MixingRow {
                seed,
                initial_loss: r.initial_loss,
                final_loss: r.final_loss,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn targets_are_endpoint_products() {
        let data = make_mixing_task(5, 40, 3).unwrap();
        for s in &data {
            assert_eq!(s.target[0], s.features[(0, 0)] * s.features[(4, 0)]);
            assert!(s.features.iter().all(|v| v.abs() == 1.0));
        }
        assert!(data.iter().any(|s| s.target[0] == 1.0));
        assert!(data.iter().any(|s| s.target[0] == -1.0));
        assert!(make_mixing_task(2, 1, 0).is_err());
    }

    #[test]
    fn deterministic_per_seed() {
        let a = make_mixing_task(6, 10, 9).unwrap();
        let b = make_mixing_task(6, 10, 9).unwrap();
        assert!(a.iter().zip(&b).all(|(x, y)| x.features == y.features));
    }

    #[test]
    fn small_experiment_runs() {
        let cfg = MixingConfig {
            path_len: 4,
            depth: 2,
            width: 3,
            samples: 8,
            seeds: 2,
            train: TrainConfig {
                steps: 5,
                ..MixingConfig::default().train
            },
            ..MixingConfig::default()
        };
        let rows = mixing_experiment(&cfg).unwrap();
        assert_eq!(rows.len(), 2);
        assert!(rows.iter().all(|r| r.final_loss.is_finite()));
    }
}
