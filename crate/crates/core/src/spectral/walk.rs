use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::{SpectralDecomposition, SpectralError};
use crate::graph::Graph;

/// Per-walk step budget; walks exceeding it count as failures.
pub const MC_STEP_CAP: u64 = 10_000_000;

#[derive(Debug, Clone, Serialize)]
pub struct McEstimate {
    pub walks: usize,
    pub completed: usize,
    pub failures: usize,
    pub mean: f64,
    pub std_error: f64,
    pub seed: u64,
    pub step_cap: u64,
}

/// Commute time of the simple random walk on the adjacency as stored,
/// `vol(G) R(i, j)`. On an augmented graph the VN self-loop is a transition,
/// so the volume is `2 |E| + 2 n + 1` rather than `2 (|E| + n)`.
pub fn walk_commute_time(
    g: &Graph,
    spec: &SpectralDecomposition,
    i: usize,
    j: usize,
) -> Result<f64, SpectralError> {
    Ok(g.volume() * super::effective_resistance(spec, i, j)?)
}

/// Monte Carlo mean of the round trip `i -> j -> i`. Walk `k` draws from
/// stream `k` of a generator seeded with `seed`, so the result does not
/// depend on thread scheduling.
pub fn mc_commute_time(g: &Graph, i: usize, j: usize, walks: usize, seed: u64) -> McEstimate {
    let n = g.n();
    assert!(i < n && j < n, "node out of range");
    let adj = g.adjacency();
    let moves: Vec<Vec<usize>> = (0..n)
        .map(|u| (0..n).filter(|&v| adj[(u, v)] != 0.0).collect())
        .collect();
    let lengths: Vec<Option<u64>> = (0..walks)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k as u64);
            round_trip(&moves, i, j, &mut rng)
        })
        .collect();
    let done: Vec<f64> = lengths.iter().flatten().map(|&s| s as f64).collect();
    let completed = done.len();
    let mean = if completed > 0 {
        done.iter().sum::<f64>() / completed as f64
    } else {
        f64::NAN
    };
    let std_error = if completed > 1 {
        let var = done.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (completed - 1) as f64;
        (var / completed as f64).sqrt()
    } else {
        0.0
    };
    McEstimate {
        walks,
        completed,
        failures: walks - completed,
        mean,
        std_error,
        seed,
        step_cap: MC_STEP_CAP,
    }
}

fn round_trip(moves: &[Vec<usize>], i: usize, j: usize, rng: &mut ChaCha8Rng) -> Option<u64> {
    if i == j {
        return Some(0);
    }
    let mut steps = 0u64;
    let mut at = i;
    for target in [j, i] {
        while at != target {
            let options = &moves[at];
            if options.is_empty() || steps >= MC_STEP_CAP {
                return None;
            }
            at = options[rng.random_range(0..options.len())];
            steps += 1;
        }
    }
    Some(steps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{generate, GenSpec};
    use crate::spectral::laplacian_spectrum;

    #[test]
    fn p2_walk_is_deterministic() {
        let g = generate(&GenSpec::path(2)).unwrap();
        let est = mc_commute_time(&g, 0, 1, 1000, 5);
        assert_eq!(est.mean, 2.0);
        assert_eq!(est.std_error, 0.0);
        assert_eq!(est.failures, 0);
    }

    #[test]
    fn reproducible_per_seed() {
        let g = generate(&GenSpec::cycle(5)).unwrap();
        let a = mc_commute_time(&g, 0, 2, 2000, 9);
        let b = mc_commute_time(&g, 0, 2, 2000, 9);
        assert_eq!(a.mean, b.mean);
        let c = mc_commute_time(&g, 0, 2, 2000, 10);
        assert_ne!(a.mean, c.mean);
    }

    #[test]
    fn c4_close_to_spectral() {
        let g = generate(&GenSpec::cycle(4)).unwrap();
        let est = mc_commute_time(&g, 0, 2, 20_000, 1);
        assert!((est.mean - 8.0).abs() < 4.0 * est.std_error);
    }

    #[test]
    fn augmented_walk_volume() {
        let g = generate(&GenSpec::path(3)).unwrap().augment_with_vn().unwrap();
        let s = laplacian_spectrum(&g).unwrap();
        assert_eq!(g.volume(), (2 * 2 + 2 * 3 + 1) as f64);
        let walk = walk_commute_time(&g, &s, 0, 2).unwrap();
        let est = mc_commute_time(&g, 0, 2, 20_000, 3);
        assert!((est.mean - walk).abs() < 4.0 * est.std_error);
    }

    #[test]
    fn isolated_target_fails_gracefully() {
        let g = Graph::from_edges(3, &[(0, 1)]).unwrap();
        let est = mc_commute_time(&g, 2, 0, 3, 0);
        assert_eq!(est.failures, 3);
        assert!(est.mean.is_nan());
    }
}
