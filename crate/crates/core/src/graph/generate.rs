use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Graph, GraphError};

/// Resampling budget for connected Erdős–Rényi draws.
pub const ER_MAX_ATTEMPTS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GenKind {
    Path,
    Cycle,
    Star,
    Complete,
    Grid,
    ErdosRenyi,
}

/// Generator parameters. `n` is the node count for every family except
/// `grid`, which uses `rows x cols`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenSpec {
    pub kind: GenKind,
    pub n: usize,
    #[serde(default)]
    pub rows: usize,
    #[serde(default)]
    pub cols: usize,
    #[serde(default)]
    pub p: f64,
    #[serde(default)]
    pub seed: u64,
}

impl GenSpec {
    fn simple(kind: GenKind, n: usize) -> Self {
        GenSpec {
            kind,
            n,
            rows: 0,
            cols: 0,
            p: 0.0,
            seed: 0,
        }
    }

    pub fn path(n: usize) -> Self {
        Self::simple(GenKind::Path, n)
    }

    pub fn cycle(n: usize) -> Self {
        Self::simple(GenKind::Cycle, n)
    }

    /// Star with one hub (node 0) and `n - 1` leaves.
    pub fn star(n: usize) -> Self {
        Self::simple(GenKind::Star, n)
    }

    pub fn complete(n: usize) -> Self {
        Self::simple(GenKind::Complete, n)
    }

    pub fn grid(rows: usize, cols: usize) -> Self {
        GenSpec {
            rows,
            cols,
            ..Self::simple(GenKind::Grid, rows * cols)
        }
    }

    pub fn erdos_renyi(n: usize, p: f64, seed: u64) -> Self {
        GenSpec {
            p,
            seed,
            ..Self::simple(GenKind::ErdosRenyi, n)
        }
    }

    fn validate(&self) -> Result<(), GraphError> {
        let bad = |m: String| Err(GraphError::InvalidSpec(m));
        match self.kind {
            GenKind::Grid => {
                if self.rows == 0 || self.cols == 0 || self.rows * self.cols < 2 {
                    return bad(format!("grid {}x{} needs at least 2 nodes", self.rows, self.cols));
                }
            }
            GenKind::Cycle if self.n < 3 => return bad(format!("cycle needs n >= 3, got {}", self.n)),
            _ if self.n < 2 => return bad(format!("size must be >= 2, got {}", self.n)),
            GenKind::ErdosRenyi if !(self.p > 0.0 && self.p <= 1.0) => {
                return bad(format!("edge probability must lie in (0, 1], got {}", self.p))
            }
            _ => {}
        }
        Ok(())
    }
}

/// Builds the requested graph. Erdős–Rényi graphs are redrawn from a single
/// seeded stream until connected.
pub fn generate(spec: &GenSpec) -> Result<Graph, GraphError> {
    spec.validate()?;
    let n = spec.n;
    let edges: Vec<(usize, usize)> = match spec.kind {
        GenKind::Path => (0..n - 1).map(|i| (i, i + 1)).collect(),
        GenKind::Cycle => (0..n).map(|i| (i, (i + 1) % n)).collect(),
        GenKind::Star => (1..n).map(|i| (0, i)).collect(),
        GenKind::Complete => (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .collect(),
        GenKind::Grid => {
            let (r, c) = (spec.rows, spec.cols);
            let mut e = Vec::new();
            for a in 0..r {
                for b in 0..c {
                    let id = a * c + b;
                    if b + 1 < c {
                        e.push((id, id + 1));
                    }
                    if a + 1 < r {
                        e.push((id, id + c));
                    }
                }
            }
            e
        }
        GenKind::ErdosRenyi => return erdos_renyi(n, spec.p, spec.seed),
    };
    let n = if spec.kind == GenKind::Grid {
        spec.rows * spec.cols
    } else {
        n
    };
    Graph::from_edges(n, &edges)
}

fn erdos_renyi(n: usize, p: f64, seed: u64) -> Result<Graph, GraphError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..ER_MAX_ATTEMPTS {
        let mut edges = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                if rng.random::<f64>() < p {
                    edges.push((i, j));
                }
            }
        }
        let g = Graph::from_edges(n, &edges)?;
        if g.is_connected() {
            return Ok(g);
        }
    }
    Err(GraphError::GenerationFailed {
        attempts: ER_MAX_ATTEMPTS,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_form_counts() {
        let p2 = generate(&GenSpec::path(2)).unwrap();
        assert_eq!(p2.edges(), &[(0, 1)]);
        assert_eq!(p2.edge_count(), 1);

        let k4 = generate(&GenSpec::complete(4)).unwrap();
        assert_eq!(k4.edge_count(), 6);
        assert!(k4.degrees().iter().all(|&d| d == 3.0));

        let c4 = generate(&GenSpec::cycle(4)).unwrap();
        assert_eq!(c4.edge_count(), 4);
        assert!(c4.degrees().iter().all(|&d| d == 2.0));
    }

    #[test]
    fn families_match_closed_forms() {
        for n in 2..12 {
            assert_eq!(generate(&GenSpec::path(n)).unwrap().edge_count(), n - 1);
            assert_eq!(generate(&GenSpec::star(n)).unwrap().edge_count(), n - 1);
            assert_eq!(
                generate(&GenSpec::complete(n)).unwrap().edge_count(),
                n * (n - 1) / 2
            );
            if n >= 3 {
                assert_eq!(generate(&GenSpec::cycle(n)).unwrap().edge_count(), n);
            }
            let star = generate(&GenSpec::star(n)).unwrap();
            assert_eq!(star.degree(0), (n - 1) as f64);
        }
        let g = generate(&GenSpec::grid(3, 4)).unwrap();
        assert_eq!(g.n(), 12);
        assert_eq!(g.edge_count(), 3 * 3 + 2 * 4);
        assert!(g.is_connected());
    }

    #[test]
    fn er_is_deterministic_and_connected() {
        let spec = GenSpec::erdos_renyi(20, 0.2, 7);
        let a = generate(&spec).unwrap();
        let b = generate(&spec).unwrap();
        assert_eq!(a.edges(), b.edges());
        assert!(a.is_connected());
        let c = generate(&GenSpec::erdos_renyi(20, 0.2, 8)).unwrap();
        assert_ne!(a.edges(), c.edges());
    }

    #[test]
    fn er_failure_reported() {
        let spec = GenSpec::erdos_renyi(30, 1e-6, 1);
        assert!(matches!(
            generate(&spec),
            Err(GraphError::GenerationFailed { .. })
        ));
    }

    #[test]
    fn invalid_specs() {
        assert!(generate(&GenSpec::path(1)).is_err());
        assert!(generate(&GenSpec::cycle(2)).is_err());
        assert!(generate(&GenSpec::erdos_renyi(5, 0.0, 0)).is_err());
        assert!(generate(&GenSpec::erdos_renyi(5, 1.5, 0)).is_err());
        assert!(generate(&GenSpec::grid(1, 1)).is_err());
    }
}
