use rayon::prelude::*;
use serde::Serialize;

use super::{SpectralDecomposition, SpectralError};
use crate::graph::Graph;
use crate::linalg::Mat;

/// `alpha = 1 + n / |E|`.
pub fn alpha(g: &Graph) -> f64 {
    1.0 + g.n() as f64 / g.edge_count() as f64
}

fn require_simple(g: &Graph, spec: &SpectralDecomposition) -> Result<(), SpectralError> {
    if g.has_vn() {
        return Err(SpectralError::AugmentedInput);
    }
    if spec.n() != g.n() {
        return Err(SpectralError::SizeMismatch {
            expected: g.n(),
            got: spec.n(),
        });
    }
    spec.require_connected()
}

/// Per-mode weight `(n lambda / |E| - 1) / (lambda (lambda + 1))`.
fn delta_weight(g: &Graph) -> impl Fn(f64) -> f64 {
    let n = g.n() as f64;
    let e = g.edge_count() as f64;
    move |l| (n * l / e - 1.0) / (l * (l + 1.0))
}

/// `tau_vn(i, j) - tau(i, j)` from the spectrum of the simple graph.
pub fn vn_commute_delta(
    g: &Graph,
    spec: &SpectralDecomposition,
    i: usize,
    j: usize,
) -> Result<f64, SpectralError> {
    require_simple(g, spec)?;
    spec.check_index(i)?;
    spec.check_index(j)?;
    if i == j {
        return Ok(0.0);
    }
    Ok(2.0 * g.edge_count() as f64 * spec.pair_sum(i, j, delta_weight(g)))
}

/// Full `n x n` matrix of per-pair deltas (zero diagonal).
pub fn vn_delta_matrix(g: &Graph, spec: &SpectralDecomposition) -> Result<Mat, SpectralError> {
    require_simple(g, spec)?;
    let n = g.n();
    let scale = 2.0 * g.edge_count() as f64;
    let w = delta_weight(g);
    let weights: Vec<f64> = (0..n)
        .map(|l| if l == 0 { 0.0 } else { w(spec.eigenvalues[l]) })
        .collect();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (0..n)
                .map(|j| {
                    if i == j {
                        return 0.0;
                    }
                    let s: f64 = (1..n)
                        .map(|l| {
                            let d = spec.eigenvectors[(i, l)] - spec.eigenvectors[(j, l)];
                            weights[l] * d * d
                        })
                        .sum();
                    scale * s
                })
                .collect()
        })
        .collect();
    Ok(Mat::from_fn(n, n, |i, j| rows[i][j]))
}

/// Average of the delta over all `n^2` ordered pairs, in closed form.
pub fn vn_avg_commute_delta(g: &Graph, spec: &SpectralDecomposition) -> Result<f64, SpectralError> {
    require_simple(g, spec)?;
    let w = delta_weight(g);
    let s: f64 = spec.eigenvalues.iter().skip(1).map(|&l| w(l)).sum();
    Ok(4.0 * g.edge_count() as f64 / g.n() as f64 * s)
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct AlphaBounds {
    pub alpha: f64,
    pub lower: f64,
    pub upper: f64,
    /// `tau_vn(i, j) - alpha tau(i, j)` for the queried pair.
    pub value: f64,
    pub contained: bool,
}

/// Interval for `tau_vn - alpha tau` and the value at `(i, j)`.
pub fn vn_delta_alpha_bounds(
    g: &Graph,
    spec: &SpectralDecomposition,
    i: usize,
    j: usize,
) -> Result<AlphaBounds, SpectralError> {
    require_simple(g, spec)?;
    if i == j {
        return Err(SpectralError::SameNode(i));
    }
    let e = g.edge_count() as f64;
    let a = alpha(g);
    let l1 = spec.eigenvalues[1];
    let lmax = spec.eigenvalues[spec.n() - 1];
    let lower = -4.0 * e * a / (l1 * (l1 + 1.0));
    let upper = -4.0 * e * a / (lmax * (lmax + 1.0));
    let tau = 2.0 * e * spec.pair_sum(i, j, |l| 1.0 / l);
    let tau_vn = tau + vn_commute_delta(g, spec, i, j)?;
    let value = tau_vn - a * tau;
    let slack = 1e-9 * value.abs().max(1.0);
    Ok(AlphaBounds {
        alpha: a,
        lower,
        upper,
        value,
        contained: value >= lower - slack && value <= upper + slack,
    })
}

/// Spectrum of the augmented Laplacian predicted from the base spectrum:
/// `{0} + {lambda_l + 1 : l >= 1} + {n + 1}`, ascending.
pub fn vn_spectrum_analytic(
    spec: &SpectralDecomposition,
    g: &Graph,
) -> Result<Vec<f64>, SpectralError> {
    require_simple(g, spec)?;
    let mut out = Vec::with_capacity(spec.n() + 1);
    out.push(0.0);
    out.extend(spec.eigenvalues.iter().skip(1).map(|l| l + 1.0));
    out.push(g.n() as f64 + 1.0);
    out.sort_by(f64::total_cmp);
    Ok(out)
}

/// Minimal depth needed to mix strongly across a pair at commute time `tau`.
pub fn depth_lower_bound(tau: f64) -> f64 {
    tau / 8.0
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct DepthBound {
    pub tau: f64,
    pub tau_vn: f64,
    pub delta: f64,
    pub plain: f64,
    /// Only set when the delta is negative.
    pub vn: Option<f64>,
    pub applicable: bool,
}

/// Plain and VN depth bounds at `(i, j)`. The VN bound is
/// `tau_vn / 8 - (|E| / 8) S` with `S` the weighted mode sum of the delta.
pub fn vn_depth_lower_bound(
    g: &Graph,
    spec: &SpectralDecomposition,
    i: usize,
    j: usize,
) -> Result<DepthBound, SpectralError> {
    let delta = vn_commute_delta(g, spec, i, j)?;
    let e = g.edge_count() as f64;
    let tau = 2.0 * e * spec.pair_sum(i, j, |l| 1.0 / l);
    let tau_vn = tau + delta;
    let s = spec.pair_sum(i, j, delta_weight(g));
    let applicable = delta < 0.0;
    Ok(DepthBound {
        tau,
        tau_vn,
        delta,
        plain: depth_lower_bound(tau),
        vn: applicable.then(|| tau_vn / 8.0 - e / 8.0 * s),
        applicable,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct PairDelta {
    pub i: usize,
    pub j: usize,
    pub tau: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct GraphBounds {
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct VnEffectReport {
    pub graph_id: String,
    pub n: usize,
    pub edge_count: usize,
    pub avg_delta: f64,
    /// Mean of the per-pair matrix; agrees with `avg_delta`.
    pub pair_matrix_mean: f64,
    pub alpha: f64,
    pub bounds: GraphBounds,
    /// Unordered pairs `i < j`; empty unless requested.
    pub pairs: Vec<PairDelta>,
}

pub fn vn_effect_report(
    g: &Graph,
    spec: &SpectralDecomposition,
    graph_id: &str,
    include_pairs: bool,
) -> Result<VnEffectReport, SpectralError> {
    let avg_delta = vn_avg_commute_delta(g, spec)?;
    let delta = vn_delta_matrix(g, spec)?;
    let n = g.n();
    let pair_matrix_mean = delta.sum() / (n * n) as f64;
    let e = g.edge_count() as f64;
    let a = alpha(g);
    let l1 = spec.eigenvalues[1];
    let lmax = spec.eigenvalues[n - 1];
    let mut pairs = Vec::new();
    if include_pairs {
        for i in 0..n {
            for j in i + 1..n {
                pairs.push(PairDelta {
                    i,
                    j,
                    tau: 2.0 * e * spec.pair_sum(i, j, |l| 1.0 / l),
                    delta: delta[(i, j)],
                });
            }
        }
    }
    Ok(VnEffectReport {
        graph_id: graph_id.to_string(),
        n,
        edge_count: g.edge_count(),
        avg_delta,
        pair_matrix_mean,
        alpha: a,
        bounds: GraphBounds {
            lower: -4.0 * e * a / (l1 * (l1 + 1.0)),
            upper: -4.0 * e * a / (lmax * (lmax + 1.0)),
        },
        pairs,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HistogramBin {
    pub bin_lo: f64,
    pub bin_hi: f64,
    pub count: usize,
}

/// Equal-width histogram over `[min, max]`; the last bin is closed.
pub fn histogram(values: &[f64], bins: usize) -> Vec<HistogramBin> {
    if values.is_empty() || bins == 0 {
        return Vec::new();
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let mut hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi <= lo {
        hi = lo + 1.0;
    }
    let width = (hi - lo) / bins as f64;
    let mut out: Vec<HistogramBin> = (0..bins)
        .map(|b| HistogramBin {
            bin_lo: lo + b as f64 * width,
            bin_hi: if b + 1 == bins { hi } else { lo + (b + 1) as f64 * width },
            count: 0,
        })
        .collect();
    for &v in values {
        let b = (((v - lo) / width) as usize).min(bins - 1);
        out[b].count += 1;
    }
    out
}
