use super::forward::ForwardTrace;
use super::model::Params;
use super::ModelError;
use crate::linalg::{column_means, Vector};

/// `Theta~ Mean(H^(m))`.
pub fn readout_mean(params: &Params, trace: &ForwardTrace) -> Vector {
    &params.readout * column_means(trace.final_hidden())
}

/// `Theta~ (H^(m))^T v`.
pub fn readout_v(params: &Params, trace: &ForwardTrace, v: &Vector) -> Result<Vector, ModelError> {
    let h = trace.final_hidden();
    if v.len() != h.nrows() {
        return Err(ModelError::Shape {
            what: "pooling vector".into(),
            expected: (h.nrows(), 1),
            got: (v.len(), 1),
        });
    }
    Ok(&params.readout * (h.transpose() * v))
}

/// `1 - cos(Mean(H^(l)), Mean(H^(m)))` per layer. `None` marks layers where
/// either pooled vector is zero.
pub fn cosine_trace(trace: &ForwardTrace) -> Vec<Option<f64>> {
    let last = trace.pooled.last().expect("non-empty trace");
    trace
        .pooled
        .iter()
        .map(|p| cosine_distance(p, last))
        .collect()
}

pub fn cosine_distance(a: &Vector, b: &Vector) -> Option<f64> {
    let (na, nb) = (a.norm(), b.norm());
    if na == 0.0 || nb == 0.0 {
        return None;
    }
    Some(1.0 - a.dot(b) / (na * nb))
}
