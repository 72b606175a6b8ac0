use std::io::Write;

use serde::Serialize;

use super::SensitivityError;
use crate::linalg::{row_major, Mat};
use crate::nn::tape::softmax_rows;
use crate::nn::{Params, Weight};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttentionMatrix {
    #[serde(with = "row_major")]
    pub scores: Mat,
}

impl AttentionMatrix {
    /// Wraps a matrix after checking it is row-stochastic.
    pub fn new(scores: Mat) -> Result<Self, SensitivityError> {
        if scores.nrows() != scores.ncols() || scores.nrows() == 0 {
            return Err(SensitivityError::InvalidInput("attention must be square and non-empty".into()));
        }
        for r in 0..scores.nrows() {
            let row = scores.row(r);
            if row.iter().any(|&x| !(x >= 0.0)) || (row.sum() - 1.0).abs() > 1e-12 {
                return Err(SensitivityError::InvalidInput(format!("row {r} is not a distribution")));
            }
        }
        Ok(AttentionMatrix { scores })
    }

    pub fn n(&self) -> usize {
        self.scores.nrows()
    }
}

fn attention_weights(params: &Params, layer: usize) -> Result<(&Mat, &Mat, &Mat), SensitivityError> {
    Ok((
        params.weight(layer, Weight::WQ)?,
        params.weight(layer, Weight::WK)?,
        params.weight(layer, Weight::WV)?,
    ))
}

fn check_width(h: &Mat, wq: &Mat) -> Result<(), SensitivityError> {
    if h.ncols() != wq.nrows() || h.nrows() == 0 {
        return Err(SensitivityError::InvalidInput(format!(
            "node states have {} columns, attention expects {}",
            h.ncols(),
            wq.nrows()
        )));
    }
    Ok(())
}

/// `softmax((H W_Q)(H W_K)^T / sqrt(d))` of the attention sublayer at `layer`.
pub fn attention_matrix(params: &Params, layer: usize, h: &Mat) -> Result<AttentionMatrix, SensitivityError> {
    let (wq, wk, _) = attention_weights(params, layer)?;
    check_width(h, wq)?;
    let logits = (h * wq) * (h * wk).transpose() / (h.ncols() as f64).sqrt();
    Ok(AttentionMatrix {
        scores: softmax_rows(&logits),
    })
}

/// Attention sublayer output `softmax(...) H W_V`.
pub fn attention_output(params: &Params, layer: usize, h: &Mat) -> Result<Mat, SensitivityError> {
    let a = attention_matrix(params, layer, h)?;
    let (_, _, wv) = attention_weights(params, layer)?;
    Ok(a.scores * (h * wv))
}

/// Mean over columns of the per-column population standard deviation across
/// rows, accumulated about the first entry so constant columns give exactly 0.
pub fn attention_column_std(a: &AttentionMatrix) -> f64 {
    let s = &a.scores;
    let n = s.nrows() as f64;
    s.column_iter()
        .map(|c| {
            let k = c[0];
            let s1: f64 = c.iter().map(|x| x - k).sum();
            let s2: f64 = c.iter().map(|x| (x - k).powi(2)).sum();
            ((s2 - s1 * s1 / n) / n).max(0.0).sqrt()
        })
        .sum::<f64>()
        / s.ncols() as f64
}

/// Replaces every row with the column-wise mean row.
pub fn mean_project_attention(a: &AttentionMatrix) -> AttentionMatrix {
    let s = &a.scores;
    let n = s.nrows();
    let mean = s.row_mean();
    AttentionMatrix {
        scores: Mat::from_fn(n, s.ncols(), |_, c| mean[c]),
    }
}

/// Writes `row,col,score` records for heat-map plotting.
pub fn attention_to_csv<W: Write>(a: &AttentionMatrix, out: W) -> Result<(), SensitivityError> {
    let io = |e: csv::Error| SensitivityError::Io(e.to_string());
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["row", "col", "score"]).map_err(io)?;
    for r in 0..a.n() {
        for c in 0..a.n() {
            w.serialize((r, c, a.scores[(r, c)])).map_err(io)?;
        }
    }
    w.flush().map_err(|e| SensitivityError::Io(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{init_params, Arch, ModelSpec};

    #[test]
    fn uniform_has_zero_std() {
        let a = AttentionMatrix::new(Mat::from_element(5, 5, 0.2)).unwrap();
        assert!(attention_column_std(&a).abs() < 1e-15);
    }

    #[test]
    fn identity_std() {
        let a = AttentionMatrix::new(Mat::identity(4, 4)).unwrap();
        assert!((attention_column_std(&a) - 0.1875_f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn projection_is_flat_and_stochastic() {
        let spec = ModelSpec::new(Arch::GpsLite, 1, 3);
        let p = init_params(&spec, 4).unwrap();
        let h = Mat::from_fn(6, 3, |i, j| ((i * 3 + j) as f64).sin());
        let a = attention_matrix(&p, 0, &h).unwrap();
        AttentionMatrix::new(a.scores.clone()).unwrap();
        let proj = mean_project_attention(&a);
        assert!(attention_column_std(&proj).abs() < 1e-15);
        for r in 0..6 {
            assert!((proj.scores.row(r).sum() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_non_stochastic() {
        assert!(AttentionMatrix::new(Mat::from_element(2, 2, 1.0)).is_err());
    }

    #[test]
    fn csv_export() {
        let a = AttentionMatrix::new(Mat::identity(2, 2)).unwrap();
        let mut buf = Vec::new();
        attention_to_csv(&a, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 5);
        assert!(text.starts_with("row,col,score\n0,0,1.0\n"));
    }
}
