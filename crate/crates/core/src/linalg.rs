//! Dense matrix aliases and the row-major JSON encoding shared by every report.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Row-major matrix with explicit shape, the on-disk form of every matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowMajor {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl From<&Mat> for RowMajor {
    fn from(m: &Mat) -> Self {
        let mut data = Vec::with_capacity(m.nrows() * m.ncols());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                data.push(m[(i, j)]);
            }
        }
        RowMajor {
            rows: m.nrows(),
            cols: m.ncols(),
            data,
        }
    }
}

impl TryFrom<RowMajor> for Mat {
    type Error = String;

    fn try_from(r: RowMajor) -> Result<Self, String> {
        if r.data.len() != r.rows * r.cols {
            return Err(format!(
                "matrix data has {} entries, shape {}x{} needs {}",
                r.data.len(),
                r.rows,
                r.cols,
                r.rows * r.cols
            ));
        }
        Ok(Mat::from_row_slice(r.rows, r.cols, &r.data))
    }
}

/// `#[serde(with = "row_major")]` for a single matrix.
pub mod row_major {
    use super::*;

    pub fn serialize<S: Serializer>(m: &Mat, s: S) -> Result<S::Ok, S::Error> {
        RowMajor::from(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Mat, D::Error> {
        let r = RowMajor::deserialize(d)?;
        Mat::try_from(r).map_err(serde::de::Error::custom)
    }
}

/// `#[serde(with = "row_major_opt")]` for an optional matrix.
pub mod row_major_opt {
    use super::*;

    pub fn serialize<S: Serializer>(m: &Option<Mat>, s: S) -> Result<S::Ok, S::Error> {
        m.as_ref().map(RowMajor::from).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Mat>, D::Error> {
        match Option::<RowMajor>::deserialize(d)? {
            Some(r) => Mat::try_from(r).map(Some).map_err(serde::de::Error::custom),
            None => Ok(None),
        }
    }
}

/// Nested `[[row], [row], ...]` encoding used for filter coefficients.
pub fn to_rows(m: &Mat) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

pub fn from_rows(rows: &[Vec<f64>]) -> Result<Mat, String> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|row| row.len() != c) {
        return Err("ragged matrix rows".into());
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Ok(Mat::from_row_slice(r, c, &flat))
}

/// Column means of an `n x d` matrix, `H^T 1 / n`.
pub fn column_means(h: &Mat) -> Vector {
    let n = h.nrows().max(1) as f64;
    Vector::from_iterator(h.ncols(), h.column_iter().map(|c| c.sum() / n))
}

pub fn max_abs(m: &Mat) -> f64 {
    m.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
}

pub fn max_abs_diff(a: &Mat, b: &Mat) -> f64 {
    assert_eq!(a.shape(), b.shape(), "shape mismatch in max_abs_diff");
    a.iter()
        .zip(b.iter())
        .fold(0.0_f64, |acc, (x, y)| acc.max((x - y).abs()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn row_major_is_row_major() {
        let m = Mat::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let r = RowMajor::from(&m);
        assert_eq!(r.data, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(Mat::try_from(r).unwrap(), m);
    }

    #[test]
    fn bad_shape_rejected() {
        let r = RowMajor {
            rows: 2,
            cols: 2,
            data: vec![1.0],
        };
        assert!(Mat::try_from(r).is_err());
    }

    #[test]
    fn nested_rows() {
        let m = from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(m[(1, 0)], 3.0);
        assert_eq!(to_rows(&m), vec![vec![1.0, 2.0], vec![3.0, 4.0]]);
        assert!(from_rows(&[vec![1.0], vec![1.0, 2.0]]).is_err());
    }
}
