//! Matrices serialise as arrays of rows, which keeps artifacts readable.

use nalgebra::DMatrix;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
    let rows: Vec<Vec<f64>> = (0..m.nrows())
        .map(|i| m.row(i).iter().copied().collect())
        .collect();
    Rows { rows: m.nrows(), cols: m.ncols(), data: rows }.serialize(s)
}

pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
    let r = Rows::deserialize(d)?;
    if r.data.len() != r.rows || r.data.iter().any(|row| row.len() != r.cols) {
        return Err(serde::de::Error::custom(format!(
            "matrix data does not match declared shape {}x{}",
            r.rows, r.cols
        )));
    }
    Ok(DMatrix::from_fn(r.rows, r.cols, |i, j| r.data[i][j]))
}

#[derive(Serialize, Deserialize)]
struct Rows {
    rows: usize,
    cols: usize,
    data: Vec<Vec<f64>>,
}

/// Standalone serialisable matrix for maps and lists of matrices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mat(#[serde(with = "crate::serde_mat")] pub DMatrix<f64>);
