//! Serde adapters writing matrices as dense row-major nested arrays.

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::linalg::Mat;
use crate::model::{matrix_from_rows, matrix_to_rows};

pub fn serialize<S: Serializer>(m: &Mat, s: S) -> Result<S::Ok, S::Error> {
    RowMajor { rows: m.nrows(), cols: m.ncols(), data: matrix_to_rows(m) }.serialize(s)
}

pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Mat, D::Error> {
    RowMajor::deserialize(d)?.into_mat().map_err(serde::de::Error::custom)
}

/// Shape is stored explicitly so that empty matrices round-trip.
#[derive(Serialize, Deserialize)]
struct RowMajor {
    rows: usize,
    cols: usize,
    data: Vec<Vec<f64>>,
}

impl RowMajor {
    fn into_mat(self) -> Result<Mat, String> {
        let m = matrix_from_rows(&self.data, Some(self.cols)).map_err(|e| e.to_string())?;
        if self.data.is_empty() {
            return Ok(Mat::zeros(self.rows, self.cols));
        }
        if m.shape() != (self.rows, self.cols) {
            return Err(format!("declared {}x{}, got {}x{}", self.rows, self.cols, m.nrows(), m.ncols()));
        }
        Ok(m)
    }
}

pub mod list {
    use super::*;

    pub fn serialize<S: Serializer>(ms: &[Mat], s: S) -> Result<S::Ok, S::Error> {
        let v: Vec<RowMajor> =
            ms.iter().map(|m| RowMajor { rows: m.nrows(), cols: m.ncols(), data: matrix_to_rows(m) }).collect();
        v.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Mat>, D::Error> {
        Vec::<RowMajor>::deserialize(d)?
            .into_iter()
            .map(|r| r.into_mat().map_err(serde::de::Error::custom))
            .collect()
    }
}
