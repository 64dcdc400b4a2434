//! Plain serde representation for dense matrices: row-major data plus shape.
//! Keeps network files free of library-specific layouts and round-trips f64
//! values exactly through JSON.

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixData {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl MatrixData {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(rows * cols, data.len(), "matrix data/shape mismatch");
        MatrixData { rows, cols, data }
    }

    pub fn from_array(a: ArrayView2<f64>) -> Self {
        let (rows, cols) = a.dim();
        let data = a.iter().copied().collect();
        MatrixData { rows, cols, data }
    }

    pub fn to_array(&self) -> Array2<f64> {
        Array2::from_shape_vec((self.rows, self.cols), self.data.clone())
            .expect("shape validated at construction")
    }
}

impl From<&Array2<f64>> for MatrixData {
    fn from(a: &Array2<f64>) -> Self {
        MatrixData::from_array(a.view())
    }
}
