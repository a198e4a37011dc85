use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// A design matrix with named columns and a response vector.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub names: Vec<String>,
}

impl Dataset {
    pub fn new(x: DMatrix<f64>, y: DVector<f64>, names: Vec<String>) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(Error::DimensionMismatch {
                context: "Dataset rows",
                expected: x.nrows(),
                got: y.len(),
            });
        }
        if names.len() != x.ncols() {
            return Err(Error::DimensionMismatch {
                context: "Dataset column names",
                expected: x.ncols(),
                got: names.len(),
            });
        }
        Ok(Self { x, y, names })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    /// Per-column mean and standard deviation (population convention).
    pub fn column_stats(&self) -> (Vec<f64>, Vec<f64>) {
        let n = self.n() as f64;
        let mut means = Vec::with_capacity(self.p());
        let mut sds = Vec::with_capacity(self.p());
        for j in 0..self.p() {
            let col = self.x.column(j);
            let m = col.sum() / n;
            let v = col.iter().map(|&v| (v - m) * (v - m)).sum::<f64>() / n;
            means.push(m);
            sds.push(v.sqrt());
        }
        (means, sds)
    }
}
