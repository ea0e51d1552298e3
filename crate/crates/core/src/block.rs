use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// An `n x d` real matrix of rows (keys, values, or synthetic tokens); the unit
/// of compression.
#[derive(Debug, Clone, PartialEq)]
pub struct DataBlock(DMatrix<f64>);

impl DataBlock {
    pub fn new(matrix: DMatrix<f64>) -> Self {
        DataBlock(matrix)
    }

    pub fn zeros(n: usize, d: usize) -> Self {
        DataBlock(DMatrix::zeros(n, d))
    }

    /// Builds a block from row-major data.
    pub fn from_row_major(n: usize, d: usize, data: &[f64]) -> Result<Self> {
        if data.len() != n * d {
            return Err(Error::mismatch(n * d, data.len()));
        }
        Ok(DataBlock(DMatrix::from_row_slice(n, d, data)))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let d = rows.first().map_or(0, Vec::len);
        let mut m = DMatrix::zeros(n, d);
        for (t, row) in rows.iter().enumerate() {
            if row.len() != d {
                return Err(Error::mismatch(format!("row length {d}"), row.len()));
            }
            for (j, &x) in row.iter().enumerate() {
                m[(t, j)] = x;
            }
        }
        Ok(DataBlock(m))
    }

    pub fn n(&self) -> usize {
        self.0.nrows()
    }

    pub fn d(&self) -> usize {
        self.0.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn matrix_mut(&mut self) -> &mut DMatrix<f64> {
        &mut self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn row(&self, t: usize) -> Vec<f64> {
        self.0.row(t).iter().copied().collect()
    }

    pub fn set_row(&mut self, t: usize, values: &[f64]) {
        for (j, &x) in values.iter().enumerate() {
            self.0[(t, j)] = x;
        }
    }

    pub fn to_row_major(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n() * self.d());
        for t in 0..self.n() {
            out.extend(self.0.row(t).iter());
        }
        out
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.0.norm()
    }

    /// Fails on the first NaN or infinity, reporting its position.
    pub fn check_finite(&self) -> Result<()> {
        for t in 0..self.n() {
            for j in 0..self.d() {
                if !self.0[(t, j)].is_finite() {
                    return Err(Error::NonFinite { row: t, col: j });
                }
            }
        }
        Ok(())
    }

    /// Copy with every nonzero row scaled to unit Euclidean norm.
    pub fn unit_rows(&self) -> DataBlock {
        let mut m = self.0.clone();
        for mut row in m.row_iter_mut() {
            let norm = row.norm();
            if norm > 0.0 {
                row /= norm;
            }
        }
        DataBlock(m)
    }
}

impl From<DMatrix<f64>> for DataBlock {
    fn from(m: DMatrix<f64>) -> Self {
        DataBlock(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn row_major_round_trip() {
        let data: Vec<f64> = (0..6).map(f64::from).collect();
        let b = DataBlock::from_row_major(2, 3, &data).unwrap();
        assert_eq!(b.matrix()[(1, 0)], 3.0);
        assert_eq!(b.to_row_major(), data);
        assert!(DataBlock::from_row_major(2, 2, &data).is_err());
    }

    #[test]
    fn non_finite_is_located() {
        let mut b = DataBlock::zeros(3, 3);
        b.matrix_mut()[(2, 1)] = f64::NAN;
        match b.check_finite() {
            Err(Error::NonFinite { row: 2, col: 1 }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }
}
