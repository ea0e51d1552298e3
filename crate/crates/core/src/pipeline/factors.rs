//! Data-adaptive scalar quantization of SVD factor matrices.

use nalgebra::DMatrix;

use crate::turboquant::codebook::quantile;

const MAX_SWEEPS: usize = 1000;

/// One factor matrix quantized against its own codebook. Codes are stored
/// row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedFactor {
    pub rows: usize,
    pub cols: usize,
    /// Ascending, at most `2^bits` distinct levels.
    pub levels: Vec<f32>,
    pub codes: Vec<u8>,
}

impl QuantizedFactor {
    pub fn dequantize(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.rows, self.cols, |i, j| self.levels[self.codes[i * self.cols + j] as usize] as f64)
    }
}

/// Lloyd iteration on a sorted empirical sample (1-D k-means). Empty cells
/// are dropped, so fewer than `count` levels may come back.
fn empirical_lloyd(sorted: &[f64], count: usize) -> Vec<f64> {
    let n = sorted.len();
    let mean = sorted.iter().sum::<f64>() / n as f64;
    let spread = (sorted.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
    let (lo, hi) = (sorted[0], sorted[n - 1]);
    // Companding start: quantiles of a Gaussian with three times the sample
    // variance, clipped to the data range.
    let mut levels: Vec<f64> = (0..count)
        .map(|i| (mean + spread * 3f64.sqrt() * quantile((i as f64 + 0.5) / count as f64)).clamp(lo, hi))
        .collect();
    levels.dedup();
    for _ in 0..MAX_SWEEPS {
        let mut next = Vec::with_capacity(levels.len());
        let mut start = 0;
        for i in 0..levels.len() {
            let end = if i + 1 < levels.len() {
                let t = 0.5 * (levels[i] + levels[i + 1]);
                sorted.partition_point(|&x| x <= t)
            } else {
                n
            };
            if end > start {
                next.push(sorted[start..end].iter().sum::<f64>() / (end - start) as f64);
            }
            start = end.max(start);
        }
        let settled = next.len() == levels.len()
            && next.iter().zip(&levels).all(|(a, b)| (a - b).abs() <= 1e-12 * b.abs().max(1e-300));
        levels = next;
        if settled {
            break;
        }
    }
    levels
}

pub fn quantize_factor(m: &DMatrix<f64>, bits: u8) -> QuantizedFactor {
    let (rows, cols) = m.shape();
    if rows * cols == 0 {
        return QuantizedFactor {
            rows,
            cols,
            levels: Vec::new(),
            codes: Vec::new(),
        };
    }
    let mut sorted: Vec<f64> = m.iter().copied().collect();
    sorted.sort_by(f64::total_cmp);
    let mut levels: Vec<f32> = empirical_lloyd(&sorted, 1usize << bits).iter().map(|&l| l as f32).collect();
    levels.dedup();
    let thresholds: Vec<f64> = levels.windows(2).map(|w| 0.5 * (w[0] as f64 + w[1] as f64)).collect();
    let mut codes = Vec::with_capacity(rows * cols);
    for i in 0..rows {
        for j in 0..cols {
            codes.push(thresholds.partition_point(|&t| t < m[(i, j)]) as u8);
        }
    }
    QuantizedFactor {
        rows,
        cols,
        levels,
        codes,
    }
}

/// Quantized left/right singular vectors plus the kept singular values.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorPayload {
    pub left: QuantizedFactor,
    pub right: QuantizedFactor,
    pub values: Vec<f32>,
}

impl FactorPayload {
    pub fn rank(&self) -> usize {
        self.values.len()
    }

    /// `U_hat diag(values) V_hat^T`.
    pub fn low_rank(&self) -> DMatrix<f64> {
        let u = self.left.dequantize();
        let v = self.right.dequantize();
        let mut out = DMatrix::zeros(u.nrows(), v.nrows());
        for (i, &phi) in self.values.iter().enumerate() {
            out += phi as f64 * u.column(i) * v.column(i).transpose();
        }
        out
    }
}

pub fn quantize_svd_factors(left: &DMatrix<f64>, right: &DMatrix<f64>, values: &[f64], bits: u8) -> FactorPayload {
    FactorPayload {
        left: quantize_factor(left, bits),
        right: quantize_factor(right, bits),
        values: values.iter().map(|&v| v as f32).collect(),
    }
}
