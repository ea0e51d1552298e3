//! SVD, bulk-edge estimation, noise-spectrum imputation and the empirical
//! Stieltjes / D-transform of the imputed noise spectrum.
//!
//! Everything here works on the eigenvalue scale `lambda_i = sigma_i^2`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::block::DataBlock;
use crate::error::{Error, Result};

/// Smallest pilot window accepted when `k` has to shrink for small blocks.
pub const MIN_PILOT: usize = 3;

/// Relative guard above the top imputed noise eigenvalue.
pub const EVALUATION_GUARD: f64 = 1e-6;

fn edge_denominator() -> f64 {
    2f64.powf(2.0 / 3.0) - 1.0
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralDecomposition {
    /// Descending, length `min(n, d)`.
    pub singular_values: Vec<f64>,
    /// `n x min(n, d)`.
    pub left_vectors: DMatrix<f64>,
    /// `d x min(n, d)`.
    pub right_vectors: DMatrix<f64>,
    pub n: usize,
    pub d: usize,
}

impl SpectralDecomposition {
    pub fn len(&self) -> usize {
        self.singular_values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.singular_values.is_empty()
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        self.singular_values.iter().map(|s| s * s).collect()
    }

    /// `sum_{i<rank} sigma_i xi_i zeta_i^T`.
    pub fn truncate(&self, rank: usize) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.n, self.d);
        for i in 0..rank.min(self.len()) {
            out += self.singular_values[i] * self.left_vectors.column(i) * self.right_vectors.column(i).transpose();
        }
        out
    }
}

pub fn decompose(block: &DataBlock) -> Result<SpectralDecomposition> {
    block.check_finite()?;
    let (n, d) = (block.n(), block.d());
    let svd = block.matrix().clone().svd(true, true);
    let u = svd.u.expect("left vectors requested");
    let vt = svd.v_t.expect("right vectors requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let m = order.len();
    let mut left = DMatrix::zeros(n, m);
    let mut right = DMatrix::zeros(d, m);
    let mut values = Vec::with_capacity(m);
    for (dst, &src) in order.iter().enumerate() {
        values.push(svd.singular_values[src].max(0.0));
        left.set_column(dst, &u.column(src));
        right.set_column(dst, &vt.row(src).transpose());
    }
    Ok(SpectralDecomposition {
        singular_values: values,
        left_vectors: left,
        right_vectors: right,
        n,
        d,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BulkEdgeEstimate {
    pub lambda_plus_hat: f64,
    pub k: usize,
    pub r_plus_hat: usize,
}

impl BulkEdgeEstimate {
    /// Eigenvalues strictly above this count as outliers.
    pub fn outlier_threshold(&self, d: usize) -> f64 {
        self.lambda_plus_hat * (1.0 + (d as f64).powf(-1.0 / 3.0))
    }
}

/// `floor(d^c)` with `c = min(1/2.01, 1/log log d)`.
pub fn pilot_k(d: usize) -> usize {
    let loglog = (d as f64).ln().ln();
    let c = if loglog > 0.0 {
        (1.0 / 2.01f64).min(1.0 / loglog)
    } else {
        1.0 / 2.01
    };
    (d as f64).powf(c).floor() as usize
}

/// Edge extrapolated from the two pilot eigenvalues (1-based `k+1`, `2k+1`).
fn edge_from_pilots(eigenvalues: &[f64], k: usize) -> f64 {
    let near = eigenvalues[k];
    let far = eigenvalues[2 * k];
    let raw = near + (near - far) / edge_denominator();
    // Numerically zero tails would otherwise turn rounding noise into outliers.
    let floor = f64::EPSILON * eigenvalues[0] * eigenvalues.len() as f64;
    raw.max(floor)
}

fn count_outliers(eigenvalues: &[f64], threshold: f64) -> usize {
    eigenvalues.iter().take_while(|&&l| l > threshold).count()
}

pub fn estimate_bulk_edge(sd: &SpectralDecomposition) -> Result<BulkEdgeEstimate> {
    estimate_bulk_edge_from(&sd.eigenvalues(), sd.d)
}

/// Bulk edge from a descending eigenvalue list; `d` sets the pilot size and
/// the outlier margin `d^{-1/3}`.
pub fn estimate_bulk_edge_from(eigenvalues: &[f64], d: usize) -> Result<BulkEdgeEstimate> {
    let m = eigenvalues.len();
    let mut k = pilot_k(d);
    loop {
        if k < MIN_PILOT {
            return Err(Error::TooFewSingularValues {
                required: 2 * MIN_PILOT + 1,
                available: m,
            });
        }
        if 2 * k < m {
            let lambda_plus_hat = edge_from_pilots(eigenvalues, k);
            let est = BulkEdgeEstimate {
                lambda_plus_hat,
                k,
                r_plus_hat: 0,
            };
            let r = count_outliers(eigenvalues, est.outlier_threshold(d));
            if 2 * k + r < m {
                return Ok(BulkEdgeEstimate { r_plus_hat: r, ..est });
            }
            if k == MIN_PILOT {
                return Err(Error::TooFewSingularValues {
                    required: 2 * k + r + 1,
                    available: m,
                });
            }
        }
        log::warn!("pilot window k = {k} does not fit {m} singular values; shrinking");
        k -= 1;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpectrumEstimate {
    /// Descending, length `min(n, d)`.
    pub eigenvalues: Vec<f64>,
    pub n: usize,
    pub d: usize,
}

pub fn impute_noise_spectrum(sd: &SpectralDecomposition, edge: &BulkEdgeEstimate) -> Result<NoiseSpectrumEstimate> {
    let eigenvalues = impute_from(&sd.eigenvalues(), edge)?;
    Ok(NoiseSpectrumEstimate {
        eigenvalues,
        n: sd.n,
        d: sd.d,
    })
}

/// Drops the outliers, rebuilds the top `k` noise eigenvalues with the
/// square-root edge profile, keeps the rest, and pads with the smallest
/// observed eigenvalue back to the original length.
pub fn impute_from(eigenvalues: &[f64], edge: &BulkEdgeEstimate) -> Result<Vec<f64>> {
    let m = eigenvalues.len();
    let (k, r) = (edge.k, edge.r_plus_hat);
    if 2 * k + r >= m {
        return Err(Error::ImputationOverflow {
            index: 2 * k + r + 1,
            available: m,
        });
    }
    let anchor = eigenvalues[k + r];
    let gap = anchor - eigenvalues[2 * k + r];
    let mut out = Vec::with_capacity(m);
    for j in 1..=k {
        let weight = (1.0 - (j as f64 / k as f64).powf(2.0 / 3.0)) / edge_denominator();
        out.push(anchor + weight * gap);
    }
    out.extend_from_slice(&eigenvalues[k + r..]);
    let smallest = eigenvalues[m - 1];
    out.resize(m, smallest);
    out.sort_by(|a, b| b.total_cmp(a));
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DTransformPoint {
    pub z: f64,
    pub m1: f64,
    pub m2: f64,
    pub m1_prime: f64,
    pub m2_prime: f64,
    pub t_value: f64,
    pub t_prime: f64,
}

impl NoiseSpectrumEstimate {
    pub fn guard(&self) -> f64 {
        self.eigenvalues.first().copied().unwrap_or(0.0) * (1.0 + EVALUATION_GUARD)
    }

    /// Stieltjes transform averaged over `size` points, zero-padded, and its
    /// derivative in `z`.
    fn padded_stieltjes(&self, size: usize, z: f64) -> (f64, f64) {
        let mut s = 0.0;
        let mut s_prime = 0.0;
        for &l in &self.eigenvalues {
            let inv = 1.0 / (l - z);
            s += inv;
            s_prime += inv * inv;
        }
        let pad = (size - self.eigenvalues.len()) as f64;
        s -= pad / z;
        s_prime += pad / (z * z);
        (s / size as f64, s_prime / size as f64)
    }

    pub fn d_transform_at(&self, z: f64) -> Result<DTransformPoint> {
        let guard = self.guard();
        if !(z >= guard && z > 0.0) {
            return Err(Error::OutsideBulk { z, guard });
        }
        let (m1, m1_prime) = self.padded_stieltjes(self.n, z);
        let (m2, m2_prime) = self.padded_stieltjes(self.d, z);
        Ok(DTransformPoint {
            z,
            m1,
            m2,
            m1_prime,
            m2_prime,
            t_value: z * m1 * m2,
            t_prime: m1 * m2 + z * m1_prime * m2 + z * m1 * m2_prime,
        })
    }
}

/// Steps 1 and 2 run together on one block.
#[derive(Debug, Clone)]
pub struct SpectralAnalysis {
    pub decomposition: SpectralDecomposition,
    pub edge: BulkEdgeEstimate,
    pub noise: NoiseSpectrumEstimate,
}

pub fn analyze(block: &DataBlock) -> Result<SpectralAnalysis> {
    let decomposition = decompose(block)?;
    let edge = estimate_bulk_edge(&decomposition)?;
    let noise = impute_noise_spectrum(&decomposition, &edge)?;
    Ok(SpectralAnalysis {
        decomposition,
        edge,
        noise,
    })
}
