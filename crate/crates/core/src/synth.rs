//! Synthetic spiked blocks `S~ = S + Z` with known ground truth.
//!
//! The signal is `S = sum_i d_i u_i v_i^T` with random orthonormal `u`, `v`;
//! the noise is separable, `Z = A^{1/2} X B^{1/2}`, with `X` having i.i.d.
//! symmetric entries of variance `1/d`.

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::block::DataBlock;
use crate::error::{Error, Result};
use crate::linalg::{self, SpdWithRoot};
use crate::rng::{self, Stream};

pub const DEFAULT_TAU: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum CovarianceKind {
    Identity,
    Diagonal { values: Vec<f64> },
    /// `T_ij = rho^|i-j|`.
    Toeplitz { rho: f64 },
    Explicit { matrix: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceSpec {
    pub kind: CovarianceKind,
    pub dim: usize,
}

impl CovarianceSpec {
    pub fn identity(dim: usize) -> Self {
        CovarianceSpec {
            kind: CovarianceKind::Identity,
            dim,
        }
    }

    pub fn diagonal(values: Vec<f64>) -> Self {
        let dim = values.len();
        CovarianceSpec {
            kind: CovarianceKind::Diagonal { values },
            dim,
        }
    }

    pub fn toeplitz(rho: f64, dim: usize) -> Self {
        CovarianceSpec {
            kind: CovarianceKind::Toeplitz { rho },
            dim,
        }
    }

    pub fn is_identity(&self) -> bool {
        matches!(self.kind, CovarianceKind::Identity)
    }

    fn dense(&self) -> Result<DMatrix<f64>> {
        let n = self.dim;
        Ok(match &self.kind {
            CovarianceKind::Identity => DMatrix::identity(n, n),
            CovarianceKind::Diagonal { values } => {
                if values.len() != n {
                    return Err(Error::mismatch(n, values.len()));
                }
                if let Some(v) = values.iter().find(|v| !(**v > 0.0)) {
                    return Err(Error::NotPositiveDefinite(format!("diagonal entry {v}")));
                }
                DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(values))
            }
            CovarianceKind::Toeplitz { rho } => {
                if !(0.0..1.0).contains(rho) {
                    return Err(Error::config(format!("toeplitz rho must lie in [0, 1), got {rho}")));
                }
                DMatrix::from_fn(n, n, |i, j| rho.powi(i.abs_diff(j) as i32))
            }
            CovarianceKind::Explicit { matrix } => {
                if matrix.len() != n || matrix.iter().any(|r| r.len() != n) {
                    return Err(Error::mismatch(format!("{n}x{n}"), "ragged or resized matrix"));
                }
                DMatrix::from_fn(n, n, |i, j| matrix[i][j])
            }
        })
    }

    /// Materializes the matrix and its symmetric square root.
    pub fn realize(&self) -> Result<SpdWithRoot> {
        if self.dim < 2 {
            return Err(Error::config(format!("covariance dim must be >= 2, got {}", self.dim)));
        }
        if let CovarianceKind::Diagonal { values } = &self.kind {
            // Exact root for the diagonal case.
            let m = self.dense()?;
            let root = m.map(f64::sqrt);
            let mut eigenvalues = values.clone();
            eigenvalues.sort_by(|a, b| b.total_cmp(a));
            return Ok(SpdWithRoot {
                matrix: m,
                root,
                eigenvalues,
            });
        }
        if self.is_identity() {
            let m = DMatrix::identity(self.dim, self.dim);
            return Ok(SpdWithRoot {
                root: m.clone(),
                matrix: m,
                eigenvalues: vec![1.0; self.dim],
            });
        }
        linalg::spd_square_root(self.dense()?)
    }

    /// Largest eigenvalue at most `1/tau`, and at most a `1 - tau` fraction of
    /// the spectrum inside `[0, tau]`.
    pub fn check_regularity(&self, realized: &SpdWithRoot, tau: f64) -> Result<()> {
        let top = realized.eigenvalues[0];
        if top > 1.0 / tau {
            return Err(Error::config(format!(
                "covariance top eigenvalue {top:.4} exceeds 1/tau = {:.4}",
                1.0 / tau
            )));
        }
        let small = realized.eigenvalues.iter().filter(|&&e| e <= tau).count() as f64;
        if small / realized.eigenvalues.len() as f64 > 1.0 - tau {
            return Err(Error::config("covariance spectrum concentrated in [0, tau]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EntryDist {
    #[default]
    Gaussian,
    /// `+-1/sqrt(d)` with equal probability.
    RademacherScaled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpikedModelSpec {
    pub n: usize,
    pub d: usize,
    /// Descending signal strengths `d_i`.
    pub signal_strengths: Vec<f64>,
    pub noise_row_cov: CovarianceSpec,
    pub noise_col_cov: CovarianceSpec,
    pub entry_dist: EntryDist,
    pub seed: u64,
    pub tau: f64,
}

impl SpikedModelSpec {
    /// White-noise model with identity covariances.
    pub fn white(n: usize, d: usize, strengths: Vec<f64>, seed: u64) -> Self {
        SpikedModelSpec {
            n,
            d,
            signal_strengths: strengths,
            noise_row_cov: CovarianceSpec::identity(n),
            noise_col_cov: CovarianceSpec::identity(d),
            entry_dist: EntryDist::Gaussian,
            seed,
            tau: DEFAULT_TAU,
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        SpikedModelSpec { seed, ..self.clone() }
    }

    pub fn rank(&self) -> usize {
        self.signal_strengths.len()
    }

    pub fn aspect_ratio(&self) -> f64 {
        self.n as f64 / self.d as f64
    }

    pub fn validate(&self) -> Result<()> {
        let tau = self.tau;
        if !(tau > 0.0 && tau < 1.0) {
            return Err(Error::config(format!("tau must lie in (0, 1), got {tau}")));
        }
        if self.n < 2 || self.d < 2 {
            return Err(Error::config("block dimensions must be >= 2"));
        }
        let beta = self.aspect_ratio();
        if !(beta > tau && beta < 1.0 / tau) {
            return Err(Error::config(format!(
                "aspect ratio n/d = {beta:.4} outside ({tau}, {})",
                1.0 / tau
            )));
        }
        if self.rank() >= self.n.min(self.d) {
            return Err(Error::config(format!(
                "signal rank {} must be below min(n, d) = {}",
                self.rank(),
                self.n.min(self.d)
            )));
        }
        for (i, &s) in self.signal_strengths.iter().enumerate() {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::config(format!("signal strength {i} must be positive, got {s}")));
            }
            if s >= 1.0 / tau {
                return Err(Error::config(format!("signal strength {s} must be below 1/tau")));
            }
            if i > 0 && s > self.signal_strengths[i - 1] {
                return Err(Error::config("signal strengths must be sorted descending"));
            }
        }
        if self.noise_row_cov.dim != self.n {
            return Err(Error::mismatch(format!("row covariance dim {}", self.n), self.noise_row_cov.dim));
        }
        if self.noise_col_cov.dim != self.d {
            return Err(Error::mismatch(format!("column covariance dim {}", self.d), self.noise_col_cov.dim));
        }
        Ok(())
    }
}

/// Everything that generated a synthetic block.
#[derive(Debug, Clone, PartialEq)]
pub struct SpikedGroundTruth {
    pub signal: DMatrix<f64>,
    pub noise: DMatrix<f64>,
    /// `n x r`, orthonormal columns.
    pub left_vectors: DMatrix<f64>,
    /// `d x r`, orthonormal columns.
    pub right_vectors: DMatrix<f64>,
    pub strengths: Vec<f64>,
    /// `||S[t,:]||^2 / ||Z[t,:]||^2` per row.
    pub per_token_snr: Vec<f64>,
}

impl SpikedGroundTruth {
    pub fn from_parts(
        noise: DMatrix<f64>,
        left_vectors: DMatrix<f64>,
        right_vectors: DMatrix<f64>,
        strengths: Vec<f64>,
    ) -> Self {
        let r = strengths.len();
        let diag = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(&strengths));
        let signal = if r == 0 {
            DMatrix::zeros(noise.nrows(), noise.ncols())
        } else {
            &left_vectors * diag * right_vectors.transpose()
        };
        let per_token_snr = per_token_snr(&signal, &noise);
        SpikedGroundTruth {
            signal,
            noise,
            left_vectors,
            right_vectors,
            strengths,
            per_token_snr,
        }
    }
}

pub fn per_token_snr(signal: &DMatrix<f64>, noise: &DMatrix<f64>) -> Vec<f64> {
    (0..signal.nrows())
        .map(|t| signal.row(t).norm_squared() / noise.row(t).norm_squared())
        .collect()
}

/// Draws one block from the spiked model. Deterministic in `spec.seed`.
pub fn sample_block(spec: &SpikedModelSpec) -> Result<(DataBlock, SpikedGroundTruth)> {
    spec.validate()?;
    let (n, d, r) = (spec.n, spec.d, spec.rank());

    let row_cov = spec.noise_row_cov.realize()?;
    spec.noise_row_cov.check_regularity(&row_cov, spec.tau)?;
    let col_cov = spec.noise_col_cov.realize()?;
    spec.noise_col_cov.check_regularity(&col_cov, spec.tau)?;

    let scale = 1.0 / (d as f64).sqrt();
    let mut noise_rng = rng::stream(spec.seed, Stream::Noise);
    let mut x = DMatrix::zeros(n, d);
    for t in 0..n {
        for j in 0..d {
            x[(t, j)] = match spec.entry_dist {
                EntryDist::Gaussian => rng::standard_normal(&mut noise_rng) * scale,
                EntryDist::RademacherScaled => {
                    if noise_rng.random::<bool>() {
                        scale
                    } else {
                        -scale
                    }
                }
            };
        }
    }
    let mut z = x;
    if !spec.noise_row_cov.is_identity() {
        z = &row_cov.root * z;
    }
    if !spec.noise_col_cov.is_identity() {
        z *= &col_cov.root;
    }

    let u = linalg::gaussian_orthonormal(n, r, &mut rng::stream(spec.seed, Stream::LeftVectors));
    let v = linalg::gaussian_orthonormal(d, r, &mut rng::stream(spec.seed, Stream::RightVectors));
    let truth = SpikedGroundTruth::from_parts(z, u, v, spec.signal_strengths.clone());
    let observed = &truth.signal + &truth.noise;
    Ok((DataBlock::new(observed), truth))
}

/// Right edge `(1 + sqrt(beta))^2` of the Marchenko-Pastur law for `ZZ^T`
/// with entry variance `1/d` and `beta = n/d`.
pub fn mp_bulk_edge(beta: f64) -> f64 {
    (1.0 + beta.sqrt()).powi(2)
}

/// Limiting Stieltjes transforms `(m1, m2)` of `ZZ^T` (`n x n`) and `Z^T Z`
/// (`d x d`) for white noise at a real point `z >= lambda_+`.
pub fn mp_stieltjes(beta: f64, z: f64) -> (f64, f64) {
    let disc = ((z - 1.0 - beta).powi(2) - 4.0 * beta).max(0.0);
    let m1 = (1.0 - beta - z + disc.sqrt()) / (2.0 * beta * z);
    // n m1 - d m2 = (n - d)(-1/z)
    let m2 = beta * m1 + (beta - 1.0) / z;
    (m1, m2)
}

/// Limiting D-transform `z m1(z) m2(z)` for white noise.
pub fn mp_d_transform(beta: f64, z: f64) -> f64 {
    let (m1, m2) = mp_stieltjes(beta, z);
    z * m1 * m2
}

/// Detection threshold `alpha = 1 / sqrt(T(lambda_+))` for white noise.
pub fn white_noise_alpha(beta: f64) -> f64 {
    assert!(beta > 0.0, "aspect ratio must be positive");
    1.0 / mp_d_transform(beta, mp_bulk_edge(beta)).sqrt()
}
