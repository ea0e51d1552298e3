//! Per-vector scalar quantization: norm separation, a shared random
//! rotation, per-coordinate Lloyd-Max codes, and an optional one-bit
//! projection sketch of the residual for unbiased inner products.

pub mod bitpack;
pub mod codebook;

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;
use crate::rng::{self, Stream};

pub use codebook::{build_codebook, codebook_for, LloydMaxCodebook};

/// Haar-distributed orthogonal `d x d` matrix for `seed`.
pub fn haar_rotation(d: usize, seed: u64) -> DMatrix<f64> {
    linalg::gaussian_orthonormal(d, d, &mut rng::stream(seed, Stream::Rotation))
}

/// Gaussian projection `Phi` with i.i.d. `N(0, 1)` entries; row `i` comes from
/// stream `i` of `seed`, so any row can be regenerated on its own.
pub fn projection_matrix(d: usize, seed: u64) -> DMatrix<f64> {
    let mut phi = DMatrix::zeros(d, d);
    let mut row = vec![0.0; d];
    for i in 0..d {
        rng::fill_normal(&mut rng::stream_with_id(seed, i as u64), &mut row);
        for (j, &x) in row.iter().enumerate() {
            phi[(i, j)] = x;
        }
    }
    phi
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedVector {
    /// `||x||` at full precision.
    pub norm: f64,
    pub codes: Vec<u8>,
    pub is_zero: bool,
    pub rotation_seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QjlSidecar {
    pub residual_norm: f64,
    /// `sign(Phi r_x)` with `sign(0) = +1`; `true` is non-negative.
    pub signs: Vec<bool>,
    pub projection_seed: u64,
}

/// Rotation and codebook shared by every row of one block.
#[derive(Debug, Clone)]
pub struct TurboQuant {
    d: usize,
    codebook: Arc<LloydMaxCodebook>,
    rotation: DMatrix<f64>,
    rotation_seed: u64,
}

impl TurboQuant {
    pub fn new(d: usize, bits: u8, rotation_seed: u64) -> Result<Self> {
        if d < 2 {
            return Err(Error::config(format!("vector dimension must be >= 2, got {d}")));
        }
        Ok(TurboQuant {
            d,
            codebook: codebook_for(bits, d)?,
            rotation: haar_rotation(d, rotation_seed),
            rotation_seed,
        })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn bits(&self) -> u8 {
        self.codebook.bits
    }

    pub fn codebook(&self) -> &LloydMaxCodebook {
        &self.codebook
    }

    pub fn rotation(&self) -> &DMatrix<f64> {
        &self.rotation
    }

    pub fn rotation_seed(&self) -> u64 {
        self.rotation_seed
    }

    pub fn encode(&self, x: &[f64]) -> Result<QuantizedVector> {
        if x.len() != self.d {
            return Err(Error::mismatch(self.d, x.len()));
        }
        let norm = linalg::norm(x);
        if norm == 0.0 {
            return Ok(QuantizedVector {
                norm: 0.0,
                codes: vec![0; self.d],
                is_zero: true,
                rotation_seed: self.rotation_seed,
            });
        }
        let u = DVector::from_iterator(self.d, x.iter().map(|v| v / norm));
        let z = &self.rotation * u;
        Ok(QuantizedVector {
            norm,
            codes: z.iter().map(|&c| self.codebook.quantize(c)).collect(),
            is_zero: false,
            rotation_seed: self.rotation_seed,
        })
    }

    pub fn decode(&self, qv: &QuantizedVector) -> Result<Vec<f64>> {
        if qv.rotation_seed != self.rotation_seed {
            return Err(Error::UnknownSeed {
                expected: self.rotation_seed,
                found: qv.rotation_seed,
            });
        }
        if qv.codes.len() != self.d {
            return Err(Error::mismatch(self.d, qv.codes.len()));
        }
        if qv.is_zero {
            return Ok(vec![0.0; self.d]);
        }
        let z_hat = DVector::from_iterator(self.d, qv.codes.iter().map(|&c| self.codebook.level(c)));
        let x = self.rotation.tr_mul(&z_hat) * qv.norm;
        Ok(x.iter().copied().collect())
    }
}

/// The projection shared by every row of one block.
#[derive(Debug, Clone)]
pub struct Qjl {
    phi: DMatrix<f64>,
    seed: u64,
}

impl Qjl {
    pub fn new(d: usize, seed: u64) -> Self {
        Qjl {
            phi: projection_matrix(d, seed),
            seed,
        }
    }

    pub fn d(&self) -> usize {
        self.phi.nrows()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.phi
    }

    pub fn encode(&self, x: &[f64], x_hat: &[f64]) -> Result<QjlSidecar> {
        let d = self.d();
        if x.len() != d || x_hat.len() != d {
            return Err(Error::mismatch(d, x.len().max(x_hat.len())));
        }
        let r = DVector::from_iterator(d, x.iter().zip(x_hat).map(|(a, b)| a - b));
        let p = &self.phi * &r;
        Ok(QjlSidecar {
            residual_norm: r.norm(),
            signs: p.iter().map(|&v| v >= 0.0).collect(),
            projection_seed: self.seed,
        })
    }

    /// `Phi q`, reusable across many sidecars.
    pub fn project(&self, q: &[f64]) -> Result<Vec<f64>> {
        if q.len() != self.d() {
            return Err(Error::mismatch(self.d(), q.len()));
        }
        Ok((&self.phi * DVector::from_column_slice(q)).iter().copied().collect())
    }

    /// Estimate of `<q, r_x>` from a projected query.
    pub fn correction(&self, projected_query: &[f64], sidecar: &QjlSidecar) -> Result<f64> {
        if sidecar.projection_seed != self.seed {
            return Err(Error::UnknownSeed {
                expected: self.seed,
                found: sidecar.projection_seed,
            });
        }
        Ok(qjl_correction(projected_query, sidecar))
    }
}

/// `||r_x|| sqrt(pi/2) / d * <Phi q, sign(Phi r_x)>`.
pub fn qjl_correction(projected_query: &[f64], sidecar: &QjlSidecar) -> f64 {
    if sidecar.residual_norm == 0.0 {
        return 0.0;
    }
    let d = projected_query.len() as f64;
    let s: f64 = projected_query
        .iter()
        .zip(&sidecar.signs)
        .map(|(p, &pos)| if pos { *p } else { -*p })
        .sum();
    sidecar.residual_norm * (PI / 2.0).sqrt() / d * s
}

/// `<q, x_hat>` plus the sketch correction when a sidecar is present.
pub fn ip_estimate(q: &[f64], x_hat: &[f64], sidecar: Option<(&Qjl, &QjlSidecar)>) -> Result<f64> {
    if q.len() != x_hat.len() {
        return Err(Error::mismatch(x_hat.len(), q.len()));
    }
    let base = linalg::dot(q, x_hat);
    match sidecar {
        None => Ok(base),
        Some((qjl, s)) => Ok(base + qjl.correction(&qjl.project(q)?, s)?),
    }
}
