//! Plug-in strength/overlap estimators, the three optimal shrinkers, and
//! assembly of the denoised low-rank part and its residual.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::block::DataBlock;
use crate::error::Result;
use crate::spectral::{self, NoiseSpectrumEstimate, SpectralAnalysis};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Loss {
    #[default]
    Frobenius,
    Operator,
    Nuclear,
}

impl Loss {
    pub fn code(self) -> u8 {
        match self {
            Loss::Frobenius => 0,
            Loss::Operator => 1,
            Loss::Nuclear => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Loss::Frobenius),
            1 => Some(Loss::Operator),
            2 => Some(Loss::Nuclear),
            _ => None,
        }
    }
}

impl std::str::FromStr for Loss {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "frobenius" | "fro" => Ok(Loss::Frobenius),
            "operator" | "op" => Ok(Loss::Operator),
            "nuclear" | "nuc" => Ok(Loss::Nuclear),
            other => Err(format!("unknown loss '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComponentEstimate {
    /// Zero-based position in the descending spectrum.
    pub index: usize,
    pub observed_eigenvalue: f64,
    pub d_hat: f64,
    pub a1_hat: f64,
    pub a2_hat: f64,
    pub phi_hat: f64,
}

/// Why a candidate outlier was dropped from the estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "reason")]
pub enum Demotion {
    NonPositiveTransform { index: usize, t_value: f64 },
    BelowGuard { index: usize },
}

/// Strength and overlap estimates at an observed outlier eigenvalue.
/// `Ok(None)` means the transform is not positive there and the component
/// should be demoted.
pub fn estimate_component(
    noise: &NoiseSpectrumEstimate,
    index: usize,
    lambda: f64,
) -> Result<Option<ComponentEstimate>> {
    let p = noise.d_transform_at(lambda)?;
    if !(p.t_value > 0.0 && p.t_value.is_finite()) {
        return Ok(None);
    }
    let d_hat = 1.0 / p.t_value.sqrt();
    let scale = d_hat * d_hat * p.t_prime;
    let a1 = p.m1 / scale;
    let a2 = p.m2 / scale;
    if a1 < 0.0 || a2 < 0.0 {
        log::warn!("negative overlap estimate at component {index} ({a1:.4}, {a2:.4}); clamping");
    }
    Ok(Some(ComponentEstimate {
        index,
        observed_eigenvalue: lambda,
        d_hat,
        a1_hat: clamp_unit(a1),
        a2_hat: clamp_unit(a2),
        phi_hat: 0.0,
    }))
}

fn clamp_unit(x: f64) -> f64 {
    if x.is_nan() {
        0.0
    } else {
        x.clamp(0.0, 1.0)
    }
}

pub fn apply_shrinker(loss: Loss, d: f64, a1: f64, a2: f64) -> f64 {
    let phi = match loss {
        Loss::Frobenius => d * (a1 * a2).sqrt(),
        Loss::Operator => {
            let (lo, hi) = if a1 <= a2 { (a1, a2) } else { (a2, a1) };
            if hi == 0.0 {
                0.0
            } else {
                d * (lo / hi).sqrt()
            }
        }
        Loss::Nuclear => d * ((a1 * a2).sqrt() - ((1.0 - a1) * (1.0 - a2)).sqrt()),
    };
    phi.max(0.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShrinkageResult {
    /// `n x rank`.
    pub left: DMatrix<f64>,
    /// `d x rank`.
    pub right: DMatrix<f64>,
    pub shrunken: Vec<f64>,
    pub components: Vec<ComponentEstimate>,
    pub demoted: Vec<Demotion>,
    pub loss: Loss,
    pub n: usize,
    pub d: usize,
}

impl ShrinkageResult {
    pub fn rank(&self) -> usize {
        self.shrunken.len()
    }

    pub fn estimate(&self) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.n, self.d);
        for (i, &phi) in self.shrunken.iter().enumerate() {
            out += phi * self.left.column(i) * self.right.column(i).transpose();
        }
        out
    }
}

pub fn shrink_analyzed(analysis: &SpectralAnalysis, loss: Loss) -> Result<ShrinkageResult> {
    let sd = &analysis.decomposition;
    let guard = analysis.noise.guard();
    let mut components = Vec::new();
    let mut demoted = Vec::new();
    for (index, &sigma) in sd.singular_values.iter().enumerate().take(analysis.edge.r_plus_hat) {
        let lambda = sigma * sigma;
        if !(lambda >= guard && lambda > 0.0) {
            demoted.push(Demotion::BelowGuard { index });
            continue;
        }
        match estimate_component(&analysis.noise, index, lambda)? {
            Some(mut c) => {
                c.phi_hat = apply_shrinker(loss, c.d_hat, c.a1_hat, c.a2_hat);
                components.push(c);
            }
            None => {
                let t_value = analysis.noise.d_transform_at(lambda)?.t_value;
                demoted.push(Demotion::NonPositiveTransform { index, t_value });
            }
        }
    }
    if !demoted.is_empty() {
        log::warn!("{} outlier candidate(s) demoted", demoted.len());
    }
    let rank = components.len();
    let mut left = DMatrix::zeros(sd.n, rank);
    let mut right = DMatrix::zeros(sd.d, rank);
    for (j, c) in components.iter().enumerate() {
        left.set_column(j, &sd.left_vectors.column(c.index));
        right.set_column(j, &sd.right_vectors.column(c.index));
    }
    Ok(ShrinkageResult {
        left,
        right,
        shrunken: components.iter().map(|c| c.phi_hat).collect(),
        components,
        demoted,
        loss,
        n: sd.n,
        d: sd.d,
    })
}

/// Denoised estimate and residual `R = block - S_hat`.
pub fn shrink(block: &DataBlock, loss: Loss) -> Result<(ShrinkageResult, DataBlock)> {
    let analysis = spectral::analyze(block)?;
    let result = shrink_analyzed(&analysis, loss)?;
    let residual = if result.rank() == 0 {
        block.clone()
    } else {
        DataBlock::new(block.matrix() - result.estimate())
    };
    Ok((result, residual))
}

/// Outlier location `T^{-1}(1/d^2)` for a strength `d`, by bisection on the
/// decreasing branch above the bulk. Diagnostic only.
pub fn outlier_location(noise: &NoiseSpectrumEstimate, strength: f64) -> Result<f64> {
    let target = 1.0 / (strength * strength);
    let lo0 = noise.guard().max(f64::MIN_POSITIVE);
    let t_lo = noise.d_transform_at(lo0)?.t_value;
    if t_lo <= target {
        return Ok(lo0);
    }
    let mut lo = lo0;
    let mut hi = lo0.max(1.0) * 2.0;
    while noise.d_transform_at(hi)?.t_value > target {
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if noise.d_transform_at(mid)?.t_value > target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-14 * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn one_point_estimate() {
        let noise = NoiseSpectrumEstimate {
            eigenvalues: vec![1.0],
            n: 1,
            d: 1,
        };
        let c = estimate_component(&noise, 0, 2.0).unwrap().unwrap();
        assert_relative_eq!(c.d_hat, 1.0 / 2f64.sqrt(), epsilon = 1e-15);
        // m / (d^2 T') = -1 / (0.5 * -3)
        assert_relative_eq!(c.a1_hat, 2.0 / 3.0, epsilon = 1e-15);
        assert_relative_eq!(c.a2_hat, 2.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn shrinker_arithmetic() {
        for loss in [Loss::Frobenius, Loss::Operator, Loss::Nuclear] {
            assert_relative_eq!(apply_shrinker(loss, 5.0, 1.0, 1.0), 5.0);
        }
        assert_relative_eq!(apply_shrinker(Loss::Frobenius, 4.0, 0.5, 0.5), 2.0);
        assert_relative_eq!(apply_shrinker(Loss::Operator, 4.0, 0.5, 0.5), 4.0);
        assert_eq!(apply_shrinker(Loss::Nuclear, 4.0, 0.5, 0.5), 0.0);
        assert_relative_eq!(apply_shrinker(Loss::Frobenius, 2.0, 0.9, 0.4), 1.2, epsilon = 1e-12);
        assert_relative_eq!(apply_shrinker(Loss::Operator, 2.0, 0.9, 0.4), 1.333_333_333_333, epsilon = 1e-9);
        assert_relative_eq!(apply_shrinker(Loss::Nuclear, 2.0, 0.9, 0.4), 0.710_102_051_443, epsilon = 1e-9);
        assert_eq!(apply_shrinker(Loss::Nuclear, 1.0, 0.1, 0.1), 0.0);
    }

    #[test]
    fn zero_matrix_shrinks_to_nothing() {
        let block = DataBlock::zeros(24, 24);
        let (result, residual) = shrink(&block, Loss::Frobenius).unwrap();
        assert_eq!(result.rank(), 0);
        assert_eq!(residual, block);
        assert_eq!(result.estimate(), DMatrix::zeros(24, 24));
    }

    #[test]
    fn residual_is_exact_difference() {
        let spec = crate::synth::SpikedModelSpec::white(64, 64, vec![6.0, 4.0], 17);
        let (block, _) = crate::synth::sample_block(&spec).unwrap();
        let (result, residual) = shrink(&block, Loss::Frobenius).unwrap();
        assert_eq!(result.rank(), 2);
        assert_eq!(residual.matrix(), &(block.matrix() - result.estimate()));
        for (c, s) in result.components.iter().zip(spectral::decompose(&block).unwrap().singular_values) {
            assert!(c.phi_hat <= s);
        }
    }

    #[test]
    fn outlier_location_inverts_transform() {
        let noise = NoiseSpectrumEstimate {
            eigenvalues: vec![2.0, 1.5, 1.0, 0.5],
            n: 4,
            d: 6,
        };
        let z = outlier_location(&noise, 3.0).unwrap();
        assert_relative_eq!(noise.d_transform_at(z).unwrap().t_value, 1.0 / 9.0, epsilon = 1e-10);
    }

    #[test]
    fn loss_codes_round_trip() {
        for loss in [Loss::Frobenius, Loss::Operator, Loss::Nuclear] {
            assert_eq!(Loss::from_code(loss.code()), Some(loss));
        }
        assert_eq!(Loss::from_code(9), None);
    }
}
