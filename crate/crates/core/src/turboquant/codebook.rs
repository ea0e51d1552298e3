//! Lloyd-Max scalar quantizers for a zero-mean Gaussian.

use std::collections::HashMap;
use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::sync::{Arc, Mutex, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_ITERATIONS: usize = 10_000;
pub const TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LloydMaxCodebook {
    pub bits: u8,
    /// Ascending, `2^bits` entries.
    pub levels: Vec<f64>,
    /// Midpoints of adjacent levels.
    pub thresholds: Vec<f64>,
    pub target_variance: f64,
    /// Mean squared error per coordinate under the target Gaussian.
    pub distortion: f64,
    pub iterations: usize,
}

impl LloydMaxCodebook {
    /// Index of the nearest level.
    pub fn quantize(&self, x: f64) -> u8 {
        self.thresholds.partition_point(|&t| t < x) as u8
    }

    pub fn level(&self, code: u8) -> f64 {
        self.levels[code as usize]
    }
}

fn pdf(x: f64) -> f64 {
    if x.is_infinite() {
        0.0
    } else {
        (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
    }
}

/// Upper tail `P[X > x]`, accurate far into the tail.
fn upper_tail(x: f64) -> f64 {
    0.5 * libm::erfc(x * FRAC_1_SQRT_2)
}

/// `P[a < X <= b]` computed on whichever side avoids cancellation.
fn mass(a: f64, b: f64) -> f64 {
    if a >= 0.0 {
        upper_tail(a) - upper_tail(b)
    } else if b <= 0.0 {
        upper_tail(-b) - upper_tail(-a)
    } else {
        1.0 - upper_tail(b) - upper_tail(-a)
    }
}

/// First and second partial moments of the standard normal on `(a, b]`.
fn partial_moments(a: f64, b: f64) -> (f64, f64, f64) {
    let m0 = mass(a, b);
    let m1 = pdf(a) - pdf(b);
    let xa = if a.is_infinite() { 0.0 } else { a * pdf(a) };
    let xb = if b.is_infinite() { 0.0 } else { b * pdf(b) };
    (m0, m1, m0 + xa - xb)
}

/// Standard normal quantile by bisection on the tail function.
pub(crate) fn quantile(p: f64) -> f64 {
    let (mut lo, mut hi) = (-40.0, 40.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if 1.0 - upper_tail(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn midpoints(levels: &[f64]) -> Vec<f64> {
    levels.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
}

fn cell(thresholds: &[f64], i: usize) -> (f64, f64) {
    let a = if i == 0 { f64::NEG_INFINITY } else { thresholds[i - 1] };
    let b = thresholds.get(i).copied().unwrap_or(f64::INFINITY);
    (a, b)
}

fn unit_distortion(levels: &[f64], thresholds: &[f64]) -> f64 {
    levels
        .iter()
        .enumerate()
        .map(|(i, &c)| {
            let (a, b) = cell(thresholds, i);
            let (m0, m1, m2) = partial_moments(a, b);
            m2 - 2.0 * c * m1 + c * c * m0
        })
        .sum()
}

fn centroids(thresholds: &[f64]) -> Vec<f64> {
    (0..=thresholds.len())
        .map(|i| {
            let (a, b) = cell(thresholds, i);
            let (m0, m1, _) = partial_moments(a, b);
            m1 / m0
        })
        .collect()
}

/// Residual of the nearest-neighbour condition `t_i = (c_i + c_{i+1}) / 2`.
fn threshold_residual(thresholds: &[f64]) -> Vec<f64> {
    let c = centroids(thresholds);
    thresholds
        .iter()
        .enumerate()
        .map(|(i, t)| t - 0.5 * (c[i] + c[i + 1]))
        .collect()
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// One damped Newton step on the thresholds. The Jacobian is tridiagonal:
/// a centroid only moves with the two edges of its own cell.
fn newton_step(thresholds: &mut Vec<f64>) -> bool {
    let k = thresholds.len();
    let c = centroids(thresholds);
    // dc_i/da and dc_i/db for every cell.
    let grads: Vec<(f64, f64)> = (0..=k)
        .map(|i| {
            let (a, b) = cell(thresholds, i);
            let m0 = mass(a, b);
            let da = if a.is_infinite() { 0.0 } else { pdf(a) * (c[i] - a) / m0 };
            let db = if b.is_infinite() { 0.0 } else { pdf(b) * (b - c[i]) / m0 };
            (da, db)
        })
        .collect();
    let f: Vec<f64> = (0..k).map(|i| thresholds[i] - 0.5 * (c[i] + c[i + 1])).collect();
    let lower: Vec<f64> = (0..k).map(|i| -0.5 * grads[i].0).collect();
    let diag: Vec<f64> = (0..k).map(|i| 1.0 - 0.5 * (grads[i].1 + grads[i + 1].0)).collect();
    let upper: Vec<f64> = (0..k).map(|i| -0.5 * grads[i + 1].1).collect();
    // Thomas algorithm for J delta = f.
    let mut cp = vec![0.0; k];
    let mut dp = vec![0.0; k];
    for i in 0..k {
        let denom = diag[i] - if i > 0 { lower[i] * cp[i - 1] } else { 0.0 };
        if denom == 0.0 || !denom.is_finite() {
            return false;
        }
        cp[i] = upper[i] / denom;
        dp[i] = (f[i] - if i > 0 { lower[i] * dp[i - 1] } else { 0.0 }) / denom;
    }
    let mut delta = vec![0.0; k];
    for i in (0..k).rev() {
        delta[i] = dp[i] - if i + 1 < k { cp[i] * delta[i + 1] } else { 0.0 };
    }
    let current = max_abs(&f);
    let mut step = 1.0;
    while step > 1e-6 {
        let trial: Vec<f64> = thresholds.iter().zip(&delta).map(|(t, d)| t - step * d).collect();
        if trial.windows(2).all(|w| w[0] < w[1]) && max_abs(&threshold_residual(&trial)) < current {
            *thresholds = trial;
            return true;
        }
        step *= 0.5;
    }
    false
}

fn build_unit(bits: u8) -> Result<LloydMaxCodebook> {
    let count = 1usize << bits;
    // Start from the companding point density, proportional to pdf^{1/3}:
    // quantiles of N(0, 3).
    let spread = 3f64.sqrt();
    let start: Vec<f64> = (0..count)
        .map(|i| spread * quantile((i as f64 + 0.5) / count as f64))
        .collect();
    let mut thresholds = midpoints(&start);
    let mut iterations = 0;
    while iterations < 100 && max_abs(&threshold_residual(&thresholds)) > 1e-13 {
        iterations += 1;
        if !newton_step(&mut thresholds) {
            break;
        }
    }
    // Plain Lloyd iterations until the levels stop moving.
    let mut levels = centroids(&thresholds);
    loop {
        if iterations >= MAX_ITERATIONS {
            return Err(Error::NonConvergence { iterations });
        }
        iterations += 1;
        let next = centroids(&midpoints(&levels));
        let movement = levels.iter().zip(&next).fold(0f64, |m, (a, b)| m.max((a - b).abs()));
        levels = next;
        // Exact symmetry about zero.
        for i in 0..count / 2 {
            let v = 0.5 * (levels[count - 1 - i] - levels[i]);
            levels[i] = -v;
            levels[count - 1 - i] = v;
        }
        if movement < TOLERANCE {
            break;
        }
    }
    let thresholds = midpoints(&levels);
    Ok(LloydMaxCodebook {
        bits,
        distortion: unit_distortion(&levels, &thresholds),
        levels,
        thresholds,
        target_variance: 1.0,
        iterations,
    })
}

/// Lloyd-Max codebook for `N(0, variance)`.
pub fn build_codebook(bits: u8, variance: f64) -> Result<LloydMaxCodebook> {
    if !(1..=8).contains(&bits) {
        return Err(Error::config(format!("code width must be 1..=8 bits, got {bits}")));
    }
    if !(variance > 0.0 && variance.is_finite()) {
        return Err(Error::config(format!("variance must be positive, got {variance}")));
    }
    let unit = build_unit(bits)?;
    let sigma = variance.sqrt();
    Ok(LloydMaxCodebook {
        levels: unit.levels.iter().map(|l| l * sigma).collect(),
        thresholds: unit.thresholds.iter().map(|t| t * sigma).collect(),
        target_variance: variance,
        distortion: unit.distortion * variance,
        ..unit
    })
}

/// Shared codebook for coordinates of a rotated unit vector in dimension `d`
/// (variance `1/d`).
pub fn codebook_for(bits: u8, d: usize) -> Result<Arc<LloydMaxCodebook>> {
    static CACHE: OnceLock<Mutex<HashMap<(u8, usize), Arc<LloydMaxCodebook>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    if let Some(cb) = cache.lock().expect("codebook cache poisoned").get(&(bits, d)) {
        return Ok(cb.clone());
    }
    let cb = Arc::new(build_codebook(bits, 1.0 / d as f64)?);
    cache
        .lock()
        .expect("codebook cache poisoned")
        .entry((bits, d))
        .or_insert(cb.clone());
    Ok(cb)
}
