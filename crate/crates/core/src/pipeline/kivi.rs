//! Group-wise asymmetric uniform quantization (KIVI-style baseline).

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::block::DataBlock;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum KiviAxis {
    /// Groups of `g` tokens within each channel (keys).
    #[default]
    PerChannel,
    /// Groups of `g` channels within each token (values).
    PerToken,
}

impl KiviAxis {
    pub fn code(self) -> u8 {
        match self {
            KiviAxis::PerChannel => 0,
            KiviAxis::PerToken => 1,
        }
    }

    pub fn from_code(c: u8) -> Option<Self> {
        match c {
            0 => Some(KiviAxis::PerChannel),
            1 => Some(KiviAxis::PerToken),
            _ => None,
        }
    }
}

impl std::str::FromStr for KiviAxis {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "per-channel" | "channel" | "0" => Ok(KiviAxis::PerChannel),
            "per-token" | "token" | "1" => Ok(KiviAxis::PerToken),
            other => Err(format!("unknown KIVI axis '{other}'")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KiviPayload {
    pub axis: KiviAxis,
    pub group: usize,
    pub bits: u8,
    /// Group minimum, one per group in `groups()` order.
    pub zeros: Vec<f32>,
    pub scales: Vec<f32>,
    /// Row-major `n x d`.
    pub codes: Vec<u8>,
}

/// Group spans as `(line, start, end)`: a line is a channel for per-channel
/// grouping and a token for per-token grouping.
fn groups(n: usize, d: usize, axis: KiviAxis, group: usize) -> Vec<(usize, usize, usize)> {
    let (lines, len) = match axis {
        KiviAxis::PerChannel => (d, n),
        KiviAxis::PerToken => (n, d),
    };
    let mut out = Vec::new();
    for line in 0..lines {
        let mut start = 0;
        while start < len {
            let end = (start + group).min(len);
            out.push((line, start, end));
            start = end;
        }
    }
    out
}

fn index(axis: KiviAxis, line: usize, pos: usize) -> (usize, usize) {
    match axis {
        KiviAxis::PerChannel => (pos, line),
        KiviAxis::PerToken => (line, pos),
    }
}

pub fn group_count(n: usize, d: usize, axis: KiviAxis, group: usize) -> usize {
    groups(n, d, axis, group).len()
}

pub fn kivi_compress(block: &DataBlock, bits: u8, axis: KiviAxis, group: usize) -> KiviPayload {
    let (n, d) = (block.n(), block.d());
    let m = block.matrix();
    let top = ((1u32 << bits) - 1) as f64;
    let mut codes = vec![0u8; n * d];
    let mut zeros = Vec::new();
    let mut scales = Vec::new();
    for (line, start, end) in groups(n, d, axis, group) {
        let vals = (start..end).map(|p| m[index(axis, line, p)]);
        let (lo, hi) = vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
        let zero = lo as f32;
        let scale = ((hi - zero as f64) / top) as f32;
        for p in start..end {
            let (t, j) = index(axis, line, p);
            let code = if scale > 0.0 {
                ((m[(t, j)] - zero as f64) / scale as f64).round().clamp(0.0, top)
            } else {
                0.0
            };
            codes[t * d + j] = code as u8;
        }
        zeros.push(zero);
        scales.push(scale);
    }
    KiviPayload {
        axis,
        group,
        bits,
        zeros,
        scales,
        codes,
    }
}

impl KiviPayload {
    pub fn reconstruct(&self, n: usize, d: usize) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(n, d);
        for (g, (line, start, end)) in groups(n, d, self.axis, self.group).into_iter().enumerate() {
            for p in start..end {
                let (t, j) = index(self.axis, line, p);
                out[(t, j)] = self.zeros[g] as f64 + self.codes[t * d + j] as f64 * self.scales[g] as f64;
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_block_is_exact() {
        let block = DataBlock::new(DMatrix::from_element(10, 6, 1.5));
        for bits in [1, 2, 8] {
            for axis in [KiviAxis::PerChannel, KiviAxis::PerToken] {
                let p = kivi_compress(&block, bits, axis, 4);
                assert_eq!(&p.reconstruct(10, 6), block.matrix());
            }
        }
    }

    #[test]
    fn ramp_at_eight_bits() {
        let block = DataBlock::new(DMatrix::from_fn(4, 128, |t, j| (j + t) as f64));
        let p = kivi_compress(&block, 8, KiviAxis::PerToken, 64);
        let err = (p.reconstruct(4, 128) - block.matrix()).norm() / block.frobenius_norm();
        assert!(err < 0.005, "relative error {err}");
    }

    #[test]
    fn short_last_group_has_own_scale() {
        assert_eq!(group_count(10, 3, KiviAxis::PerChannel, 4), 9);
        assert_eq!(group_count(10, 3, KiviAxis::PerToken, 2), 20);
        let block = DataBlock::new(DMatrix::from_fn(5, 1, |t, _| if t == 4 { 100.0 } else { t as f64 }));
        let p = kivi_compress(&block, 2, KiviAxis::PerChannel, 4);
        assert_eq!(p.scales.len(), 2);
        assert_eq!(p.reconstruct(5, 1)[(4, 0)], 100.0);
        assert_eq!(p.reconstruct(5, 1)[(3, 0)], 3.0);
    }

    #[test]
    fn codes_stay_in_range() {
        let block = DataBlock::new(DMatrix::from_fn(8, 8, |t, j| ((t * 7 + j * 3) % 11) as f64 - 5.0));
        let p = kivi_compress(&block, 3, KiviAxis::PerToken, 3);
        assert!(p.codes.iter().all(|&c| c < 8));
    }
}
