//! Exact bits-per-entry accounting.

use num_rational::Ratio;
use serde::Serialize;

use super::Method;

pub type Bits = Ratio<u64>;

/// Per-entry bit costs of one compressed block. `total` follows the headline
/// convention: norm and singular-value overheads are reported but excluded.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BitAccounting {
    pub residual_bits: Bits,
    pub factor_overhead: Bits,
    pub qjl_overhead: Bits,
    pub kivi_overhead: Bits,
    pub norm_overhead: Bits,
    pub sigma_overhead: Bits,
    pub total: Bits,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BitSummary {
    pub residual_bits: f64,
    pub factor_overhead: f64,
    pub qjl_overhead: f64,
    pub kivi_overhead: f64,
    pub norm_overhead: f64,
    pub sigma_overhead: f64,
    pub total: f64,
}

pub fn to_f64(r: Bits) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

pub struct BitInputs {
    pub method: Method,
    pub residual_bits: u8,
    pub factor_bits: u8,
    pub rank: usize,
    pub n: usize,
    pub d: usize,
    pub kivi_group: usize,
}

pub fn account(x: &BitInputs) -> BitAccounting {
    let zero = Bits::from_integer(0);
    let nd = (x.n * x.d) as u64;
    let b = Bits::from_integer(x.residual_bits as u64);
    let factor = Bits::new((x.rank * (x.n + x.d)) as u64 * x.factor_bits as u64, nd);
    let uses_rows = x.method != Method::Kivi;
    let mut acc = BitAccounting {
        residual_bits: b,
        factor_overhead: zero,
        qjl_overhead: zero,
        kivi_overhead: zero,
        norm_overhead: if uses_rows { Bits::new(16, x.d as u64) } else { zero },
        sigma_overhead: Bits::new(16 * x.rank as u64, nd),
        total: zero,
    };
    match x.method {
        Method::TqMse => {}
        Method::TqProd => acc.qjl_overhead = Bits::from_integer(1),
        Method::Svd1Tq | Method::EoptMse => acc.factor_overhead = factor,
        Method::EoptProd => {
            acc.factor_overhead = factor;
            acc.qjl_overhead = Bits::from_integer(1);
        }
        Method::Kivi => acc.kivi_overhead = Bits::new(32, x.kivi_group as u64),
    }
    acc.total = acc.residual_bits + acc.factor_overhead + acc.qjl_overhead + acc.kivi_overhead;
    acc
}

impl BitAccounting {
    pub fn summary(&self) -> BitSummary {
        BitSummary {
            residual_bits: to_f64(self.residual_bits),
            factor_overhead: to_f64(self.factor_overhead),
            qjl_overhead: to_f64(self.qjl_overhead),
            kivi_overhead: to_f64(self.kivi_overhead),
            norm_overhead: to_f64(self.norm_overhead),
            sigma_overhead: to_f64(self.sigma_overhead),
            total: to_f64(self.total),
        }
    }

    pub fn fields(&self) -> [Bits; 7] {
        [
            self.residual_bits,
            self.factor_overhead,
            self.qjl_overhead,
            self.kivi_overhead,
            self.norm_overhead,
            self.sigma_overhead,
            self.total,
        ]
    }

    pub fn from_fields(f: [Bits; 7]) -> Self {
        BitAccounting {
            residual_bits: f[0],
            factor_overhead: f[1],
            qjl_overhead: f[2],
            kivi_overhead: f[3],
            norm_overhead: f[4],
            sigma_overhead: f[5],
            total: f[6],
        }
    }
}
