//! Block compression: optional low-rank denoising with quantized factors,
//! per-row quantization of what remains, and the baselines.

pub mod bits;
pub mod factors;
pub mod kivi;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::block::DataBlock;
use crate::error::{Error, Result};
use crate::rng::{derive_seed, SeedRole};
use crate::shrink::{self, Loss};
use crate::spectral;
use crate::turboquant::{Qjl, QjlSidecar, QuantizedVector, TurboQuant};

pub use bits::{BitAccounting, BitSummary, Bits};
pub use factors::{quantize_svd_factors, FactorPayload, QuantizedFactor};
pub use kivi::{kivi_compress, KiviAxis, KiviPayload};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "tq_mse")]
    TqMse,
    #[serde(rename = "tq_prod")]
    TqProd,
    #[serde(rename = "svd1_tq")]
    Svd1Tq,
    #[serde(rename = "eoptshrinkq_mse")]
    EoptMse,
    #[serde(rename = "eoptshrinkq_prod")]
    EoptProd,
    #[serde(rename = "kivi")]
    Kivi,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::TqMse,
        Method::TqProd,
        Method::Svd1Tq,
        Method::EoptMse,
        Method::EoptProd,
        Method::Kivi,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::TqMse => "tq_mse",
            Method::TqProd => "tq_prod",
            Method::Svd1Tq => "svd1_tq",
            Method::EoptMse => "eoptshrinkq_mse",
            Method::EoptProd => "eoptshrinkq_prod",
            Method::Kivi => "kivi",
        }
    }

    pub fn code(self) -> u8 {
        match self {
            Method::TqMse => 0,
            Method::TqProd => 1,
            Method::Svd1Tq => 2,
            Method::EoptMse => 3,
            Method::EoptProd => 4,
            Method::Kivi => 5,
        }
    }

    pub fn from_code(c: u8) -> Option<Self> {
        Method::ALL.into_iter().find(|m| m.code() == c)
    }

    pub fn uses_sketch(self) -> bool {
        matches!(self, Method::TqProd | Method::EoptProd)
    }

    pub fn uses_factors(self) -> bool {
        matches!(self, Method::Svd1Tq | Method::EoptMse | Method::EoptProd)
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| format!("unknown method '{s}'"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompressionConfig {
    pub method: Method,
    pub residual_bits: u8,
    pub factor_bits: u8,
    pub loss: Loss,
    pub block_rows: usize,
    pub kivi_group: usize,
    pub kivi_axis: KiviAxis,
    pub root_seed: u64,
}

impl Default for CompressionConfig {
    fn default() -> Self {
        CompressionConfig {
            method: Method::EoptMse,
            residual_bits: 2,
            factor_bits: 4,
            loss: Loss::Frobenius,
            block_rows: 128,
            kivi_group: 64,
            kivi_axis: KiviAxis::PerChannel,
            root_seed: 0,
        }
    }
}

impl CompressionConfig {
    pub fn new(method: Method, residual_bits: u8) -> Self {
        CompressionConfig {
            method,
            residual_bits,
            ..Default::default()
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.root_seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=8).contains(&self.residual_bits) {
            return Err(Error::config(format!("residual bits must be 1..=8, got {}", self.residual_bits)));
        }
        if !(2..=8).contains(&self.factor_bits) {
            return Err(Error::config(format!("factor bits must be 2..=8, got {}", self.factor_bits)));
        }
        if self.kivi_group == 0 {
            return Err(Error::config("KIVI group size must be positive"));
        }
        if self.block_rows == 0 {
            return Err(Error::config("block rows must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompressedBlock {
    pub n: usize,
    pub d: usize,
    pub method: Method,
    pub residual_bits: u8,
    pub factor_bits: u8,
    pub rotation_seed: u64,
    pub qjl_seed: u64,
    pub factors: Option<FactorPayload>,
    /// One per row; empty for KIVI.
    pub rows: Vec<QuantizedVector>,
    pub sketches: Option<Vec<QjlSidecar>>,
    pub kivi: Option<KiviPayload>,
    pub bits: BitAccounting,
}

impl CompressedBlock {
    pub fn rank(&self) -> usize {
        self.factors.as_ref().map_or(0, FactorPayload::rank)
    }
}

fn to_f32_precision(x: f64) -> f64 {
    x as f32 as f64
}

fn quantize_rows(residual: &DMatrix<f64>, tq: &TurboQuant) -> Result<Vec<QuantizedVector>> {
    (0..residual.nrows())
        .map(|t| {
            let row: Vec<f64> = residual.row(t).iter().copied().collect();
            let mut qv = tq.encode(&row)?;
            // The container keeps norms as f32; decode from that value so
            // in-memory and on-disk reconstructions agree.
            qv.norm = to_f32_precision(qv.norm);
            Ok(qv)
        })
        .collect()
}

fn decode_rows(rows: &[QuantizedVector], tq: &TurboQuant, n: usize, d: usize) -> Result<DMatrix<f64>> {
    if rows.len() != n {
        return Err(Error::mismatch(format!("{n} rows"), rows.len()));
    }
    let mut out = DMatrix::zeros(n, d);
    for (t, qv) in rows.iter().enumerate() {
        for (j, x) in tq.decode(qv)?.into_iter().enumerate() {
            out[(t, j)] = x;
        }
    }
    Ok(out)
}

/// Compresses one block; `block_index` feeds the seed derivation.
pub fn compress_block(block: &DataBlock, cfg: &CompressionConfig, block_index: u64) -> Result<CompressedBlock> {
    cfg.validate()?;
    block.check_finite()?;
    let (n, d) = (block.n(), block.d());
    let rotation_seed = derive_seed(cfg.root_seed, block_index, SeedRole::Rotation);
    let qjl_seed = derive_seed(cfg.root_seed, block_index, SeedRole::Qjl);

    let mut out = CompressedBlock {
        n,
        d,
        method: cfg.method,
        residual_bits: cfg.residual_bits,
        factor_bits: cfg.factor_bits,
        rotation_seed,
        qjl_seed,
        factors: None,
        rows: Vec::new(),
        sketches: None,
        kivi: None,
        bits: bits::account(&bits::BitInputs {
            method: cfg.method,
            residual_bits: cfg.residual_bits,
            factor_bits: cfg.factor_bits,
            rank: 0,
            n,
            d,
            kivi_group: cfg.kivi_group,
        }),
    };

    if cfg.method == Method::Kivi {
        out.kivi = Some(kivi_compress(block, cfg.residual_bits, cfg.kivi_axis, cfg.kivi_group));
        return Ok(out);
    }

    out.factors = match cfg.method {
        Method::Svd1Tq => {
            let sd = spectral::decompose(block)?;
            let left = sd.left_vectors.columns(0, 1).into_owned();
            let right = sd.right_vectors.columns(0, 1).into_owned();
            Some(quantize_svd_factors(&left, &right, &sd.singular_values[..1], cfg.factor_bits))
        }
        Method::EoptMse | Method::EoptProd => {
            let analysis = spectral::analyze(block)?;
            let result = shrink::shrink_analyzed(&analysis, cfg.loss)?;
            (result.rank() > 0)
                .then(|| quantize_svd_factors(&result.left, &result.right, &result.shrunken, cfg.factor_bits))
        }
        _ => None,
    };

    // The residual is taken against the dequantized low-rank part, so factor
    // quantization error is absorbed by the row quantizer.
    let residual = match &out.factors {
        Some(f) => block.matrix() - f.low_rank(),
        None => block.matrix().clone(),
    };
    let tq = TurboQuant::new(d, cfg.residual_bits, rotation_seed)?;
    out.rows = quantize_rows(&residual, &tq)?;

    if cfg.method.uses_sketch() {
        let qjl = Qjl::new(d, qjl_seed);
        let decoded = decode_rows(&out.rows, &tq, n, d)?;
        let mut sketches = Vec::with_capacity(n);
        for t in 0..n {
            let r: Vec<f64> = residual.row(t).iter().copied().collect();
            let r_hat: Vec<f64> = decoded.row(t).iter().copied().collect();
            let mut s = qjl.encode(&r, &r_hat)?;
            s.residual_norm = to_f32_precision(s.residual_norm);
            sketches.push(s);
        }
        out.sketches = Some(sketches);
    }

    out.bits = bits::account(&bits::BitInputs {
        method: cfg.method,
        residual_bits: cfg.residual_bits,
        factor_bits: cfg.factor_bits,
        rank: out.rank(),
        n,
        d,
        kivi_group: cfg.kivi_group,
    });
    Ok(out)
}

/// Low-rank part from dequantized factors plus the decoded rows.
pub fn decompress_block(cb: &CompressedBlock) -> Result<DataBlock> {
    let (n, d) = (cb.n, cb.d);
    if let Some(k) = &cb.kivi {
        return Ok(DataBlock::new(k.reconstruct(n, d)));
    }
    let tq = TurboQuant::new(d, cb.residual_bits, cb.rotation_seed)?;
    let mut out = decode_rows(&cb.rows, &tq, n, d)?;
    if let Some(f) = &cb.factors {
        out += f.low_rank();
    }
    Ok(DataBlock::new(out))
}

/// Compresses blocks on a pool of `workers` threads. Output order and
/// content do not depend on the worker count.
pub fn compress_blocks(blocks: &[DataBlock], cfg: &CompressionConfig, workers: usize) -> Result<Vec<CompressedBlock>> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::config(format!("cannot start worker pool: {e}")))?;
    pool.install(|| {
        blocks
            .par_iter()
            .enumerate()
            .map(|(i, b)| compress_block(b, cfg, i as u64))
            .collect()
    })
}

pub fn decompress_blocks(blocks: &[CompressedBlock], workers: usize) -> Result<Vec<DataBlock>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::config(format!("cannot start worker pool: {e}")))?;
    pool.install(|| blocks.par_iter().map(decompress_block).collect())
}
