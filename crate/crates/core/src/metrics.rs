//! Reconstruction and inner-product fidelity, residual property checks, and
//! method comparison tables.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::block::DataBlock;
use crate::error::{Error, Result};
use crate::pipeline::{self, CompressionConfig, Method};
use crate::rng::{self, derive_seed, SeedRole, Stream};
use crate::shrink;
use crate::stats::{self, Moments};
use crate::synth::{self, SpikedGroundTruth, SpikedModelSpec};
use crate::turboquant::{Qjl, QjlSidecar, TurboQuant};

pub const DEFAULT_QUERIES: usize = 4096;
pub const MIN_QUERIES: usize = 1000;
pub const DEFAULT_DELOC_C: f64 = 4.0;
pub const DEFAULT_BIAS_ROTATIONS: usize = 16;

/// `100 ||X_hat - X||_F / ||X||_F`.
pub fn relative_l2(original: &DataBlock, reconstructed: &DataBlock) -> Result<f64> {
    if (original.n(), original.d()) != (reconstructed.n(), reconstructed.d()) {
        return Err(Error::mismatch(
            format!("{}x{}", original.n(), original.d()),
            format!("{}x{}", reconstructed.n(), reconstructed.d()),
        ));
    }
    let norm = original.frobenius_norm();
    if norm == 0.0 {
        return Err(Error::ZeroOriginal);
    }
    Ok(100.0 * (reconstructed.matrix() - original.matrix()).norm() / norm)
}

/// Sign sketch that corrects inner products with reconstructed rows.
#[derive(Debug, Clone)]
pub struct Sketch {
    pub qjl: Qjl,
    pub sidecars: Vec<QjlSidecar>,
}

#[derive(Debug, Clone)]
pub struct Reconstruction {
    pub block: DataBlock,
    pub sketch: Option<Sketch>,
    pub rank: usize,
    pub bits: f64,
}

/// Anything that can be evaluated block by block.
pub trait BlockCompressor: Sync {
    fn label(&self) -> String;

    fn reconstruct(&self, block: &DataBlock, block_index: u64) -> Result<Reconstruction>;

    fn reports_rank(&self) -> bool {
        false
    }
}

impl BlockCompressor for CompressionConfig {
    fn label(&self) -> String {
        self.method.name().to_string()
    }

    fn reconstruct(&self, block: &DataBlock, block_index: u64) -> Result<Reconstruction> {
        let cb = pipeline::compress_block(block, self, block_index)?;
        let sketch = cb.sketches.as_ref().map(|s| Sketch {
            qjl: Qjl::new(cb.d, cb.qjl_seed),
            sidecars: s.clone(),
        });
        Ok(Reconstruction {
            block: pipeline::decompress_block(&cb)?,
            sketch,
            rank: cb.rank(),
            bits: pipeline::bits::to_f64(cb.bits.total),
        })
    }

    fn reports_rank(&self) -> bool {
        self.method.uses_factors()
    }
}

/// Identity "compressor" at 32 bits per entry.
#[derive(Debug, Clone, Copy, Default)]
pub struct Lossless;

impl BlockCompressor for Lossless {
    fn label(&self) -> String {
        "lossless".into()
    }

    fn reconstruct(&self, block: &DataBlock, _block_index: u64) -> Result<Reconstruction> {
        Ok(Reconstruction {
            block: block.clone(),
            sketch: None,
            rank: 0,
            bits: 32.0,
        })
    }
}

/// Reconstructions computed ahead of time, paired with the originals they
/// came from. When asked for a rescaled copy of an original (the unit-row
/// pass of [`ip_fidelity`]), rows and sketch norms are rescaled to match.
pub struct Stored {
    pub label: String,
    pub originals: Vec<DataBlock>,
    pub reconstructions: Vec<Reconstruction>,
    pub reports_rank: bool,
}

impl Stored {
    pub fn from_compressed(originals: Vec<DataBlock>, compressed: &[pipeline::CompressedBlock]) -> Result<Self> {
        if originals.len() != compressed.len() {
            return Err(Error::mismatch(format!("{} blocks", originals.len()), compressed.len()));
        }
        let reconstructions = compressed
            .iter()
            .map(|cb| {
                Ok(Reconstruction {
                    block: pipeline::decompress_block(cb)?,
                    sketch: cb.sketches.as_ref().map(|s| Sketch {
                        qjl: Qjl::new(cb.d, cb.qjl_seed),
                        sidecars: s.clone(),
                    }),
                    rank: cb.rank(),
                    bits: pipeline::bits::to_f64(cb.bits.total),
                })
            })
            .collect::<Result<_>>()?;
        let method = compressed.first().map(|c| c.method);
        Ok(Stored {
            label: method.map_or_else(|| "stored".into(), |m| m.name().to_string()),
            originals,
            reconstructions,
            reports_rank: method.is_some_and(Method::uses_factors),
        })
    }

    /// Plain f32 reconstructions, charged 32 bits per entry.
    pub fn from_blocks(originals: Vec<DataBlock>, reconstructed: Vec<DataBlock>) -> Result<Self> {
        if originals.len() != reconstructed.len() {
            return Err(Error::mismatch(format!("{} blocks", originals.len()), reconstructed.len()));
        }
        Ok(Stored {
            label: "stored".into(),
            originals,
            reconstructions: reconstructed
                .into_iter()
                .map(|block| Reconstruction {
                    block,
                    sketch: None,
                    rank: 0,
                    bits: 32.0,
                })
                .collect(),
            reports_rank: false,
        })
    }
}

impl BlockCompressor for Stored {
    fn label(&self) -> String {
        self.label.clone()
    }

    fn reconstruct(&self, block: &DataBlock, block_index: u64) -> Result<Reconstruction> {
        let i = block_index as usize;
        let (orig, recon) = match (self.originals.get(i), self.reconstructions.get(i)) {
            (Some(o), Some(r)) => (o, r),
            _ => return Err(Error::mismatch(format!("block index < {}", self.originals.len()), i)),
        };
        if (orig.n(), orig.d()) != (block.n(), block.d()) || (recon.block.n(), recon.block.d()) != (block.n(), block.d()) {
            return Err(Error::mismatch(format!("{}x{}", orig.n(), orig.d()), format!("{}x{}", block.n(), block.d())));
        }
        let mut out = recon.clone();
        for t in 0..block.n() {
            let from = crate::linalg::norm(&orig.row(t));
            let to = crate::linalg::norm(&block.row(t));
            if from == to {
                continue;
            }
            let scale = if from == 0.0 { 0.0 } else { to / from };
            out.block.matrix_mut().row_mut(t).scale_mut(scale);
            if let Some(sk) = &mut out.sketch {
                sk.sidecars[t].residual_norm *= scale;
            }
        }
        Ok(out)
    }

    fn reports_rank(&self) -> bool {
        self.reports_rank
    }
}

/// `count x d` matrix of queries uniform on the unit sphere.
pub fn sphere_queries(count: usize, d: usize, seed: u64) -> DMatrix<f64> {
    let mut r = rng::stream(seed, Stream::Queries);
    let mut q = DMatrix::zeros(count, d);
    let mut row = vec![0.0; d];
    for i in 0..count {
        rng::fill_normal(&mut r, &mut row);
        let norm = crate::linalg::norm(&row);
        for (j, &x) in row.iter().enumerate() {
            q[(i, j)] = x / norm;
        }
    }
    q
}

/// Moments of `<q, x_hat> - <q, x>` over every (query, row) pair.
pub fn ip_error_moments(original: &DataBlock, recon: &Reconstruction, queries: &DMatrix<f64>) -> Moments {
    let diff = recon.block.matrix() - original.matrix();
    let mut errors = queries * diff.transpose();
    if let Some(sk) = &recon.sketch {
        let d = original.d();
        let projected = queries * sk.qjl.matrix().transpose();
        let scale = (std::f64::consts::PI / 2.0).sqrt() / d as f64;
        let signs = DMatrix::from_fn(original.n(), d, |t, i| {
            let s = &sk.sidecars[t];
            let sign = if s.signs[i] { 1.0 } else { -1.0 };
            sign * s.residual_norm * scale
        });
        errors += projected * signs.transpose();
    }
    let mut m = Moments::default();
    for q in 0..errors.nrows() {
        for t in 0..errors.ncols() {
            m.push(errors[(q, t)]);
        }
    }
    m
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IpStats {
    pub bias: f64,
    pub std: f64,
    pub standard_error: f64,
    pub count: u64,
}

impl From<Moments> for IpStats {
    fn from(m: Moments) -> Self {
        IpStats {
            bias: m.mean,
            std: m.std(),
            standard_error: m.standard_error(),
            count: m.count,
        }
    }
}

/// Inner-product error statistics pooled over rows and queries. Rows are
/// scaled to unit norm before compression.
pub fn ip_fidelity(
    blocks: &[DataBlock],
    compressor: &dyn BlockCompressor,
    query_count: usize,
    seed: u64,
) -> Result<IpStats> {
    if query_count < MIN_QUERIES {
        return Err(Error::config(format!("need at least {MIN_QUERIES} queries, got {query_count}")));
    }
    let per_block: Vec<Moments> = blocks
        .par_iter()
        .enumerate()
        .map(|(i, b)| {
            let unit = b.unit_rows();
            let recon = compressor.reconstruct(&unit, i as u64)?;
            let q = sphere_queries(query_count, b.d(), derive_seed(seed, i as u64, SeedRole::Queries));
            Ok(ip_error_moments(&unit, &recon, &q))
        })
        .collect::<Result<_>>()?;
    let mut total = Moments::default();
    for m in &per_block {
        total.merge(m);
    }
    Ok(total.into())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FidelityReport {
    pub method: String,
    #[serde(rename = "bits")]
    pub bits_total: f64,
    #[serde(rename = "l2_pct")]
    pub rel_l2_percent: f64,
    pub ip_bias: f64,
    pub ip_std: f64,
    pub mean_rank: Option<f64>,
    pub n_blocks: usize,
}

/// Full report for one compressor: per-block relative L2 averaged over
/// blocks, pooled IP statistics, mean stored rank and mean bits.
pub fn evaluate(
    blocks: &[DataBlock],
    compressor: &dyn BlockCompressor,
    query_count: usize,
    seed: u64,
) -> Result<FidelityReport> {
    if blocks.is_empty() {
        return Err(Error::config("no blocks to evaluate"));
    }
    let per_block: Vec<(f64, usize, f64)> = blocks
        .par_iter()
        .enumerate()
        .map(|(i, b)| {
            let r = compressor.reconstruct(b, i as u64)?;
            Ok((relative_l2(b, &r.block)?, r.rank, r.bits))
        })
        .collect::<Result<_>>()?;
    let ip = ip_fidelity(blocks, compressor, query_count, seed)?;
    let count = blocks.len() as f64;
    Ok(FidelityReport {
        method: compressor.label(),
        bits_total: per_block.iter().map(|p| p.2).sum::<f64>() / count,
        rel_l2_percent: per_block.iter().map(|p| p.0).sum::<f64>() / count,
        ip_bias: ip.bias,
        ip_std: ip.std,
        mean_rank: compressor
            .reports_rank()
            .then(|| per_block.iter().map(|p| p.1 as f64).sum::<f64>() / count),
        n_blocks: blocks.len(),
    })
}

/// One report per `(method, bits)` pair, in the order given.
pub fn comparison_table(
    blocks: &[DataBlock],
    methods: &[Method],
    bit_widths: &[u8],
    base: &CompressionConfig,
    query_count: usize,
) -> Result<Vec<FidelityReport>> {
    if methods.is_empty() || bit_widths.is_empty() {
        return Err(Error::config("need at least one method and one bit width"));
    }
    let mut out = Vec::new();
    for &method in methods {
        for &b in bit_widths {
            let cfg = CompressionConfig {
                method,
                residual_bits: b,
                ..base.clone()
            };
            cfg.validate()?;
            out.push(evaluate(blocks, &cfg, query_count, base.root_seed)?);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelocStats {
    /// `(||r||_inf / ||r||_2) sqrt(d / log d)` per nonzero row.
    pub ratios: Vec<f64>,
    pub max: f64,
    pub p99: f64,
    pub zero_rows: usize,
    pub threshold: f64,
    pub violations: usize,
}

pub fn deloc_ratio(row: &[f64]) -> Option<f64> {
    let d = row.len() as f64;
    let l2 = crate::linalg::norm(row);
    if l2 == 0.0 {
        return None;
    }
    let linf = row.iter().fold(0f64, |m, x| m.max(x.abs()));
    Some(linf / l2 * (d / d.ln()).sqrt())
}

pub fn delocalization_check(residual: &DataBlock, threshold: f64) -> DelocStats {
    let mut ratios = Vec::with_capacity(residual.n());
    let mut zero_rows = 0;
    for t in 0..residual.n() {
        match deloc_ratio(&residual.row(t)) {
            Some(r) => ratios.push(r),
            None => zero_rows += 1,
        }
    }
    let (max, p99) = if ratios.is_empty() {
        (0.0, 0.0)
    } else {
        (ratios.iter().copied().fold(0.0, f64::max), stats::quantile(&ratios, 0.99))
    };
    DelocStats {
        violations: ratios.iter().filter(|&&r| r > threshold).count(),
        ratios,
        max,
        p99,
        zero_rows,
        threshold,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SnrBiasPoint {
    pub decile: usize,
    /// Median per-token SNR inside the decile.
    pub snr_mid: f64,
    pub bias_ratio: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyReport {
    /// Mean of `| ||R||_F^2 - ||Z||_F^2 | / (nd)`.
    pub residual_frobenius_gap: f64,
    /// Mean KS distance between eigenvalues of `R R^T` and `Z Z^T`.
    pub spectrum_ks_distance: f64,
    /// Mean over blocks of the per-block maximum delocalization ratio.
    pub deloc_max_ratio: f64,
    /// Same statistic on pure Gaussian blocks of the same shape.
    pub deloc_calibration: f64,
    /// Fraction of residual rows whose ratio is below the threshold.
    pub deloc_fraction_below: f64,
    pub deloc_threshold: f64,
    pub snr_bias_curve: Vec<SnrBiasPoint>,
    pub mean_rank: f64,
    pub n_blocks: usize,
}

impl PropertyReport {
    pub fn bias_curve_holds(&self, slack: f64) -> bool {
        self.snr_bias_curve
            .iter()
            .all(|p| p.bias_ratio <= 1.0 / (1.0 + p.snr_mid) + slack)
    }
}

pub const BIAS_SLACK: f64 = 0.05;

struct BlockProperties {
    gap: f64,
    ks: f64,
    deloc: DelocStats,
    rank: usize,
    /// `(snr, ratio)` per token.
    tokens: Vec<(f64, f64)>,
}

fn eigenvalues_of_gram(m: &DMatrix<f64>) -> Vec<f64> {
    m.singular_values().iter().map(|s| s * s).collect()
}

/// Mean over rotation seeds of `<q_t, x_hat_t - x_t>` with `q_t = x_t/||x_t||`
/// taken from `reference`.
fn self_query_bias(rows: &DMatrix<f64>, reference: &DMatrix<f64>, bits: u8, seeds: &[u64]) -> Result<Vec<f64>> {
    let (n, d) = rows.shape();
    let mut acc = vec![0.0; n];
    for &seed in seeds {
        let tq = TurboQuant::new(d, bits, seed)?;
        for (t, slot) in acc.iter_mut().enumerate() {
            let x: Vec<f64> = rows.row(t).iter().copied().collect();
            let x_hat = tq.decode(&tq.encode(&x)?)?;
            let q: Vec<f64> = reference.row(t).iter().copied().collect();
            let qn = crate::linalg::norm(&q);
            let err: Vec<f64> = x_hat.iter().zip(&x).map(|(a, b)| a - b).collect();
            *slot += crate::linalg::dot(&q, &err) / qn;
        }
    }
    Ok(acc.into_iter().map(|v| v / seeds.len() as f64).collect())
}

fn block_properties(
    block: &DataBlock,
    truth: &SpikedGroundTruth,
    cfg: &CompressionConfig,
    block_index: u64,
    rotations: usize,
    deloc_threshold: f64,
) -> Result<BlockProperties> {
    let (n, d) = (block.n(), block.d());
    let (result, residual) = shrink::shrink(block, cfg.loss)?;
    let r = residual.matrix();
    let gap = (r.norm_squared() - truth.noise.norm_squared()).abs() / (n * d) as f64;
    let ks = stats::ks_statistic(&eigenvalues_of_gram(r), &eigenvalues_of_gram(&truth.noise));
    let deloc = delocalization_check(&residual, deloc_threshold);

    let seeds: Vec<u64> = (0..rotations as u64)
        .map(|k| derive_seed(cfg.root_seed ^ rng::splitmix64(block_index), k, SeedRole::Rotation))
        .collect();
    let direct = self_query_bias(block.matrix(), block.matrix(), cfg.residual_bits, &seeds)?;
    let through_residual = self_query_bias(r, block.matrix(), cfg.residual_bits, &seeds)?;
    let tokens = (0..n)
        .filter(|&t| direct[t] != 0.0)
        .map(|t| (truth.per_token_snr[t], (through_residual[t] / direct[t]).abs()))
        .collect();
    Ok(BlockProperties {
        gap,
        ks,
        deloc,
        rank: result.rank(),
        tokens,
    })
}

fn bias_curve(mut tokens: Vec<(f64, f64)>) -> Vec<SnrBiasPoint> {
    tokens.sort_by(|a, b| a.0.total_cmp(&b.0));
    let len = tokens.len();
    (0..10)
        .filter_map(|k| {
            let (lo, hi) = (k * len / 10, (k + 1) * len / 10);
            if hi <= lo {
                return None;
            }
            let chunk = &tokens[lo..hi];
            let snrs: Vec<f64> = chunk.iter().map(|p| p.0).collect();
            let mid = stats::quantile(&snrs, 0.5);
            Some(SnrBiasPoint {
                decile: k + 1,
                snr_mid: mid,
                bias_ratio: chunk.iter().map(|p| p.1).sum::<f64>() / chunk.len() as f64,
                bound: 1.0 / (1.0 + mid) + BIAS_SLACK,
            })
        })
        .collect()
}

/// Mean per-block maximum delocalization ratio of pure Gaussian blocks.
pub fn deloc_calibration(n: usize, d: usize, blocks: usize, seed: u64) -> Result<f64> {
    let maxima: Vec<f64> = (0..blocks as u64)
        .into_par_iter()
        .map(|i| {
            let spec = SpikedModelSpec::white(n, d, vec![], derive_seed(seed, i, SeedRole::Synthetic));
            let (b, _) = synth::sample_block(&spec)?;
            Ok(delocalization_check(&b, DEFAULT_DELOC_C).max)
        })
        .collect::<Result<_>>()?;
    Ok(stats::mean(&maxima))
}

/// Residual property statistics over blocks with known ground truth.
pub fn property_report(
    pairs: &[(DataBlock, Option<SpikedGroundTruth>)],
    cfg: &CompressionConfig,
    rotations: usize,
) -> Result<PropertyReport> {
    if pairs.is_empty() {
        return Err(Error::config("no blocks for property suite"));
    }
    if pairs.iter().any(|p| p.1.is_none()) {
        return Err(Error::NotSynthetic);
    }
    let per_block: Vec<BlockProperties> = pairs
        .par_iter()
        .enumerate()
        .map(|(i, (b, t))| block_properties(b, t.as_ref().expect("checked"), cfg, i as u64, rotations, DEFAULT_DELOC_C))
        .collect::<Result<_>>()?;
    let count = per_block.len() as f64;
    let (n, d) = (pairs[0].0.n(), pairs[0].0.d());
    let all_ratios: Vec<f64> = per_block.iter().flat_map(|p| p.deloc.ratios.iter().copied()).collect();
    let below = all_ratios.iter().filter(|&&r| r < DEFAULT_DELOC_C).count() as f64;
    Ok(PropertyReport {
        residual_frobenius_gap: per_block.iter().map(|p| p.gap).sum::<f64>() / count,
        spectrum_ks_distance: per_block.iter().map(|p| p.ks).sum::<f64>() / count,
        deloc_max_ratio: per_block.iter().map(|p| p.deloc.max).sum::<f64>() / count,
        deloc_calibration: deloc_calibration(n, d, pairs.len(), cfg.root_seed)?,
        deloc_fraction_below: if all_ratios.is_empty() { 1.0 } else { below / all_ratios.len() as f64 },
        deloc_threshold: DEFAULT_DELOC_C,
        snr_bias_curve: bias_curve(per_block.iter().flat_map(|p| p.tokens.iter().copied()).collect()),
        mean_rank: per_block.iter().map(|p| p.rank as f64).sum::<f64>() / count,
        n_blocks: pairs.len(),
    })
}

/// Samples `spec` at each seed and runs the property checks.
pub fn property_suite(spec: &SpikedModelSpec, cfg: &CompressionConfig, seeds: &[u64]) -> Result<PropertyReport> {
    let pairs: Vec<(DataBlock, Option<SpikedGroundTruth>)> = seeds
        .par_iter()
        .map(|&s| synth::sample_block(&spec.with_seed(s)).map(|(b, t)| (b, Some(t))))
        .collect::<Result<_>>()?;
    property_report(&pairs, cfg, DEFAULT_BIAS_ROTATIONS)
}
