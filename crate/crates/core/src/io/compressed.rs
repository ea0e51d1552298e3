//! Container of compressed blocks.
//!
//! Layout (little-endian):
//!
//! ```text
//! "EOSQ" 0x01  u16 version
//! config: u8 method  u8 residual_bits  u8 factor_bits  u8 loss
//!         u32 kivi_group  u8 kivi_axis  u32 block_rows  u64 root_seed
//! u32 n  u32 d  u32 block_count
//! per block: u32 record_len, then a record:
//!   u16 rank  u64 rotation_seed  u64 qjl_seed
//!   if rank > 0, for the left then right factor:
//!       u16 level_count, f32 x level_count, packed codes (factor_bits each)
//!     then f32 x rank singular values
//!   row methods: f32 x n norms, zero-row bitmap (n bits), per row packed
//!     codes (residual_bits each, padded to a byte)
//!   sketch methods: f32 x n residual norms, per row d sign bits
//!   kivi: u32 group_count, f32 x groups zero points, f32 x groups scales,
//!     packed codes for the whole row-major block
//!   bit report: 7 x (u64 numerator, u64 denominator)
//! ```

use std::path::Path;

use super::bytes::{self, Reader};
use crate::error::{Error, Result};
use crate::pipeline::kivi::{self, KiviAxis, KiviPayload};
use crate::pipeline::{BitAccounting, Bits, CompressedBlock, CompressionConfig, FactorPayload, Method, QuantizedFactor};
use crate::shrink::Loss;
use crate::turboquant::bitpack;
use crate::turboquant::{QjlSidecar, QuantizedVector};

pub const MAGIC: &[u8; 5] = b"EOSQ\x01";
pub const VERSION: u16 = 1;

/// True when `buf` starts like a compressed file. A block file shares the
/// first four magic bytes and is told apart by the bytes that follow: its
/// version 1 reads `01 00`, a compressed file reads `01 01 00`.
pub fn looks_compressed(buf: &[u8]) -> bool {
    buf.len() >= 7 && buf.starts_with(MAGIC) && buf[5..7] == VERSION.to_le_bytes()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompressedFile {
    pub config: CompressionConfig,
    pub n: usize,
    pub d: usize,
    pub blocks: Vec<CompressedBlock>,
}

fn put_factor(out: &mut Vec<u8>, f: &QuantizedFactor, bits: u8) {
    bytes::put_u16(out, f.levels.len() as u16);
    for &l in &f.levels {
        bytes::put_f32(out, l);
    }
    out.extend_from_slice(&bitpack::pack(&f.codes, bits));
}

fn read_factor(r: &mut Reader, rows: usize, cols: usize, bits: u8, what: &str) -> Result<QuantizedFactor> {
    let at = r.offset();
    let count = r.u16("factor level count")? as usize;
    if count == 0 || count > 1 << bits {
        return Err(Error::format(at, format!("{what}: {count} levels for {bits}-bit codes")));
    }
    let levels = r.f32s(count, "factor levels")?;
    let at = r.offset();
    let codes = bitpack::unpack(r.take(bitpack::packed_len(rows * cols, bits), "factor codes")?, bits, rows * cols);
    if let Some(bad) = codes.iter().find(|&&c| c as usize >= count) {
        return Err(Error::format(at, format!("{what}: code {bad} beyond {count} levels")));
    }
    Ok(QuantizedFactor {
        rows,
        cols,
        levels,
        codes,
    })
}

/// Serializes one block record (without its length prefix).
pub fn encode_record(cb: &CompressedBlock) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    let rank = cb.rank();
    bytes::put_u16(&mut out, u16::try_from(rank).map_err(|_| Error::config("rank exceeds 65535"))?);
    bytes::put_u64(&mut out, cb.rotation_seed);
    bytes::put_u64(&mut out, cb.qjl_seed);
    if let Some(f) = &cb.factors {
        put_factor(&mut out, &f.left, cb.factor_bits);
        put_factor(&mut out, &f.right, cb.factor_bits);
        for &v in &f.values {
            bytes::put_f32(&mut out, v);
        }
    }
    if cb.method != Method::Kivi {
        if cb.rows.len() != cb.n {
            return Err(Error::mismatch(format!("{} rows", cb.n), cb.rows.len()));
        }
        for qv in &cb.rows {
            bytes::put_f32(&mut out, qv.norm as f32);
        }
        let zero: Vec<bool> = cb.rows.iter().map(|q| q.is_zero).collect();
        out.extend_from_slice(&bitpack::pack_signs(&zero));
        for qv in &cb.rows {
            out.extend_from_slice(&bitpack::pack(&qv.codes, cb.residual_bits));
        }
    }
    if cb.method.uses_sketch() {
        let sketches = cb.sketches.as_ref().ok_or_else(|| Error::config("sketch method without sketches"))?;
        for s in sketches {
            bytes::put_f32(&mut out, s.residual_norm as f32);
        }
        for s in sketches {
            out.extend_from_slice(&bitpack::pack_signs(&s.signs));
        }
    }
    if cb.method == Method::Kivi {
        let k = cb.kivi.as_ref().ok_or_else(|| Error::config("KIVI block without payload"))?;
        bytes::put_u32(&mut out, bytes::len_u32(k.zeros.len(), "group count")?);
        for &z in &k.zeros {
            bytes::put_f32(&mut out, z);
        }
        for &s in &k.scales {
            bytes::put_f32(&mut out, s);
        }
        out.extend_from_slice(&bitpack::pack(&k.codes, k.bits));
    }
    for f in cb.bits.fields() {
        bytes::put_u64(&mut out, *f.numer());
        bytes::put_u64(&mut out, *f.denom());
    }
    Ok(out)
}

fn decode_record(r: &mut Reader, cfg: &CompressionConfig, n: usize, d: usize) -> Result<CompressedBlock> {
    let method = cfg.method;
    let at = r.offset();
    let rank = r.u16("rank")? as usize;
    if rank > n.min(d) || (rank > 0 && !method.uses_factors()) {
        return Err(Error::format(at, format!("rank {rank} invalid for {method} on {n}x{d}")));
    }
    let rotation_seed = r.u64("rotation seed")?;
    let qjl_seed = r.u64("sketch seed")?;
    let factors = if rank > 0 {
        let left = read_factor(r, n, rank, cfg.factor_bits, "left factor")?;
        let right = read_factor(r, d, rank, cfg.factor_bits, "right factor")?;
        let values = r.f32s(rank, "singular values")?;
        Some(FactorPayload { left, right, values })
    } else {
        None
    };
    let mut rows = Vec::new();
    if method != Method::Kivi {
        let norms = r.f32s(n, "row norms")?;
        let zero = bitpack::unpack_signs(r.take(bitpack::packed_len(n, 1), "zero-row bitmap")?, n);
        let row_len = bitpack::packed_len(d, cfg.residual_bits);
        for t in 0..n {
            let codes = bitpack::unpack(r.take(row_len, "row codes")?, cfg.residual_bits, d);
            rows.push(QuantizedVector {
                norm: norms[t] as f64,
                codes,
                is_zero: zero[t],
                rotation_seed,
            });
        }
    }
    let sketches = if method.uses_sketch() {
        let norms = r.f32s(n, "residual norms")?;
        let sign_len = bitpack::packed_len(d, 1);
        let mut out = Vec::with_capacity(n);
        for norm in norms {
            out.push(QjlSidecar {
                residual_norm: norm as f64,
                signs: bitpack::unpack_signs(r.take(sign_len, "sign bits")?, d),
                projection_seed: qjl_seed,
            });
        }
        Some(out)
    } else {
        None
    };
    let kivi = if method == Method::Kivi {
        let at = r.offset();
        let groups = r.u32("group count")? as usize;
        let expected = kivi::group_count(n, d, cfg.kivi_axis, cfg.kivi_group);
        if groups != expected {
            return Err(Error::format(at, format!("expected {expected} KIVI groups, found {groups}")));
        }
        let zeros = r.f32s(groups, "zero points")?;
        let scales = r.f32s(groups, "scales")?;
        let codes = bitpack::unpack(
            r.take(bitpack::packed_len(n * d, cfg.residual_bits), "KIVI codes")?,
            cfg.residual_bits,
            n * d,
        );
        Some(KiviPayload {
            axis: cfg.kivi_axis,
            group: cfg.kivi_group,
            bits: cfg.residual_bits,
            zeros,
            scales,
            codes,
        })
    } else {
        None
    };
    let mut fields = [Bits::from_integer(0); 7];
    for f in fields.iter_mut() {
        let at = r.offset();
        let numer = r.u64("bit report")?;
        let denom = r.u64("bit report")?;
        if denom == 0 {
            return Err(Error::format(at, "zero denominator in bit report"));
        }
        *f = Bits::new(numer, denom);
    }
    Ok(CompressedBlock {
        n,
        d,
        method,
        residual_bits: cfg.residual_bits,
        factor_bits: cfg.factor_bits,
        rotation_seed,
        qjl_seed,
        factors,
        rows,
        sketches,
        kivi,
        bits: BitAccounting::from_fields(fields),
    })
}

impl CompressedFile {
    pub fn encode(&self) -> Result<Vec<u8>> {
        let c = &self.config;
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        bytes::put_u16(&mut out, VERSION);
        out.extend_from_slice(&[c.method.code(), c.residual_bits, c.factor_bits, c.loss.code()]);
        bytes::put_u32(&mut out, bytes::len_u32(c.kivi_group, "KIVI group")?);
        out.push(c.kivi_axis.code());
        bytes::put_u32(&mut out, bytes::len_u32(c.block_rows, "block rows")?);
        bytes::put_u64(&mut out, c.root_seed);
        bytes::put_u32(&mut out, bytes::len_u32(self.n, "n")?);
        bytes::put_u32(&mut out, bytes::len_u32(self.d, "d")?);
        bytes::put_u32(&mut out, bytes::len_u32(self.blocks.len(), "block count")?);
        for cb in &self.blocks {
            if cb.method != c.method || (cb.n, cb.d) != (self.n, self.d) {
                return Err(Error::config("block does not match file configuration"));
            }
            let rec = encode_record(cb)?;
            bytes::put_u32(&mut out, bytes::len_u32(rec.len(), "record length")?);
            out.extend_from_slice(&rec);
        }
        Ok(out)
    }

    pub fn decode(buf: &[u8]) -> Result<Self> {
        let mut r = Reader::new(buf);
        if r.take(5, "magic")? != MAGIC {
            return Err(Error::format(0, "not a compressed file (bad magic)"));
        }
        let version = r.u16("version")?;
        if version != VERSION {
            return Err(Error::UnsupportedVersion(version));
        }
        let at = r.offset();
        let method = Method::from_code(r.u8("method")?).ok_or_else(|| Error::format(at, "unknown method"))?;
        let residual_bits = r.u8("residual bits")?;
        let factor_bits = r.u8("factor bits")?;
        let at = r.offset();
        let loss = Loss::from_code(r.u8("loss")?).ok_or_else(|| Error::format(at, "unknown loss"))?;
        let kivi_group = r.u32("KIVI group")? as usize;
        let at = r.offset();
        let kivi_axis = KiviAxis::from_code(r.u8("KIVI axis")?).ok_or_else(|| Error::format(at, "unknown KIVI axis"))?;
        let block_rows = r.u32("block rows")? as usize;
        let root_seed = r.u64("root seed")?;
        let config = CompressionConfig {
            method,
            residual_bits,
            factor_bits,
            loss,
            block_rows,
            kivi_group,
            kivi_axis,
            root_seed,
        };
        config
            .validate()
            .map_err(|e| Error::format(7, format!("invalid configuration echo: {e}")))?;
        let n = r.u32("n")? as usize;
        let d = r.u32("d")? as usize;
        let count = r.u32("block count")? as usize;
        let mut blocks = Vec::with_capacity(count.min(1 << 16));
        for i in 0..count {
            let len = r.u32("record length")? as usize;
            let start = r.offset();
            let record = r.take(len, &format!("record {i}"))?;
            let mut sub = Reader::new(record);
            let cb = decode_record(&mut sub, &config, n, d).map_err(|e| match e {
                Error::Format { offset, message } => Error::Format {
                    offset: start + offset,
                    message: format!("block {i}: {message}"),
                },
                other => other,
            })?;
            if sub.remaining() != 0 {
                return Err(Error::format(start + sub.offset(), format!("block {i}: trailing bytes in record")));
            }
            blocks.push(cb);
        }
        r.expect_end()?;
        Ok(CompressedFile { config, n, d, blocks })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.encode()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::decode(&std::fs::read(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::compress_block;
    use crate::synth::{sample_block, SpikedModelSpec};

    fn file_for(method: Method, strengths: Vec<f64>) -> CompressedFile {
        let cfg = CompressionConfig::new(method, 3).with_seed(4);
        let blocks: Vec<_> = (0..2)
            .map(|s| {
                let (b, _) = sample_block(&SpikedModelSpec::white(48, 40, strengths.clone(), s)).unwrap();
                compress_block(&b, &cfg, s).unwrap()
            })
            .collect();
        CompressedFile {
            config: cfg,
            n: 48,
            d: 40,
            blocks,
        }
    }

    #[test]
    fn every_method_round_trips() {
        for m in Method::ALL {
            let f = file_for(m, vec![9.0, 6.0]);
            let bytes = f.encode().unwrap();
            let back = CompressedFile::decode(&bytes).unwrap();
            assert_eq!(back, f, "{m}");
            assert_eq!(back.encode().unwrap(), bytes);
        }
    }

    #[test]
    fn truncation_reports_offset() {
        let bytes = file_for(Method::EoptMse, vec![9.0]).encode().unwrap();
        for cut in [3, 20, 40, bytes.len() - 1] {
            match CompressedFile::decode(&bytes[..cut]) {
                Err(Error::Format { offset, .. }) => assert!(offset <= cut as u64),
                other => panic!("cut {cut}: {other:?}"),
            }
        }
    }

    #[test]
    fn block_files_are_not_mistaken_for_compressed() {
        let (b, _) = sample_block(&SpikedModelSpec::white(8, 8, vec![], 0)).unwrap();
        let plain = super::super::BlockFile::new(8, 8, vec![b]).unwrap().encode().unwrap();
        assert!(!looks_compressed(&plain));
        assert!(looks_compressed(&file_for(Method::TqMse, vec![]).encode().unwrap()));
    }

    #[test]
    fn unknown_version_rejected() {
        let mut bytes = file_for(Method::TqMse, vec![]).encode().unwrap();
        bytes[5] = 2;
        assert!(matches!(CompressedFile::decode(&bytes), Err(Error::UnsupportedVersion(2))));
    }
}
