//! Container of raw `n x d` blocks, optionally with synthetic ground truth.
//!
//! Layout (little-endian):
//!
//! ```text
//! "EOSQ"  u16 version  u8 dtype(0 = f32)  u8 flags(bit 0: ground truth)
//! u32 n  u32 d  u32 block_count
//! block_count x n x d f32, row-major
//! [per block, if flagged] u32 r, f32 x r strengths, f32 x nd signal,
//!     f32 x nd noise, f32 x nr left vectors, f32 x dr right vectors
//! ```

use std::path::Path;

use nalgebra::DMatrix;

use super::bytes::{self, Reader};
use crate::block::DataBlock;
use crate::error::{Error, Result};
use crate::synth::SpikedGroundTruth;

pub const MAGIC: &[u8; 4] = b"EOSQ";
pub const VERSION: u16 = 1;
const DTYPE_F32: u8 = 0;
const FLAG_TRUTH: u8 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct BlockFile {
    pub n: usize,
    pub d: usize,
    pub blocks: Vec<DataBlock>,
    pub truth: Option<Vec<SpikedGroundTruth>>,
}

fn put_matrix(out: &mut Vec<u8>, m: &DMatrix<f64>) {
    for i in 0..m.nrows() {
        bytes::put_f64_as_f32(out, m.row(i).iter().copied());
    }
}

fn read_matrix(r: &mut Reader, rows: usize, cols: usize, what: &str) -> Result<DMatrix<f64>> {
    let v = r.f32s_wide(rows * cols, what)?;
    Ok(DMatrix::from_row_slice(rows, cols, &v))
}

impl BlockFile {
    pub fn new(n: usize, d: usize, blocks: Vec<DataBlock>) -> Result<Self> {
        let f = BlockFile {
            n,
            d,
            blocks,
            truth: None,
        };
        f.check_shapes()?;
        Ok(f)
    }

    pub fn with_truth(n: usize, d: usize, pairs: Vec<(DataBlock, SpikedGroundTruth)>) -> Result<Self> {
        let (blocks, truth): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
        let f = BlockFile {
            n,
            d,
            blocks,
            truth: Some(truth),
        };
        f.check_shapes()?;
        Ok(f)
    }

    fn check_shapes(&self) -> Result<()> {
        for b in &self.blocks {
            if (b.n(), b.d()) != (self.n, self.d) {
                return Err(Error::mismatch(format!("{}x{}", self.n, self.d), format!("{}x{}", b.n(), b.d())));
            }
        }
        if let Some(t) = &self.truth {
            if t.len() != self.blocks.len() {
                return Err(Error::mismatch(self.blocks.len(), t.len()));
            }
        }
        Ok(())
    }

    /// Blocks paired with their ground truth when present.
    pub fn pairs(&self) -> Vec<(DataBlock, Option<SpikedGroundTruth>)> {
        self.blocks
            .iter()
            .enumerate()
            .map(|(i, b)| (b.clone(), self.truth.as_ref().map(|t| t[i].clone())))
            .collect()
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        self.check_shapes()?;
        let mut out = Vec::with_capacity(20 + self.blocks.len() * self.n * self.d * 4);
        out.extend_from_slice(MAGIC);
        bytes::put_u16(&mut out, VERSION);
        out.push(DTYPE_F32);
        out.push(if self.truth.is_some() { FLAG_TRUTH } else { 0 });
        bytes::put_u32(&mut out, bytes::len_u32(self.n, "n")?);
        bytes::put_u32(&mut out, bytes::len_u32(self.d, "d")?);
        bytes::put_u32(&mut out, bytes::len_u32(self.blocks.len(), "block count")?);
        for b in &self.blocks {
            put_matrix(&mut out, b.matrix());
        }
        if let Some(truth) = &self.truth {
            for t in truth {
                bytes::put_u32(&mut out, bytes::len_u32(t.strengths.len(), "rank")?);
                bytes::put_f64_as_f32(&mut out, t.strengths.iter().copied());
                put_matrix(&mut out, &t.signal);
                put_matrix(&mut out, &t.noise);
                put_matrix(&mut out, &t.left_vectors);
                put_matrix(&mut out, &t.right_vectors);
            }
        }
        Ok(out)
    }

    pub fn decode(buf: &[u8]) -> Result<Self> {
        let mut r = Reader::new(buf);
        if r.take(4, "magic")? != MAGIC {
            return Err(Error::format(0, "not a block file (bad magic)"));
        }
        let version = r.u16("version")?;
        if version != VERSION {
            return Err(Error::UnsupportedVersion(version));
        }
        let at = r.offset();
        let dtype = r.u8("dtype")?;
        if dtype != DTYPE_F32 {
            return Err(Error::format(at, format!("unknown dtype {dtype}")));
        }
        let at = r.offset();
        let flags = r.u8("flags")?;
        if flags & !FLAG_TRUTH != 0 {
            return Err(Error::format(at, format!("unknown flags {flags:#04x}")));
        }
        let n = r.u32("n")? as usize;
        let d = r.u32("d")? as usize;
        let count = r.u32("block count")? as usize;
        let mut blocks = Vec::with_capacity(count.min(1 << 16));
        for i in 0..count {
            blocks.push(DataBlock::new(read_matrix(&mut r, n, d, &format!("block {i}"))?));
        }
        let truth = if flags & FLAG_TRUTH != 0 {
            let mut truth = Vec::with_capacity(count);
            for i in 0..count {
                let at = r.offset();
                let rank = r.u32("rank")? as usize;
                if rank > n.min(d) {
                    return Err(Error::format(at, format!("ground-truth rank {rank} exceeds min(n, d)")));
                }
                let strengths = r.f32s_wide(rank, "strengths")?;
                let signal = read_matrix(&mut r, n, d, &format!("signal {i}"))?;
                let noise = read_matrix(&mut r, n, d, &format!("noise {i}"))?;
                let left = read_matrix(&mut r, n, rank, "left vectors")?;
                let right = read_matrix(&mut r, d, rank, "right vectors")?;
                let per_token_snr = crate::synth::per_token_snr(&signal, &noise);
                truth.push(SpikedGroundTruth {
                    signal,
                    noise,
                    left_vectors: left,
                    right_vectors: right,
                    strengths,
                    per_token_snr,
                });
            }
            Some(truth)
        } else {
            None
        };
        r.expect_end()?;
        Ok(BlockFile { n, d, blocks, truth })
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
    use crate::synth::{sample_block, SpikedModelSpec};

    #[test]
    fn round_trip_with_truth_is_byte_identical() {
        let pairs: Vec<_> = (0..2)
            .map(|s| sample_block(&SpikedModelSpec::white(12, 10, vec![3.0], s)).unwrap())
            .collect();
        let f = BlockFile::with_truth(12, 10, pairs).unwrap();
        let bytes = f.encode().unwrap();
        assert_eq!(bytes.len(), 20 + 2 * 480 + 2 * (4 + 4 + 480 * 2 + 48 + 40));
        let back = BlockFile::decode(&bytes).unwrap();
        assert_eq!(back.encode().unwrap(), bytes);
        assert_eq!(back.truth.as_ref().unwrap()[0].strengths, vec![3.0]);
    }

    #[test]
    fn header_errors() {
        let f = BlockFile::new(2, 2, vec![DataBlock::zeros(2, 2)]).unwrap();
        let mut bytes = f.encode().unwrap();
        bytes[4] = 9;
        assert!(matches!(BlockFile::decode(&bytes), Err(Error::UnsupportedVersion(9))));
        bytes[4] = 1;
        bytes[0] = b'X';
        assert!(matches!(BlockFile::decode(&bytes), Err(Error::Format { offset: 0, .. })));
        bytes[0] = b'E';
        bytes.pop();
        match BlockFile::decode(&bytes) {
            Err(Error::Format { offset: 20, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn shape_mismatch_rejected() {
        assert!(BlockFile::new(2, 2, vec![DataBlock::zeros(3, 2)]).is_err());
    }
}
