//! Import of externally dumped tensors of shape `(rows, d)`.

use std::path::Path;
use std::str::FromStr;

use log::warn;

use super::BlockFile;
use crate::block::DataBlock;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layout {
    /// Little-endian f32, row-major, no header.
    RawF32,
    /// One row per line, comma separated, no header.
    Csv,
}

impl Layout {
    /// Guesses from the file extension; anything but `.csv` is raw.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("csv") => Layout::Csv,
            _ => Layout::RawF32,
        }
    }
}

impl FromStr for Layout {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "raw" | "f32" => Ok(Layout::RawF32),
            "csv" => Ok(Layout::Csv),
            other => Err(format!("unknown layout '{other}'")),
        }
    }
}

fn read_raw(buf: &[u8], d: usize) -> Result<Vec<Vec<f64>>> {
    let row_bytes = d * 4;
    if buf.len() % row_bytes != 0 {
        return Err(Error::Ingest {
            row: buf.len() / row_bytes,
            message: format!("{} bytes is not a whole number of {d}-wide f32 rows", buf.len()),
        });
    }
    Ok(buf
        .chunks_exact(row_bytes)
        .map(|r| {
            r.chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("chunk of 4")) as f64)
                .collect()
        })
        .collect())
}

fn read_csv(buf: &[u8], d: usize) -> Result<Vec<Vec<f64>>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(buf);
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        if record.len() != d {
            return Err(Error::Ingest {
                row: i,
                message: format!("expected {d} columns, found {}", record.len()),
            });
        }
        let row = record
            .iter()
            .map(|f| {
                f.parse::<f64>().map_err(|e| Error::Ingest {
                    row: i,
                    message: format!("cannot parse '{f}': {e}"),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    Ok(rows)
}

/// Splits rows into `floor(rows / n)` blocks of `n` rows. The remainder is
/// dropped, with a warning. Values are rounded to f32, the container dtype.
pub fn blocks_from_rows(rows: &[Vec<f64>], n: usize, d: usize) -> Result<BlockFile> {
    if n == 0 || d == 0 {
        return Err(Error::config("block rows and width must be positive"));
    }
    for (i, row) in rows.iter().enumerate() {
        if row.len() != d {
            return Err(Error::mismatch(format!("{d} columns"), format!("{} at row {i}", row.len())));
        }
        if row.iter().any(|v| !(*v as f32).is_finite()) {
            return Err(Error::Ingest {
                row: i,
                message: "non-finite value or f32 overflow".into(),
            });
        }
    }
    let count = rows.len() / n;
    let dropped = rows.len() - count * n;
    if dropped > 0 {
        warn!("{dropped} rows dropped");
    }
    let blocks = rows
        .chunks_exact(n)
        .map(|chunk| {
            let rounded: Vec<Vec<f64>> = chunk
                .iter()
                .map(|r| r.iter().map(|v| *v as f32 as f64).collect())
                .collect();
            DataBlock::from_rows(&rounded)
        })
        .collect::<Result<Vec<_>>>()?;
    BlockFile::new(n, d, blocks)
}

pub fn ingest_bytes(buf: &[u8], n: usize, d: usize, layout: Layout) -> Result<BlockFile> {
    if d == 0 {
        return Err(Error::config("width must be positive"));
    }
    let rows = match layout {
        Layout::RawF32 => read_raw(buf, d)?,
        Layout::Csv => read_csv(buf, d)?,
    };
    blocks_from_rows(&rows, n, d)
}

pub fn ingest_external(path: impl AsRef<Path>, n: usize, d: usize, layout: Layout) -> Result<BlockFile> {
    ingest_bytes(&std::fs::read(path)?, n, d, layout)
}

/// Inverse of [`ingest_bytes`]: all blocks stacked row-wise.
pub fn export_bytes(file: &BlockFile, layout: Layout) -> Result<Vec<u8>> {
    match layout {
        Layout::RawF32 => {
            let mut out = Vec::with_capacity(file.blocks.len() * file.n * file.d * 4);
            for b in &file.blocks {
                for v in b.to_row_major() {
                    out.extend_from_slice(&(v as f32).to_le_bytes());
                }
            }
            Ok(out)
        }
        Layout::Csv => {
            let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
            for b in &file.blocks {
                for t in 0..b.n() {
                    w.write_record(b.row(t).iter().map(|v| (*v as f32).to_string()))?;
                }
            }
            w.into_inner().map_err(|e| Error::Io(e.into_error()))
        }
    }
}

pub fn export_external(file: &BlockFile, path: impl AsRef<Path>, layout: Layout) -> Result<()> {
    std::fs::write(path, export_bytes(file, layout)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows(count: usize, d: usize) -> Vec<Vec<f64>> {
        (0..count)
            .map(|i| (0..d).map(|j| ((i * d + j) as f64 * 0.37).sin()).collect())
            .collect()
    }

    fn raw(rows: &[Vec<f64>]) -> Vec<u8> {
        rows.iter().flatten().flat_map(|v| (*v as f32).to_le_bytes()).collect()
    }

    #[test]
    fn csv_splits_into_full_blocks() {
        let text: String = rows(256, 128)
            .iter()
            .map(|r| r.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",") + "\n")
            .collect();
        let f = ingest_bytes(text.as_bytes(), 128, 128, Layout::Csv).unwrap();
        assert_eq!(f.blocks.len(), 2);
        assert!(f.truth.is_none());
    }

    #[test]
    fn raw_drops_remainder() {
        let f = ingest_bytes(&raw(&rows(300, 128)), 128, 128, Layout::RawF32).unwrap();
        assert_eq!(f.blocks.len(), 2);
    }

    #[test]
    fn round_trip_is_idempotent() {
        for layout in [Layout::RawF32, Layout::Csv] {
            let first = ingest_bytes(&raw(&rows(40, 8)), 10, 8, Layout::RawF32).unwrap();
            let exported = export_bytes(&first, layout).unwrap();
            let second = ingest_bytes(&exported, 10, 8, layout).unwrap();
            assert_eq!(first.encode().unwrap(), second.encode().unwrap());
        }
    }

    #[test]
    fn non_finite_reports_row() {
        let mut r = rows(20, 4);
        r[13][2] = f64::NAN;
        match ingest_bytes(&raw(&r), 10, 4, Layout::RawF32) {
            Err(Error::Ingest { row, .. }) => assert_eq!(row, 13),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn ragged_csv_rejected() {
        let err = ingest_bytes(b"1,2,3\n4,5\n", 1, 3, Layout::Csv).unwrap_err();
        assert!(matches!(err, Error::Ingest { row: 1, .. }), "{err:?}");
    }
}
