//! CSV and JSON emitters for spectra and fidelity tables.

use std::io::Write;

use serde::Serialize;

use crate::error::Result;
use crate::metrics::{FidelityReport, PropertyReport};
use crate::spectral::SpectralAnalysis;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectrumRow {
    pub index: usize,
    pub singular_value: f64,
    pub eigenvalue: f64,
    pub is_outlier: bool,
}

pub fn spectrum_rows(analysis: &SpectralAnalysis) -> Vec<SpectrumRow> {
    let threshold = analysis.edge.outlier_threshold(analysis.decomposition.d);
    analysis
        .decomposition
        .singular_values
        .iter()
        .enumerate()
        .map(|(index, &s)| SpectrumRow {
            index,
            singular_value: s,
            eigenvalue: s * s,
            is_outlier: s * s > threshold,
        })
        .collect()
}

/// A `# lambda_plus_hat=..,k=..,r_plus_hat=..` line, then one row per
/// singular value.
pub fn write_spectrum_csv(analysis: &SpectralAnalysis, mut out: impl Write) -> Result<()> {
    let e = &analysis.edge;
    writeln!(out, "# lambda_plus_hat={},k={},r_plus_hat={}", e.lambda_plus_hat, e.k, e.r_plus_hat)?;
    let mut w = csv::Writer::from_writer(out);
    for row in spectrum_rows(analysis) {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumHeader {
    pub lambda_plus_hat: f64,
    pub k: usize,
    pub r_plus_hat: usize,
}

/// Reads back the marker line of a spectrum CSV.
pub fn parse_spectrum_header(text: &str) -> Option<SpectrumHeader> {
    let line = text.lines().next()?.strip_prefix("# ")?;
    let mut lambda = None;
    let mut k = None;
    let mut r = None;
    for part in line.split(',') {
        let (key, value) = part.split_once('=')?;
        match key {
            "lambda_plus_hat" => lambda = value.parse().ok(),
            "k" => k = value.parse().ok(),
            "r_plus_hat" => r = value.parse().ok(),
            _ => {}
        }
    }
    Some(SpectrumHeader {
        lambda_plus_hat: lambda?,
        k: k?,
        r_plus_hat: r?,
    })
}

/// Columns `method,bits,l2_pct,ip_bias,ip_std,mean_rank,n_blocks`; an
/// absent rank is an empty field.
pub fn write_fidelity_csv(reports: &[FidelityReport], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in reports {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize + ?Sized>(value: &T, mut out: impl Write) -> Result<()> {
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

#[derive(Debug, Serialize)]
pub struct ComparisonReport<'a> {
    pub rows: &'a [FidelityReport],
    #[serde(skip_serializing_if = "Option::is_none")]
    pub properties: Option<&'a PropertyReport>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::analyze;
    use crate::synth::{sample_block, SpikedModelSpec};

    #[test]
    fn spectrum_csv_layout() {
        let (b, _) = sample_block(&SpikedModelSpec::white(64, 64, vec![6.0], 1)).unwrap();
        let a = analyze(&b).unwrap();
        let mut buf = Vec::new();
        write_spectrum_csv(&a, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let header = parse_spectrum_header(&text).unwrap();
        assert_eq!(header.k, a.edge.k);
        assert_eq!(header.r_plus_hat, a.edge.r_plus_hat);
        let mut lines = text.lines().skip(1);
        assert_eq!(lines.next().unwrap(), "index,singular_value,eigenvalue,is_outlier");
        let rows: Vec<_> = lines.collect();
        assert_eq!(rows.len(), 64);
        let marked = rows.iter().filter(|l| l.ends_with("true")).count();
        assert_eq!(marked, a.edge.r_plus_hat);
    }

    #[test]
    fn fidelity_columns_fixed() {
        let r = FidelityReport {
            method: "tq_mse".into(),
            bits_total: 2.0,
            rel_l2_percent: 34.0,
            ip_bias: 0.0,
            ip_std: 0.03,
            mean_rank: None,
            n_blocks: 3,
        };
        let mut buf = Vec::new();
        write_fidelity_csv(&[r], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "method,bits,l2_pct,ip_bias,ip_std,mean_rank,n_blocks");
        assert_eq!(lines.next().unwrap(), "tq_mse,2.0,34.0,0.0,0.03,,3");
    }
}
