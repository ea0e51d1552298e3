use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;

use eoptshrinkq::io::report::{self, ComparisonReport};
use eoptshrinkq::io::{ingest, BlockFile, CompressedFile, Layout};
use eoptshrinkq::metrics::{self, Stored, DEFAULT_BIAS_ROTATIONS, DEFAULT_QUERIES};
use eoptshrinkq::pipeline::{self, CompressionConfig, KiviAxis, Method};
use eoptshrinkq::rng::{derive_seed, SeedRole};
use eoptshrinkq::shrink::Loss;
use eoptshrinkq::spectral;
use eoptshrinkq::synth::{self, CovarianceSpec, SpikedModelSpec};
use eoptshrinkq::{Error, Result};

#[derive(Parser)]
#[command(name = "eoptshrinkq", version, about = "Spectral shrinkage plus scalar quantization for matrix blocks")]
struct Cli {
    /// Worker threads for per-block work.
    #[arg(long, global = true, default_value_t = default_workers())]
    workers: usize,

    #[command(subcommand)]
    command: Command,
}

fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

#[derive(Subcommand)]
enum Command {
    /// Write synthetic spiked blocks with ground truth.
    Gen(GenArgs),
    /// Compress a block file.
    Compress(CompressArgs),
    /// Decode a compressed file back to a block file.
    Decompress(DecompressArgs),
    /// Dump the singular value spectrum of one block as CSV.
    Spectrum(SpectrumArgs),
    /// Fidelity report (JSON) for an original and its reconstruction.
    Eval(EvalArgs),
    /// Comparison table over methods and bit widths.
    Compare(CompareArgs),
    /// Convert raw f32 or CSV rows into a block file.
    Ingest(IngestArgs),
    /// Write all rows of a block file as raw f32 or CSV.
    Export(ExportArgs),
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    d: usize,
    /// Comma-separated descending signal strengths; empty for pure noise.
    #[arg(long, default_value = "", allow_hyphen_values = true)]
    strengths: String,
    /// Row covariance: identity, toeplitz:RHO or linear:LO:HI.
    #[arg(long, default_value = "identity")]
    cov_a: String,
    /// Column covariance, same syntax as --cov-a.
    #[arg(long, default_value = "identity")]
    cov_b: String,
    #[arg(long, default_value_t = 1)]
    blocks: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CompressArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, default_value = "eoptshrinkq_mse")]
    method: Method,
    /// Residual bits per entry.
    #[arg(long, default_value_t = 2)]
    bits: u8,
    #[arg(long, default_value_t = 4)]
    factor_bits: u8,
    #[arg(long, default_value = "frobenius")]
    loss: Loss,
    #[arg(long, default_value_t = 64)]
    kivi_group: usize,
    #[arg(long, default_value = "per-channel")]
    kivi_axis: KiviAxis,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct DecompressArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SpectrumArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, default_value_t = 0)]
    block_index: usize,
    /// Defaults to standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    /// Original block file.
    #[arg(long = "in")]
    input: PathBuf,
    /// Compressed file or reconstructed block file.
    #[arg(long)]
    recon: PathBuf,
    #[arg(long, default_value_t = DEFAULT_QUERIES)]
    queries: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Defaults to standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "tq_mse,svd1_tq,eoptshrinkq_mse")]
    methods: Vec<Method>,
    #[arg(long, value_delimiter = ',', default_value = "2,3,4")]
    bits_list: Vec<u8>,
    #[arg(long, default_value_t = 4)]
    factor_bits: u8,
    #[arg(long, default_value = "frobenius")]
    loss: Loss,
    #[arg(long, default_value_t = DEFAULT_QUERIES)]
    queries: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Comparison CSV.
    #[arg(long)]
    out: PathBuf,
    /// Property report JSON, written only for files with ground truth.
    /// Defaults to the CSV path with a `.properties.json` extension.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct IngestArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    d: usize,
    /// raw or csv; guessed from the extension when absent.
    #[arg(long)]
    layout: Option<Layout>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ExportArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    layout: Option<Layout>,
    #[arg(long)]
    out: PathBuf,
}

fn parse_strengths(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| {
            p.parse::<f64>()
                .map_err(|e| Error::InvalidConfig(format!("bad strength '{p}': {e}")))
        })
        .collect()
}

fn parse_cov(s: &str, dim: usize) -> Result<CovarianceSpec> {
    let parts: Vec<&str> = s.split(':').collect();
    let num = |p: &str| {
        p.parse::<f64>()
            .map_err(|e| Error::InvalidConfig(format!("bad covariance parameter '{p}': {e}")))
    };
    match parts.as_slice() {
        ["identity"] => Ok(CovarianceSpec::identity(dim)),
        ["toeplitz", rho] => Ok(CovarianceSpec::toeplitz(num(rho)?, dim)),
        ["linear", lo, hi] => {
            let (lo, hi) = (num(lo)?, num(hi)?);
            let step = if dim > 1 { (hi - lo) / (dim - 1) as f64 } else { 0.0 };
            Ok(CovarianceSpec::diagonal((0..dim).map(|i| lo + step * i as f64).collect()))
        }
        _ => Err(Error::InvalidConfig(format!(
            "unknown covariance '{s}' (expected identity, toeplitz:RHO or linear:LO:HI)"
        ))),
    }
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn gen(a: GenArgs) -> Result<()> {
    let spec = SpikedModelSpec {
        signal_strengths: parse_strengths(&a.strengths)?,
        noise_row_cov: parse_cov(&a.cov_a, a.n)?,
        noise_col_cov: parse_cov(&a.cov_b, a.d)?,
        ..SpikedModelSpec::white(a.n, a.d, vec![], a.seed)
    };
    spec.validate()?;
    if a.blocks == 0 {
        return Err(Error::InvalidConfig("--blocks must be positive".into()));
    }
    let pairs = (0..a.blocks as u64)
        .map(|i| synth::sample_block(&spec.with_seed(derive_seed(a.seed, i, SeedRole::Synthetic))))
        .collect::<Result<Vec<_>>>()?;
    BlockFile::with_truth(a.n, a.d, pairs)?.save(&a.out)?;
    info!("wrote {} blocks to {}", a.blocks, a.out.display());
    Ok(())
}

fn compress(a: CompressArgs, workers: usize) -> Result<()> {
    let file = BlockFile::load(&a.input)?;
    let config = CompressionConfig {
        method: a.method,
        residual_bits: a.bits,
        factor_bits: a.factor_bits,
        loss: a.loss,
        block_rows: file.n,
        kivi_group: a.kivi_group,
        kivi_axis: a.kivi_axis,
        root_seed: a.seed,
    };
    let blocks = pipeline::compress_blocks(&file.blocks, &config, workers)?;
    let out = CompressedFile {
        config,
        n: file.n,
        d: file.d,
        blocks,
    };
    out.save(&a.out)?;
    info!("compressed {} blocks with {}", out.blocks.len(), a.method);
    Ok(())
}

fn decompress(a: DecompressArgs, workers: usize) -> Result<()> {
    let file = CompressedFile::load(&a.input)?;
    let blocks = pipeline::decompress_blocks(&file.blocks, workers)?;
    BlockFile::new(file.n, file.d, blocks)?.save(&a.out)
}

fn spectrum(a: SpectrumArgs) -> Result<()> {
    let file = BlockFile::load(&a.input)?;
    let block = file.blocks.get(a.block_index).ok_or_else(|| {
        Error::InvalidConfig(format!("block index {} out of range ({} blocks)", a.block_index, file.blocks.len()))
    })?;
    let analysis = spectral::analyze(block)?;
    let mut out = output(a.out.as_deref())?;
    report::write_spectrum_csv(&analysis, &mut out)?;
    out.flush()?;
    Ok(())
}

fn is_compressed(path: &Path) -> Result<bool> {
    Ok(eoptshrinkq::io::compressed::looks_compressed(&std::fs::read(path)?))
}

fn eval(a: EvalArgs) -> Result<()> {
    let original = BlockFile::load(&a.input)?;
    let stored = if is_compressed(&a.recon)? {
        let c = CompressedFile::load(&a.recon)?;
        if (c.n, c.d) != (original.n, original.d) {
            return Err(Error::DimensionMismatch {
                expected: format!("{}x{}", original.n, original.d),
                found: format!("{}x{}", c.n, c.d),
            });
        }
        Stored::from_compressed(original.blocks.clone(), &c.blocks)?
    } else {
        let r = BlockFile::load(&a.recon)?;
        Stored::from_blocks(original.blocks.clone(), r.blocks)?
    };
    let report = metrics::evaluate(&original.blocks, &stored, a.queries, a.seed)?;
    let mut out = output(a.out.as_deref())?;
    report::write_json(&report, &mut out)?;
    out.flush()?;
    Ok(())
}

fn compare(a: CompareArgs) -> Result<()> {
    let file = BlockFile::load(&a.input)?;
    let base = CompressionConfig {
        factor_bits: a.factor_bits,
        loss: a.loss,
        block_rows: file.n,
        root_seed: a.seed,
        ..CompressionConfig::default()
    };
    let rows = metrics::comparison_table(&file.blocks, &a.methods, &a.bits_list, &base, a.queries)?;
    report::write_fidelity_csv(&rows, BufWriter::new(File::create(&a.out)?))?;
    if file.truth.is_some() {
        let cfg = CompressionConfig {
            method: Method::EoptMse,
            residual_bits: a.bits_list[0],
            ..base
        };
        let props = metrics::property_report(&file.pairs(), &cfg, DEFAULT_BIAS_ROTATIONS)?;
        let path = a.report.unwrap_or_else(|| a.out.with_extension("properties.json"));
        let mut w = BufWriter::new(File::create(&path)?);
        report::write_json(
            &ComparisonReport {
                rows: &rows,
                properties: Some(&props),
            },
            &mut w,
        )?;
        w.flush()?;
        info!("property report written to {}", path.display());
    }
    Ok(())
}

fn ingest_cmd(a: IngestArgs) -> Result<()> {
    let layout = a.layout.unwrap_or_else(|| Layout::from_path(&a.input));
    ingest::ingest_external(&a.input, a.n, a.d, layout)?.save(&a.out)
}

fn export_cmd(a: ExportArgs) -> Result<()> {
    let layout = a.layout.unwrap_or_else(|| Layout::from_path(&a.out));
    ingest::export_external(&BlockFile::load(&a.input)?, &a.out, layout)
}

fn run(cli: Cli) -> Result<()> {
    let workers = cli.workers.max(1);
    // Evaluation code runs on the global pool.
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build_global()
        .map_err(|e| Error::InvalidConfig(format!("cannot start worker pool: {e}")))?;
    match cli.command {
        Command::Gen(a) => gen(a),
        Command::Compress(a) => compress(a, workers),
        Command::Decompress(a) => decompress(a, workers),
        Command::Spectrum(a) => spectrum(a),
        Command::Eval(a) => eval(a),
        Command::Compare(a) => compare(a),
        Command::Ingest(a) => ingest_cmd(a),
        Command::Export(a) => export_cmd(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
