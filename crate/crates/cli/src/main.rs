//! `partdpp`: exact sampling and MAP inference for partition-constrained DPPs.
//!
//! Items are numbered from 1 on the command line and in every output record.
//! Each command writes one JSON object per line.

mod bench;
mod io;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use partdpp::{
    local_search_map, log_det_rows, partition_function_report, sample_kdpp, sample_partition_dpp,
    DppError, FeatureMatrix, PartitionSpec, RngSeed, Subset,
};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::value::RawValue;

use crate::io::{num, one_based, InputKind};

#[derive(Debug)]
pub enum CliError {
    Input(String),
    Dpp(DppError),
    Io(std::io::Error),
}

impl From<DppError> for CliError {
    fn from(e: DppError) -> Self {
        CliError::Dpp(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Io(e.into())
    }
}

impl CliError {
    /// 2 for bad input, 3 for numerical failure.
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Dpp(e) if e.is_numerical() => 3,
            _ => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Input(msg) => write!(f, "invalid input: {msg}"),
            CliError::Dpp(e) => write!(f, "{e}"),
            CliError::Io(e) => write!(f, "i/o error: {e}"),
        }
    }
}

#[derive(Parser)]
#[command(name = "partdpp", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw exact samples from a k-DPP or a Partition-DPP.
    Sample(SampleArgs),
    /// Approximate MAP subset of size k by greedy plus swap local search.
    Map(MapArgs),
    /// Constrained partition function Z and the coefficient it comes from.
    PartitionFn(PartitionFnArgs),
    /// Time k-DPP, per-part k-DPPs and the Partition-DPP on a grid of configurations.
    Bench(BenchArgs),
    /// Write the kernel A Aᵀ of a feature matrix as CSV.
    Gram(GramArgs),
}

#[derive(Args)]
struct InputArgs {
    /// CSV matrix, one row per line, no header.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum, default_value_t = InputKind::Features)]
    kind: InputKind,
}

#[derive(Args)]
#[group(required = true, multiple = false, id = "constraint")]
struct ConstraintArgs {
    /// Partition JSON: {"part_of": [1-based part per item], "quotas": [...]}.
    #[arg(long, group = "constraint")]
    partition: Option<PathBuf>,
    /// Plain cardinality constraint (a k-DPP).
    #[arg(long, group = "constraint")]
    k: Option<usize>,
}

#[derive(Args)]
struct SampleArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    constraint: ConstraintArgs,
    /// Per-part quotas, overriding those in the partition file.
    #[arg(long, value_delimiter = ',', requires = "partition")]
    quotas: Option<Vec<usize>>,
    /// Number of samples.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    n: u64,
    /// Sample j uses seed ⊕ (j · 0x9E3779B97F4A7C15).
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output file (default stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct MapArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long)]
    k: usize,
    #[arg(long, default_value_t = 0.1)]
    eps: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PartitionFnArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    constraint: ConstraintArgs,
    #[arg(long, value_delimiter = ',', requires = "partition")]
    quotas: Option<Vec<usize>>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// JSON: {"configs": [{"parts": [...], "quotas": [...], "n": 48}], "seed": 0}.
    #[arg(long)]
    grid: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GramArgs {
    /// Feature CSV.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Serialize)]
struct SampleRecord {
    sample_index: u64,
    subset: Vec<usize>,
    log_det: Box<RawValue>,
    part_counts: Vec<usize>,
}

#[derive(Serialize)]
struct MapRecord {
    subset: Vec<usize>,
    log_det_greedy: Box<RawValue>,
    log_det_final: Box<RawValue>,
    swaps: usize,
    kappa: Box<RawValue>,
    eps: Box<RawValue>,
}

#[derive(Serialize)]
struct PartitionFnRecord {
    #[serde(rename = "Z")]
    z: Box<RawValue>,
    #[serde(rename = "log_Z")]
    log_z: Box<RawValue>,
    coeff_index: Vec<usize>,
    sign: i8,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = configure_threads() {
        eprintln!("partdpp: {e}");
        return ExitCode::from(e.exit_code());
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Io(e)) if e.kind() == std::io::ErrorKind::BrokenPipe => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("partdpp: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

/// `DPP_THREADS` caps the worker pool; unset means one worker per core.
fn configure_threads() -> Result<(), CliError> {
    let Ok(value) = std::env::var("DPP_THREADS") else {
        return Ok(());
    };
    let threads: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&t| t > 0)
        .ok_or_else(|| {
            CliError::Input(format!(
                "DPP_THREADS must be a positive integer, got {value:?}"
            ))
        })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::Input(e.to_string()))
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Sample(args) => cmd_sample(args),
        Command::Map(args) => cmd_map(args),
        Command::PartitionFn(args) => cmd_partition_fn(args),
        Command::Bench(args) => {
            let mut out = io::open_output(args.out.as_deref())?;
            bench::run(&args.grid, &mut out)?;
            out.flush()?;
            Ok(())
        }
        Command::Gram(args) => {
            let a = io::read_features(&args.input, InputKind::Features)?;
            let k = partdpp::gram(&a);
            io::write_csv(&args.out, k.size(), k.size(), k.as_slice())
        }
    }
}

fn constraint_spec(
    constraint: &ConstraintArgs,
    quotas: Option<Vec<usize>>,
    m: usize,
) -> Result<PartitionSpec, CliError> {
    match (&constraint.partition, constraint.k) {
        (Some(path), _) => {
            let spec = io::read_partition(path, quotas)?;
            if spec.m() != m {
                return Err(CliError::Input(format!(
                    "partition covers {} items but the input has {m}",
                    spec.m()
                )));
            }
            Ok(spec)
        }
        (None, Some(k)) => Ok(PartitionSpec::cardinality(m, k)?),
        (None, None) => unreachable!("clap requires one constraint"),
    }
}

fn cmd_sample(args: SampleArgs) -> Result<(), CliError> {
    let a = io::read_features(&args.input.input, args.input.kind)?;
    let spec = constraint_spec(&args.constraint, args.quotas, a.nrows())?;
    let single_part = args.constraint.partition.is_none();
    let seed = RngSeed(args.seed);

    let draw = |j: u64| -> Result<Subset, CliError> {
        let s = if single_part {
            sample_kdpp(&a, spec.k(), seed.split(j))?
        } else {
            sample_partition_dpp(&a, &spec, seed.split(j))?
        };
        Ok(s)
    };
    // Draws are independent; the ordered collect keeps output identical for
    // any number of workers.
    let samples: Vec<Subset> = (0..args.n)
        .into_par_iter()
        .map(draw)
        .collect::<Result<_, _>>()?;

    let mut out = io::open_output(args.out.as_deref())?;
    for (j, s) in samples.iter().enumerate() {
        writeln!(
            out,
            "{}",
            serde_json::to_string(&sample_record(&a, &spec, j as u64, s)?)?
        )?;
    }
    out.flush()?;
    Ok(())
}

fn sample_record(
    a: &FeatureMatrix,
    spec: &PartitionSpec,
    index: u64,
    s: &Subset,
) -> Result<SampleRecord, CliError> {
    Ok(SampleRecord {
        sample_index: index,
        subset: one_based(s.as_slice()),
        log_det: num(log_det_rows(a, &s.sorted())?),
        part_counts: spec.partition().counts(s.as_slice()),
    })
}

fn cmd_map(args: MapArgs) -> Result<(), CliError> {
    let a = io::read_features(&args.input.input, args.input.kind)?;
    if args.k == 0 || args.k > a.nrows() {
        return Err(CliError::Input(format!(
            "k must be in 1..={}, got {}",
            a.nrows(),
            args.k
        )));
    }
    let r = local_search_map(&a, args.k, args.eps)?;
    let record = MapRecord {
        subset: one_based(r.subset.as_slice()),
        log_det_greedy: num(r.log_det_greedy),
        log_det_final: num(r.log_det),
        swaps: r.swaps_performed,
        kappa: num(r.kappa),
        eps: num(r.eps),
    };
    write_one(args.out.as_deref(), &record)
}

fn cmd_partition_fn(args: PartitionFnArgs) -> Result<(), CliError> {
    let k = io::read_kernel(&args.input.input, args.input.kind)?;
    let spec = constraint_spec(&args.constraint, args.quotas, k.size())?;
    let r = partition_function_report(&k, &spec)?;
    let record = PartitionFnRecord {
        z: num(r.z),
        log_z: num(r.ln_z),
        coeff_index: r.coeff_index,
        sign: if r.z == 0.0 { 0 } else { r.sign },
    };
    write_one(args.out.as_deref(), &record)
}

fn write_one<T: Serialize>(path: Option<&Path>, record: &T) -> Result<(), CliError> {
    let mut out = io::open_output(path)?;
    writeln!(out, "{}", serde_json::to_string(record)?)?;
    out.flush()?;
    Ok(())
}
