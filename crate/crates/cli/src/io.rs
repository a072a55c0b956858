//! Reading matrices and partition specs, writing numbers losslessly.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use partdpp::{
    factor_kernel, gram, FeatureMatrix, Kernel, Partition, PartitionSpec, DEFAULT_PSD_TOL,
};
use serde::Deserialize;
use serde_json::value::RawValue;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum InputKind {
    /// Rows are item feature vectors `A`; the kernel is `A Aᵀ`.
    Features,
    /// The kernel `K` itself, symmetric PSD.
    Kernel,
}

/// Comma-separated rows, no header.
pub fn read_csv(path: &Path) -> Result<(usize, usize, Vec<f64>), CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let mut data = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for (r, record) in reader.records().enumerate() {
        let record = record.map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        if record.iter().all(str::is_empty) {
            continue;
        }
        if *cols.get_or_insert(record.len()) != record.len() {
            return Err(CliError::Input(format!(
                "{}: row {} has {} columns, expected {}",
                path.display(),
                r + 1,
                record.len(),
                cols.unwrap()
            )));
        }
        for (c, field) in record.iter().enumerate() {
            let x: f64 = field.parse().map_err(|_| {
                CliError::Input(format!(
                    "{}: row {}, column {}: {field:?} is not a number",
                    path.display(),
                    r + 1,
                    c + 1
                ))
            })?;
            data.push(x);
        }
        rows += 1;
    }
    match cols {
        Some(c) => Ok((rows, c, data)),
        None => Err(CliError::Input(format!("{}: no rows", path.display()))),
    }
}

/// Loads the input as features; a kernel is factored as `V Λ^{1/2}`.
pub fn read_features(path: &Path, kind: InputKind) -> Result<FeatureMatrix, CliError> {
    let (rows, cols, data) = read_csv(path)?;
    match kind {
        InputKind::Features => Ok(FeatureMatrix::new(rows, cols, data)?),
        InputKind::Kernel => Ok(factor_kernel(
            &kernel_from(rows, cols, data)?,
            DEFAULT_PSD_TOL,
        )?),
    }
}

pub fn read_kernel(path: &Path, kind: InputKind) -> Result<Kernel, CliError> {
    let (rows, cols, data) = read_csv(path)?;
    match kind {
        InputKind::Features => Ok(gram(&FeatureMatrix::new(rows, cols, data)?)),
        InputKind::Kernel => kernel_from(rows, cols, data),
    }
}

fn kernel_from(rows: usize, cols: usize, data: Vec<f64>) -> Result<Kernel, CliError> {
    if rows != cols {
        return Err(CliError::Input(format!(
            "kernel must be square, got {rows}x{cols}"
        )));
    }
    Ok(Kernel::new(rows, data)?)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PartitionFile {
    part_of: Vec<usize>,
    #[serde(default)]
    quotas: Option<Vec<usize>>,
}

/// `{"part_of": [1-based labels], "quotas": [...]}`; `quotas` overrides the
/// file's quotas when given.
pub fn read_partition(path: &Path, quotas: Option<Vec<usize>>) -> Result<PartitionSpec, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let file: PartitionFile = serde_json::from_str(&text)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    if let Some(&bad) = file.part_of.iter().find(|&&l| l == 0) {
        return Err(CliError::Input(format!(
            "part labels are 1-based, found {bad}"
        )));
    }
    let labels = file.part_of.iter().map(|&l| l - 1).collect();
    let quotas = quotas.or(file.quotas).ok_or_else(|| {
        CliError::Input("no quotas given in the partition file or on the command line".into())
    })?;
    Ok(PartitionSpec::new(Partition::new(labels)?, quotas)?)
}

/// A JSON number with 17 significant digits, so every `f64` round-trips.
pub fn num(x: f64) -> Box<RawValue> {
    if x.is_finite() {
        RawValue::from_string(format!("{x:.16e}")).expect("formatted float is valid JSON")
    } else {
        RawValue::from_string("null".into()).unwrap()
    }
}

pub fn one_based(items: &[usize]) -> Vec<usize> {
    let mut out: Vec<usize> = items.iter().map(|&i| i + 1).collect();
    out.sort_unstable();
    out
}

pub fn open_output(path: Option<&Path>) -> Result<Box<dyn Write>, CliError> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).map_err(|e| CliError::Input(format!("{}: {e}", p.display())))?,
        )),
        None => Box::new(BufWriter::new(std::io::stdout().lock())),
    })
}

pub fn write_csv(path: &Path, rows: usize, cols: usize, data: &[f64]) -> Result<(), CliError> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    for r in 0..rows {
        w.write_record(
            data[r * cols..(r + 1) * cols]
                .iter()
                .map(|x| format!("{x:.16e}")),
        )
        .map_err(|e| CliError::Io(e.into()))?;
    }
    w.flush()?;
    Ok(())
}
