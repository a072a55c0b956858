//! Wall-clock comparison of k-DPP, independent per-part k-DPPs and the
//! Partition-DPP on random Gaussian features.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use partdpp::{
    sample_kdpp, sample_partition_dpp, FeatureMatrix, Partition, PartitionSpec, RngSeed, Subset,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;

use crate::io::{num, one_based};
use crate::CliError;

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Grid {
    configs: Vec<GridConfig>,
    #[serde(default)]
    seed: u64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct GridConfig {
    parts: Vec<usize>,
    quotas: Vec<usize>,
    /// Feature dimension; defaults to the number of items.
    n: Option<usize>,
}

#[derive(Serialize)]
struct TimingRecord<'a> {
    parts: &'a [usize],
    quotas: &'a [usize],
    n: usize,
    method: &'static str,
    seconds: Box<RawValue>,
    subset: Vec<usize>,
}

pub fn run(grid_path: &Path, out: &mut dyn Write) -> Result<(), CliError> {
    let text = std::fs::read_to_string(grid_path)
        .map_err(|e| CliError::Input(format!("{}: {e}", grid_path.display())))?;
    let grid: Grid = serde_json::from_str(&text)
        .map_err(|e| CliError::Input(format!("{}: {e}", grid_path.display())))?;

    for (c, config) in grid.configs.iter().enumerate() {
        let partition = Partition::contiguous(&config.parts)?;
        let spec = PartitionSpec::new(partition, config.quotas.clone())?;
        let m = spec.m();
        let n = config.n.unwrap_or(m);
        if n == 0 {
            return Err(CliError::Input(
                "feature dimension n must be positive".into(),
            ));
        }
        let seed = RngSeed(grid.seed).split(c as u64);
        let a = gaussian_features(m, n, seed.0)?;

        let mut emit =
            |method: &'static str, seconds: f64, subset: &Subset| -> Result<(), CliError> {
                let record = TimingRecord {
                    parts: &config.parts,
                    quotas: &config.quotas,
                    n,
                    method,
                    seconds: num(seconds),
                    subset: one_based(subset.as_slice()),
                };
                writeln!(out, "{}", serde_json::to_string(&record)?)?;
                out.flush()?;
                Ok(())
            };

        let start = Instant::now();
        let s = sample_kdpp(&a, spec.k(), seed)?;
        emit("k-DPP", start.elapsed().as_secs_f64(), &s)?;

        let start = Instant::now();
        let s = independent_kdpps(&a, &spec, seed)?;
        emit("k_i-DPPs", start.elapsed().as_secs_f64(), &s)?;

        let start = Instant::now();
        let s = sample_partition_dpp(&a, &spec, seed)?;
        emit("Partition-DPP", start.elapsed().as_secs_f64(), &s)?;
    }
    Ok(())
}

fn gaussian_features(m: usize, n: usize, seed: u64) -> Result<FeatureMatrix, CliError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..m * n)
        .map(|_| StandardNormal.sample(&mut rng))
        .collect();
    Ok(FeatureMatrix::new(m, n, data)?)
}

/// One `k_l`-DPP per part on that part's rows, results concatenated.
fn independent_kdpps(
    a: &FeatureMatrix,
    spec: &PartitionSpec,
    seed: RngSeed,
) -> Result<Subset, CliError> {
    let partition = spec.partition();
    let mut chosen = Vec::with_capacity(spec.k());
    for (l, &k) in spec.quotas().iter().enumerate() {
        if k == 0 {
            continue;
        }
        let members = partition.members(l);
        let rows = a.select_rows(&members)?;
        let s = sample_kdpp(&rows, k, seed.split(l as u64 + 1))?;
        chosen.extend(s.as_slice().iter().map(|&i| members[i]));
    }
    Ok(Subset::new(chosen, a.nrows())?)
}
