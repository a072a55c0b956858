#![allow(dead_code)]

use partdpp::{gram, FeatureMatrix, Kernel, Partition};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_features(rng: &mut ChaCha8Rng, m: usize, n: usize) -> FeatureMatrix {
    let data = (0..m * n).map(|_| rng.random_range(-1.0..1.0)).collect();
    FeatureMatrix::new(m, n, data).unwrap()
}

pub fn random_kernel(rng: &mut ChaCha8Rng, m: usize, n: usize) -> Kernel {
    gram(&random_features(rng, m, n))
}

/// Random labels with every one of the `p` parts non-empty.
pub fn random_partition(rng: &mut ChaCha8Rng, m: usize, p: usize) -> Partition {
    let mut labels: Vec<usize> = (0..m)
        .map(|i| if i < p { i } else { rng.random_range(0..p) })
        .collect();
    labels.shuffle(rng);
    Partition::new(labels).unwrap()
}

pub fn random_quotas(rng: &mut ChaCha8Rng, partition: &Partition) -> Vec<usize> {
    loop {
        let q: Vec<usize> = partition
            .part_sizes()
            .iter()
            .map(|&s| rng.random_range(0..=s))
            .collect();
        if q.iter().sum::<usize>() > 0 {
            return q;
        }
    }
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / b.abs().max(a.abs())
    }
}

/// Pearson chi-square of observed counts against probabilities. Cells with an
/// expected count below 5 are pooled. Returns `(statistic, dof, p-value)`.
pub fn chi_square(counts: &[u64], probs: &[f64]) -> (f64, usize, f64) {
    let n: u64 = counts.iter().sum();
    let mut cells: Vec<(f64, f64)> = Vec::new();
    let mut pooled = (0.0, 0.0);
    for (&c, &p) in counts.iter().zip(probs) {
        let e = p * n as f64;
        if e < 5.0 {
            pooled.0 += c as f64;
            pooled.1 += e;
        } else {
            cells.push((c as f64, e));
        }
    }
    if pooled.1 > 0.0 || pooled.0 > 0.0 {
        cells.push(pooled);
    }
    let stat: f64 = cells
        .iter()
        .map(|&(o, e)| {
            if e > 0.0 {
                (o - e) * (o - e) / e
            } else {
                f64::INFINITY * o
            }
        })
        .sum();
    let dof = cells.len().saturating_sub(1).max(1);
    let p = 1.0 - ChiSquared::new(dof as f64).unwrap().cdf(stat);
    (stat, dof, p)
}
