//! Brute-force reference implementations.
//!
//! Everything here enumerates subsets or ordered tuples literally and uses its
//! own determinant (cofactor expansion up to 6×6, fraction-free elimination
//! above) and its own Gram products, so that it shares no numerical code path
//! with the fast routines it checks. Summation runs in lexicographic order.

use std::collections::BTreeMap;

use crate::error::{DppError, Result};
use crate::matrix::{FeatureMatrix, Kernel, Partition, PartitionSpec, Subset};

/// Largest number of subsets or tuples an oracle will enumerate.
pub const ENUMERATION_LIMIT: f64 = 1e6;

fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn guard(count: f64) -> Result<()> {
    if count > ENUMERATION_LIMIT {
        Err(DppError::TooLarge {
            count,
            limit: ENUMERATION_LIMIT,
        })
    } else {
        Ok(())
    }
}

/// Determinant of a row-major `n × n` matrix.
pub fn reference_det(a: &[f64], n: usize) -> f64 {
    assert_eq!(a.len(), n * n);
    if n <= 6 {
        cofactor_det(a, n)
    } else {
        bareiss_det(a, n)
    }
}

fn cofactor_det(a: &[f64], n: usize) -> f64 {
    match n {
        0 => 1.0,
        1 => a[0],
        2 => a[0] * a[3] - a[1] * a[2],
        _ => {
            let mut total = 0.0;
            let mut minor = Vec::with_capacity((n - 1) * (n - 1));
            for col in 0..n {
                minor.clear();
                for r in 1..n {
                    for c in (0..n).filter(|&c| c != col) {
                        minor.push(a[r * n + c]);
                    }
                }
                let sign = if col % 2 == 0 { 1.0 } else { -1.0 };
                total += sign * a[col] * cofactor_det(&minor, n - 1);
            }
            total
        }
    }
}

/// Fraction-free (Bareiss) elimination with row exchanges on zero pivots.
fn bareiss_det(a: &[f64], n: usize) -> f64 {
    let mut m = a.to_vec();
    let mut sign = 1.0;
    let mut prev = 1.0;
    for k in 0..n - 1 {
        if m[k * n + k] == 0.0 {
            let Some(r) = (k + 1..n).find(|&r| m[r * n + k] != 0.0) else {
                return 0.0;
            };
            for c in 0..n {
                m.swap(k * n + c, r * n + c);
            }
            sign = -sign;
        }
        let pivot = m[k * n + k];
        for i in k + 1..n {
            for j in k + 1..n {
                m[i * n + j] = (m[i * n + j] * pivot - m[i * n + k] * m[k * n + j]) / prev;
            }
        }
        prev = pivot;
    }
    sign * m[n * n - 1]
}

fn minor(kernel: &Kernel, subset: &[usize]) -> f64 {
    let s = subset.len();
    let mut buf = Vec::with_capacity(s * s);
    for &i in subset {
        for &j in subset {
            buf.push(kernel.get(i, j));
        }
    }
    reference_det(&buf, s)
}

/// `A Aᵀ` by the textbook triple loop.
pub fn naive_gram(a: &FeatureMatrix) -> Vec<f64> {
    let (m, n) = (a.nrows(), a.ncols());
    let mut out = vec![0.0; m * m];
    for i in 0..m {
        for j in 0..m {
            let mut s = 0.0;
            for c in 0..n {
                s += a.get(i, c) * a.get(j, c);
            }
            out[i * m + j] = s;
        }
    }
    out
}

/// All subsets meeting the quotas, each sorted, in lexicographic order.
pub fn enumerate_valid_subsets(spec: &PartitionSpec) -> Result<Vec<Subset>> {
    let partition = spec.partition();
    let count: f64 = partition
        .part_sizes()
        .iter()
        .zip(spec.quotas())
        .map(|(&m, &k)| binomial(m, k))
        .product();
    guard(count)?;

    // Items of each part still available after position `i`.
    let m = spec.m();
    let mut remaining_after = vec![vec![0usize; partition.num_parts()]; m + 1];
    for i in (0..m).rev() {
        remaining_after[i] = remaining_after[i + 1].clone();
        remaining_after[i][partition.part_of(i)] += 1;
    }

    let mut out = Vec::with_capacity(count as usize);
    let mut current = Vec::with_capacity(spec.k());
    let mut counts = vec![0usize; partition.num_parts()];
    fn recurse(
        start: usize,
        spec: &PartitionSpec,
        remaining_after: &[Vec<usize>],
        current: &mut Vec<usize>,
        counts: &mut Vec<usize>,
        out: &mut Vec<Subset>,
    ) {
        let quotas = spec.quotas();
        let feasible = counts
            .iter()
            .zip(quotas)
            .zip(&remaining_after[start])
            .all(|((&c, &q), &r)| c + r >= q);
        if !feasible {
            return;
        }
        if current.len() == spec.k() {
            out.push(Subset::from_vec_unchecked(current.clone()));
            return;
        }
        for i in start..spec.m() {
            let l = spec.partition().part_of(i);
            if counts[l] < quotas[l] {
                counts[l] += 1;
                current.push(i);
                recurse(i + 1, spec, remaining_after, current, counts, out);
                current.pop();
                counts[l] -= 1;
            }
        }
    }
    recurse(
        0,
        spec,
        &remaining_after,
        &mut current,
        &mut counts,
        &mut out,
    );
    Ok(out)
}

/// `Σ det(K_{S,S})` over every subset meeting the quotas.
pub fn brute_partition_function(kernel: &Kernel, spec: &PartitionSpec) -> Result<f64> {
    check_size(kernel, spec.partition())?;
    Ok(enumerate_valid_subsets(spec)?
        .iter()
        .map(|s| minor(kernel, s.as_slice()))
        .sum())
}

/// `Pr(S) = det(K_{S,S}) / Z` for every subset meeting the quotas, keyed by the
/// sorted subset.
pub fn brute_distribution(kernel: &Kernel, spec: &PartitionSpec) -> Result<BTreeMap<Subset, f64>> {
    check_size(kernel, spec.partition())?;
    let subsets = enumerate_valid_subsets(spec)?;
    let dets: Vec<f64> = subsets
        .iter()
        .map(|s| minor(kernel, s.as_slice()).max(0.0))
        .collect();
    let z: f64 = dets.iter().sum();
    if z <= 0.0 {
        return Err(DppError::EmptySupport);
    }
    Ok(subsets
        .into_iter()
        .zip(dets)
        .map(|(s, d)| (s, d / z))
        .collect())
}

/// Probability of the ordered tuple `items` under the tuple form of the
/// constrained DPP: `det / (k! Z)` for distinct items meeting the quotas.
fn tuple_weight(kernel: &Kernel, spec: &PartitionSpec, items: &[usize]) -> f64 {
    if spec.is_satisfied_by(items) {
        let mut sorted = items.to_vec();
        sorted.sort_unstable();
        minor(kernel, &sorted).max(0.0)
    } else {
        0.0
    }
}

/// Sum of tuple weights over all ordered completions of `prefix`.
fn completion_mass(kernel: &Kernel, spec: &PartitionSpec, prefix: &mut Vec<usize>) -> f64 {
    if prefix.len() == spec.k() {
        return tuple_weight(kernel, spec, prefix);
    }
    let counts = spec.partition().counts(prefix);
    let mut total = 0.0;
    for i in 0..spec.m() {
        let l = spec.partition().part_of(i);
        if prefix.contains(&i) || counts[l] >= spec.quotas()[l] {
            continue;
        }
        prefix.push(i);
        total += completion_mass(kernel, spec, prefix);
        prefix.pop();
    }
    total
}

/// `Pr(X_{t+1} = i | X_1..X_t = prefix)` by summing ordered-tuple probabilities
/// of every completion.
pub fn brute_marginal(
    kernel: &Kernel,
    spec: &PartitionSpec,
    prefix: &[usize],
    i: usize,
) -> Result<f64> {
    check_size(kernel, spec.partition())?;
    let m = spec.m();
    if let Some(&bad) = prefix.iter().chain([&i]).find(|&&x| x >= m) {
        return Err(DppError::IndexOutOfRange { index: bad, len: m });
    }
    let free = m.saturating_sub(prefix.len());
    let steps = spec.k().saturating_sub(prefix.len());
    let tuples: f64 = (0..steps).map(|s| (free - s) as f64).product();
    guard(tuples)?;

    let z = brute_partition_function(kernel, spec)?;
    if z <= 0.0 {
        return Err(DppError::EmptySupport);
    }
    let k_fact: f64 = (1..=spec.k()).map(|x| x as f64).product();
    let norm = k_fact * z;

    let mut p = prefix.to_vec();
    let denominator = completion_mass(kernel, spec, &mut p) / norm;
    if denominator <= 0.0 {
        return Err(DppError::EmptySupport);
    }
    if prefix.contains(&i) || prefix.len() >= spec.k() {
        return Ok(0.0);
    }
    let counts = spec.partition().counts(prefix);
    let l = spec.partition().part_of(i);
    if counts[l] >= spec.quotas()[l] {
        return Ok(0.0);
    }
    p.push(i);
    let numerator = completion_mass(kernel, spec, &mut p) / norm;
    Ok(numerator / denominator)
}

/// [`brute_marginal`] for every item.
pub fn brute_conditional(
    kernel: &Kernel,
    spec: &PartitionSpec,
    prefix: &[usize],
) -> Result<Vec<f64>> {
    (0..spec.m())
        .map(|i| brute_marginal(kernel, spec, prefix, i))
        .collect()
}

/// `argmax_{|S|=k} det(A_S A_Sᵀ)` by exhaustion; the lexicographically first
/// maximizer wins ties.
pub fn brute_map_opt(a: &FeatureMatrix, k: usize) -> Result<(Subset, f64)> {
    let m = a.nrows();
    if k == 0 || k > m {
        return Err(DppError::InvalidInput(format!(
            "k = {k} out of range 1..={m}"
        )));
    }
    guard(binomial(m, k))?;
    let kernel = Kernel::new(m, naive_gram(a))?;
    let spec = PartitionSpec::cardinality(m, k)?;
    let mut best: Option<(Subset, f64)> = None;
    for s in enumerate_valid_subsets(&spec)? {
        let d = minor(&kernel, s.as_slice());
        if best.as_ref().is_none_or(|(_, v)| d > *v) {
            best = Some((s, d));
        }
    }
    Ok(best.expect("at least one subset"))
}

/// The mixture formula `Σ_l Σ_{κ=1}^{k_l} Z^κ_{P_l}`, with `Z^κ_{P_l}` the
/// κ-DPP partition function restricted to part `l`. It is *not* the
/// Partition-DPP normalizer; kept to show the mismatch.
pub fn iyer_mixture_value(kernel: &Kernel, spec: &PartitionSpec) -> Result<f64> {
    check_size(kernel, spec.partition())?;
    let partition = spec.partition();
    let mut total = 0.0;
    for (l, &k_l) in spec.quotas().iter().enumerate() {
        let members = partition.members(l);
        for size in 1..=k_l {
            guard(binomial(members.len(), size))?;
            let local = PartitionSpec::cardinality(members.len(), size)?;
            for s in enumerate_valid_subsets(&local)? {
                let items: Vec<usize> = s.as_slice().iter().map(|&x| members[x]).collect();
                total += minor(kernel, &items);
            }
        }
    }
    Ok(total)
}

fn check_size(kernel: &Kernel, partition: &Partition) -> Result<()> {
    if kernel.size() != partition.len() {
        return Err(DppError::InvalidInput(format!(
            "kernel has {} items but the partition covers {}",
            kernel.size(),
            partition.len()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec22(q: [usize; 2]) -> PartitionSpec {
        PartitionSpec::new(Partition::contiguous(&[2, 2]).unwrap(), q.to_vec()).unwrap()
    }

    #[test]
    fn reference_det_agrees_across_methods() {
        let a = [
            2.0, -1.0, 0.5, 3.0, 1.0, 0.0, 4.0, 2.0, -2.0, 1.0, 1.0, 0.0, 0.5, 3.0, -1.0, 2.0,
        ];
        let c = cofactor_det(&a, 4);
        let b = bareiss_det(&a, 4);
        assert!((c - b).abs() < 1e-10 * c.abs().max(1.0), "{c} vs {b}");
        // Zero leading pivot exercises the row exchange.
        let z = [0.0, 1.0, 2.0, 1.0, 0.0, 3.0, 4.0, -3.0, 8.0];
        assert!((bareiss_det(&z, 3) - cofactor_det(&z, 3)).abs() < 1e-12);
    }

    #[test]
    fn enumerate_examples() {
        let all = enumerate_valid_subsets(&spec22([1, 1])).unwrap();
        let got: Vec<Vec<usize>> = all.iter().map(|s| s.as_slice().to_vec()).collect();
        assert_eq!(got, vec![vec![0, 2], vec![0, 3], vec![1, 2], vec![1, 3]]);
        let got = enumerate_valid_subsets(&spec22([2, 0])).unwrap();
        assert_eq!(got.len(), 1);
        assert_eq!(got[0].as_slice(), &[0, 1]);
        let card = PartitionSpec::cardinality(6, 3).unwrap();
        assert_eq!(enumerate_valid_subsets(&card).unwrap().len(), 20);
    }

    #[test]
    fn enumeration_guard() {
        let card = PartitionSpec::cardinality(40, 20).unwrap();
        assert!(matches!(
            enumerate_valid_subsets(&card),
            Err(DppError::TooLarge { .. })
        ));
    }

    #[test]
    fn partition_function_examples() {
        let z = brute_partition_function(&Kernel::identity(4), &spec22([1, 1])).unwrap();
        assert_eq!(z, 4.0);
        let d = Kernel::diagonal(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(brute_partition_function(&d, &spec22([1, 1])).unwrap(), 21.0);
    }

    #[test]
    fn distribution_examples() {
        let dist = brute_distribution(&Kernel::identity(4), &spec22([1, 1])).unwrap();
        assert_eq!(dist.len(), 4);
        assert!(dist.values().all(|&p| p == 0.25));
        let d = Kernel::diagonal(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        let dist = brute_distribution(&d, &spec22([1, 1])).unwrap();
        let p = dist[&Subset::from_vec_unchecked(vec![1, 3])];
        assert!((p - 8.0 / 21.0).abs() < 1e-15);
    }

    #[test]
    fn marginal_examples() {
        let k = Kernel::identity(4);
        let spec = spec22([1, 1]);
        assert!((brute_marginal(&k, &spec, &[], 0).unwrap() - 0.25).abs() < 1e-15);
        assert_eq!(brute_marginal(&k, &spec, &[0], 1).unwrap(), 0.0);
        assert!((brute_marginal(&k, &spec, &[0], 2).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn map_opt_examples() {
        let a = FeatureMatrix::from_rows(&[
            [5f64.sqrt(), 0.0, 0.0],
            [0.0, 2f64.sqrt(), 0.0],
            [0.0, 0.0, 7f64.sqrt()],
        ])
        .unwrap();
        let (s, v) = brute_map_opt(&a, 2).unwrap();
        assert_eq!(s.as_slice(), &[0, 2]);
        assert!((v - 35.0).abs() < 1e-12);
        let b = FeatureMatrix::from_rows(&[[0.9, 0.9], [1.0, 0.0], [0.0, 1.0]]).unwrap();
        let (s, v) = brute_map_opt(&b, 2).unwrap();
        assert_eq!(s.as_slice(), &[1, 2]);
        assert!((v - 1.0).abs() < 1e-15);
    }

    #[test]
    fn mixture_examples() {
        let d = Kernel::diagonal(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(iyer_mixture_value(&d, &spec22([1, 1])).unwrap(), 10.0);
        // One part: the sum of κ-DPP partition functions for κ ≤ k.
        let spec = PartitionSpec::cardinality(4, 2).unwrap();
        let want = 10.0 + (2.0 + 3.0 + 4.0 + 6.0 + 8.0 + 12.0);
        assert_eq!(iyer_mixture_value(&d, &spec).unwrap(), want);
    }
}
