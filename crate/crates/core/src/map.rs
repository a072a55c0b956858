//! MAP inference for k-DPPs: greedy volume maximization followed by best-swap
//! local search with a `(1 + ε/k)` acceptance threshold.
//!
//! Swap gains come from Schur's identity: with `R = S \ {i}`,
//! `det(A_{R∪j} A_{R∪j}ᵀ) / det(A_S A_Sᵀ) = d(a_j, span R)² / d(a_i, span R)²`,
//! so one residual against `R` scores every replacement of `i`.

use crate::error::{DppError, Result};
use crate::matrix::{log_det_rows, residual, FeatureMatrix, Subset, ZERO_ROW_REL};
use crate::par;

/// An accepted local-search move.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Swap {
    pub removed: usize,
    pub added: usize,
    /// `det(new) / det(old)`.
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MapResult {
    pub subset: Subset,
    /// `ln det(A_S A_Sᵀ)` of the final subset.
    pub log_det: f64,
    pub log_det_greedy: f64,
    pub swaps_performed: usize,
    pub swaps: Vec<Swap>,
    pub kappa: f64,
    pub eps: f64,
}

/// `⌈k² ln(max(k, 2)) / ε⌉ + k`.
pub fn swap_cap(k: usize, eps: f64) -> usize {
    let k_f = k as f64;
    (k_f * k_f * k_f.max(2.0).ln() / eps).ceil() as usize + k
}

/// Adds the row with the largest residual norm `k` times (lowest index on ties).
pub fn greedy_map(a: &FeatureMatrix, k: usize) -> Result<Subset> {
    if k == 0 {
        return Err(DppError::InvalidInput("k must be at least 1".into()));
    }
    if k > a.nrows() {
        return Err(DppError::RankTooLow { k });
    }
    let cutoff = ZERO_ROW_REL * a.max_row_norm_sq();
    let mut b = a.clone();
    let mut chosen = Vec::with_capacity(k);
    for _ in 0..k {
        let mut best: Option<(usize, f64)> = None;
        for i in 0..b.nrows() {
            if chosen.contains(&i) {
                continue;
            }
            let norm = b.row_norm_sq(i);
            if best.is_none_or(|(_, v)| norm > v) {
                best = Some((i, norm));
            }
        }
        match best {
            Some((i, norm)) if norm > cutoff => {
                chosen.push(i);
                b = residual(&b, &[i])?;
            }
            _ => return Err(DppError::RankTooLow { k }),
        }
    }
    Ok(Subset::from_vec_unchecked(chosen))
}

/// Greedy start, then repeatedly the best `(i ∈ S, j ∉ S)` swap while it
/// multiplies the determinant by more than `1 + ε/k`, up to [`swap_cap`] swaps.
pub fn local_search_map(a: &FeatureMatrix, k: usize, eps: f64) -> Result<MapResult> {
    if eps.is_nan() || eps <= 0.0 {
        return Err(DppError::InvalidInput(format!(
            "eps must be positive, got {eps}"
        )));
    }
    let greedy = greedy_map(a, k)?;
    let kappa = kappa(a, k)?;
    let log_det_greedy = log_det_rows(a, greedy.as_slice())?;

    let threshold = 1.0 + eps / k as f64;
    let cap = swap_cap(k, eps);
    let mut current = greedy.into_vec();
    let mut swaps = Vec::new();
    let m = a.nrows();

    while swaps.len() < cap {
        let mut by_removed: Vec<usize> = current.clone();
        by_removed.sort_unstable();
        let candidates = par::try_map_range(by_removed.len(), |pos| -> Result<Option<Swap>> {
            let i = by_removed[pos];
            let rest: Vec<usize> = current.iter().copied().filter(|&x| x != i).collect();
            let r = residual(a, &rest)?;
            let denom = r.row_norm_sq(i);
            if denom <= 0.0 {
                return Ok(None);
            }
            let mut best: Option<Swap> = None;
            for j in (0..m).filter(|j| !current.contains(j)) {
                let ratio = r.row_norm_sq(j) / denom;
                if best.is_none_or(|b| ratio > b.ratio) {
                    best = Some(Swap {
                        removed: i,
                        added: j,
                        ratio,
                    });
                }
            }
            Ok(best)
        })?;
        let best = candidates
            .into_iter()
            .flatten()
            .fold(None::<Swap>, |acc, s| match acc {
                Some(b) if s.ratio <= b.ratio => Some(b),
                _ => Some(s),
            });
        let Some(best) = best.filter(|s| s.ratio > threshold) else {
            break;
        };
        let pos = current.iter().position(|&x| x == best.removed).unwrap();
        current[pos] = best.added;
        swaps.push(best);
    }

    Ok(MapResult {
        log_det: log_det_rows(a, &current)?,
        subset: Subset::from_vec_unchecked(current),
        log_det_greedy,
        swaps_performed: swaps.len(),
        swaps,
        kappa,
        eps,
    })
}

/// `λ₁ / ((1/(m-k+1)) Σ_{t=k}^{m} λ_t)` with the eigenvalues of `A Aᵀ` sorted
/// in decreasing order (1-based `t`).
pub fn kappa(a: &FeatureMatrix, k: usize) -> Result<f64> {
    let m = a.nrows();
    if k == 0 || k > m {
        return Err(DppError::InvalidInput(format!(
            "k = {k} out of range 1..={m}"
        )));
    }
    let mut eig = gram_spectrum(a);
    eig.resize(m, 0.0);
    eig.sort_by(|x, y| y.total_cmp(x));
    let top = eig[0];
    let count = (m - k + 1) as f64;
    let tail: f64 = eig[k - 1..].iter().sum();
    if tail <= 1e-12 * top * count || top <= 0.0 {
        return Err(DppError::RankTooLow { k });
    }
    Ok(top / (tail / count))
}

/// Non-zero spectrum of `A Aᵀ` (possibly padded with zeros), clipped at zero.
fn gram_spectrum(a: &FeatureMatrix) -> Vec<f64> {
    let na = a.to_nalgebra();
    let mat = if a.nrows() <= a.ncols() {
        &na * na.transpose()
    } else {
        na.transpose() * &na
    };
    nalgebra::SymmetricEigen::new(mat)
        .eigenvalues
        .iter()
        .map(|l| l.max(0.0))
        .collect()
}
