//! Exact sequential samplers for k-DPPs and Partition-DPPs.
//!
//! Both draw one item per step. With `S` the items drawn so far and
//! `B = A - π_S(A)`, item `i` of part `j` is drawn next with probability
//!
//! ```text
//! ‖b_i‖² · |c'(C_i C_iᵀ)| / ((k - t) · |c''(B Bᵀ)|)
//! ```
//!
//! where `C_i` is `B` with every row projected orthogonally to `b_i`, `c''` is
//! the multivariate coefficient at `(m_l - k_l + t_l)_l` and `c'` the one with
//! part `j`'s entry raised by one. For a single part the coefficients are
//! elementary symmetric polynomials of the eigenvalues, which the k-DPP path
//! uses directly.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::charpoly::{coeff_log, ln_elementary_symmetric, LogCoeff};
use crate::error::{DppError, Result};
use crate::matrix::{
    gram, principal_minor_det, project_rows_orthogonal, FeatureMatrix, PartitionSpec, Subset,
    ZERO_ROW_REL,
};
use crate::par;

/// Step probabilities below this fraction of the largest are dropped before a
/// draw.
const DRAW_CUTOFF_REL: f64 = 1e-12;

/// Tolerance of the per-step normalization self-check.
const NORMALIZATION_TOL: f64 = 1e-6;

/// Increment of the multi-sample seed split.
pub const SEED_SPLIT_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RngSeed(pub u64);

impl RngSeed {
    /// Seed of the `j`-th sample of a multi-sample run:
    /// `seed ⊕ (j · 0x9E3779B97F4A7C15)`.
    pub fn split(self, j: u64) -> Self {
        Self(self.0 ^ j.wrapping_mul(SEED_SPLIT_GAMMA))
    }

    fn rng(self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.0)
    }
}

/// Partially drawn sample: chosen items, the residual `B = A - π_S(A)` and the
/// per-part counts.
#[derive(Debug, Clone)]
pub struct SampleState {
    chosen: Vec<usize>,
    residual: FeatureMatrix,
    counts: Vec<usize>,
    part_of: Vec<usize>,
    quotas: Vec<usize>,
    /// Squared norms below this are zero; fixed from the original matrix.
    zero_cutoff: f64,
    /// `c''` of the current residual, when already known.
    denominator: Option<LogCoeff>,
}

impl SampleState {
    pub fn new(a: &FeatureMatrix, spec: &PartitionSpec) -> Result<Self> {
        if a.nrows() != spec.m() {
            return Err(DppError::InvalidInput(format!(
                "feature matrix has {} rows but the partition covers {} items",
                a.nrows(),
                spec.m()
            )));
        }
        Ok(Self {
            chosen: Vec::new(),
            residual: a.clone(),
            counts: vec![0; spec.quotas().len()],
            part_of: spec.partition().labels().to_vec(),
            quotas: spec.quotas().to_vec(),
            zero_cutoff: ZERO_ROW_REL * a.max_row_norm_sq(),
            denominator: None,
        })
    }

    /// State after drawing `prefix` in order.
    pub fn from_prefix(a: &FeatureMatrix, spec: &PartitionSpec, prefix: &[usize]) -> Result<Self> {
        let mut state = Self::new(a, spec)?;
        for &i in prefix {
            state.advance(i)?;
        }
        Ok(state)
    }

    pub fn chosen(&self) -> &[usize] {
        &self.chosen
    }

    pub fn residual(&self) -> &FeatureMatrix {
        &self.residual
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn step(&self) -> usize {
        self.chosen.len()
    }

    pub fn target_size(&self) -> usize {
        self.quotas.iter().sum()
    }

    pub fn is_complete(&self) -> bool {
        self.step() == self.target_size()
    }

    /// Draw item `i`: checks the constraints and projects the residual.
    pub fn advance(&mut self, i: usize) -> Result<()> {
        self.check_candidate(i)?;
        if self.residual.row_norm_sq(i) <= self.zero_cutoff {
            return Err(DppError::ZeroRow { row: i });
        }
        self.residual = project_rows_orthogonal(&self.residual, i)?;
        self.push(i, None);
        Ok(())
    }

    fn check_candidate(&self, i: usize) -> Result<()> {
        if i >= self.part_of.len() {
            return Err(DppError::IndexOutOfRange {
                index: i,
                len: self.part_of.len(),
            });
        }
        if self.chosen.contains(&i) {
            return Err(DppError::InvalidInput(format!("item {i} already drawn")));
        }
        let l = self.part_of[i];
        if self.counts[l] >= self.quotas[l] {
            return Err(DppError::InvalidInput(format!(
                "part {} is already full",
                l + 1
            )));
        }
        Ok(())
    }

    fn push(&mut self, i: usize, denominator: Option<LogCoeff>) {
        self.chosen.push(i);
        self.counts[self.part_of[i]] += 1;
        self.denominator = denominator;
    }

    fn is_open(&self, i: usize) -> bool {
        !self.chosen.contains(&i)
            && self.counts[self.part_of[i]] < self.quotas[self.part_of[i]]
            && self.residual.row_norm_sq(i) > self.zero_cutoff
    }

    /// `(m_l - k_l + t_l)_l`.
    fn base_index(&self, spec: &PartitionSpec) -> Vec<usize> {
        spec.partition()
            .part_sizes()
            .iter()
            .zip(&self.quotas)
            .zip(&self.counts)
            .map(|((&m, &k), &t)| m - k + t)
            .collect()
    }
}

struct StepWeights {
    /// `ln(‖b_i‖² |c'_i|)`, `-∞` for excluded items.
    ln_weights: Vec<f64>,
    numerators: Vec<LogCoeff>,
    denominator: LogCoeff,
}

fn partition_step_weights(spec: &PartitionSpec, state: &SampleState) -> Result<StepWeights> {
    if state.part_of != spec.partition().labels() || state.quotas != spec.quotas() {
        return Err(DppError::InvalidInput(
            "sample state was built for a different partition".into(),
        ));
    }
    if state.is_complete() {
        return Err(DppError::InvalidInput("sample is already complete".into()));
    }
    let partition = spec.partition();
    let base = state.base_index(spec);
    let denominator = match state.denominator {
        Some(c) => c,
        None => coeff_log(&gram(&state.residual), partition, &base)?,
    };
    if denominator.is_zero() {
        return Err(if state.step() == 0 {
            DppError::EmptySupport
        } else {
            DppError::DeadEnd { step: state.step() }
        });
    }

    let b = &state.residual;
    let per_item = par::try_map_range(b.nrows(), |i| -> Result<(f64, LogCoeff)> {
        if !state.is_open(i) {
            return Ok((f64::NEG_INFINITY, LogCoeff::ZERO));
        }
        let c = project_rows_orthogonal(b, i)?;
        let mut idx = base.clone();
        idx[partition.part_of(i)] += 1;
        let num = coeff_log(&gram(&c), partition, &idx)?;
        Ok((b.row_norm_sq(i).ln() + num.ln_abs, num))
    })?;
    let (ln_weights, numerators) = per_item.into_iter().unzip();
    Ok(StepWeights {
        ln_weights,
        numerators,
        denominator,
    })
}

fn normalize(ln_weights: &[f64], ln_norm: f64) -> Vec<f64> {
    ln_weights.iter().map(|&w| (w - ln_norm).exp()).collect()
}

/// `Pr(X_{t+1} = i | X_1, …, X_t)` for every item `i`, given the state after
/// `t` draws. Entries of drawn items, full parts and numerically dependent
/// rows are exactly zero.
pub fn marginal_step_probs(spec: &PartitionSpec, state: &SampleState) -> Result<Vec<f64>> {
    let w = partition_step_weights(spec, state)?;
    let remaining = (state.target_size() - state.step()) as f64;
    let probs = normalize(&w.ln_weights, remaining.ln() + w.denominator.ln_abs);
    if probs.iter().all(|&p| p == 0.0) {
        return Err(DppError::DeadEnd { step: state.step() });
    }
    Ok(probs)
}

/// Inverse-CDF draw from unnormalized non-negative weights with one uniform
/// variate. Weights below `DRAW_CUTOFF_REL · max` never get picked.
fn draw_index(weights: &[f64], u: f64) -> Option<usize> {
    let max = weights.iter().copied().fold(0.0, f64::max);
    if max <= 0.0 {
        return None;
    }
    let cutoff = DRAW_CUTOFF_REL * max;
    let kept = |w: f64| if w >= cutoff { w } else { 0.0 };
    let total: f64 = weights.iter().map(|&w| kept(w)).sum();
    let target = u * total;
    let mut acc = 0.0;
    let mut last = None;
    for (i, &w) in weights.iter().enumerate() {
        let w = kept(w);
        if w > 0.0 {
            acc += w;
            last = Some(i);
            if acc > target {
                return Some(i);
            }
        }
    }
    last
}

/// One exact draw from the Partition-DPP: `|S ∩ P_l| = k_l` for every part,
/// `Pr(S) ∝ det(A_S A_Sᵀ)`. Items are returned in draw order.
pub fn sample_partition_dpp(
    a: &FeatureMatrix,
    spec: &PartitionSpec,
    seed: RngSeed,
) -> Result<Subset> {
    let mut state = SampleState::new(a, spec)?;
    let mut rng = seed.rng();
    while !state.is_complete() {
        let w = partition_step_weights(spec, &state)?;
        let max = w
            .ln_weights
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY {
            return Err(DppError::DeadEnd { step: state.step() });
        }
        let weights = normalize(&w.ln_weights, max);
        debug_assert!(
            {
                let remaining = (state.target_size() - state.step()) as f64;
                let total: f64 = weights.iter().sum();
                let expected = (remaining.ln() + w.denominator.ln_abs - max).exp();
                ((total - expected) / expected).abs() <= NORMALIZATION_TOL
            },
            "step probabilities at step {} do not sum to one",
            state.step()
        );
        let u: f64 = rng.random();
        let i = draw_index(&weights, u).ok_or(DppError::DeadEnd { step: state.step() })?;
        state.residual = project_rows_orthogonal(&state.residual, i)?;
        state.push(i, Some(w.numerators[i]));
    }
    Ok(Subset::from_vec_unchecked(state.chosen))
}

/// Eigenvalues of `C Cᵀ`, from whichever of `C Cᵀ` and `Cᵀ C` is smaller.
/// Negative roundoff is clipped to zero.
fn gram_eigenvalues(c: &FeatureMatrix) -> Vec<f64> {
    let (m, n) = (c.nrows(), c.ncols());
    let mat = if m <= n {
        DMatrix::from_row_slice(m, m, gram(c).as_slice())
    } else {
        let a = c.to_nalgebra();
        a.transpose() * a
    };
    SymmetricEigen::new(mat)
        .eigenvalues
        .iter()
        .map(|l| l.max(0.0))
        .collect()
}

fn kdpp_step_weights(state: &SampleState, k: usize) -> Vec<f64> {
    let b = &state.residual;
    let t = state.step();
    par::map_range(b.nrows(), |i| {
        if !state.is_open(i) {
            return f64::NEG_INFINITY;
        }
        match project_rows_orthogonal(b, i) {
            Ok(c) => {
                b.row_norm_sq(i).ln() + ln_elementary_symmetric(&gram_eigenvalues(&c), k - t - 1)
            }
            Err(_) => f64::NEG_INFINITY,
        }
    })
}

/// k-DPP step probabilities through the eigenvalue route, normalized by
/// `(k - t) · e_{k-t}(eig(B Bᵀ))`. The state must use a single-part spec.
pub fn kdpp_step_probs(state: &SampleState) -> Result<Vec<f64>> {
    if state.quotas.len() != 1 {
        return Err(DppError::InvalidInput(
            "k-DPP step probabilities need a single-part state".into(),
        ));
    }
    let k = state.target_size();
    if state.is_complete() {
        return Err(DppError::InvalidInput("sample is already complete".into()));
    }
    let t = state.step();
    let ln_norm =
        ((k - t) as f64).ln() + ln_elementary_symmetric(&gram_eigenvalues(&state.residual), k - t);
    if ln_norm == f64::NEG_INFINITY {
        return Err(DppError::RankTooLow { k });
    }
    Ok(normalize(&kdpp_step_weights(state, k), ln_norm))
}

/// One exact draw from the k-DPP `Pr(S) ∝ det(A_S A_Sᵀ)`, `|S| = k`. Items are
/// returned in draw order.
pub fn sample_kdpp(a: &FeatureMatrix, k: usize, seed: RngSeed) -> Result<Subset> {
    if k == 0 {
        return Err(DppError::InvalidInput("k must be at least 1".into()));
    }
    if k > a.nrows() {
        return Err(DppError::RankTooLow { k });
    }
    let spec = PartitionSpec::cardinality(a.nrows(), k)?;
    let mut state = SampleState::new(a, &spec)?;
    let mut rng = seed.rng();
    while !state.is_complete() {
        let ln_w = kdpp_step_weights(&state, k);
        let max = ln_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY {
            return Err(DppError::RankTooLow { k });
        }
        let weights = normalize(&ln_w, max);
        let u: f64 = rng.random();
        let i = draw_index(&weights, u).ok_or(DppError::RankTooLow { k })?;
        state.residual = project_rows_orthogonal(&state.residual, i)?;
        state.push(i, None);
    }
    Ok(Subset::from_vec_unchecked(state.chosen))
}

/// `det(A_S A_Sᵀ) / Z` when `S` meets the quotas, else 0.
pub fn exact_set_probability(
    a: &FeatureMatrix,
    spec: &PartitionSpec,
    subset: &Subset,
) -> Result<f64> {
    if a.nrows() != spec.m() {
        return Err(DppError::InvalidInput(format!(
            "feature matrix has {} rows but the partition covers {} items",
            a.nrows(),
            spec.m()
        )));
    }
    if !spec.is_satisfied_by(subset.as_slice()) {
        return Ok(0.0);
    }
    let k = gram(a);
    let report = crate::charpoly::partition_function_report(&k, spec)?;
    if report.z == 0.0 {
        return Ok(0.0);
    }
    let det = principal_minor_det(&k, subset.as_slice())?.max(0.0);
    Ok(det / report.z)
}
