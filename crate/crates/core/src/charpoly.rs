//! Coefficients of the univariate characteristic polynomial `det(K - xI)` and
//! of the multivariate one `det(K - x₁I₁ - … - x_pI_p)`, where `I_l` is the
//! diagonal indicator of part `l`.
//!
//! The coefficient at `(m₁-k₁, …, m_p-k_p)` equals `(-1)^{m-k}` times the sum of
//! `det(K_{S,S})` over all `S` with `|S ∩ P_l| = k_l`, so a single coefficient
//! is a constrained partition function.
//!
//! # Evaluation scheme
//!
//! A multivariate coefficient is recovered by evaluating the determinant on a
//! grid `x_l = r_l ω_l^{j}` of scaled roots of unity (one complex LU per grid
//! point) and applying an inverse DFT for the wanted index only.
//!
//! Substituting `x_l = -y_l` turns the polynomial into
//! `det(K + Σ y_l I_l) = Σ_S det(K_{S,S}) Π_{i∉S} y_{part(i)}`, whose
//! coefficients are all non-negative. Hence every grid value is bounded by
//! `det(K + D)` with `D = diag(r)`, and the wanted scaled coefficient divided
//! by `det(K + D)` is the probability that a DPP with external field `D`
//! leaves exactly `i_l` items of part `l` unselected. The radii are chosen at
//! the saddle point where the expected unselected counts equal the wanted
//! index; there that probability is only polynomially small, so the absolute
//! roundoff of the DFT (a few ulps of `det(K + D)`) is a small relative error.
//! A single fixed radius would lose all precision on mid-degree coefficients
//! once `m` reaches a few dozen.
//!
//! Items whose kernel row is exactly zero (already-selected items in the
//! sampler) factor out as `(-x_l)` and are stripped before evaluation. When a
//! single part remains, the coefficient comes from the eigenvalues instead.

use std::f64::consts::PI;

use nalgebra::{Cholesky, DMatrix};

use crate::error::{DppError, Result};
use crate::matrix::{lu_log_det, Kernel, Partition, PartitionSpec};
use crate::par;

/// Scaled coefficients below this fraction of `det(K + D)` are exactly zero.
const ZERO_COEFF_REL: f64 = 1e-10;

/// Bound on the grid-scaled coefficient magnitude (it is a probability).
const RESIDUAL_TOL: f64 = 1e-6;

/// Radii stay below `e^{RADIUS_SPAN}` times the mean eigenvalue.
const RADIUS_SPAN: f64 = 35.0;

/// Radii stay above this fraction of `trace(K)`. Each grid value carries a
/// relative error of roughly `ε · n · trace / r`, so smaller radii would bury
/// the wanted coefficient in roundoff.
const MIN_RADIUS_REL: f64 = 1e-6;

/// Coefficients `c_{i₁,…,i_p}` for `0 ≤ i_l ≤ m_l`. The first index varies
/// fastest in the flat storage.
#[derive(Debug, Clone, PartialEq)]
pub struct CoeffTensor {
    part_sizes: Vec<usize>,
    data: Vec<f64>,
}

impl CoeffTensor {
    /// `(m₁+1, …, m_p+1)`.
    pub fn shape(&self) -> Vec<usize> {
        self.part_sizes.iter().map(|m| m + 1).collect()
    }

    pub fn part_sizes(&self) -> &[usize] {
        &self.part_sizes
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, idx: &[usize]) -> Option<f64> {
        linear_index(&self.part_sizes, idx).map(|l| self.data[l])
    }

    /// Multi-index of flat position `pos`.
    pub fn index_of(&self, pos: usize) -> Vec<usize> {
        multi_index(&self.part_sizes, pos)
    }

    /// `c₀, …, c_m` when there is a single part.
    pub fn univariate(&self) -> Option<&[f64]> {
        (self.part_sizes.len() == 1).then_some(&self.data[..])
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }
}

fn linear_index(part_sizes: &[usize], idx: &[usize]) -> Option<usize> {
    if idx.len() != part_sizes.len() {
        return None;
    }
    let mut pos = 0;
    let mut stride = 1;
    for (&i, &m) in idx.iter().zip(part_sizes) {
        if i > m {
            return None;
        }
        pos += i * stride;
        stride *= m + 1;
    }
    Some(pos)
}

fn multi_index(part_sizes: &[usize], mut pos: usize) -> Vec<usize> {
    part_sizes
        .iter()
        .map(|&m| {
            let i = pos % (m + 1);
            pos /= m + 1;
            i
        })
        .collect()
}

/// A coefficient as sign and log-magnitude.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct LogCoeff {
    /// -1, 0 or +1.
    pub sign: f64,
    pub ln_abs: f64,
}

impl LogCoeff {
    pub const ZERO: Self = Self {
        sign: 0.0,
        ln_abs: f64::NEG_INFINITY,
    };

    pub fn value(self) -> f64 {
        if self.sign == 0.0 {
            0.0
        } else {
            self.sign * self.ln_abs.exp()
        }
    }

    pub fn is_zero(self) -> bool {
        self.sign == 0.0
    }
}

/// `e₀, …, e_upto` of `values` by the sweep `e_j ← e_j + λ e_{j-1}`.
pub(crate) fn elementary_symmetric(values: &[f64], upto: usize) -> Vec<f64> {
    let mut e = vec![0.0; upto + 1];
    e[0] = 1.0;
    for (n, &v) in values.iter().enumerate() {
        for j in (1..=upto.min(n + 1)).rev() {
            e[j] += v * e[j - 1];
        }
    }
    e
}

/// `ln e_j(values)` for non-negative `values`, computed on rescaled values so
/// that large `m` does not overflow.
pub(crate) fn ln_elementary_symmetric(values: &[f64], j: usize) -> f64 {
    if j == 0 {
        return 0.0;
    }
    if j > values.len() {
        return f64::NEG_INFINITY;
    }
    let scale = values.iter().sum::<f64>() / values.len() as f64;
    if scale <= 0.0 {
        return f64::NEG_INFINITY;
    }
    let scaled: Vec<f64> = values.iter().map(|v| v / scale).collect();
    let e = elementary_symmetric(&scaled, j)[j];
    if e <= 0.0 {
        f64::NEG_INFINITY
    } else {
        e.ln() + j as f64 * scale.ln()
    }
}

/// Coefficients of `det(K - xI)` from the eigenvalues of `K`:
/// `c_{m-j} = (-1)^{m-j} e_j(λ)`. Slightly negative eigenvalues are clipped.
pub fn char_coeffs_univariate(kernel: &Kernel) -> CoeffTensor {
    let m = kernel.size();
    let eig: Vec<f64> = kernel
        .eigenvalues()
        .into_iter()
        .map(|l| l.max(0.0))
        .collect();
    let e = elementary_symmetric(&eig, m);
    let data = (0..=m)
        .map(|i| {
            let j = m - i;
            if (m - j).is_multiple_of(2) {
                e[j]
            } else {
                -e[j]
            }
        })
        .collect();
    CoeffTensor {
        part_sizes: vec![m],
        data,
    }
}

/// The full coefficient tensor of `det(K - Σ_l x_l I_l)`.
pub fn multichar_all_coeffs(kernel: &Kernel, partition: &Partition) -> Result<CoeffTensor> {
    check_partition(kernel, partition)?;
    let sizes = partition.part_sizes().to_vec();
    let total: usize = sizes.iter().map(|m| m + 1).product();
    let data = par::try_map_range(total, |pos| {
        coeff_log(kernel, partition, &multi_index(&sizes, pos)).map(LogCoeff::value)
    })?;
    Ok(CoeffTensor {
        part_sizes: sizes,
        data,
    })
}

/// One coefficient `c_{i₁,…,i_p}` of `det(K - Σ_l x_l I_l)`.
pub fn multichar_coeff(kernel: &Kernel, partition: &Partition, idx: &[usize]) -> Result<f64> {
    check_partition(kernel, partition)?;
    coeff_log(kernel, partition, idx).map(LogCoeff::value)
}

/// `Σ det(K_{S,S})` over all `S` with `|S ∩ P_l| = k_l`.
pub fn constrained_partition_function(kernel: &Kernel, spec: &PartitionSpec) -> Result<f64> {
    partition_function_report(kernel, spec).map(|r| r.z)
}

/// A constrained partition function together with the coefficient it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionFnReport {
    pub z: f64,
    /// `ln Z`, or `-∞` when `Z = 0`.
    pub ln_z: f64,
    /// `(m_l - k_l)_l`.
    pub coeff_index: Vec<usize>,
    /// Sign of the raw coefficient; `(-1)^{m-k}` whenever `Z > 0`.
    pub sign: i8,
}

pub fn partition_function_report(
    kernel: &Kernel,
    spec: &PartitionSpec,
) -> Result<PartitionFnReport> {
    check_partition(kernel, spec.partition())?;
    let coeff_index = spec.coefficient_index();
    let c = coeff_log(kernel, spec.partition(), &coeff_index)?;
    Ok(PartitionFnReport {
        z: c.value().abs(),
        ln_z: c.ln_abs,
        coeff_index,
        sign: c.sign as i8,
    })
}

fn check_partition(kernel: &Kernel, partition: &Partition) -> Result<()> {
    if kernel.size() != partition.len() {
        return Err(DppError::InvalidInput(format!(
            "kernel has {} items but the partition covers {}",
            kernel.size(),
            partition.len()
        )));
    }
    Ok(())
}

/// The coefficient at `idx`, as sign and log-magnitude.
pub(crate) fn coeff_log(kernel: &Kernel, partition: &Partition, idx: &[usize]) -> Result<LogCoeff> {
    let sizes = partition.part_sizes();
    if idx.len() != sizes.len() {
        return Err(DppError::InvalidInput(format!(
            "coefficient index has {} entries for {} parts",
            idx.len(),
            sizes.len()
        )));
    }
    for (&i, &m) in idx.iter().zip(sizes) {
        if i > m {
            return Err(DppError::IndexOutOfRange {
                index: i,
                len: m + 1,
            });
        }
    }

    // Exactly-zero items contribute a factor (-x_l) each.
    let m = kernel.size();
    let mut zero_counts = vec![0usize; sizes.len()];
    let mut keep = Vec::with_capacity(m);
    for i in 0..m {
        let row = &kernel.as_slice()[i * m..(i + 1) * m];
        if row.iter().all(|&x| x == 0.0) {
            zero_counts[partition.part_of(i)] += 1;
        } else {
            keep.push(i);
        }
    }
    if idx.iter().zip(&zero_counts).any(|(&i, &z)| i < z) {
        return Ok(LogCoeff::ZERO);
    }
    let stripped: usize = zero_counts.iter().sum();
    let strip_sign = if stripped.is_multiple_of(2) {
        1.0
    } else {
        -1.0
    };

    // Reduced problem over the kept items and the parts that still have items.
    let mut active_of_part = vec![usize::MAX; sizes.len()];
    let mut active_sizes = Vec::new();
    let mut active_idx = Vec::new();
    for l in 0..sizes.len() {
        let remaining = sizes[l] - zero_counts[l];
        if remaining > 0 {
            active_of_part[l] = active_sizes.len();
            active_sizes.push(remaining);
            active_idx.push(idx[l] - zero_counts[l]);
        }
    }
    if keep.is_empty() {
        return Ok(LogCoeff {
            sign: strip_sign,
            ln_abs: 0.0,
        });
    }
    let n = keep.len();
    let labels: Vec<usize> = keep
        .iter()
        .map(|&i| active_of_part[partition.part_of(i)])
        .collect();
    let reduced = kernel.principal_submatrix(&keep);

    if active_sizes.len() == 1 {
        let c = single_part_coefficient(&reduced, n, active_idx[0]);
        return Ok(LogCoeff {
            sign: c.sign * strip_sign,
            ln_abs: c.ln_abs,
        });
    }
    let c = interpolate_coefficient(&reduced, n, &labels, &active_sizes, &active_idx)?;
    Ok(LogCoeff {
        sign: c.sign * strip_sign,
        ln_abs: c.ln_abs,
    })
}

/// With one part the polynomial is `det(K - xI)`, whose coefficient of `x^i`
/// is `(-1)^i e_{n-i}(λ)`. Eigenvalues at the roundoff level count as zero so
/// that sums beyond the numerical rank vanish exactly.
fn single_part_coefficient(k: &[f64], n: usize, i: usize) -> LogCoeff {
    let eig = Kernel::from_symmetric_unchecked(n, k.to_vec()).eigenvalues();
    let top = eig.last().copied().unwrap_or(0.0).max(0.0);
    let floor = 8.0 * f64::EPSILON * n as f64 * top;
    let eig: Vec<f64> = eig.into_iter().filter(|&l| l > floor).collect();
    let ln_abs = ln_elementary_symmetric(&eig, n - i);
    if ln_abs == f64::NEG_INFINITY {
        return LogCoeff::ZERO;
    }
    LogCoeff {
        sign: if i.is_multiple_of(2) { 1.0 } else { -1.0 },
        ln_abs,
    }
}

/// Core evaluation on a kernel without zero rows.
fn interpolate_coefficient(
    kernel: &[f64],
    n: usize,
    labels: &[usize],
    sizes: &[usize],
    idx: &[usize],
) -> Result<LogCoeff> {
    let log_radii = saddle_log_radii(kernel, n, labels, sizes, idx);
    let radii: Vec<f64> = log_radii.iter().map(|u| u.exp()).collect();

    // Normalizer det(K + D).
    let mut shifted = kernel.to_vec();
    for i in 0..n {
        shifted[i * n + i] += radii[labels[i]];
    }
    let (sign0, ln_norm) = lu_log_det(&mut shifted, n);
    if sign0 <= 0.0 || !ln_norm.is_finite() {
        return Err(DppError::InterpolationResidual {
            residual: f64::INFINITY,
            threshold: RESIDUAL_TOL,
        });
    }

    let dims: Vec<usize> = sizes.iter().map(|m| m + 1).collect();
    let total: usize = dims.iter().product();

    // det(K - Σ x_l I_l) is real on real K, so the value at the conjugate grid
    // point is the conjugate; only one point of each pair is evaluated.
    let reps: Vec<usize> = (0..total)
        .filter(|&g| g <= conjugate_point(&dims, g))
        .collect();
    let values = par::map_range_with(
        reps.len(),
        || ComplexLu::new(n),
        |lu, r| {
            let g = reps[r];
            let (ln_abs, phase) = lu.log_det_shifted(kernel, labels, &radii, &grid_point(&dims, g));
            let mag = (ln_abs - ln_norm).exp();
            (mag * phase.0, mag * phase.1)
        },
    );

    let mut acc = 0.0;
    for (&g, &(re, im)) in reps.iter().zip(&values) {
        let j = multi_index_dims(&dims, g);
        let turns: f64 = j
            .iter()
            .zip(idx)
            .zip(&dims)
            .map(|((&j, &i), &d)| ((j * i) % d) as f64 / d as f64)
            .sum();
        let (s, c) = (-2.0 * PI * turns).sin_cos();
        let term = re * c - im * s;
        if g == conjugate_point(&dims, g) {
            acc += term;
        } else {
            acc += 2.0 * term;
        }
    }
    let frac = acc / total as f64;

    let expected_sign = if idx.iter().sum::<usize>() % 2 == 0 {
        1.0
    } else {
        -1.0
    };
    let trace: f64 = (0..n).map(|i| kernel[i * n + i]).sum();
    let min_radius = radii.iter().copied().fold(f64::INFINITY, f64::min);
    let noise_floor = 8.0 * f64::EPSILON * n as f64 * trace / min_radius;
    if frac.abs() <= ZERO_COEFF_REL.max(noise_floor) {
        return Ok(LogCoeff::ZERO);
    }
    if frac.signum() != expected_sign || frac.abs() > 1.0 + RESIDUAL_TOL {
        return Err(DppError::InterpolationResidual {
            residual: frac.abs(),
            threshold: ZERO_COEFF_REL,
        });
    }
    let unscale: f64 = idx
        .iter()
        .zip(&log_radii)
        .map(|(&i, &u)| i as f64 * u)
        .sum();
    Ok(LogCoeff {
        sign: expected_sign,
        ln_abs: frac.abs().ln() + ln_norm - unscale,
    })
}

fn multi_index_dims(dims: &[usize], mut g: usize) -> Vec<usize> {
    dims.iter()
        .map(|&d| {
            let j = g % d;
            g /= d;
            j
        })
        .collect()
}

fn grid_point(dims: &[usize], g: usize) -> Vec<(f64, f64)> {
    multi_index_dims(dims, g)
        .iter()
        .zip(dims)
        .map(|(&j, &d)| {
            let (s, c) = (2.0 * PI * j as f64 / d as f64).sin_cos();
            (c, s)
        })
        .collect()
}

fn conjugate_point(dims: &[usize], g: usize) -> usize {
    let j = multi_index_dims(dims, g);
    let mut pos = 0;
    let mut stride = 1;
    for (&j, &d) in j.iter().zip(dims) {
        pos += ((d - j) % d) * stride;
        stride *= d;
    }
    pos
}

/// Log-radii `u_l` solving `E_u[#unselected items of part l] = target_l`, the
/// stationarity condition of `ln det(K + diag(e^u)) - Σ target_l u_l`.
/// Targets are kept half an item inside `(0, m_l)`, where the saddle exists.
fn saddle_log_radii(
    kernel: &[f64],
    n: usize,
    labels: &[usize],
    sizes: &[usize],
    idx: &[usize],
) -> Vec<f64> {
    let p = sizes.len();
    let trace: f64 = (0..n).map(|i| kernel[i * n + i]).sum();
    let scale = if trace > 0.0 { trace / n as f64 } else { 1.0 };
    let (lo, hi) = (
        (MIN_RADIUS_REL * scale * n as f64).ln(),
        scale.ln() + RADIUS_SPAN,
    );
    let targets: Vec<f64> = idx
        .iter()
        .zip(sizes)
        .map(|(&i, &m)| (i as f64).clamp(0.5, m as f64 - 0.5))
        .collect();

    // Starting point is exact when all eigenvalues equal `scale`.
    let mut u: Vec<f64> = targets
        .iter()
        .zip(sizes)
        .map(|(&t, &m)| (scale.ln() + (t / (m as f64 - t)).ln()).clamp(lo, hi))
        .collect();

    let base = DMatrix::from_row_slice(n, n, kernel);
    for _ in 0..50 {
        let mut shifted = base.clone();
        for i in 0..n {
            shifted[(i, i)] += u[labels[i]].exp();
        }
        let Some(chol) = Cholesky::new(shifted) else {
            break;
        };
        let inv = chol.inverse();
        let r: Vec<f64> = u.iter().map(|x| x.exp()).collect();

        let mut grad = vec![0.0; p];
        for i in 0..n {
            grad[labels[i]] += r[labels[i]] * inv[(i, i)];
        }
        let resid: Vec<f64> = targets.iter().zip(&grad).map(|(t, g)| t - g).collect();
        if resid.iter().all(|x| x.abs() < 1e-3) {
            break;
        }

        let mut hess = DMatrix::<f64>::zeros(p, p);
        for i in 0..n {
            for j in 0..n {
                let (a, b) = (labels[i], labels[j]);
                hess[(a, b)] -= r[a] * r[b] * inv[(i, j)] * inv[(i, j)];
            }
        }
        for l in 0..p {
            hess[(l, l)] += grad[l] + 1e-12;
        }
        let rhs = DMatrix::from_column_slice(p, 1, &resid);
        let step: Vec<f64> = match hess.clone().lu().solve(&rhs) {
            Some(s) if s.iter().all(|x| x.is_finite()) => s.iter().copied().collect(),
            _ => (0..p).map(|l| resid[l] / hess[(l, l)].max(1e-3)).collect(),
        };
        for l in 0..p {
            u[l] = (u[l] + step[l].clamp(-3.0, 3.0)).clamp(lo, hi);
        }
    }
    u
}

/// Complex LU scratch space with split real/imaginary storage.
struct ComplexLu {
    n: usize,
    re: Vec<f64>,
    im: Vec<f64>,
}

impl ComplexLu {
    fn new(n: usize) -> Self {
        Self {
            n,
            re: vec![0.0; n * n],
            im: vec![0.0; n * n],
        }
    }

    /// `(ln|det|, unit phase)` of `K - Σ_l r_l w_l I_l` with `w_l` on the
    /// unit circle.
    fn log_det_shifted(
        &mut self,
        kernel: &[f64],
        labels: &[usize],
        radii: &[f64],
        point: &[(f64, f64)],
    ) -> (f64, (f64, f64)) {
        let n = self.n;
        self.re.copy_from_slice(kernel);
        self.im.fill(0.0);
        for (i, &l) in labels.iter().enumerate() {
            self.re[i * n + i] -= radii[l] * point[l].0;
            self.im[i * n + i] -= radii[l] * point[l].1;
        }
        let (re, im) = (&mut self.re, &mut self.im);

        let mut ln_abs = 0.0;
        let mut phase = (1.0, 0.0);
        for col in 0..n {
            let mut piv = col;
            let mut best = -1.0;
            for r in col..n {
                let v = re[r * n + col] * re[r * n + col] + im[r * n + col] * im[r * n + col];
                if v > best {
                    best = v;
                    piv = r;
                }
            }
            if best == 0.0 {
                return (f64::NEG_INFINITY, (0.0, 0.0));
            }
            if piv != col {
                for c in 0..n {
                    re.swap(piv * n + c, col * n + c);
                    im.swap(piv * n + c, col * n + c);
                }
                phase = (-phase.0, -phase.1);
            }
            let (dr, di) = (re[col * n + col], im[col * n + col]);
            let mag = best.sqrt();
            ln_abs += mag.ln();
            let (ur, ui) = (dr / mag, di / mag);
            phase = (phase.0 * ur - phase.1 * ui, phase.0 * ui + phase.1 * ur);

            // 1/d
            let (ir, ii) = (dr / best, -di / best);
            let (top_re, rest_re) = re.split_at_mut((col + 1) * n);
            let (top_im, rest_im) = im.split_at_mut((col + 1) * n);
            let prow_re = &top_re[col * n + col + 1..col * n + n];
            let prow_im = &top_im[col * n + col + 1..col * n + n];
            for r in 0..(n - col - 1) {
                let base = r * n;
                let (ar, ai) = (rest_re[base + col], rest_im[base + col]);
                if ar == 0.0 && ai == 0.0 {
                    continue;
                }
                let fr = ar * ir - ai * ii;
                let fi = ar * ii + ai * ir;
                let row_re = &mut rest_re[base + col + 1..base + n];
                let row_im = &mut rest_im[base + col + 1..base + n];
                for c in 0..row_re.len() {
                    let (pr, pi) = (prow_re[c], prow_im[c]);
                    row_re[c] -= fr * pr - fi * pi;
                    row_im[c] -= fr * pi + fi * pr;
                }
            }
        }
        (ln_abs, phase)
    }
}
