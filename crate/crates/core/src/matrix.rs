//! Dense matrices, kernels, partitions and the row-projection primitives the
//! samplers are built on.

use std::fmt;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{DppError, Result};

/// Eigenvalues down to `-DEFAULT_PSD_TOL · λ_max` are accepted as roundoff.
pub const DEFAULT_PSD_TOL: f64 = 1e-8;

/// Rows whose squared norm falls below this fraction of the largest squared
/// row norm are treated as zero.
pub(crate) const ZERO_ROW_REL: f64 = 1e-12;

const SYMMETRY_TOL: f64 = 1e-10;

/// An `m × n` real matrix whose rows are item feature vectors. Row-major.
#[derive(Clone, PartialEq)]
pub struct FeatureMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl FeatureMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(DppError::InvalidInput(format!(
                "feature matrix must be at least 1×1, got {rows}×{cols}"
            )));
        }
        if data.len() != rows * cols {
            return Err(DppError::InvalidInput(format!(
                "expected {} entries for a {rows}×{cols} matrix, got {}",
                rows * cols,
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|x| !x.is_finite()) {
            return Err(DppError::InvalidInput(format!(
                "non-finite entry at row {}, column {}",
                pos / cols,
                pos % cols
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let m = rows.len();
        let n = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(m * n);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != n {
                return Err(DppError::InvalidInput(format!(
                    "row {i} has {} entries, expected {n}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Self::new(m, n, data)
    }

    pub fn identity(m: usize) -> Self {
        let mut data = vec![0.0; m * m];
        for i in 0..m {
            data[i * m + i] = 1.0;
        }
        Self {
            rows: m,
            cols: m,
            data,
        }
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn row_norm_sq(&self, i: usize) -> f64 {
        dot(self.row(i), self.row(i))
    }

    pub fn max_row_norm_sq(&self) -> f64 {
        (0..self.rows)
            .map(|i| self.row_norm_sq(i))
            .fold(0.0, f64::max)
    }

    pub fn frobenius_norm(&self) -> f64 {
        dot(&self.data, &self.data).sqrt()
    }

    /// Rows `indices`, in that order.
    pub fn select_rows(&self, indices: &[usize]) -> Result<Self> {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            if i >= self.rows {
                return Err(DppError::IndexOutOfRange {
                    index: i,
                    len: self.rows,
                });
            }
            data.extend_from_slice(self.row(i));
        }
        Self::new(indices.len(), self.cols, data)
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|x| c * x).collect(),
        }
    }

    pub(crate) fn to_nalgebra(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.data)
    }
}

impl fmt::Debug for FeatureMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut list = f.debug_list();
        for i in 0..self.rows {
            list.entry(&self.row(i));
        }
        list.finish()
    }
}

/// A symmetric positive semidefinite `m × m` kernel. Row-major.
#[derive(Clone, PartialEq)]
pub struct Kernel {
    size: usize,
    data: Vec<f64>,
}

impl Kernel {
    /// Symmetrizes `data` by averaging mirrored entries and checks positive
    /// semidefiniteness with [`DEFAULT_PSD_TOL`].
    pub fn new(size: usize, data: Vec<f64>) -> Result<Self> {
        Self::with_tolerance(size, data, DEFAULT_PSD_TOL)
    }

    pub fn with_tolerance(size: usize, mut data: Vec<f64>, tol: f64) -> Result<Self> {
        if size == 0 {
            return Err(DppError::InvalidInput("kernel must be at least 1×1".into()));
        }
        if data.len() != size * size {
            return Err(DppError::InvalidInput(format!(
                "expected {} entries for a {size}×{size} kernel, got {}",
                size * size,
                data.len()
            )));
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(DppError::InvalidInput(
                "kernel has non-finite entries".into(),
            ));
        }
        for i in 0..size {
            for j in (i + 1)..size {
                let (a, b) = (data[i * size + j], data[j * size + i]);
                if (a - b).abs() > SYMMETRY_TOL * (1.0 + a.abs()) {
                    return Err(DppError::InvalidInput(format!(
                        "kernel is not symmetric at ({i}, {j}): {a} vs {b}"
                    )));
                }
                let avg = 0.5 * (a + b);
                data[i * size + j] = avg;
                data[j * size + i] = avg;
            }
        }
        let kernel = Self { size, data };
        check_psd(&kernel.eigenvalues(), tol)?;
        Ok(kernel)
    }

    /// Caller guarantees exact symmetry and positive semidefiniteness.
    pub(crate) fn from_symmetric_unchecked(size: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), size * size);
        Self { size, data }
    }

    pub fn identity(m: usize) -> Self {
        let mut data = vec![0.0; m * m];
        for i in 0..m {
            data[i * m + i] = 1.0;
        }
        Self { size: m, data }
    }

    pub fn diagonal(diag: &[f64]) -> Result<Self> {
        let m = diag.len();
        let mut data = vec![0.0; m * m];
        for (i, &d) in diag.iter().enumerate() {
            data[i * m + i] = d;
        }
        Self::new(m, data)
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.size + j]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn trace(&self) -> f64 {
        (0..self.size).map(|i| self.get(i, i)).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        dot(&self.data, &self.data).sqrt()
    }

    /// `K_{S,S}` as a row-major `|S| × |S|` buffer.
    pub(crate) fn principal_submatrix(&self, indices: &[usize]) -> Vec<f64> {
        let s = indices.len();
        let mut out = Vec::with_capacity(s * s);
        for &i in indices {
            for &j in indices {
                out.push(self.get(i, j));
            }
        }
        out
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let m = DMatrix::from_row_slice(self.size, self.size, &self.data);
        let mut eig: Vec<f64> = SymmetricEigen::new(m).eigenvalues.iter().copied().collect();
        eig.sort_by(f64::total_cmp);
        eig
    }
}

impl fmt::Debug for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut list = f.debug_list();
        for i in 0..self.size {
            list.entry(&&self.data[i * self.size..(i + 1) * self.size]);
        }
        list.finish()
    }
}

fn check_psd(eigenvalues: &[f64], tol: f64) -> Result<()> {
    let max = eigenvalues
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    let min = eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    if min < -tol * max.max(0.0) {
        return Err(DppError::NotPsd {
            min_eigenvalue: min,
            max_eigenvalue: max,
            tol,
        });
    }
    Ok(())
}

/// A disjoint partition of the items `0..m` into `p` non-empty parts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    part_of: Vec<usize>,
    part_sizes: Vec<usize>,
}

impl Partition {
    /// `part_of[i]` is the 0-based part label of item `i`. Labels must be
    /// `0..p` with every part non-empty.
    pub fn new(part_of: Vec<usize>) -> Result<Self> {
        if part_of.is_empty() {
            return Err(DppError::InvalidInput("partition has no items".into()));
        }
        let p = part_of.iter().max().map_or(0, |&l| l + 1);
        let mut part_sizes = vec![0; p];
        for &l in &part_of {
            part_sizes[l] += 1;
        }
        if let Some(l) = part_sizes.iter().position(|&s| s == 0) {
            return Err(DppError::InvalidInput(format!("part {l} is empty")));
        }
        Ok(Self {
            part_of,
            part_sizes,
        })
    }

    /// Contiguous parts: the first `sizes[0]` items form part 0, and so on.
    pub fn contiguous(sizes: &[usize]) -> Result<Self> {
        let part_of = sizes
            .iter()
            .enumerate()
            .flat_map(|(l, &s)| std::iter::repeat_n(l, s))
            .collect();
        Self::new(part_of)
    }

    pub fn single(m: usize) -> Result<Self> {
        Self::new(vec![0; m])
    }

    pub fn len(&self) -> usize {
        self.part_of.len()
    }

    pub fn is_empty(&self) -> bool {
        self.part_of.is_empty()
    }

    pub fn num_parts(&self) -> usize {
        self.part_sizes.len()
    }

    pub fn part_of(&self, item: usize) -> usize {
        self.part_of[item]
    }

    pub fn labels(&self) -> &[usize] {
        &self.part_of
    }

    pub fn part_sizes(&self) -> &[usize] {
        &self.part_sizes
    }

    pub fn members(&self, part: usize) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| self.part_of[i] == part)
            .collect()
    }

    /// Number of `items` falling in each part.
    pub fn counts(&self, items: &[usize]) -> Vec<usize> {
        let mut counts = vec![0; self.num_parts()];
        for &i in items {
            counts[self.part_of[i]] += 1;
        }
        counts
    }
}

/// A partition together with per-part quotas `(k₁, …, k_p)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartitionSpec {
    partition: Partition,
    quotas: Vec<usize>,
}

impl PartitionSpec {
    pub fn new(partition: Partition, quotas: Vec<usize>) -> Result<Self> {
        if quotas.len() != partition.num_parts() {
            return Err(DppError::InvalidInput(format!(
                "{} quotas given for {} parts",
                quotas.len(),
                partition.num_parts()
            )));
        }
        for (l, (&k, &size)) in quotas.iter().zip(partition.part_sizes()).enumerate() {
            if k > size {
                return Err(DppError::InvalidInput(format!(
                    "quota {k} exceeds size {size} of part {}",
                    l + 1
                )));
            }
        }
        if quotas.iter().sum::<usize>() == 0 {
            return Err(DppError::InvalidInput("quotas sum to zero".into()));
        }
        Ok(Self { partition, quotas })
    }

    /// The plain cardinality constraint `|S| = k` over `m` items.
    pub fn cardinality(m: usize, k: usize) -> Result<Self> {
        Self::new(Partition::single(m)?, vec![k])
    }

    pub fn partition(&self) -> &Partition {
        &self.partition
    }

    pub fn quotas(&self) -> &[usize] {
        &self.quotas
    }

    pub fn m(&self) -> usize {
        self.partition.len()
    }

    pub fn k(&self) -> usize {
        self.quotas.iter().sum()
    }

    pub fn is_satisfied_by(&self, items: &[usize]) -> bool {
        items.iter().all(|&i| i < self.m()) && self.partition.counts(items) == self.quotas
    }

    /// Multivariate coefficient index `(m_l - k_l)_l` whose magnitude is the
    /// constrained partition function.
    pub fn coefficient_index(&self) -> Vec<usize> {
        self.partition
            .part_sizes()
            .iter()
            .zip(&self.quotas)
            .map(|(&m, &k)| m - k)
            .collect()
    }
}

/// Distinct item indices, in insertion order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Subset(Vec<usize>);

impl Subset {
    pub fn new(indices: Vec<usize>, m: usize) -> Result<Self> {
        let mut seen = vec![false; m];
        for &i in &indices {
            if i >= m {
                return Err(DppError::IndexOutOfRange { index: i, len: m });
            }
            if std::mem::replace(&mut seen[i], true) {
                return Err(DppError::InvalidInput(format!("duplicate index {i}")));
            }
        }
        Ok(Self(indices))
    }

    pub(crate) fn from_vec_unchecked(indices: Vec<usize>) -> Self {
        Self(indices)
    }

    pub fn empty() -> Self {
        Self(Vec::new())
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.0.contains(&i)
    }

    pub fn sorted(&self) -> Vec<usize> {
        let mut v = self.0.clone();
        v.sort_unstable();
        v
    }

    pub fn into_vec(self) -> Vec<usize> {
        self.0
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `K = A Aᵀ`. Only the upper triangle is computed, so the result is exactly
/// symmetric.
pub fn gram(a: &FeatureMatrix) -> Kernel {
    let m = a.nrows();
    let mut data = vec![0.0; m * m];
    for i in 0..m {
        let ri = a.row(i);
        for j in i..m {
            let v = dot(ri, a.row(j));
            data[i * m + j] = v;
            data[j * m + i] = v;
        }
    }
    Kernel::from_symmetric_unchecked(m, data)
}

/// Some `A` with `A Aᵀ = K`, from the spectral decomposition `K = V Λ Vᵀ`.
///
/// Negative eigenvalues within `tol · λ_max` of zero are clipped; eigenvectors
/// with zero eigenvalue are dropped (at least one column is always kept).
pub fn factor_kernel(kernel: &Kernel, tol: f64) -> Result<FeatureMatrix> {
    let m = kernel.size();
    let eig = SymmetricEigen::new(DMatrix::from_row_slice(m, m, kernel.as_slice()));
    let values: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    check_psd(&values, tol)?;

    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    let mut cols: Vec<usize> = order.iter().copied().filter(|&c| values[c] > 0.0).collect();
    if cols.is_empty() {
        cols.push(order[0]);
    }

    let n = cols.len();
    let mut data = vec![0.0; m * n];
    for (out_c, &c) in cols.iter().enumerate() {
        let s = values[c].max(0.0).sqrt();
        for i in 0..m {
            data[i * n + out_c] = eig.eigenvectors[(i, c)] * s;
        }
    }
    FeatureMatrix::new(m, n, data)
}

/// `det(K_{S,S})`; 1 for the empty set.
pub fn principal_minor_det(kernel: &Kernel, subset: &[usize]) -> Result<f64> {
    if let Some(&i) = subset.iter().find(|&&i| i >= kernel.size()) {
        return Err(DppError::IndexOutOfRange {
            index: i,
            len: kernel.size(),
        });
    }
    let mut sub = kernel.principal_submatrix(subset);
    Ok(lu_det(&mut sub, subset.len()))
}

/// Determinant by LU with partial pivoting. Overwrites `a`.
pub(crate) fn lu_det(a: &mut [f64], n: usize) -> f64 {
    let mut det = 1.0;
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&x, &y| a[x * n + col].abs().total_cmp(&a[y * n + col].abs()))
            .unwrap();
        if a[piv * n + col] == 0.0 {
            return 0.0;
        }
        if piv != col {
            for c in 0..n {
                a.swap(piv * n + c, col * n + c);
            }
            det = -det;
        }
        let d = a[col * n + col];
        det *= d;
        eliminate_below(a, n, col, d);
    }
    det
}

fn eliminate_below(a: &mut [f64], n: usize, col: usize, pivot: f64) {
    for r in (col + 1)..n {
        let f = a[r * n + col] / pivot;
        if f == 0.0 {
            continue;
        }
        for c in (col + 1)..n {
            a[r * n + c] -= f * a[col * n + c];
        }
    }
}

/// `(sign, ln|det|)` by LU with partial pivoting; sign is 0 for an exactly
/// singular matrix. Overwrites `a`.
pub(crate) fn lu_log_det(a: &mut [f64], n: usize) -> (f64, f64) {
    let mut sign = 1.0;
    let mut ln = 0.0;
    for col in 0..n {
        let (piv, max) =
            (col..n)
                .map(|r| (r, a[r * n + col].abs()))
                .fold(
                    (col, -1.0),
                    |best, cur| if cur.1 > best.1 { cur } else { best },
                );
        if max == 0.0 {
            return (0.0, f64::NEG_INFINITY);
        }
        if piv != col {
            for c in 0..n {
                a.swap(piv * n + c, col * n + c);
            }
            sign = -sign;
        }
        let d = a[col * n + col];
        if d < 0.0 {
            sign = -sign;
        }
        ln += d.abs().ln();
        eliminate_below(a, n, col, d);
    }
    (sign, ln)
}

/// `ln det(A_S A_Sᵀ)`; `-∞` when the rows are linearly dependent.
pub fn log_det_rows(a: &FeatureMatrix, subset: &[usize]) -> Result<f64> {
    let rows = a.select_rows(subset)?;
    let k = gram(&rows);
    let mut buf = k.as_slice().to_vec();
    let (sign, ln) = lu_log_det(&mut buf, subset.len());
    Ok(if sign > 0.0 { ln } else { f64::NEG_INFINITY })
}

/// Every row `c_j = b_j - (⟨b_j, v⟩ / ‖v‖²) v`.
pub fn project_out(b: &FeatureMatrix, v: &[f64]) -> FeatureMatrix {
    assert_eq!(v.len(), b.ncols(), "direction has the wrong dimension");
    let vv = dot(v, v);
    let mut c = b.clone();
    if vv == 0.0 {
        return c;
    }
    for j in 0..c.nrows() {
        let row = c.row_mut(j);
        let f = dot(row, v) / vv;
        if f != 0.0 {
            for (x, &y) in row.iter_mut().zip(v) {
                *x -= f * y;
            }
        }
    }
    c
}

/// Projects every row of `b` orthogonally to row `i`. Row `i` of the result is
/// exactly zero.
pub fn project_rows_orthogonal(b: &FeatureMatrix, i: usize) -> Result<FeatureMatrix> {
    if i >= b.nrows() {
        return Err(DppError::IndexOutOfRange {
            index: i,
            len: b.nrows(),
        });
    }
    let norm = b.row_norm_sq(i);
    if norm <= ZERO_ROW_REL * b.max_row_norm_sq() {
        return Err(DppError::ZeroRow { row: i });
    }
    let mut c = project_out(b, b.row(i));
    c.row_mut(i).fill(0.0);
    Ok(c)
}

/// `A - π_S(A)`: every row projected orthogonally to the span of the rows in
/// `subset`. Rows of `subset` that are linearly dependent on earlier ones are
/// skipped; all rows of `subset` come out exactly zero.
pub fn residual(a: &FeatureMatrix, subset: &[usize]) -> Result<FeatureMatrix> {
    if let Some(&i) = subset.iter().find(|&&i| i >= a.nrows()) {
        return Err(DppError::IndexOutOfRange {
            index: i,
            len: a.nrows(),
        });
    }
    let cutoff = ZERO_ROW_REL * a.max_row_norm_sq();
    let mut b = a.clone();
    for &s in subset {
        if b.row_norm_sq(s) <= cutoff {
            b.row_mut(s).fill(0.0);
            continue;
        }
        let v = b.row(s).to_vec();
        b = project_out(&b, &v);
        b.row_mut(s).fill(0.0);
    }
    Ok(b)
}
