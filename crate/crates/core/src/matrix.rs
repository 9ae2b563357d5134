//! Dense real matrices and the norms the detectors are built on.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg;

/// Default relative tolerance for [`DenseMatrix::spectral_norm`].
pub const DEFAULT_TOL: f64 = 1e-10;
/// Default iteration budget for [`DenseMatrix::spectral_norm`].
pub const DEFAULT_MAX_ITER: usize = 10_000;
/// Matrices whose smaller side is at most this size are handled by a full
/// symmetric eigendecomposition of the Gram matrix instead of power iteration.
pub const FULL_DECOMPOSITION_MAX: usize = 64;

/// A real `rows × cols` matrix stored row-major. All entries are finite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

/// Largest singular value with unit singular vectors `left` (length `rows`)
/// and `right` (length `cols`).
#[derive(Debug, Clone)]
pub struct SingularTriplet {
    pub value: f64,
    pub left: Vec<f64>,
    pub right: Vec<f64>,
}

impl DenseMatrix {
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(invalid(format!(
                "expected {} entries for a {rows}x{cols} matrix, got {}",
                rows * cols,
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|x| !x.is_finite()) {
            return Err(invalid(format!(
                "non-finite entry at ({}, {})",
                pos / cols.max(1),
                pos % cols.max(1)
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(invalid("ragged rows"));
        }
        Self::from_row_major(rows.len(), cols, rows.concat())
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(p: usize) -> Self {
        Self::from_diag(&vec![1.0; p])
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let p = diag.len();
        let mut m = Self::zeros(p, p);
        for (i, d) in diag.iter().enumerate() {
            m.data[i * p + i] = *d;
        }
        m
    }

    /// Builds a matrix entry by entry. Panics if `f` yields a non-finite value.
    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                let v = f(i, j);
                assert!(v.is_finite(), "non-finite entry at ({i}, {j})");
                data.push(v);
            }
        }
        Self { rows, cols, data }
    }

    /// Internal constructor for buffers produced by arithmetic on finite
    /// matrices.
    pub(crate) fn from_parts(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), rows * cols);
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    /// Sets one entry. Panics on a non-finite value.
    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        assert!(v.is_finite(), "non-finite entry");
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn transpose(&self) -> Self {
        let mut t = vec![0.0; self.data.len()];
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        Self::from_parts(self.cols, self.rows, t)
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(invalid(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let (n, k, m) = (self.rows, self.cols, other.cols);
        let mut out = vec![0.0; n * m];
        for i in 0..n {
            for l in 0..k {
                let a = self.data[i * k + l];
                if a == 0.0 {
                    continue;
                }
                let brow = &other.data[l * m..(l + 1) * m];
                for (o, b) in out[i * m..(i + 1) * m].iter_mut().zip(brow) {
                    *o += a * b;
                }
            }
        }
        Ok(Self::from_parts(n, m, out))
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    fn zip_with(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        if self.shape() != other.shape() {
            return Err(invalid(format!(
                "shape mismatch: {:?} vs {:?}",
                self.shape(),
                other.shape()
            )));
        }
        let data = self.data.iter().zip(&other.data).map(|(a, b)| f(*a, *b)).collect();
        Self::from_row_major(self.rows, self.cols, data)
    }

    pub fn scale(&self, c: f64) -> Self {
        Self::from_parts(self.rows, self.cols, self.data.iter().map(|x| x * c).collect())
    }

    /// Frobenius inner product `⟨A, B⟩ = Σ a_ij b_ij`.
    pub fn inner(&self, other: &Self) -> Result<f64> {
        if self.shape() != other.shape() {
            return Err(invalid("shape mismatch in inner product"));
        }
        Ok(self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum())
    }

    pub fn frobenius_norm_sq(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    /// `(‖M‖₁, ‖M‖_∞)`: the largest absolute column sum and the largest
    /// absolute row sum.
    pub fn induced_norms(&self) -> (f64, f64) {
        let mut col_sums = vec![0.0; self.cols];
        let mut inf_norm: f64 = 0.0;
        for i in 0..self.rows {
            let mut rs = 0.0;
            for (j, v) in self.row(i).iter().enumerate() {
                rs += v.abs();
                col_sums[j] += v.abs();
            }
            inf_norm = inf_norm.max(rs);
        }
        let one_norm = col_sums.into_iter().fold(0.0, f64::max);
        (one_norm, inf_norm)
    }

    /// Largest singular value.
    ///
    /// Uses a full eigendecomposition of the smaller Gram matrix when
    /// `min(rows, cols) <= 64`, otherwise power iteration on `MᵀM` from the
    /// normalized all-ones vector.
    pub fn spectral_norm(&self, tol: f64, max_iter: usize) -> Result<f64> {
        if !(tol > 0.0) || max_iter == 0 {
            return Err(invalid("spectral_norm requires tol > 0 and max_iter >= 1"));
        }
        if self.data.iter().any(|x| !x.is_finite()) {
            return Err(invalid("non-finite entries"));
        }
        if self.data.is_empty() {
            return Ok(0.0);
        }
        if self.rows.min(self.cols) <= FULL_DECOMPOSITION_MAX {
            return Ok(self.dense_top_singular(false).value);
        }
        Ok(self.power_top(tol, max_iter)?.sigma)
    }

    /// Spectral norm with the default tolerance. Zero rows and columns are
    /// dropped first; if power iteration stalls, falls back to a full
    /// decomposition so the call cannot fail.
    pub fn opnorm(&self) -> f64 {
        let compact = self.drop_zero_lines();
        if compact.data.is_empty() {
            return 0.0;
        }
        if compact.rows.min(compact.cols) <= FULL_DECOMPOSITION_MAX {
            return compact.dense_top_singular(false).value;
        }
        match compact.power_top(DEFAULT_TOL, DEFAULT_MAX_ITER) {
            Ok(r) => r.sigma,
            Err(_) => compact.dense_top_singular(false).value,
        }
    }

    /// Top singular value together with unit singular vectors.
    pub fn top_singular_triplet(&self) -> SingularTriplet {
        if self.data.is_empty() {
            return SingularTriplet {
                value: 0.0,
                left: vec![0.0; self.rows],
                right: vec![0.0; self.cols],
            };
        }
        if self.rows.min(self.cols) <= FULL_DECOMPOSITION_MAX {
            return self.dense_top_singular(true);
        }
        let right = match self.power_top(DEFAULT_TOL, DEFAULT_MAX_ITER) {
            Ok(r) => r.right,
            Err(_) => return self.dense_top_singular(true),
        };
        self.complete_triplet_from_right(right)
    }

    fn power_top(&self, tol: f64, max_iter: usize) -> Result<linalg::PowerResult> {
        linalg::power_iteration(&self.data, self.rows, self.cols, tol, max_iter)
    }

    fn complete_triplet_from_right(&self, right: Vec<f64>) -> SingularTriplet {
        let mut left = vec![0.0; self.rows];
        linalg::matvec(&self.data, self.rows, self.cols, &right, &mut left);
        let value = linalg::norm2(&left);
        if value > 0.0 {
            left.iter_mut().for_each(|x| *x /= value);
        }
        SingularTriplet { value, left, right }
    }

    fn complete_triplet_from_left(&self, left: Vec<f64>) -> SingularTriplet {
        let mut right = vec![0.0; self.cols];
        linalg::matvec_t(&self.data, self.rows, self.cols, &left, &mut right);
        let value = linalg::norm2(&right);
        if value > 0.0 {
            right.iter_mut().for_each(|x| *x /= value);
        }
        SingularTriplet { value, left, right }
    }

    fn dense_top_singular(&self, want_vectors: bool) -> SingularTriplet {
        let (r, c) = (self.rows, self.cols);
        if r >= c {
            let g = linalg::gram_cols(&self.data, r, c);
            let e = linalg::symmetric_eigen(&g, c);
            let value = e.values[0].max(0.0).sqrt();
            if !want_vectors {
                return SingularTriplet {
                    value,
                    left: Vec::new(),
                    right: Vec::new(),
                };
            }
            self.complete_triplet_from_right(e.vectors.into_iter().next().unwrap_or_default())
        } else {
            let g = linalg::gram_rows(&self.data, r, c);
            let e = linalg::symmetric_eigen(&g, r);
            let value = e.values[0].max(0.0).sqrt();
            if !want_vectors {
                return SingularTriplet {
                    value,
                    left: Vec::new(),
                    right: Vec::new(),
                };
            }
            self.complete_triplet_from_left(e.vectors.into_iter().next().unwrap_or_default())
        }
    }

    /// `‖M‖_F² / ‖M‖₂²`.
    pub fn stable_rank(&self) -> Result<f64> {
        let fro = self.frobenius_norm_sq();
        if fro == 0.0 {
            return Err(Error::UndefinedValue(
                "stable rank of the zero matrix".into(),
            ));
        }
        let op = self.opnorm();
        Ok(fro / (op * op))
    }

    /// Number of nonzero entries in each row and each column, counting exact
    /// zeros as zero.
    pub fn line_counts(&self, threshold: f64) -> (Vec<usize>, Vec<usize>) {
        let mut rc = vec![0usize; self.rows];
        let mut cc = vec![0usize; self.cols];
        for i in 0..self.rows {
            for (j, v) in self.row(i).iter().enumerate() {
                if v.abs() > threshold {
                    rc[i] += 1;
                    cc[j] += 1;
                }
            }
        }
        (rc, cc)
    }

    /// True iff every row and every column has at most `k` nonzero entries.
    pub fn is_k_sparse(&self, budget: SparsityBudget) -> bool {
        self.is_k_sparse_with_threshold(budget, 0.0)
    }

    /// Like [`Self::is_k_sparse`] but treats entries with `|x| <= threshold`
    /// as zero, for validating estimator outputs.
    pub fn is_k_sparse_with_threshold(&self, budget: SparsityBudget, threshold: f64) -> bool {
        let (rc, cc) = self.line_counts(threshold);
        rc.iter().chain(&cc).all(|&c| c <= budget.k())
    }

    /// Smallest `k` for which the matrix is k-sparse.
    pub fn sparsity(&self) -> usize {
        let (rc, cc) = self.line_counts(0.0);
        rc.into_iter().chain(cc).max().unwrap_or(0)
    }

    pub fn submatrix(&self, rows: &IndexSet, cols: &IndexSet) -> Result<Self> {
        if rows.iter().any(|i| i >= self.rows) || cols.iter().any(|j| j >= self.cols) {
            return Err(invalid(format!(
                "index out of range for a {}x{} matrix",
                self.rows, self.cols
            )));
        }
        Ok(self.submatrix_unchecked(rows.as_slice(), cols.as_slice()))
    }

    /// Submatrix from raw index lists; panics on out-of-range indices.
    pub(crate) fn submatrix_unchecked(&self, rows: &[usize], cols: &[usize]) -> Self {
        let mut data = Vec::with_capacity(rows.len() * cols.len());
        for &i in rows {
            let r = self.row(i);
            data.extend(cols.iter().map(|&j| r[j]));
        }
        Self::from_parts(rows.len(), cols.len(), data)
    }

    /// Copy with all-zero rows and columns removed.
    pub(crate) fn drop_zero_lines(&self) -> Self {
        let (rc, cc) = self.line_counts(0.0);
        if rc.iter().all(|&c| c > 0) && cc.iter().all(|&c| c > 0) {
            return self.clone();
        }
        let rows: Vec<usize> = (0..self.rows).filter(|&i| rc[i] > 0).collect();
        let cols: Vec<usize> = (0..self.cols).filter(|&j| cc[j] > 0).collect();
        self.submatrix_unchecked(&rows, &cols)
    }

    /// `Σ ‖row_i‖²` per row.
    pub fn row_norms_sq(&self) -> Vec<f64> {
        (0..self.rows)
            .map(|i| self.row(i).iter().map(|x| x * x).sum())
            .collect()
    }

    pub fn col_norms_sq(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for i in 0..self.rows {
            for (o, v) in out.iter_mut().zip(self.row(i)) {
                *o += v * v;
            }
        }
        out
    }

    /// Gram matrix `MᵀM`.
    pub fn gram(&self) -> Self {
        Self::from_parts(
            self.cols,
            self.cols,
            linalg::gram_cols(&self.data, self.rows, self.cols),
        )
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.is_square()
            && (0..self.rows).all(|i| {
                (0..i).all(|j| (self.get(i, j) - self.get(j, i)).abs() <= tol)
            })
    }
}

/// Row/column sparsity budget `k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SparsityBudget(usize);

impl SparsityBudget {
    /// A budget valid for a `rows × cols` matrix: `1 <= k <= min(rows, cols)`.
    pub fn new(k: usize, rows: usize, cols: usize) -> Result<Self> {
        if k == 0 || k > rows.min(cols) {
            return Err(invalid(format!(
                "sparsity budget k={k} outside [1, {}]",
                rows.min(cols)
            )));
        }
        Ok(Self(k))
    }

    /// A budget without a shape check.
    pub fn unchecked(k: usize) -> Self {
        Self(k)
    }

    pub fn k(self) -> usize {
        self.0
    }
}

/// Strictly increasing indices into `[0, bound)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct IndexSet {
    indices: Vec<usize>,
    bound: usize,
}

impl IndexSet {
    /// Sorts and validates; duplicates or indices `>= bound` are rejected.
    pub fn new(mut indices: Vec<usize>, bound: usize) -> Result<Self> {
        indices.sort_unstable();
        if indices.windows(2).any(|w| w[0] == w[1]) {
            return Err(invalid("duplicate index in index set"));
        }
        if let Some(&last) = indices.last() {
            if last >= bound {
                return Err(invalid(format!("index {last} out of range (bound {bound})")));
            }
        }
        Ok(Self { indices, bound })
    }

    /// `{0, 1, ..., p-1}`.
    pub fn all(p: usize) -> Self {
        Self {
            indices: (0..p).collect(),
            bound: p,
        }
    }

    pub fn empty(bound: usize) -> Self {
        Self {
            indices: Vec::new(),
            bound,
        }
    }

    pub(crate) fn from_sorted_unchecked(indices: Vec<usize>, bound: usize) -> Self {
        debug_assert!(indices.windows(2).all(|w| w[0] < w[1]));
        Self { indices, bound }
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.indices
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.indices.iter().copied()
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn bound(&self) -> usize {
        self.bound
    }

    pub fn contains(&self, i: usize) -> bool {
        self.indices.binary_search(&i).is_ok()
    }

    /// Maps positions in `inner` (indices into `self`) back to the original
    /// index space: `(self ∘ inner)[t] = self[inner[t]]`.
    pub fn compose(&self, inner: &IndexSet) -> Result<IndexSet> {
        if inner.iter().any(|t| t >= self.len()) {
            return Err(invalid("inner index set exceeds outer set size"));
        }
        Ok(Self::from_sorted_unchecked(
            inner.iter().map(|t| self.indices[t]).collect(),
            self.bound,
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[f64]]) -> DenseMatrix {
        DenseMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn spectral_norm_small_cases() {
        let n = |x: &DenseMatrix| x.spectral_norm(DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        assert!((n(&DenseMatrix::identity(3)) - 1.0).abs() < 1e-14);
        assert!((n(&DenseMatrix::from_diag(&[3.0, 4.0])) - 4.0).abs() < 1e-14);
        assert!((n(&m(&[&[1.0, 1.0], &[1.0, 1.0]])) - 2.0).abs() < 1e-14);
        assert_eq!(n(&DenseMatrix::zeros(3, 2)), 0.0);
    }

    #[test]
    fn spectral_norm_rejects_bad_parameters() {
        let a = DenseMatrix::identity(2);
        assert!(matches!(a.spectral_norm(0.0, 10), Err(Error::InvalidInput(_))));
        assert!(matches!(a.spectral_norm(1e-3, 0), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn power_iteration_reports_non_convergence() {
        // Two nearly tied singular values with a 1-iteration budget.
        let mut diag = vec![1.0; 80];
        diag[0] = 1.0 + 1e-6;
        let a = DenseMatrix::from_diag(&diag);
        match a.spectral_norm(1e-14, 1) {
            Err(Error::Convergence { iterations, last }) => {
                assert_eq!(iterations, 1);
                assert!(last > 0.9);
            }
            other => panic!("expected convergence error, got {other:?}"),
        }
    }

    #[test]
    fn non_finite_entries_are_rejected() {
        assert!(DenseMatrix::from_row_major(1, 2, vec![1.0, f64::NAN]).is_err());
        assert!(DenseMatrix::from_row_major(1, 2, vec![1.0]).is_err());
    }

    #[test]
    fn frobenius_examples() {
        assert_eq!(DenseMatrix::zeros(4, 4).frobenius_norm_sq(), 0.0);
        assert_eq!(DenseMatrix::identity(7).frobenius_norm_sq(), 7.0);
        assert_eq!(m(&[&[1.0, 2.0], &[3.0, 4.0]]).frobenius_norm_sq(), 30.0);
    }

    #[test]
    fn stable_rank_examples() {
        assert!((DenseMatrix::identity(5).stable_rank().unwrap() - 5.0).abs() < 1e-12);
        let r1 = m(&[&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]]);
        assert!((r1.stable_rank().unwrap() - 1.0).abs() < 1e-12);
        let d = DenseMatrix::from_diag(&[2.0, 1.0]);
        assert!((d.stable_rank().unwrap() - 1.25).abs() < 1e-12);
        assert!(matches!(
            DenseMatrix::zeros(2, 2).stable_rank(),
            Err(Error::UndefinedValue(_))
        ));
    }

    #[test]
    fn induced_norm_examples() {
        assert_eq!(m(&[&[1.0, -2.0], &[3.0, 0.0]]).induced_norms(), (4.0, 3.0));
        assert_eq!(DenseMatrix::identity(4).induced_norms(), (1.0, 1.0));
        let ones = DenseMatrix::from_fn(5, 5, |_, _| 1.0);
        assert_eq!(ones.induced_norms(), (5.0, 5.0));
    }

    #[test]
    fn sparsity_examples() {
        let b = |k| SparsityBudget::unchecked(k);
        assert!(DenseMatrix::identity(4).is_k_sparse(b(1)));
        assert!(!DenseMatrix::from_fn(3, 3, |_, _| 1.0).is_k_sparse(b(2)));
        let k = 3;
        let blocks = DenseMatrix::from_fn(9, 9, |i, j| if i / k == j / k { 1.0 } else { 0.0 });
        assert!(blocks.is_k_sparse(b(k)));
        assert!(!blocks.is_k_sparse(b(k - 1)));
        let noisy = DenseMatrix::from_fn(3, 3, |i, j| if i == j { 1.0 } else { 1e-9 });
        assert!(!noisy.is_k_sparse(b(1)));
        assert!(noisy.is_k_sparse_with_threshold(b(1), 1e-6));
        assert!(SparsityBudget::new(0, 3, 3).is_err());
        assert!(SparsityBudget::new(4, 3, 3).is_err());
    }

    #[test]
    fn submatrix_examples() {
        let d = DenseMatrix::from_diag(&[1.0, 2.0, 3.0]);
        let all = IndexSet::all(3);
        assert_eq!(d.submatrix(&all, &all).unwrap(), d);
        let two = IndexSet::new(vec![2], 3).unwrap();
        assert_eq!(d.submatrix(&two, &two).unwrap(), m(&[&[3.0]]));
        let bad = IndexSet::new(vec![5], 6).unwrap();
        assert!(d.submatrix(&bad, &all).is_err());
    }

    #[test]
    fn index_set_validation() {
        assert_eq!(IndexSet::new(vec![3, 1], 4).unwrap().as_slice(), &[1, 3]);
        assert!(IndexSet::new(vec![1, 1], 4).is_err());
        assert!(IndexSet::new(vec![4], 4).is_err());
        let outer = IndexSet::new(vec![1, 4, 6], 8).unwrap();
        let inner = IndexSet::new(vec![0, 2], 3).unwrap();
        assert_eq!(outer.compose(&inner).unwrap().as_slice(), &[1, 6]);
    }
}
