//! Minimal matrix kernel for the dual updates.
//!
//! Structural matrices (adjacency, degree, Laplacian, incidence) are kept as
//! integer-exact [`SparseMatrix<i64>`] and converted to `f64` only when they
//! enter the neural layers. All products use a fixed loop order so identical
//! inputs give bit-identical outputs.

use std::fmt::Debug;
use std::ops::{Add, Mul, Sub};

use crate::error::{Error, Result};

/// Element type for sparse matrices.
pub trait Scalar:
    Copy + Default + PartialEq + Debug + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self>
{
    fn is_zero(&self) -> bool {
        *self == Self::default()
    }
}

impl Scalar for i64 {}
impl Scalar for f64 {}

/// Compressed sparse row matrix with unique, sorted coordinates per row.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseMatrix<T> {
    n_rows: usize,
    n_cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<T>,
}

impl<T: Scalar> SparseMatrix<T> {
    /// Builds a matrix from `(row, col, value)` triplets. Duplicate
    /// coordinates are summed and resulting zeros are dropped.
    pub fn from_triplets<I>(n_rows: usize, n_cols: usize, triplets: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize, T)>,
    {
        let mut items: Vec<(usize, usize, T)> = triplets.into_iter().collect();
        for &(r, c, _) in &items {
            if r >= n_rows || c >= n_cols {
                return Err(Error::DimensionMismatch {
                    op: "from_triplets",
                    left: (n_rows, n_cols),
                    right: (r, c),
                });
            }
        }
        items.sort_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0usize; n_rows + 1];
        let mut col_idx = Vec::with_capacity(items.len());
        let mut values: Vec<T> = Vec::with_capacity(items.len());
        let mut rows = Vec::with_capacity(items.len());
        for (r, c, v) in items {
            if let (Some(&last_r), Some(&last_c)) = (rows.last(), col_idx.last()) {
                if last_r == r && last_c == c {
                    let last = values.last_mut().expect("values tracks col_idx");
                    *last = *last + v;
                    continue;
                }
            }
            rows.push(r);
            col_idx.push(c);
            values.push(v);
        }
        let mut kept_cols = Vec::with_capacity(col_idx.len());
        let mut kept_vals = Vec::with_capacity(values.len());
        for ((r, c), v) in rows.into_iter().zip(col_idx).zip(values) {
            if v.is_zero() {
                continue;
            }
            row_ptr[r + 1] += 1;
            kept_cols.push(c);
            kept_vals.push(v);
        }
        for r in 0..n_rows {
            row_ptr[r + 1] += row_ptr[r];
        }
        Ok(Self {
            n_rows,
            n_cols,
            row_ptr,
            col_idx: kept_cols,
            values: kept_vals,
        })
    }

    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        Self {
            n_rows,
            n_cols,
            row_ptr: vec![0; n_rows + 1],
            col_idx: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn from_diagonal(diag: &[T]) -> Self {
        let n = diag.len();
        Self::from_triplets(n, n, diag.iter().enumerate().map(|(i, &v)| (i, i, v)))
            .expect("diagonal coordinates are in range")
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.n_rows, self.n_cols)
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Iterates `(col, value)` over the stored entries of a row.
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.col_idx[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    pub fn get(&self, r: usize, c: usize) -> T {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        match self.col_idx[span.clone()].binary_search(&c) {
            Ok(pos) => self.values[span.start + pos],
            Err(_) => T::default(),
        }
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, T)> + '_ {
        (0..self.n_rows).flat_map(move |r| self.row(r).map(move |(c, v)| (r, c, v)))
    }

    pub fn transpose(&self) -> Self {
        Self::from_triplets(
            self.n_cols,
            self.n_rows,
            self.triplets().map(|(r, c, v)| (c, r, v)),
        )
        .expect("transposed coordinates are in range")
    }

    pub fn map<U: Scalar>(&self, f: impl Fn(T) -> U) -> SparseMatrix<U> {
        SparseMatrix::from_triplets(
            self.n_rows,
            self.n_cols,
            self.triplets().map(|(r, c, v)| (r, c, f(v))),
        )
        .expect("same coordinates")
    }

    pub fn to_dense_rows(&self) -> Vec<Vec<T>> {
        let mut out = vec![vec![T::default(); self.n_cols]; self.n_rows];
        for (r, c, v) in self.triplets() {
            out[r][c] = v;
        }
        out
    }

    /// Diagonal entries (zero where absent).
    pub fn diagonal(&self) -> Vec<T> {
        (0..self.n_rows.min(self.n_cols))
            .map(|i| self.get(i, i))
            .collect()
    }

    /// Sparse-sparse product.
    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.n_cols != other.n_rows {
            return Err(Error::DimensionMismatch {
                op: "sparse matmul",
                left: self.shape(),
                right: other.shape(),
            });
        }
        let mut triplets = Vec::new();
        for r in 0..self.n_rows {
            for (k, a) in self.row(r) {
                for (c, b) in other.row(k) {
                    triplets.push((r, c, a * b));
                }
            }
        }
        Self::from_triplets(self.n_rows, other.n_cols, triplets)
    }

    fn combine(&self, other: &Self, op: &'static str, sign: impl Fn(T) -> T) -> Result<Self> {
        if self.shape() != other.shape() {
            return Err(Error::DimensionMismatch {
                op,
                left: self.shape(),
                right: other.shape(),
            });
        }
        Self::from_triplets(
            self.n_rows,
            self.n_cols,
            self.triplets()
                .chain(other.triplets().map(|(r, c, v)| (r, c, sign(v)))),
        )
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.combine(other, "sparse add", |v| v)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.combine(other, "sparse sub", |v| T::default() - v)
    }

    pub fn scale(&self, factor: T) -> Self {
        self.map(|v| v * factor)
    }
}

/// Row-major dense `f64` matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    /// Wraps a row-major buffer; rejects wrong lengths and non-finite values.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                op: "from_vec",
                left: (rows, cols),
                right: (data.len(), 1),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n_rows = rows.len();
        let n_cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(n_rows * n_cols);
        for row in rows {
            if row.len() != n_cols {
                return Err(Error::DimensionMismatch {
                    op: "from_rows",
                    left: (n_rows, n_cols),
                    right: (1, row.len()),
                });
            }
            data.extend_from_slice(row);
        }
        Self::from_vec(n_rows, n_cols, data)
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

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, value: f64) {
        self.data[r * self.cols + c] = value;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    fn check_same(&self, other: &Self, op: &'static str) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::DimensionMismatch {
                op,
                left: self.shape(),
                right: other.shape(),
            });
        }
        Ok(())
    }

    fn zip_with(
        &self,
        other: &Self,
        op: &'static str,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Self> {
        self.check_same(other, op)?;
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, "sub", |a, b| a - b)
    }

    pub fn hadamard(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, "hadamard", |a, b| a * b)
    }

    pub fn add_assign(&mut self, other: &Self) -> Result<()> {
        self.check_same(other, "add_assign")?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn scale(&self, factor: f64) -> Self {
        self.map(|v| v * factor)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    /// Sum over rows, as a 1 × cols matrix.
    pub fn sum_rows(&self) -> Self {
        let mut out = Self::zeros(1, self.cols);
        for r in 0..self.rows {
            for (o, v) in out.data.iter_mut().zip(self.row(r)) {
                *o += v;
            }
        }
        out
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Dense product `x · w`.
pub fn gemm(x: &DenseMatrix, w: &DenseMatrix) -> Result<DenseMatrix> {
    if x.cols != w.rows {
        return Err(Error::DimensionMismatch {
            op: "gemm",
            left: x.shape(),
            right: w.shape(),
        });
    }
    let mut out = DenseMatrix::zeros(x.rows, w.cols);
    for i in 0..x.rows {
        let out_row = &mut out.data[i * w.cols..(i + 1) * w.cols];
        for k in 0..x.cols {
            let a = x.data[i * x.cols + k];
            if a == 0.0 {
                continue;
            }
            let w_row = &w.data[k * w.cols..(k + 1) * w.cols];
            for (o, b) in out_row.iter_mut().zip(w_row) {
                *o += a * b;
            }
        }
    }
    Ok(out)
}

/// `xᵀ · y` without materializing the transpose.
pub fn gemm_tn(x: &DenseMatrix, y: &DenseMatrix) -> Result<DenseMatrix> {
    if x.rows != y.rows {
        return Err(Error::DimensionMismatch {
            op: "gemm_tn",
            left: x.shape(),
            right: y.shape(),
        });
    }
    let mut out = DenseMatrix::zeros(x.cols, y.cols);
    for r in 0..x.rows {
        let y_row = y.row(r);
        for (i, &a) in x.row(r).iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            let out_row = &mut out.data[i * y.cols..(i + 1) * y.cols];
            for (o, b) in out_row.iter_mut().zip(y_row) {
                *o += a * b;
            }
        }
    }
    Ok(out)
}

/// `x · yᵀ` without materializing the transpose.
pub fn gemm_nt(x: &DenseMatrix, y: &DenseMatrix) -> Result<DenseMatrix> {
    if x.cols != y.cols {
        return Err(Error::DimensionMismatch {
            op: "gemm_nt",
            left: x.shape(),
            right: y.shape(),
        });
    }
    let mut out = DenseMatrix::zeros(x.rows, y.rows);
    for i in 0..x.rows {
        let x_row = x.row(i);
        for j in 0..y.rows {
            let mut acc = 0.0;
            for (a, b) in x_row.iter().zip(y.row(j)) {
                acc += a * b;
            }
            out.data[i * y.rows + j] = acc;
        }
    }
    Ok(out)
}

/// Sparse-dense product; cost proportional to `nnz(s) · cols(x)`.
pub fn spmm(s: &SparseMatrix<f64>, x: &DenseMatrix) -> Result<DenseMatrix> {
    if s.n_cols() != x.rows {
        return Err(Error::DimensionMismatch {
            op: "spmm",
            left: s.shape(),
            right: x.shape(),
        });
    }
    let mut out = DenseMatrix::zeros(s.n_rows(), x.cols);
    for r in 0..s.n_rows() {
        let out_row = &mut out.data[r * x.cols..(r + 1) * x.cols];
        for (k, a) in s.row(r) {
            for (o, b) in out_row.iter_mut().zip(x.row(k)) {
                *o += a * b;
            }
        }
    }
    Ok(out)
}

/// Scales row `i` of `x` by `d[i]`.
pub fn diag_scale(d: &[f64], x: &DenseMatrix) -> Result<DenseMatrix> {
    if d.len() != x.rows {
        return Err(Error::DimensionMismatch {
            op: "diag_scale",
            left: (d.len(), d.len()),
            right: x.shape(),
        });
    }
    let mut out = x.clone();
    for (r, &f) in d.iter().enumerate() {
        for v in out.row_mut(r) {
            *v *= f;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_cycle_unoriented() -> SparseMatrix<f64> {
        SparseMatrix::from_triplets(2, 2, [(0, 0, 1.0), (1, 0, 1.0), (0, 1, 1.0), (1, 1, 1.0)])
            .unwrap()
    }

    #[test]
    fn triplets_merge_duplicates_and_drop_zeros() {
        let s = SparseMatrix::from_triplets(2, 2, [(0, 1, 2i64), (0, 1, -2), (1, 0, 3), (1, 0, 4)])
            .unwrap();
        assert_eq!(s.nnz(), 1);
        assert_eq!(s.get(1, 0), 7);
        assert_eq!(s.get(0, 1), 0);
    }

    #[test]
    fn out_of_bounds_triplet_is_rejected() {
        assert!(SparseMatrix::from_triplets(2, 2, [(2, 0, 1i64)]).is_err());
    }

    #[test]
    fn identity_spmm_is_identity() {
        let x = DenseMatrix::from_rows(&[vec![1.0, -2.0], vec![0.5, 3.0], vec![4.0, 0.0]]).unwrap();
        let eye = SparseMatrix::from_diagonal(&[1.0, 1.0, 1.0]);
        assert_eq!(spmm(&eye, &x).unwrap(), x);
    }

    #[test]
    fn unoriented_two_cycle_times_ones() {
        let ones = DenseMatrix::filled(2, 1, 1.0);
        let out = spmm(&two_cycle_unoriented(), &ones).unwrap();
        assert_eq!(out.as_slice(), &[2.0, 2.0]);
    }

    #[test]
    fn zero_sparse_gives_zeros() {
        let x = DenseMatrix::filled(3, 2, 5.0);
        let out = spmm(&SparseMatrix::zeros(4, 3), &x).unwrap();
        assert_eq!(out, DenseMatrix::zeros(4, 2));
    }

    #[test]
    fn spmm_dimension_mismatch() {
        let x = DenseMatrix::zeros(3, 2);
        assert!(matches!(
            spmm(&SparseMatrix::zeros(2, 2), &x),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn gemm_with_identity() {
        let x = DenseMatrix::from_rows(&[vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]]).unwrap();
        assert_eq!(gemm(&x, &DenseMatrix::identity(3)).unwrap(), x);
        assert!(gemm(&x, &DenseMatrix::identity(2)).is_err());
    }

    #[test]
    fn gemm_variants_agree() {
        let x = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0], vec![-1.0, 0.5]]).unwrap();
        let y = DenseMatrix::from_rows(&[vec![2.0, 0.0, 1.0], vec![1.0, -1.0, 3.0]]).unwrap();
        let direct = gemm(&x, &y).unwrap();
        assert_eq!(gemm_nt(&x, &y.transpose()).unwrap(), direct);
        assert_eq!(gemm_tn(&x.transpose(), &y).unwrap(), direct);
    }

    #[test]
    fn double_transpose_is_identity() {
        let b =
            SparseMatrix::from_triplets(3, 2, [(0, 0, -1i64), (1, 0, 1), (2, 1, 1), (1, 1, -1)])
                .unwrap();
        assert_eq!(b.transpose().transpose(), b);
    }

    #[test]
    fn diag_scale_doubles_rows() {
        let z = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let out = diag_scale(&[2.0, 2.0], &z).unwrap();
        assert_eq!(out, z.scale(2.0));
    }

    #[test]
    fn non_finite_rejected() {
        assert!(matches!(
            DenseMatrix::from_vec(1, 1, vec![f64::NAN]),
            Err(Error::NonFinite)
        ));
    }

    #[test]
    fn elementwise_ops() {
        let a = DenseMatrix::from_rows(&[vec![1.0, 2.0]]).unwrap();
        let b = DenseMatrix::from_rows(&[vec![3.0, -1.0]]).unwrap();
        assert_eq!(a.add(&b).unwrap().as_slice(), &[4.0, 1.0]);
        assert_eq!(a.sub(&b).unwrap().as_slice(), &[-2.0, 3.0]);
        assert_eq!(a.hadamard(&b).unwrap().as_slice(), &[3.0, -2.0]);
        assert!(a.add(&DenseMatrix::zeros(2, 1)).is_err());
    }
}
