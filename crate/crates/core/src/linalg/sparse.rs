//! Compressed-row sparse matrices and a direct sparse LU backed by `faer`.

use std::io::Write;

use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use faer::Mat;
use nalgebra::DMatrix;

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<u32>,
    values: Vec<f64>,
}

impl CsrMatrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self { nrows, ncols, row_ptr: vec![0; nrows + 1], col_idx: Vec::new(), values: Vec::new() }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            nrows: n,
            ncols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n as u32).collect(),
            values: vec![1.0; n],
        }
    }

    /// Builds from `(row, col, value)` triplets. Duplicates are summed in input order;
    /// columns within a row end up sorted.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut counts = vec![0usize; nrows + 1];
        for &(r, c, _) in triplets {
            assert!(r < nrows && c < ncols, "triplet ({r}, {c}) out of bounds");
            counts[r + 1] += 1;
        }
        for i in 0..nrows {
            counts[i + 1] += counts[i];
        }
        let mut fill = counts.clone();
        let mut entries = vec![(0u32, 0.0f64); triplets.len()];
        for &(r, c, v) in triplets {
            entries[fill[r]] = (c as u32, v);
            fill[r] += 1;
        }

        let mut row_ptr = Vec::with_capacity(nrows + 1);
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        row_ptr.push(0);
        for r in 0..nrows {
            let row = &mut entries[counts[r]..counts[r + 1]];
            row.sort_by_key(|&(c, _)| c);
            let mut k = 0;
            while k < row.len() {
                let c = row[k].0;
                let mut v = row[k].1;
                k += 1;
                while k < row.len() && row[k].0 == c {
                    v += row[k].1;
                    k += 1;
                }
                col_idx.push(c);
                values.push(v);
            }
            row_ptr.push(col_idx.len());
        }
        Self { nrows, ncols, row_ptr, col_idx, values }
    }

    /// Builds directly from rows of `(col, value)` pairs; each row must have sorted, distinct columns.
    pub fn from_rows(ncols: usize, rows: Vec<Vec<(u32, f64)>>) -> Self {
        let nrows = rows.len();
        let mut row_ptr = Vec::with_capacity(nrows + 1);
        let nnz = rows.iter().map(Vec::len).sum();
        let mut col_idx = Vec::with_capacity(nnz);
        let mut values = Vec::with_capacity(nnz);
        row_ptr.push(0);
        for row in rows {
            for (c, v) in row {
                debug_assert!((c as usize) < ncols);
                col_idx.push(c);
                values.push(v);
            }
            row_ptr.push(col_idx.len());
        }
        Self { nrows, ncols, row_ptr, col_idx, values }
    }

    pub fn from_dense(m: &DMatrix<f64>) -> Self {
        let rows = (0..m.nrows())
            .map(|i| {
                (0..m.ncols())
                    .filter(|&j| m[(i, j)] != 0.0)
                    .map(|j| (j as u32, m[(i, j)]))
                    .collect()
            })
            .collect();
        Self::from_rows(m.ncols(), rows)
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.nrows, self.ncols)
    }

    /// Stored entries, including any explicit zeros.
    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn count_nonzero(&self) -> usize {
        self.values.iter().filter(|v| **v != 0.0).count()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[span.clone()].iter().zip(&self.values[span]).map(|(&c, &v)| (c as usize, v))
    }

    pub fn row_nnz(&self, i: usize) -> usize {
        self.row_ptr[i + 1] - self.row_ptr[i]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.row(i).find(|&(c, _)| c == j).map_or(0.0, |(_, v)| v)
    }

    /// Same sparsity pattern (row pointers and column indices).
    pub fn same_pattern(&self, other: &Self) -> bool {
        self.nrows == other.nrows
            && self.ncols == other.ncols
            && self.row_ptr == other.row_ptr
            && self.col_idx == other.col_idx
    }

    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        (0..self.nrows).flat_map(|i| self.row(i).map(move |(j, v)| (i, j, v))).collect()
    }

    /// `y = A x`, summing each row in stored column order.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.ncols, "matvec dimension mismatch");
        (0..self.nrows)
            .map(|i| {
                let mut acc = 0.0;
                for (j, v) in self.row(i) {
                    acc += v * x[j];
                }
                acc
            })
            .collect()
    }

    /// `y = A^T x`.
    pub fn mul_vec_transpose(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.nrows, "transpose matvec dimension mismatch");
        let mut y = vec![0.0; self.ncols];
        for (i, &xi) in x.iter().enumerate() {
            for (j, v) in self.row(i) {
                y[j] += v * xi;
            }
        }
        y
    }

    /// `A * B` for dense `B`.
    pub fn mul_dense(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        assert_eq!(b.nrows(), self.ncols, "sparse-dense product dimension mismatch");
        let mut out = DMatrix::zeros(self.nrows, b.ncols());
        for c in 0..b.ncols() {
            let col = b.column(c);
            for i in 0..self.nrows {
                let mut acc = 0.0;
                for (j, v) in self.row(i) {
                    acc += v * col[j];
                }
                out[(i, c)] = acc;
            }
        }
        out
    }

    /// Sparse product `self * rhs`; exact zeros produced by cancellation are dropped.
    pub fn mul_sparse(&self, rhs: &CsrMatrix) -> CsrMatrix {
        assert_eq!(self.ncols, rhs.nrows, "sparse product dimension mismatch");
        let mut acc = vec![0.0f64; rhs.ncols];
        let mut seen = vec![false; rhs.ncols];
        let mut touched: Vec<u32> = Vec::new();
        let mut rows = Vec::with_capacity(self.nrows);
        for i in 0..self.nrows {
            touched.clear();
            for (k, a) in self.row(i) {
                for (j, b) in rhs.row(k) {
                    if !seen[j] {
                        seen[j] = true;
                        touched.push(j as u32);
                    }
                    acc[j] += a * b;
                }
            }
            touched.sort_unstable();
            let mut row = Vec::with_capacity(touched.len());
            for &j in &touched {
                let v = acc[j as usize];
                if v != 0.0 {
                    row.push((j, v));
                }
                acc[j as usize] = 0.0;
                seen[j as usize] = false;
            }
            rows.push(row);
        }
        CsrMatrix::from_rows(rhs.ncols, rows)
    }

    pub fn scale(&self, s: f64) -> CsrMatrix {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= s);
        out
    }

    pub fn transpose(&self) -> CsrMatrix {
        let t: Vec<_> = self.triplets().into_iter().map(|(i, j, v)| (j, i, v)).collect();
        CsrMatrix::from_triplets(self.ncols, self.nrows, &t)
    }

    /// Rows `rows` and columns `cols` (given as sorted index lists) as a new matrix.
    pub fn submatrix(&self, rows: &[usize], cols: &[usize]) -> CsrMatrix {
        let mut map = vec![u32::MAX; self.ncols];
        for (k, &c) in cols.iter().enumerate() {
            map[c] = k as u32;
        }
        let out_rows = rows
            .iter()
            .map(|&i| {
                self.row(i)
                    .filter(|&(j, _)| map[j] != u32::MAX)
                    .map(|(j, v)| (map[j], v))
                    .collect()
            })
            .collect();
        CsrMatrix::from_rows(cols.len(), out_rows)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.nrows, self.ncols);
        for i in 0..self.nrows {
            for (j, v) in self.row(i) {
                m[(i, j)] += v;
            }
        }
        m
    }

    /// Max absolute row sum.
    pub fn norm_inf(&self) -> f64 {
        (0..self.nrows).map(|i| self.row(i).map(|(_, v)| v.abs()).sum::<f64>()).fold(0.0, f64::max)
    }

    /// Max absolute column sum.
    pub fn norm_one(&self) -> f64 {
        let mut sums = vec![0.0; self.ncols];
        for i in 0..self.nrows {
            for (j, v) in self.row(i) {
                sums[j] += v.abs();
            }
        }
        sums.into_iter().fold(0.0, f64::max)
    }

    /// Writes `row,col,value` lines with a header.
    pub fn write_triplets_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "row,col,value")?;
        for (i, j, v) in self.triplets() {
            writeln!(w, "{i},{j},{v:e}")?;
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SparseSolveError {
    #[error("sparse LU requires a square matrix, got {0}x{1}")]
    NotSquare(usize, usize),
    #[error("sparse LU factorization failed: {0}")]
    Factorization(String),
    #[error("sparse solve produced non-finite values")]
    NonFinite,
}

/// Direct sparse LU factorization with fill-reducing ordering and partial pivoting.
pub struct SparseLu {
    n: usize,
    lu: faer::sparse::linalg::solvers::Lu<usize, f64>,
}

impl SparseLu {
    pub fn factor(a: &CsrMatrix) -> Result<Self, SparseSolveError> {
        if a.nrows != a.ncols {
            return Err(SparseSolveError::NotSquare(a.nrows, a.ncols));
        }
        let triplets: Vec<Triplet<usize, usize, f64>> =
            a.triplets().into_iter().map(|(i, j, v)| Triplet::new(i, j, v)).collect();
        let mat = SparseColMat::<usize, f64>::try_new_from_triplets(a.nrows, a.ncols, &triplets)
            .map_err(|e| SparseSolveError::Factorization(format!("{e:?}")))?;
        let lu = mat.sp_lu().map_err(|e| SparseSolveError::Factorization(format!("{e:?}")))?;
        Ok(Self { n: a.nrows, lu })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>, SparseSolveError> {
        assert_eq!(b.len(), self.n, "rhs length mismatch");
        let mut rhs = Mat::<f64>::from_fn(self.n, 1, |i, _| b[i]);
        self.lu.solve_in_place(rhs.as_mut());
        let x: Vec<f64> = (0..self.n).map(|i| rhs[(i, 0)]).collect();
        if x.iter().all(|v| v.is_finite()) {
            Ok(x)
        } else {
            Err(SparseSolveError::NonFinite)
        }
    }

    pub fn solve_transpose(&self, b: &[f64]) -> Result<Vec<f64>, SparseSolveError> {
        assert_eq!(b.len(), self.n, "rhs length mismatch");
        let mut rhs = Mat::<f64>::from_fn(self.n, 1, |i, _| b[i]);
        self.lu.solve_transpose_in_place(rhs.as_mut());
        let x: Vec<f64> = (0..self.n).map(|i| rhs[(i, 0)]).collect();
        if x.iter().all(|v| v.is_finite()) {
            Ok(x)
        } else {
            Err(SparseSolveError::NonFinite)
        }
    }

    /// Hager/Higham estimate of `||A^{-1}||_1` from a handful of solves.
    pub fn inverse_norm_one_estimate(&self) -> Result<f64, SparseSolveError> {
        let n = self.n;
        if n == 0 {
            return Ok(0.0);
        }
        let mut x = vec![1.0 / n as f64; n];
        let mut estimate = 0.0;
        let mut last_index = usize::MAX;
        for _ in 0..5 {
            let y = self.solve(&x)?;
            let norm: f64 = y.iter().map(|v| v.abs()).sum();
            if norm <= estimate {
                break;
            }
            estimate = norm;
            let sign: Vec<f64> = y.iter().map(|&v| if v >= 0.0 { 1.0 } else { -1.0 }).collect();
            let z = self.solve_transpose(&sign)?;
            let (j, zmax) = z
                .iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |acc, (i, &v)| if v.abs() > acc.1 { (i, v.abs()) } else { acc });
            let zx: f64 = z.iter().zip(&x).map(|(a, b)| a * b).sum();
            if zmax <= zx || j == last_index {
                break;
            }
            last_index = j;
            x = vec![0.0; n];
            x[j] = 1.0;
        }
        Ok(estimate)
    }
}
