//! Dense matrix storage and the handful of BLAS-1/2 kernels the solvers need.
//!
//! The matrix is kept in both row-major and column-major order so that
//! `X β` and `Xᵀ v` are both a sequence of contiguous dot products. Each
//! output entry is reduced in a fixed order, so results are bitwise identical
//! regardless of how many threads share the outer loop.

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Work (rows × cols) below which matrix-vector products stay on the caller's thread.
const PARALLEL_THRESHOLD: usize = 1 << 18;

#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    row_major: Vec<f64>,
    col_major: Vec<f64>,
}

impl DenseMatrix {
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::invalid(format!(
                "matrix data has {} entries, expected {rows}x{cols}",
                data.len()
            )));
        }
        let mut col_major = vec![0.0; rows * cols];
        for i in 0..rows {
            for j in 0..cols {
                col_major[j * rows + i] = data[i * cols + j];
            }
        }
        Ok(Self { rows, cols, row_major: data, col_major })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let p = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(n * p);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != p {
                return Err(Error::invalid(format!("row {i} has {} entries, expected {p}", r.len())));
            }
            data.extend_from_slice(r);
        }
        Self::from_row_major(n, p, data)
    }

    pub fn identity(n: usize) -> Self {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            data[i * n + i] = 1.0;
        }
        Self::from_row_major(n, n, data).expect("square identity")
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.row_major[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.col_major[j * self.rows..(j + 1) * self.rows]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.row_major[i * self.cols + j]
    }

    pub fn row_major_data(&self) -> &[f64] {
        &self.row_major
    }

    /// `out = X v`
    pub fn mul_vec_into(&self, v: &[f64], out: &mut [f64]) {
        debug_assert_eq!(v.len(), self.cols);
        debug_assert_eq!(out.len(), self.rows);
        let p = self.cols;
        if self.rows * self.cols >= PARALLEL_THRESHOLD && rayon::current_num_threads() > 1 {
            out.par_iter_mut()
                .enumerate()
                .for_each(|(i, o)| *o = dot(&self.row_major[i * p..(i + 1) * p], v));
        } else {
            for (i, o) in out.iter_mut().enumerate() {
                *o = dot(&self.row_major[i * p..(i + 1) * p], v);
            }
        }
    }

    /// `out = Xᵀ v`
    pub fn tr_mul_vec_into(&self, v: &[f64], out: &mut [f64]) {
        debug_assert_eq!(v.len(), self.rows);
        debug_assert_eq!(out.len(), self.cols);
        let n = self.rows;
        if self.rows * self.cols >= PARALLEL_THRESHOLD && rayon::current_num_threads() > 1 {
            out.par_iter_mut()
                .enumerate()
                .for_each(|(j, o)| *o = dot(&self.col_major[j * n..(j + 1) * n], v));
        } else {
            for (j, o) in out.iter_mut().enumerate() {
                *o = dot(&self.col_major[j * n..(j + 1) * n], v);
            }
        }
    }

    /// `out = X v`, summing only the columns where `v` is nonzero when it is sparse.
    pub fn mul_vec_sparse_aware_into(&self, v: &[f64], out: &mut [f64]) {
        let nz: Vec<usize> = (0..v.len()).filter(|&j| v[j] != 0.0).collect();
        if nz.len() * 4 > self.cols {
            return self.mul_vec_into(v, out);
        }
        let n = self.rows;
        let fill = |start: usize, chunk: &mut [f64]| {
            chunk.iter_mut().for_each(|o| *o = 0.0);
            for &j in &nz {
                let col = &self.col_major[j * n + start..j * n + start + chunk.len()];
                axpy(v[j], col, chunk);
            }
        };
        if n * nz.len() >= PARALLEL_THRESHOLD && rayon::current_num_threads() > 1 {
            out.par_chunks_mut(256).enumerate().for_each(|(c, chunk)| fill(c * 256, chunk));
        } else {
            fill(0, out);
        }
    }

    /// `out = Xᵀ(X v)` in a single sweep over the rows. Rows are processed in
    /// fixed blocks whose partial sums are added in block order, so the result
    /// does not depend on the thread count.
    pub fn gram_mul_into(&self, v: &[f64], out: &mut [f64]) {
        const BLOCK: usize = 64;
        let p = self.cols;
        let block_sum = |b: usize| {
            let mut acc = vec![0.0; p];
            let end = ((b + 1) * BLOCK).min(self.rows);
            for i in b * BLOCK..end {
                let row = &self.row_major[i * p..(i + 1) * p];
                axpy(dot(row, v), row, &mut acc);
            }
            acc
        };
        let blocks = self.rows.div_ceil(BLOCK);
        out.iter_mut().for_each(|o| *o = 0.0);
        if self.rows * self.cols >= PARALLEL_THRESHOLD && rayon::current_num_threads() > 1 {
            let partial: Vec<Vec<f64>> = (0..blocks).into_par_iter().map(block_sum).collect();
            for acc in partial {
                axpy(1.0, &acc, out);
            }
        } else {
            for b in 0..blocks {
                axpy(1.0, &block_sum(b), out);
            }
        }
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.rows];
        self.mul_vec_into(v, &mut out);
        out
    }

    pub fn tr_mul_vec(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        self.tr_mul_vec_into(v, &mut out);
        out
    }

    /// `X β` for a coefficient vector given only on `support`.
    pub fn mul_sparse(&self, support: &[usize], coef: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.rows];
        for (&j, &c) in support.iter().zip(coef) {
            if c != 0.0 {
                axpy(c, self.column(j), &mut out);
            }
        }
        out
    }

    /// Copy of the selected columns.
    pub fn select_columns(&self, keep: &[usize]) -> DenseMatrix {
        let mut data = Vec::with_capacity(self.rows * keep.len());
        for i in 0..self.rows {
            let row = self.row(i);
            data.extend(keep.iter().map(|&j| row[j]));
        }
        DenseMatrix::from_row_major(self.rows, keep.len(), data).expect("consistent shape")
    }
}

/// Dot product with four independent accumulators, reduced in a fixed order.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let chunks = a.len() / 4;
    let (mut s0, mut s1, mut s2, mut s3) = (0.0, 0.0, 0.0, 0.0);
    for c in 0..chunks {
        let i = 4 * c;
        s0 += a[i] * b[i];
        s1 += a[i + 1] * b[i + 1];
        s2 += a[i + 2] * b[i + 2];
        s3 += a[i + 3] * b[i + 3];
    }
    let mut tail = 0.0;
    for i in 4 * chunks..a.len() {
        tail += a[i] * b[i];
    }
    (s0 + s1) + (s2 + s3) + tail
}

#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Largest eigenvalue of `XᵀX` by Lanczos iteration with full
/// reorthogonalization on `v ↦ Xᵀ(X v)`.
///
/// Stops once the top Ritz value changes by at most `rel_tol` (relative)
/// between steps, or when the Krylov space becomes invariant.
pub fn gram_lambda_max(x: &DenseMatrix, rel_tol: f64, max_iter: usize) -> Result<f64> {
    let p = x.cols();
    if p == 0 || x.rows() == 0 {
        return Ok(0.0);
    }
    let mut q: Vec<f64> = (0..p).map(|j| 1.0 + 0.01 * ((j % 7) as f64)).collect();
    let nq = norm2(&q);
    q.iter_mut().for_each(|e| *e /= nq);
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut alphas = Vec::new();
    let mut betas: Vec<f64> = Vec::new();
    let mut w = vec![0.0; p];
    let mut prev = 0.0;
    for it in 1..=max_iter.min(p) {
        x.gram_mul_into(&q, &mut w);
        let alpha = dot(&q, &w);
        alphas.push(alpha);
        basis.push(std::mem::take(&mut q));
        // two passes of classical Gram-Schmidt against the whole basis
        for _ in 0..2 {
            for b in &basis {
                let c = dot(b, &w);
                axpy(-c, b, &mut w);
            }
        }
        let beta = norm2(&w);
        let theta = tridiagonal_max_eigenvalue(&alphas, &betas);
        let invariant = beta <= 1e-12 * theta.abs().max(f64::MIN_POSITIVE);
        if invariant || it == p || (it > 1 && (theta - prev).abs() <= rel_tol * theta) {
            return Ok(theta);
        }
        prev = theta;
        betas.push(beta);
        q = w.iter().map(|v| v / beta).collect();
    }
    if max_iter >= p {
        return Ok(prev);
    }
    Err(Error::PowerIteration { iterations: max_iter })
}

/// Largest eigenvalue of the symmetric tridiagonal matrix with diagonal
/// `a` and off-diagonal `b`, by Sturm-sequence bisection.
fn tridiagonal_max_eigenvalue(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..n {
        let r = if i > 0 { b[i - 1].abs() } else { 0.0 } + if i + 1 < n { b[i].abs() } else { 0.0 };
        lo = lo.min(a[i] - r);
        hi = hi.max(a[i] + r);
    }
    // number of eigenvalues strictly below t
    let below = |t: f64| {
        let mut count = 0;
        let mut d = 1.0;
        for i in 0..n {
            let off = if i > 0 { b[i - 1] * b[i - 1] } else { 0.0 };
            d = a[i] - t - if i > 0 { off / d } else { 0.0 };
            if d == 0.0 {
                d = -f64::EPSILON * (t.abs() + 1.0);
            }
            if d < 0.0 {
                count += 1;
            }
        }
        count
    };
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if below(mid) == n {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// Largest eigenvalue of `XᵀX` by plain power iteration on `v ↦ Xᵀ(X v)`.
///
/// Stops once the Rayleigh quotient changes by at most `rel_tol` (relative)
/// between iterations. The start vector is deterministic.
pub fn power_lambda_max(x: &DenseMatrix, rel_tol: f64, max_iter: usize) -> Result<f64> {
    let p = x.cols();
    if p == 0 || x.rows() == 0 {
        return Ok(0.0);
    }
    // Slightly non-uniform start so that no eigenvector is exactly orthogonal to it.
    let mut v: Vec<f64> = (0..p).map(|j| 1.0 + 0.01 * ((j % 7) as f64)).collect();
    let nv = norm2(&v);
    v.iter_mut().for_each(|e| *e /= nv);
    let mut xv = vec![0.0; x.rows()];
    let mut w = vec![0.0; p];
    let mut prev = 0.0;
    for it in 1..=max_iter {
        x.mul_vec_into(&v, &mut xv);
        let lambda = dot(&xv, &xv);
        x.tr_mul_vec_into(&xv, &mut w);
        let nw = norm2(&w);
        if nw == 0.0 {
            return Ok(0.0);
        }
        if it > 1 && (lambda - prev).abs() <= rel_tol * lambda {
            return Ok(lambda.max(nw));
        }
        prev = lambda;
        for (vi, wi) in v.iter_mut().zip(&w) {
            *vi = wi / nw;
        }
    }
    Err(Error::PowerIteration { iterations: max_iter })
}
