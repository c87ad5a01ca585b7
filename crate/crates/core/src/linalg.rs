//! Small dense linear algebra: a row-major [`Matrix`], one-sided Jacobi SVD,
//! orthonormalization, Gram volumes, rank and subspace intersection.
//!
//! Everything here targets the tiny exact-shape matrices of the geometry
//! code (at most a few dozen rows), so clarity wins over blocking tricks.

use std::fmt;
use std::ops::{Index, Mul};

use crate::error::{GkError, Result};
use crate::grassmann::Subspace;

/// Relative rank tolerance against the largest singular value.
pub const RANK_TOL: f64 = 1e-10;

/// Absolute tolerance for "this orthonormal-basis residual is zero".
pub const CONTAINMENT_TOL: f64 = 1e-9;

const JACOBI_MAX_SWEEPS: usize = 80;

#[derive(Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            let row: Vec<String> = (0..self.cols).map(|j| format!("{:>12.6e}", self[(i, j)])).collect();
            writeln!(f, "  {}", row.join(" "))?;
        }
        write!(f, "]")
    }
}

impl Matrix {
    /// Builds a matrix from row-major entries.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows * cols != data.len() {
            return Err(GkError::InvalidInput(format!(
                "{}x{} matrix needs {} entries, got {}",
                rows,
                cols,
                rows * cols,
                data.len()
            )));
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(GkError::InvalidInput("non-finite matrix entry".into()));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn diag(values: &[f64]) -> Self {
        let n = values.len();
        let mut m = Matrix::zeros(n, n);
        for (i, v) in values.iter().enumerate() {
            m.data[i * n + i] = *v;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(GkError::InvalidInput("ragged rows".into()));
        }
        Matrix::new(r, c, rows.concat())
    }

    /// Builds a matrix whose columns are the given vectors; `rows` is needed
    /// so an empty column list still has a shape.
    pub fn from_columns(rows: usize, columns: &[Vec<f64>]) -> Result<Self> {
        if columns.iter().any(|c| c.len() != rows) {
            return Err(GkError::InvalidInput(format!("columns must all have length {rows}")));
        }
        let cols = columns.len();
        let mut data = vec![0.0; rows * cols];
        for (j, col) in columns.iter().enumerate() {
            for (i, v) in col.iter().enumerate() {
                data[i * cols + j] = *v;
            }
        }
        Matrix::new(rows, cols, data)
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

    /// Row-major entries.
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.data[i * self.cols..(i + 1) * self.cols].to_vec()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.data[i * self.cols + j]).collect()
    }

    pub fn columns(&self) -> Vec<Vec<f64>> {
        (0..self.cols).map(|j| self.column(j)).collect()
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        t
    }

    pub fn matmul(&self, rhs: &Matrix) -> Matrix {
        assert_eq!(self.cols, rhs.rows, "matmul shape mismatch");
        let mut out = Matrix::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == 0.0 {
                    continue;
                }
                for j in 0..rhs.cols {
                    out.data[i * rhs.cols + j] += a * rhs.data[k * rhs.cols + j];
                }
            }
        }
        out
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, x.len(), "mul_vec shape mismatch");
        (0..self.rows)
            .map(|i| dot(&self.data[i * self.cols..(i + 1) * self.cols], x))
            .collect()
    }

    /// `selfᵀ x`.
    pub fn tr_mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(self.rows, x.len(), "tr_mul_vec shape mismatch");
        let mut out = vec![0.0; self.cols];
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[j] += self.data[i * self.cols + j] * x[i];
            }
        }
        out
    }

    pub fn sub(&self, rhs: &Matrix) -> Matrix {
        assert_eq!(self.shape(), rhs.shape(), "sub shape mismatch");
        let data = self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect();
        Matrix { rows: self.rows, cols: self.cols, data }
    }

    pub fn scale(&self, s: f64) -> Matrix {
        Matrix { rows: self.rows, cols: self.cols, data: self.data.iter().map(|x| x * s).collect() }
    }

    /// Horizontal concatenation `[self | rhs]`.
    pub fn hstack(&self, rhs: &Matrix) -> Matrix {
        assert_eq!(self.rows, rhs.rows, "hstack row mismatch");
        let mut cols = self.columns();
        cols.extend(rhs.columns());
        Matrix::from_columns(self.rows, &cols).expect("finite by construction")
    }

    /// Keeps the listed columns, in order.
    pub fn select_columns(&self, idx: &[usize]) -> Matrix {
        let cols: Vec<Vec<f64>> = idx.iter().map(|&j| self.column(j)).collect();
        Matrix::from_columns(self.rows, &cols).expect("finite by construction")
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn max_abs_diff(&self, rhs: &Matrix) -> f64 {
        self.sub(rhs).max_abs()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn svd(&self) -> Result<SvdResult> {
        svd(self)
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        assert!(i < self.rows && j < self.cols, "index out of bounds");
        &self.data[i * self.cols + j]
    }
}

impl Mul for &Matrix {
    type Output = Matrix;

    fn mul(self, rhs: &Matrix) -> Matrix {
        self.matmul(rhs)
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Thin singular value decomposition `A = left · diag(singular_values) · rightᵀ`.
///
/// For an `m×n` input with `r = min(m, n)`: `left` is `m×r`, `right` is `n×r`,
/// both with orthonormal columns, and the singular values are sorted
/// non-increasing.
#[derive(Debug, Clone)]
pub struct SvdResult {
    pub left: Matrix,
    pub singular_values: Vec<f64>,
    pub right: Matrix,
}

impl SvdResult {
    pub fn reconstruct(&self) -> Matrix {
        self.left.matmul(&Matrix::diag(&self.singular_values)).matmul(&self.right.transpose())
    }

    /// Number of singular values above [`RANK_TOL`] relative to the largest.
    pub fn rank(&self) -> usize {
        rank_of_values(&self.singular_values, RANK_TOL)
    }
}

fn rank_of_values(sv: &[f64], rel_tol: f64) -> usize {
    let top = sv.first().copied().unwrap_or(0.0);
    if top <= f64::MIN_POSITIVE {
        return 0;
    }
    sv.iter().filter(|&&s| s > rel_tol * top).count()
}

/// One-sided Jacobi SVD. Wide inputs are handled through their transpose.
pub fn svd(a: &Matrix) -> Result<SvdResult> {
    if a.data.iter().any(|x| !x.is_finite()) {
        return Err(GkError::InvalidInput("non-finite matrix entry".into()));
    }
    if a.rows < a.cols {
        let t = jacobi_tall(&a.transpose());
        return Ok(SvdResult { left: t.right, singular_values: t.singular_values, right: t.left });
    }
    Ok(jacobi_tall(a))
}

fn jacobi_tall(a: &Matrix) -> SvdResult {
    let (m, n) = a.shape();
    let mut cols = a.columns();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            e
        })
        .collect();

    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let alpha = dot(&cols[p], &cols[p]);
                let beta = dot(&cols[q], &cols[q]);
                let gamma = dot(&cols[p], &cols[q]);
                if gamma == 0.0 || gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(&mut cols, p, q, c, s);
                rotate(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            break;
        }
    }

    let mut order: Vec<(f64, usize)> = cols.iter().enumerate().map(|(j, c)| (norm(c), j)).collect();
    order.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)));

    let top = order.first().map_or(0.0, |o| o.0);
    let mut singular_values = Vec::with_capacity(n);
    let mut left_cols: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut right_cols: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut pending_zero = Vec::new();
    for &(s, j) in &order {
        let mut r = v[j].clone();
        if s > f64::MIN_POSITIVE && s > 1e-300_f64.max(top * f64::EPSILON * 1e-4) {
            let mut u: Vec<f64> = cols[j].iter().map(|x| x / s).collect();
            canonical_sign(&mut r, &mut u);
            singular_values.push(s);
            left_cols.push(u);
        } else {
            canonical_sign(&mut r, &mut []);
            singular_values.push(0.0);
            pending_zero.push(left_cols.len());
            left_cols.push(Vec::new());
        }
        right_cols.push(r);
    }

    // Left vectors for vanishing singular values complete the orthonormal set.
    if !pending_zero.is_empty() {
        let known: Vec<Vec<f64>> = left_cols.iter().filter(|c| !c.is_empty()).cloned().collect();
        let extra = complete_basis(m, &known, pending_zero.len());
        for (slot, vec) in pending_zero.into_iter().zip(extra) {
            left_cols[slot] = vec;
        }
    }

    SvdResult {
        left: Matrix::from_columns(m, &left_cols).expect("finite"),
        singular_values,
        right: Matrix::from_columns(n, &right_cols).expect("finite"),
    }
}

fn rotate(cols: &mut [Vec<f64>], p: usize, q: usize, c: f64, s: f64) {
    let (lo, hi) = cols.split_at_mut(q);
    let (cp, cq) = (&mut lo[p], &mut hi[0]);
    for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
        let (a, b) = (*x, *y);
        *x = c * a - s * b;
        *y = s * a + c * b;
    }
}

/// Makes the first non-negligible entry of `r` positive, flipping `u` along.
fn canonical_sign(r: &mut [f64], u: &mut [f64]) {
    if let Some(first) = r.iter().find(|x| x.abs() > 1e-12) {
        if *first < 0.0 {
            r.iter_mut().for_each(|x| *x = -*x);
            u.iter_mut().for_each(|x| *x = -*x);
        }
    }
}

/// Extends an orthonormal set in ℝ^dim by `count` further orthonormal
/// vectors, drawn from the standard basis by Gram-Schmidt.
pub fn complete_basis(dim: usize, known: &[Vec<f64>], count: usize) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = known.to_vec();
    let mut out = Vec::with_capacity(count);
    // Prefer the standard vectors least represented in the current span.
    let mut candidates: Vec<(f64, usize)> = (0..dim)
        .map(|i| {
            let captured: f64 = basis.iter().map(|b| b[i] * b[i]).sum();
            (captured, i)
        })
        .collect();
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    for (_, i) in candidates {
        if out.len() == count {
            break;
        }
        let mut e = vec![0.0; dim];
        e[i] = 1.0;
        for _ in 0..2 {
            for b in &basis {
                let c = dot(b, &e);
                axpy(-c, b, &mut e);
            }
        }
        let nrm = norm(&e);
        if nrm > 1e-6 {
            e.iter_mut().for_each(|x| *x /= nrm);
            basis.push(e.clone());
            out.push(e);
        }
    }
    assert_eq!(out.len(), count, "cannot complete basis beyond ambient dimension");
    out
}

/// Orthonormalizes linearly independent vectors (modified Gram-Schmidt with
/// one re-orthogonalization pass). Returns an `q×j` matrix whose columns
/// span the input, in input order.
pub fn orthonormalize(vectors: &[Vec<f64>]) -> Result<Matrix> {
    let first = vectors.first().ok_or_else(|| GkError::InvalidInput("empty vector list".into()))?;
    let q = first.len();
    if vectors.iter().any(|v| v.len() != q) {
        return Err(GkError::InvalidInput("vectors must share the ambient dimension".into()));
    }
    let stacked = Matrix::from_columns(q, vectors)?;
    let r = rank(&stacked)?;
    if r < vectors.len() {
        return Err(GkError::RankDeficient { rank: r, expected: vectors.len(), tolerance: RANK_TOL });
    }
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(vectors.len());
    for v in vectors {
        let mut w = v.clone();
        for _ in 0..2 {
            for b in &out {
                let c = dot(b, &w);
                axpy(-c, b, &mut w);
            }
        }
        let nrm = norm(&w);
        w.iter_mut().for_each(|x| *x /= nrm);
        out.push(w);
    }
    Matrix::from_columns(q, &out)
}

/// An orthonormal basis of the span of the columns of `a`, rank-revealing.
pub fn column_span(a: &Matrix) -> Result<Matrix> {
    if a.cols() == 0 {
        return Ok(Matrix::zeros(a.rows(), 0));
    }
    let s = svd(a)?;
    let r = s.rank();
    let idx: Vec<usize> = (0..r).collect();
    Ok(s.left.select_columns(&idx))
}

pub fn rank(a: &Matrix) -> Result<usize> {
    if a.cols() == 0 || a.rows() == 0 {
        return Ok(0);
    }
    Ok(svd(a)?.rank())
}

/// The `j`-volume of the parallelepiped spanned by `j` vectors in ℝ^q,
/// i.e. `√det(Gram)`, evaluated as the product of singular values.
pub fn gram_volume(vectors: &[Vec<f64>]) -> Result<f64> {
    let Some(first) = vectors.first() else {
        return Ok(1.0);
    };
    let q = first.len();
    if vectors.len() > q {
        return Ok(0.0);
    }
    let a = Matrix::from_columns(q, vectors)?;
    Ok(svd(&a)?.singular_values.iter().product())
}

/// Minimum-norm least-squares solution of `a x = b` via the pseudo-inverse,
/// together with the numerical rank of `a`.
pub fn pseudo_solve(a: &Matrix, b: &[f64]) -> Result<(Vec<f64>, usize)> {
    if a.rows() != b.len() {
        return Err(GkError::InvalidInput("pseudo_solve: right-hand side length mismatch".into()));
    }
    if a.cols() == 0 {
        return Ok((vec![], 0));
    }
    let s = svd(a)?;
    let r = s.rank();
    let ub = s.left.tr_mul_vec(b);
    let mut coef = vec![0.0; s.singular_values.len()];
    for i in 0..r {
        coef[i] = ub[i] / s.singular_values[i];
    }
    Ok((s.right.mul_vec(&coef), r))
}

/// Orthonormal basis of `{x : a x = 0}` for a tall-or-square `a`
/// (absolute singular-value tolerance `tol`).
pub(crate) fn null_space_tall(a: &Matrix, tol: f64) -> Matrix {
    let n = a.cols();
    if n == 0 {
        return Matrix::zeros(0, 0);
    }
    let padded;
    let a = if a.rows() < n {
        // Zero rows do not change the kernel.
        let mut data = a.data.clone();
        data.extend(std::iter::repeat_n(0.0, (n - a.rows()) * n));
        padded = Matrix { rows: n, cols: n, data };
        &padded
    } else {
        a
    };
    let s = jacobi_tall(a);
    let idx: Vec<usize> = s
        .singular_values
        .iter()
        .enumerate()
        .filter(|(_, &sv)| sv <= tol)
        .map(|(i, _)| i)
        .collect();
    s.right.select_columns(&idx)
}

/// `U ∩ W`, computed as the kernel of `(I − P_W)` restricted to `U`.
pub fn intersect(u: &Subspace, w: &Subspace) -> Result<Subspace> {
    if u.ambient_dim() != w.ambient_dim() {
        return Err(GkError::InvalidInput("intersect: ambient dimensions differ".into()));
    }
    let n = u.ambient_dim();
    if u.dim() == 0 || w.dim() == 0 {
        return Ok(Subspace::zero(n));
    }
    let ub = u.basis();
    let wb = w.basis();
    // Residual of U's basis after removing its W component.
    let coeffs = wb.transpose().matmul(ub);
    let resid = ub.sub(&wb.matmul(&coeffs));
    let kernel = null_space_tall(&resid, CONTAINMENT_TOL);
    if kernel.cols() == 0 {
        return Ok(Subspace::zero(n));
    }
    Subspace::from_basis(&ub.matmul(&kernel))
}
