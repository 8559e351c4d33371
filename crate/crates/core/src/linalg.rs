//! Small dense and sparse linear algebra used by the local element operators
//! and the global solve.

use std::ops::{Index, IndexMut};

use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("matrix is singular to working precision (pivot {pivot} at column {col})")]
    Singular { col: usize, pivot: f64 },
    #[error("matrix is not positive definite (column {col})")]
    NotPositiveDefinite { col: usize },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("conjugate gradient did not converge in {iterations} iterations (relative residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("non-positive curvature p^T A p = {value:e} at iteration {iteration}")]
    NonSpd { iteration: usize, value: f64 },
}

/// Row-major dense matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseMatrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> DenseMatrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl Fn(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows, "matmul dimension mismatch");
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for l in 0..self.cols {
                let a = self[(i, l)];
                if a == T::zero() {
                    continue;
                }
                for j in 0..other.cols {
                    out[(i, j)] = out[(i, j)] + a * other[(l, j)];
                }
            }
        }
        out
    }

    pub fn matvec(&self, x: &[T]) -> Vec<T> {
        assert_eq!(self.cols, x.len());
        (0..self.rows)
            .map(|i| {
                self.row(i)
                    .iter()
                    .zip(x)
                    .fold(T::zero(), |acc, (&a, &b)| acc + a * b)
            })
            .collect()
    }

    pub fn scale(&self, s: T) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| v * s).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| a + b)
                .collect(),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.scale(-T::one()))
    }

    /// `(A + A^T) / 2`, bitwise symmetric.
    pub fn symmetrized(&self) -> Self {
        assert_eq!(self.rows, self.cols);
        let half = T::lit(0.5);
        Self::from_fn(self.rows, self.cols, |i, j| {
            (self[(i, j)] + self[(j, i)]) * half
        })
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    /// Solves `A X = B` by LU with partial pivoting.
    pub fn solve(&self, rhs: &Self) -> Result<Self, LinalgError> {
        Lu::new(self)?.solve_matrix(rhs)
    }

    /// Lower Cholesky factor of a symmetric positive definite matrix.
    pub fn cholesky(&self) -> Result<Self, LinalgError> {
        let n = self.rows;
        let mut l = Self::zeros(n, n);
        for j in 0..n {
            let mut d = self[(j, j)];
            for k in 0..j {
                d = d - l[(j, k)] * l[(j, k)];
            }
            if !(d > T::zero()) {
                return Err(LinalgError::NotPositiveDefinite { col: j });
            }
            let d = d.sqrt();
            l[(j, j)] = d;
            for i in (j + 1)..n {
                let mut s = self[(i, j)];
                for k in 0..j {
                    s = s - l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / d;
            }
        }
        Ok(l)
    }

    /// Eigenvalues of a symmetric matrix (cyclic Jacobi), ascending.
    pub fn symmetric_eigenvalues(&self) -> Vec<T> {
        assert_eq!(self.rows, self.cols);
        let n = self.rows;
        let mut a = self.symmetrized();
        for _sweep in 0..100 {
            let off: T = (0..n)
                .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
                .map(|(i, j)| a[(i, j)] * a[(i, j)])
                .sum();
            if off <= T::epsilon() * T::epsilon() * a.max_abs() * a.max_abs() {
                break;
            }
            for p in 0..n {
                for q in (p + 1)..n {
                    let apq = a[(p, q)];
                    if apq == T::zero() {
                        continue;
                    }
                    let theta = (a[(q, q)] - a[(p, p)]) / (T::lit(2.0) * apq);
                    let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                    let c = T::one() / (t * t + T::one()).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let akp = a[(k, p)];
                        let akq = a[(k, q)];
                        a[(k, p)] = c * akp - s * akq;
                        a[(k, q)] = s * akp + c * akq;
                    }
                    for k in 0..n {
                        let apk = a[(p, k)];
                        let aqk = a[(q, k)];
                        a[(p, k)] = c * apk - s * aqk;
                        a[(q, k)] = s * apk + c * aqk;
                    }
                }
            }
        }
        let mut ev: Vec<T> = (0..n).map(|i| a[(i, i)]).collect();
        ev.sort_by(|x, y| x.partial_cmp(y).unwrap_or(std::cmp::Ordering::Equal));
        ev
    }

    /// 1-norm condition number estimate via an explicit inverse.
    pub fn condition_estimate(&self) -> T {
        let norm1 = |m: &Self| {
            (0..m.cols)
                .map(|j| (0..m.rows).map(|i| m[(i, j)].abs()).sum::<T>())
                .fold(T::zero(), T::max)
        };
        match self.solve(&Self::identity(self.rows)) {
            Ok(inv) => norm1(self) * norm1(&inv),
            Err(_) => T::infinity(),
        }
    }
}

impl<T> Index<(usize, usize)> for DenseMatrix<T> {
    type Output = T;
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.cols + j]
    }
}

impl<T> IndexMut<(usize, usize)> for DenseMatrix<T> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.cols + j]
    }
}

/// LU factorization with partial pivoting.
pub struct Lu<T> {
    lu: DenseMatrix<T>,
    perm: Vec<usize>,
}

impl<T: Scalar> Lu<T> {
    pub fn new(a: &DenseMatrix<T>) -> Result<Self, LinalgError> {
        if a.rows != a.cols {
            return Err(LinalgError::Dimension(format!(
                "{}x{} is not square",
                a.rows, a.cols
            )));
        }
        let n = a.rows;
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let scale = a.max_abs().max(T::min_positive_value());
        for k in 0..n {
            let (p, pv) =
                (k..n)
                    .map(|i| (i, lu[(i, k)].abs()))
                    .fold(
                        (k, -T::one()),
                        |best, cur| if cur.1 > best.1 { cur } else { best },
                    );
            if pv <= scale * T::epsilon() * T::from_usize_lossy(n) {
                return Err(LinalgError::Singular {
                    col: k,
                    pivot: pv.as_f64(),
                });
            }
            if p != k {
                for j in 0..n {
                    let tmp = lu[(k, j)];
                    lu[(k, j)] = lu[(p, j)];
                    lu[(p, j)] = tmp;
                }
                perm.swap(k, p);
            }
            let piv = lu[(k, k)];
            for i in (k + 1)..n {
                let f = lu[(i, k)] / piv;
                lu[(i, k)] = f;
                if f != T::zero() {
                    for j in (k + 1)..n {
                        lu[(i, j)] = lu[(i, j)] - f * lu[(k, j)];
                    }
                }
            }
        }
        Ok(Self { lu, perm })
    }

    pub fn solve_vec(&self, b: &[T]) -> Vec<T> {
        let n = self.lu.rows;
        let mut x: Vec<T> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            for j in 0..i {
                x[i] = x[i] - self.lu[(i, j)] * x[j];
            }
        }
        for i in (0..n).rev() {
            for j in (i + 1)..n {
                x[i] = x[i] - self.lu[(i, j)] * x[j];
            }
            x[i] = x[i] / self.lu[(i, i)];
        }
        x
    }

    pub fn solve_matrix(&self, b: &DenseMatrix<T>) -> Result<DenseMatrix<T>, LinalgError> {
        if b.rows != self.lu.rows {
            return Err(LinalgError::Dimension(format!(
                "rhs has {} rows, expected {}",
                b.rows, self.lu.rows
            )));
        }
        let mut out = DenseMatrix::zeros(b.rows, b.cols);
        for j in 0..b.cols {
            let col: Vec<T> = (0..b.rows).map(|i| b[(i, j)]).collect();
            for (i, v) in self.solve_vec(&col).into_iter().enumerate() {
                out[(i, j)] = v;
            }
        }
        Ok(out)
    }
}

/// Compressed sparse row matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix<T> {
    n_rows: usize,
    n_cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<T>,
}

impl<T: Scalar> CsrMatrix<T> {
    /// Builds the matrix from `(row, col, value)` triplets. Duplicates are
    /// summed in the order they appear after a stable sort by `(row, col)`, so
    /// the result only depends on the triplet sequence.
    pub fn from_triplets(
        n_rows: usize,
        n_cols: usize,
        mut triplets: Vec<(usize, usize, T)>,
    ) -> Self {
        triplets.sort_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0usize; n_rows + 1];
        let mut col_idx = Vec::new();
        let mut values: Vec<T> = Vec::new();
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            debug_assert!(r < n_rows && c < n_cols);
            if last == Some((r, c)) {
                let lv = values.last_mut().expect("non-empty");
                *lv = *lv + v;
            } else {
                col_idx.push(c);
                values.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for i in 0..n_rows {
            row_ptr[i + 1] += row_ptr[i];
        }
        Self {
            n_rows,
            n_cols,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Iterator over `(col, value)` of row `i`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[r.clone()]
            .iter()
            .copied()
            .zip(self.values[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.col_idx[r.clone()].binary_search(&j) {
            Ok(pos) => self.values[r.start + pos],
            Err(_) => T::zero(),
        }
    }

    pub fn diagonal(&self) -> Vec<T> {
        (0..self.n_rows).map(|i| self.get(i, i)).collect()
    }

    pub fn matvec(&self, x: &[T]) -> Vec<T> {
        (0..self.n_rows)
            .map(|i| self.row(i).fold(T::zero(), |acc, (j, v)| acc + v * x[j]))
            .collect()
    }

    pub fn to_dense(&self) -> DenseMatrix<T> {
        let mut d = DenseMatrix::zeros(self.n_rows, self.n_cols);
        for i in 0..self.n_rows {
            for (j, v) in self.row(i) {
                d[(i, j)] = v;
            }
        }
        d
    }

    /// Largest `|A_ij - A_ji|`.
    pub fn asymmetry(&self) -> T {
        (0..self.n_rows)
            .flat_map(|i| self.row(i).map(move |(j, v)| (i, j, v)))
            .fold(T::zero(), |m, (i, j, v)| m.max((v - self.get(j, i)).abs()))
    }

    /// Triplet view, in storage order.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, T)> + '_ {
        (0..self.n_rows).flat_map(move |i| self.row(i).map(move |(j, v)| (i, j, v)))
    }
}

pub(crate) fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

/// Outcome of a conjugate gradient solve.
#[derive(Clone, Debug)]
pub struct CgOutcome<T> {
    pub solution: Vec<T>,
    pub iterations: usize,
    pub relative_residual: T,
}

/// Jacobi-preconditioned conjugate gradient.
pub fn conjugate_gradient<T: Scalar>(
    a: &CsrMatrix<T>,
    b: &[T],
    tol: T,
    max_iter: usize,
) -> Result<CgOutcome<T>, LinalgError> {
    let n = b.len();
    if a.n_rows != n || a.n_cols != n {
        return Err(LinalgError::Dimension(format!(
            "{}x{} matrix, rhs of length {n}",
            a.n_rows, a.n_cols
        )));
    }
    let b_norm = dot(b, b).sqrt();
    let mut x = vec![T::zero(); n];
    if b_norm == T::zero() {
        return Ok(CgOutcome {
            solution: x,
            iterations: 0,
            relative_residual: T::zero(),
        });
    }
    let inv_diag: Vec<T> = a
        .diagonal()
        .into_iter()
        .enumerate()
        .map(|(i, d)| {
            if d > T::zero() {
                Ok(T::one() / d)
            } else {
                Err(LinalgError::NonSpd {
                    iteration: 0,
                    value: a.get(i, i).as_f64(),
                })
            }
        })
        .collect::<Result<_, _>>()?;
    let mut r = b.to_vec();
    let mut z: Vec<T> = r.iter().zip(&inv_diag).map(|(&ri, &di)| ri * di).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    for it in 1..=max_iter {
        let ap = a.matvec(&p);
        let pap = dot(&p, &ap);
        if !(pap > T::zero()) {
            return Err(LinalgError::NonSpd {
                iteration: it,
                value: pap.as_f64(),
            });
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] = x[i] + alpha * p[i];
            r[i] = r[i] - alpha * ap[i];
        }
        let res = dot(&r, &r).sqrt() / b_norm;
        if res <= tol {
            return Ok(CgOutcome {
                solution: x,
                iterations: it,
                relative_residual: res,
            });
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    let res = dot(&r, &r).sqrt() / b_norm;
    Err(LinalgError::NoConvergence {
        iterations: max_iter,
        residual: res.as_f64(),
    })
}

/// Solves `L L^T x = b` given the lower Cholesky factor.
pub fn cholesky_solve<T: Scalar>(l: &DenseMatrix<T>, b: &[T]) -> Vec<T> {
    let n = b.len();
    let mut y = b.to_vec();
    for i in 0..n {
        for j in 0..i {
            y[i] = y[i] - l[(i, j)] * y[j];
        }
        y[i] = y[i] / l[(i, i)];
    }
    for i in (0..n).rev() {
        for j in (i + 1)..n {
            y[i] = y[i] - l[(j, i)] * y[j];
        }
        y[i] = y[i] / l[(i, i)];
    }
    y
}
