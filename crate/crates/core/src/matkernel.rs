//! Dense small-matrix kernel.
//!
//! Everything in the crate is built from two value types: [`Matrix`] (general,
//! row-major) and [`SymMatrix`] (square, symmetric by construction). Sizes are
//! tiny (the largest LMI block for the CSTR benchmark is 9x9), so all storage
//! is dense and all algorithms are the textbook `O(n^3)` ones.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Index, IndexMut, Mul, Neg, Sub};

use thiserror::Error;

use crate::Scalar;

/// Condition-number ceiling above which [`invert`] reports singularity.
pub const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MatError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("non-finite entry in {0}")]
    NonFinite(&'static str),
    #[error("matrix is singular or ill-conditioned (condition estimate {0:.3e})")]
    Singular(f64),
    #[error("matrix is not positive definite")]
    NotPositiveDefinite,
}

pub type MatResult<T> = Result<T, MatError>;

/// Dense row-major real matrix.
#[derive(Clone, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![T::zero(); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> MatResult<Self> {
        if data.len() != rows * cols {
            return Err(MatError::Dimension(format!("{} entries supplied for a {rows}x{cols} matrix", data.len())));
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from nested rows. Ragged input is rejected.
    pub fn from_rows<R: AsRef<[T]>>(rows: &[R]) -> MatResult<Self> {
        let nr = rows.len();
        let nc = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(nr * nc);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != nc {
                return Err(MatError::Dimension(format!("row {i} has {} entries, expected {nc}", r.len())));
            }
            data.extend_from_slice(r);
        }
        Ok(Self { rows: nr, cols: nc, data })
    }

    pub fn from_f64_rows<R: AsRef<[f64]>>(rows: &[R]) -> MatResult<Self> {
        let conv: Vec<Vec<T>> = rows.iter().map(|r| r.as_ref().iter().map(|&v| T::lit(v)).collect()).collect();
        Self::from_rows(&conv)
    }

    pub fn column(v: &[T]) -> Self {
        Self { rows: v.len(), cols: 1, data: v.to_vec() }
    }

    pub fn row(v: &[T]) -> Self {
        Self { rows: 1, cols: v.len(), data: v.to_vec() }
    }

    pub fn diag(d: &[T]) -> Self {
        let mut m = Self::zeros(d.len(), d.len());
        for (i, &v) in d.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn matmul(&self, rhs: &Self) -> MatResult<Self> {
        if self.cols != rhs.rows {
            return Err(MatError::Dimension(format!(
                "product of {}x{} and {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let mut out = Self::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == T::zero() {
                    continue;
                }
                for j in 0..rhs.cols {
                    out.data[i * rhs.cols + j] = out.data[i * rhs.cols + j] + a * rhs[(k, j)];
                }
            }
        }
        Ok(out)
    }

    /// Matrix-vector product. Panics on a length mismatch; callers own the shapes.
    pub fn mul_vec(&self, v: &[T]) -> Vec<T> {
        assert_eq!(self.cols, v.len(), "matrix-vector length mismatch");
        (0..self.rows).map(|i| (0..self.cols).map(|j| self[(i, j)] * v[j]).sum()).collect()
    }

    pub fn scale(&self, s: T) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&v| v * s).collect() }
    }

    pub fn try_add(&self, rhs: &Self) -> MatResult<Self> {
        self.zip_with(rhs, |a, b| a + b)
    }

    pub fn try_sub(&self, rhs: &Self) -> MatResult<Self> {
        self.zip_with(rhs, |a, b| a - b)
    }

    fn zip_with(&self, rhs: &Self, f: impl Fn(T, T) -> T) -> MatResult<Self> {
        if self.shape() != rhs.shape() {
            return Err(MatError::Dimension(format!(
                "elementwise op on {}x{} and {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    pub fn frobenius(&self) -> T {
        self.data.iter().map(|&v| v * v).sum::<T>().sqrt()
    }

    /// Induced 1-norm (max absolute column sum).
    pub fn norm1(&self) -> T {
        (0..self.cols).map(|j| (0..self.rows).map(|i| self[(i, j)].abs()).sum::<T>()).fold(T::zero(), T::max)
    }

    pub fn block(&self, r0: usize, c0: usize, nr: usize, nc: usize) -> Self {
        let mut out = Self::zeros(nr, nc);
        for i in 0..nr {
            for j in 0..nc {
                out[(i, j)] = self[(r0 + i, c0 + j)];
            }
        }
        out
    }

    pub fn set_block(&mut self, r0: usize, c0: usize, b: &Self) {
        for i in 0..b.rows {
            for j in 0..b.cols {
                self[(r0 + i, c0 + j)] = b[(i, j)];
            }
        }
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn cast<U: Scalar>(&self) -> Matrix<U> {
        Matrix { rows: self.rows, cols: self.cols, data: self.data.iter().map(|v| U::lit(v.to_f64_lossy())).collect() }
    }

    pub fn to_f64_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|i| (0..self.cols).map(|j| self[(i, j)].to_f64_lossy()).collect()).collect()
    }
}

impl<T> Index<(usize, usize)> for Matrix<T> {
    type Output = T;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &T {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl<T> IndexMut<(usize, usize)> for Matrix<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

// Operator impls panic on shape mismatch; the `try_*` methods are the checked forms.
impl<T: Scalar> Mul for &Matrix<T> {
    type Output = Matrix<T>;
    fn mul(self, rhs: &Matrix<T>) -> Matrix<T> {
        self.matmul(rhs).expect("matrix product shape")
    }
}

impl<T: Scalar> Add for &Matrix<T> {
    type Output = Matrix<T>;
    fn add(self, rhs: &Matrix<T>) -> Matrix<T> {
        self.try_add(rhs).expect("matrix sum shape")
    }
}

impl<T: Scalar> Sub for &Matrix<T> {
    type Output = Matrix<T>;
    fn sub(self, rhs: &Matrix<T>) -> Matrix<T> {
        self.try_sub(rhs).expect("matrix difference shape")
    }
}

impl<T: Scalar> Neg for &Matrix<T> {
    type Output = Matrix<T>;
    fn neg(self) -> Matrix<T> {
        self.map(|v| -v)
    }
}

impl<T: fmt::Debug> fmt::Debug for Matrix<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            let row: Vec<String> = (0..self.cols).map(|j| format!("{:?}", self.data[i * self.cols + j])).collect();
            writeln!(f, "  {}", row.join(" "))?;
        }
        write!(f, "]")
    }
}

/// Square symmetric matrix. The full array is stored and kept exactly symmetric:
/// every constructor mirrors the upper triangle onto the lower one.
#[derive(Clone, PartialEq)]
pub struct SymMatrix<T> {
    inner: Matrix<T>,
}

impl<T: Scalar> SymMatrix<T> {
    pub fn zeros(dim: usize) -> Self {
        Self { inner: Matrix::zeros(dim, dim) }
    }

    pub fn identity(dim: usize) -> Self {
        Self { inner: Matrix::identity(dim) }
    }

    pub fn diag(d: &[T]) -> Self {
        Self { inner: Matrix::diag(d) }
    }

    /// Takes the upper triangle of `m` as authoritative.
    pub fn from_upper(m: &Matrix<T>) -> MatResult<Self> {
        if !m.is_square() {
            return Err(MatError::Dimension(format!("symmetric matrix from {}x{}", m.rows(), m.cols())));
        }
        let mut inner = m.clone();
        for i in 0..m.rows() {
            for j in 0..i {
                inner[(i, j)] = m[(j, i)];
            }
        }
        Ok(Self { inner })
    }

    /// `(m + m^T) / 2`.
    pub fn symmetrize(m: &Matrix<T>) -> MatResult<Self> {
        if !m.is_square() {
            return Err(MatError::Dimension(format!("symmetrize {}x{}", m.rows(), m.cols())));
        }
        let half = T::lit(0.5);
        let mut inner = m.clone();
        for i in 0..m.rows() {
            for j in i..m.cols() {
                let v = (m[(i, j)] + m[(j, i)]) * half;
                inner[(i, j)] = v;
                inner[(j, i)] = v;
            }
        }
        Ok(Self { inner })
    }

    pub fn from_f64_rows<R: AsRef<[f64]>>(rows: &[R]) -> MatResult<Self> {
        Self::from_upper(&Matrix::from_f64_rows(rows)?)
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.inner.rows()
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.inner[(i, j)]
    }

    /// Writes `(i, j)` and its mirror.
    pub fn set(&mut self, i: usize, j: usize, v: T) {
        self.inner[(i, j)] = v;
        self.inner[(j, i)] = v;
    }

    pub fn as_matrix(&self) -> &Matrix<T> {
        &self.inner
    }

    pub fn into_matrix(self) -> Matrix<T> {
        self.inner
    }

    pub fn is_finite(&self) -> bool {
        self.inner.is_finite()
    }

    pub fn scale(&self, s: T) -> Self {
        Self { inner: self.inner.scale(s) }
    }

    pub fn try_add(&self, rhs: &Self) -> MatResult<Self> {
        Ok(Self { inner: self.inner.try_add(&rhs.inner)? })
    }

    pub fn try_sub(&self, rhs: &Self) -> MatResult<Self> {
        Ok(Self { inner: self.inner.try_sub(&rhs.inner)? })
    }

    pub fn add_identity(&self, s: T) -> Self {
        let mut out = self.clone();
        for i in 0..self.dim() {
            out.inner[(i, i)] = out.inner[(i, i)] + s;
        }
        out
    }

    pub fn max_abs(&self) -> T {
        self.inner.max_abs()
    }

    /// `x^T S x`.
    pub fn quad_form(&self, x: &[T]) -> T {
        assert_eq!(x.len(), self.dim(), "quadratic form length mismatch");
        let n = self.dim();
        let mut acc = T::zero();
        for i in 0..n {
            let mut row = T::zero();
            for j in 0..n {
                row = row + self.inner[(i, j)] * x[j];
            }
            acc = acc + x[i] * row;
        }
        acc
    }

    /// Principal sub-block starting at `(k, k)`.
    pub fn principal(&self, k: usize, len: usize) -> Self {
        Self { inner: self.inner.block(k, k, len, len) }
    }

    /// All eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> MatResult<Vec<T>> {
        if !self.is_finite() {
            return Err(MatError::NonFinite("eigenvalue input"));
        }
        let mut ev = jacobi_eigenvalues(&self.inner);
        ev.sort_by(|a, b| a.partial_cmp(b).expect("finite eigenvalues"));
        Ok(ev)
    }

    pub fn min_eig(&self) -> MatResult<T> {
        Ok(self.eigenvalues()?[0])
    }

    /// Eigenvalues (ascending) with the matching orthonormal eigenvectors as columns.
    pub fn eigh(&self) -> MatResult<(Vec<T>, Matrix<T>)> {
        if !self.is_finite() {
            return Err(MatError::NonFinite("eigenvalue input"));
        }
        let (ev, vecs) = jacobi(&self.inner, true);
        let vecs = vecs.expect("vectors requested");
        let mut order: Vec<usize> = (0..ev.len()).collect();
        order.sort_by(|&i, &j| ev[i].partial_cmp(&ev[j]).expect("finite eigenvalues"));
        let n = self.dim();
        let mut sorted = Matrix::zeros(n, n);
        for (dst, &src) in order.iter().enumerate() {
            for k in 0..n {
                sorted[(k, dst)] = vecs[(k, src)];
            }
        }
        Ok((order.iter().map(|&i| ev[i]).collect(), sorted))
    }

    /// A factor `C` with `C^T C = self` for positive semidefinite input
    /// (negative eigenvalues within rounding are clipped to zero).
    pub fn psd_factor(&self) -> MatResult<Matrix<T>> {
        let (ev, v) = self.eigh()?;
        let tol = T::lit(1e3) * T::precision() * self.max_abs().max(T::min_positive_value());
        if ev.iter().any(|&e| e < -tol) {
            return Err(MatError::NotPositiveDefinite);
        }
        let roots: Vec<T> = ev.iter().map(|&e| e.max(T::zero()).sqrt()).collect();
        Ok(&Matrix::diag(&roots) * &v.transpose())
    }

    pub fn max_eig(&self) -> MatResult<T> {
        Ok(*self.eigenvalues()?.last().expect("dim >= 1"))
    }

    /// Strict positive definiteness with margin: `min_eig > tol`.
    pub fn is_pd(&self, tol: T) -> MatResult<bool> {
        Ok(self.min_eig()? > tol)
    }

    /// Lower Cholesky factor. Fails unless strictly positive definite.
    pub fn cholesky(&self) -> MatResult<Matrix<T>> {
        cholesky_lower(&self.inner).ok_or(MatError::NotPositiveDefinite)
    }

    pub fn inverse(&self) -> MatResult<Self> {
        Self::symmetrize(&invert(&self.inner)?)
    }

    pub fn cast<U: Scalar>(&self) -> SymMatrix<U> {
        SymMatrix { inner: self.inner.cast() }
    }
}

impl<T: fmt::Debug> fmt::Debug for SymMatrix<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Sym")?;
        self.inner.fmt(f)
    }
}

impl<T> Index<(usize, usize)> for SymMatrix<T> {
    type Output = T;
    #[inline]
    fn index(&self, idx: (usize, usize)) -> &T {
        &self.inner[idx]
    }
}

/// Cyclic Jacobi rotations. Returns the (unsorted) diagonal after convergence and,
/// when requested, the accumulated rotations (eigenvectors as columns).
fn jacobi<T: Scalar>(m: &Matrix<T>, want_vectors: bool) -> (Vec<T>, Option<Matrix<T>>) {
    let n = m.rows();
    let mut a = m.clone();
    let mut v = want_vectors.then(|| Matrix::identity(n));
    let scale = a.max_abs();
    if n == 1 || scale == T::zero() {
        return ((0..n).map(|i| a[(i, i)]).collect(), v);
    }
    let tiny = T::precision() * T::precision() * scale * scale;
    for _sweep in 0..100 {
        let mut off = T::zero();
        for i in 0..n {
            for j in (i + 1)..n {
                off = off + a[(i, j)] * a[(i, j)];
            }
        }
        if off <= tiny {
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
                a[(p, q)] = T::zero();
                a[(q, p)] = T::zero();
                if let Some(v) = v.as_mut() {
                    for k in 0..n {
                        let vkp = v[(k, p)];
                        let vkq = v[(k, q)];
                        v[(k, p)] = c * vkp - s * vkq;
                        v[(k, q)] = s * vkp + c * vkq;
                    }
                }
            }
        }
    }
    ((0..n).map(|i| a[(i, i)]).collect(), v)
}

fn jacobi_eigenvalues<T: Scalar>(m: &Matrix<T>) -> Vec<T> {
    jacobi(m, false).0
}

pub(crate) fn cholesky_lower<T: Scalar>(m: &Matrix<T>) -> Option<Matrix<T>> {
    let n = m.rows();
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut d = m[(j, j)];
        for k in 0..j {
            d = d - l[(j, k)] * l[(j, k)];
        }
        if !(d > T::zero()) {
            return None;
        }
        let djj = d.sqrt();
        l[(j, j)] = djj;
        for i in (j + 1)..n {
            let mut s = m[(i, j)];
            for k in 0..j {
                s = s - l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / djj;
        }
    }
    Some(l)
}

/// General inverse by LU with partial pivoting. Rejects condition estimates
/// above [`MAX_CONDITION`].
pub fn invert<T: Scalar>(m: &Matrix<T>) -> MatResult<Matrix<T>> {
    if !m.is_square() {
        return Err(MatError::Dimension(format!("invert {}x{}", m.rows(), m.cols())));
    }
    if !m.is_finite() {
        return Err(MatError::NonFinite("invert"));
    }
    let n = m.rows();
    let mut lu = m.clone();
    let mut perm: Vec<usize> = (0..n).collect();
    for k in 0..n {
        let (piv, pval) =
            (k..n)
                .map(|i| (i, lu[(i, k)].abs()))
                .fold((k, T::zero()), |best, cur| if cur.1 > best.1 { cur } else { best });
        if pval == T::zero() {
            return Err(MatError::Singular(f64::INFINITY));
        }
        if piv != k {
            for j in 0..n {
                let tmp = lu[(k, j)];
                lu[(k, j)] = lu[(piv, j)];
                lu[(piv, j)] = tmp;
            }
            perm.swap(k, piv);
        }
        for i in (k + 1)..n {
            let f = lu[(i, k)] / lu[(k, k)];
            lu[(i, k)] = f;
            for j in (k + 1)..n {
                lu[(i, j)] = lu[(i, j)] - f * lu[(k, j)];
            }
        }
    }
    let mut inv = Matrix::zeros(n, n);
    for col in 0..n {
        let mut x: Vec<T> = (0..n).map(|i| if perm[i] == col { T::one() } else { T::zero() }).collect();
        for i in 0..n {
            for k in 0..i {
                x[i] = x[i] - lu[(i, k)] * x[k];
            }
        }
        for i in (0..n).rev() {
            for k in (i + 1)..n {
                x[i] = x[i] - lu[(i, k)] * x[k];
            }
            x[i] = x[i] / lu[(i, i)];
        }
        for i in 0..n {
            inv[(i, col)] = x[i];
        }
    }
    let cond = m.norm1().to_f64_lossy() * inv.norm1().to_f64_lossy();
    if !cond.is_finite() || cond > MAX_CONDITION {
        return Err(MatError::Singular(cond));
    }
    Ok(inv)
}

/// `t^T m t`.
pub fn congruence<T: Scalar>(m: &SymMatrix<T>, t: &Matrix<T>) -> MatResult<SymMatrix<T>> {
    if t.rows() != m.dim() {
        return Err(MatError::Dimension(format!("congruence of {0}x{0} by {1}x{2}", m.dim(), t.rows(), t.cols())));
    }
    let prod = t.transpose().matmul(&m.as_matrix().matmul(t)?)?;
    SymMatrix::symmetrize(&prod)
}

/// Smallest eigenvalue; free-function form of [`SymMatrix::min_eig`].
pub fn min_eig<T: Scalar>(m: &SymMatrix<T>) -> MatResult<T> {
    m.min_eig()
}

pub fn is_pd<T: Scalar>(m: &SymMatrix<T>, tol: T) -> MatResult<bool> {
    m.is_pd(tol)
}

/// One entry of a block layout: a numeric block or an explicit zero.
#[derive(Debug, Clone, PartialEq)]
pub enum Block<B> {
    Zero,
    Value(B),
}

/// Block layout of a (possibly symmetric) block matrix.
///
/// For symmetric assembly only one of `(i, j)` / `(j, i)` may be given; the other is
/// its transpose (the starred entries of a symmetric block LMI). Missing blocks are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockSpec<B> {
    pub row_dims: Vec<usize>,
    pub col_dims: Vec<usize>,
    pub blocks: BTreeMap<(usize, usize), Block<B>>,
}

impl<B> BlockSpec<B> {
    pub fn square(dims: Vec<usize>) -> Self {
        Self { col_dims: dims.clone(), row_dims: dims, blocks: BTreeMap::new() }
    }

    pub fn set(&mut self, i: usize, j: usize, b: B) -> &mut Self {
        self.blocks.insert((i, j), Block::Value(b));
        self
    }

    pub fn offsets(dims: &[usize]) -> Vec<usize> {
        dims.iter()
            .scan(0, |acc, &d| {
                let o = *acc;
                *acc += d;
                Some(o)
            })
            .collect()
    }

    pub fn total_dim(&self) -> usize {
        self.row_dims.iter().sum()
    }
}

/// Assembles a symmetric matrix, mirroring whichever triangle was supplied.
pub fn assemble_symmetric<T: Scalar>(spec: &BlockSpec<Matrix<T>>) -> MatResult<SymMatrix<T>> {
    if spec.row_dims != spec.col_dims {
        return Err(MatError::Dimension("symmetric block layout needs equal row/col dims".into()));
    }
    let nb = spec.row_dims.len();
    let offs = BlockSpec::<Matrix<T>>::offsets(&spec.row_dims);
    let n = spec.total_dim();
    let mut out = Matrix::zeros(n, n);
    for (&(i, j), blk) in &spec.blocks {
        if i >= nb || j >= nb {
            return Err(MatError::Dimension(format!("block ({i},{j}) outside a {nb}x{nb} layout")));
        }
        if i != j && spec.blocks.contains_key(&(j, i)) && i > j {
            return Err(MatError::Dimension(format!("block ({i},{j}) given together with its mirror ({j},{i})")));
        }
        let Block::Value(b) = blk else { continue };
        if b.shape() != (spec.row_dims[i], spec.col_dims[j]) {
            return Err(MatError::Dimension(format!(
                "block ({i},{j}) is {}x{}, layout expects {}x{}",
                b.rows(),
                b.cols(),
                spec.row_dims[i],
                spec.col_dims[j]
            )));
        }
        if i == j {
            for a in 0..b.rows() {
                for c in a..b.cols() {
                    out[(offs[i] + a, offs[j] + c)] = b[(a, c)];
                    out[(offs[i] + c, offs[j] + a)] = b[(a, c)];
                }
            }
        } else {
            out.set_block(offs[i], offs[j], b);
            out.set_block(offs[j], offs[i], &b.transpose());
        }
    }
    Ok(SymMatrix { inner: out })
}

pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

pub fn norm2<T: Scalar>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

pub fn axpy<T: Scalar>(alpha: T, x: &[T], y: &[T]) -> Vec<T> {
    x.iter().zip(y).map(|(&a, &b)| alpha * a + b).collect()
}
