//! Dense row-major matrices, gemm-backed products and a blocked Cholesky
//! solver.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Index, IndexMut};

use crate::{Error, Result};

/// Block edge used by the symmetric product and the Cholesky trailing update.
const BLOCK: usize = 128;

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
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
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{} values for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from equally sized rows.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::Shape(format!(
                    "row {i} has {} columns, expected {cols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
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
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn transpose(&self) -> Self {
        const TILE: usize = 32;
        let (r, c) = (self.rows, self.cols);
        let mut out = Self::zeros(c, r);
        for i0 in (0..r).step_by(TILE) {
            for j0 in (0..c).step_by(TILE) {
                for i in i0..(i0 + TILE).min(r) {
                    for j in j0..(j0 + TILE).min(c) {
                        out.data[j * r + i] = self.data[i * c + j];
                    }
                }
            }
        }
        out
    }

    /// Rows selected by index, in the given order.
    pub fn select_rows(&self, indices: &[usize]) -> Self {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Self {
            rows: indices.len(),
            cols: self.cols,
            data,
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map(|v| v * s)
    }

    /// Elementwise (Hadamard) product.
    pub fn hadamard(&self, other: &Self) -> Result<Self> {
        self.check_same_shape(other, "hadamard")?;
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a * b)
                .collect(),
        })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_same_shape(other, "add")?;
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a + b)
                .collect(),
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_same_shape(other, "sub")?;
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a - b)
                .collect(),
        })
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!(self.shape(), other.shape());
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    /// `self * other`.
    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::Shape(format!(
                "matmul {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Self::zeros(self.rows, other.cols);
        gemm(
            1.0,
            View::of(self),
            View::of(other),
            0.0,
            &mut out,
        );
        Ok(out)
    }

    /// `self * other^T`.
    pub fn matmul_nt(&self, other: &Self) -> Result<Self> {
        if self.cols != other.cols {
            return Err(Error::Shape(format!(
                "matmul_nt {}x{} by ({}x{})^T",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Self::zeros(self.rows, other.rows);
        gemm(
            1.0,
            View::of(self),
            View::of(other).t(),
            0.0,
            &mut out,
        );
        Ok(out)
    }

    /// `self^T * other`.
    pub fn matmul_tn(&self, other: &Self) -> Result<Self> {
        if self.rows != other.rows {
            return Err(Error::Shape(format!(
                "matmul_tn ({}x{})^T by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Self::zeros(self.cols, other.cols);
        gemm(
            1.0,
            View::of(self).t(),
            View::of(other),
            0.0,
            &mut out,
        );
        Ok(out)
    }

    /// `self * v` for a column vector `v`.
    pub fn matvec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.cols {
            return Err(Error::Shape(format!(
                "matvec {}x{} by length {}",
                self.rows,
                self.cols,
                v.len()
            )));
        }
        Ok((0..self.rows).map(|i| dot(self.row(i), v)).collect())
    }

    /// Symmetric product `self * self^T`, computing only the lower block
    /// triangle and mirroring it. The result is exactly symmetric.
    pub fn outer_gram(&self) -> Self {
        sym_product(View::of(self))
    }

    /// Symmetric product `self^T * self`.
    pub fn inner_gram(&self) -> Self {
        sym_product(View::of(self).t())
    }

    fn check_same_shape(&self, other: &Self, op: &str) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::Shape(format!(
                "{op} of {}x{} and {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        Ok(())
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

/// Inner product with eight independent accumulators so the loop
/// vectorises.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let tail: f64 = ca
        .remainder()
        .iter()
        .zip(cb.remainder())
        .map(|(x, y)| x * y)
        .sum();
    for (x, y) in ca.zip(cb) {
        for k in 0..8 {
            acc[k] += x[k] * y[k];
        }
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

/// Strided read-only view used to feed gemm with transposes for free.
#[derive(Clone, Copy)]
struct View<'a> {
    data: &'a [f64],
    rows: usize,
    cols: usize,
    row_stride: usize,
    col_stride: usize,
}

impl<'a> View<'a> {
    fn of(m: &'a Matrix) -> Self {
        Self {
            data: &m.data,
            rows: m.rows,
            cols: m.cols,
            row_stride: m.cols,
            col_stride: 1,
        }
    }

    fn t(self) -> Self {
        Self {
            rows: self.cols,
            cols: self.rows,
            row_stride: self.col_stride,
            col_stride: self.row_stride,
            ..self
        }
    }

    /// Offset of element `(i, j)`.
    #[inline]
    fn offset(&self, i: usize, j: usize) -> usize {
        i * self.row_stride + j * self.col_stride
    }

    /// Largest offset touched by the sub-block `[r0, r0+m) x [c0, c0+k)`.
    fn last_offset(&self, r0: usize, m: usize, c0: usize, k: usize) -> usize {
        self.offset(r0 + m - 1, c0 + k - 1)
    }
}

/// `out = alpha * a * b + beta * out`.
fn gemm(alpha: f64, a: View<'_>, b: View<'_>, beta: f64, out: &mut Matrix) {
    assert_eq!(a.cols, b.rows);
    assert_eq!(out.rows, a.rows);
    assert_eq!(out.cols, b.cols);
    let (m, k, n) = (a.rows, a.cols, b.cols);
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        for v in &mut out.data {
            *v *= beta;
        }
        return;
    }
    gemm_block(alpha, a, (0, 0), b, (0, 0), (m, k, n), beta, &mut out.data, out.cols, (0, 0));
}

/// Block gemm on sub-views: `C[c0.., c1..] = alpha * A[a0.., a1..] * B[b0.., b1..] + beta * C`
/// with `C` row-major of row stride `ldc`.
#[allow(clippy::too_many_arguments)]
fn gemm_block(
    alpha: f64,
    a: View<'_>,
    (ar, ac): (usize, usize),
    b: View<'_>,
    (br, bc): (usize, usize),
    (m, k, n): (usize, usize, usize),
    beta: f64,
    c: &mut [f64],
    ldc: usize,
    (cr, cc): (usize, usize),
) {
    assert!(m > 0 && k > 0 && n > 0);
    assert!(a.last_offset(ar, m, ac, k) < a.data.len());
    assert!(b.last_offset(br, k, bc, n) < b.data.len());
    assert!((cr + m - 1) * ldc + cc + n - 1 < c.len());
    assert!(cc + n <= ldc);
    // SAFETY: the asserts above bound every element the kernel reads from
    // `a`, `b` and writes in `c`; `c` is exclusively borrowed and cannot
    // alias the shared views.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.data.as_ptr().add(a.offset(ar, ac)),
            a.row_stride as isize,
            a.col_stride as isize,
            b.data.as_ptr().add(b.offset(br, bc)),
            b.row_stride as isize,
            b.col_stride as isize,
            beta,
            c.as_mut_ptr().add(cr * ldc + cc),
            ldc as isize,
            1,
        );
    }
}

/// `A * A^T` for an `n x k` view, blockwise over the lower triangle.
fn sym_product(a: View<'_>) -> Matrix {
    let n = a.rows;
    let k = a.cols;
    let mut out = Matrix::zeros(n, n);
    if n == 0 || k == 0 {
        return out;
    }
    let at = a.t();
    // one gemm per block row, covering the strip left of and including the
    // diagonal block
    for i0 in (0..n).step_by(BLOCK) {
        let bi = BLOCK.min(n - i0);
        gemm_block(1.0, a, (i0, 0), at, (0, 0), (bi, k, i0 + bi), 0.0, &mut out.data, n, (i0, 0));
    }
    mirror_lower(&mut out);
    out
}

/// Copies the strict lower triangle onto the upper one.
fn mirror_lower(m: &mut Matrix) {
    const TILE: usize = 32;
    let n = m.rows;
    for i0 in (0..n).step_by(TILE) {
        for j0 in (0..=i0).step_by(TILE) {
            for i in i0..(i0 + TILE).min(n) {
                for j in j0..(j0 + TILE).min(i) {
                    m.data[j * n + i] = m.data[i * n + j];
                }
            }
        }
    }
}

/// Lower Cholesky factor `L` of a symmetric positive-definite matrix,
/// `A = L L^T`.
#[derive(Debug, Clone)]
pub struct Cholesky {
    n: usize,
    /// Row-major; only the lower triangle is meaningful.
    lower: Vec<f64>,
    min_pivot: f64,
}

impl Cholesky {
    /// Factors `a`, reading only its lower triangle.
    ///
    /// Recursive algorithm: factor the leading half, solve the off-diagonal
    /// block against it, downdate the trailing half with gemm and recurse.
    /// Small blocks are factored directly.
    pub fn factor(a: &Matrix) -> Result<Self> {
        Self::factor_shifted(a, 0.0)
    }

    /// Factors `a + shift * I` without forming the shifted matrix.
    pub fn factor_shifted(a: &Matrix, shift: f64) -> Result<Self> {
        let n = a.rows;
        if a.cols != n {
            return Err(Error::Shape(format!(
                "cholesky of a {}x{} matrix",
                a.rows, a.cols
            )));
        }
        let mut buf = Packed {
            data: a.data.clone(),
            ld: n,
        };
        if shift != 0.0 {
            for i in 0..n {
                buf.data[i * n + i] += shift;
            }
        }
        let mut min_pivot = f64::INFINITY;
        buf.cholesky(0, n, &mut min_pivot)?;
        Ok(Self {
            n,
            lower: buf.data,
            min_pivot,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Smallest pivot `d_j` (before the square root) met during factoring.
    pub fn min_pivot(&self) -> f64 {
        self.min_pivot
    }

    /// Solves `A x = rhs`.
    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let n = self.n;
        if rhs.len() != n {
            return Err(Error::Shape(format!(
                "cholesky solve of size {n} with rhs of length {}",
                rhs.len()
            )));
        }
        let l = &self.lower;
        // forward: L y = rhs
        let mut y = rhs.to_vec();
        for i in 0..n {
            let row = &l[i * n..i * n + i];
            let s = y[i] - dot(row, &y[..i]);
            y[i] = s / l[i * n + i];
        }
        // backward: L^T x = y, column-oriented so L is read by rows
        let mut x = y;
        for i in (0..n).rev() {
            x[i] /= l[i * n + i];
            let xi = x[i];
            let row = &l[i * n..i * n + i];
            for (xp, lp) in x[..i].iter_mut().zip(row) {
                *xp -= lp * xi;
            }
        }
        Ok(x)
    }
}

/// Leaf size below which factor and triangular solve run unblocked.
const LEAF: usize = 96;

/// Square row-major buffer worked on in place by the recursive Cholesky.
struct Packed {
    data: Vec<f64>,
    ld: usize,
}

impl Packed {
    #[inline]
    fn at(&self, i: usize, j: usize) -> usize {
        i * self.ld + j
    }

    /// Copy of the `rows x cols` block at `(r0, c0)`.
    fn block(&self, r0: usize, c0: usize, rows: usize, cols: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(rows * cols);
        for i in r0..r0 + rows {
            out.extend_from_slice(&self.data[self.at(i, c0)..self.at(i, c0) + cols]);
        }
        out
    }

    /// Factors the diagonal block `[off, off + n)` in place.
    fn cholesky(&mut self, off: usize, n: usize, min_pivot: &mut f64) -> Result<()> {
        if n <= LEAF {
            return self.cholesky_leaf(off, n, min_pivot);
        }
        let n1 = n / 2;
        let n2 = n - n1;
        self.cholesky(off, n1, min_pivot)?;
        self.solve_lower_t(off + n1, off, n2, off, n1);
        // A22 -= L21 L21^T, lower triangle in block-row strips
        let l21 = self.block(off + n1, off, n2, n1);
        let view = View {
            data: &l21,
            rows: n2,
            cols: n1,
            row_stride: n1,
            col_stride: 1,
        };
        let ld = self.ld;
        for i0 in (0..n2).step_by(BLOCK) {
            let bi = BLOCK.min(n2 - i0);
            gemm_block(
                -1.0,
                view,
                (i0, 0),
                view.t(),
                (0, 0),
                (bi, n1, i0 + bi),
                1.0,
                &mut self.data,
                ld,
                (off + n1 + i0, off + n1),
            );
        }
        self.cholesky(off + n1, n2, min_pivot)
    }

    fn cholesky_leaf(&mut self, off: usize, n: usize, min_pivot: &mut f64) -> Result<()> {
        for j in off..off + n {
            let rj = self.at(j, off);
            let len = j - off;
            let d = self.data[rj + len] - dot(&self.data[rj..rj + len], &self.data[rj..rj + len]);
            *min_pivot = min_pivot.min(d);
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::NotPositiveDefinite { pivot: d, index: j });
            }
            let ljj = crate::math::sqrt(d);
            self.data[rj + len] = ljj;
            for i in j + 1..off + n {
                let ri = self.at(i, off);
                let s = self.data[ri + len] - dot(&self.data[ri..ri + len], &self.data[rj..rj + len]);
                self.data[ri + len] = s / ljj;
            }
        }
        Ok(())
    }

    /// Solves `X L^T = B` in place, where `B` is the `m x k` block at
    /// `(r0, c0)` and `L` the factored `k x k` diagonal block at
    /// `(l0, l0)`. The two regions must not overlap.
    fn solve_lower_t(&mut self, r0: usize, c0: usize, m: usize, l0: usize, k: usize) {
        if k <= LEAF {
            // column-major copy so each update is a contiguous axpy over rows
            let mut cols = vec![0.0; k * m];
            for i in 0..m {
                let ri = self.at(r0 + i, c0);
                for j in 0..k {
                    cols[j * m + i] = self.data[ri + j];
                }
            }
            for j in 0..k {
                let rj = self.at(l0 + j, l0);
                let (done, rest) = cols.split_at_mut(j * m);
                let target = &mut rest[..m];
                for p in 0..j {
                    let f = self.data[rj + p];
                    for (t, x) in target.iter_mut().zip(&done[p * m..(p + 1) * m]) {
                        *t -= f * x;
                    }
                }
                let inv = 1.0 / self.data[rj + j];
                for t in target.iter_mut() {
                    *t *= inv;
                }
            }
            for i in 0..m {
                let ri = self.at(r0 + i, c0);
                for j in 0..k {
                    self.data[ri + j] = cols[j * m + i];
                }
            }
            return;
        }
        let k1 = k / 2;
        let k2 = k - k1;
        self.solve_lower_t(r0, c0, m, l0, k1);
        // B2 -= X1 L21^T
        let x1 = self.block(r0, c0, m, k1);
        let l21 = self.block(l0 + k1, l0, k2, k1);
        let x1v = View {
            data: &x1,
            rows: m,
            cols: k1,
            row_stride: k1,
            col_stride: 1,
        };
        let l21v = View {
            data: &l21,
            rows: k2,
            cols: k1,
            row_stride: k1,
            col_stride: 1,
        };
        let ld = self.ld;
        gemm_block(-1.0, x1v, (0, 0), l21v.t(), (0, 0), (m, k1, k2), 1.0, &mut self.data, ld, (r0, c0 + k1));
        self.solve_lower_t(r0, c0 + k1, m, l0 + k1, k2);
    }
}
