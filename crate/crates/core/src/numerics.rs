//! Small dense complex linear algebra.
//!
//! Everything here is sized for MIMO detection: matrices are at most 8×8
//! (a 4×4 complex system written in real form), stored row-major.

use std::ops::{Index, IndexMut};

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Pivot magnitude below which a factorization is declared failed.
pub const PIVOT_TOLERANCE: f64 = 1e-12;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Dense complex matrix stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl ComplexMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<Complex64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::DimensionMismatch(format!(
                "matrix must be non-empty, got {rows}x{cols}"
            )));
        }
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "{rows}x{cols} matrix needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::DimensionMismatch(
                "matrix entries must be finite".into(),
            ));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![ZERO; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = ONE;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    /// Real matrix embedded with zero imaginary parts.
    pub fn from_real(rows: usize, cols: usize, data: &[f64]) -> Result<Self> {
        Self::new(
            rows,
            cols,
            data.iter().map(|&v| Complex64::new(v, 0.0)).collect(),
        )
    }

    pub fn diagonal(values: &[f64]) -> Self {
        let mut m = Self::zeros(values.len(), values.len());
        for (i, &v) in values.iter().enumerate() {
            m[(i, i)] = Complex64::new(v, 0.0);
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

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn column(&self, c: usize) -> Vec<Complex64> {
        (0..self.rows).map(|r| self[(r, c)]).collect()
    }

    pub fn row(&self, r: usize) -> &[Complex64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// Conjugate transpose.
    pub fn hermitian(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self[(c, r)].conj())
    }

    /// Columns reordered so that output column `k` is input column `order[k]`.
    pub fn permute_columns(&self, order: &[usize]) -> Self {
        assert_eq!(order.len(), self.cols);
        Self::from_fn(self.rows, self.cols, |r, c| self[(r, order[c])])
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for r in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(r, k)];
                for c in 0..other.cols {
                    out.data[r * other.cols + c] += a * other[(k, c)];
                }
            }
        }
        Ok(out)
    }

    pub fn mul_vec(&self, v: &[Complex64]) -> Result<Vec<Complex64>> {
        if v.len() != self.cols {
            return Err(Error::DimensionMismatch(format!(
                "vector of length {} against {}x{} matrix",
                v.len(),
                self.rows,
                self.cols
            )));
        }
        Ok((0..self.rows)
            .map(|r| self.row(r).iter().zip(v).map(|(a, b)| a * b).sum())
            .collect())
    }

    /// `self + shift * I`; the matrix must be square.
    pub fn add_identity(&self, shift: f64) -> Self {
        let mut out = self.clone();
        for i in 0..self.rows.min(self.cols) {
            out[(i, i)] += shift;
        }
        out
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = Complex64;

    #[inline]
    fn index(&self, (r, c): (usize, usize)) -> &Complex64 {
        &self.data[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for ComplexMatrix {
    #[inline]
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut Complex64 {
        &mut self.data[r * self.cols + c]
    }
}

/// Gram matrix `Hᴴ·H`.
pub fn gram(h: &ComplexMatrix) -> ComplexMatrix {
    let n = h.cols;
    let mut g = ComplexMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v: Complex64 = (0..h.rows).map(|r| h[(r, i)].conj() * h[(r, j)]).sum();
            g[(i, j)] = v;
            g[(j, i)] = v.conj();
        }
        g[(i, i)].im = 0.0;
    }
    g
}

/// Matched filter output `Hᴴ·y`.
pub fn matched_filter(h: &ComplexMatrix, y: &[Complex64]) -> Result<Vec<Complex64>> {
    if y.len() != h.rows {
        return Err(Error::DimensionMismatch(format!(
            "observation of length {} against {} receive antennas",
            y.len(),
            h.rows
        )));
    }
    Ok((0..h.cols)
        .map(|c| (0..h.rows).map(|r| h[(r, c)].conj() * y[r]).sum())
        .collect())
}

/// Lower Cholesky factor `L` with `A = L·Lᴴ`.
pub fn cholesky(a: &ComplexMatrix) -> Result<ComplexMatrix> {
    if !a.is_square() {
        return Err(Error::DimensionMismatch(format!(
            "Cholesky needs a square matrix, got {}x{}",
            a.rows, a.cols
        )));
    }
    let n = a.rows;
    let mut l = ComplexMatrix::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)].re;
        for k in 0..j {
            d -= l[(j, k)].norm_sqr();
        }
        if !(d > PIVOT_TOLERANCE) {
            return Err(Error::NotPositiveDefinite { column: j, pivot: d });
        }
        let d = d.sqrt();
        l[(j, j)] = Complex64::new(d, 0.0);
        for i in j + 1..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)].conj();
            }
            l[(i, j)] = s / d;
        }
    }
    Ok(l)
}

/// Solves `A·X = B` for Hermitian positive definite `A`.
pub fn hpd_solve(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<ComplexMatrix> {
    if b.rows != a.rows {
        return Err(Error::DimensionMismatch(format!(
            "right-hand side has {} rows, system has {}",
            b.rows, a.rows
        )));
    }
    let l = cholesky(a)?;
    let n = a.rows;
    let mut x = b.clone();
    for c in 0..b.cols {
        // forward: L·u = b
        for i in 0..n {
            let mut s = x[(i, c)];
            for k in 0..i {
                s -= l[(i, k)] * x[(k, c)];
            }
            x[(i, c)] = s / l[(i, i)].re;
        }
        // backward: Lᴴ·x = u
        for i in (0..n).rev() {
            let mut s = x[(i, c)];
            for k in i + 1..n {
                s -= l[(k, i)].conj() * x[(k, c)];
            }
            x[(i, c)] = s / l[(i, i)].re;
        }
    }
    Ok(x)
}

/// Solves `A·X = B` for a general square `A` by LU with partial pivoting.
pub fn solve(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<ComplexMatrix> {
    if !a.is_square() || b.rows != a.rows {
        return Err(Error::DimensionMismatch(format!(
            "cannot solve {}x{} system with {}x{} right-hand side",
            a.rows, a.cols, b.rows, b.cols
        )));
    }
    let n = a.rows;
    let mut lu = a.clone();
    let mut x = b.clone();
    let scale = a.frobenius_norm().max(f64::MIN_POSITIVE);
    for j in 0..n {
        let p = (j..n)
            .max_by(|&r, &s| lu[(r, j)].norm().total_cmp(&lu[(s, j)].norm()))
            .unwrap_or(j);
        let pivot = lu[(p, j)];
        if pivot.norm() <= PIVOT_TOLERANCE * scale {
            return Err(Error::Singular {
                column: j,
                pivot: pivot.norm(),
            });
        }
        if p != j {
            for c in 0..n {
                lu.data.swap(j * n + c, p * n + c);
            }
            for c in 0..x.cols {
                x.data.swap(j * x.cols + c, p * x.cols + c);
            }
        }
        for i in j + 1..n {
            let f = lu[(i, j)] / pivot;
            if f == ZERO {
                continue;
            }
            for c in j..n {
                let v = lu[(j, c)];
                lu[(i, c)] -= f * v;
            }
            for c in 0..x.cols {
                let v = x[(j, c)];
                x[(i, c)] -= f * v;
            }
        }
    }
    for c in 0..x.cols {
        for i in (0..n).rev() {
            let mut s = x[(i, c)];
            for k in i + 1..n {
                s -= lu[(i, k)] * x[(k, c)];
            }
            x[(i, c)] = s / lu[(i, i)];
        }
    }
    Ok(x)
}

/// `‖a − b‖²` over complex vectors.
pub fn distance_sqr(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum()
}

pub fn norm_sqr(a: &[Complex64]) -> f64 {
    a.iter().map(|v| v.norm_sqr()).sum()
}

#[cfg(test)]
pub(crate) mod test_util {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    pub fn random_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> ComplexMatrix {
        ComplexMatrix::from_fn(rows, cols, |_, _| {
            Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        })
    }

    pub fn random_vec(rng: &mut impl Rng, n: usize) -> Vec<Complex64> {
        (0..n)
            .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect()
    }

    /// Determinant by cofactor expansion along the first row.
    pub fn cofactor_det(m: &ComplexMatrix) -> Complex64 {
        let n = m.rows();
        if n == 1 {
            return m[(0, 0)];
        }
        let mut det = ZERO;
        for c in 0..n {
            let minor = minor(m, 0, c);
            let sign = if c % 2 == 0 { 1.0 } else { -1.0 };
            det += sign * m[(0, c)] * cofactor_det(&minor);
        }
        det
    }

    fn minor(m: &ComplexMatrix, skip_r: usize, skip_c: usize) -> ComplexMatrix {
        let n = m.rows();
        let mut data = Vec::with_capacity((n - 1) * (n - 1));
        for r in (0..n).filter(|&r| r != skip_r) {
            for c in (0..n).filter(|&c| c != skip_c) {
                data.push(m[(r, c)]);
            }
        }
        ComplexMatrix::new(n - 1, n - 1, data).unwrap()
    }

    /// Inverse via the adjugate: `inv[i][j] = (-1)^{i+j} det(minor(j, i)) / det`.
    pub fn adjugate_inverse(m: &ComplexMatrix) -> ComplexMatrix {
        let n = m.rows();
        let det = cofactor_det(m);
        if n == 1 {
            return ComplexMatrix::new(1, 1, vec![ONE / det]).unwrap();
        }
        ComplexMatrix::from_fn(n, n, |i, j| {
            let sign = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
            sign * cofactor_det(&minor(m, j, i)) / det
        })
    }

    pub fn naive_matmul(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
        ComplexMatrix::from_fn(a.rows(), b.cols(), |i, j| {
            let mut s = ZERO;
            for k in 0..a.cols() {
                s += a[(i, k)] * b[(k, j)];
            }
            s
        })
    }

    pub fn max_abs_diff(a: &ComplexMatrix, b: &ComplexMatrix) -> f64 {
        a.data()
            .iter()
            .zip(b.data())
            .map(|(x, y)| (x - y).norm())
            .fold(0.0, f64::max)
    }
}
