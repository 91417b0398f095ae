use std::fmt;
use std::ops::{Index, IndexMut};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{shape_mismatch, Error, Result};

/// Arithmetic precision used for accumulation and solves.
///
/// Storage is always `f64`. In [`Precision::Single`] mode every arithmetic
/// result is rounded to the nearest IEEE-754 single value, which reproduces
/// true single-precision arithmetic for `+ - * / sqrt` on single inputs.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Precision {
    #[serde(rename = "f32")]
    Single,
    #[default]
    #[serde(rename = "f64")]
    Double,
}

impl Precision {
    #[inline(always)]
    pub fn round(self, x: f64) -> f64 {
        match self {
            Precision::Single => x as f32 as f64,
            Precision::Double => x,
        }
    }

    /// Bytes per transmitted scalar.
    pub fn width(self) -> usize {
        match self {
            Precision::Single => 4,
            Precision::Double => 8,
        }
    }

    pub fn from_width(width: u8) -> Option<Self> {
        match width {
            4 => Some(Precision::Single),
            8 => Some(Precision::Double),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Precision::Single => "f32",
            Precision::Double => "f64",
        }
    }
}

impl fmt::Display for Precision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Precision {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "f32" | "single" | "fp32" => Ok(Precision::Single),
            "f64" | "double" | "fp64" => Ok(Precision::Double),
            other => Err(Error::InvalidArgument(format!("unknown precision `{other}`"))),
        }
    }
}

/// Dense row-major real matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let mut m = Matrix::zeros(diag.len(), diag.len());
        for (i, &v) in diag.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    /// Builds a matrix from row-major data, rejecting wrong lengths and
    /// non-finite entries.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: format!("{} entries", rows * cols),
                got: format!("{} entries", data.len()),
            });
        }
        if let Some(k) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                row: k / cols.max(1),
                col: k % cols.max(1),
            });
        }
        Ok(Matrix { rows, cols, data })
    }

    /// Convenience constructor for literals. Panics on ragged rows.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Self {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.as_ref().len(), cols, "ragged rows");
            data.extend_from_slice(r.as_ref());
        }
        Matrix {
            rows: rows.len(),
            cols,
            data,
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Matrix { rows, cols, data }
    }

    pub fn column(values: &[f64]) -> Self {
        Matrix {
            rows: values.len(),
            cols: 1,
            data: values.to_vec(),
        }
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

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
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

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn transpose(&self) -> Matrix {
        Matrix::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    /// Rounds every entry to the given precision.
    pub fn rounded(mut self, p: Precision) -> Matrix {
        if p == Precision::Single {
            for v in &mut self.data {
                *v = p.round(*v);
            }
        }
        self
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&v| v == 0.0)
    }

    fn check_same_shape(&self, other: &Matrix) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(shape_mismatch(self.shape(), other.shape()));
        }
        Ok(())
    }

    pub fn add(&self, other: &Matrix, p: Precision) -> Result<Matrix> {
        self.check_same_shape(other)?;
        Ok(self.zip_map(other, |a, b| p.round(a + b)))
    }

    pub fn sub(&self, other: &Matrix, p: Precision) -> Result<Matrix> {
        self.check_same_shape(other)?;
        Ok(self.zip_map(other, |a, b| p.round(a - b)))
    }

    pub fn scale(&self, s: f64, p: Precision) -> Matrix {
        let data = self.data.iter().map(|&v| p.round(v * s)).collect();
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data,
        }
    }

    fn zip_map(&self, other: &Matrix, f: impl Fn(f64, f64) -> f64) -> Matrix {
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data,
        }
    }

    /// `self + s * I`.
    pub fn add_diagonal(&self, s: f64, p: Precision) -> Result<Matrix> {
        if !self.is_square() {
            return Err(shape_mismatch((self.rows, self.rows), self.shape()));
        }
        let mut out = self.clone();
        for i in 0..self.rows {
            out[(i, i)] = p.round(out[(i, i)] + s);
        }
        Ok(out)
    }

    /// `self * other`.
    pub fn matmul(&self, other: &Matrix, p: Precision) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(shape_mismatch((self.rows, self.cols), other.shape()));
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let a_row = self.row(i);
            let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for (k, &a) in a_row.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                axpy(out_row, a, other.row(k), p);
            }
        }
        Ok(out)
    }

    /// `selfᵀ * other`.
    pub fn t_matmul(&self, other: &Matrix, p: Precision) -> Result<Matrix> {
        if self.rows != other.rows {
            return Err(shape_mismatch((self.cols, self.rows), other.shape()));
        }
        let mut out = Matrix::zeros(self.cols, other.cols);
        for k in 0..self.rows {
            let a_row = self.row(k);
            let b_row = other.row(k);
            for (i, &a) in a_row.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                axpy(&mut out.data[i * other.cols..(i + 1) * other.cols], a, b_row, p);
            }
        }
        Ok(out)
    }

    /// `self * otherᵀ`.
    pub fn matmul_t(&self, other: &Matrix, p: Precision) -> Result<Matrix> {
        if self.cols != other.cols {
            return Err(shape_mismatch((self.rows, self.cols), other.shape()));
        }
        Ok(Matrix::from_fn(self.rows, other.rows, |i, j| {
            dot(self.row(i), other.row(j), p)
        }))
    }

    /// Gram matrix `selfᵀ * self`, accumulated row by row over the lower
    /// triangle and mirrored, so the result is exactly symmetric.
    pub fn gram(&self, p: Precision) -> Matrix {
        let d = self.cols;
        let mut out = Matrix::zeros(d, d);
        for k in 0..self.rows {
            let f = self.row(k);
            for i in 0..d {
                let fi = f[i];
                if fi == 0.0 {
                    continue;
                }
                let out_row = &mut out.data[i * d..i * d + i + 1];
                axpy(out_row, fi, &f[..=i], p);
            }
        }
        out.mirror_lower();
        out
    }

    /// Copies the lower triangle onto the upper one.
    pub fn mirror_lower(&mut self) {
        debug_assert!(self.is_square());
        let n = self.rows;
        for i in 0..n {
            for j in 0..i {
                self.data[j * n + i] = self.data[i * n + j];
            }
        }
    }

    /// `(A + Aᵀ) / 2`.
    pub fn symmetrized(&self, p: Precision) -> Matrix {
        debug_assert!(self.is_square());
        Matrix::from_fn(self.rows, self.cols, |i, j| {
            if i == j {
                self[(i, i)]
            } else {
                p.round(p.round(self[(i, j)] + self[(j, i)]) * 0.5)
            }
        })
    }

    pub fn max_asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.rows {
            for j in 0..i {
                worst = worst.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        worst
    }

    /// Stacks matrices vertically. All inputs must share a column count.
    pub fn vstack(parts: &[&Matrix], cols: usize) -> Result<Matrix> {
        let mut data = Vec::new();
        let mut rows = 0;
        for m in parts {
            if m.cols != cols {
                return Err(shape_mismatch((m.rows, cols), m.shape()));
            }
            data.extend_from_slice(&m.data);
            rows += m.rows;
        }
        Ok(Matrix { rows, cols, data })
    }

    /// Copy without rows that are identically zero.
    pub fn without_zero_rows(&self) -> Matrix {
        let mut data = Vec::with_capacity(self.data.len());
        let mut rows = 0;
        for i in 0..self.rows {
            let r = self.row(i);
            if r.iter().any(|&v| v != 0.0) {
                data.extend_from_slice(r);
                rows += 1;
            }
        }
        Matrix {
            rows,
            cols: self.cols,
            data,
        }
    }

    pub fn select_rows(&self, idx: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Matrix {
            rows: idx.len(),
            cols: self.cols,
            data,
        }
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;

    #[inline(always)]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    #[inline(always)]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

/// `y += a * x` in the given precision.
#[inline]
pub(crate) fn axpy(y: &mut [f64], a: f64, x: &[f64], p: Precision) {
    match p {
        Precision::Double => {
            for (yi, &xi) in y.iter_mut().zip(x) {
                *yi += a * xi;
            }
        }
        Precision::Single => {
            for (yi, &xi) in y.iter_mut().zip(x) {
                *yi = p.round(*yi + p.round(a * xi));
            }
        }
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64], p: Precision) -> f64 {
    match p {
        Precision::Double => a.iter().zip(b).map(|(x, y)| x * y).sum(),
        Precision::Single => a
            .iter()
            .zip(b)
            .fold(0.0, |acc, (&x, &y)| p.round(acc + p.round(x * y))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_vec_rejects_non_finite_and_bad_length() {
        assert!(matches!(
            Matrix::from_vec(1, 2, vec![1.0, f64::NAN]),
            Err(Error::NonFinite { row: 0, col: 1 })
        ));
        assert!(matches!(
            Matrix::from_vec(2, 2, vec![1.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn gram_matches_transpose_product() {
        let f = Matrix::from_rows(&[[1.0, 2.0, 0.5], [-1.0, 0.0, 3.0], [2.0, 1.0, 1.0]]);
        let g = f.gram(Precision::Double);
        let expect = f.transpose().matmul(&f, Precision::Double).unwrap();
        assert_eq!(g, expect);
        assert_eq!(g.max_asymmetry(), 0.0);
    }

    #[test]
    fn single_rounding_is_idempotent() {
        let p = Precision::Single;
        let x = p.round(0.1);
        assert_eq!(p.round(x), x);
        assert_ne!(x, 0.1);
    }

    #[test]
    fn product_variants_agree() {
        let a = Matrix::from_rows(&[[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]]);
        let b = Matrix::from_rows(&[[1.0, 0.0, 2.0], [0.0, 1.0, -1.0]]);
        let p = Precision::Double;
        let ab = a.matmul(&b, p).unwrap();
        assert_eq!(ab, a.matmul_t(&b.transpose(), p).unwrap());
        assert_eq!(ab, a.transpose().t_matmul(&b, p).unwrap());
        assert!(a.matmul(&a, p).is_err());
    }

    #[test]
    fn zero_rows_dropped() {
        let u = Matrix::from_rows(&[[0.0, 0.0], [1.0, 2.0], [0.0, 0.0]]);
        assert_eq!(u.without_zero_rows(), Matrix::from_rows(&[[1.0, 2.0]]));
    }
}
