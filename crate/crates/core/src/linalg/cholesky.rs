use super::matrix::{Matrix, Precision};
use crate::error::{shape_mismatch, Error, Result};

/// Lower-triangular Cholesky factor `L` with `A = L Lᵀ`.
///
/// Invariant: strictly-upper entries are zero and the diagonal is positive.
#[derive(Debug, Clone, PartialEq)]
pub struct LowerTriangularFactor {
    l: Matrix,
    precision: Precision,
}

/// Factors a symmetric positive definite matrix. Only the lower triangle of
/// `a` is read.
pub fn cholesky_spd(a: &Matrix, p: Precision) -> Result<LowerTriangularFactor> {
    if !a.is_square() {
        return Err(shape_mismatch((a.rows(), a.rows()), a.shape()));
    }
    let n = a.rows();
    let mut l = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let (li, lj) = (l.row(i), l.row(j));
            let mut sum = a[(i, j)];
            for k in 0..j {
                sum = p.round(sum - p.round(li[k] * lj[k]));
            }
            if i == j {
                if !sum.is_finite() || sum <= 0.0 {
                    return Err(Error::NotSpd { index: i, pivot: sum });
                }
                l[(i, i)] = p.round(sum.sqrt());
            } else {
                l[(i, j)] = p.round(sum / l[(j, j)]);
            }
        }
    }
    Ok(LowerTriangularFactor { l, precision: p })
}

/// Solves `(L Lᵀ) X = B` with one forward and one backward substitution.
pub fn solve_spd(factor: &LowerTriangularFactor, b: &Matrix) -> Result<Matrix> {
    let y = factor.forward_solve(b)?;
    factor.backward_solve(&y)
}

impl LowerTriangularFactor {
    pub fn dim(&self) -> usize {
        self.l.rows()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.l
    }

    pub fn precision(&self) -> Precision {
        self.precision
    }

    pub fn diag(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.dim()).map(move |i| self.l[(i, i)])
    }

    /// `L⁻¹ B`.
    pub fn forward_solve(&self, b: &Matrix) -> Result<Matrix> {
        let n = self.dim();
        if b.rows() != n {
            return Err(shape_mismatch((n, b.cols()), b.shape()));
        }
        let p = self.precision;
        let mut x = b.clone();
        for i in 0..n {
            for k in 0..i {
                let lik = self.l[(i, k)];
                if lik == 0.0 {
                    continue;
                }
                for c in 0..x.cols() {
                    x[(i, c)] = p.round(x[(i, c)] - p.round(lik * x[(k, c)]));
                }
            }
            let lii = self.l[(i, i)];
            for v in x.row_mut(i) {
                *v = p.round(*v / lii);
            }
        }
        Ok(x)
    }

    /// `L⁻ᵀ B`.
    pub fn backward_solve(&self, b: &Matrix) -> Result<Matrix> {
        let n = self.dim();
        if b.rows() != n {
            return Err(shape_mismatch((n, b.cols()), b.shape()));
        }
        let p = self.precision;
        let mut x = b.clone();
        for i in (0..n).rev() {
            for k in i + 1..n {
                let lki = self.l[(k, i)];
                if lki == 0.0 {
                    continue;
                }
                for c in 0..x.cols() {
                    x[(i, c)] = p.round(x[(i, c)] - p.round(lki * x[(k, c)]));
                }
            }
            let lii = self.l[(i, i)];
            for v in x.row_mut(i) {
                *v = p.round(*v / lii);
            }
        }
        Ok(x)
    }

    /// Explicit inverse `(L Lᵀ)⁻¹`, symmetrized.
    pub fn inverse(&self) -> Matrix {
        let n = self.dim();
        let mut inv = solve_spd(self, &Matrix::identity(n)).expect("square identity");
        inv = inv.symmetrized(self.precision);
        inv
    }

    /// `ln det(L Lᵀ)` from the factor diagonal.
    pub fn log_det(&self) -> f64 {
        2.0 * self.diag().map(f64::ln).sum::<f64>()
    }

    /// Squared ratio of the extreme diagonal entries; a cheap condition
    /// estimate of `L Lᵀ`.
    pub fn condition_estimate(&self) -> f64 {
        let (lo, hi) = self
            .diag()
            .fold((f64::INFINITY, 0.0f64), |(lo, hi), v| (lo.min(v), hi.max(v)));
        if self.dim() == 0 {
            return 1.0;
        }
        (hi / lo).powi(2)
    }

    /// `L Lᵀ`.
    pub fn reconstruct(&self) -> Matrix {
        self.l
            .matmul_t(&self.l, Precision::Double)
            .expect("square factor")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::norms::rel_frobenius_dev;

    const P: Precision = Precision::Double;

    #[test]
    fn factors_two_by_two() {
        let a = Matrix::from_rows(&[[4.0, 2.0], [2.0, 3.0]]);
        let f = cholesky_spd(&a, P).unwrap();
        let expect = Matrix::from_rows(&[[2.0, 0.0], [1.0, 2f64.sqrt()]]);
        assert!(rel_frobenius_dev(f.matrix(), &expect).unwrap() < 1e-15);
        assert!(rel_frobenius_dev(&f.reconstruct(), &a).unwrap() <= 1e-12);
    }

    #[test]
    fn identity_factor_is_identity() {
        let f = cholesky_spd(&Matrix::identity(3), P).unwrap();
        assert_eq!(f.matrix(), &Matrix::identity(3));
    }

    #[test]
    fn indefinite_rejected() {
        let a = Matrix::from_rows(&[[1.0, 2.0], [2.0, 1.0]]);
        assert!(matches!(cholesky_spd(&a, P), Err(Error::NotSpd { index: 1, .. })));
    }

    #[test]
    fn reads_lower_triangle_only() {
        let a = Matrix::from_rows(&[[4.0, 99.0], [2.0, 3.0]]);
        let b = Matrix::from_rows(&[[4.0, 2.0], [2.0, 3.0]]);
        assert_eq!(cholesky_spd(&a, P).unwrap(), cholesky_spd(&b, P).unwrap());
    }

    #[test]
    fn solves_small_systems() {
        let f = cholesky_spd(&Matrix::from_diag(&[2.0, 2.0]), P).unwrap();
        let x = solve_spd(&f, &Matrix::column(&[1.0, 1.0])).unwrap();
        assert!(rel_frobenius_dev(&x, &Matrix::column(&[0.5, 0.5])).unwrap() < 1e-15);

        let f = cholesky_spd(&Matrix::from_rows(&[[2.0, 1.0], [1.0, 2.0]]), P).unwrap();
        let x = solve_spd(&f, &Matrix::column(&[1.0, 1.0])).unwrap();
        for i in 0..2 {
            assert!((x[(i, 0)] - 1.0 / 3.0).abs() < 1e-15);
        }

        let x = solve_spd(&f, &Matrix::zeros(2, 0)).unwrap();
        assert_eq!(x.shape(), (2, 0));

        assert!(matches!(
            solve_spd(&f, &Matrix::zeros(3, 1)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn single_precision_reconstruction() {
        let a = Matrix::from_rows(&[[4.0, 1.0, 0.5], [1.0, 3.0, 0.2], [0.5, 0.2, 2.0]]);
        let f = cholesky_spd(&a, Precision::Single).unwrap();
        let err = rel_frobenius_dev(&f.reconstruct(), &a).unwrap();
        assert!(err <= 1e-5 && err > 0.0, "{err}");
    }

    #[test]
    fn log_det_and_condition() {
        let f = cholesky_spd(&Matrix::from_diag(&[4.0, 1.0]), P).unwrap();
        assert!((f.log_det() - 4f64.ln()).abs() < 1e-15);
        assert!((f.condition_estimate() - 4.0).abs() < 1e-15);
    }
}
