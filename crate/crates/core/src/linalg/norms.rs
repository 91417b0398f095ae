use super::matrix::Matrix;
use crate::error::{shape_mismatch, Error, Result};

const POWER_MAX_ITERS: usize = 1000;
const POWER_REL_TOL: f64 = 1e-12;

pub fn frobenius_norm(a: &Matrix) -> f64 {
    // Scaled accumulation avoids overflow for very large entries.
    let scale = a.as_slice().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return 0.0;
    }
    let s: f64 = a.as_slice().iter().map(|v| (v / scale).powi(2)).sum();
    scale * s.sqrt()
}

/// `‖a − b‖_F / ‖b‖_F`.
pub fn rel_frobenius_dev(a: &Matrix, b: &Matrix) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(shape_mismatch(b.shape(), a.shape()));
    }
    let denom = frobenius_norm(b);
    if denom == 0.0 {
        return Err(Error::ZeroReference);
    }
    let diff = Matrix::from_fn(a.rows(), a.cols(), |i, j| a[(i, j)] - b[(i, j)]);
    Ok(frobenius_norm(&diff) / denom)
}

/// Largest singular value by power iteration on `AᵀA`.
///
/// The primary start vector is all-ones (falling back to the first basis
/// vector that is not in the null space). A second deterministic start is
/// also run and the larger estimate kept, so inputs whose dominant singular
/// vector is orthogonal to the all-ones vector are still handled.
pub fn spectral_norm(a: &Matrix) -> f64 {
    let n = a.cols();
    if n == 0 || a.rows() == 0 {
        return 0.0;
    }
    let ones = vec![1.0; n];
    let primary = if is_null(a, &ones) {
        (0..n)
            .map(|k| {
                let mut e = vec![0.0; n];
                e[k] = 1.0;
                e
            })
            .find(|e| !is_null(a, e))
    } else {
        Some(ones)
    };
    let Some(primary) = primary else {
        return 0.0;
    };
    let secondary: Vec<f64> = (0..n)
        .map(|i| 1.0 + ((i as f64 + 1.0) * 0.618_033_988_749_895).fract())
        .collect();
    power_iteration(a, primary).max(power_iteration(a, secondary))
}

fn is_null(a: &Matrix, x: &[f64]) -> bool {
    apply(a, x).iter().all(|&v| v == 0.0)
}

fn apply(a: &Matrix, x: &[f64]) -> Vec<f64> {
    (0..a.rows())
        .map(|i| a.row(i).iter().zip(x).map(|(p, q)| p * q).sum())
        .collect()
}

fn apply_t(a: &Matrix, y: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.cols()];
    for (i, &yi) in y.iter().enumerate() {
        for (o, &aij) in out.iter_mut().zip(a.row(i)) {
            *o += aij * yi;
        }
    }
    out
}

fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn power_iteration(a: &Matrix, mut x: Vec<f64>) -> f64 {
    let nx = norm2(&x);
    x.iter_mut().for_each(|v| *v /= nx);
    let mut estimate = 0.0;
    for _ in 0..POWER_MAX_ITERS {
        let ax = apply(a, &x);
        let sigma = norm2(&ax);
        if sigma == 0.0 {
            return estimate;
        }
        let y = apply_t(a, &ax);
        let ny = norm2(&y);
        if ny == 0.0 {
            return sigma;
        }
        x = y.into_iter().map(|v| v / ny).collect();
        let converged = (sigma - estimate).abs() <= POWER_REL_TOL * sigma;
        estimate = sigma;
        if converged {
            break;
        }
    }
    norm2(&apply(a, &x)).max(estimate)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spectral_norm_examples() {
        assert!((spectral_norm(&Matrix::from_diag(&[3.0, 1.0])) - 3.0).abs() < 1e-12);
        assert_eq!(spectral_norm(&Matrix::zeros(2, 2)), 0.0);
        let a = Matrix::from_rows(&[[0.0, 0.0], [0.0, 0.5]]);
        assert!((spectral_norm(&a) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn spectral_norm_dominant_vector_orthogonal_to_ones() {
        // Right singular vectors (1,-1)/√2 with σ=3 and (1,1)/√2 with σ=1.
        let a = Matrix::from_rows(&[[2.0, -1.0], [-1.0, 2.0]]);
        assert!((spectral_norm(&a) - 3.0).abs() < 1e-10);
    }

    #[test]
    fn ones_in_null_space_falls_back() {
        let a = Matrix::from_rows(&[[1.0, -1.0], [2.0, -2.0]]);
        let expect = (10.0f64).sqrt();
        assert!((spectral_norm(&a) - expect).abs() < 1e-10);
    }

    #[test]
    fn deviation_examples() {
        let a = Matrix::from_rows(&[[1.0, 2.0]]);
        assert_eq!(rel_frobenius_dev(&a, &a).unwrap(), 0.0);
        assert_eq!(
            rel_frobenius_dev(&Matrix::identity(2), &Matrix::zeros(2, 2)),
            Err(Error::ZeroReference)
        );
        let dev = rel_frobenius_dev(
            &Matrix::column(&[0.5, 0.5]),
            &Matrix::column(&[1.0 / 3.0, 1.0 / 3.0]),
        )
        .unwrap();
        assert!((dev - 0.5).abs() < 1e-15);
    }

    #[test]
    fn frobenius_handles_huge_entries() {
        let a = Matrix::from_rows(&[[1e200, 1e200]]);
        assert!((frobenius_norm(&a) / 1e200 - 2f64.sqrt()).abs() < 1e-15);
    }
}
