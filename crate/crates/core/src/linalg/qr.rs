use super::matrix::{Matrix, Precision};

/// Upper-trapezoidal `R` (`min(n, d) × d`) of a thin Householder QR of `f`,
/// with `Rᵀ R = fᵀ f`. `Q` is never formed.
///
/// Rows are sign-normalized so that every diagonal entry is non-negative.
/// Rank-deficient inputs yield zero (or partially zero) rows.
#[allow(clippy::needless_range_loop)]
pub fn thin_qr_rfactor(f: &Matrix, p: Precision) -> Matrix {
    let (n, d) = f.shape();
    let r = n.min(d);
    let mut a = f.clone().rounded(p);
    let mut v = vec![0.0; n];
    let mut s = vec![0.0; d];

    for j in 0..r {
        let mut norm2 = 0.0;
        for i in j..n {
            let x = a[(i, j)];
            norm2 = p.round(norm2 + p.round(x * x));
        }
        if norm2 == 0.0 {
            continue;
        }
        let norm = p.round(norm2.sqrt());
        let x0 = a[(j, j)];
        let alpha = if x0 >= 0.0 { -norm } else { norm };

        v[j] = p.round(x0 - alpha);
        for i in j + 1..n {
            v[i] = a[(i, j)];
        }
        let mut vtv = 0.0;
        for &vi in &v[j..n] {
            vtv = p.round(vtv + p.round(vi * vi));
        }
        if vtv == 0.0 {
            continue;
        }
        let beta = p.round(2.0 / vtv);

        // s = vᵀ A[j.., j..]
        s[j..].fill(0.0);
        for i in j..n {
            let vi = v[i];
            if vi == 0.0 {
                continue;
            }
            let row = a.row(i);
            for k in j..d {
                s[k] = p.round(s[k] + p.round(vi * row[k]));
            }
        }
        // A[j.., j..] -= beta v sᵀ
        for i in j..n {
            let coef = p.round(beta * v[i]);
            if coef == 0.0 {
                continue;
            }
            let row = a.row_mut(i);
            for k in j..d {
                row[k] = p.round(row[k] - p.round(coef * s[k]));
            }
        }
        a[(j, j)] = alpha;
        for i in j + 1..n {
            a[(i, j)] = 0.0;
        }
    }

    let mut out = Matrix::zeros(r, d);
    for i in 0..r {
        let flip = a[(i, i)] < 0.0;
        let src = a.row(i);
        let dst = out.row_mut(i);
        for k in i..d {
            dst[k] = if flip { -src[k] } else { src[k] };
        }
    }
    out
}
