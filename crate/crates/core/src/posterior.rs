//! Matrix-normal posterior of the ridge head and the KL certificate.
//!
//! With likelihood `yᵢ | fᵢ, W ~ N(Wᵀfᵢ, σ²I_c)` and prior
//! `vec(W) ~ N(0, τ²I)`, `γ = σ²/τ²`, the posterior is
//! `MN(M, Σ, I_c)` with `Σ = σ²(S + γI)⁻¹` and `M = (S + γI)⁻¹G`.
//! It depends on the data only through `(S, G)`.

use serde::{Deserialize, Serialize};

use crate::error::{shape_mismatch, Error, Result};
use crate::inverse::InverseState;
use crate::ledger::Ledger;
use crate::linalg::{cholesky_spd, frobenius_norm, symmetric_eig, Matrix, Precision};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixNormalPosterior {
    /// Mean, `d × c`.
    pub mean: Matrix,
    /// Row covariance, `d × d`.
    pub sigma: Matrix,
    pub sigma2: f64,
    pub gamma: f64,
}

impl MatrixNormalPosterior {
    /// Prior variance `τ² = σ²/γ`.
    pub fn tau2(&self) -> f64 {
        self.sigma2 / self.gamma
    }
}

fn check_sigma2(sigma2: f64) -> Result<()> {
    if !sigma2.is_finite() || sigma2 <= 0.0 {
        return Err(Error::InvalidArgument(format!("sigma2 must be positive, got {sigma2}")));
    }
    Ok(())
}

pub fn posterior_from_ledger(ledger: &Ledger, sigma2: f64) -> Result<MatrixNormalPosterior> {
    check_sigma2(sigma2)?;
    let p = ledger.precision();
    let factor = ledger.factor()?;
    let mean = ledger.solve_head()?;
    let sigma = factor.inverse().scale(sigma2, p).symmetrized(p);
    Ok(MatrixNormalPosterior {
        mean,
        sigma,
        sigma2,
        gamma: ledger.gamma(),
    })
}

/// Posterior carried by a tracked inverse: `M = W`, `Σ = σ² T`.
pub fn posterior_from_state(state: &InverseState, sigma2: f64) -> Result<MatrixNormalPosterior> {
    check_sigma2(sigma2)?;
    let p = state.precision();
    Ok(MatrixNormalPosterior {
        mean: state.head().clone(),
        sigma: state.t().scale(sigma2, p).symmetrized(p),
        sigma2,
        gamma: state.gamma(),
    })
}

/// `KL(MN(M₁, Σ₁, I_c) ‖ MN(M₂, Σ₂, I_c))`
/// `= ½[c(tr(Σ₂⁻¹Σ₁) − d − ln det(Σ₂⁻¹Σ₁)) + tr((M₂−M₁)ᵀΣ₂⁻¹(M₂−M₁))]`.
///
/// The covariance term is evaluated from the eigenvalues `λᵢ` of the whitened
/// matrix `L₂⁻¹Σ₁L₂⁻ᵀ` as `Σ (λᵢ − 1) − ln(λᵢ)`, each summand non-negative,
/// so nearly equal posteriors do not lose the result to cancellation.
pub fn kl_matrix_normal(p: &MatrixNormalPosterior, q: &MatrixNormalPosterior) -> Result<f64> {
    if p.mean.shape() != q.mean.shape() || p.sigma.shape() != q.sigma.shape() {
        return Err(shape_mismatch(q.mean.shape(), p.mean.shape()));
    }
    let prec = Precision::Double;
    let c = p.mean.cols() as f64;
    let lq = cholesky_spd(&q.sigma, prec)?;

    let half = lq.forward_solve(&p.sigma)?;
    let whitened = lq.forward_solve(&half.transpose())?.symmetrized(prec);
    let mut cov_term = 0.0;
    for lambda in symmetric_eig(&whitened)?.values {
        if lambda <= 0.0 {
            return Ok(f64::INFINITY);
        }
        let x = lambda - 1.0;
        cov_term += (x - x.ln_1p()).max(0.0);
    }

    let diff = q.mean.sub(&p.mean, prec)?;
    let z = lq.forward_solve(&diff)?;
    let mean_term = frobenius_norm(&z).powi(2);

    Ok(0.5 * (c * cov_term + mean_term))
}

/// True when `after ⪰ before` up to `−1e-9 ‖before‖_F` on the smallest
/// eigenvalue of the difference.
pub fn psd_order_check(before: &Matrix, after: &Matrix) -> Result<bool> {
    Ok(psd_order_margin(before, after)? >= -1e-9 * frobenius_norm(before))
}

/// Smallest eigenvalue of `after − before`.
pub fn psd_order_margin(before: &Matrix, after: &Matrix) -> Result<f64> {
    let diff = after.sub(before, Precision::Double)?.symmetrized(Precision::Double);
    Ok(symmetric_eig(&diff)?.min())
}
