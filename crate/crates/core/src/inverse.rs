//! Incremental tracking of `T = (S + γI)⁻¹` through Sherman–Morrison–Woodbury
//! updates with low-rank factors `ΔS = UᵀU`.

use serde::{Deserialize, Serialize};

use crate::error::{shape_mismatch, Error, Result};
use crate::ledger::Ledger;
use crate::linalg::{cholesky_spd, solve_spd, symmetric_eig, Matrix, Precision};

/// Margin below one required of `λ_max(U T Uᵀ)` for a downdate to count as
/// feasible.
pub const FEASIBILITY_MARGIN: f64 = 1e-10;

/// Variant B server state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InverseState {
    t: Matrix,
    w: Matrix,
    gamma: f64,
    precision: Precision,
    updates_since_reset: u32,
    /// Condition estimate of the most recent downdate capacitance matrix.
    last_condition: f64,
}

/// When the tracked inverse is rebuilt from the ledger.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResetPolicy {
    /// Rebuild when `audit_drift` exceeds this.
    pub drift_threshold: f64,
    /// Audit every this many ledger rounds (0 disables audits).
    pub audit_every: u32,
    /// Rebuild when the downdate capacitance condition estimate exceeds this.
    pub condition_threshold: f64,
}

impl Default for ResetPolicy {
    fn default() -> Self {
        ResetPolicy {
            drift_threshold: 1e-6,
            audit_every: 32,
            condition_threshold: 1e8,
        }
    }
}

/// Exact state `T = (S + γI)⁻¹`, `W = T G` from the ledger.
pub fn init_from_ledger(ledger: &Ledger) -> Result<InverseState> {
    let p = ledger.precision();
    let factor = ledger.factor()?;
    let t = solve_spd(&factor, &Matrix::identity(ledger.d()))?.symmetrized(p);
    let w = t.matmul(ledger.stats().g(), p)?;
    Ok(InverseState {
        t,
        w,
        gamma: ledger.gamma(),
        precision: p,
        updates_since_reset: 0,
        last_condition: 1.0,
    })
}

impl InverseState {
    pub fn t(&self) -> &Matrix {
        &self.t
    }

    pub fn head(&self) -> &Matrix {
        &self.w
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn precision(&self) -> Precision {
        self.precision
    }

    pub fn updates_since_reset(&self) -> u32 {
        self.updates_since_reset
    }

    pub fn last_condition(&self) -> f64 {
        self.last_condition
    }

    pub fn d(&self) -> usize {
        self.t.rows()
    }

    fn check_update(&self, u: &Matrix, g: &Matrix) -> Result<()> {
        if u.cols() != self.d() {
            return Err(shape_mismatch((u.rows(), self.d()), u.shape()));
        }
        if g.shape() != self.w.shape() {
            return Err(shape_mismatch(self.w.shape(), g.shape()));
        }
        Ok(())
    }

    /// Add step: `T⁺ = T − TUᵀ(I + UTUᵀ)⁻¹UT`,
    /// `W⁺ = W + T⁺(G⁺ − Uᵀ(UW))`.
    ///
    /// `g_plus` is the additions-only label moment.
    pub fn smw_add(&self, u: &Matrix, g_plus: &Matrix) -> Result<InverseState> {
        self.check_update(u, g_plus)?;
        let p = self.precision;
        let u = u.without_zero_rows();
        let t_new = if u.rows() == 0 {
            self.t.clone()
        } else {
            let ut = u.matmul(&self.t, p)?;
            let cap = ut.matmul_t(&u, p)?.add_diagonal(1.0, p)?;
            let factor = cholesky_spd(&cap, p)?;
            let x = solve_spd(&factor, &ut)?;
            self.t.sub(&ut.t_matmul(&x, p)?, p)?.symmetrized(p)
        };
        let w = self.advance_head(&t_new, &u, g_plus, 1.0)?;
        Ok(InverseState {
            t: t_new,
            w,
            updates_since_reset: self.updates_since_reset + 1,
            ..self.clone()
        })
    }

    /// Delete step: `T⁻ = T + TUᵀ(I − UTUᵀ)⁻¹UT`,
    /// `W⁻ = W − T⁻(G⁻ − Uᵀ(UW))`.
    ///
    /// Fails with [`Error::DowndateInfeasible`] when the capacitance matrix
    /// `I − UTUᵀ` has no Cholesky factor.
    pub fn smw_delete(&self, u: &Matrix, g_minus: &Matrix) -> Result<InverseState> {
        self.check_update(u, g_minus)?;
        let p = self.precision;
        let u = u.without_zero_rows();
        let (t_new, condition) = if u.rows() == 0 {
            (self.t.clone(), 1.0)
        } else {
            let ut = u.matmul(&self.t, p)?;
            let utu = ut.matmul_t(&u, p)?;
            let cap = Matrix::identity(u.rows()).sub(&utu, p)?;
            let factor = cholesky_spd(&cap, p).map_err(|_| Error::DowndateInfeasible)?;
            let x = solve_spd(&factor, &ut)?;
            let t_new = self.t.add(&ut.t_matmul(&x, p)?, p)?.symmetrized(p);
            (t_new, factor.condition_estimate())
        };
        let w = self.advance_head(&t_new, &u, g_minus, -1.0)?;
        Ok(InverseState {
            t: t_new,
            w,
            updates_since_reset: self.updates_since_reset + 1,
            last_condition: condition,
            ..self.clone()
        })
    }

    /// `W + sign · T_new (G − Uᵀ(UW))`.
    fn advance_head(&self, t_new: &Matrix, u: &Matrix, g: &Matrix, sign: f64) -> Result<Matrix> {
        let p = self.precision;
        let correction = if u.rows() == 0 {
            g.clone()
        } else {
            let uw = u.matmul(&self.w, p)?;
            g.sub(&u.t_matmul(&uw, p)?, p)?
        };
        let step = t_new.matmul(&correction, p)?;
        if sign > 0.0 {
            self.w.add(&step, p)
        } else {
            self.w.sub(&step, p)
        }
    }

    #[cfg(test)]
    pub(crate) fn corrupt_entry(&mut self, i: usize, j: usize, delta: f64) {
        self.t[(i, j)] += delta;
    }
}

/// Outcome of [`feasibility_check`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Feasibility {
    pub feasible: bool,
    pub lambda_max: f64,
}

/// Downdate feasibility: `λ_max(U T Uᵀ) < 1 − margin`.
pub fn feasibility_check(t: &Matrix, u: &Matrix) -> Result<Feasibility> {
    if u.cols() != t.rows() || !t.is_square() {
        return Err(shape_mismatch((u.rows(), t.rows()), u.shape()));
    }
    let u = u.without_zero_rows();
    if u.rows() == 0 {
        return Ok(Feasibility {
            feasible: true,
            lambda_max: 0.0,
        });
    }
    let p = Precision::Double;
    let m = u.matmul(t, p)?.matmul_t(&u, p)?;
    let lambda_max = symmetric_eig(&m)?.max();
    Ok(Feasibility {
        feasible: lambda_max < 1.0 - FEASIBILITY_MARGIN,
        lambda_max,
    })
}

/// `‖T (S + γI) − I‖_F / √d`, evaluated in double precision.
pub fn audit_drift(state: &InverseState, ledger: &Ledger) -> f64 {
    let d = state.d();
    if d == 0 {
        return 0.0;
    }
    let h = ledger
        .stats()
        .s()
        .add_diagonal(ledger.gamma(), Precision::Double)
        .expect("square");
    let prod = state.t.matmul(&h, Precision::Double).expect("matching d");
    let resid = prod
        .sub(&Matrix::identity(d), Precision::Double)
        .expect("square");
    crate::linalg::frobenius_norm(&resid) / (d as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ledger::fixtures::*;
    use crate::ledger::SufficientStats;
    use crate::linalg::{rel_frobenius_dev, thin_qr_rfactor};

    const P: Precision = Precision::Double;

    fn ledger_with(stats: &SufficientStats) -> Ledger {
        Ledger::new(2, 1, 1.0, P)
            .unwrap()
            .apply(stats, &SufficientStats::zeros(2, 1))
            .unwrap()
    }

    fn empty_state() -> InverseState {
        init_from_ledger(&Ledger::new(2, 1, 1.0, P).unwrap()).unwrap()
    }

    #[test]
    fn init_examples() {
        let s = empty_state();
        assert_eq!(s.t(), &Matrix::identity(2));
        assert_eq!(s.head(), &Matrix::zeros(2, 1));

        let s = init_from_ledger(&ledger_with(&stats_of(batch_a()))).unwrap();
        assert!(rel_frobenius_dev(s.t(), &Matrix::from_diag(&[0.5, 0.5])).unwrap() < 1e-15);
        assert!(rel_frobenius_dev(s.head(), &Matrix::column(&[0.5, 0.5])).unwrap() < 1e-15);

        let s = init_from_ledger(&ledger_with(&stats_of(batch_b()))).unwrap();
        let expect = Matrix::from_rows(&[[2.0, -1.0], [-1.0, 2.0]]).scale(1.0 / 3.0, P);
        assert!(rel_frobenius_dev(s.t(), &expect).unwrap() < 1e-15);
    }

    #[test]
    fn add_examples() {
        let s = empty_state()
            .smw_add(&Matrix::identity(2), &Matrix::column(&[1.0, 1.0]))
            .unwrap();
        assert!(rel_frobenius_dev(s.t(), &Matrix::from_diag(&[0.5, 0.5])).unwrap() < 1e-15);
        assert!(rel_frobenius_dev(s.head(), &Matrix::column(&[0.5, 0.5])).unwrap() < 1e-15);

        let unchanged = empty_state()
            .smw_add(&Matrix::zeros(0, 2), &Matrix::zeros(2, 1))
            .unwrap();
        assert_eq!(unchanged.t(), empty_state().t());
        assert_eq!(unchanged.head(), empty_state().head());

        let (f, y) = batch_b();
        let r = thin_qr_rfactor(&f, P);
        let s = empty_state().smw_add(&r, &f.t_matmul(&y, P).unwrap()).unwrap();
        let third = Matrix::column(&[1.0 / 3.0, 1.0 / 3.0]);
        assert!(rel_frobenius_dev(s.head(), &third).unwrap() < 1e-15);
    }

    #[test]
    fn delete_examples() {
        let g = Matrix::column(&[1.0, 1.0]);
        let added = empty_state().smw_add(&Matrix::identity(2), &g).unwrap();
        let back = added.smw_delete(&Matrix::identity(2), &g).unwrap();
        assert_eq!(back.t(), &Matrix::identity(2));
        assert_eq!(back.head(), &Matrix::zeros(2, 1));

        assert_eq!(
            empty_state().smw_delete(&Matrix::identity(2), &g),
            Err(Error::DowndateInfeasible)
        );
    }

    #[test]
    fn shape_errors() {
        let s = empty_state();
        assert!(matches!(
            s.smw_add(&Matrix::zeros(1, 3), &Matrix::zeros(2, 1)),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(matches!(
            s.smw_delete(&Matrix::zeros(1, 2), &Matrix::zeros(2, 2)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn feasibility_examples() {
        let f = feasibility_check(&Matrix::from_diag(&[0.5, 0.5]), &Matrix::identity(2)).unwrap();
        assert!(f.feasible);
        assert!((f.lambda_max - 0.5).abs() < 1e-15);

        let f = feasibility_check(&Matrix::identity(2), &Matrix::identity(2)).unwrap();
        assert!(!f.feasible);
        assert_eq!(f.lambda_max, 1.0);

        let f = feasibility_check(&Matrix::identity(2), &Matrix::from_rows(&[[0.5, 0.0]])).unwrap();
        assert!(f.feasible);
        assert!((f.lambda_max - 0.25).abs() < 1e-15);
    }

    #[test]
    fn drift_audit() {
        let ledger = ledger_with(&stats_of(batch_b()));
        let mut s = init_from_ledger(&ledger).unwrap();
        assert!(audit_drift(&s, &ledger) <= 1e-12);
        s.corrupt_entry(0, 1, 1e-3);
        assert!(audit_drift(&s, &ledger) >= 1e-4);
    }
}
