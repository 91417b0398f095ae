//! Rank-truncated Gram updates with a resolvent drift bound.
//!
//! An add round replaces `ΔS` by its best rank-`r` part `ΔS_r` from a
//! symmetric eigendecomposition. With `H` the current (approximate)
//! regularized Gram, `T_ex = (H + ΔS)⁻¹`, `T_ap = (H + ΔS_r)⁻¹` and
//! `E = ΔS − ΔS_r`:
//!
//! ```text
//! ‖T_ex − T_ap‖₂ ≤ ‖T_ap‖₂² ‖E‖₂ / (1 − ‖T_ap E‖₂)      when ‖T_ap E‖₂ < 1
//! ‖W_ex − W_ap‖₂ ≤ ‖T_ex − T_ap‖₂ ‖G + ΔG‖₂
//! ```
//!
//! The ledger stays exact throughout and is used for periodic resets.
//! Rounds that carry deletions are executed exactly.

use serde::{Deserialize, Serialize};

use super::RoundAggregate;
use crate::error::{Error, Result};
use crate::ledger::Ledger;
use crate::linalg::{cholesky_spd, solve_spd, spectral_norm, symmetric_eig, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ApproxReport {
    pub rank_used: usize,
    /// `‖E‖₂`.
    pub neglected_mass: f64,
    /// `‖T_ap‖₂`.
    pub t_ap_norm: f64,
    /// `‖T_ap E‖₂`.
    pub contraction: f64,
    /// Bound on `‖T_ex − T_ap‖₂` (infinite when the assumption fails).
    pub t_bound: f64,
    /// Bound on `‖W_ex − W_ap‖₂` (infinite when the assumption fails).
    pub w_bound: f64,
    pub assumption_ok: bool,
}

impl ApproxReport {
    pub fn ensure_valid(&self) -> Result<()> {
        if self.assumption_ok {
            Ok(())
        } else {
            Err(Error::AssumptionViolated {
                contraction: self.contraction,
            })
        }
    }
}

/// Approximate Gram tracked between exact resets.
#[derive(Debug, Clone, PartialEq)]
pub struct ApproxState {
    s_ap: Matrix,
    steps_since_reset: u32,
    pub reset_every: u32,
}

impl ApproxState {
    pub fn new(ledger: &Ledger, reset_every: u32) -> Self {
        ApproxState {
            s_ap: ledger.stats().s().clone(),
            steps_since_reset: 0,
            reset_every,
        }
    }

    pub fn s_ap(&self) -> &Matrix {
        &self.s_ap
    }

    pub fn steps_since_reset(&self) -> u32 {
        self.steps_since_reset
    }
}

#[derive(Debug, Clone)]
pub struct ApproxRound {
    pub ledger: Ledger,
    pub state: ApproxState,
    pub head: Matrix,
    /// Present for add rounds handled approximately.
    pub report: Option<ApproxReport>,
    /// The head was recomputed exactly from the ledger this round.
    pub reset: bool,
}

pub fn run_round_approx(
    ledger: &Ledger,
    state: &ApproxState,
    agg: &RoundAggregate,
    rank: usize,
) -> Result<ApproxRound> {
    let next = ledger.apply(&agg.add_stats()?, &agg.del_stats()?)?;
    if agg.n_minus > 0 {
        let (state, head) = periodic_reset(&next, state)?;
        return Ok(ApproxRound {
            ledger: next,
            state,
            head,
            report: None,
            reset: true,
        });
    }

    let p = next.precision();
    let d = next.d();
    let rank_used = rank.min(d);
    let delta_r = if rank_used >= d {
        agg.s_plus.clone()
    } else {
        symmetric_eig(&agg.s_plus)?.partial_reconstruct(0..rank_used)
    };
    let neglected = agg.s_plus.sub(&delta_r, p)?;

    let h_ap = state
        .s_ap
        .add(&delta_r, p)?
        .add_diagonal(next.gamma(), p)?;
    let factor = cholesky_spd(&h_ap, p)?;
    let t_ap = factor.inverse();
    let g_total = next.stats().g();
    let head = solve_spd(&factor, g_total)?;

    let t_ap_norm = symmetric_eig(&t_ap)?.max();
    let neglected_mass = if neglected.is_zero() {
        0.0
    } else {
        let e = symmetric_eig(&neglected)?;
        e.max().abs().max(e.min().abs())
    };
    let contraction = spectral_norm(&t_ap.matmul(&neglected, p)?);
    let assumption_ok = contraction < 1.0;
    let (t_bound, w_bound) = if assumption_ok {
        let t_bound = t_ap_norm * t_ap_norm * neglected_mass / (1.0 - contraction);
        (t_bound, t_bound * spectral_norm(g_total))
    } else {
        (f64::INFINITY, f64::INFINITY)
    };
    let report = ApproxReport {
        rank_used,
        neglected_mass,
        t_ap_norm,
        contraction,
        t_bound,
        w_bound,
        assumption_ok,
    };

    let advanced = ApproxState {
        s_ap: state.s_ap.add(&delta_r, p)?,
        steps_since_reset: state.steps_since_reset + 1,
        reset_every: state.reset_every,
    };
    if advanced.reset_every > 0 && advanced.steps_since_reset >= advanced.reset_every {
        let (state, head) = periodic_reset(&next, &advanced)?;
        return Ok(ApproxRound {
            ledger: next,
            state,
            head,
            report: Some(report),
            reset: true,
        });
    }
    Ok(ApproxRound {
        ledger: next,
        state: advanced,
        head,
        report: Some(report),
        reset: false,
    })
}

/// Exact head from the ledger; the approximate Gram is resynchronised.
pub fn periodic_reset(ledger: &Ledger, state: &ApproxState) -> Result<(ApproxState, Matrix)> {
    let head = ledger.solve_head()?;
    Ok((ApproxState::new(ledger, state.reset_every), head))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{rel_frobenius_dev, Precision};

    const P: Precision = Precision::Double;

    fn add_round(s_plus: Matrix, g_plus: Matrix) -> RoundAggregate {
        let (d, c) = (g_plus.rows(), g_plus.cols());
        let mut agg = RoundAggregate::empty(d, c);
        agg.s_plus = s_plus;
        agg.g_plus = g_plus;
        agg.n_plus = 1;
        agg
    }

    fn empty_ledger() -> Ledger {
        Ledger::new(2, 1, 1.0, P).unwrap()
    }

    #[test]
    fn diagonal_bound_example() {
        let ledger = empty_ledger();
        let state = ApproxState::new(&ledger, 0);
        let agg = add_round(Matrix::from_diag(&[10.0, 0.5]), Matrix::column(&[1.0, 1.0]));
        let out = run_round_approx(&ledger, &state, &agg, 1).unwrap();
        let rep = out.report.unwrap();
        assert!((rep.neglected_mass - 0.5).abs() < 1e-14);
        assert!((rep.t_ap_norm - 1.0).abs() < 1e-14);
        assert!((rep.contraction - 0.5).abs() < 1e-12);
        assert!((rep.t_bound - 1.0).abs() < 1e-11);
        assert!(rep.assumption_ok);
        // T_ap = diag(1/11, 1), so W_ap = (1/11, 1).
        let w_ap = Matrix::column(&[1.0 / 11.0, 1.0]);
        assert!(rel_frobenius_dev(&out.head, &w_ap).unwrap() < 1e-14);
        // True gap |1 − 2/3| = 1/3 sits under the bound.
        assert!(1.0 / 3.0 <= rep.t_bound);
        assert_eq!(out.state.s_ap(), &Matrix::from_diag(&[10.0, 0.0]));
    }

    #[test]
    fn full_rank_is_exact() {
        let ledger = empty_ledger();
        let state = ApproxState::new(&ledger, 0);
        let s = Matrix::from_rows(&[[2.0, 1.0], [1.0, 2.0]]);
        let agg = add_round(s, Matrix::column(&[1.0, 0.0]));
        let out = run_round_approx(&ledger, &state, &agg, 2).unwrap();
        let rep = out.report.unwrap();
        assert_eq!(rep.neglected_mass, 0.0);
        assert_eq!(rep.t_bound, 0.0);
        assert_eq!(out.head, out.ledger.solve_head().unwrap());
    }

    #[test]
    fn rank_deficient_update_is_exact_to_roundoff() {
        let ledger = empty_ledger();
        let state = ApproxState::new(&ledger, 0);
        let agg = add_round(
            Matrix::from_rows(&[[1.0, 1.0], [1.0, 1.0]]),
            Matrix::column(&[1.0, 1.0]),
        );
        let out = run_round_approx(&ledger, &state, &agg, 1).unwrap();
        let rep = out.report.unwrap();
        assert!(rep.t_bound < 1e-14);
        let exact = out.ledger.solve_head().unwrap();
        assert!(rel_frobenius_dev(&out.head, &exact).unwrap() < 1e-14);
    }

    #[test]
    fn boundary_violates_assumption() {
        let ledger = empty_ledger();
        let state = ApproxState::new(&ledger, 0);
        let agg = add_round(Matrix::from_diag(&[10.0, 1.0]), Matrix::column(&[1.0, 1.0]));
        let rep = run_round_approx(&ledger, &state, &agg, 1).unwrap().report.unwrap();
        assert!(!rep.assumption_ok);
        assert!(matches!(rep.ensure_valid(), Err(Error::AssumptionViolated { .. })));
        assert!(rep.t_bound.is_infinite());
    }

    #[test]
    fn periodic_reset_restores_exact_head() {
        let mut ledger = empty_ledger();
        let mut state = ApproxState::new(&ledger, 3);
        let mut resets = 0;
        for k in 0..6 {
            let x = k as f64;
            let s = Matrix::from_rows(&[[4.0 + x, 1.0], [1.0, 0.3]]);
            let agg = add_round(s, Matrix::column(&[x, 1.0]));
            let out = run_round_approx(&ledger, &state, &agg, 1).unwrap();
            let exact = out.ledger.solve_head().unwrap();
            let dev = rel_frobenius_dev(&out.head, &exact).unwrap();
            if out.reset {
                resets += 1;
                assert!(dev <= 1e-9);
                assert_eq!(out.state.steps_since_reset(), 0);
            } else {
                assert!(dev > 1e-6);
            }
            ledger = out.ledger;
            state = out.state;
        }
        assert_eq!(resets, 2);

        let (_, w) = periodic_reset(&ledger, &state).unwrap();
        assert_eq!(w, ledger.solve_head().unwrap());
    }

    #[test]
    fn delete_round_is_exact() {
        let ledger = empty_ledger();
        let state = ApproxState::new(&ledger, 0);
        let add = add_round(Matrix::from_diag(&[3.0, 2.0]), Matrix::column(&[1.0, 1.0]));
        let out = run_round_approx(&ledger, &state, &add, 1).unwrap();
        let mut del = RoundAggregate::empty(2, 1);
        del.s_minus = Matrix::from_diag(&[1.0, 1.0]);
        del.g_minus = Matrix::column(&[0.5, 0.5]);
        del.n_minus = 1;
        let out = run_round_approx(&out.ledger, &out.state, &del, 1).unwrap();
        assert!(out.reset && out.report.is_none());
        assert_eq!(out.head, out.ledger.solve_head().unwrap());
    }
}
