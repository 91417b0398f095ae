//! Server round loop.
//!
//! Each round the server sums client messages in client-id order, advances
//! the exact ledger, and recovers the head either by a Cholesky solve
//! (Variant A), by SMW updates of a tracked inverse (Variant B), or by a
//! rank-truncated approximate update with an explicit drift bound.

mod approx;
pub mod events;
pub mod wire;

pub use approx::{periodic_reset, run_round_approx, ApproxReport, ApproxRound, ApproxState};

use serde::{Deserialize, Serialize};

use crate::client::{ClientId, ClientMessage, MessageVariant, Payload};
use crate::error::{Error, Result};
use crate::inverse::{audit_drift, feasibility_check, init_from_ledger, InverseState, ResetPolicy};
use crate::ledger::{Ledger, SufficientStats};
use crate::linalg::{thin_qr_rfactor, Matrix, Precision};

/// Sums of one round's client messages.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundAggregate {
    pub round: Option<u32>,
    pub variant: Option<MessageVariant>,
    pub s_plus: Matrix,
    pub g_plus: Matrix,
    pub s_minus: Matrix,
    pub g_minus: Matrix,
    /// Stacked R-factors, so that `U⁺ᵀU⁺ = S⁺` (Variant B only).
    pub u_plus: Option<Matrix>,
    pub u_minus: Option<Matrix>,
    pub n_plus: u64,
    pub n_minus: u64,
}

impl RoundAggregate {
    pub fn empty(d: usize, c: usize) -> Self {
        RoundAggregate {
            round: None,
            variant: None,
            s_plus: Matrix::zeros(d, d),
            g_plus: Matrix::zeros(d, c),
            s_minus: Matrix::zeros(d, d),
            g_minus: Matrix::zeros(d, c),
            u_plus: None,
            u_minus: None,
            n_plus: 0,
            n_minus: 0,
        }
    }

    pub fn add_stats(&self) -> Result<SufficientStats> {
        SufficientStats::from_parts(self.s_plus.clone(), self.g_plus.clone(), self.n_plus)
    }

    pub fn del_stats(&self) -> Result<SufficientStats> {
        SufficientStats::from_parts(self.s_minus.clone(), self.g_minus.clone(), self.n_minus)
    }

    pub fn is_empty(&self) -> bool {
        self.n_plus == 0 && self.n_minus == 0
    }
}

/// Sums messages in ascending client-id order. `d`, `c` and the precision
/// describe the round when `messages` is empty.
pub fn aggregate(
    messages: &[ClientMessage],
    d: usize,
    c: usize,
    precision: Precision,
) -> Result<RoundAggregate> {
    let mut sorted: Vec<&ClientMessage> = messages.iter().collect();
    sorted.sort_by_key(|m| m.client_id);

    let mut agg = RoundAggregate::empty(d, c);
    let Some(first) = sorted.first() else {
        return Ok(agg);
    };
    let variant = first.variant();
    for m in &sorted {
        if m.round != first.round {
            return Err(Error::MixedRound(first.round, m.round));
        }
        if m.variant() != variant
            || m.del.variant() != variant
            || m.precision != precision
        {
            return Err(Error::MixedVariant);
        }
        for payload in [&m.add, &m.del] {
            if payload.d() != d || payload.c() != c {
                return Err(Error::DimensionMismatch {
                    expected: format!("d={d}, c={c}"),
                    got: format!("d={}, c={} from client {}", payload.d(), payload.c(), m.client_id),
                });
            }
        }
    }
    agg.round = Some(first.round);
    agg.variant = Some(variant);

    let p = precision;
    for m in &sorted {
        accumulate(&mut agg.s_plus, &mut agg.g_plus, &mut agg.n_plus, &m.add, p)?;
        accumulate(&mut agg.s_minus, &mut agg.g_minus, &mut agg.n_minus, &m.del, p)?;
    }
    if variant == MessageVariant::QrFactor {
        let stack = |side: fn(&ClientMessage) -> &Payload| -> Result<Matrix> {
            let parts: Vec<&Matrix> = sorted
                .iter()
                .filter_map(|m| match side(m) {
                    Payload::QrFactor { r, .. } => Some(r),
                    Payload::FullStats { .. } => None,
                })
                .collect();
            Matrix::vstack(&parts, d)
        };
        agg.u_plus = Some(stack(|m| &m.add)?);
        agg.u_minus = Some(stack(|m| &m.del)?);
    }
    Ok(agg)
}

fn accumulate(s: &mut Matrix, g: &mut Matrix, n: &mut u64, payload: &Payload, p: Precision) -> Result<()> {
    if payload.is_empty() {
        return Ok(());
    }
    *s = s.add(&payload.gram(p), p)?;
    *g = g.add(payload.g(), p)?;
    *n += payload.n();
    Ok(())
}

/// Variant A round: ledger update followed by a Cholesky solve.
pub fn run_round_a(ledger: &Ledger, agg: &RoundAggregate) -> Result<(Ledger, Matrix)> {
    let next = ledger.apply(&agg.add_stats()?, &agg.del_stats()?)?;
    let w = next.solve_head()?;
    Ok((next, w))
}

/// Why a Variant B round rebuilt its inverse from the ledger.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ResetReason {
    DowndateInfeasible,
    IllConditioned(f64),
    Drift(f64),
    /// The retained set became empty; the exact empty state is restored.
    Emptied,
}

#[derive(Debug, Clone)]
pub struct RoundB {
    pub ledger: Ledger,
    pub state: InverseState,
    pub reset: Option<ResetReason>,
    /// `λ_max(U⁻ T⁺ U⁻ᵀ)` for rounds with deletions.
    pub lambda_max: Option<f64>,
}

impl RoundB {
    pub fn head(&self) -> &Matrix {
        self.state.head()
    }
}

/// Variant B round: add step, then delete step, on the tracked inverse. The
/// exact ledger is advanced alongside and is the authority for resets.
pub fn run_round_b(
    ledger: &Ledger,
    state: &InverseState,
    agg: &RoundAggregate,
    policy: &ResetPolicy,
) -> Result<RoundB> {
    let p = ledger.precision();
    let d = ledger.d();
    let next = ledger
        .apply(&agg.add_stats()?, &agg.del_stats()?)
        .map_err(|e| match e {
            Error::NegativeCount { have, remove } => {
                Error::InvalidDeletion(format!("{remove} deletions against {have} retained"))
            }
            other => other,
        })?;

    let reset = |reason: ResetReason, lambda_max: Option<f64>| -> Result<RoundB> {
        Ok(RoundB {
            state: init_from_ledger(&next)?,
            ledger: next.clone(),
            reset: Some(reason),
            lambda_max,
        })
    };

    if next.n() == 0 {
        return reset(ResetReason::Emptied, None);
    }

    let u_plus = compress_factor(agg.u_plus.as_ref(), d, p);
    let u_minus = compress_factor(agg.u_minus.as_ref(), d, p);

    let after_add = state.smw_add(&u_plus, &agg.g_plus)?;
    let lambda_max = if u_minus.rows() > 0 {
        Some(feasibility_check(after_add.t(), &u_minus)?.lambda_max)
    } else {
        None
    };
    let after_del = match after_add.smw_delete(&u_minus, &agg.g_minus) {
        Ok(s) => s,
        Err(Error::DowndateInfeasible) => return reset(ResetReason::DowndateInfeasible, lambda_max),
        Err(e) => return Err(e),
    };
    if u_minus.rows() > 0 && after_del.last_condition() > policy.condition_threshold {
        return reset(ResetReason::IllConditioned(after_del.last_condition()), lambda_max);
    }
    if policy.audit_every > 0 && next.round() % policy.audit_every == 0 {
        let drift = audit_drift(&after_del, &next);
        if drift > policy.drift_threshold {
            return reset(ResetReason::Drift(drift), lambda_max);
        }
    }
    Ok(RoundB {
        ledger: next,
        state: after_del,
        reset: None,
        lambda_max,
    })
}

/// Drops zero rows from a stacked factor and, when more rows than columns
/// remain, re-factors it to `d` rows. `UᵀU` is preserved.
fn compress_factor(u: Option<&Matrix>, d: usize, p: Precision) -> Matrix {
    let Some(u) = u else {
        return Matrix::zeros(0, d);
    };
    let u = u.without_zero_rows();
    if u.rows() > d {
        thin_qr_rfactor(&u, p).without_zero_rows()
    } else {
        u
    }
}

/// Per-round communication accounting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommRecord {
    pub round: u32,
    pub variant: Option<MessageVariant>,
    pub per_client: Vec<(ClientId, usize)>,
    pub total_scalars: usize,
    pub total_bytes: usize,
}

pub fn account_round(round: u32, messages: &[ClientMessage], precision: Precision) -> CommRecord {
    let mut per_client: Vec<(ClientId, usize)> = messages
        .iter()
        .map(|m| (m.client_id, m.scalar_count()))
        .collect();
    per_client.sort_unstable();
    let total_scalars = per_client.iter().map(|(_, s)| s).sum::<usize>();
    CommRecord {
        round,
        variant: messages.first().map(ClientMessage::variant),
        per_client,
        total_scalars,
        total_bytes: total_scalars * precision.width(),
    }
}
