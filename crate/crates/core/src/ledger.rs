//! Sufficient statistics and the retained-statistics ledger.
//!
//! The ridge head `W = (S + γI)⁻¹ G` depends on the retained data only through
//! the feature Gram `S = FᵀF` and the feature-label moment `G = FᵀY`. Both are
//! sums over samples, so adds and deletes reduce to matrix additions and
//! subtractions on the server.

use serde::{Deserialize, Serialize};

use crate::error::{shape_mismatch, Error, Result};
use crate::linalg::{cholesky_spd, solve_spd, LowerTriangularFactor, Matrix, Precision};

/// The pair `(S, G)` together with the number of contributing samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SufficientStats {
    s: Matrix,
    g: Matrix,
    n: u64,
}

impl SufficientStats {
    pub fn zeros(d: usize, c: usize) -> Self {
        SufficientStats {
            s: Matrix::zeros(d, d),
            g: Matrix::zeros(d, c),
            n: 0,
        }
    }

    /// Assembles statistics from already-computed parts.
    pub fn from_parts(s: Matrix, g: Matrix, n: u64) -> Result<Self> {
        if !s.is_square() || s.rows() != g.rows() {
            return Err(shape_mismatch((g.rows(), g.rows()), s.shape()));
        }
        if n == 0 && (!s.is_zero() || !g.is_zero()) {
            return Err(Error::Invariant("statistics with n = 0 must be zero".into()));
        }
        Ok(SufficientStats { s, g, n })
    }

    pub fn s(&self) -> &Matrix {
        &self.s
    }

    pub fn g(&self) -> &Matrix {
        &self.g
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn d(&self) -> usize {
        self.s.rows()
    }

    pub fn c(&self) -> usize {
        self.g.cols()
    }

    fn check_compatible(&self, other: &SufficientStats) -> Result<()> {
        if self.d() != other.d() || self.c() != other.c() {
            return Err(shape_mismatch(self.g.shape(), other.g.shape()));
        }
        Ok(())
    }
}

/// `S = FᵀF`, `G = FᵀY`, `n = rows(F)`.
pub fn stats_from_batch(f: &Matrix, y: &Matrix, p: Precision) -> Result<SufficientStats> {
    if f.rows() != y.rows() {
        return Err(shape_mismatch((f.rows(), y.cols()), y.shape()));
    }
    Ok(SufficientStats {
        s: f.gram(p),
        g: f.t_matmul(y, p)?,
        n: f.rows() as u64,
    })
}

pub fn stats_add(a: &SufficientStats, b: &SufficientStats, p: Precision) -> Result<SufficientStats> {
    a.check_compatible(b)?;
    Ok(SufficientStats {
        s: a.s.add(&b.s, p)?,
        g: a.g.add(&b.g, p)?,
        n: a.n + b.n,
    })
}

/// `a − b`. When the count reaches zero the matrices are set to exact zero,
/// discarding cancellation residue.
pub fn stats_sub(a: &SufficientStats, b: &SufficientStats, p: Precision) -> Result<SufficientStats> {
    a.check_compatible(b)?;
    let n = a.n.checked_sub(b.n).ok_or(Error::NegativeCount {
        have: a.n,
        remove: b.n,
    })?;
    if n == 0 {
        return Ok(SufficientStats::zeros(a.d(), a.c()));
    }
    Ok(SufficientStats {
        s: a.s.sub(&b.s, p)?,
        g: a.g.sub(&b.g, p)?,
        n,
    })
}

/// Server-side running statistics of the global retained multiset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ledger {
    stats: SufficientStats,
    round: u32,
    gamma: f64,
    precision: Precision,
}

impl Ledger {
    /// Empty ledger at round 0.
    pub fn new(d: usize, c: usize, gamma: f64, precision: Precision) -> Result<Self> {
        if !gamma.is_finite() || gamma <= 0.0 {
            return Err(Error::InvalidArgument(format!("gamma must be positive, got {gamma}")));
        }
        Ok(Ledger {
            stats: SufficientStats::zeros(d, c),
            round: 0,
            gamma,
            precision,
        })
    }

    pub fn stats(&self) -> &SufficientStats {
        &self.stats
    }

    pub fn round(&self) -> u32 {
        self.round
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn precision(&self) -> Precision {
        self.precision
    }

    pub fn d(&self) -> usize {
        self.stats.d()
    }

    pub fn c(&self) -> usize {
        self.stats.c()
    }

    pub fn n(&self) -> u64 {
        self.stats.n
    }

    /// `S_t = S_{t−1} + S⁺ − S⁻`, likewise for `G`; advances the round.
    pub fn apply(&self, add: &SufficientStats, del: &SufficientStats) -> Result<Ledger> {
        let p = self.precision;
        let grown = stats_add(&self.stats, add, p)?;
        let mut stats = stats_sub(&grown, del, p)?;
        stats.s.mirror_lower();
        Ok(Ledger {
            stats,
            round: self.round + 1,
            gamma: self.gamma,
            precision: p,
        })
    }

    /// `H = S + γI`.
    pub fn regularized_gram(&self) -> Matrix {
        self.stats
            .s
            .add_diagonal(self.gamma, self.precision)
            .expect("ledger Gram is square")
    }

    pub fn factor(&self) -> Result<LowerTriangularFactor> {
        cholesky_spd(&self.regularized_gram(), self.precision)
    }

    /// Ridge head from a Cholesky solve of `(S + γI) W = G`; no explicit
    /// inverse is formed.
    pub fn solve_head(&self) -> Result<Matrix> {
        solve_spd(&self.factor()?, &self.stats.g)
    }
}

/// Free-function form of [`Ledger::apply`].
pub fn ledger_apply(ledger: &Ledger, add: &SufficientStats, del: &SufficientStats) -> Result<Ledger> {
    ledger.apply(add, del)
}

/// Free-function form of [`Ledger::solve_head`].
pub fn solve_head(ledger: &Ledger) -> Result<Matrix> {
    ledger.solve_head()
}
