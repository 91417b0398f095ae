//! Per-client retained store and round-message formation.
//!
//! Features are cached when a sample is ingested, so deletion statistics are
//! rebuilt from exactly the vectors that were added. Messages carry only
//! aggregate matrices; no per-sample data leaves the client.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ledger::stats_from_batch;
use crate::linalg::{thin_qr_rfactor, Matrix, Precision};

pub type ClientId = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SampleId(pub u64);

impl fmt::Display for SampleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: SampleId,
    pub feature: Vec<f64>,
    pub label: Vec<f64>,
}

/// Which statistics a message carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MessageVariant {
    /// Packed Gram plus moment (exact recomputation on the server).
    FullStats,
    /// QR R-factor plus moment (inverse tracking on the server).
    QrFactor,
}

impl MessageVariant {
    pub fn tag(self) -> &'static str {
        match self {
            MessageVariant::FullStats => "A",
            MessageVariant::QrFactor => "B",
        }
    }
}

/// One side (add or delete) of a round message.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Payload {
    /// `S` (symmetric, packed on the wire), `G`, `n`.
    FullStats { s: Matrix, g: Matrix, n: u64 },
    /// Upper-trapezoidal `R` with `RᵀR = S`, `G`, `n`.
    QrFactor { r: Matrix, g: Matrix, n: u64 },
}

impl Payload {
    pub fn empty(variant: MessageVariant, d: usize, c: usize) -> Self {
        match variant {
            MessageVariant::FullStats => Payload::FullStats {
                s: Matrix::zeros(d, d),
                g: Matrix::zeros(d, c),
                n: 0,
            },
            MessageVariant::QrFactor => Payload::QrFactor {
                r: Matrix::zeros(0, d),
                g: Matrix::zeros(d, c),
                n: 0,
            },
        }
    }

    pub fn variant(&self) -> MessageVariant {
        match self {
            Payload::FullStats { .. } => MessageVariant::FullStats,
            Payload::QrFactor { .. } => MessageVariant::QrFactor,
        }
    }

    pub fn n(&self) -> u64 {
        match self {
            Payload::FullStats { n, .. } | Payload::QrFactor { n, .. } => *n,
        }
    }

    pub fn g(&self) -> &Matrix {
        match self {
            Payload::FullStats { g, .. } | Payload::QrFactor { g, .. } => g,
        }
    }

    pub fn d(&self) -> usize {
        self.g().rows()
    }

    pub fn c(&self) -> usize {
        self.g().cols()
    }

    /// Number of R rows (0 for full statistics).
    pub fn rank_rows(&self) -> usize {
        match self {
            Payload::FullStats { .. } => 0,
            Payload::QrFactor { r, .. } => r.rows(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.n() == 0
    }

    /// Transmitted scalars: `d(d+1)/2 + dc + 1` or `rd + dc + 1`; zero for an
    /// empty payload.
    pub fn scalar_count(&self) -> usize {
        if self.is_empty() {
            return 0;
        }
        let (d, c) = (self.d(), self.c());
        match self {
            Payload::FullStats { .. } => d * (d + 1) / 2 + d * c + 1,
            Payload::QrFactor { r, .. } => r.rows() * d + d * c + 1,
        }
    }

    /// The Gram contribution `S` (reconstructed as `RᵀR` for factors).
    pub fn gram(&self, p: Precision) -> Matrix {
        match self {
            Payload::FullStats { s, .. } => s.clone(),
            Payload::QrFactor { r, .. } => r.gram(p),
        }
    }
}

/// Fixed-size per-round client message.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientMessage {
    pub client_id: ClientId,
    pub round: u32,
    pub precision: Precision,
    pub add: Payload,
    pub del: Payload,
}

impl ClientMessage {
    pub fn variant(&self) -> MessageVariant {
        self.add.variant()
    }

    pub fn d(&self) -> usize {
        self.add.d()
    }

    pub fn c(&self) -> usize {
        self.add.c()
    }

    pub fn scalar_count(&self) -> usize {
        self.add.scalar_count() + self.del.scalar_count()
    }
}

/// Samples retained by one client, keyed by id.
#[derive(Debug, Clone)]
pub struct ClientStore {
    client_id: ClientId,
    d: usize,
    c: usize,
    retained: BTreeMap<SampleId, Sample>,
    fresh: BTreeSet<SampleId>,
}

impl ClientStore {
    pub fn new(client_id: ClientId, d: usize, c: usize) -> Self {
        ClientStore {
            client_id,
            d,
            c,
            retained: BTreeMap::new(),
            fresh: BTreeSet::new(),
        }
    }

    pub fn client_id(&self) -> ClientId {
        self.client_id
    }

    pub fn len(&self) -> usize {
        self.retained.len()
    }

    pub fn is_empty(&self) -> bool {
        self.retained.is_empty()
    }

    pub fn contains(&self, id: SampleId) -> bool {
        self.retained.contains_key(&id)
    }

    pub fn retained_ids(&self) -> impl Iterator<Item = SampleId> + '_ {
        self.retained.keys().copied()
    }

    /// Caches samples for addition this round. Either every sample is
    /// accepted or none is.
    pub fn ingest(&mut self, samples: impl IntoIterator<Item = Sample>) -> Result<()> {
        let samples: Vec<Sample> = samples.into_iter().collect();
        let mut seen = BTreeSet::new();
        for s in &samples {
            if s.feature.len() != self.d || s.label.len() != self.c {
                return Err(Error::DimensionMismatch {
                    expected: format!("feature {} / label {}", self.d, self.c),
                    got: format!("feature {} / label {}", s.feature.len(), s.label.len()),
                });
            }
            if self.retained.contains_key(&s.id) || !seen.insert(s.id) {
                return Err(Error::DuplicateId(s.id));
            }
        }
        for s in samples {
            self.fresh.insert(s.id);
            self.retained.insert(s.id, s);
        }
        Ok(())
    }

    /// Forms the round message for `add_ids` (ingested this round) and
    /// `del_ids` (previously retained), then drops the deleted samples.
    pub fn make_round_message(
        &mut self,
        round: u32,
        add_ids: &[SampleId],
        del_ids: &[SampleId],
        variant: MessageVariant,
        precision: Precision,
    ) -> Result<ClientMessage> {
        let adds = sorted_unique(add_ids, Error::UnknownAddId)?;
        let dels = sorted_unique(del_ids, Error::UnknownDeleteId)?;
        if let Some(&id) = adds.iter().find(|id| !self.fresh.contains(id)) {
            return Err(Error::UnknownAddId(id));
        }
        if let Some(&id) = dels
            .iter()
            .find(|id| !self.retained.contains_key(id) || self.fresh.contains(id))
        {
            return Err(Error::UnknownDeleteId(id));
        }

        let add = self.payload(&adds, variant, precision)?;
        let del = self.payload(&dels, variant, precision)?;

        for id in &adds {
            self.fresh.remove(id);
        }
        for id in &dels {
            self.retained.remove(id);
        }
        Ok(ClientMessage {
            client_id: self.client_id,
            round,
            precision,
            add,
            del,
        })
    }

    fn payload(&self, ids: &[SampleId], variant: MessageVariant, p: Precision) -> Result<Payload> {
        if ids.is_empty() {
            return Ok(Payload::empty(variant, self.d, self.c));
        }
        let mut f = Vec::with_capacity(ids.len() * self.d);
        let mut y = Vec::with_capacity(ids.len() * self.c);
        for id in ids {
            let s = &self.retained[id];
            f.extend_from_slice(&s.feature);
            y.extend_from_slice(&s.label);
        }
        let f = Matrix::from_vec(ids.len(), self.d, f)?;
        let y = Matrix::from_vec(ids.len(), self.c, y)?;
        let n = ids.len() as u64;
        Ok(match variant {
            MessageVariant::FullStats => {
                let stats = stats_from_batch(&f, &y, p)?;
                Payload::FullStats {
                    s: stats.s().clone(),
                    g: stats.g().clone(),
                    n,
                }
            }
            MessageVariant::QrFactor => Payload::QrFactor {
                r: thin_qr_rfactor(&f, p),
                g: f.t_matmul(&y, p)?,
                n,
            },
        })
    }
}

fn sorted_unique(ids: &[SampleId], dup: fn(SampleId) -> Error) -> Result<Vec<SampleId>> {
    let mut v = ids.to_vec();
    v.sort_unstable();
    if let Some(w) = v.windows(2).find(|w| w[0] == w[1]) {
        return Err(dup(w[0]));
    }
    Ok(v)
}
