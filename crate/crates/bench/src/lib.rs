//! Fixtures shared by the benchmarks: seeded random batches and a server
//! state with one pending round of client messages.

use fcul_core::client::{ClientStore, MessageVariant, Sample, SampleId};
use fcul_core::coordinator::{aggregate, RoundAggregate};
use fcul_core::inverse::{init_from_ledger, InverseState};
use fcul_core::ledger::{stats_from_batch, Ledger, SufficientStats};
use fcul_core::linalg::{Matrix, Precision};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const P: Precision = Precision::Double;

pub fn random_matrix(seed: u64, rows: usize, cols: usize) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

/// `FᵀF + I` for a tall random `F`.
pub fn spd(seed: u64, d: usize) -> Matrix {
    random_matrix(seed, 2 * d, d).gram(P).add_diagonal(1.0, P).expect("square")
}

/// A ledger over `n0` samples, the matching exact inverse state, and the
/// aggregated messages of one round in which a single client adds `r`
/// fresh samples and deletes `r` retained ones.
pub struct ServerFixture {
    pub ledger: Ledger,
    pub state: InverseState,
    pub round_a: RoundAggregate,
    pub round_b: RoundAggregate,
}

pub fn server_fixture(d: usize, c: usize, n0: usize, r: usize) -> ServerFixture {
    let mut rng = ChaCha8Rng::seed_from_u64(d as u64 * 1000 + r as u64);
    let samples: Vec<Sample> = (0..(n0 + r) as u64)
        .map(|i| Sample {
            id: SampleId(i),
            feature: (0..d).map(|_| rng.random_range(-1.0..1.0)).collect(),
            label: (0..c).map(|_| rng.random_range(0.0..1.0)).collect(),
        })
        .collect();
    let (initial, fresh) = samples.split_at(n0);
    let f = Matrix::from_fn(n0, d, |i, j| initial[i].feature[j]);
    let y = Matrix::from_fn(n0, c, |i, j| initial[i].label[j]);
    let ledger = Ledger::new(d, c, 1.0, P)
        .and_then(|l| l.apply(&stats_from_batch(&f, &y, P)?, &SufficientStats::zeros(d, c)))
        .expect("ledger");
    let state = init_from_ledger(&ledger).expect("inverse");

    let adds: Vec<SampleId> = fresh.iter().map(|s| s.id).collect();
    let dels: Vec<SampleId> = initial[..r].iter().map(|s| s.id).collect();
    let message = |variant| {
        let mut store = ClientStore::new(0, d, c);
        store.ingest(initial.to_vec()).expect("ingest");
        let ids: Vec<SampleId> = initial.iter().map(|s| s.id).collect();
        store.make_round_message(1, &ids, &[], variant, P).expect("initial round");
        store.ingest(fresh.to_vec()).expect("ingest");
        let msg = store.make_round_message(2, &adds, &dels, variant, P).expect("message");
        aggregate(&[msg], d, c, P).expect("aggregate")
    };
    ServerFixture {
        ledger,
        state,
        round_a: message(MessageVariant::FullStats),
        round_b: message(MessageVariant::QrFactor),
    }
}
