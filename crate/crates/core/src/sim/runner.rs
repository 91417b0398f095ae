//! Round-by-round scenario driver and the centralized-retrain oracle.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::data::{accuracy, FeatureSet};
use super::schedule::ClientEvents;
use super::Scenario;
use crate::client::{ClientId, ClientMessage, ClientStore, MessageVariant, SampleId};
use crate::coordinator::events::{EventOp, EventRecord};
use crate::coordinator::{
    account_round, aggregate, run_round_a, run_round_approx, run_round_b, ApproxState,
};
use crate::error::{Error, Result};
use crate::inverse::{init_from_ledger, InverseState, ResetPolicy};
use crate::ledger::{stats_from_batch, Ledger, SufficientStats};
use crate::linalg::{rel_frobenius_dev, Matrix, Precision};
use crate::posterior::{
    kl_matrix_normal, posterior_from_ledger, posterior_from_state, psd_order_check, MatrixNormalPosterior,
};

pub const SUMMARY_SCHEMA_VERSION: u32 = 1;

/// One server pipeline driven by a scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Lane {
    A,
    B,
    #[serde(rename = "approx")]
    Approx,
}

impl Lane {
    pub fn tag(self) -> &'static str {
        match self {
            Lane::A => "A",
            Lane::B => "B",
            Lane::Approx => "approx",
        }
    }

    fn message_variant(self) -> MessageVariant {
        match self {
            Lane::B => MessageVariant::QrFactor,
            Lane::A | Lane::Approx => MessageVariant::FullStats,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    pub sigma2: f64,
    pub policy: ResetPolicy,
    /// Truncation rank of approximate add rounds.
    pub rank: usize,
    pub reset_every: u32,
    /// Compute the KL certificate and PSD monotonicity each round.
    pub certificates: bool,
    /// Double-precision exact lanes whose oracle deviation exceeds this are
    /// reported as [`Error::Invariant`].
    pub hard_ceiling: Option<f64>,
    /// Keep every lane's head after every round in [`RunOutput::history`].
    pub record_heads: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            sigma2: 1.0,
            policy: ResetPolicy::default(),
            rank: 8,
            reset_every: 16,
            certificates: true,
            hard_ceiling: Some(1e-6),
            record_heads: false,
        }
    }
}

/// One row of the metrics CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub round: u32,
    pub variant: String,
    pub rel_dev_vs_oracle: f64,
    pub reset_flag: u8,
    pub scalars_sent: usize,
    pub bytes_sent: usize,
    pub lambda_max: Option<f64>,
    pub bound: Option<f64>,
    pub accuracy: Option<f64>,
    pub kl: Option<f64>,
    /// Covariance monotonicity on delete-only rounds.
    pub psd_ok: Option<bool>,
    pub retained: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub schema_version: u32,
    pub rounds: usize,
    pub precision: Precision,
    #[serde(rename = "final_dev_A")]
    pub final_dev_a: Option<f64>,
    #[serde(rename = "final_dev_B")]
    pub final_dev_b: Option<f64>,
    pub final_dev_approx: Option<f64>,
    #[serde(rename = "max_dev_A")]
    pub max_dev_a: Option<f64>,
    #[serde(rename = "max_dev_B")]
    pub max_dev_b: Option<f64>,
    pub resets: usize,
    #[serde(rename = "total_bytes_A")]
    pub total_bytes_a: Option<usize>,
    #[serde(rename = "total_bytes_B")]
    pub total_bytes_b: Option<usize>,
    pub total_bytes_approx: Option<usize>,
    pub max_kl: Option<f64>,
    /// Largest finite drift bound over approximate add rounds.
    pub max_bound: Option<f64>,
    pub assumption_violations: usize,
    pub psd_violations: usize,
    pub final_retained: u64,
    pub final_accuracy: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub records: Vec<MetricsRecord>,
    pub summary: Summary,
    pub events: Vec<EventRecord>,
    /// Final head of each lane.
    pub heads: BTreeMap<Lane, Matrix>,
    /// Oracle head after the last round.
    pub oracle_head: Matrix,
    /// Per-round lane heads, when requested.
    pub history: Vec<BTreeMap<Lane, Matrix>>,
}

impl RunOutput {
    pub fn lane_records(&self, lane: Lane) -> impl Iterator<Item = &MetricsRecord> + '_ {
        self.records.iter().filter(move |r| r.variant == lane.tag())
    }
}

/// Fresh ledger over `ids` built from one batch; shares no state with any
/// protocol run.
pub fn oracle_ledger(set: &FeatureSet, ids: &[SampleId], gamma: f64, precision: Precision) -> Result<Ledger> {
    let (d, c) = (set.d(), set.c());
    let empty = Ledger::new(d, c, gamma, precision)?;
    if ids.is_empty() {
        return Ok(empty);
    }
    let (f, y) = set.batch(ids);
    let stats = stats_from_batch(&f, &y, precision)?;
    empty.apply(&stats, &SufficientStats::zeros(d, c))
}

/// Centralized ridge retraining on `ids`.
pub fn oracle_retrain(set: &FeatureSet, ids: &[SampleId], gamma: f64, precision: Precision) -> Result<Matrix> {
    oracle_ledger(set, ids, gamma, precision)?.solve_head()
}

pub fn write_metrics_csv(w: impl Write, records: &[MetricsRecord]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in records {
        out.serialize(r).map_err(|e| Error::Io(e.to_string()))?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_metrics_csv(r: impl std::io::Read) -> Result<Vec<MetricsRecord>> {
    csv::Reader::from_reader(r)
        .deserialize()
        .map(|row| row.map_err(|e| Error::Io(e.to_string())))
        .collect()
}

enum Engine {
    A(Ledger),
    B(Ledger, InverseState),
    Approx(Ledger, ApproxState),
}

impl Engine {
    fn ledger(&self) -> &Ledger {
        match self {
            Engine::A(l) | Engine::B(l, _) | Engine::Approx(l, _) => l,
        }
    }
}

struct LaneRun {
    lane: Lane,
    stores: Vec<ClientStore>,
    engine: Engine,
    head: Matrix,
    prev_sigma: Option<Matrix>,
    total_bytes: usize,
}

struct Step {
    reset: bool,
    lambda_max: Option<f64>,
    bound: Option<f64>,
    assumption_ok: bool,
}

impl LaneRun {
    fn new(lane: Lane, scenario: &Scenario, opts: &RunOptions) -> Result<Self> {
        let (d, c) = (scenario.d, scenario.c);
        let ledger = Ledger::new(d, c, scenario.gamma, scenario.precision)?;
        let engine = match lane {
            Lane::A => Engine::A(ledger),
            Lane::B => {
                let state = init_from_ledger(&ledger)?;
                Engine::B(ledger, state)
            }
            Lane::Approx => {
                let state = ApproxState::new(&ledger, opts.reset_every);
                Engine::Approx(ledger, state)
            }
        };
        Ok(LaneRun {
            lane,
            stores: (0..scenario.clients).map(|k| ClientStore::new(k as ClientId, d, c)).collect(),
            engine,
            head: Matrix::zeros(d, c),
            prev_sigma: None,
            total_bytes: 0,
        })
    }

    fn messages(
        &mut self,
        round: u32,
        events: &BTreeMap<ClientId, &ClientEvents>,
        set: &FeatureSet,
        precision: Precision,
    ) -> Result<Vec<ClientMessage>> {
        let variant = self.lane.message_variant();
        self.stores
            .par_iter_mut()
            .filter_map(|store| events.get(&store.client_id()).map(|ev| (store, *ev)))
            .map(|(store, ev)| {
                let samples = ev.adds.iter().map(|&id| set.sample(id)).collect::<Result<Vec<_>>>()?;
                store.ingest(samples)?;
                store.make_round_message(round, &ev.adds, &ev.deletes, variant, precision)
            })
            .collect()
    }

    fn step(&mut self, messages: &[ClientMessage], opts: &RunOptions) -> Result<Step> {
        let ledger = self.engine.ledger();
        let agg = aggregate(messages, ledger.d(), ledger.c(), ledger.precision())?;
        let (engine, head, step) = match &self.engine {
            Engine::A(ledger) => {
                let (next, w) = run_round_a(ledger, &agg)?;
                let step = Step {
                    reset: false,
                    lambda_max: None,
                    bound: None,
                    assumption_ok: true,
                };
                (Engine::A(next), w, step)
            }
            Engine::B(ledger, state) => {
                let out = run_round_b(ledger, state, &agg, &opts.policy)?;
                let w = out.head().clone();
                let step = Step {
                    reset: out.reset.is_some(),
                    lambda_max: out.lambda_max,
                    bound: None,
                    assumption_ok: true,
                };
                (Engine::B(out.ledger, out.state), w, step)
            }
            Engine::Approx(ledger, state) => {
                let out = run_round_approx(ledger, state, &agg, opts.rank)?;
                let step = Step {
                    reset: out.reset,
                    lambda_max: None,
                    bound: out.report.map(|r| r.t_bound),
                    assumption_ok: out.report.is_none_or(|r| r.assumption_ok),
                };
                (Engine::Approx(out.ledger, out.state), out.head, step)
            }
        };
        self.engine = engine;
        self.head = head;
        Ok(step)
    }

    fn posterior(&self, sigma2: f64) -> Result<Option<MatrixNormalPosterior>> {
        Ok(match &self.engine {
            Engine::A(ledger) => Some(posterior_from_ledger(ledger, sigma2)?),
            Engine::B(_, state) => Some(posterior_from_state(state, sigma2)?),
            Engine::Approx(..) => None,
        })
    }
}

/// Drives every lane selected by the scenario through its schedule.
///
/// Each schedule entry is one aggregate/apply cycle per lane. The oracle is
/// recomputed from scratch in double precision after every round.
pub fn run_scenario(scenario: &Scenario, set: &FeatureSet, opts: &RunOptions) -> Result<RunOutput> {
    scenario.validate()?;
    if set.d() != scenario.d || set.c() != scenario.c || set.n() < scenario.n {
        return Err(Error::DimensionMismatch {
            expected: format!("n≥{}, d={}, c={}", scenario.n, scenario.d, scenario.c),
            got: format!("n={}, d={}, c={}", set.n(), set.d(), set.c()),
        });
    }
    let precision = scenario.precision;
    let mut lanes = scenario
        .variant
        .lanes()
        .iter()
        .map(|&lane| LaneRun::new(lane, scenario, opts))
        .collect::<Result<Vec<_>>>()?;

    let mut retained: BTreeSet<SampleId> = BTreeSet::new();
    let mut records = Vec::new();
    let mut events = Vec::new();
    let mut oracle_head = Matrix::zeros(scenario.d, scenario.c);
    let mut assumption_violations = 0;
    let mut history = Vec::new();

    for (r, round) in scenario.schedule.iter().enumerate() {
        let round_no = (r + 1) as u32;
        let by_client: BTreeMap<ClientId, &ClientEvents> = round.iter().map(|e| (e.client, e)).collect();
        let delete_only = round.iter().all(|e| e.adds.is_empty()) && round.iter().any(|e| !e.deletes.is_empty());
        log_events(&mut events, round_no, round, scenario);

        for ev in round {
            ev.deletes.iter().for_each(|id| {
                retained.remove(id);
            });
        }
        for ev in round {
            retained.extend(ev.adds.iter().copied());
        }
        let ids: Vec<SampleId> = retained.iter().copied().collect();
        let oracle = oracle_ledger(set, &ids, scenario.gamma, Precision::Double)?;
        oracle_head = oracle.solve_head()?;
        let oracle_post = if opts.certificates {
            Some(posterior_from_ledger(&oracle, opts.sigma2)?)
        } else {
            None
        };

        for lane in lanes.iter_mut() {
            let messages = lane.messages(round_no, &by_client, set, precision)?;
            let comm = account_round(round_no, &messages, precision);
            lane.total_bytes += comm.total_bytes;
            let step = lane.step(&messages, opts)?;
            if !step.assumption_ok {
                assumption_violations += 1;
            }

            let ledger = lane.engine.ledger();
            if ledger.round() != round_no {
                return Err(Error::Invariant(format!(
                    "lane {} at ledger round {} after schedule round {round_no}",
                    lane.lane.tag(),
                    ledger.round()
                )));
            }
            if ledger.n() != ids.len() as u64 {
                return Err(Error::Invariant(format!(
                    "lane {} retains {} samples, schedule retains {}",
                    lane.lane.tag(),
                    ledger.n(),
                    ids.len()
                )));
            }

            let dev = deviation(&lane.head, &oracle_head)?;
            if let Some(ceiling) = opts.hard_ceiling {
                if precision == Precision::Double && lane.lane != Lane::Approx && (dev.is_nan() || dev > ceiling) {
                    return Err(Error::Invariant(format!(
                        "lane {} round {round_no}: oracle deviation {dev:e} above {ceiling:e}",
                        lane.lane.tag()
                    )));
                }
            }

            let (kl, psd_ok) = match (&oracle_post, lane.posterior(opts.sigma2)?) {
                (Some(oracle_post), Some(post)) => {
                    let kl = kl_matrix_normal(&post, oracle_post)?;
                    let psd = match &lane.prev_sigma {
                        Some(prev) if delete_only => Some(psd_order_check(prev, &post.sigma)?),
                        _ => None,
                    };
                    lane.prev_sigma = Some(post.sigma);
                    (Some(kl), psd)
                }
                _ => (None, None),
            };

            let acc = if scenario.test_ids.is_empty() {
                None
            } else {
                Some(accuracy(set, &scenario.test_ids, &lane.head))
            };
            records.push(MetricsRecord {
                round: round_no,
                variant: lane.lane.tag().to_string(),
                rel_dev_vs_oracle: dev,
                reset_flag: step.reset as u8,
                scalars_sent: comm.total_scalars,
                bytes_sent: comm.total_bytes,
                lambda_max: step.lambda_max,
                bound: step.bound,
                accuracy: acc,
                kl,
                psd_ok,
                retained: ledger.n(),
            });
        }
        if opts.record_heads {
            history.push(lanes.iter().map(|l| (l.lane, l.head.clone())).collect());
        }
    }

    let heads = lanes.iter().map(|l| (l.lane, l.head.clone())).collect();
    let summary = summarize(scenario, &lanes, &records, retained.len() as u64, assumption_violations);
    Ok(RunOutput {
        records,
        summary,
        events,
        heads,
        oracle_head,
        history,
    })
}

/// Relative deviation; both heads zero counts as agreement.
fn deviation(head: &Matrix, oracle: &Matrix) -> Result<f64> {
    match rel_frobenius_dev(head, oracle) {
        Err(Error::ZeroReference) => Ok(if head.is_zero() { 0.0 } else { f64::INFINITY }),
        other => other,
    }
}

fn log_events(out: &mut Vec<EventRecord>, round: u32, events: &[ClientEvents], scenario: &Scenario) {
    let variant = match scenario.variant {
        super::VariantSelection::A => "A",
        super::VariantSelection::B => "B",
        super::VariantSelection::Both => "both",
        super::VariantSelection::Approx => "approx",
    };
    for ev in events {
        for (op, ids) in [(EventOp::Add, &ev.adds), (EventOp::Delete, &ev.deletes)] {
            if !ids.is_empty() {
                out.push(EventRecord {
                    round,
                    client_id: ev.client,
                    op,
                    sample_ids: ids.clone(),
                    variant: variant.to_string(),
                });
            }
        }
    }
}

fn summarize(
    scenario: &Scenario,
    lanes: &[LaneRun],
    records: &[MetricsRecord],
    final_retained: u64,
    assumption_violations: usize,
) -> Summary {
    let of = |lane: Lane| records.iter().filter(move |r| r.variant == lane.tag());
    let final_dev = |lane: Lane| of(lane).next_back().map(|r| r.rel_dev_vs_oracle);
    let max_dev = |lane: Lane| of(lane).map(|r| r.rel_dev_vs_oracle).reduce(f64::max);
    let bytes = |lane: Lane| lanes.iter().find(|l| l.lane == lane).map(|l| l.total_bytes);
    let max_of = |it: &mut dyn Iterator<Item = f64>| it.filter(|v| v.is_finite()).reduce(f64::max);
    Summary {
        schema_version: SUMMARY_SCHEMA_VERSION,
        rounds: scenario.rounds(),
        precision: scenario.precision,
        final_dev_a: final_dev(Lane::A),
        final_dev_b: final_dev(Lane::B),
        final_dev_approx: final_dev(Lane::Approx),
        max_dev_a: max_dev(Lane::A),
        max_dev_b: max_dev(Lane::B),
        resets: records.iter().map(|r| r.reset_flag as usize).sum(),
        total_bytes_a: bytes(Lane::A),
        total_bytes_b: bytes(Lane::B),
        total_bytes_approx: bytes(Lane::Approx),
        max_kl: max_of(&mut records.iter().filter_map(|r| r.kl)),
        max_bound: max_of(&mut records.iter().filter_map(|r| r.bound)),
        assumption_violations,
        psd_violations: records.iter().filter(|r| r.psd_ok == Some(false)).count(),
        final_retained,
        final_accuracy: records.last().and_then(|r| r.accuracy),
    }
}
