//! Desk-scale simulation: synthetic features, partitions, event schedules,
//! the centralized-retrain oracle and per-round metrics.

pub mod data;
pub mod partition;
pub mod runner;
pub mod schedule;

use std::collections::BTreeSet;
use std::path::PathBuf;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::client::{ClientId, SampleId};
use crate::error::{Error, Result};
use crate::linalg::Precision;

pub use data::{accuracy, class_recall, gen_synthetic, FeatureSet, SyntheticData};
pub use partition::{dirichlet_partition, grouped_partition};
pub use runner::{
    oracle_ledger, oracle_retrain, read_metrics_csv, run_scenario, write_metrics_csv, Lane, MetricsRecord, RunOptions, RunOutput,
    Summary, SUMMARY_SCHEMA_VERSION,
};
pub use schedule::{
    initial_round, owners_of, schedule_addback, schedule_burst, schedule_chunked, schedule_interleaved,
    schedule_targeted, ClientEvents, Owners, Round,
};

/// Named random substreams derived from one seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Data = 1,
    Partition = 2,
    Schedule = 3,
}

pub fn substream(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum PartitionSpec {
    Dirichlet { alpha: f64 },
    Groups { groups: usize },
}

/// Which server variants a run drives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum VariantSelection {
    A,
    B,
    #[default]
    Both,
    Approx,
}

impl VariantSelection {
    pub fn lanes(self) -> &'static [Lane] {
        match self {
            VariantSelection::A => &[Lane::A],
            VariantSelection::B => &[Lane::B],
            VariantSelection::Both => &[Lane::A, Lane::B],
            VariantSelection::Approx => &[Lane::Approx],
        }
    }
}

impl std::str::FromStr for VariantSelection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "a" => Ok(VariantSelection::A),
            "b" => Ok(VariantSelection::B),
            "both" => Ok(VariantSelection::Both),
            "approx" => Ok(VariantSelection::Approx),
            other => Err(Error::InvalidArgument(format!("unknown variant {other:?}"))),
        }
    }
}

fn default_gamma() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub seed: u64,
    pub d: usize,
    pub c: usize,
    pub clients: usize,
    pub n: usize,
    pub partition: PartitionSpec,
    #[serde(default)]
    pub variant: VariantSelection,
    #[serde(default)]
    pub precision: Precision,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    /// Feature file, relative to the scenario file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<PathBuf>,
    #[serde(default)]
    pub test_ids: Vec<SampleId>,
    pub schedule: Vec<Round>,
}

impl Scenario {
    /// Replays the schedule on id sets only. Adds must name ids not currently
    /// retained anywhere; deletions must name ids retained by the same client
    /// before the round.
    pub fn validate(&self) -> Result<()> {
        if !self.gamma.is_finite() || self.gamma <= 0.0 {
            return Err(Error::InvalidArgument(format!("gamma must be positive, got {}", self.gamma)));
        }
        if self.clients == 0 {
            return Err(Error::InvalidArgument("scenario needs at least one client".into()));
        }
        let mut held: Vec<BTreeSet<SampleId>> = vec![BTreeSet::new(); self.clients];
        let mut live = BTreeSet::new();
        for (r, round) in self.schedule.iter().enumerate() {
            let mut seen_clients = BTreeSet::new();
            for ev in round {
                let k = ev.client as usize;
                if k >= self.clients || !seen_clients.insert(ev.client) {
                    return Err(Error::InvalidArgument(format!(
                        "round {}: bad or repeated client {}",
                        r + 1,
                        ev.client
                    )));
                }
                for id in &ev.deletes {
                    if !held[k].contains(id) {
                        return Err(Error::UnknownDeleteId(*id));
                    }
                }
                for id in &ev.adds {
                    if id.0 as usize >= self.n || live.contains(id) {
                        return Err(Error::UnknownAddId(*id));
                    }
                }
            }
            for ev in round {
                let k = ev.client as usize;
                ev.deletes.iter().for_each(|id| {
                    held[k].remove(id);
                    live.remove(id);
                });
            }
            for ev in round {
                for id in &ev.adds {
                    if !live.insert(*id) {
                        return Err(Error::DuplicateId(*id));
                    }
                    held[ev.client as usize].insert(*id);
                }
            }
        }
        Ok(())
    }

    pub fn rounds(&self) -> usize {
        self.schedule.len()
    }
}

/// Deletion pattern appended after the initial all-clients add round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum SchedulePlan {
    None,
    Chunked { fraction: f64, steps: usize },
    /// Chunked deletion of every retained sample of one class.
    Targeted { class: usize, steps: usize },
    Burst { count: usize, addback: bool },
}

/// Partitions the training ids of `data` and builds a full schedule.
#[allow(clippy::too_many_arguments)]
pub fn build_scenario(
    seed: u64,
    data: &SyntheticData,
    clients: usize,
    partition: PartitionSpec,
    plan: &SchedulePlan,
    variant: VariantSelection,
    precision: Precision,
    gamma: f64,
) -> Result<Scenario> {
    let set = &data.set;
    let parts = match &partition {
        PartitionSpec::Dirichlet { alpha } => {
            let classes: Vec<usize> = data.train.iter().map(|&id| set.class_of(id)).collect();
            dirichlet_partition(seed, &data.train, &classes, clients, *alpha)?
        }
        PartitionSpec::Groups { groups } => grouped_partition(&data.train, clients, *groups)?,
    };
    let owners = owners_of(&parts);
    let mut schedule = vec![initial_round(&parts)];
    match plan {
        SchedulePlan::None => {}
        SchedulePlan::Chunked { fraction, steps } => {
            schedule.extend(schedule_chunked(seed, &owners, *fraction, *steps)?)
        }
        SchedulePlan::Targeted { class, steps } => {
            let targets: Vec<SampleId> = data
                .train
                .iter()
                .copied()
                .filter(|&id| set.class_of(id) == *class)
                .collect();
            schedule.extend(schedule_targeted(seed, &owners, &targets, *steps)?)
        }
        SchedulePlan::Burst { count, addback } => {
            let burst = schedule_burst(seed, &owners, *count)?;
            if *addback {
                let back = schedule_addback(&burst);
                schedule.extend(burst);
                schedule.extend(back);
            } else {
                schedule.extend(burst);
            }
        }
    }
    let scenario = Scenario {
        seed,
        d: set.d(),
        c: set.c(),
        clients,
        n: set.n(),
        partition,
        variant,
        precision,
        gamma,
        features: None,
        test_ids: data.test.clone(),
        schedule,
    };
    scenario.validate()?;
    Ok(scenario)
}

/// Ids retained after the whole schedule.
pub fn final_retained(schedule: &[Round]) -> BTreeSet<SampleId> {
    let mut live = BTreeSet::new();
    for round in schedule {
        for ev in round {
            ev.deletes.iter().for_each(|id| {
                live.remove(id);
            });
        }
        for ev in round {
            live.extend(ev.adds.iter().copied());
        }
    }
    live
}

/// Owner clients that appear in a schedule.
pub fn clients_in(schedule: &[Round]) -> BTreeSet<ClientId> {
    schedule.iter().flatten().map(|e| e.client).collect()
}
