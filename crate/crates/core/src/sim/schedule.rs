//! Event schedules: which client adds or deletes which ids in each round.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{substream, Stream};
use crate::client::{ClientId, SampleId};
use crate::error::{Error, Result};

/// One client's events within a round.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClientEvents {
    pub client: ClientId,
    #[serde(default)]
    pub adds: Vec<SampleId>,
    #[serde(default)]
    pub deletes: Vec<SampleId>,
}

pub type Round = Vec<ClientEvents>;

/// Owner of each sample id.
pub type Owners = BTreeMap<SampleId, ClientId>;

pub fn owners_of(parts: &[Vec<SampleId>]) -> Owners {
    parts
        .iter()
        .enumerate()
        .flat_map(|(k, ids)| ids.iter().map(move |&id| (id, k as ClientId)))
        .collect()
}

/// A round in which every client adds its whole partition.
pub fn initial_round(parts: &[Vec<SampleId>]) -> Round {
    parts
        .iter()
        .enumerate()
        .filter(|(_, ids)| !ids.is_empty())
        .map(|(k, ids)| ClientEvents {
            client: k as ClientId,
            adds: ids.clone(),
            deletes: Vec::new(),
        })
        .collect()
}

/// Groups ids by owner into per-client events of one kind.
fn round_of(ids: &[SampleId], owners: &Owners, delete: bool) -> Result<Round> {
    let mut per: BTreeMap<ClientId, Vec<SampleId>> = BTreeMap::new();
    for &id in ids {
        let owner = owners
            .get(&id)
            .ok_or_else(|| Error::InvalidArgument(format!("sample {id} has no owner")))?;
        per.entry(*owner).or_default().push(id);
    }
    Ok(per
        .into_iter()
        .map(|(client, mut ids)| {
            ids.sort_unstable();
            let (adds, deletes) = if delete { (Vec::new(), ids) } else { (ids, Vec::new()) };
            ClientEvents { client, adds, deletes }
        })
        .collect())
}

/// `steps` deletion rounds, each removing `round(fraction · N)` ids drawn
/// uniformly from the `N` originally retained ids across all clients.
pub fn schedule_chunked(seed: u64, owners: &Owners, fraction: f64, steps: usize) -> Result<Vec<Round>> {
    if !(0.0..=1.0).contains(&fraction) || fraction * steps as f64 > 1.0 + 1e-12 {
        return Err(Error::InvalidArgument(format!(
            "fraction {fraction} over {steps} steps exceeds the retained set"
        )));
    }
    let mut pool: Vec<SampleId> = owners.keys().copied().collect();
    pool.shuffle(&mut substream(seed, Stream::Schedule));
    let chunk = (fraction * pool.len() as f64).round() as usize;
    (0..steps)
        .map(|s| {
            let lo = (s * chunk).min(pool.len());
            let hi = ((s + 1) * chunk).min(pool.len());
            round_of(&pool[lo..hi], owners, true)
        })
        .collect()
}

/// Chunked deletion restricted to `targets` (for example one class): the
/// targets are shuffled and removed in `steps` nearly equal chunks.
pub fn schedule_targeted(seed: u64, owners: &Owners, targets: &[SampleId], steps: usize) -> Result<Vec<Round>> {
    let mut pool = targets.to_vec();
    pool.sort_unstable();
    pool.shuffle(&mut substream(seed, Stream::Schedule));
    let n = pool.len();
    (0..steps)
        .map(|s| round_of(&pool[s * n / steps..(s + 1) * n / steps], owners, true))
        .collect()
}

/// `count` rounds, each deleting one distinct id.
pub fn schedule_burst(seed: u64, owners: &Owners, count: usize) -> Result<Vec<Round>> {
    if count > owners.len() {
        return Err(Error::InvalidArgument(format!(
            "burst of {count} exceeds {} retained",
            owners.len()
        )));
    }
    let mut pool: Vec<SampleId> = owners.keys().copied().collect();
    pool.shuffle(&mut substream(seed, Stream::Schedule));
    pool[..count]
        .iter()
        .map(|id| round_of(std::slice::from_ref(id), owners, true))
        .collect()
}

/// Replays the deletions of `burst` as additions, last deletion first.
pub fn schedule_addback(burst: &[Round]) -> Vec<Round> {
    burst
        .iter()
        .rev()
        .map(|round| {
            round
                .iter()
                .map(|ev| ClientEvents {
                    client: ev.client,
                    adds: ev.deletes.clone(),
                    deletes: Vec::new(),
                })
                .collect()
        })
        .collect()
}

/// A random schedule over `rounds` rounds with final retained set
/// `universe \ deleted`.
///
/// Every id gets a random owner among `clients` and a random add round;
/// ids in `deleted` are removed in a random later round. Different seeds
/// give different assignments and interleavings of the same final multiset.
pub fn schedule_interleaved(
    seed: u64,
    universe: &[SampleId],
    deleted: &[SampleId],
    clients: usize,
    rounds: usize,
) -> Result<(Owners, Vec<Round>)> {
    if clients == 0 || rounds < 2 {
        return Err(Error::InvalidArgument("need clients ≥ 1 and rounds ≥ 2".into()));
    }
    let mut rng = substream(seed, Stream::Schedule);
    let doomed: std::collections::BTreeSet<SampleId> = deleted.iter().copied().collect();
    let mut owners = Owners::new();
    let mut adds: Vec<Vec<SampleId>> = vec![Vec::new(); rounds];
    let mut dels: Vec<Vec<SampleId>> = vec![Vec::new(); rounds];
    let mut ordered = universe.to_vec();
    ordered.sort_unstable();
    for id in ordered {
        owners.insert(id, rng.random_range(0..clients) as ClientId);
        if doomed.contains(&id) {
            let a = rng.random_range(0..rounds - 1);
            adds[a].push(id);
            dels[rng.random_range(a + 1..rounds)].push(id);
        } else {
            adds[rng.random_range(0..rounds)].push(id);
        }
    }
    let schedule = (0..rounds)
        .map(|r| {
            let mut merged: BTreeMap<ClientId, ClientEvents> = BTreeMap::new();
            for (ids, delete) in [(&adds[r], false), (&dels[r], true)] {
                for ev in round_of(ids, &owners, delete)? {
                    let slot = merged.entry(ev.client).or_insert_with(|| ClientEvents {
                        client: ev.client,
                        adds: Vec::new(),
                        deletes: Vec::new(),
                    });
                    slot.adds.extend(ev.adds);
                    slot.deletes.extend(ev.deletes);
                }
            }
            Ok(merged.into_values().collect())
        })
        .collect::<Result<Vec<Round>>>()?;
    Ok((owners, schedule))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    fn owners(n: u64, clients: u32) -> Owners {
        (0..n).map(|i| (SampleId(i), (i % clients as u64) as ClientId)).collect()
    }

    fn deleted(rounds: &[Round]) -> Vec<SampleId> {
        rounds.iter().flatten().flat_map(|e| e.deletes.iter().copied()).collect()
    }

    #[test]
    fn chunked_twenty_percent() {
        let own = owners(1000, 7);
        let sched = schedule_chunked(3, &own, 0.2, 4).unwrap();
        assert_eq!(sched.len(), 4);
        let del = deleted(&sched);
        assert_eq!(del.len(), 800);
        assert_eq!(del.iter().collect::<BTreeSet<_>>().len(), 800);
        for round in &sched {
            assert_eq!(round.iter().map(|e| e.deletes.len()).sum::<usize>(), 200);
            for ev in round {
                assert!(ev.deletes.iter().all(|id| own[id] == ev.client));
            }
        }
    }

    #[test]
    fn chunked_edges() {
        let own = owners(10, 2);
        assert_eq!(deleted(&schedule_chunked(1, &own, 1.0, 1).unwrap()).len(), 10);
        assert!(schedule_chunked(1, &own, 0.2, 0).unwrap().is_empty());
        assert!(schedule_chunked(1, &own, 0.5, 3).is_err());
    }

    #[test]
    fn burst_and_addback() {
        let own = owners(300, 5);
        let burst = schedule_burst(2, &own, 200).unwrap();
        assert_eq!(burst.len(), 200);
        assert!(burst.iter().all(|r| r.len() == 1 && r[0].deletes.len() == 1));
        let back = schedule_addback(&burst);
        assert_eq!(back.len(), 200);
        assert_eq!(back[0][0].adds, burst[199][0].deletes);
        let removed: BTreeSet<_> = deleted(&burst).into_iter().collect();
        let restored: BTreeSet<_> = back.iter().flatten().flat_map(|e| e.adds.iter().copied()).collect();
        assert_eq!(removed, restored);
        assert!(schedule_burst(2, &own, 0).unwrap().is_empty());
        assert!(schedule_burst(2, &own, 301).is_err());
    }

    #[test]
    fn interleaved_final_set() {
        let universe: Vec<SampleId> = (0..200).map(SampleId).collect();
        let gone: Vec<SampleId> = (0..200).step_by(3).map(SampleId).collect();
        let (own, sched) = schedule_interleaved(5, &universe, &gone, 4, 6).unwrap();
        let mut live = BTreeSet::new();
        for round in &sched {
            for ev in round {
                for id in &ev.adds {
                    assert_eq!(own[id], ev.client);
                    assert!(live.insert(*id));
                }
            }
            for ev in round {
                for id in &ev.deletes {
                    assert!(live.remove(id));
                }
            }
        }
        let expect: BTreeSet<_> = universe.iter().filter(|id| id.0 % 3 != 0).copied().collect();
        assert_eq!(live, expect);
    }
}
