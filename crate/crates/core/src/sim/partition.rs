//! Non-IID client partitions.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Gamma};

use super::{substream, Stream};
use crate::client::SampleId;
use crate::error::{Error, Result};

/// Per-class client proportions drawn from `Dirichlet(α, …, α)`.
///
/// `classes[i]` is the class of `ids[i]`. Each class's ids are shuffled and
/// cut at the cumulative proportions, so every id lands on exactly one
/// client. Small `α` may leave clients empty.
pub fn dirichlet_partition(
    seed: u64,
    ids: &[SampleId],
    classes: &[usize],
    clients: usize,
    alpha: f64,
) -> Result<Vec<Vec<SampleId>>> {
    if clients == 0 {
        return Err(Error::InvalidArgument("partition needs at least one client".into()));
    }
    if ids.len() != classes.len() {
        return Err(Error::InvalidArgument("ids and classes differ in length".into()));
    }
    let gamma = Gamma::new(alpha, 1.0)
        .map_err(|_| Error::InvalidArgument(format!("alpha must be positive, got {alpha}")))?;
    let mut rng = substream(seed, Stream::Partition);

    let n_classes = classes.iter().max().map_or(0, |m| m + 1);
    let mut by_class: Vec<Vec<SampleId>> = vec![Vec::new(); n_classes];
    for (&id, &k) in ids.iter().zip(classes) {
        by_class[k].push(id);
    }

    let mut out = vec![Vec::new(); clients];
    for mut members in by_class {
        members.sort_unstable();
        members.shuffle(&mut rng);
        let draws: Vec<f64> = (0..clients).map(|_| gamma.sample(&mut rng)).collect();
        let total: f64 = draws.iter().sum();
        if !total.is_finite() || total <= 0.0 {
            // Every draw underflowed; the class goes to a single client.
            let k = rng.random_range(0..clients);
            out[k].extend(members);
            continue;
        }
        let m = members.len();
        let mut start = 0;
        let mut acc = 0.0;
        for (k, w) in draws.iter().enumerate() {
            acc += w / total;
            let end = if k + 1 == clients {
                m
            } else {
                ((acc * m as f64).round() as usize).clamp(start, m)
            };
            out[k].extend_from_slice(&members[start..end]);
            start = end;
        }
    }
    out.iter_mut().for_each(|v| v.sort_unstable());
    Ok(out)
}

/// Writer-style grouping: ids are cut into `groups` contiguous blocks and
/// block `g` goes to client `g mod clients`.
pub fn grouped_partition(ids: &[SampleId], clients: usize, groups: usize) -> Result<Vec<Vec<SampleId>>> {
    if clients == 0 || groups == 0 {
        return Err(Error::InvalidArgument("clients and groups must be positive".into()));
    }
    let mut sorted = ids.to_vec();
    sorted.sort_unstable();
    let n = sorted.len();
    let mut out = vec![Vec::new(); clients];
    for (i, id) in sorted.into_iter().enumerate() {
        let g = i * groups / n.max(1);
        out[g % clients].push(id);
    }
    Ok(out)
}
