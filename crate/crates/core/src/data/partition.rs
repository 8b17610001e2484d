use rand::seq::SliceRandom;

use super::Dataset;
use crate::error::{Error, Result};
use crate::seed;

/// Disjoint example indices per client.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartitionPlan {
    assignments: Vec<Vec<usize>>,
    /// Examples left out because they did not fill a whole shard.
    dropped: usize,
}

impl PartitionPlan {
    pub fn new(assignments: Vec<Vec<usize>>) -> Result<Self> {
        if assignments.is_empty() {
            return Err(Error::Config("partition has no clients".into()));
        }
        if let Some(m) = assignments.iter().position(Vec::is_empty) {
            return Err(Error::Config(format!("client {m} has no examples")));
        }
        let mut seen = std::collections::HashSet::new();
        for (m, a) in assignments.iter().enumerate() {
            for &i in a {
                if !seen.insert(i) {
                    return Err(Error::Config(format!("example {i} assigned twice (client {m})")));
                }
            }
        }
        Ok(PartitionPlan { assignments, dropped: 0 })
    }

    pub fn client_count(&self) -> usize {
        self.assignments.len()
    }

    pub fn client(&self, m: usize) -> &[usize] {
        &self.assignments[m]
    }

    pub fn assignments(&self) -> &[Vec<usize>] {
        &self.assignments
    }

    pub fn sample_counts(&self) -> Vec<usize> {
        self.assignments.iter().map(Vec::len).collect()
    }

    pub fn dropped(&self) -> usize {
        self.dropped
    }

    /// `|D_m| / sum_c |D_c|` per client.
    pub fn coefficients(&self) -> Vec<f64> {
        let total: usize = self.assignments.iter().map(Vec::len).sum();
        self.assignments
            .iter()
            .map(|a| a.len() as f64 / total as f64)
            .collect()
    }
}

/// Seeded shuffle split into `clients` parts whose sizes differ by at most one.
pub fn partition_iid(data: &Dataset, clients: usize, seed: u64) -> Result<PartitionPlan> {
    if clients == 0 {
        return Err(Error::Config("need at least one client".into()));
    }
    if clients > data.len() {
        return Err(Error::Config(format!(
            "{clients} clients but only {} examples",
            data.len()
        )));
    }
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(&mut seed::rng(seed));
    let base = data.len() / clients;
    let extra = data.len() % clients;
    let mut rest = order.as_slice();
    let mut assignments = Vec::with_capacity(clients);
    for m in 0..clients {
        let (head, tail) = rest.split_at(base + usize::from(m < extra));
        assignments.push(head.to_vec());
        rest = tail;
    }
    PartitionPlan::new(assignments)
}

/// Label-sorted shards: the examples are stably sorted by label and cut into
/// `clients * shards_per_client` contiguous equal shards; a seeded
/// permutation deals `shards_per_client` shards to each client. The
/// `len % shard_count` examples at the end of the sorted order are dropped.
pub fn partition_label_shards(
    data: &Dataset,
    clients: usize,
    shards_per_client: usize,
    seed: u64,
) -> Result<PartitionPlan> {
    if clients == 0 || shards_per_client == 0 {
        return Err(Error::Config("need at least one client and one shard per client".into()));
    }
    let shard_count = clients * shards_per_client;
    let shard_size = data.len() / shard_count;
    if shard_size == 0 {
        return Err(Error::Config(format!(
            "{} examples cannot form {shard_count} shards",
            data.len()
        )));
    }
    let mut sorted: Vec<usize> = (0..data.len()).collect();
    sorted.sort_by_key(|&i| data.label(i));

    let mut deal: Vec<usize> = (0..shard_count).collect();
    deal.shuffle(&mut seed::rng(seed));
    let assignments = deal
        .chunks(shards_per_client)
        .map(|shards| {
            shards
                .iter()
                .flat_map(|&s| sorted[s * shard_size..(s + 1) * shard_size].iter().copied())
                .collect()
        })
        .collect();
    let mut plan = PartitionPlan::new(assignments)?;
    plan.dropped = data.len() - shard_count * shard_size;
    Ok(plan)
}
