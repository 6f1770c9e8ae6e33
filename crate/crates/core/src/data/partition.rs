//! Non-IID client partitioning by per-class Dirichlet label skew.
//!
//! For every class the rows are shuffled, a proportion vector
//! `p ~ Dirichlet(gamma, ..., gamma)` is drawn, and the class is cut into
//! client chunks whose sizes follow `p` (largest-remainder rounding). Small
//! `gamma` concentrates each class on few clients; large `gamma` approaches
//! an IID split.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::Gamma;
use serde::{Deserialize, Serialize};

use super::class_counts;
use crate::error::{Error, Result};
use crate::seed::{self, Purpose};

/// Assignment of training-row indices to clients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionPlan {
    /// `shares[i]` lists the training rows owned by client `i`, ascending.
    pub shares: Vec<Vec<usize>>,
    pub gamma: f64,
    pub seed: u64,
}

impl PartitionPlan {
    pub fn clients(&self) -> usize {
        self.shares.len()
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.shares.iter().map(Vec::len).collect()
    }

    /// Checks disjointness, exact coverage of `0..rows` and non-empty shares.
    pub fn validate(&self, rows: usize) -> Result<()> {
        let mut owner = vec![usize::MAX; rows];
        for (client, share) in self.shares.iter().enumerate() {
            if share.is_empty() {
                return Err(Error::Partition(format!("client {client} owns no rows")));
            }
            for &r in share {
                if r >= rows {
                    return Err(Error::Partition(format!("client {client} owns row {r} of {rows}")));
                }
                if owner[r] != usize::MAX {
                    return Err(Error::Partition(format!(
                        "row {r} owned by clients {} and {client}",
                        owner[r]
                    )));
                }
                owner[r] = client;
            }
        }
        if let Some(r) = owner.iter().position(|&o| o == usize::MAX) {
            return Err(Error::Partition(format!("row {r} is owned by no client")));
        }
        Ok(())
    }
}

/// Integer counts summing to `total` proportional to `weights`
/// (largest-remainder rounding, ties to the lower index).
pub(crate) fn apportion(weights: &[f64], total: usize) -> Vec<usize> {
    let sum: f64 = weights.iter().sum();
    let quotas: Vec<f64> = if sum > 0.0 && sum.is_finite() {
        weights.iter().map(|w| w / sum * total as f64).collect()
    } else {
        vec![total as f64 / weights.len() as f64; weights.len()]
    };
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &i in order.iter().take(total.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    counts
}

pub fn partition_non_iid(labels: &[usize], num_classes: usize, clients: usize, gamma: f64, seed: u64) -> Result<PartitionPlan> {
    if clients == 0 {
        return Err(Error::validation("at least one client is required"));
    }
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::validation(format!("concentration {gamma} must be positive and finite")));
    }
    if clients > labels.len() {
        return Err(Error::Partition(format!(
            "{clients} clients but only {} training rows",
            labels.len()
        )));
    }
    let counts = class_counts(labels, num_classes);
    if let Some(k) = counts.iter().position(|&n| n == 0) {
        return Err(Error::Partition(format!("class {k} has no training rows")));
    }
    let dist = Gamma::new(gamma, 1.0).map_err(|e| Error::validation(e.to_string()))?;

    let mut shares = vec![Vec::new(); clients];
    for k in 0..num_classes {
        let mut rng = seed::rng(seed::derive(seed, Purpose::Partition, 0, k as u64));
        let mut rows: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == k).collect();
        rows.shuffle(&mut rng);
        let weights: Vec<f64> = (0..clients).map(|_| rng.sample(dist)).collect();
        let mut start = 0;
        for (share, n) in shares.iter_mut().zip(apportion(&weights, rows.len())) {
            share.extend_from_slice(&rows[start..start + n]);
            start += n;
        }
    }

    // Repair: each empty client takes one row from the currently largest one.
    while let Some(empty) = shares.iter().position(Vec::is_empty) {
        let donor = (0..clients)
            .max_by(|&a, &b| shares[a].len().cmp(&shares[b].len()).then(b.cmp(&a)))
            .expect("clients >= 1");
        let row = shares[donor].pop().expect("donor holds at least two rows");
        shares[empty].push(row);
    }
    for share in &mut shares {
        share.sort_unstable();
    }
    Ok(PartitionPlan { shares, gamma, seed })
}
