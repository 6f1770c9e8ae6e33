use serde::{Deserialize, Serialize};

use crate::data::partition::apportion;
use crate::data::PartitionPlan;
use crate::error::{Error, Result};
use crate::latency::{HardwareProfile, LinkProfile};

/// A group of clients on identical hardware that aggregates locally first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Cluster {
    pub id: usize,
    pub hardware: HardwareProfile,
    pub link: LinkProfile,
    /// Client ids, each in `0..topology.clients()`.
    pub members: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterTopology {
    pub clusters: Vec<Cluster>,
}

/// Deterministic head choice: the member with the smallest client id.
pub fn select_cluster_head(cluster: &Cluster) -> usize {
    *cluster.members.iter().min().expect("validated clusters are non-empty")
}

impl ClusterTopology {
    /// Three clusters of Raspberry Pi boards with 2, 3 and 5 clients.
    ///
    /// Rates scale with CPU clock from `base_rate` samples/s on the 1.2 GHz
    /// board; every uplink runs at `bandwidth_mbps`.
    pub fn pi_testbed(base_rate: f64, bandwidth_mbps: f64) -> Self {
        let boards = [
            ("Raspberry Pi 3 Model B", 1.2, 1.0, 2),
            ("Raspberry Pi 4 Model B", 1.5, 4.0, 3),
            ("Raspberry Pi 400", 1.8, 8.0, 5),
        ];
        let mut next = 0;
        let clusters = boards
            .iter()
            .enumerate()
            .map(|(id, &(name, ghz, ram, n))| {
                let members = (next..next + n).collect();
                next += n;
                Cluster {
                    id,
                    hardware: HardwareProfile::clock_scaled(name, ghz, ram, base_rate),
                    link: LinkProfile::uplink(bandwidth_mbps),
                    members,
                }
            })
            .collect();
        ClusterTopology { clusters }
    }

    pub fn clients(&self) -> usize {
        self.clusters.iter().map(|c| c.members.len()).sum()
    }

    /// Every cluster non-empty, ids unique, members exactly `0..N`.
    pub fn validate(&self) -> Result<()> {
        if self.clusters.is_empty() {
            return Err(Error::validation("topology has no clusters"));
        }
        let n = self.clients();
        let mut seen = vec![false; n];
        for (pos, c) in self.clusters.iter().enumerate() {
            if c.members.is_empty() {
                return Err(Error::validation(format!("cluster {} has no clients", c.id)));
            }
            if self.clusters[..pos].iter().any(|o| o.id == c.id) {
                return Err(Error::validation(format!("duplicate cluster id {}", c.id)));
            }
            c.hardware.validate()?;
            c.link.validate()?;
            for &m in &c.members {
                if m >= n || seen[m] {
                    return Err(Error::validation(format!(
                        "client {m} is out of range or in more than one cluster"
                    )));
                }
                seen[m] = true;
            }
        }
        Ok(())
    }

    /// Cluster position of each client.
    pub fn cluster_index_of(&self) -> Vec<usize> {
        let mut out = vec![0; self.clients()];
        for (ci, c) in self.clusters.iter().enumerate() {
            for &m in &c.members {
                out[m] = ci;
            }
        }
        out
    }

    /// Checks that `plan` provides one share per client.
    pub fn check_plan(&self, plan: &PartitionPlan) -> Result<()> {
        if plan.clients() != self.clients() {
            return Err(Error::validation(format!(
                "partition has {} clients but the topology has {}",
                plan.clients(),
                self.clients()
            )));
        }
        Ok(())
    }

    /// Test rows for each cluster, in proportion to the cluster's share of
    /// every class among the training rows (largest remainder, rows taken in
    /// index order). Used to score cluster models on "their" traffic mix.
    pub fn cluster_test_shares(
        &self,
        plan: &PartitionPlan,
        train_labels: &[usize],
        test_labels: &[usize],
        num_classes: usize,
    ) -> Vec<Vec<usize>> {
        let mut shares = vec![Vec::new(); self.clusters.len()];
        for k in 0..num_classes {
            let weights: Vec<f64> = self
                .clusters
                .iter()
                .map(|c| {
                    c.members
                        .iter()
                        .flat_map(|&m| &plan.shares[m])
                        .filter(|&&r| train_labels[r] == k)
                        .count() as f64
                })
                .collect();
            let rows: Vec<usize> = (0..test_labels.len()).filter(|&i| test_labels[i] == k).collect();
            let mut start = 0;
            for (share, n) in shares.iter_mut().zip(apportion(&weights, rows.len())) {
                share.extend_from_slice(&rows[start..start + n]);
                start += n;
            }
        }
        for share in &mut shares {
            share.sort_unstable();
        }
        shares
    }

    /// `|D_c|` for each cluster in order.
    pub fn cluster_sizes(&self, plan: &PartitionPlan) -> Vec<usize> {
        self.clusters
            .iter()
            .map(|c| c.members.iter().map(|&m| plan.shares[m].len()).sum())
            .collect()
    }
}
