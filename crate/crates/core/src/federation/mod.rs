//! The hierarchical protocol.
//!
//! Every round the server broadcasts the global model, each client trains on
//! its own rows, each cluster head averages its members weighted by sample
//! count, and the server averages the cluster models weighted by cluster
//! sample count. Substituting one average into the other shows the two-level
//! scheme equals flat FedAvg over all clients; the tests check that
//! identity numerically.

mod aggregate;
mod round;
mod topology;

pub use aggregate::{aggregate_inter_cluster, aggregate_intra_cluster, weighted_average};
pub use round::{
    local_train, run_round, run_training, ClientLog, ClientState, ClusterLog, LocalTrainingConfig, LogRecord,
    RoundLog, RoundOutput, TrainingOutcome,
};
pub use topology::{select_cluster_head, Cluster, ClusterTopology};
