//! Local training, one protocol round, and the multi-round driver.

use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::aggregate::{aggregate_inter_cluster, aggregate_intra_cluster};
use super::topology::{select_cluster_head, ClusterTopology};
use crate::data::{FeatureMatrix, PartitionPlan};
use crate::error::{Error, Result};
use crate::metrics::{evaluate, Evaluation};
use crate::nn::{loss_and_gradients, HybridLossConfig, Mode, ModelParameters, ModelSpec, OptimizerConfig, OptimizerState};
use crate::seed::{self, Purpose};

/// Per-round hyperparameters shared by every client.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalTrainingConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerConfig,
    pub loss: HybridLossConfig,
}

impl Default for LocalTrainingConfig {
    fn default() -> Self {
        Self {
            epochs: 5,
            batch_size: 128,
            optimizer: OptimizerConfig::default(),
            loss: HybridLossConfig::default(),
        }
    }
}

impl LocalTrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::validation("batch size must be >= 1"));
        }
        self.optimizer.validate()?;
        self.loss.validate()
    }
}

/// One participant: its rows, its current model and its optimizer.
#[derive(Debug, Clone)]
pub struct ClientState {
    pub client_id: usize,
    pub cluster_id: usize,
    /// Rows of the training matrix owned by this client.
    pub indices: Vec<usize>,
    pub params: ModelParameters,
    pub optimizer: OptimizerState,
    pub epochs_run: usize,
}

impl ClientState {
    /// A client holding `params` with fresh optimizer moments.
    pub fn new(
        client_id: usize,
        cluster_id: usize,
        indices: Vec<usize>,
        params: ModelParameters,
        optimizer: OptimizerConfig,
    ) -> Result<Self> {
        let optimizer = OptimizerState::new(optimizer, &params)?;
        Ok(Self {
            client_id,
            cluster_id,
            indices,
            params,
            optimizer,
            epochs_run: 0,
        })
    }
}

/// Runs `cfg.epochs` shuffled mini-batch passes over the client's rows and
/// returns the sample-weighted mean loss of each epoch.
///
/// Shuffle order, dropout masks and Gumbel noise all derive from
/// `(seed, round, client_id)`, so the result does not depend on the order
/// in which clients are trained.
pub fn local_train(
    spec: &ModelSpec,
    client: &mut ClientState,
    data: &FeatureMatrix,
    cfg: &LocalTrainingConfig,
    seed: u64,
    round: u64,
) -> Result<Vec<f64>> {
    if client.indices.is_empty() {
        return Err(Error::protocol(
            "local training",
            format!("client {} holds no rows", client.client_id),
        ));
    }
    cfg.validate()?;
    let id = client.client_id as u64;
    let shuffle_seed = seed::derive(seed, Purpose::Shuffle, round, id);
    let dropout_seed = seed::derive(seed, Purpose::Dropout, round, id);
    let gumbel_seed = seed::derive(seed, Purpose::Gumbel, round, id);

    let mut order = client.indices.clone();
    let mut losses = Vec::with_capacity(cfg.epochs);
    let mut batch_no = 0u64;
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut seed::rng(seed::child(shuffle_seed, epoch as u64)));
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch = data.select(chunk);
            let mode = Mode::Train {
                dropout_seed: seed::child(dropout_seed, batch_no),
            };
            let (loss, grads) = loss_and_gradients(
                spec,
                &client.params,
                &batch.x,
                &batch.y,
                &cfg.loss,
                mode,
                seed::child(gumbel_seed, batch_no),
            )?;
            client.optimizer.step(&mut client.params, &grads)?;
            total += loss * chunk.len() as f64;
            batch_no += 1;
        }
        losses.push(total / order.len() as f64);
        client.epochs_run += 1;
    }
    Ok(losses)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientLog {
    pub client_id: usize,
    pub cluster_id: usize,
    pub samples: usize,
    pub epoch_losses: Vec<f64>,
    /// Checksum of the client's parameters after local training.
    pub checksum: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterLog {
    pub cluster_id: usize,
    pub head: usize,
    pub samples: usize,
    pub checksum: String,
}

/// Audit record of one round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundLog {
    pub round: u64,
    pub clients: Vec<ClientLog>,
    pub clusters: Vec<ClusterLog>,
    pub global_checksum: String,
    /// Simulated seconds for the round, filled in by callers that run the
    /// latency model.
    pub simulated_s: Option<f64>,
    /// Measured wall-clock seconds. Never persisted: reports must stay
    /// byte-identical across runs.
    #[serde(skip)]
    pub wall_clock_s: f64,
}

/// One line of the line-delimited round log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub round: u64,
    pub client_id: Option<usize>,
    pub epoch: Option<usize>,
    pub loss: f64,
    pub cluster_id: Option<usize>,
    pub checksum: String,
}

impl RoundLog {
    /// Mean final-epoch loss over clients, weighted by samples.
    pub fn mean_loss(&self) -> f64 {
        let (mut sum, mut n) = (0.0, 0usize);
        for c in &self.clients {
            if let Some(&l) = c.epoch_losses.last() {
                sum += l * c.samples as f64;
                n += c.samples;
            }
        }
        if n == 0 { 0.0 } else { sum / n as f64 }
    }

    /// Flattens the log: one record per client epoch, then one per round
    /// with only the global checksum.
    pub fn records(&self) -> Vec<LogRecord> {
        let mut out = Vec::new();
        for c in &self.clients {
            for (epoch, &loss) in c.epoch_losses.iter().enumerate() {
                out.push(LogRecord {
                    round: self.round,
                    client_id: Some(c.client_id),
                    epoch: Some(epoch),
                    loss,
                    cluster_id: Some(c.cluster_id),
                    checksum: c.checksum.clone(),
                });
            }
        }
        out.push(LogRecord {
            round: self.round,
            client_id: None,
            epoch: None,
            loss: self.mean_loss(),
            cluster_id: None,
            checksum: self.global_checksum.clone(),
        });
        out
    }

    pub fn to_lines(&self) -> String {
        self.records()
            .iter()
            .map(|r| serde_json::to_string(r).expect("plain data serializes") + "\n")
            .collect()
    }
}

/// Models left at the end of a round.
#[derive(Debug, Clone)]
pub struct RoundOutput {
    pub global: ModelParameters,
    pub clusters: Vec<ModelParameters>,
    pub log: RoundLog,
}

/// Broadcast, local training, aggregation at cluster heads, aggregation at
/// the server.
#[allow(clippy::too_many_arguments)]
pub fn run_round(
    spec: &ModelSpec,
    global: &ModelParameters,
    topology: &ClusterTopology,
    plan: &PartitionPlan,
    train: &FeatureMatrix,
    cfg: &LocalTrainingConfig,
    seed: u64,
    round: u64,
) -> Result<RoundOutput> {
    let started = Instant::now();
    topology.validate().map_err(|e| Error::protocol("broadcast", e))?;
    topology.check_plan(plan).map_err(|e| Error::protocol("broadcast", e))?;

    let mut clients = Vec::with_capacity(topology.clients());
    let mut cluster_models = Vec::with_capacity(topology.clusters.len());
    let mut cluster_logs = Vec::with_capacity(topology.clusters.len());
    for cluster in &topology.clusters {
        let mut trained = Vec::with_capacity(cluster.members.len());
        for &id in &cluster.members {
            // optimizer moments are reset after every broadcast
            let mut state = ClientState::new(id, cluster.id, plan.shares[id].clone(), global.clone(), cfg.optimizer)
                .map_err(|e| Error::protocol("broadcast", e))?;
            let losses = local_train(spec, &mut state, train, cfg, seed, round).map_err(|e| match e {
                Error::Protocol { .. } => e,
                other => Error::protocol(format!("local training of client {id}"), other),
            })?;
            clients.push(ClientLog {
                client_id: id,
                cluster_id: cluster.id,
                samples: state.indices.len(),
                epoch_losses: losses,
                checksum: state.params.checksum(),
            });
            trained.push((state.params, state.indices.len()));
        }
        let members: Vec<(&ModelParameters, usize)> = trained.iter().map(|(p, n)| (p, *n)).collect();
        let model = aggregate_intra_cluster(&members)
            .map_err(|e| Error::protocol(format!("intra-cluster aggregation of cluster {}", cluster.id), e))?;
        let samples = members.iter().map(|&(_, n)| n).sum();
        cluster_logs.push(ClusterLog {
            cluster_id: cluster.id,
            head: select_cluster_head(cluster),
            samples,
            checksum: model.checksum(),
        });
        cluster_models.push((model, samples));
    }
    let refs: Vec<(&ModelParameters, usize)> = cluster_models.iter().map(|(p, n)| (p, *n)).collect();
    let mut next = aggregate_inter_cluster(&refs).map_err(|e| Error::protocol("inter-cluster aggregation", e))?;
    next.round = round + 1;
    let log = RoundLog {
        round,
        clients,
        clusters: cluster_logs,
        global_checksum: next.checksum(),
        simulated_s: None,
        wall_clock_s: started.elapsed().as_secs_f64(),
    };
    Ok(RoundOutput {
        global: next,
        clusters: cluster_models.into_iter().map(|(p, _)| p).collect(),
        log,
    })
}

/// Result of a complete training run.
#[derive(Debug, Clone)]
pub struct TrainingOutcome {
    pub global: ModelParameters,
    /// Cluster models of the final round, in topology order.
    pub cluster_models: Vec<ModelParameters>,
    pub logs: Vec<RoundLog>,
    /// Test-set evaluation of the global model after each round.
    pub evaluations: Vec<Evaluation>,
}

/// Iterates [`run_round`] from `initial` and evaluates the global model on
/// `test` after every round.
#[allow(clippy::too_many_arguments)]
pub fn run_training(
    spec: &ModelSpec,
    initial: &ModelParameters,
    topology: &ClusterTopology,
    plan: &PartitionPlan,
    train: &FeatureMatrix,
    test: &FeatureMatrix,
    cfg: &LocalTrainingConfig,
    rounds: usize,
    seed: u64,
) -> Result<TrainingOutcome> {
    if rounds == 0 {
        return Err(Error::validation("at least one round is required"));
    }
    let mut global = initial.clone();
    let mut cluster_models = Vec::new();
    let mut logs = Vec::with_capacity(rounds);
    let mut evaluations = Vec::with_capacity(rounds);
    for round in 0..rounds as u64 {
        let out = run_round(spec, &global, topology, plan, train, cfg, seed, round)?;
        evaluations.push(evaluate(spec, &out.global, test).map_err(|e| Error::protocol("evaluation", e))?);
        global = out.global;
        cluster_models = out.clusters;
        logs.push(out.log);
    }
    Ok(TrainingOutcome {
        global,
        cluster_models,
        logs,
        evaluations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, partition_non_iid, split_train_test, SyntheticSpec};
    use crate::latency::{HardwareProfile, LinkProfile};
    use crate::federation::Cluster;
    use crate::nn::GumbelMode;

    fn blobs(classes: usize, rows: usize) -> FeatureMatrix {
        generate_synthetic(
            &SyntheticSpec {
                num_classes: classes,
                features: 6,
                rows,
                separation: 4.0,
            },
            5,
        )
        .unwrap()
    }

    fn spec(classes: usize) -> ModelSpec {
        ModelSpec::lightweight(6, classes, 0.1)
    }

    fn one_client(data: &FeatureMatrix, lr: f64) -> (ClientState, ModelParameters) {
        let params = ModelParameters::init(&spec(data.num_classes), 1).unwrap();
        let opt = OptimizerConfig {
            learning_rate: lr,
            ..OptimizerConfig::default()
        };
        (ClientState::new(0, 0, (0..data.rows()).collect(), params.clone(), opt).unwrap(), params)
    }

    fn single_cluster(members: Vec<usize>) -> ClusterTopology {
        ClusterTopology {
            clusters: vec![Cluster {
                id: 0,
                hardware: HardwareProfile::clock_scaled("board", 1.2, 1.0, 200.0),
                link: LinkProfile::uplink(12.5),
                members,
            }],
        }
    }

    #[test]
    fn zero_epochs_leave_parameters_unchanged() {
        let data = blobs(2, 40);
        let (mut c, before) = one_client(&data, 1e-3);
        let cfg = LocalTrainingConfig {
            epochs: 0,
            ..Default::default()
        };
        assert!(local_train(&spec(2), &mut c, &data, &cfg, 1, 0).unwrap().is_empty());
        assert_eq!(c.params, before);
    }

    #[test]
    fn zero_learning_rate_leaves_parameters_unchanged() {
        let data = blobs(2, 40);
        let (mut c, before) = one_client(&data, 0.0);
        let cfg = LocalTrainingConfig {
            epochs: 3,
            batch_size: 8,
            optimizer: c.optimizer.config,
            ..Default::default()
        };
        local_train(&spec(2), &mut c, &data, &cfg, 1, 0).unwrap();
        assert_eq!(c.params, before);
    }

    #[test]
    fn separable_data_loss_decreases() {
        let data = blobs(2, 200);
        let (mut c, _) = one_client(&data, 1e-2);
        let cfg = LocalTrainingConfig {
            epochs: 5,
            batch_size: 32,
            optimizer: c.optimizer.config,
            loss: HybridLossConfig {
                gumbel_mode: GumbelMode::Stochastic,
                ..Default::default()
            },
        };
        let losses = local_train(&spec(2), &mut c, &data, &cfg, 3, 0).unwrap();
        assert!(losses[4] < losses[0], "{losses:?}");
    }

    #[test]
    fn empty_client_is_a_protocol_error() {
        let data = blobs(2, 20);
        let (mut c, _) = one_client(&data, 1e-3);
        c.indices.clear();
        let err = local_train(&spec(2), &mut c, &data, &LocalTrainingConfig::default(), 0, 0).unwrap_err();
        assert!(matches!(err, Error::Protocol { .. }));
    }

    #[test]
    fn pass_through_round() {
        let data = blobs(2, 30);
        let params = ModelParameters::init(&spec(2), 9).unwrap();
        let plan = partition_non_iid(&data.y, 2, 1, 0.6, 0).unwrap();
        let cfg = LocalTrainingConfig {
            epochs: 0,
            ..Default::default()
        };
        let out = run_round(&spec(2), &params, &single_cluster(vec![0]), &plan, &data, &cfg, 0, 0).unwrap();
        assert_eq!(out.global.flat_values(), params.flat_values());
        assert_eq!(out.global.round, 1);
    }

    #[test]
    fn identical_clients_in_two_clusters() {
        // Seeds are keyed by client id, so remove every seeded effect: no
        // dropout, zero Gumbel noise, one full batch per epoch. Row order
        // inside the batch still differs, so equality holds up to float
        // summation order.
        let data = blobs(2, 40);
        let spec = ModelSpec::lightweight(6, 2, 0.0);
        let params = ModelParameters::init(&spec, 9).unwrap();
        let all: Vec<usize> = (0..data.rows()).collect();
        let plan = PartitionPlan {
            shares: vec![all.clone(), all],
            gamma: 1.0,
            seed: 0,
        };
        let mut topology = single_cluster(vec![0]);
        let mut second = topology.clusters[0].clone();
        second.id = 1;
        second.members = vec![1];
        topology.clusters.push(second);
        let cfg = LocalTrainingConfig {
            epochs: 2,
            batch_size: 64,
            loss: HybridLossConfig {
                gumbel_mode: GumbelMode::Deterministic,
                ..Default::default()
            },
            ..Default::default()
        };
        let out = run_round(&spec, &params, &topology, &plan, &data, &cfg, 4, 0).unwrap();
        assert!(out.clusters[0].max_abs_diff(&out.clusters[1]) <= 1e-12);
        assert!(out.global.max_abs_diff(&out.clusters[0]) <= 1e-12);
        assert!(out.global.max_abs_diff(&params) > 0.0);
    }

    #[test]
    fn testbed_round_equals_flat_average_of_clients() {
        let data = blobs(4, 400);
        let (train, _) = split_train_test(&data, 0.8, 1).unwrap();
        let topology = ClusterTopology::pi_testbed(200.0, 12.5);
        let plan = partition_non_iid(&train.y, 4, 10, 0.6, 2).unwrap();
        let params = ModelParameters::init(&spec(4), 9).unwrap();
        let cfg = LocalTrainingConfig {
            epochs: 1,
            batch_size: 32,
            ..Default::default()
        };
        let out = run_round(&spec(4), &params, &topology, &plan, &train, &cfg, 7, 0).unwrap();

        // retrain every client independently and average flat
        let mut flat = Vec::new();
        for cluster in &topology.clusters {
            for &id in &cluster.members {
                let mut c = ClientState::new(id, cluster.id, plan.shares[id].clone(), params.clone(), cfg.optimizer).unwrap();
                local_train(&spec(4), &mut c, &train, &cfg, 7, 0).unwrap();
                flat.push((c.params, plan.shares[id].len()));
            }
        }
        let total: usize = flat.iter().map(|(_, n)| n).sum();
        let oracle: Vec<f64> = (0..params.param_count())
            .map(|j| flat.iter().map(|(p, n)| *n as f64 / total as f64 * p.flat_values()[j]).sum())
            .collect();
        for (g, o) in out.global.flat_values().iter().zip(&oracle) {
            assert!((g - o).abs() <= 1e-12);
        }
        assert_eq!(out.log.clients.len(), 10);
        assert_eq!(out.log.clusters.iter().map(|c| c.head).collect::<Vec<_>>(), vec![0, 2, 5]);
    }

    #[test]
    fn training_is_deterministic_and_composes() {
        let data = blobs(3, 240);
        let (train, test) = split_train_test(&data, 0.8, 1).unwrap();
        let topology = ClusterTopology::pi_testbed(200.0, 12.5);
        let plan = partition_non_iid(&train.y, 3, 10, 0.6, 2).unwrap();
        let params = ModelParameters::init(&spec(3), 9).unwrap();
        let cfg = LocalTrainingConfig {
            epochs: 1,
            batch_size: 16,
            ..Default::default()
        };
        let a = run_training(&spec(3), &params, &topology, &plan, &train, &test, &cfg, 2, 11).unwrap();
        let b = run_training(&spec(3), &params, &topology, &plan, &train, &test, &cfg, 2, 11).unwrap();
        assert_eq!(a.global, b.global);
        assert_eq!(a.logs.iter().map(RoundLog::to_lines).collect::<Vec<_>>(), b.logs.iter().map(RoundLog::to_lines).collect::<Vec<_>>());

        let one = run_training(&spec(3), &params, &topology, &plan, &train, &test, &cfg, 1, 11).unwrap();
        let round = run_round(&spec(3), &params, &topology, &plan, &train, &cfg, 11, 0).unwrap();
        assert_eq!(one.global, round.global);
        assert_eq!(one.evaluations, vec![evaluate(&spec(3), &round.global, &test).unwrap()]);
    }

    #[test]
    fn log_lines_have_stable_fields() {
        let log = RoundLog {
            round: 2,
            clients: vec![ClientLog {
                client_id: 1,
                cluster_id: 0,
                samples: 4,
                epoch_losses: vec![0.5],
                checksum: "ab".into(),
            }],
            clusters: vec![],
            global_checksum: "cd".into(),
            simulated_s: None,
            wall_clock_s: 3.0,
        };
        let lines = log.to_lines();
        let first: serde_json::Value = serde_json::from_str(lines.lines().next().unwrap()).unwrap();
        for key in ["round", "client_id", "epoch", "loss", "cluster_id", "checksum"] {
            assert!(first.get(key).is_some(), "{key}");
        }
        assert!(!lines.contains("wall"));
    }
}
