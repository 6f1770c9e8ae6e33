//! Analytical timing model for training, testing and one full round.
//!
//! Units are fixed: seconds, samples per second, megabits and megabits per
//! second. A model travels as `param_count * 64` bits.
//!
//! ```text
//! T_local(i)  = epochs * D_i / R_i                      per client
//! T_local(c)  = max_i T_local(i)                        straggler
//! T_intra(c)  = N_c * T_local(c)        (literal)   or  T_local(c)  (max)
//! T_comm(c)   = M_c / B_c
//! T_agg       = sum_c M_c / B_server
//! T_update    = P / F_server
//! training    = max_c (T_local + T_intra + T_comm)(c) + T_agg + T_update
//! testing     = sum_c (N_input / F_c + M_test / B_c)           (ms)
//! per round   = sum_c (T_local + T_intra + T_comm)(c)
//! ```
//!
//! The model is purely arithmetic: it never looks at a clock, so reports can
//! be produced for any model size without training anything.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::federation::ClusterTopology;

/// Bits per serialized parameter.
pub const BITS_PER_PARAM: f64 = 64.0;

/// Clock of the slowest reference device; default rates scale from it.
pub const REFERENCE_CLOCK_GHZ: f64 = 1.2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HardwareProfile {
    pub name: String,
    pub cpu_ghz: f64,
    pub ram_gb: f64,
    /// Training throughput, samples per second.
    pub training_rate: f64,
    /// Inference throughput, samples per second.
    pub inference_rate: f64,
}

impl HardwareProfile {
    /// A profile whose rates scale linearly with CPU clock from `base_rate`
    /// at [`REFERENCE_CLOCK_GHZ`].
    pub fn clock_scaled(name: &str, cpu_ghz: f64, ram_gb: f64, base_rate: f64) -> Self {
        let rate = base_rate * cpu_ghz / REFERENCE_CLOCK_GHZ;
        Self {
            name: name.to_owned(),
            cpu_ghz,
            ram_gb,
            training_rate: rate,
            inference_rate: rate,
        }
    }

    pub fn validate(&self) -> Result<()> {
        positive("training rate", self.training_rate)?;
        positive("inference rate", self.inference_rate)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkProfile {
    /// Uplink bandwidth, megabits per second.
    pub bandwidth_mbps: f64,
    /// Payload override in megabits; `None` sends the model itself.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payload_mb: Option<f64>,
}

impl LinkProfile {
    pub fn uplink(bandwidth_mbps: f64) -> Self {
        Self {
            bandwidth_mbps,
            payload_mb: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        positive("bandwidth", self.bandwidth_mbps)?;
        match self.payload_mb {
            Some(m) if !(m >= 0.0 && m.is_finite()) => Err(Error::validation(format!("payload {m} Mb must be >= 0"))),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServerProfile {
    /// Parameters processed per second during the global update.
    pub processing_speed: f64,
    /// Server ingress bandwidth, megabits per second.
    pub bandwidth_mbps: f64,
}

impl Default for ServerProfile {
    fn default() -> Self {
        Self {
            processing_speed: 1e6,
            bandwidth_mbps: 12.5,
        }
    }
}

/// How the intra-cluster aggregation time is formed from the straggler time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggTimeMode {
    /// Member count times the straggler time.
    #[default]
    Literal,
    /// The straggler time alone.
    Max,
}

/// Which client payload represents a cluster on the uplink.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CommMode {
    #[default]
    Average,
    /// The payload of the client holding the most data.
    WorstCase,
}

fn positive(what: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::validation(format!("{what} must be > 0, got {v}")))
    }
}

fn non_negative(what: &str, v: f64) -> Result<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::validation(format!("{what} must be >= 0, got {v}")))
    }
}

/// Model size on the wire, megabits.
pub fn model_payload_mb(param_count: usize) -> f64 {
    param_count as f64 * BITS_PER_PARAM / 1e6
}

pub fn local_training_time(samples: usize, rate: f64, epochs: usize) -> Result<f64> {
    positive("training rate", rate)?;
    Ok(samples as f64 / rate * epochs as f64)
}

pub fn intra_cluster_aggregation_time(client_times: &[f64], n_clients: usize, mode: AggTimeMode) -> Result<f64> {
    if client_times.is_empty() || client_times.len() != n_clients {
        return Err(Error::validation(format!(
            "{} client times for {n_clients} clients",
            client_times.len()
        )));
    }
    for &t in client_times {
        non_negative("client time", t)?;
    }
    let straggler = client_times.iter().copied().fold(0.0, f64::max);
    Ok(match mode {
        AggTimeMode::Literal => n_clients as f64 * straggler,
        AggTimeMode::Max => straggler,
    })
}

pub fn communication_time(payload_mb: f64, bandwidth_mbps: f64) -> Result<f64> {
    positive("bandwidth", bandwidth_mbps)?;
    non_negative("payload", payload_mb)?;
    Ok(payload_mb / bandwidth_mbps)
}

/// Picks the payload that represents a cluster: the mean of its clients'
/// payloads, or the payload of the client holding the most samples.
pub fn cluster_payload(payloads_mb: &[f64], samples: &[usize], mode: CommMode) -> Result<f64> {
    if payloads_mb.is_empty() || payloads_mb.len() != samples.len() {
        return Err(Error::validation("one payload per client is required"));
    }
    Ok(match mode {
        CommMode::Average => payloads_mb.iter().sum::<f64>() / payloads_mb.len() as f64,
        CommMode::WorstCase => {
            // first client among those holding the most samples
            let max = *samples.iter().max().expect("non-empty");
            payloads_mb[samples.iter().position(|&s| s == max).expect("present")]
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ServerTime {
    pub aggregation_s: f64,
    pub update_s: f64,
    pub total_s: f64,
}

pub fn server_time(total_payload_mb: f64, server_bandwidth_mbps: f64, params: usize, processing_speed: f64) -> Result<ServerTime> {
    positive("server bandwidth", server_bandwidth_mbps)?;
    positive("server processing speed", processing_speed)?;
    non_negative("total payload", total_payload_mb)?;
    let aggregation_s = total_payload_mb / server_bandwidth_mbps;
    let update_s = params as f64 / processing_speed;
    Ok(ServerTime {
        aggregation_s,
        update_s,
        total_s: aggregation_s + update_s,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterTiming {
    pub cluster_id: usize,
    pub t_local_s: f64,
    pub t_intra_s: f64,
    pub t_comm_s: f64,
}

impl ClusterTiming {
    pub fn sum(&self) -> f64 {
        self.t_local_s + self.t_intra_s + self.t_comm_s
    }
}

pub fn total_training_time(clusters: &[ClusterTiming], server_total_s: f64) -> Result<f64> {
    if clusters.is_empty() {
        return Err(Error::validation("at least one cluster is required"));
    }
    Ok(clusters.iter().map(ClusterTiming::sum).fold(f64::NEG_INFINITY, f64::max) + server_total_s)
}

pub fn time_per_round(clusters: &[ClusterTiming]) -> Result<f64> {
    if clusters.is_empty() {
        return Err(Error::validation("at least one cluster is required"));
    }
    Ok(clusters.iter().map(ClusterTiming::sum).sum())
}

/// Per-cluster inputs of the testing latency.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestingLoad {
    pub inputs: usize,
    pub inference_rate: f64,
    pub payload_mb: f64,
    pub bandwidth_mbps: f64,
}

/// Testing latency in milliseconds.
pub fn testing_latency(loads: &[TestingLoad]) -> Result<f64> {
    let mut seconds = 0.0;
    for l in loads {
        positive("inference rate", l.inference_rate)?;
        seconds += l.inputs as f64 / l.inference_rate + communication_time(l.payload_mb, l.bandwidth_mbps)?;
    }
    Ok(seconds * 1e3)
}

/// Everything the analysis needs besides the topology.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyInputs {
    /// Training samples per client, indexed by client id.
    pub client_samples: Vec<usize>,
    pub epochs: usize,
    pub param_count: usize,
    pub input_features: usize,
    /// Test inputs sent to each cluster.
    pub test_inputs: usize,
    pub server: ServerProfile,
    pub agg_mode: AggTimeMode,
    pub comm_mode: CommMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingReport {
    pub param_count: usize,
    pub clusters: Vec<ClusterTiming>,
    pub t_server_agg_s: f64,
    pub t_server_update_s: f64,
    pub total_training_s: f64,
    pub testing_latency_ms: f64,
    pub time_per_round_s: f64,
}

/// Evaluates the full model for one topology and model size.
pub fn analyze(topology: &ClusterTopology, inputs: &LatencyInputs) -> Result<TimingReport> {
    topology.validate()?;
    if inputs.client_samples.len() != topology.clients() {
        return Err(Error::validation(format!(
            "{} client sample counts for {} clients",
            inputs.client_samples.len(),
            topology.clients()
        )));
    }
    let model_mb = model_payload_mb(inputs.param_count);
    let test_mb = inputs.input_features as f64 * inputs.test_inputs as f64 * BITS_PER_PARAM / 1e6;

    let mut clusters = Vec::with_capacity(topology.clusters.len());
    let mut uplink_total_mb = 0.0;
    let mut loads = Vec::with_capacity(topology.clusters.len());
    for cluster in &topology.clusters {
        let samples: Vec<usize> = cluster.members.iter().map(|&m| inputs.client_samples[m]).collect();
        let times = samples
            .iter()
            .map(|&s| local_training_time(s, cluster.hardware.training_rate, inputs.epochs))
            .collect::<Result<Vec<_>>>()?;
        let t_local = times.iter().copied().fold(0.0, f64::max);
        let t_intra = intra_cluster_aggregation_time(&times, times.len(), inputs.agg_mode)?;
        let per_client = cluster.link.payload_mb.unwrap_or(model_mb);
        let payload = cluster_payload(&vec![per_client; samples.len()], &samples, inputs.comm_mode)?;
        let t_comm = communication_time(payload, cluster.link.bandwidth_mbps)?;
        uplink_total_mb += payload;
        clusters.push(ClusterTiming {
            cluster_id: cluster.id,
            t_local_s: t_local,
            t_intra_s: t_intra,
            t_comm_s: t_comm,
        });
        loads.push(TestingLoad {
            inputs: inputs.test_inputs,
            inference_rate: cluster.hardware.inference_rate,
            payload_mb: test_mb,
            bandwidth_mbps: cluster.link.bandwidth_mbps,
        });
    }
    let server = server_time(
        uplink_total_mb,
        inputs.server.bandwidth_mbps,
        inputs.param_count,
        inputs.server.processing_speed,
    )?;
    Ok(TimingReport {
        param_count: inputs.param_count,
        total_training_s: total_training_time(&clusters, server.total_s)?,
        time_per_round_s: time_per_round(&clusters)?,
        testing_latency_ms: testing_latency(&loads)?,
        t_server_agg_s: server.aggregation_s,
        t_server_update_s: server.update_s,
        clusters,
    })
}

/// Client sample counts when `rows` are split as evenly as possible.
pub fn even_client_samples(rows: usize, clients: usize) -> Vec<usize> {
    (0..clients).map(|i| rows / clients + usize::from(i < rows % clients)).collect()
}

pub const TIMING_CSV_HEADER: [&str; 9] = [
    "cluster_id",
    "t_local_s",
    "t_intra_s",
    "t_comm_s",
    "t_server_agg_s",
    "t_server_update_s",
    "total_training_s",
    "testing_latency_ms",
    "time_per_round_s",
];

impl TimingReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain data serializes")
    }

    /// One row per cluster; run-level totals repeat on every row.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(TIMING_CSV_HEADER).map_err(csv_io)?;
        for c in &self.clusters {
            w.write_record([
                c.cluster_id.to_string(),
                c.t_local_s.to_string(),
                c.t_intra_s.to_string(),
                c.t_comm_s.to_string(),
                self.t_server_agg_s.to_string(),
                self.t_server_update_s.to_string(),
                self.total_training_s.to_string(),
                self.testing_latency_ms.to_string(),
                self.time_per_round_s.to_string(),
            ])
            .map_err(csv_io)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv is utf-8")
    }
}

pub(crate) fn csv_io(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}
