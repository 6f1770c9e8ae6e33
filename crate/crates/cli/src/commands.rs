//! The five subcommands. Each returns the text printed on success; files go
//! under the configured output directory.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clusterfed::data::{
    generate_synthetic, load_csv, partition_non_iid, split_train_test, stratified_split, FeatureMatrix,
    PartitionPlan, Preprocessor, Scaler,
};
use clusterfed::federation::{run_training, ClusterTopology};
use clusterfed::latency::{analyze, even_client_samples, LatencyInputs, TimingReport};
use clusterfed::metrics::{emit_report, evaluate, roc, ClusterMetricsRow, Report, RoundMetricsRow};
use clusterfed::nn::gradcheck::{self, Corruption, GradCheck};
use clusterfed::nn::{codec, ModelParameters, ModelSpec};
use clusterfed::seed::{self, Purpose};
use serde_json::json;

use crate::config::{Architecture, ExperimentConfig, Preset, Source};
use crate::CliError;

pub const PARAMS_FILE: &str = "global_params.hfnd";
pub const ROUND_LOG_FILE: &str = "round_log.jsonl";

/// Train/test matrices, client partition and the fitted preprocessing.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub train: FeatureMatrix,
    pub test: FeatureMatrix,
    pub plan: PartitionPlan,
    pub class_names: Vec<String>,
    /// Fitted scaler or CSV preprocessor, `null` when nothing was fitted.
    pub preprocessing: serde_json::Value,
}

/// Loads or generates the data, splits it, fits preprocessing on the
/// training side and partitions the training rows across clients.
pub fn prepare_data(cfg: &ExperimentConfig) -> Result<Prepared, CliError> {
    let d = &cfg.data;
    let (train, test, class_names, preprocessing) = match d.source {
        Source::Synthetic => {
            let all = generate_synthetic(&d.synthetic, cfg.seed)?;
            let (train, test) = split_train_test(&all, d.split_fraction, cfg.seed)?;
            let names = (0..all.num_classes).map(|k| format!("class_{k}")).collect();
            match d.scaling.scaling() {
                Some(s) => {
                    let scaler = Scaler::fit(&train.x, s)?;
                    let value = serde_json::to_value(&scaler).expect("scaler serializes");
                    (scaler.apply(&train)?, scaler.apply(&test)?, names, value)
                }
                None => (train, test, names, serde_json::Value::Null),
            }
        }
        Source::Csv => {
            let csv = d.csv.as_ref().expect("validated");
            let schema = &csv.schema;
            let raw = load_csv(&csv.path, schema)?;
            let k = schema.classes.len();
            let (tr, te) = stratified_split(&raw.labels, k, d.split_fraction, cfg.seed)?;
            let (raw_train, raw_test) = (raw.select(&tr), raw.select(&te));
            let scaling = d.scaling.scaling().expect("validated");
            let pre = Preprocessor::fit(&raw_train, schema, scaling)?;
            let value = serde_json::to_value(&pre).expect("preprocessor serializes");
            (pre.transform(&raw_train, k)?, pre.transform(&raw_test, k)?, schema.classes.clone(), value)
        }
    };
    let topology = cfg.topology()?;
    let plan = partition_non_iid(&train.y, train.num_classes, topology.clients(), cfg.training.gamma, cfg.seed)?;
    Ok(Prepared {
        train,
        test,
        plan,
        class_names,
        preprocessing,
    })
}

fn matrix_csv(m: &FeatureMatrix) -> String {
    let mut s = String::new();
    let header: Vec<String> = (0..m.features()).map(|j| format!("f{j}")).collect();
    let _ = writeln!(s, "{},label", header.join(","));
    for i in 0..m.rows() {
        for v in m.x.row(i) {
            let _ = write!(s, "{v},");
        }
        let _ = writeln!(s, "{}", m.y[i]);
    }
    s
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(clusterfed::Error::from)?;
    }
    fs::write(path, contents).map_err(clusterfed::Error::from)?;
    Ok(())
}

fn pretty(v: &impl serde::Serialize) -> String {
    serde_json::to_string_pretty(v).expect("plain data serializes") + "\n"
}

/// `prepare`: writes the split, fitted preprocessing and partition.
pub fn cmd_prepare(cfg: &ExperimentConfig) -> Result<String, CliError> {
    let p = prepare_data(cfg)?;
    let dir = cfg.out.join("prepared");
    write(&dir.join("train.csv"), matrix_csv(&p.train))?;
    write(&dir.join("test.csv"), matrix_csv(&p.test))?;
    write(&dir.join("scaler.json"), pretty(&p.preprocessing))?;
    write(&dir.join("partition.json"), pretty(&p.plan))?;
    let mut s = String::new();
    let _ = writeln!(
        s,
        "prepared {} train / {} test rows, {} features, {} classes",
        p.train.rows(),
        p.test.rows(),
        p.train.features(),
        p.train.num_classes
    );
    let _ = writeln!(s, "client shares: {:?}", p.plan.sizes());
    let _ = writeln!(s, "written to {}", dir.display());
    Ok(s)
}

fn latency_inputs(cfg: &ExperimentConfig, client_samples: Vec<usize>, param_count: usize, features: usize) -> LatencyInputs {
    LatencyInputs {
        client_samples,
        epochs: cfg.training.epochs,
        param_count,
        input_features: features,
        test_inputs: cfg.latency.test_inputs,
        server: cfg.server(),
        agg_mode: cfg.latency.agg_mode,
        comm_mode: cfg.latency.comm_mode,
    }
}

/// Outcome of `train`, kept structured for tests.
#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub round_accuracy: Vec<f64>,
    pub final_macro_f1: f64,
    pub timing: TimingReport,
    pub checksum: String,
    pub files: Vec<PathBuf>,
}

impl TrainSummary {
    pub fn final_accuracy(&self) -> f64 {
        *self.round_accuracy.last().expect("at least one round")
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        for (r, a) in self.round_accuracy.iter().enumerate() {
            let _ = writeln!(s, "round {:>3}  accuracy {a:.4}", r + 1);
        }
        let t = &self.timing;
        let _ = writeln!(s, "final accuracy      {:.4}", self.final_accuracy());
        let _ = writeln!(s, "final macro F1      {:.4}", self.final_macro_f1);
        let _ = writeln!(s, "total training      {:.6} s", t.total_training_s);
        let _ = writeln!(s, "time per round      {:.6} s", t.time_per_round_s);
        let _ = writeln!(s, "testing latency     {:.6} ms", t.testing_latency_ms);
        let _ = writeln!(s, "global checksum     {}", self.checksum);
        s
    }
}

/// `train`: runs the full protocol and writes parameters, round log and
/// report files.
pub fn cmd_train(cfg: &ExperimentConfig, preset: Preset) -> Result<TrainSummary, CliError> {
    let p = prepare_data(cfg)?;
    let topology = cfg.topology()?;
    let spec = cfg.model_spec(cfg.model.architecture, p.train.features(), p.train.num_classes);
    let initial = ModelParameters::init(&spec, seed::derive(cfg.seed, Purpose::Init, 0, 0))?;
    let mut outcome = run_training(
        &spec,
        &initial,
        &topology,
        &p.plan,
        &p.train,
        &p.test,
        &cfg.local_training(),
        cfg.training.rounds,
        cfg.seed,
    )?;

    let timing = analyze(
        &topology,
        &latency_inputs(cfg, p.plan.sizes(), spec.param_count(), p.train.features()),
    )?;
    for log in &mut outcome.logs {
        log.simulated_s = Some(timing.time_per_round_s);
    }

    let out = &cfg.out;
    let mut files = Vec::new();
    let params_path = out.join(PARAMS_FILE);
    fs::create_dir_all(out).map_err(clusterfed::Error::from)?;
    codec::save(&outcome.global, &params_path)?;
    files.push(params_path);
    let log_path = out.join(ROUND_LOG_FILE);
    write(&log_path, outcome.logs.iter().map(|l| l.to_lines()).collect::<String>())?;
    files.push(log_path);

    let last = outcome.evaluations.last().expect("at least one round");
    let rounds: Vec<RoundMetricsRow> = outcome
        .logs
        .iter()
        .zip(&outcome.evaluations)
        .map(|(log, eval)| RoundMetricsRow::new(log.round + 1, eval, log.mean_loss()))
        .collect();
    let curves = (0..p.test.num_classes)
        .map(|k| roc(&last.class_scores(k), &last.labels, k))
        .collect::<Result<Vec<_>, _>>()?;
    let clusters = cluster_rows(&spec, &topology, &p, &outcome.cluster_models)?;
    let checksum = outcome.global.checksum();
    let manifest = json!({
        "tool": "clusterfed",
        "version": env!("CARGO_PKG_VERSION"),
        "preset": preset.name(),
        "seed": cfg.seed,
        "config_format": "toml",
        "config": cfg.echo(),
        "model": { "architecture": cfg.model.architecture, "param_count": spec.param_count() },
        "data": {
            "train_rows": p.train.rows(),
            "test_rows": p.test.rows(),
            "features": p.train.features(),
            "classes": p.class_names,
        },
        "partition_sizes": p.plan.sizes(),
        "rounds": cfg.training.rounds,
        "global_checksum": checksum,
        "final_accuracy": last.accuracy(),
    });
    let report = Report {
        rounds,
        confusion: last.confusion.clone(),
        class_names: p.class_names.clone(),
        roc: curves,
        clusters,
        timing: timing.clone(),
        manifest,
    };
    files.extend(emit_report(out, &report)?);
    Ok(TrainSummary {
        round_accuracy: outcome.evaluations.iter().map(|e| e.accuracy()).collect(),
        final_macro_f1: last.summary.macro_avg.f1,
        timing,
        checksum,
        files,
    })
}

/// Each cluster model scored on the whole test set and on the cluster's
/// share of it.
fn cluster_rows(
    spec: &ModelSpec,
    topology: &ClusterTopology,
    p: &Prepared,
    models: &[ModelParameters],
) -> Result<Vec<ClusterMetricsRow>, CliError> {
    let shares = topology.cluster_test_shares(&p.plan, &p.train.y, &p.test.y, p.test.num_classes);
    let mut rows = Vec::new();
    for ((cluster, model), share) in topology.clusters.iter().zip(models).zip(&shares) {
        let mut scopes = vec![("global", p.test.clone())];
        if !share.is_empty() {
            scopes.push(("local", p.test.select(share)));
        }
        for (scope, data) in scopes {
            let eval = evaluate(spec, model, &data)?;
            rows.push(ClusterMetricsRow {
                cluster_id: cluster.id,
                scope: scope.into(),
                samples: data.rows(),
                accuracy: eval.accuracy(),
                macro_f1: eval.summary.macro_avg.f1,
            });
        }
    }
    Ok(rows)
}

/// `evaluate`: scores stored parameters on the configured test split.
pub fn cmd_evaluate(cfg: &ExperimentConfig, params: Option<&Path>) -> Result<String, CliError> {
    let path = params.map(Path::to_path_buf).unwrap_or_else(|| cfg.out.join(PARAMS_FILE));
    let stored = codec::load(&path)?;
    let p = prepare_data(cfg)?;
    let spec = cfg.model_spec(cfg.model.architecture, p.test.features(), p.test.num_classes);
    let expected = ModelParameters::zeros(&spec)?;
    if !stored.congruent(&expected) {
        return Err(CliError::Core(clusterfed::Error::Structural(format!(
            "{} does not match the configured {:?} model",
            path.display(),
            cfg.model.architecture
        ))));
    }
    let eval = evaluate(&spec, &stored, &p.test)?;
    let doc = json!({
        "params": path.display().to_string(),
        "round": stored.round,
        "checksum": stored.checksum(),
        "test_rows": p.test.rows(),
        "summary": eval.summary,
        "confusion": eval.confusion.counts,
    });
    write(&cfg.out.join("evaluation.json"), pretty(&doc))?;
    let m = &eval.summary.macro_avg;
    let mut s = String::new();
    let _ = writeln!(s, "evaluated {} on {} test rows", path.display(), p.test.rows());
    let _ = writeln!(s, "accuracy   {:.4}", eval.accuracy());
    let _ = writeln!(s, "precision  {:.4}", m.precision);
    let _ = writeln!(s, "recall     {:.4}", m.recall);
    let _ = writeln!(s, "F1         {:.4}", m.f1);
    let _ = writeln!(s, "FPR        {:.4}", m.fpr);
    Ok(s)
}

/// Timing of both architectures under the configured topology.
#[derive(Debug, Clone)]
pub struct LatencyComparison {
    pub lightweight: TimingReport,
    pub standard: TimingReport,
}

impl LatencyComparison {
    pub fn render(&self) -> String {
        let (a, b) = (&self.lightweight, &self.standard);
        let mut s = String::new();
        let _ = writeln!(s, "{:<22}{:>16}{:>16}", "", "lightweight", "standard");
        let _ = writeln!(s, "{:<22}{:>16}{:>16}", "parameters", a.param_count, b.param_count);
        for (c1, c2) in a.clusters.iter().zip(&b.clusters) {
            let label = format!("cluster {} (s)", c1.cluster_id);
            let _ = writeln!(s, "{label:<22}{:>16.6}{:>16.6}", c1.sum(), c2.sum());
        }
        let rows = [
            ("server agg (s)", a.t_server_agg_s, b.t_server_agg_s),
            ("server update (s)", a.t_server_update_s, b.t_server_update_s),
            ("total training (s)", a.total_training_s, b.total_training_s),
            ("time per round (s)", a.time_per_round_s, b.time_per_round_s),
            ("testing latency (ms)", a.testing_latency_ms, b.testing_latency_ms),
        ];
        for (label, x, y) in rows {
            let _ = writeln!(s, "{label:<22}{x:>16.6}{y:>16.6}");
        }
        s
    }
}

/// `latency`: analytical timing for both model sizes. Client sample counts
/// assume the training rows are spread evenly over the clients.
pub fn cmd_latency(cfg: &ExperimentConfig) -> Result<LatencyComparison, CliError> {
    let topology = cfg.topology()?;
    let (rows, features, classes) = match cfg.data.source {
        Source::Synthetic => {
            let s = &cfg.data.synthetic;
            let all = generate_synthetic(s, cfg.seed)?;
            let (train, _) = split_train_test(&all, cfg.data.split_fraction, cfg.seed)?;
            (train.rows(), s.features, s.num_classes)
        }
        Source::Csv => {
            let p = prepare_data(cfg)?;
            (p.train.rows(), p.train.features(), p.train.num_classes)
        }
    };
    let samples = even_client_samples(rows, topology.clients());
    let report = |arch| {
        let spec = cfg.model_spec(arch, features, classes);
        analyze(&topology, &latency_inputs(cfg, samples.clone(), spec.param_count(), features))
    };
    let cmp = LatencyComparison {
        lightweight: report(Architecture::Lightweight)?,
        standard: report(Architecture::Standard)?,
    };
    for (name, r) in [("lightweight", &cmp.lightweight), ("standard", &cmp.standard)] {
        write(&cfg.out.join(format!("latency_{name}.json")), r.to_json() + "\n")?;
        write(&cfg.out.join(format!("latency_{name}.csv")), r.to_csv())?;
    }
    Ok(cmp)
}

/// `gradcheck`: finite-difference check of every layer kind and the loss.
pub fn cmd_gradcheck(seed: u64, corrupt: bool) -> Result<String, CliError> {
    let corruption = if corrupt { Corruption::ScaleAnalytic } else { Corruption::None };
    let checks = gradcheck::run_suite(seed, corruption)?;
    let text = render_checks(&checks);
    if checks.iter().all(GradCheck::passed) {
        Ok(text)
    } else {
        Err(CliError::Check(text))
    }
}

fn render_checks(checks: &[GradCheck]) -> String {
    let mut s = String::new();
    for c in checks {
        let verdict = if c.passed() { "ok" } else { "FAILED" };
        let _ = writeln!(s, "{:<32} {:>6} values  max rel error {:.3e}  {verdict}", c.name, c.checked, c.max_rel_error);
    }
    let failed = checks.iter().filter(|c| !c.passed()).count();
    let _ = writeln!(s, "{} checks, {failed} failed (tolerance {:e})", checks.len(), gradcheck::TOLERANCE);
    s
}
