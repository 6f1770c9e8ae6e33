//! Acceptance suite: one test per criterion, each printing a single
//! PASS/FAIL line (run with `--nocapture` to see them).

use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use clusterfed::federation::{aggregate_inter_cluster, aggregate_intra_cluster, ClusterTopology};
use clusterfed::latency::{analyze, even_client_samples, AggTimeMode, CommMode, LatencyInputs, ServerProfile};
use clusterfed::metrics::{confusion, metrics, roc, ClassMetrics};
use clusterfed::nn::gradcheck::{self, Corruption};
use clusterfed::nn::{gumbel_softmax, softmax, Activation, GumbelMode, LayerSpec, ModelParameters, ModelSpec, Tensor};
use clusterfed::seed;
use clusterfed_cli::commands::cmd_train;
use clusterfed_cli::{ExperimentConfig, Preset};
use rand::Rng;

fn verdict(n: u32, name: &str, pass: bool, elapsed: Duration, budget: Duration, detail: &str) {
    let ok = pass && elapsed <= budget;
    println!(
        "criterion {n} {name}: {} ({detail}; {:.2}s of {:.0}s budget)",
        if ok { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64(),
        budget.as_secs_f64()
    );
    assert!(pass, "criterion {n} failed: {detail}");
    assert!(elapsed <= budget, "criterion {n} over its time budget");
}

#[test]
fn criterion_1_hierarchy_collapse() {
    let start = Instant::now();
    let spec = ModelSpec::lightweight(6, 3, 0.1);
    let mut rng = seed::rng(2024);
    let mut worst = 0.0f64;
    for instance in 0..100u64 {
        let clusters = rng.random_range(2..=5usize);
        let mut models = Vec::new();
        let mut layout = Vec::new();
        for _ in 0..clusters {
            let members = rng.random_range(1..=8usize);
            let mut ids = Vec::new();
            for _ in 0..members {
                let p = ModelParameters::init(&spec, seed::child(instance, models.len() as u64)).unwrap();
                let n = rng.random_range(1..=5000usize);
                ids.push(models.len());
                models.push((p, n));
            }
            layout.push(ids);
        }

        let cluster_models: Vec<(ModelParameters, usize)> = layout
            .iter()
            .map(|ids| {
                let members: Vec<(&ModelParameters, usize)> = ids.iter().map(|&i| (&models[i].0, models[i].1)).collect();
                let size = members.iter().map(|m| m.1).sum();
                (aggregate_intra_cluster(&members).unwrap(), size)
            })
            .collect();
        let refs: Vec<(&ModelParameters, usize)> = cluster_models.iter().map(|(p, n)| (p, *n)).collect();
        let global = aggregate_inter_cluster(&refs).unwrap();

        // flat oracle, computed value by value
        let total: f64 = models.iter().map(|m| m.1 as f64).sum();
        let flats: Vec<Vec<f64>> = models.iter().map(|m| m.0.flat_values()).collect();
        for (j, got) in global.flat_values().iter().enumerate() {
            let want: f64 = models.iter().zip(&flats).map(|(m, f)| m.1 as f64 * f[j]).sum::<f64>() / total;
            worst = worst.max((got - want).abs());
        }
    }
    verdict(
        1,
        "hierarchy collapse",
        worst <= 1e-12,
        start.elapsed(),
        Duration::from_secs(5),
        &format!("100 instances, max abs error {worst:.3e} <= 1e-12"),
    );
}

#[test]
fn criterion_2_gradient_fidelity() {
    let start = Instant::now();
    let mut worst = 0.0f64;
    let mut failures = Vec::new();
    let mut kinds = std::collections::BTreeSet::new();
    for s in 0..20u64 {
        for check in gradcheck::run_suite(seed::child(7, s), Corruption::None).unwrap() {
            worst = worst.max(check.max_rel_error);
            kinds.insert(check.name.clone());
            if !check.passed() {
                failures.push(format!("{} (seed {s})", check.name));
            }
        }
    }
    for required in [
        "dense",
        "conv1d",
        "depthwise_separable_conv1d",
        "dropout(p=0, training)",
        "global_average_pool",
        "hybrid_loss(alpha=0, T=0.5)",
        "hybrid_loss(alpha=0.5, T=1)",
        "hybrid_loss(alpha=1, T=0.5)",
    ] {
        assert!(kinds.contains(required), "suite lacks {required}");
    }
    verdict(
        2,
        "gradient fidelity",
        failures.is_empty(),
        start.elapsed(),
        Duration::from_secs(30),
        &format!("20 seeds x {} checks, max rel error {worst:.3e} < 1e-3, failures {failures:?}", kinds.len()),
    );
}

#[test]
fn criterion_3_end_to_end_learning() {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig::preset(Preset::Desk);
    cfg.out = dir.path().to_path_buf();
    let t = &cfg.training;
    assert_eq!((t.rounds, t.epochs, t.batch_size), (10, 5, 128));
    assert_eq!((t.learning_rate, t.alpha, t.temperature, t.gamma), (0.001, 0.5, 0.5, 0.6));
    assert_eq!((cfg.data.synthetic.rows, cfg.data.synthetic.num_classes, cfg.data.synthetic.separation), (2000, 4, 4.0));

    let summary = cmd_train(&cfg, Preset::Desk).unwrap();
    let acc = &summary.round_accuracy;
    let (first, last) = (acc[0], summary.final_accuracy());
    let elapsed = start.elapsed();

    // Seed sensitivity, reported but not part of the verdict.
    let mut reached = Vec::new();
    for s in [1u64, 7, 3, 99, 2] {
        let mut other = cfg.clone();
        other.seed = s;
        other.out = dir.path().join(format!("seed_{s}"));
        let a = cmd_train(&other, Preset::Desk).unwrap().final_accuracy();
        reached.push(format!("{s}:{a:.3}"));
    }
    println!("criterion 3 info: final accuracy at other seeds {}", reached.join(" "));

    verdict(
        3,
        "end-to-end learning",
        last >= 0.95 && last >= first,
        elapsed,
        Duration::from_secs(300),
        &format!("seed {}, round 1 accuracy {first:.4}, round 10 accuracy {last:.4} (>= 0.95)", cfg.seed),
    );
}

#[test]
fn criterion_4_latency_oracle() {
    let start = Instant::now();
    let topology = ClusterTopology::pi_testbed(200.0, 12.5);
    let inputs = LatencyInputs {
        client_samples: even_client_samples(1600, 10),
        epochs: 5,
        param_count: 1988,
        input_features: 8,
        test_inputs: 1,
        server: ServerProfile::default(),
        agg_mode: AggTimeMode::Literal,
        comm_mode: CommMode::Average,
    };
    let r = analyze(&topology, &inputs).unwrap();
    // values from tests/oracles/latency_oracle.py
    let sums: Vec<f64> = r.clusters.iter().map(|c| c.sum()).collect();
    let pairs = [
        (sums[0], 12.01017856),
        (sums[1], 12.81017856),
        (sums[2], 16.01017856),
        (r.t_server_agg_s, 0.03053568),
        (r.t_server_update_s, 0.001988),
        (r.total_training_s, 16.04270224),
        (r.time_per_round_s, 40.83053568),
        (r.testing_latency_ms, 37.0 / 3.0 + 0.12288),
    ];
    let worst = pairs.iter().map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    verdict(
        4,
        "latency oracle",
        worst <= 1e-9,
        start.elapsed(),
        Duration::from_secs(1),
        &format!("8 outputs, max abs error {worst:.3e} <= 1e-9"),
    );
}

#[test]
fn criterion_5_lightweight_dominance() {
    let start = Instant::now();
    let mut violations = Vec::new();
    for k in [3usize, 5, 7, 9] {
        for cin in [2usize, 4, 8, 16, 32, 64] {
            for cout in [3usize, 4, 8, 16, 32, 64] {
                let a = Activation::Relu;
                let ds = LayerSpec::DepthwiseSeparableConv1d { in_channels: cin, out_channels: cout, kernel: k, activation: a };
                let conv = LayerSpec::Conv1d { in_channels: cin, out_channels: cout, kernel: k, activation: a };
                if ds.param_count() >= conv.param_count() {
                    violations.push((k, cin, cout));
                }
            }
        }
    }
    let ds = LayerSpec::DepthwiseSeparableConv1d { in_channels: 32, out_channels: 32, kernel: 3, activation: Activation::Relu };
    let conv = LayerSpec::Conv1d { in_channels: 32, out_channels: 32, kernel: 3, activation: Activation::Relu };
    let example = (ds.param_count(), conv.param_count());

    let topology = ClusterTopology::pi_testbed(200.0, 12.5);
    let timing = |spec: ModelSpec| {
        let inputs = LatencyInputs {
            client_samples: even_client_samples(1600, 10),
            epochs: 5,
            param_count: spec.param_count(),
            input_features: 8,
            test_inputs: 1,
            server: ServerProfile::default(),
            agg_mode: AggTimeMode::Literal,
            comm_mode: CommMode::Average,
        };
        analyze(&topology, &inputs).unwrap()
    };
    let light = timing(ModelSpec::lightweight(8, 4, 0.1));
    let standard = timing(ModelSpec::standard(8, 4, 0.1));
    let pass = violations.is_empty()
        && example == (1184, 3104)
        && light.total_training_s <= standard.total_training_s
        && light.testing_latency_ms <= standard.testing_latency_ms;
    verdict(
        5,
        "lightweight dominance",
        pass,
        start.elapsed(),
        Duration::from_secs(1),
        &format!(
            "144 (K, Cin, Cout) cases, violations {violations:?}; K=3 C=32: {} vs {}; training {:.6}s vs {:.6}s; latency {:.6}ms vs {:.6}ms",
            example.0, example.1, light.total_training_s, standard.total_training_s, light.testing_latency_ms, standard.testing_latency_ms
        ),
    );
}

#[test]
fn criterion_6_metrics_oracle() {
    let start = Instant::now();
    let m = ClassMetrics::from_counts(50, 10, 5, 935);
    let hand = [
        (m.accuracy, 985.0 / 1000.0),
        (m.precision, 50.0 / 60.0),
        (m.recall, 50.0 / 55.0),
        (m.f1, 100.0 / 115.0),
        (m.tpr, 50.0 / 55.0),
        (m.fpr, 10.0 / 945.0),
    ];
    let hand_err = hand.iter().map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);

    let mut rng = seed::rng(6);
    let mut confusion_mismatches = 0;
    for _ in 0..100 {
        let k = rng.random_range(2..=6usize);
        let n = rng.random_range(1..=200usize);
        let t: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
        let p: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
        let cm = confusion(&t, &p, k).unwrap();
        for a in 0..k {
            for b in 0..k {
                let brute = t.iter().zip(&p).filter(|&(&x, &y)| x == a && y == b).count() as u64;
                if cm.counts[a][b] != brute {
                    confusion_mismatches += 1;
                }
            }
        }
        metrics(&cm).unwrap();
    }

    let mut auc_err = 0.0f64;
    for _ in 0..100 {
        let n = rng.random_range(2..=100usize);
        let mut labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..3)).collect();
        labels[0] = 0;
        labels[1] = 1;
        // coarse scores so ties occur
        let scores: Vec<f64> = (0..n).map(|_| rng.random_range(0..20) as f64 / 20.0).collect();
        let curve = roc(&scores, &labels, 0).unwrap();
        let (mut concordant, mut pairs) = (0.0, 0.0);
        for i in 0..n {
            for j in 0..n {
                if labels[i] == 0 && labels[j] != 0 {
                    pairs += 1.0;
                    if scores[i] > scores[j] {
                        concordant += 1.0;
                    } else if scores[i] == scores[j] {
                        concordant += 0.5;
                    }
                }
            }
        }
        auc_err = auc_err.max((curve.auc - concordant / pairs).abs());
    }
    verdict(
        6,
        "metrics oracle",
        hand_err <= 1e-9 && confusion_mismatches == 0 && auc_err <= 1e-12,
        start.elapsed(),
        Duration::from_secs(10),
        &format!("hand example error {hand_err:.3e}, confusion mismatches {confusion_mismatches}/100 vectors, AUC error {auc_err:.3e}"),
    );
}

#[test]
fn criterion_7_gumbel_statistics() {
    let start = Instant::now();
    const SAMPLES: usize = 10_000;
    let mut rng = seed::rng(77);
    let mut worst_z = 0.0f64;
    for v in 0..10u64 {
        let k = rng.random_range(2..=6usize);
        let logits: Vec<f64> = (0..k).map(|_| rng.random_range(-2.0..2.0)).collect();
        let probs = softmax(&Tensor::new(vec![1, k], logits.clone()).unwrap()).unwrap();
        let batch = Tensor::new(vec![SAMPLES, k], logits.repeat(SAMPLES)).unwrap();
        for (ti, t) in [0.5, 1.0].into_iter().enumerate() {
            let y = gumbel_softmax(&batch, t, GumbelMode::Stochastic, seed::child(v, ti as u64)).unwrap();
            let mut counts = vec![0usize; k];
            for i in 0..SAMPLES {
                let row = y.row(i);
                let best = (0..k).fold(0, |b, j| if row[j] > row[b] { j } else { b });
                counts[best] += 1;
            }
            for (&count, &p) in counts.iter().zip(probs.row(0)) {
                let sd = (SAMPLES as f64 * p * (1.0 - p)).sqrt();
                let z = (count as f64 - SAMPLES as f64 * p).abs() / sd;
                worst_z = worst_z.max(z);
            }
        }
    }
    verdict(
        7,
        "Gumbel-SoftMax statistics",
        worst_z <= 3.0,
        start.elapsed(),
        Duration::from_secs(10),
        &format!("10 logit vectors x T in {{0.5, 1}} x {SAMPLES} samples, worst deviation {worst_z:.2} SD <= 3"),
    );
}

fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

#[test]
fn criterion_8_determinism() {
    let start = Instant::now();
    let root = tempfile::tempdir().unwrap();
    let mut outputs = Vec::new();
    for run in ["a", "b"] {
        let mut cfg = ExperimentConfig::preset(Preset::Desk);
        cfg.out = root.path().join(run);
        cmd_train(&cfg, Preset::Desk).unwrap();
        outputs.push(snapshot(&cfg.out));
    }
    let names: Vec<&str> = outputs[0].iter().map(|(n, _)| n.as_str()).collect();
    let differing: Vec<&str> = outputs[0]
        .iter()
        .zip(&outputs[1])
        .filter(|(a, b)| a != b)
        .map(|(a, _)| a.0.as_str())
        .collect();
    let pass = outputs[0].len() == outputs[1].len() && differing.is_empty() && names.contains(&"global_params.hfnd");
    verdict(
        8,
        "determinism",
        pass,
        start.elapsed(),
        Duration::from_secs(600),
        &format!("{} files compared, differing {differing:?}", names.len()),
    );
}
