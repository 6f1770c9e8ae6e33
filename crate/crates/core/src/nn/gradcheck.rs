//! Central finite-difference checks of the analytic gradients.

use rand::Rng;

use super::loss::{hybrid_loss, GumbelMode, HybridLossConfig};
use super::network::{forward_trace, backward_from_logits, Mode};
use super::params::ModelParameters;
use super::spec::{Activation, LayerSpec, ModelSpec};
use super::tensor::Tensor;
use crate::error::Result;
use crate::seed::{self, Purpose};

/// Finite-difference step.
pub const STEP: f64 = 1e-5;
/// Maximum accepted relative error.
pub const TOLERANCE: f64 = 1e-3;
/// Magnitudes below this are compared absolutely.
const FLOOR: f64 = 1e-7;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FLOOR)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    pub name: String,
    pub checked: usize,
    pub max_rel_error: f64,
}

impl GradCheck {
    pub fn passed(&self) -> bool {
        self.max_rel_error < TOLERANCE
    }
}

/// Fault injection for exercising the failure path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Corruption {
    #[default]
    None,
    /// Scales every analytic gradient by 1.01.
    ScaleAnalytic,
}

impl Corruption {
    fn apply(self, g: f64) -> f64 {
        match self {
            Corruption::None => g,
            Corruption::ScaleAnalytic => g * 1.01,
        }
    }
}

fn loss_at(
    spec: &ModelSpec,
    params: &ModelParameters,
    batch: &Tensor,
    labels: &[usize],
    cfg: &HybridLossConfig,
    mode: Mode,
    gumbel_seed: u64,
) -> Result<f64> {
    let (logits, _) = forward_trace(spec, params, batch, mode)?;
    Ok(hybrid_loss(&logits, labels, cfg, gumbel_seed)?.0)
}

fn value_mut(p: &mut ModelParameters, entry: usize, which: usize, j: usize) -> &mut f64 {
    let e = &mut p.entries[entry];
    let t = if which == 0 { &mut e.weights } else { &mut e.biases };
    &mut t.values_mut()[j]
}

/// Compares every parameter gradient of `spec` against central differences.
#[allow(clippy::too_many_arguments)]
pub fn check_model(
    name: &str,
    spec: &ModelSpec,
    params: &ModelParameters,
    batch: &Tensor,
    labels: &[usize],
    cfg: &HybridLossConfig,
    mode: Mode,
    gumbel_seed: u64,
    corruption: Corruption,
) -> Result<GradCheck> {
    let (logits, trace) = forward_trace(spec, params, batch, mode)?;
    let (_, dlogits) = hybrid_loss(&logits, labels, cfg, gumbel_seed)?;
    let grads = backward_from_logits(spec, params, &trace, &dlogits)?;
    let analytic = grads.flat_values();

    let mut probe = params.clone();
    let mut max_err: f64 = 0.0;
    let mut index = 0;
    for (e, entry) in params.entries.iter().enumerate() {
        for which in 0..2 {
            let len = if which == 0 { entry.weights.len() } else { entry.biases.len() };
            for j in 0..len {
                let original = *value_mut(&mut probe, e, which, j);
                *value_mut(&mut probe, e, which, j) = original + STEP;
                let plus = loss_at(spec, &probe, batch, labels, cfg, mode, gumbel_seed)?;
                *value_mut(&mut probe, e, which, j) = original - STEP;
                let minus = loss_at(spec, &probe, batch, labels, cfg, mode, gumbel_seed)?;
                *value_mut(&mut probe, e, which, j) = original;
                let numeric = (plus - minus) / (2.0 * STEP);
                max_err = max_err.max(relative_error(corruption.apply(analytic[index]), numeric));
                index += 1;
            }
        }
    }
    Ok(GradCheck {
        name: name.to_owned(),
        checked: index,
        max_rel_error: max_err,
    })
}

/// Checks the hybrid loss gradient with respect to the logits.
pub fn check_loss(cfg: &HybridLossConfig, seed: u64, corruption: Corruption) -> Result<GradCheck> {
    let mut rng = seed::rng(seed::derive(seed, Purpose::GradCheck, 0, 1));
    let (b, k) = (3, 4);
    let logits = Tensor::new(vec![b, k], (0..b * k).map(|_| rng.random_range(-2.0..2.0)).collect())?;
    let labels: Vec<usize> = (0..b).map(|_| rng.random_range(0..k)).collect();
    let gumbel_seed = rng.random();
    let (_, grad) = hybrid_loss(&logits, &labels, cfg, gumbel_seed)?;
    let mut probe = logits.clone();
    let mut max_err: f64 = 0.0;
    for j in 0..logits.len() {
        let original = probe.values()[j];
        probe.values_mut()[j] = original + STEP;
        let plus = hybrid_loss(&probe, &labels, cfg, gumbel_seed)?.0;
        probe.values_mut()[j] = original - STEP;
        let minus = hybrid_loss(&probe, &labels, cfg, gumbel_seed)?.0;
        probe.values_mut()[j] = original;
        let numeric = (plus - minus) / (2.0 * STEP);
        max_err = max_err.max(relative_error(corruption.apply(grad.values()[j]), numeric));
    }
    Ok(GradCheck {
        name: format!("hybrid_loss(alpha={}, T={})", cfg.alpha, cfg.temperature),
        checked: logits.len(),
        max_rel_error: max_err,
    })
}

fn dense(inputs: usize, outputs: usize, activation: Activation) -> LayerSpec {
    LayerSpec::Dense {
        inputs,
        outputs,
        activation,
    }
}

/// Small models isolating each layer kind. Every model ends in logits.
pub fn layer_cases(width: usize, classes: usize) -> Vec<(&'static str, ModelSpec, Mode)> {
    use Activation::{Linear, Relu};
    let m = |layers| ModelSpec {
        input_width: width,
        num_classes: classes,
        layers,
    };
    let conv = |cin, cout| LayerSpec::Conv1d {
        in_channels: cin,
        out_channels: cout,
        kernel: 3,
        activation: Relu,
    };
    let sep = |cin, cout| LayerSpec::DepthwiseSeparableConv1d {
        in_channels: cin,
        out_channels: cout,
        kernel: 3,
        activation: Relu,
    };
    vec![
        ("dense", m(vec![dense(width, 5, Relu), dense(5, classes, Linear)]), Mode::Eval),
        ("conv1d", m(vec![conv(1, 3), conv(3, 2), LayerSpec::GlobalAveragePool, dense(2, classes, Linear)]), Mode::Eval),
        (
            "depthwise_separable_conv1d",
            m(vec![conv(1, 2), sep(2, 3), LayerSpec::GlobalAveragePool, dense(3, classes, Linear)]),
            Mode::Eval,
        ),
        (
            "depthwise_separable_conv1d(k=5)",
            m(vec![
                LayerSpec::DepthwiseSeparableConv1d {
                    in_channels: 1,
                    out_channels: 3,
                    kernel: 5,
                    activation: Linear,
                },
                LayerSpec::GlobalAveragePool,
                dense(3, classes, Linear),
            ]),
            Mode::Eval,
        ),
        (
            "dropout(p=0, training)",
            m(vec![conv(1, 2), LayerSpec::Dropout { p: 0.0 }, LayerSpec::GlobalAveragePool, dense(2, classes, Linear)]),
            Mode::Train { dropout_seed: 11 },
        ),
        (
            "dropout(p=0.3, eval)",
            m(vec![conv(1, 2), LayerSpec::Dropout { p: 0.3 }, LayerSpec::GlobalAveragePool, dense(2, classes, Linear)]),
            Mode::Eval,
        ),
        (
            "dropout(p=0.3, fixed mask)",
            m(vec![conv(1, 2), LayerSpec::Dropout { p: 0.3 }, LayerSpec::GlobalAveragePool, dense(2, classes, Linear)]),
            Mode::Train { dropout_seed: 11 },
        ),
        (
            "activation",
            m(vec![
                dense(width, 4, Linear),
                LayerSpec::Activation { activation: Relu },
                dense(4, classes, Linear),
            ]),
            Mode::Eval,
        ),
        (
            "global_average_pool",
            m(vec![conv(1, 3), LayerSpec::GlobalAveragePool, dense(3, classes, Linear)]),
            Mode::Eval,
        ),
    ]
}

/// Random parameters with non-zero biases so every bias path is exercised.
pub fn random_params(spec: &ModelSpec, seed: u64) -> Result<ModelParameters> {
    let mut params = ModelParameters::init(spec, seed)?;
    let mut rng = seed::rng(seed::child(seed, 1));
    for e in &mut params.entries {
        for b in e.biases.values_mut() {
            *b = rng.random_range(-0.3..0.3);
        }
    }
    Ok(params)
}

/// Runs every layer case, the full lightweight model and the hybrid loss
/// grid for one seed.
pub fn run_suite(seed: u64, corruption: Corruption) -> Result<Vec<GradCheck>> {
    let (width, classes, batch) = (6, 3, 4);
    let base = seed::derive(seed, Purpose::GradCheck, 0, 0);
    let mut rng = seed::rng(base);
    let x = Tensor::new(
        vec![batch, width],
        (0..batch * width).map(|_| rng.random_range(-1.5..1.5)).collect(),
    )?;
    let labels: Vec<usize> = (0..batch).map(|n| n % classes).collect();
    let loss = HybridLossConfig {
        alpha: 0.5,
        temperature: 0.5,
        gumbel_mode: GumbelMode::Stochastic,
    };
    let gumbel_seed = seed::child(base, 2);

    let mut cases = layer_cases(width, classes);
    cases.push(("lightweight_model", small_lightweight(width, classes), Mode::Train { dropout_seed: 5 }));
    let mut out = Vec::new();
    for (i, (name, spec, mode)) in cases.into_iter().enumerate() {
        let params = random_params(&spec, seed::child(base, 100 + i as u64))?;
        out.push(check_model(name, &spec, &params, &x, &labels, &loss, mode, gumbel_seed, corruption)?);
    }
    for alpha in [0.0, 0.5, 1.0] {
        for temperature in [0.5, 1.0] {
            let cfg = HybridLossConfig {
                alpha,
                temperature,
                gumbel_mode: GumbelMode::Stochastic,
            };
            out.push(check_loss(&cfg, seed, corruption)?);
        }
    }
    Ok(out)
}

/// The lightweight architecture at reduced widths, for quick checks.
fn small_lightweight(width: usize, classes: usize) -> ModelSpec {
    use Activation::{Linear, Relu};
    ModelSpec {
        input_width: width,
        num_classes: classes,
        layers: vec![
            LayerSpec::Conv1d {
                in_channels: 1,
                out_channels: 3,
                kernel: 3,
                activation: Relu,
            },
            LayerSpec::DepthwiseSeparableConv1d {
                in_channels: 3,
                out_channels: 4,
                kernel: 3,
                activation: Relu,
            },
            LayerSpec::DepthwiseSeparableConv1d {
                in_channels: 4,
                out_channels: 4,
                kernel: 3,
                activation: Relu,
            },
            LayerSpec::Dropout { p: 0.1 },
            LayerSpec::GlobalAveragePool,
            dense(4, classes, Linear),
        ],
    }
}
