//! Forward and reverse passes over a [`ModelSpec`].
//!
//! Activations travel as flat buffers; their interpretation (`[B, width]` or
//! `[B, channels, length]`) comes from the layouts the spec validates.

use rand::Rng;

use super::loss::{hybrid_loss, HybridLossConfig};
use super::params::ModelParameters;
use super::spec::{Activation, LayerSpec, Layout, ModelSpec};
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::seed;

/// Whether dropout is active.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Eval,
    /// Dropout masks are drawn from `dropout_seed`.
    Train { dropout_seed: u64 },
}

enum Cache {
    Dense { input: Vec<f64>, pre: Vec<f64> },
    Conv { input: Vec<f64>, pre: Vec<f64> },
    Separable { input: Vec<f64>, depth: Vec<f64>, pre: Vec<f64> },
    Dropout { mask: Option<Vec<f64>> },
    Activation { pre: Vec<f64> },
    Pool,
}

/// Everything the reverse pass needs from a forward pass.
pub struct Trace {
    batch: usize,
    layouts: Vec<Layout>,
    /// Index of each layer's first parameter entry.
    slots: Vec<Option<usize>>,
    caches: Vec<Cache>,
}

/// Checks parameters against the spec and maps layers to entry indices.
fn bind(spec: &ModelSpec, params: &ModelParameters) -> Result<(Vec<Layout>, Vec<Option<usize>>)> {
    let layouts = spec.layouts()?;
    let mut slots = Vec::with_capacity(spec.layers.len());
    let mut next = 0;
    for (i, layer) in spec.layers.iter().enumerate() {
        let shapes = layer.param_shapes();
        if shapes.is_empty() {
            slots.push(None);
            continue;
        }
        slots.push(Some(next));
        for (suffix, wshape, bshape) in shapes {
            let entry = params.entries.get(next).ok_or_else(|| {
                Error::structural(format!("layer {i} ({}): missing parameter entry", layer.kind_name()))
            })?;
            let expected = format!("{i}.{suffix}");
            if entry.name != expected || entry.weights.shape() != wshape || entry.biases.shape() != bshape {
                return Err(Error::structural(format!(
                    "layer {i} ({}): expected entry {expected} with weights {wshape:?} and biases {bshape:?}, found {} with {:?}/{:?}",
                    layer.kind_name(),
                    entry.name,
                    entry.weights.shape(),
                    entry.biases.shape()
                )));
            }
            next += 1;
        }
    }
    if next != params.entries.len() {
        return Err(Error::structural(format!(
            "{} parameter entries for a spec that needs {next}",
            params.entries.len()
        )));
    }
    Ok((layouts, slots))
}

fn check_batch(spec: &ModelSpec, batch: &Tensor) -> Result<usize> {
    match batch.shape() {
        [b, w] if *w == spec.input_width => {
            if !batch.all_finite() {
                return Err(Error::validation("batch contains non-finite values"));
            }
            Ok(*b)
        }
        other => Err(Error::structural(format!(
            "layer 0 ({}): batch shape {other:?} does not match input width {}",
            spec.layers.first().map_or("input", LayerSpec::kind_name),
            spec.input_width
        ))),
    }
}

/// Logits `[B, num_classes]` for a `[B, input_width]` batch.
pub fn forward(spec: &ModelSpec, params: &ModelParameters, batch: &Tensor, mode: Mode) -> Result<Tensor> {
    let (logits, _) = forward_trace(spec, params, batch, mode)?;
    Ok(logits)
}

pub fn forward_trace(
    spec: &ModelSpec,
    params: &ModelParameters,
    batch: &Tensor,
    mode: Mode,
) -> Result<(Tensor, Trace)> {
    let (layouts, slots) = bind(spec, params)?;
    let b = check_batch(spec, batch)?;
    let mut x = batch.values().to_vec();
    let mut caches = Vec::with_capacity(spec.layers.len());
    for (i, layer) in spec.layers.iter().enumerate() {
        let layout = layouts[i];
        let (y, cache) = match *layer {
            LayerSpec::Dense {
                inputs,
                outputs,
                activation,
            } => {
                let e = &params.entries[slots[i].unwrap()];
                let (w, bias) = (e.weights.values(), e.biases.values());
                let mut pre = vec![0.0; b * outputs];
                for n in 0..b {
                    let xr = &x[n * inputs..(n + 1) * inputs];
                    for o in 0..outputs {
                        let wr = &w[o * inputs..(o + 1) * inputs];
                        pre[n * outputs + o] =
                            bias[o] + wr.iter().zip(xr).map(|(a, c)| a * c).sum::<f64>();
                    }
                }
                let y = pre.iter().map(|&z| activation.apply(z)).collect();
                (y, Cache::Dense { input: x, pre })
            }
            LayerSpec::Conv1d {
                in_channels,
                out_channels,
                kernel,
                activation,
            } => {
                let (_, len) = layout.as_seq();
                let e = &params.entries[slots[i].unwrap()];
                let pre = conv_forward(
                    &x,
                    e.weights.values(),
                    e.biases.values(),
                    b,
                    in_channels,
                    out_channels,
                    len,
                    kernel,
                );
                let y = pre.iter().map(|&z| activation.apply(z)).collect();
                (y, Cache::Conv { input: x, pre })
            }
            LayerSpec::DepthwiseSeparableConv1d {
                in_channels,
                out_channels,
                kernel,
                activation,
            } => {
                let (_, len) = layout.as_seq();
                let slot = slots[i].unwrap();
                let (dw, pw) = (&params.entries[slot], &params.entries[slot + 1]);
                let depth = depthwise_forward(&x, dw.weights.values(), dw.biases.values(), b, in_channels, len, kernel);
                let pre = pointwise_forward(&depth, pw.weights.values(), pw.biases.values(), b, in_channels, out_channels, len);
                let y = pre.iter().map(|&z| activation.apply(z)).collect();
                (y, Cache::Separable { input: x, depth, pre })
            }
            LayerSpec::Dropout { p } => match mode {
                Mode::Train { dropout_seed } if p > 0.0 => {
                    let mut rng = seed::rng(seed::child(dropout_seed, i as u64));
                    let scale = 1.0 / (1.0 - p);
                    let mask: Vec<f64> = (0..x.len())
                        .map(|_| if rng.random::<f64>() < p { 0.0 } else { scale })
                        .collect();
                    let y = x.iter().zip(&mask).map(|(v, m)| v * m).collect();
                    (y, Cache::Dropout { mask: Some(mask) })
                }
                _ => (x, Cache::Dropout { mask: None }),
            },
            LayerSpec::Activation { activation } => {
                let y = x.iter().map(|&z| activation.apply(z)).collect();
                (y, Cache::Activation { pre: x })
            }
            LayerSpec::GlobalAveragePool => {
                let (channels, len) = layout.as_seq();
                let y = x.chunks_exact(len).map(|row| row.iter().sum::<f64>() / len as f64).collect::<Vec<_>>();
                debug_assert_eq!(y.len(), b * channels);
                (y, Cache::Pool)
            }
        };
        caches.push(cache);
        x = y;
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::validation("forward pass produced non-finite logits"));
    }
    let logits = Tensor::new(vec![b, spec.num_classes], x)?;
    Ok((
        logits,
        Trace {
            batch: b,
            layouts,
            slots,
            caches,
        },
    ))
}

#[allow(clippy::too_many_arguments)]
fn conv_forward(
    x: &[f64],
    w: &[f64],
    bias: &[f64],
    b: usize,
    cin: usize,
    cout: usize,
    len: usize,
    k: usize,
) -> Vec<f64> {
    let pad = (k - 1) / 2;
    let mut out = vec![0.0; b * cout * len];
    for n in 0..b {
        for o in 0..cout {
            let orow = &mut out[(n * cout + o) * len..(n * cout + o + 1) * len];
            orow.fill(bias[o]);
            for c in 0..cin {
                let xrow = &x[(n * cin + c) * len..(n * cin + c + 1) * len];
                let taps = &w[(o * cin + c) * k..(o * cin + c + 1) * k];
                accumulate_taps(orow, xrow, taps, pad);
            }
        }
    }
    out
}

/// `out[t] += sum_j taps[j] * x[t + j - pad]`, zero outside the sequence.
#[inline]
fn accumulate_taps(out: &mut [f64], x: &[f64], taps: &[f64], pad: usize) {
    let len = x.len() as isize;
    for (j, &tap) in taps.iter().enumerate() {
        let shift = j as isize - pad as isize;
        let lo = (-shift).max(0);
        let hi = (len - shift).min(len);
        for t in lo..hi {
            out[t as usize] += tap * x[(t + shift) as usize];
        }
    }
}

fn depthwise_forward(x: &[f64], w: &[f64], bias: &[f64], b: usize, ch: usize, len: usize, k: usize) -> Vec<f64> {
    let pad = (k - 1) / 2;
    let mut out = vec![0.0; b * ch * len];
    for n in 0..b {
        for c in 0..ch {
            let r = (n * ch + c) * len..(n * ch + c + 1) * len;
            let orow = &mut out[r.clone()];
            orow.fill(bias[c]);
            accumulate_taps(orow, &x[r], &w[c * k..(c + 1) * k], pad);
        }
    }
    out
}

fn pointwise_forward(u: &[f64], w: &[f64], bias: &[f64], b: usize, cin: usize, cout: usize, len: usize) -> Vec<f64> {
    let mut out = vec![0.0; b * cout * len];
    for n in 0..b {
        for o in 0..cout {
            let orow = &mut out[(n * cout + o) * len..(n * cout + o + 1) * len];
            orow.fill(bias[o]);
            for c in 0..cin {
                let wc = w[o * cin + c];
                let urow = &u[(n * cin + c) * len..(n * cin + c + 1) * len];
                for (acc, &v) in orow.iter_mut().zip(urow) {
                    *acc += wc * v;
                }
            }
        }
    }
    out
}

fn activation_grad(activation: Activation, dy: &[f64], pre: &[f64]) -> Vec<f64> {
    dy.iter().zip(pre).map(|(&g, &z)| g * activation.derivative(z)).collect()
}

/// Parameter gradients for an upstream gradient on the logits.
pub fn backward_from_logits(
    spec: &ModelSpec,
    params: &ModelParameters,
    trace: &Trace,
    dlogits: &Tensor,
) -> Result<ModelParameters> {
    if dlogits.shape() != [trace.batch, spec.num_classes] {
        return Err(Error::structural(format!(
            "logit gradient shape {:?} does not match [{}, {}]",
            dlogits.shape(),
            trace.batch,
            spec.num_classes
        )));
    }
    let b = trace.batch;
    let mut grads = params.zeros_like();
    let mut dy = dlogits.values().to_vec();
    for (i, layer) in spec.layers.iter().enumerate().rev() {
        let layout = trace.layouts[i];
        dy = match (layer, &trace.caches[i]) {
            (
                &LayerSpec::Dense {
                    inputs,
                    outputs,
                    activation,
                },
                Cache::Dense { input, pre },
            ) => {
                let slot = trace.slots[i].unwrap();
                let dz = activation_grad(activation, &dy, pre);
                let w = params.entries[slot].weights.values();
                let g = &mut grads.entries[slot];
                let mut dx = vec![0.0; b * inputs];
                for n in 0..b {
                    let xr = &input[n * inputs..(n + 1) * inputs];
                    let dxr = &mut dx[n * inputs..(n + 1) * inputs];
                    for o in 0..outputs {
                        let d = dz[n * outputs + o];
                        g.biases.values_mut()[o] += d;
                        let gw = &mut g.weights.values_mut()[o * inputs..(o + 1) * inputs];
                        let wr = &w[o * inputs..(o + 1) * inputs];
                        for j in 0..inputs {
                            gw[j] += d * xr[j];
                            dxr[j] += wr[j] * d;
                        }
                    }
                }
                dx
            }
            (
                &LayerSpec::Conv1d {
                    in_channels: cin,
                    out_channels: cout,
                    kernel: k,
                    activation,
                },
                Cache::Conv { input, pre },
            ) => {
                let (_, len) = layout.as_seq();
                let slot = trace.slots[i].unwrap();
                let dz = activation_grad(activation, &dy, pre);
                let w = params.entries[slot].weights.values();
                let g = &mut grads.entries[slot];
                let mut dx = vec![0.0; b * cin * len];
                let pad = (k - 1) / 2;
                for n in 0..b {
                    for o in 0..cout {
                        let dzr = &dz[(n * cout + o) * len..(n * cout + o + 1) * len];
                        g.biases.values_mut()[o] += dzr.iter().sum::<f64>();
                        for c in 0..cin {
                            let r = (n * cin + c) * len..(n * cin + c + 1) * len;
                            let wi = (o * cin + c) * k;
                            correlate_grads(
                                dzr,
                                &input[r.clone()],
                                &w[wi..wi + k],
                                &mut g.weights.values_mut()[wi..wi + k],
                                &mut dx[r],
                                pad,
                            );
                        }
                    }
                }
                dx
            }
            (
                &LayerSpec::DepthwiseSeparableConv1d {
                    in_channels: cin,
                    out_channels: cout,
                    kernel: k,
                    activation,
                },
                Cache::Separable { input, depth, pre },
            ) => {
                let (_, len) = layout.as_seq();
                let slot = trace.slots[i].unwrap();
                let dz = activation_grad(activation, &dy, pre);
                let wd = params.entries[slot].weights.values();
                let wp = params.entries[slot + 1].weights.values();
                let mut du = vec![0.0; b * cin * len];
                {
                    let gp = &mut grads.entries[slot + 1];
                    for n in 0..b {
                        for o in 0..cout {
                            let dzr = &dz[(n * cout + o) * len..(n * cout + o + 1) * len];
                            gp.biases.values_mut()[o] += dzr.iter().sum::<f64>();
                            for c in 0..cin {
                                let r = (n * cin + c) * len..(n * cin + c + 1) * len;
                                let ur = &depth[r.clone()];
                                gp.weights.values_mut()[o * cin + c] +=
                                    dzr.iter().zip(ur).map(|(a, v)| a * v).sum::<f64>();
                                let wc = wp[o * cin + c];
                                for (acc, &d) in du[r].iter_mut().zip(dzr) {
                                    *acc += wc * d;
                                }
                            }
                        }
                    }
                }
                let gd = &mut grads.entries[slot];
                let mut dx = vec![0.0; b * cin * len];
                let pad = (k - 1) / 2;
                for n in 0..b {
                    for c in 0..cin {
                        let r = (n * cin + c) * len..(n * cin + c + 1) * len;
                        gd.biases.values_mut()[c] += du[r.clone()].iter().sum::<f64>();
                        correlate_grads(
                            &du[r.clone()],
                            &input[r.clone()],
                            &wd[c * k..(c + 1) * k],
                            &mut gd.weights.values_mut()[c * k..(c + 1) * k],
                            &mut dx[r],
                            pad,
                        );
                    }
                }
                dx
            }
            (LayerSpec::Dropout { .. }, Cache::Dropout { mask }) => match mask {
                Some(m) => dy.iter().zip(m).map(|(g, m)| g * m).collect(),
                None => dy,
            },
            (&LayerSpec::Activation { activation }, Cache::Activation { pre }) => {
                activation_grad(activation, &dy, pre)
            }
            (LayerSpec::GlobalAveragePool, Cache::Pool) => {
                let (_, len) = layout.as_seq();
                let inv = 1.0 / len as f64;
                dy.iter().flat_map(|&g| std::iter::repeat_n(g * inv, len)).collect()
            }
            _ => unreachable!("trace caches follow the spec's layer order"),
        };
    }
    Ok(grads)
}

/// Reverse of [`accumulate_taps`]: accumulates tap and input gradients.
#[inline]
fn correlate_grads(dout: &[f64], x: &[f64], taps: &[f64], dtaps: &mut [f64], dx: &mut [f64], pad: usize) {
    let len = x.len() as isize;
    for (j, (&tap, dtap)) in taps.iter().zip(dtaps.iter_mut()).enumerate() {
        let shift = j as isize - pad as isize;
        let lo = (-shift).max(0);
        let hi = (len - shift).min(len);
        let mut acc = 0.0;
        for t in lo..hi {
            let src = (t + shift) as usize;
            let d = dout[t as usize];
            acc += d * x[src];
            dx[src] += tap * d;
        }
        *dtap += acc;
    }
}

/// Loss and parameter gradients for one mini-batch.
#[allow(clippy::too_many_arguments)]
pub fn loss_and_gradients(
    spec: &ModelSpec,
    params: &ModelParameters,
    batch: &Tensor,
    labels: &[usize],
    loss: &HybridLossConfig,
    mode: Mode,
    gumbel_seed: u64,
) -> Result<(f64, ModelParameters)> {
    let (logits, trace) = forward_trace(spec, params, batch, mode)?;
    let (value, dlogits) = hybrid_loss(&logits, labels, loss, gumbel_seed)?;
    let grads = backward_from_logits(spec, params, &trace, &dlogits)?;
    if !grads.all_finite() {
        return Err(Error::validation("backward pass produced non-finite gradients"));
    }
    Ok((value, grads))
}

/// Class predictions by argmax of logits, ties toward the smaller index.
pub fn predict(spec: &ModelSpec, params: &ModelParameters, batch: &Tensor) -> Result<Vec<usize>> {
    let logits = forward(spec, params, batch, Mode::Eval)?;
    Ok((0..logits.rows()).map(|r| argmax(logits.row(r))).collect())
}

pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}
