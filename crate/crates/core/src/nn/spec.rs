use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Linear,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Linear => z,
        }
    }

    /// Derivative evaluated at the pre-activation `z`.
    #[inline]
    pub fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Linear => 1.0,
        }
    }
}

/// One layer of a sequential model.
///
/// Convolutions run over a `[batch, channels, length]` activation with zero
/// padding of `(kernel - 1) / 2`, so the sequence length is preserved. A flat
/// `[batch, width]` input entering a convolution is read as one channel of
/// length `width`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Dense {
        inputs: usize,
        outputs: usize,
        activation: Activation,
    },
    Conv1d {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        activation: Activation,
    },
    /// Per-channel `kernel`-tap convolution with its own bias, followed by a
    /// 1x1 channel mix and a single activation.
    DepthwiseSeparableConv1d {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        activation: Activation,
    },
    Dropout {
        p: f64,
    },
    Activation {
        activation: Activation,
    },
    GlobalAveragePool,
}

impl LayerSpec {
    pub fn kind_name(&self) -> &'static str {
        match self {
            LayerSpec::Dense { .. } => "dense",
            LayerSpec::Conv1d { .. } => "conv1d",
            LayerSpec::DepthwiseSeparableConv1d { .. } => "depthwise_separable_conv1d",
            LayerSpec::Dropout { .. } => "dropout",
            LayerSpec::Activation { .. } => "activation",
            LayerSpec::GlobalAveragePool => "global_average_pool",
        }
    }

    /// Trainable parameters (weights + biases) of this layer.
    pub fn param_count(&self) -> usize {
        match *self {
            LayerSpec::Dense {
                inputs, outputs, ..
            } => inputs * outputs + outputs,
            LayerSpec::Conv1d {
                in_channels,
                out_channels,
                kernel,
                ..
            } => kernel * in_channels * out_channels + out_channels,
            LayerSpec::DepthwiseSeparableConv1d {
                in_channels,
                out_channels,
                kernel,
                ..
            } => (kernel * in_channels + in_channels) + (in_channels * out_channels + out_channels),
            LayerSpec::Dropout { .. }
            | LayerSpec::Activation { .. }
            | LayerSpec::GlobalAveragePool => 0,
        }
    }

    /// Shapes `(weights, biases)` of every parameter entry this layer owns,
    /// along with the entry suffix.
    /// Activation applied to the layer's own output, if it has weights.
    pub(crate) fn weight_activation(&self) -> Option<Activation> {
        match *self {
            LayerSpec::Dense { activation, .. }
            | LayerSpec::Conv1d { activation, .. }
            | LayerSpec::DepthwiseSeparableConv1d { activation, .. } => Some(activation),
            _ => None,
        }
    }

    pub(crate) fn param_shapes(&self) -> Vec<(&'static str, Vec<usize>, Vec<usize>)> {
        match *self {
            LayerSpec::Dense {
                inputs, outputs, ..
            } => vec![("dense", vec![outputs, inputs], vec![outputs])],
            LayerSpec::Conv1d {
                in_channels,
                out_channels,
                kernel,
                ..
            } => vec![(
                "conv1d",
                vec![out_channels, in_channels, kernel],
                vec![out_channels],
            )],
            LayerSpec::DepthwiseSeparableConv1d {
                in_channels,
                out_channels,
                kernel,
                ..
            } => vec![
                ("depthwise", vec![in_channels, kernel], vec![in_channels]),
                ("pointwise", vec![out_channels, in_channels], vec![out_channels]),
            ],
            _ => Vec::new(),
        }
    }

    fn validate(&self, index: usize) -> Result<()> {
        let bad = |msg: String| Err(Error::validation(format!("layer {index} ({}): {msg}", self.kind_name())));
        match *self {
            LayerSpec::Dense {
                inputs, outputs, ..
            } if inputs == 0 || outputs == 0 => bad("widths must be positive".into()),
            LayerSpec::Conv1d {
                in_channels,
                out_channels,
                kernel,
                ..
            }
            | LayerSpec::DepthwiseSeparableConv1d {
                in_channels,
                out_channels,
                kernel,
                ..
            } => {
                if in_channels == 0 || out_channels == 0 {
                    bad("channel counts must be positive".into())
                } else if kernel == 0 || kernel % 2 == 0 {
                    bad(format!("kernel size must be odd and >= 1, got {kernel}"))
                } else {
                    Ok(())
                }
            }
            LayerSpec::Dropout { p } if !(0.0..1.0).contains(&p) => {
                bad(format!("dropout probability must lie in [0, 1), got {p}"))
            }
            _ => Ok(()),
        }
    }
}

/// Activation layout between layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Layout {
    Flat { width: usize },
    Seq { channels: usize, length: usize },
}

impl Layout {
    pub(crate) fn as_seq(self) -> (usize, usize) {
        match self {
            Layout::Flat { width } => (1, width),
            Layout::Seq { channels, length } => (channels, length),
        }
    }

    pub(crate) fn size(self) -> usize {
        match self {
            Layout::Flat { width } => width,
            Layout::Seq { channels, length } => channels * length,
        }
    }
}

/// A sequential classifier over fixed-width feature vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub input_width: usize,
    pub num_classes: usize,
    pub layers: Vec<LayerSpec>,
}

impl ModelSpec {
    /// The lightweight classifier used by the federation: a standard conv
    /// stem, two depthwise-separable blocks, dropout, global average pooling
    /// and a dense head.
    pub fn lightweight(input_width: usize, num_classes: usize, dropout: f64) -> Self {
        use Activation::*;
        Self {
            input_width,
            num_classes,
            layers: vec![
                LayerSpec::Conv1d {
                    in_channels: 1,
                    out_channels: 16,
                    kernel: 3,
                    activation: Relu,
                },
                LayerSpec::DepthwiseSeparableConv1d {
                    in_channels: 16,
                    out_channels: 32,
                    kernel: 3,
                    activation: Relu,
                },
                LayerSpec::DepthwiseSeparableConv1d {
                    in_channels: 32,
                    out_channels: 32,
                    kernel: 3,
                    activation: Relu,
                },
                LayerSpec::Dropout { p: dropout },
                LayerSpec::GlobalAveragePool,
                LayerSpec::Dense {
                    inputs: 32,
                    outputs: num_classes,
                    activation: Linear,
                },
            ],
        }
    }

    /// Same depth and widths as [`ModelSpec::lightweight`] with every
    /// depthwise-separable block replaced by a standard convolution.
    pub fn standard(input_width: usize, num_classes: usize, dropout: f64) -> Self {
        let mut spec = Self::lightweight(input_width, num_classes, dropout);
        for layer in &mut spec.layers {
            if let LayerSpec::DepthwiseSeparableConv1d {
                in_channels,
                out_channels,
                kernel,
                activation,
            } = *layer
            {
                *layer = LayerSpec::Conv1d {
                    in_channels,
                    out_channels,
                    kernel,
                    activation,
                };
            }
        }
        spec
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(LayerSpec::param_count).sum()
    }

    /// Checks every layer and the shape flow from input to logits, returning
    /// the layout entering each layer.
    pub(crate) fn layouts(&self) -> Result<Vec<Layout>> {
        if self.input_width == 0 {
            return Err(Error::validation("input width must be positive"));
        }
        if self.num_classes < 2 {
            return Err(Error::validation("a classifier needs at least 2 classes"));
        }
        let mut layout = Layout::Flat {
            width: self.input_width,
        };
        let mut layouts = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            layer.validate(i)?;
            layouts.push(layout);
            let mismatch = |what: String| {
                Err(Error::structural(format!(
                    "layer {i} ({}): {what}",
                    layer.kind_name()
                )))
            };
            layout = match *layer {
                LayerSpec::Dense {
                    inputs, outputs, ..
                } => {
                    if layout.size() != inputs {
                        return mismatch(format!(
                            "expects {inputs} inputs, receives {}",
                            layout.size()
                        ));
                    }
                    Layout::Flat { width: outputs }
                }
                LayerSpec::Conv1d {
                    in_channels,
                    out_channels,
                    ..
                }
                | LayerSpec::DepthwiseSeparableConv1d {
                    in_channels,
                    out_channels,
                    ..
                } => {
                    let (channels, length) = layout.as_seq();
                    if channels != in_channels {
                        return mismatch(format!(
                            "expects {in_channels} channels, receives {channels}"
                        ));
                    }
                    Layout::Seq {
                        channels: out_channels,
                        length,
                    }
                }
                LayerSpec::GlobalAveragePool => match layout {
                    Layout::Seq { channels, .. } => Layout::Flat { width: channels },
                    Layout::Flat { .. } => {
                        return mismatch("needs a [batch, channels, length] input".into())
                    }
                },
                LayerSpec::Dropout { .. } | LayerSpec::Activation { .. } => layout,
            };
        }
        if layout.size() != self.num_classes {
            return Err(Error::structural(format!(
                "model output {layout:?} does not match {} classes",
                self.num_classes
            )));
        }
        Ok(layouts)
    }

    pub fn validate(&self) -> Result<()> {
        self.layouts().map(|_| ())
    }
}
