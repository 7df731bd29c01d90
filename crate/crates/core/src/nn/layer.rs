use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

use super::tensor::numel;

/// One layer of a sequential [`Model`](super::Model).
///
/// Shapes are row-major: images are `[C, H, W]`, sequences `[T, features]`,
/// token inputs `[T]` (indices stored as floats).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LayerSpec {
    /// `y = W x + b`, `W: [outputs, inputs]`. Accepts any input with exactly
    /// `inputs` values (flattened to `[outputs]`), or `[N, inputs]` applied
    /// per row to give `[N, outputs]`.
    Dense { inputs: usize, outputs: usize },
    /// `[C, H, W] -> [O, H', W']`, square kernel, zero padding.
    Conv2d {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    },
    Relu,
    /// 2×2 window, stride 2, over `[C, H, W]`; odd trailing rows/cols dropped.
    MaxPool2,
    /// Softmax over the last axis.
    Softmax,
    /// `[T, inputs] -> [T, hidden]`, all hidden states from a zero start.
    Lstm { inputs: usize, hidden: usize },
    /// `[T]` token indices `-> [T, dim]`.
    Embedding { vocab: usize, dim: usize },
}

/// Shape and role of one parameter tensor of a layer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamShape {
    pub suffix: &'static str,
    pub dims: Vec<usize>,
}

impl LayerSpec {
    pub fn kind_name(&self) -> &'static str {
        match self {
            LayerSpec::Dense { .. } => "dense",
            LayerSpec::Conv2d { .. } => "conv2d",
            LayerSpec::Relu => "relu",
            LayerSpec::MaxPool2 => "maxpool2",
            LayerSpec::Softmax => "softmax",
            LayerSpec::Lstm { .. } => "lstm",
            LayerSpec::Embedding { .. } => "embedding",
        }
    }

    /// Output dims for a given input, or a description of the mismatch.
    pub fn output_dims(&self, input: &[usize]) -> Result<Vec<usize>, String> {
        match *self {
            LayerSpec::Dense { inputs, outputs } => {
                if numel(input) == inputs {
                    Ok(vec![outputs])
                } else if input.len() == 2 && input[1] == inputs {
                    Ok(vec![input[0], outputs])
                } else {
                    Err(format!("dense expects {inputs} inputs, got {input:?}"))
                }
            }
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
                kernel,
                stride,
                padding,
            } => {
                if input.len() != 3 || input[0] != in_channels {
                    return Err(format!(
                        "conv2d expects [{in_channels}, H, W], got {input:?}"
                    ));
                }
                let (h, w) = (input[1] + 2 * padding, input[2] + 2 * padding);
                if h < kernel || w < kernel {
                    return Err(format!("input {input:?} smaller than kernel {kernel}"));
                }
                Ok(vec![
                    out_channels,
                    (h - kernel) / stride + 1,
                    (w - kernel) / stride + 1,
                ])
            }
            LayerSpec::Relu | LayerSpec::Softmax => Ok(input.to_vec()),
            LayerSpec::MaxPool2 => {
                if input.len() != 3 || input[1] < 2 || input[2] < 2 {
                    return Err(format!("maxpool2 expects [C, H>=2, W>=2], got {input:?}"));
                }
                Ok(vec![input[0], input[1] / 2, input[2] / 2])
            }
            LayerSpec::Lstm { inputs, hidden } => {
                if input.len() != 2 || input[1] != inputs {
                    return Err(format!("lstm expects [T, {inputs}], got {input:?}"));
                }
                Ok(vec![input[0], hidden])
            }
            LayerSpec::Embedding { dim, .. } => {
                if input.len() != 1 {
                    return Err(format!("embedding expects [T], got {input:?}"));
                }
                Ok(vec![input[0], dim])
            }
        }
    }

    pub fn param_shapes(&self) -> Vec<ParamShape> {
        let p = |suffix, dims: &[usize]| ParamShape {
            suffix,
            dims: dims.to_vec(),
        };
        match *self {
            LayerSpec::Dense { inputs, outputs } => {
                vec![p("weight", &[outputs, inputs]), p("bias", &[outputs])]
            }
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
                kernel,
                ..
            } => vec![
                p("weight", &[out_channels, in_channels, kernel, kernel]),
                p("bias", &[out_channels]),
            ],
            LayerSpec::Lstm { inputs, hidden } => vec![
                p("w_ih", &[4 * hidden, inputs]),
                p("w_hh", &[4 * hidden, hidden]),
                p("bias", &[4 * hidden]),
            ],
            LayerSpec::Embedding { vocab, dim } => vec![p("table", &[vocab, dim])],
            LayerSpec::Relu | LayerSpec::MaxPool2 | LayerSpec::Softmax => vec![],
        }
    }

    pub fn param_count(&self) -> usize {
        self.param_shapes().iter().map(|s| numel(&s.dims)).sum()
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            LayerSpec::Dense { inputs, outputs } => inputs > 0 && outputs > 0,
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
                kernel,
                stride,
                ..
            } => in_channels > 0 && out_channels > 0 && kernel > 0 && stride > 0,
            LayerSpec::Lstm { inputs, hidden } => inputs > 0 && hidden > 0,
            LayerSpec::Embedding { vocab, dim } => vocab > 0 && dim > 0,
            _ => true,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("degenerate layer {self}")))
        }
    }
}

impl fmt::Display for LayerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            LayerSpec::Dense { inputs, outputs } => write!(f, "dense({inputs},{outputs})"),
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
                kernel,
                stride,
                padding,
            } => write!(
                f,
                "conv2d({in_channels},{out_channels},{kernel},{stride},{padding})"
            ),
            LayerSpec::Lstm { inputs, hidden } => write!(f, "lstm({inputs},{hidden})"),
            LayerSpec::Embedding { vocab, dim } => write!(f, "embedding({vocab},{dim})"),
            other => f.write_str(other.kind_name()),
        }
    }
}

impl FromStr for LayerSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (name, args) = match s.find('(') {
            Some(open) => {
                let inner = s[open + 1..]
                    .strip_suffix(')')
                    .ok_or_else(|| Error::invalid(format!("unterminated layer spec `{s}`")))?;
                let args = inner
                    .split(',')
                    .map(|a| a.trim().parse::<usize>())
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|_| Error::invalid(format!("bad layer arguments in `{s}`")))?;
                (&s[..open], args)
            }
            None => (s, Vec::new()),
        };
        let spec = match (name, args.as_slice()) {
            ("dense", &[inputs, outputs]) => LayerSpec::Dense { inputs, outputs },
            ("conv2d", &[in_channels, out_channels, kernel, stride, padding]) => {
                LayerSpec::Conv2d {
                    in_channels,
                    out_channels,
                    kernel,
                    stride,
                    padding,
                }
            }
            ("relu", []) => LayerSpec::Relu,
            ("maxpool2", []) => LayerSpec::MaxPool2,
            ("softmax", []) => LayerSpec::Softmax,
            ("lstm", &[inputs, hidden]) => LayerSpec::Lstm { inputs, hidden },
            ("embedding", &[vocab, dim]) => LayerSpec::Embedding { vocab, dim },
            _ => return Err(Error::invalid(format!("unknown layer spec `{s}`"))),
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// Run shape inference through a stack, reporting the first failing layer.
pub fn infer_shapes(layers: &[LayerSpec], input: &[usize]) -> Result<Vec<Vec<usize>>> {
    let mut dims = input.to_vec();
    let mut out = Vec::with_capacity(layers.len());
    for (i, layer) in layers.iter().enumerate() {
        layer.validate()?;
        dims = layer
            .output_dims(&dims)
            .map_err(|detail| Error::LayerShape { layer: i, detail })?;
        out.push(dims.clone());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_form_round_trips() {
        for spec in [
            LayerSpec::Dense {
                inputs: 3,
                outputs: 4,
            },
            LayerSpec::Conv2d {
                in_channels: 1,
                out_channels: 8,
                kernel: 3,
                stride: 1,
                padding: 1,
            },
            LayerSpec::Relu,
            LayerSpec::MaxPool2,
            LayerSpec::Softmax,
            LayerSpec::Lstm {
                inputs: 5,
                hidden: 7,
            },
            LayerSpec::Embedding { vocab: 96, dim: 16 },
        ] {
            assert_eq!(spec.to_string().parse::<LayerSpec>().unwrap(), spec);
        }
        assert!("dense(3)".parse::<LayerSpec>().is_err());
        assert!("dense(0,3)".parse::<LayerSpec>().is_err());
    }

    #[test]
    fn inference_reports_failing_layer() {
        let layers = [
            LayerSpec::Conv2d {
                in_channels: 1,
                out_channels: 2,
                kernel: 3,
                stride: 1,
                padding: 1,
            },
            LayerSpec::MaxPool2,
            LayerSpec::Dense {
                inputs: 10,
                outputs: 2,
            },
        ];
        match infer_shapes(&layers, &[1, 8, 8]) {
            Err(Error::LayerShape { layer, .. }) => assert_eq!(layer, 2),
            other => panic!("unexpected {other:?}"),
        }
        let dims = infer_shapes(&layers[..2], &[1, 8, 8]).unwrap();
        assert_eq!(dims[1], vec![2, 4, 4]);
    }
}
