use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-sample feature-map shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Shape {
    pub channels: usize,
    pub length: usize,
}

impl Shape {
    pub fn new(channels: usize, length: usize) -> Self {
        Shape { channels, length }
    }

    pub fn numel(&self) -> usize {
        self.channels * self.length
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.channels, self.length)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv1d {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    },
    Relu,
    MaxPool1d {
        kernel: usize,
        stride: usize,
    },
    AdaptiveAvgPool1d {
        output_len: usize,
    },
    Dropout {
        p: f64,
    },
    /// Collapses (C, L) into C·L features of length 1.
    Flatten,
    Linear {
        in_features: usize,
        out_features: usize,
    },
}

impl LayerSpec {
    pub fn conv1d(in_channels: usize, out_channels: usize, kernel: usize, stride: usize, padding: usize) -> Self {
        LayerSpec::Conv1d {
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
        }
    }

    pub fn maxpool(kernel: usize, stride: usize) -> Self {
        LayerSpec::MaxPool1d { kernel, stride }
    }

    pub fn linear(in_features: usize, out_features: usize) -> Self {
        LayerSpec::Linear {
            in_features,
            out_features,
        }
    }

    pub fn short_name(&self) -> &'static str {
        match self {
            LayerSpec::Conv1d { .. } => "conv1d",
            LayerSpec::Relu => "relu",
            LayerSpec::MaxPool1d { .. } => "maxpool1d",
            LayerSpec::AdaptiveAvgPool1d { .. } => "adaptive_avgpool1d",
            LayerSpec::Dropout { .. } => "dropout",
            LayerSpec::Flatten => "flatten",
            LayerSpec::Linear { .. } => "linear",
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: usize| {
            if v == 0 {
                Err(Error::invalid(format!("{} {name} must be positive", self.short_name())))
            } else {
                Ok(())
            }
        };
        match *self {
            LayerSpec::Conv1d {
                in_channels,
                out_channels,
                kernel,
                stride,
                ..
            } => {
                positive("in_channels", in_channels)?;
                positive("out_channels", out_channels)?;
                positive("kernel", kernel)?;
                positive("stride", stride)
            }
            LayerSpec::MaxPool1d { kernel, stride } => {
                positive("kernel", kernel)?;
                positive("stride", stride)
            }
            LayerSpec::AdaptiveAvgPool1d { output_len } => positive("output_len", output_len),
            LayerSpec::Dropout { p } => {
                if (0.0..1.0).contains(&p) {
                    Ok(())
                } else {
                    Err(Error::invalid(format!("dropout probability must lie in [0, 1), got {p}")))
                }
            }
            LayerSpec::Linear {
                in_features,
                out_features,
            } => {
                positive("in_features", in_features)?;
                positive("out_features", out_features)
            }
            LayerSpec::Relu | LayerSpec::Flatten => Ok(()),
        }
    }

    /// Output shape for one sample of shape `input`.
    pub fn output_shape(&self, input: Shape) -> Result<Shape> {
        self.validate()?;
        let Shape { channels, length } = input;
        match *self {
            LayerSpec::Conv1d {
                in_channels,
                out_channels,
                kernel,
                stride,
                padding,
            } => {
                if channels != in_channels {
                    return Err(Error::invalid(format!(
                        "conv1d expects {in_channels} input channels, got {channels}"
                    )));
                }
                if length + 2 * padding < kernel {
                    return Err(Error::invalid(format!(
                        "conv1d kernel {kernel} exceeds padded input length {}",
                        length + 2 * padding
                    )));
                }
                Ok(Shape::new(out_channels, conv_output_len(length, kernel, stride, padding)))
            }
            LayerSpec::MaxPool1d { kernel, stride } => {
                if length < kernel {
                    return Err(Error::invalid(format!(
                        "maxpool1d kernel {kernel} exceeds input length {length}"
                    )));
                }
                Ok(Shape::new(channels, (length - kernel) / stride + 1))
            }
            LayerSpec::AdaptiveAvgPool1d { output_len } => Ok(Shape::new(channels, output_len)),
            LayerSpec::Dropout { .. } | LayerSpec::Relu => Ok(input),
            LayerSpec::Flatten => Ok(Shape::new(channels * length, 1)),
            LayerSpec::Linear {
                in_features,
                out_features,
            } => {
                if length != 1 || channels != in_features {
                    return Err(Error::invalid(format!(
                        "linear expects a flat vector of {in_features} features, got shape {input}"
                    )));
                }
                Ok(Shape::new(out_features, 1))
            }
        }
    }

    /// Shapes of the (weight, bias) blocks of a parametric layer.
    pub fn param_shapes(&self) -> Option<(Vec<usize>, Vec<usize>)> {
        match *self {
            LayerSpec::Conv1d {
                in_channels,
                out_channels,
                kernel,
                ..
            } => Some((vec![out_channels, in_channels, kernel], vec![out_channels])),
            LayerSpec::Linear {
                in_features,
                out_features,
            } => Some((vec![out_features, in_features], vec![out_features])),
            _ => None,
        }
    }

    pub fn param_count(&self) -> usize {
        self.param_shapes()
            .map(|(w, b)| w.iter().product::<usize>() + b.iter().product::<usize>())
            .unwrap_or(0)
    }

    /// Fan-in used by the weight initializer.
    pub(crate) fn fan_in(&self) -> usize {
        match *self {
            LayerSpec::Conv1d { in_channels, kernel, .. } => in_channels * kernel,
            LayerSpec::Linear { in_features, .. } => in_features,
            _ => 0,
        }
    }
}

pub fn conv_output_len(length: usize, kernel: usize, stride: usize, padding: usize) -> usize {
    (length + 2 * padding - kernel) / stride + 1
}

/// Shape after every layer, or the first incompatibility.
pub fn infer_shapes(layers: &[LayerSpec], input: Shape) -> Result<Vec<Shape>> {
    let mut shapes = Vec::with_capacity(layers.len());
    let mut current = input;
    for (i, layer) in layers.iter().enumerate() {
        current = layer
            .output_shape(current)
            .map_err(|e| Error::invalid(format!("layer {i} ({}): {e}", layer.short_name())))?;
        shapes.push(current);
    }
    Ok(shapes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conv_length_formula() {
        assert_eq!(conv_output_len(75, 11, 4, 2), 18);
        assert_eq!(conv_output_len(38, 11, 4, 2), 8);
        let conv = LayerSpec::conv1d(1, 64, 11, 4, 2);
        assert_eq!(conv.output_shape(Shape::new(1, 75)).unwrap(), Shape::new(64, 18));
        assert!(conv.output_shape(Shape::new(2, 75)).is_err());
        assert!(conv.output_shape(Shape::new(1, 6)).is_err());
    }

    #[test]
    fn maxpool_length_formula() {
        let pool = LayerSpec::maxpool(3, 2);
        assert_eq!(pool.output_shape(Shape::new(4, 18)).unwrap().length, 8);
        assert_eq!(pool.output_shape(Shape::new(4, 3)).unwrap().length, 1);
        assert!(pool.output_shape(Shape::new(4, 2)).is_err());
    }

    #[test]
    fn flatten_and_linear() {
        let s = LayerSpec::Flatten.output_shape(Shape::new(256, 6)).unwrap();
        assert_eq!(s, Shape::new(1536, 1));
        assert_eq!(LayerSpec::linear(1536, 4096).output_shape(s).unwrap(), Shape::new(4096, 1));
        assert!(LayerSpec::linear(1536, 4096).output_shape(Shape::new(256, 6)).is_err());
    }

    #[test]
    fn invalid_parameters() {
        assert!(LayerSpec::Dropout { p: 1.0 }.validate().is_err());
        assert!(LayerSpec::Dropout { p: -0.1 }.validate().is_err());
        assert!(LayerSpec::maxpool(0, 1).validate().is_err());
        assert!(LayerSpec::AdaptiveAvgPool1d { output_len: 0 }.validate().is_err());
    }

    #[test]
    fn shape_inference_reports_failing_layer() {
        let layers = vec![LayerSpec::conv1d(1, 4, 3, 1, 0), LayerSpec::maxpool(5, 1)];
        let err = infer_shapes(&layers, Shape::new(1, 6)).unwrap_err();
        assert!(err.to_string().contains("layer 1"));
    }

    #[test]
    fn param_counts() {
        assert_eq!(LayerSpec::conv1d(1, 64, 11, 4, 2).param_count(), 768);
        assert_eq!(LayerSpec::linear(4096, 1).param_count(), 4097);
        assert_eq!(LayerSpec::Relu.param_count(), 0);
    }
}
