//! Builders for the three regression networks and their retrainable fractions.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{LayerSpec, Network, Shape};

/// Dropout probability used wherever the architectures place a dropout layer.
pub const DROPOUT_P: f64 = 0.5;
/// Output length of the adaptive average pool ahead of the dense head.
pub const POOLED_LEN: usize = 6;
pub const HIDDEN_UNITS: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ArchitectureKind {
    #[serde(rename = "convnet-d")]
    ConvNetD,
    #[serde(rename = "convnet-s")]
    ConvNetS,
    #[serde(rename = "fcnn")]
    Fcnn,
}

impl ArchitectureKind {
    pub const ALL: [ArchitectureKind; 3] = [ArchitectureKind::ConvNetD, ArchitectureKind::ConvNetS, ArchitectureKind::Fcnn];

    pub fn name(&self) -> &'static str {
        match self {
            ArchitectureKind::ConvNetD => "convnet-d",
            ArchitectureKind::ConvNetS => "convnet-s",
            ArchitectureKind::Fcnn => "fcnn",
        }
    }
}

impl fmt::Display for ArchitectureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ArchitectureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "convnet-d" => Ok(ArchitectureKind::ConvNetD),
            "convnet-s" => Ok(ArchitectureKind::ConvNetS),
            "fcnn" => Ok(ArchitectureKind::Fcnn),
            _ => Err(Error::invalid(format!(
                "unknown architecture `{s}` (expected convnet-d, convnet-s or fcnn)"
            ))),
        }
    }
}

fn feature_stem(n_s: usize, deep: bool) -> Result<Vec<LayerSpec>> {
    let mut layers = vec![
        LayerSpec::conv1d(1, 64, 11, 4, 2),
        LayerSpec::Relu,
        LayerSpec::maxpool(3, 2),
        LayerSpec::conv1d(64, 192, 5, 1, 2),
        LayerSpec::Relu,
        LayerSpec::maxpool(3, 2),
    ];
    if deep {
        layers.extend([
            LayerSpec::conv1d(192, 384, 3, 1, 1),
            LayerSpec::Relu,
            LayerSpec::conv1d(384, 256, 3, 1, 1),
            LayerSpec::Relu,
            LayerSpec::conv1d(256, 256, 3, 1, 1),
            LayerSpec::Relu,
        ]);
        // The third pool needs at least three positions.
        let len = crate::nn::infer_shapes(&layers, Shape::new(1, n_s))
            .map_err(|e| too_short(n_s, e))?
            .last()
            .expect("stem has layers")
            .length;
        if len >= 3 {
            layers.push(LayerSpec::maxpool(3, 2));
        }
    }
    Ok(layers)
}

fn too_short(n_s: usize, cause: Error) -> Error {
    Error::invalid(format!("input length {n_s} is too short for this architecture: {cause}"))
}

/// Layer list of an architecture for inputs of length `n_s`.
pub fn layer_specs(kind: ArchitectureKind, n_s: usize) -> Result<Vec<LayerSpec>> {
    if n_s == 0 {
        return Err(Error::invalid("input length must be positive"));
    }
    let layers = match kind {
        ArchitectureKind::ConvNetD => {
            let mut l = feature_stem(n_s, true)?;
            l.extend([
                LayerSpec::AdaptiveAvgPool1d { output_len: POOLED_LEN },
                LayerSpec::Flatten,
                LayerSpec::Dropout { p: DROPOUT_P },
                LayerSpec::linear(256 * POOLED_LEN, HIDDEN_UNITS),
                LayerSpec::Relu,
                LayerSpec::Dropout { p: DROPOUT_P },
                LayerSpec::linear(HIDDEN_UNITS, HIDDEN_UNITS),
                LayerSpec::Relu,
                LayerSpec::linear(HIDDEN_UNITS, 1),
            ]);
            l
        }
        ArchitectureKind::ConvNetS => {
            let mut l = feature_stem(n_s, false)?;
            l.extend([
                LayerSpec::AdaptiveAvgPool1d { output_len: POOLED_LEN },
                LayerSpec::Flatten,
                LayerSpec::Dropout { p: DROPOUT_P },
                LayerSpec::linear(192 * POOLED_LEN, HIDDEN_UNITS),
                LayerSpec::Relu,
                LayerSpec::linear(HIDDEN_UNITS, 1),
            ]);
            l
        }
        ArchitectureKind::Fcnn => vec![
            LayerSpec::Flatten,
            LayerSpec::linear(n_s, HIDDEN_UNITS),
            LayerSpec::Relu,
            LayerSpec::linear(HIDDEN_UNITS, 1),
        ],
    };
    crate::nn::infer_shapes(&layers, Shape::new(1, n_s)).map_err(|e| too_short(n_s, e))?;
    Ok(layers)
}

pub fn build(kind: ArchitectureKind, n_s: usize, seed: u64) -> Result<Network> {
    Network::new(layer_specs(kind, n_s)?, Shape::new(1, n_s), seed)
}

pub fn build_convnet_d(n_s: usize, seed: u64) -> Result<Network> {
    build(ArchitectureKind::ConvNetD, n_s, seed)
}

pub fn build_convnet_s(n_s: usize, seed: u64) -> Result<Network> {
    build(ArchitectureKind::ConvNetS, n_s, seed)
}

pub fn build_fcnn(n_in: usize, seed: u64) -> Result<Network> {
    build(ArchitectureKind::Fcnn, n_in, seed)
}

/// Marks only the last `k` linear layers trainable and returns their share
/// of all parameters in percent.
pub fn retrainable_fraction(network: &mut Network, k: usize) -> Result<f64> {
    let linear: Vec<usize> = network
        .parametric_layers()
        .into_iter()
        .filter(|&i| matches!(network.layers()[i], LayerSpec::Linear { .. }))
        .collect();
    if k == 0 || k > linear.len() {
        return Err(Error::invalid(format!(
            "network has {} linear layers, cannot retrain the last {k}",
            linear.len()
        )));
    }
    let keep = &linear[linear.len() - k..];
    for layer in network.parametric_layers() {
        network.set_layer_trainable(layer, keep.contains(&layer))?;
    }
    Ok(network.trainable_params() as f64 / network.total_params() as f64 * 100.0)
}

/// Parameter count without allocating the network.
pub fn parameter_count(kind: ArchitectureKind, n_s: usize) -> Result<usize> {
    Ok(layer_specs(kind, n_s)?.iter().map(LayerSpec::param_count).sum())
}
