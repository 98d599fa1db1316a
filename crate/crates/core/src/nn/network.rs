use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::kernels::{self, ConvGeom};
use super::layer::{infer_shapes, LayerSpec, Shape};
use super::tensor::Tensor1D;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockRole {
    Weight,
    Bias,
}

/// One weight or bias array owned by a parametric layer.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamBlock {
    pub layer: usize,
    pub role: BlockRole,
    pub dims: Vec<usize>,
    pub values: Vec<f64>,
    pub trainable: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Ordered layer list with its parameter store and trainability mask.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    layers: Vec<LayerSpec>,
    input_shape: Shape,
    shapes: Vec<Shape>,
    blocks: Vec<ParamBlock>,
    /// (weight, bias) block indices for each parametric layer.
    layer_blocks: Vec<Option<(usize, usize)>>,
    seed: u64,
}

enum Record {
    Conv { cols: Vec<f64>, geom: ConvGeom },
    Linear { input: Vec<f64> },
    Relu { output: Vec<f64> },
    MaxPool { arg: Vec<u32>, rows: usize, in_len: usize },
    AdaptiveAvg { rows: usize, in_len: usize, out_len: usize },
    Dropout { mask: Vec<f64> },
    Passthrough,
}

/// Activations recorded by a training forward pass.
#[derive(Default)]
pub struct Tape {
    records: Vec<Record>,
    batch: usize,
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn clear(&mut self) {
        self.records.clear();
        self.batch = 0;
    }
}

/// Gradient buffers; `None` for frozen blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub blocks: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    pub fn zero(&mut self) {
        for g in self.blocks.iter_mut().flatten() {
            g.iter_mut().for_each(|v| *v = 0.0);
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for g in self.blocks.iter_mut().flatten() {
            g.iter_mut().for_each(|v| *v *= factor);
        }
    }
}

/// Copy of the trainable blocks, used to restore the best epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSnapshot {
    blocks: Vec<Option<Vec<f64>>>,
}

/// Negative slope in the Kaiming gain; sqrt(5) gives a bound of 1/sqrt(fan_in).
pub const INIT_NEGATIVE_SLOPE: f64 = 2.236_067_977_499_79;

/// Half-width of the uniform weight distribution for a layer with `fan_in` inputs.
pub fn init_bound(fan_in: usize) -> f64 {
    let gain_sq = 2.0 / (1.0 + INIT_NEGATIVE_SLOPE * INIT_NEGATIVE_SLOPE);
    (3.0 * gain_sq / fan_in as f64).sqrt()
}

impl Network {
    /// Builds the network and draws Kaiming-uniform fan-in weights with zero
    /// biases, using the leaky-ReLU gain for slope `INIT_NEGATIVE_SLOPE`.
    pub fn new(layers: Vec<LayerSpec>, input_shape: Shape, seed: u64) -> Result<Self> {
        if input_shape.channels == 0 || input_shape.length == 0 {
            return Err(Error::invalid(format!("input shape {input_shape} must be positive")));
        }
        if layers.is_empty() {
            return Err(Error::invalid("network needs at least one layer"));
        }
        let shapes = infer_shapes(&layers, input_shape)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut blocks = Vec::new();
        let mut layer_blocks = Vec::with_capacity(layers.len());
        for (i, layer) in layers.iter().enumerate() {
            let Some((wdims, bdims)) = layer.param_shapes() else {
                layer_blocks.push(None);
                continue;
            };
            let bound = init_bound(layer.fan_in());
            let dist = Uniform::new_inclusive(-bound, bound).map_err(|e| Error::invalid(e.to_string()))?;
            let wlen = wdims.iter().product();
            let weights: Vec<f64> = (0..wlen).map(|_| dist.sample(&mut rng)).collect();
            let blen = bdims.iter().product();
            layer_blocks.push(Some((blocks.len(), blocks.len() + 1)));
            blocks.push(ParamBlock {
                layer: i,
                role: BlockRole::Weight,
                dims: wdims,
                values: weights,
                trainable: true,
            });
            blocks.push(ParamBlock {
                layer: i,
                role: BlockRole::Bias,
                dims: bdims,
                values: vec![0.0; blen],
                trainable: true,
            });
        }
        Ok(Network {
            layers,
            input_shape,
            shapes,
            blocks,
            layer_blocks,
            seed,
        })
    }

    /// Reassembles a network from stored parts, checking consistency.
    pub(crate) fn from_parts(layers: Vec<LayerSpec>, input_shape: Shape, blocks: Vec<ParamBlock>, seed: u64) -> Result<Self> {
        let mut net = Network::new(layers, input_shape, seed)?;
        if blocks.len() != net.blocks.len() {
            return Err(Error::invalid(format!(
                "expected {} parameter blocks, found {}",
                net.blocks.len(),
                blocks.len()
            )));
        }
        for (i, (have, want)) in blocks.iter().zip(&net.blocks).enumerate() {
            if have.layer != want.layer || have.role != want.role || have.dims != want.dims {
                return Err(Error::invalid(format!("parameter block {i} does not match the layer list")));
            }
            if have.values.len() != want.values.len() {
                return Err(Error::invalid(format!("parameter block {i} has the wrong number of values")));
            }
        }
        net.blocks = blocks;
        Ok(net)
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn input_shape(&self) -> Shape {
        self.input_shape
    }

    pub fn output_shape(&self) -> Shape {
        *self.shapes.last().expect("network has layers")
    }

    /// Output shape of every layer.
    pub fn shapes(&self) -> &[Shape] {
        &self.shapes
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn blocks(&self) -> &[ParamBlock] {
        &self.blocks
    }

    pub(crate) fn blocks_mut(&mut self) -> &mut [ParamBlock] {
        &mut self.blocks
    }

    /// Indices of layers that own parameters, in network order.
    pub fn parametric_layers(&self) -> Vec<usize> {
        (0..self.layers.len()).filter(|&i| self.layer_blocks[i].is_some()).collect()
    }

    pub fn total_params(&self) -> usize {
        self.blocks.iter().map(|b| b.values.len()).sum()
    }

    pub fn trainable_params(&self) -> usize {
        self.blocks.iter().filter(|b| b.trainable).map(|b| b.values.len()).sum()
    }

    pub fn param_count_of_layer(&self, layer: usize) -> usize {
        self.layers.get(layer).map(|l| l.param_count()).unwrap_or(0)
    }

    pub fn is_layer_trainable(&self, layer: usize) -> bool {
        self.layer_blocks
            .get(layer)
            .copied()
            .flatten()
            .is_some_and(|(w, _)| self.blocks[w].trainable)
    }

    pub fn set_layer_trainable(&mut self, layer: usize, trainable: bool) -> Result<()> {
        let (w, b) = self
            .layer_blocks
            .get(layer)
            .copied()
            .flatten()
            .ok_or_else(|| Error::invalid(format!("layer {layer} has no parameters")))?;
        self.blocks[w].trainable = trainable;
        self.blocks[b].trainable = trainable;
        Ok(())
    }

    pub fn set_all_trainable(&mut self, trainable: bool) {
        self.blocks.iter_mut().for_each(|b| b.trainable = trainable);
    }

    /// Keeps only the last `k` parametric layers trainable.
    pub fn freeze_all_but_last(&mut self, k: usize) -> Result<()> {
        let parametric = self.parametric_layers();
        if k == 0 || k > parametric.len() {
            return Err(Error::invalid(format!(
                "k must lie in 1..={}, got {k}",
                parametric.len()
            )));
        }
        let cut = parametric.len() - k;
        for (pos, &layer) in parametric.iter().enumerate() {
            self.set_layer_trainable(layer, pos >= cut)?;
        }
        Ok(())
    }

    pub fn gradients(&self) -> Gradients {
        Gradients {
            blocks: self
                .blocks
                .iter()
                .map(|b| b.trainable.then(|| vec![0.0; b.values.len()]))
                .collect(),
        }
    }

    pub fn snapshot(&self) -> ParamSnapshot {
        ParamSnapshot {
            blocks: self.blocks.iter().map(|b| b.trainable.then(|| b.values.clone())).collect(),
        }
    }

    pub fn restore(&mut self, snap: &ParamSnapshot) -> Result<()> {
        if snap.blocks.len() != self.blocks.len() {
            return Err(Error::invalid("snapshot does not belong to this network"));
        }
        for (block, saved) in self.blocks.iter_mut().zip(&snap.blocks) {
            if let Some(values) = saved {
                if values.len() != block.values.len() {
                    return Err(Error::invalid("snapshot does not belong to this network"));
                }
                block.values.copy_from_slice(values);
            }
        }
        Ok(())
    }

    /// SHA-256 over the layer list, seed, mask and parameter bytes.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update(serde_json::to_vec(&self.layers).expect("layer specs serialize"));
        h.update(self.seed.to_le_bytes());
        for b in &self.blocks {
            h.update([b.trainable as u8]);
            for v in &b.values {
                h.update(v.to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }

    fn check_input(&self, input: &Tensor1D) -> Result<()> {
        if input.channels() != self.input_shape.channels || input.length() != self.input_shape.length {
            return Err(Error::invalid(format!(
                "network expects input shape {}, got ({}, {})",
                self.input_shape,
                input.channels(),
                input.length()
            )));
        }
        if !input.all_finite() {
            return Err(Error::invalid("input contains non-finite values"));
        }
        Ok(())
    }

    /// Inference pass with dropout disabled.
    pub fn predict(&self, input: &Tensor1D) -> Result<Tensor1D> {
        self.run(input, Mode::Eval, None::<&mut ChaCha8Rng>, None)
    }

    /// Forward pass that records what `backward` needs.
    pub fn forward_recorded<R: Rng>(&self, input: &Tensor1D, mode: Mode, rng: &mut R, tape: &mut Tape) -> Result<Tensor1D> {
        tape.clear();
        self.run(input, mode, Some(rng), Some(tape))
    }

    fn run<R: Rng>(&self, input: &Tensor1D, mode: Mode, mut rng: Option<&mut R>, mut tape: Option<&mut Tape>) -> Result<Tensor1D> {
        self.check_input(input)?;
        let batch = input.batch();
        let mut x = input.values().to_vec();
        let mut shape = self.input_shape;
        let recording = tape.is_some();
        for (i, layer) in self.layers.iter().enumerate() {
            let out = self.shapes[i];
            let (y, record) = match *layer {
                LayerSpec::Conv1d {
                    in_channels,
                    out_channels,
                    kernel,
                    stride,
                    padding,
                } => {
                    let (w, b) = self.layer_params(i);
                    let geom = ConvGeom {
                        batch,
                        in_channels,
                        out_channels,
                        in_len: shape.length,
                        out_len: out.length,
                        kernel,
                        stride,
                        padding,
                    };
                    let (y, cols) = kernels::conv_forward(&x, w, b, &geom);
                    (y, Record::Conv { cols, geom })
                }
                LayerSpec::Linear {
                    in_features,
                    out_features,
                } => {
                    let (w, b) = self.layer_params(i);
                    let y = kernels::linear_forward(&x, w, b, batch, in_features, out_features);
                    let record = if recording {
                        Record::Linear { input: x }
                    } else {
                        Record::Passthrough
                    };
                    (y, record)
                }
                LayerSpec::Relu => {
                    let y: Vec<f64> = x.into_iter().map(|v| v.max(0.0)).collect();
                    let record = if recording {
                        Record::Relu { output: y.clone() }
                    } else {
                        Record::Passthrough
                    };
                    (y, record)
                }
                LayerSpec::MaxPool1d { kernel, stride } => {
                    let rows = batch * shape.channels;
                    let (y, arg) = kernels::maxpool_forward(&x, rows, shape.length, kernel, stride);
                    (
                        y,
                        Record::MaxPool {
                            arg,
                            rows,
                            in_len: shape.length,
                        },
                    )
                }
                LayerSpec::AdaptiveAvgPool1d { output_len } => {
                    let rows = batch * shape.channels;
                    let y = kernels::adaptive_avg_forward(&x, rows, shape.length, output_len);
                    (
                        y,
                        Record::AdaptiveAvg {
                            rows,
                            in_len: shape.length,
                            out_len: output_len,
                        },
                    )
                }
                LayerSpec::Dropout { p } => match (mode, rng.as_deref_mut()) {
                    (Mode::Train, Some(rng)) if p > 0.0 => {
                        let keep = 1.0 / (1.0 - p);
                        let mask: Vec<f64> = (0..x.len())
                            .map(|_| if rng.random::<f64>() < p { 0.0 } else { keep })
                            .collect();
                        let y = x.iter().zip(&mask).map(|(v, m)| v * m).collect();
                        (y, Record::Dropout { mask })
                    }
                    _ => (x, Record::Passthrough),
                },
                LayerSpec::Flatten => (x, Record::Passthrough),
            };
            if !y.iter().all(|v| v.is_finite()) {
                return Err(Error::numerical(format!(
                    "non-finite activation after layer {i} ({})",
                    layer.short_name()
                )));
            }
            x = y;
            shape = out;
            if let Some(t) = tape.as_deref_mut() {
                t.records.push(record);
            }
        }
        if let Some(t) = tape {
            t.batch = batch;
        }
        Ok(Tensor1D::from_parts(batch, shape.channels, shape.length, x))
    }

    fn layer_params(&self, layer: usize) -> (&[f64], &[f64]) {
        let (w, b) = self.layer_blocks[layer].expect("parametric layer");
        (&self.blocks[w].values, &self.blocks[b].values)
    }

    /// Accumulates parameter gradients of trainable blocks into `grads`.
    /// Consumes the tape; propagation stops below the first trainable layer.
    pub fn backward(&self, tape: &mut Tape, grad_out: &Tensor1D, grads: &mut Gradients) -> Result<()> {
        if tape.records.len() != self.layers.len() {
            return Err(Error::State("backward called without a recorded forward pass".into()));
        }
        let out = self.output_shape();
        if grad_out.batch() != tape.batch || grad_out.channels() != out.channels || grad_out.length() != out.length {
            tape.clear();
            return Err(Error::invalid("output gradient shape does not match the recorded pass"));
        }
        if grads.blocks.len() != self.blocks.len()
            || grads
                .blocks
                .iter()
                .zip(&self.blocks)
                .any(|(g, b)| g.is_some() != b.trainable || g.as_ref().is_some_and(|g| g.len() != b.values.len()))
        {
            tape.clear();
            return Err(Error::invalid("gradient buffers do not match the trainable blocks"));
        }
        let Some(first_trainable) = (0..self.layers.len()).find(|&i| self.is_layer_trainable(i)) else {
            tape.clear();
            return Ok(());
        };
        let batch = tape.batch;
        let mut records = std::mem::take(&mut tape.records);
        tape.clear();
        let mut dy = grad_out.values().to_vec();
        for i in (first_trainable..self.layers.len()).rev() {
            let need_dx = i > first_trainable;
            let record = records.pop().expect("one record per layer");
            let dx = match (record, &self.layers[i]) {
                (Record::Conv { cols, geom }, _) => {
                    let (wi, bi) = self.layer_blocks[i].expect("parametric layer");
                    let (gw, gb) = split_two(&mut grads.blocks, wi, bi);
                    kernels::conv_backward(&dy, &cols, &self.blocks[wi].values, &geom, gw, gb, need_dx)
                }
                (
                    Record::Linear { input },
                    &LayerSpec::Linear {
                        in_features,
                        out_features,
                    },
                ) => {
                    let (wi, bi) = self.layer_blocks[i].expect("parametric layer");
                    let (gw, gb) = split_two(&mut grads.blocks, wi, bi);
                    kernels::linear_backward(
                        &dy,
                        &input,
                        &self.blocks[wi].values,
                        batch,
                        in_features,
                        out_features,
                        gw,
                        gb,
                        need_dx,
                    )
                }
                (Record::Relu { output }, _) => Some(
                    dy.iter()
                        .zip(&output)
                        .map(|(g, o)| if *o > 0.0 { *g } else { 0.0 })
                        .collect(),
                ),
                (Record::MaxPool { arg, rows, in_len }, _) => Some(kernels::maxpool_backward(&dy, &arg, rows, in_len)),
                (Record::AdaptiveAvg { rows, in_len, out_len }, _) => {
                    Some(kernels::adaptive_avg_backward(&dy, rows, in_len, out_len))
                }
                (Record::Dropout { mask }, _) => Some(dy.iter().zip(&mask).map(|(g, m)| g * m).collect()),
                (Record::Passthrough, LayerSpec::Linear { .. }) => {
                    return Err(Error::State("forward pass was not recorded for training".into()));
                }
                (Record::Passthrough, _) => Some(dy),
                (Record::Linear { .. }, _) => unreachable!("linear record on a non-linear layer"),
            };
            match dx {
                Some(d) => dy = d,
                None => break,
            }
        }
        for (i, g) in grads.blocks.iter().enumerate() {
            if let Some(g) = g {
                if g.iter().any(|v| !v.is_finite()) {
                    return Err(Error::numerical(format!("non-finite gradient in block {i}")));
                }
            }
        }
        Ok(())
    }
}

fn split_two(blocks: &mut [Option<Vec<f64>>], a: usize, b: usize) -> (Option<&mut [f64]>, Option<&mut [f64]>) {
    debug_assert!(a < b);
    let (lo, hi) = blocks.split_at_mut(b);
    (lo[a].as_deref_mut(), hi[0].as_deref_mut())
}
