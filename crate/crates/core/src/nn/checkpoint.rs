//! Versioned binary checkpoint container.
//!
//! All integers and floats are little-endian.
//!
//! ```text
//! magic        8 bytes  "ONFLOWNN"
//! version      u32      currently 1
//! seed         u64
//! input        u64 channels, u64 length
//! layer count  u32
//!   per layer  u8 tag, then its fields
//!              0 conv1d     u64 in, u64 out, u64 kernel, u64 stride, u64 padding
//!              1 relu
//!              2 maxpool1d  u64 kernel, u64 stride
//!              3 adaptive   u64 output_len
//!              4 dropout    f64 p
//!              5 flatten
//!              6 linear     u64 in, u64 out
//! block count  u32
//!   per block  u32 layer, u8 role (0 weight, 1 bias), u8 trainable,
//!              u32 ndims, ndims × u64 dims, u64 n, n × f64 values
//! metadata     u64 byte length (0 for none), UTF-8 JSON
//! end marker   4 bytes  "END\0"
//! ```

use std::path::Path;

use super::layer::{LayerSpec, Shape};
use super::network::{BlockRole, Network, ParamBlock};
use crate::error::{Error, Result};
use crate::fsutil;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"ONFLOWNN";
pub const CHECKPOINT_VERSION: u32 = 1;
const END_MARKER: &[u8; 4] = b"END\0";

/// A network plus optional JSON metadata stored alongside it.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub network: Network,
    pub metadata: Option<serde_json::Value>,
}

pub fn encode(network: &Network, metadata: Option<&serde_json::Value>) -> Vec<u8> {
    let mut out = Vec::with_capacity(64 + network.total_params() * 8);
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&network.seed().to_le_bytes());
    let input = network.input_shape();
    put_u64(&mut out, input.channels);
    put_u64(&mut out, input.length);
    out.extend_from_slice(&(network.layers().len() as u32).to_le_bytes());
    for layer in network.layers() {
        match *layer {
            LayerSpec::Conv1d {
                in_channels,
                out_channels,
                kernel,
                stride,
                padding,
            } => {
                out.push(0);
                for v in [in_channels, out_channels, kernel, stride, padding] {
                    put_u64(&mut out, v);
                }
            }
            LayerSpec::Relu => out.push(1),
            LayerSpec::MaxPool1d { kernel, stride } => {
                out.push(2);
                put_u64(&mut out, kernel);
                put_u64(&mut out, stride);
            }
            LayerSpec::AdaptiveAvgPool1d { output_len } => {
                out.push(3);
                put_u64(&mut out, output_len);
            }
            LayerSpec::Dropout { p } => {
                out.push(4);
                out.extend_from_slice(&p.to_le_bytes());
            }
            LayerSpec::Flatten => out.push(5),
            LayerSpec::Linear {
                in_features,
                out_features,
            } => {
                out.push(6);
                put_u64(&mut out, in_features);
                put_u64(&mut out, out_features);
            }
        }
    }
    out.extend_from_slice(&(network.blocks().len() as u32).to_le_bytes());
    for block in network.blocks() {
        out.extend_from_slice(&(block.layer as u32).to_le_bytes());
        out.push(match block.role {
            BlockRole::Weight => 0,
            BlockRole::Bias => 1,
        });
        out.push(block.trainable as u8);
        out.extend_from_slice(&(block.dims.len() as u32).to_le_bytes());
        for &d in &block.dims {
            put_u64(&mut out, d);
        }
        put_u64(&mut out, block.values.len());
        for v in &block.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let meta = metadata
        .map(|m| serde_json::to_vec(m).expect("json values serialize"))
        .unwrap_or_default();
    put_u64(&mut out, meta.len());
    out.extend_from_slice(&meta);
    out.extend_from_slice(END_MARKER);
    out
}

fn put_u64(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u64).to_le_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: Option<&'a Path>,
}

impl<'a> Reader<'a> {
    fn err(&self, msg: impl Into<String>) -> Error {
        Error::parse(self.path, None, format!("{} (byte offset {})", msg.into(), self.pos))
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(self.err("checkpoint is truncated"));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn usize(&mut self) -> Result<usize> {
        let v = self.u64()?;
        usize::try_from(v).map_err(|_| self.err(format!("value {v} does not fit in usize")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

pub fn decode(bytes: &[u8], path: Option<&Path>) -> Result<Checkpoint> {
    let mut r = Reader { bytes, pos: 0, path };
    if r.take(8)? != CHECKPOINT_MAGIC {
        return Err(r.err("not a checkpoint file (bad magic)"));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(r.err(format!(
            "unsupported checkpoint version {version}, expected {CHECKPOINT_VERSION}"
        )));
    }
    let seed = r.u64()?;
    let input = Shape::new(r.usize()?, r.usize()?);
    let n_layers = r.u32()? as usize;
    let mut layers = Vec::with_capacity(n_layers.min(1024));
    for _ in 0..n_layers {
        let layer = match r.u8()? {
            0 => LayerSpec::Conv1d {
                in_channels: r.usize()?,
                out_channels: r.usize()?,
                kernel: r.usize()?,
                stride: r.usize()?,
                padding: r.usize()?,
            },
            1 => LayerSpec::Relu,
            2 => LayerSpec::MaxPool1d {
                kernel: r.usize()?,
                stride: r.usize()?,
            },
            3 => LayerSpec::AdaptiveAvgPool1d { output_len: r.usize()? },
            4 => LayerSpec::Dropout { p: r.f64()? },
            5 => LayerSpec::Flatten,
            6 => LayerSpec::Linear {
                in_features: r.usize()?,
                out_features: r.usize()?,
            },
            tag => return Err(r.err(format!("unknown layer tag {tag}"))),
        };
        layers.push(layer);
    }
    let n_blocks = r.u32()? as usize;
    let mut blocks = Vec::with_capacity(n_blocks.min(1024));
    for _ in 0..n_blocks {
        let layer = r.u32()? as usize;
        let role = match r.u8()? {
            0 => BlockRole::Weight,
            1 => BlockRole::Bias,
            other => return Err(r.err(format!("unknown block role {other}"))),
        };
        let trainable = match r.u8()? {
            0 => false,
            1 => true,
            other => return Err(r.err(format!("invalid trainable flag {other}"))),
        };
        let ndims = r.u32()? as usize;
        let dims = (0..ndims).map(|_| r.usize()).collect::<Result<Vec<_>>>()?;
        let n = r.usize()?;
        if n.checked_mul(8).is_none_or(|b| b > bytes.len() - r.pos) {
            return Err(r.err("checkpoint is truncated"));
        }
        let raw = r.take(n * 8)?;
        let values = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        blocks.push(ParamBlock {
            layer,
            role,
            dims,
            values,
            trainable,
        });
    }
    let meta_len = r.usize()?;
    let metadata = if meta_len == 0 {
        None
    } else {
        let raw = r.take(meta_len)?;
        Some(serde_json::from_slice(raw).map_err(|e| r.err(format!("bad metadata: {e}")))?)
    };
    if r.take(4)? != END_MARKER {
        return Err(r.err("missing end marker"));
    }
    if r.pos != bytes.len() {
        return Err(r.err("trailing bytes after end marker"));
    }
    let network = Network::from_parts(layers, input, blocks, seed).map_err(|e| Error::parse(path, None, e.to_string()))?;
    Ok(Checkpoint { network, metadata })
}

pub fn save_checkpoint(network: &Network, path: &Path, metadata: Option<&serde_json::Value>) -> Result<()> {
    fsutil::write_atomic(path, &encode(network, metadata))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes, Some(path))
}
