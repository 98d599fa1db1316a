use serde::{Deserialize, Serialize};

use super::network::{Gradients, Network};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum OptimizerKind {
    SgdMomentum { momentum: f64 },
    Adam { beta1: f64, beta2: f64, epsilon: f64 },
}

impl OptimizerKind {
    pub fn adam() -> Self {
        OptimizerKind::Adam {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            kind: OptimizerKind::adam(),
            learning_rate: 1e-3,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid(format!("learning rate must be positive, got {}", self.learning_rate)));
        }
        match self.kind {
            OptimizerKind::SgdMomentum { momentum } if !(0.0..1.0).contains(&momentum) => {
                Err(Error::invalid(format!("momentum must lie in [0, 1), got {momentum}")))
            }
            OptimizerKind::Adam { beta1, beta2, epsilon }
                if !(0.0..1.0).contains(&beta1) || !(0.0..1.0).contains(&beta2) || epsilon <= 0.0 =>
            {
                Err(Error::invalid("adam needs beta1, beta2 in [0, 1) and epsilon > 0"))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Moments {
    first: Vec<f64>,
    second: Vec<f64>,
}

/// Step counter and per-block moment buffers, present only for trainable blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    config: OptimizerConfig,
    step: u64,
    moments: Vec<Option<Moments>>,
}

impl OptimizerState {
    pub fn new(config: OptimizerConfig, network: &Network) -> Result<Self> {
        config.validate()?;
        let adam = matches!(config.kind, OptimizerKind::Adam { .. });
        let moments = network
            .blocks()
            .iter()
            .map(|b| {
                b.trainable.then(|| Moments {
                    first: vec![0.0; b.values.len()],
                    second: if adam { vec![0.0; b.values.len()] } else { Vec::new() },
                })
            })
            .collect();
        Ok(OptimizerState {
            config,
            step: 0,
            moments,
        })
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn config(&self) -> &OptimizerConfig {
        &self.config
    }

    /// Changes the step size without touching the moment estimates.
    pub fn set_learning_rate(&mut self, learning_rate: f64) {
        self.config.learning_rate = learning_rate;
    }

    pub fn has_moments(&self, block: usize) -> bool {
        self.moments.get(block).is_some_and(|m| m.is_some())
    }

    /// Updates every trainable block in place.
    pub fn step(&mut self, network: &mut Network, grads: &Gradients) -> Result<()> {
        let blocks = network.blocks_mut();
        if grads.blocks.len() != blocks.len() || self.moments.len() != blocks.len() {
            return Err(Error::invalid("gradients do not match the network's blocks"));
        }
        for (i, ((block, g), m)) in blocks.iter().zip(&grads.blocks).zip(&self.moments).enumerate() {
            let ok = match (block.trainable, g, m) {
                (true, Some(g), Some(m)) => g.len() == block.values.len() && m.first.len() == block.values.len(),
                (false, None, None) => true,
                _ => false,
            };
            if !ok {
                return Err(Error::invalid(format!("gradient or optimizer state mismatch at block {i}")));
            }
        }
        self.step += 1;
        let lr = self.config.learning_rate;
        for ((block, g), m) in blocks.iter_mut().zip(&grads.blocks).zip(&mut self.moments) {
            let (Some(g), Some(m)) = (g, m) else { continue };
            match self.config.kind {
                OptimizerKind::SgdMomentum { momentum } => {
                    for ((w, v), gi) in block.values.iter_mut().zip(&mut m.first).zip(g) {
                        *v = momentum * *v + gi;
                        *w -= lr * *v;
                    }
                }
                OptimizerKind::Adam { beta1, beta2, epsilon } => {
                    let t = self.step as i32;
                    let c1 = 1.0 - beta1.powi(t);
                    let c2 = 1.0 - beta2.powi(t);
                    for (((w, mi), vi), gi) in block.values.iter_mut().zip(&mut m.first).zip(&mut m.second).zip(g) {
                        *mi = beta1 * *mi + (1.0 - beta1) * gi;
                        *vi = beta2 * *vi + (1.0 - beta2) * gi * gi;
                        *w -= lr * (*mi / c1) / ((*vi / c2).sqrt() + epsilon);
                    }
                }
            }
        }
        Ok(())
    }
}
