use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Encoded, Task};
use crate::error::{Error, Result};
use crate::fsutil;
use crate::nn::{mse_loss, Mode, Network, OptimizerConfig, OptimizerState, Tape, Tensor1D};

/// Rows per forward pass when scoring a whole split.
pub(crate) const EVAL_CHUNK: usize = 128;

/// Per-epoch learning-rate multiplier.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum LrSchedule {
    #[default]
    Constant,
    /// Linear ramp over `warmup_epochs`, then a half-cosine from 1 down to
    /// `final_fraction` at `max_epochs`.
    Cosine {
        final_fraction: f64,
        #[serde(default)]
        warmup_epochs: usize,
    },
}

impl LrSchedule {
    /// Multiplier for 1-based `epoch` out of `max_epochs`.
    pub fn factor(&self, epoch: usize, max_epochs: usize) -> f64 {
        match *self {
            LrSchedule::Constant => 1.0,
            LrSchedule::Cosine { final_fraction, warmup_epochs } => {
                if epoch <= warmup_epochs {
                    return epoch as f64 / (warmup_epochs + 1) as f64;
                }
                let span = max_epochs.saturating_sub(warmup_epochs + 1);
                if span == 0 {
                    return 1.0;
                }
                let progress = (epoch - warmup_epochs - 1) as f64 / span as f64;
                final_fraction + (1.0 - final_fraction) * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos())
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            LrSchedule::Cosine { final_fraction, .. } if !(final_fraction > 0.0 && final_fraction <= 1.0) => Err(
                Error::invalid(format!("cosine final_fraction must be in (0, 1], got {final_fraction}")),
            ),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub optimizer: OptimizerConfig,
    pub lr_schedule: LrSchedule,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without a new best validation MSE before stopping.
    pub patience: usize,
    pub seed: u64,
    pub task: Task,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            optimizer: OptimizerConfig::default(),
            lr_schedule: LrSchedule::Constant,
            batch_size: 32,
            max_epochs: 500,
            patience: 50,
            seed: 0,
            task: Task::Alpha,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.optimizer.validate()?;
        self.lr_schedule.validate()?;
        if self.batch_size == 0 {
            return Err(Error::invalid("batch size must be at least 1"));
        }
        if self.patience == 0 {
            return Err(Error::invalid("patience must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_mse: f64,
    pub val_mse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOutcome {
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_mse: f64,
    pub train_time_s: f64,
}

/// MSE of the network over a whole split, dropout disabled.
pub fn split_mse(network: &Network, data: &Encoded) -> Result<f64> {
    let pred = predict_encoded(network, data)?;
    Ok(mse_loss(&pred, &data.targets)?.0)
}

/// Normalized predictions for every row of `data`.
pub fn predict_encoded(network: &Network, data: &Encoded) -> Result<Vec<f64>> {
    if data.is_empty() {
        return Err(Error::invalid("cannot predict on an empty split"));
    }
    let rows: Vec<usize> = (0..data.len()).collect();
    let mut out = Vec::with_capacity(data.len());
    for chunk in rows.chunks(EVAL_CHUNK) {
        out.extend_from_slice(network.predict(&data.batch(chunk))?.values());
    }
    Ok(out)
}

/// Mini-batch training on normalized data with validation-based early stopping.
///
/// Epoch 0 in the history is the untrained state. The training MSE of later
/// epochs is the mean mini-batch loss in training mode. On return the network
/// holds the parameters of the epoch with the lowest validation MSE.
pub fn train(network: &mut Network, train: &Encoded, val: &Encoded, config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::invalid("training and validation splits must be non-empty"));
    }
    let input = network.input_shape();
    if train.n_features != input.numel() || val.n_features != input.numel() {
        return Err(Error::invalid(format!(
            "network expects {} input features, data has {}",
            input.numel(),
            train.n_features
        )));
    }
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut optimizer = OptimizerState::new(config.optimizer, network)?;
    let mut grads = network.gradients();
    let mut tape = Tape::new();

    let val0 = split_mse(network, val)?;
    let mut history = vec![EpochRecord {
        epoch: 0,
        train_mse: split_mse(network, train)?,
        val_mse: val0,
    }];
    let mut best = (0, val0, network.snapshot());
    let mut order: Vec<usize> = (0..train.len()).collect();

    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut rng);
        optimizer.set_learning_rate(config.optimizer.learning_rate * config.lr_schedule.factor(epoch, config.max_epochs));
        let mut loss_sum = 0.0;
        for batch in order.chunks(config.batch_size) {
            let x = train.batch(batch);
            let target: Vec<f64> = batch.iter().map(|&r| train.targets[r]).collect();
            let pred = network.forward_recorded(&x, Mode::Train, &mut rng, &mut tape)?;
            let (loss, g) = mse_loss(pred.values(), &target)?;
            if !loss.is_finite() {
                return Err(Error::numerical(format!(
                    "training loss became {loss} in epoch {epoch}; lower the learning rate (currently {})",
                    config.optimizer.learning_rate
                )));
            }
            loss_sum += loss * batch.len() as f64;
            let grad_out = Tensor1D::new(batch.len(), 1, 1, g)?;
            grads.zero();
            network.backward(&mut tape, &grad_out, &mut grads)?;
            optimizer.step(network, &grads)?;
        }
        let val_mse = split_mse(network, val)?;
        if !val_mse.is_finite() {
            return Err(Error::numerical(format!(
                "validation loss became {val_mse} in epoch {epoch}; lower the learning rate (currently {})",
                config.optimizer.learning_rate
            )));
        }
        history.push(EpochRecord {
            epoch,
            train_mse: loss_sum / train.len() as f64,
            val_mse,
        });
        log::debug!("epoch {epoch}: train {:.3e} val {val_mse:.3e}", loss_sum / train.len() as f64);
        if val_mse < best.1 {
            best = (epoch, val_mse, network.snapshot());
        } else if epoch - best.0 >= config.patience {
            break;
        }
    }
    network.restore(&best.2)?;
    Ok(TrainOutcome {
        history,
        best_epoch: best.0,
        best_val_mse: best.1,
        train_time_s: start.elapsed().as_secs_f64(),
    })
}

/// Writes `epoch,train_mse,val_mse` rows.
pub fn write_history(history: &[EpochRecord], path: &Path) -> Result<()> {
    let mut out = String::from("epoch,train_mse,val_mse\n");
    for r in history {
        out.push_str(&format!("{},{:?},{:?}\n", r.epoch, r.train_mse, r.val_mse));
    }
    fsutil::write_atomic_str(path, &out)
}
