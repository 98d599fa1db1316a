//! Preprocessing, splitting, training and evaluation.

mod metrics;
mod normalize;
mod split;
mod train;

pub use metrics::{constant_baseline, evaluate, MetricsReport, SampleError};
pub use normalize::Normalizer;
pub use split::{extension_splits, median_split_for_extension, split_ordered, ExtensionSplits, SplitSpec, Splits};
pub use train::{predict_encoded, split_mse, train, write_history, EpochRecord, LrSchedule, TrainConfig, TrainOutcome};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::aerogen::{DomainDataset, PressureSample};
use crate::error::{Error, Result};
use crate::nn::Tensor1D;

/// Quantity a network is trained to predict.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Alpha,
    VInf,
}

impl Task {
    pub const ALL: [Task; 2] = [Task::Alpha, Task::VInf];

    pub fn label(&self, sample: &PressureSample) -> f64 {
        match self {
            Task::Alpha => sample.alpha,
            Task::VInf => sample.v_inf,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Task::Alpha => "alpha",
            Task::VInf => "v_inf",
        }
    }

    pub fn unit(&self) -> &'static str {
        match self {
            Task::Alpha => "deg",
            Task::VInf => "m/s",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "alpha" | "aoa" => Ok(Task::Alpha),
            "v_inf" | "vinf" | "v-inf" | "speed" => Ok(Task::VInf),
            _ => Err(Error::invalid(format!("unknown task `{s}` (expected alpha or v_inf)"))),
        }
    }
}

/// Equidistant indices `round(j·(L−1)/(n−1))`, halves rounded up.
pub fn downsample_indices(full_len: usize, n_s: usize) -> Result<Vec<usize>> {
    if n_s < 2 {
        return Err(Error::invalid(format!("at least 2 surface points are required, got {n_s}")));
    }
    if n_s > full_len {
        return Err(Error::invalid(format!(
            "cannot select {n_s} points from a surface of {full_len}"
        )));
    }
    let (l, n) = (full_len - 1, n_s - 1);
    Ok((0..n_s).map(|j| (2 * j * l + n) / (2 * n)).collect())
}

pub fn downsample_surface(sample: &PressureSample, n_s: usize) -> Result<PressureSample> {
    let idx = downsample_indices(sample.pressures.len(), n_s)?;
    Ok(PressureSample {
        pressures: idx.iter().map(|&i| sample.pressures[i]).collect(),
        ..sample.clone()
    })
}

pub fn downsample_dataset(dataset: &DomainDataset, n_s: usize) -> Result<DomainDataset> {
    let idx = downsample_indices(dataset.n_surface_full, n_s)?;
    let samples = dataset
        .samples
        .iter()
        .map(|s| PressureSample {
            pressures: idx.iter().map(|&i| s.pressures[i]).collect(),
            ..s.clone()
        })
        .collect();
    Ok(DomainDataset {
        samples,
        domain_tag: dataset.domain_tag.clone(),
        doe: dataset.doe.clone(),
        n_surface_full: n_s,
    })
}

/// Normalized inputs and labels of one split, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoded {
    pub inputs: Vec<f64>,
    pub targets: Vec<f64>,
    /// (alpha, v_inf) of each sample.
    pub coords: Vec<(f64, f64)>,
    pub n_features: usize,
}

impl Encoded {
    pub fn encode(dataset: &DomainDataset, normalizer: &Normalizer) -> Result<Self> {
        let n_features = normalizer.n_features();
        let mut inputs = Vec::with_capacity(dataset.len() * n_features);
        let mut targets = Vec::with_capacity(dataset.len());
        let mut coords = Vec::with_capacity(dataset.len());
        for s in &dataset.samples {
            inputs.extend(normalizer.transform_input(&s.pressures)?);
            targets.push(normalizer.transform_output(normalizer.task.label(s)));
            coords.push((s.alpha, s.v_inf));
        }
        Ok(Encoded {
            inputs,
            targets,
            coords,
            n_features,
        })
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    /// Single-channel batch of the given rows.
    pub fn batch(&self, rows: &[usize]) -> Tensor1D {
        let mut values = Vec::with_capacity(rows.len() * self.n_features);
        for &r in rows {
            values.extend_from_slice(&self.inputs[r * self.n_features..(r + 1) * self.n_features]);
        }
        Tensor1D::new(rows.len(), 1, self.n_features, values).expect("rows are non-empty and uniform")
    }
}

/// Train/val/test encodings sharing one normalizer fitted on the training split.
#[derive(Debug, Clone, PartialEq)]
pub struct Prepared {
    pub normalizer: Normalizer,
    pub train: Encoded,
    pub val: Encoded,
    pub test: Encoded,
}

impl Prepared {
    pub fn from_splits(splits: &Splits, task: Task) -> Result<Self> {
        let normalizer = Normalizer::fit(&splits.train, task)?;
        Ok(Prepared {
            train: Encoded::encode(&splits.train, &normalizer)?,
            val: Encoded::encode(&splits.val, &normalizer)?,
            test: Encoded::encode(&splits.test, &normalizer)?,
            normalizer,
        })
    }
}

/// Downsamples, splits in order and normalizes a dataset.
pub fn prepare(dataset: &DomainDataset, n_s: usize, task: Task, spec: &SplitSpec) -> Result<(Splits, Prepared)> {
    let reduced = downsample_dataset(dataset, n_s)?;
    let splits = split_ordered(&reduced, spec)?;
    let prepared = Prepared::from_splits(&splits, task)?;
    Ok((splits, prepared))
}
