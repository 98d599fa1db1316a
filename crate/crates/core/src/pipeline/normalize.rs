use serde::{Deserialize, Serialize};

use super::Task;
use crate::aerogen::DomainDataset;
use crate::error::{Error, Result};

/// Per-feature min-max scaling of inputs plus scalar scaling of the label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub input_min: Vec<f64>,
    pub input_max: Vec<f64>,
    pub output_min: f64,
    pub output_max: f64,
    pub fitted_on: String,
    pub task: Task,
}

impl Normalizer {
    /// Fits on the training split only.
    pub fn fit(train: &DomainDataset, task: Task) -> Result<Self> {
        let first = train
            .samples
            .first()
            .ok_or_else(|| Error::invalid("cannot fit a normalizer on an empty training split"))?;
        let n = first.pressures.len();
        let mut input_min = first.pressures.clone();
        let mut input_max = first.pressures.clone();
        let mut output_min = f64::INFINITY;
        let mut output_max = f64::NEG_INFINITY;
        for s in &train.samples {
            for (j, &p) in s.pressures.iter().enumerate() {
                input_min[j] = input_min[j].min(p);
                input_max[j] = input_max[j].max(p);
            }
            let y = task.label(s);
            output_min = output_min.min(y);
            output_max = output_max.max(y);
        }
        let constant = (0..n).filter(|&j| input_max[j] == input_min[j]).count();
        if constant > 0 {
            log::warn!("{constant} constant input feature(s) in `{}` map to 0.5", train.domain_tag);
        }
        if output_max == output_min {
            log::warn!("constant {task} label in `{}` maps to 0.5", train.domain_tag);
        }
        Ok(Normalizer {
            input_min,
            input_max,
            output_min,
            output_max,
            fitted_on: train.domain_tag.clone(),
            task,
        })
    }

    pub fn n_features(&self) -> usize {
        self.input_min.len()
    }

    pub fn transform_input(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n_features() {
            return Err(Error::invalid(format!(
                "normalizer expects {} features, got {}",
                self.n_features(),
                x.len()
            )));
        }
        Ok(x.iter()
            .zip(self.input_min.iter().zip(&self.input_max))
            .map(|(&v, (&lo, &hi))| scale(v, lo, hi))
            .collect())
    }

    pub fn inverse_input(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .zip(self.input_min.iter().zip(&self.input_max))
            .map(|(&v, (&lo, &hi))| unscale(v, lo, hi))
            .collect()
    }

    pub fn transform_output(&self, y: f64) -> f64 {
        scale(y, self.output_min, self.output_max)
    }

    pub fn inverse_output(&self, z: f64) -> f64 {
        unscale(z, self.output_min, self.output_max)
    }
}

fn scale(v: f64, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        (v - lo) / (hi - lo)
    } else {
        0.5
    }
}

fn unscale(z: f64, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        lo + z * (hi - lo)
    } else {
        lo
    }
}
