use serde::{Deserialize, Serialize};

use super::Task;
use crate::aerogen::DomainDataset;
use crate::error::{Error, Result};

pub const MIN_SPLIT_SAMPLES: usize = 10;

/// Train/validation/test fractions applied to contiguous slices.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitSpec {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            train: 0.72,
            val: 0.18,
            test: 0.10,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        let parts = [self.train, self.val, self.test];
        if parts.iter().any(|f| !(0.0..=1.0).contains(f)) || (parts.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!(
                "split fractions must lie in [0, 1] and sum to 1, got {parts:?}"
            )));
        }
        Ok(())
    }

    /// Sizes for `n` samples: floor train and val, remainder to test.
    pub fn sizes(&self, n: usize) -> Result<(usize, usize, usize)> {
        self.validate()?;
        // The guard keeps products like 0.72 × 1024 = 737.28 from flooring low
        // when the binary fraction sits just under an integer.
        let floor = |f: f64| ((f * n as f64) + 1e-9).floor() as usize;
        let train = floor(self.train);
        let val = floor(self.val).min(n - train);
        Ok((train, val, n - train - val))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Splits {
    pub train: DomainDataset,
    pub val: DomainDataset,
    pub test: DomainDataset,
}

/// Contiguous slices in dataset order.
pub fn split_ordered(dataset: &DomainDataset, spec: &SplitSpec) -> Result<Splits> {
    let idx: Vec<usize> = (0..dataset.len()).collect();
    split_indices(dataset, &idx, spec)
}

fn split_indices(dataset: &DomainDataset, idx: &[usize], spec: &SplitSpec) -> Result<Splits> {
    if idx.len() < MIN_SPLIT_SAMPLES {
        return Err(Error::invalid(format!(
            "splitting needs at least {MIN_SPLIT_SAMPLES} samples, got {}",
            idx.len()
        )));
    }
    let (a, b, _) = spec.sizes(idx.len())?;
    let tag = &dataset.domain_tag;
    Ok(Splits {
        train: dataset.select(&idx[..a], format!("{tag}/train")),
        val: dataset.select(&idx[a..a + b], format!("{tag}/val")),
        test: dataset.select(&idx[a + b..], format!("{tag}/test")),
    })
}

/// Lower and upper halves by task label, each in original dataset order.
pub fn median_split_for_extension(dataset: &DomainDataset, task: Task) -> Result<(Vec<usize>, Vec<usize>)> {
    if dataset.is_empty() || dataset.len() % 2 != 0 {
        return Err(Error::invalid(format!(
            "median split needs a non-empty even-sized dataset, got {}",
            dataset.len()
        )));
    }
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    order.sort_by(|&a, &b| task.label(&dataset.samples[a]).total_cmp(&task.label(&dataset.samples[b])));
    let half = dataset.len() / 2;
    let mut lower = order[..half].to_vec();
    let mut upper = order[half..].to_vec();
    lower.sort_unstable();
    upper.sort_unstable();
    Ok((lower, upper))
}

/// Initial domain (lower half) and extended domain (both halves) splits.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtensionSplits {
    pub initial: Splits,
    pub extended: Splits,
}

/// Splits each half in order; the extended domain merges the corresponding
/// splits of both halves in original dataset order.
pub fn extension_splits(dataset: &DomainDataset, task: Task, spec: &SplitSpec) -> Result<ExtensionSplits> {
    let (lower, upper) = median_split_for_extension(dataset, task)?;
    let (a, b, _) = spec.sizes(lower.len())?;
    let merge = |x: &[usize], y: &[usize]| {
        let mut m = [x, y].concat();
        m.sort_unstable();
        m
    };
    let initial_tag = format!("{}_i", dataset.domain_tag);
    let extended_tag = format!("{}_e", dataset.domain_tag);
    let pick = |idx: &[usize], tag: &str, part: &str| dataset.select(idx, format!("{tag}/{part}"));
    if lower.len() < MIN_SPLIT_SAMPLES {
        return Err(Error::invalid(format!(
            "each half needs at least {MIN_SPLIT_SAMPLES} samples, got {}",
            lower.len()
        )));
    }
    let initial = Splits {
        train: pick(&lower[..a], &initial_tag, "train"),
        val: pick(&lower[a..a + b], &initial_tag, "val"),
        test: pick(&lower[a + b..], &initial_tag, "test"),
    };
    let extended = Splits {
        train: pick(&merge(&lower[..a], &upper[..a]), &extended_tag, "train"),
        val: pick(&merge(&lower[a..a + b], &upper[a..a + b]), &extended_tag, "val"),
        test: pick(&merge(&lower[a + b..], &upper[a + b..]), &extended_tag, "test"),
    };
    Ok(ExtensionSplits { initial, extended })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aerogen::{Fidelity, PressureSample};

    fn labelled(alphas: &[f64]) -> DomainDataset {
        let samples = alphas
            .iter()
            .enumerate()
            .map(|(i, &a)| PressureSample {
                pressures: vec![i as f64, 1.0],
                alpha: a,
                v_inf: 40.0 + i as f64,
                fidelity: Fidelity::Inviscid,
                noise_sigma: 0.0,
            })
            .collect();
        DomainDataset::new(samples, "D", None).unwrap()
    }

    #[test]
    fn split_sizes() {
        let s = SplitSpec::default();
        assert_eq!(s.sizes(1024).unwrap(), (737, 184, 103));
        assert_eq!(s.sizes(128).unwrap(), (92, 23, 13));
        assert_eq!(s.sizes(512).unwrap(), (368, 92, 52));
        assert_eq!(s.sizes(10).unwrap(), (7, 1, 2));
    }

    #[test]
    fn split_preserves_order() {
        let d = labelled(&(0..50).map(|i| i as f64).collect::<Vec<_>>());
        let s = split_ordered(&d, &SplitSpec::default()).unwrap();
        let joined: Vec<f64> = [&s.train, &s.val, &s.test]
            .iter()
            .flat_map(|p| p.samples.iter().map(|x| x.alpha))
            .collect();
        assert_eq!(joined, (0..50).map(|i| i as f64).collect::<Vec<_>>());
        assert!(split_ordered(&labelled(&[1.0; 9]), &SplitSpec::default()).is_err());
    }

    #[test]
    fn bad_fractions() {
        let s = SplitSpec {
            train: 0.8,
            val: 0.3,
            test: 0.1,
        };
        assert!(s.sizes(100).is_err());
    }

    #[test]
    fn median_split_hand_trace() {
        let d = labelled(&[3.0, 1.0, 4.0, 2.0]);
        let (lo, hi) = median_split_for_extension(&d, Task::Alpha).unwrap();
        assert_eq!(lo, vec![1, 3]);
        assert_eq!(hi, vec![0, 2]);
        assert!(median_split_for_extension(&labelled(&[1.0, 2.0, 3.0]), Task::Alpha).is_err());
    }

    #[test]
    fn extension_partitions() {
        let alphas: Vec<f64> = (0..64).map(|i| ((i * 37) % 64) as f64 - 20.0).collect();
        let d = labelled(&alphas);
        let e = extension_splits(&d, Task::Alpha, &SplitSpec::default()).unwrap();
        let init: Vec<f64> = [&e.initial.train, &e.initial.val, &e.initial.test]
            .iter()
            .flat_map(|p| p.samples.iter().map(|s| s.alpha))
            .collect();
        assert_eq!(init.len(), 32);
        let ext_total = e.extended.train.len() + e.extended.val.len() + e.extended.test.len();
        assert_eq!(ext_total, 64);
        let max_init = init.iter().cloned().fold(f64::MIN, f64::max);
        assert!(d.samples.iter().filter(|s| !init.contains(&s.alpha)).all(|s| s.alpha >= max_init));
        // Merged splits stay in dataset order.
        let v: Vec<f64> = e.extended.train.samples.iter().map(|s| s.v_inf).collect();
        assert!(v.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(e.extended.train.len(), 2 * e.initial.train.len());
    }
}
