use std::path::Path;

use serde::{Deserialize, Serialize};

use super::train::predict_encoded;
use super::{Encoded, Normalizer, Task};
use crate::error::{Error, Result};
use crate::fsutil;
use crate::nn::Network;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleError {
    pub alpha: f64,
    pub v_inf: f64,
    pub abs_error: f64,
}

/// Test-set errors in physical units (degrees or m/s).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub task: Task,
    pub mae: f64,
    pub mse: f64,
    pub n_test: usize,
    pub per_sample: Vec<SampleError>,
    /// Wall-clock training time, when the report follows a training run.
    pub train_time_s: Option<f64>,
    pub network_fingerprint: String,
    /// SHA-256 of the resolved configuration that produced the network.
    pub config_fingerprint: Option<String>,
}

/// Scores `network` on `data`, undoing the output normalization first.
pub fn evaluate(network: &Network, data: &Encoded, normalizer: &Normalizer) -> Result<MetricsReport> {
    if data.is_empty() {
        return Err(Error::invalid("test split is empty"));
    }
    let pred = predict_encoded(network, data)?;
    let per_sample: Vec<SampleError> = pred
        .iter()
        .zip(&data.targets)
        .zip(&data.coords)
        .map(|((p, t), &(alpha, v_inf))| SampleError {
            alpha,
            v_inf,
            abs_error: (normalizer.inverse_output(*p) - normalizer.inverse_output(*t)).abs(),
        })
        .collect();
    let n = per_sample.len() as f64;
    let mae = per_sample.iter().map(|s| s.abs_error).sum::<f64>() / n;
    let mse = per_sample.iter().map(|s| s.abs_error * s.abs_error).sum::<f64>() / n;
    Ok(MetricsReport {
        task: normalizer.task,
        mae,
        mse,
        n_test: per_sample.len(),
        per_sample,
        train_time_s: None,
        network_fingerprint: network.fingerprint(),
        config_fingerprint: None,
    })
}

/// MAE and MSE of always predicting the mean training label.
pub fn constant_baseline(train_labels: &[f64], test_labels: &[f64]) -> Result<(f64, f64)> {
    if train_labels.is_empty() || test_labels.is_empty() {
        return Err(Error::invalid("baseline needs non-empty label sets"));
    }
    let mean = train_labels.iter().sum::<f64>() / train_labels.len() as f64;
    let n = test_labels.len() as f64;
    let mae = test_labels.iter().map(|y| (y - mean).abs()).sum::<f64>() / n;
    let mse = test_labels.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / n;
    Ok((mae, mse))
}

impl MetricsReport {
    /// Copy with wall-clock fields cleared, for reproducibility comparisons.
    pub fn without_timing(&self) -> MetricsReport {
        MetricsReport {
            train_time_s: None,
            ..self.clone()
        }
    }

    pub fn errors_csv(&self) -> String {
        let mut out = String::from("alpha_deg,v_inf,abs_error\n");
        for s in &self.per_sample {
            out.push_str(&format!("{:?},{:?},{:?}\n", s.alpha, s.v_inf, s.abs_error));
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialize")
    }

    /// Writes `<stem>.json` and `<stem>_errors.csv` into `dir`.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<()> {
        fsutil::write_atomic_str(&dir.join(format!("{stem}.json")), &self.to_json())?;
        fsutil::write_atomic_str(&dir.join(format!("{stem}_errors.csv")), &self.errors_csv())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fsutil::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::parse(Some(path), Some(e.line() as u64), e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{LayerSpec, Shape};

    fn normalizer() -> Normalizer {
        Normalizer {
            input_min: vec![0.0],
            input_max: vec![1.0],
            output_min: -10.0,
            output_max: 10.0,
            fitted_on: "t".into(),
            task: Task::Alpha,
        }
    }

    /// Single linear unit with weight w and bias b on one feature.
    fn affine(w: f64, b: f64) -> Network {
        let mut n = Network::new(vec![LayerSpec::Flatten, LayerSpec::linear(1, 1)], Shape::new(1, 1), 0).unwrap();
        n.blocks_mut()[0].values[0] = w;
        n.blocks_mut()[1].values[0] = b;
        n
    }

    fn data(xs: &[f64], ys: &[f64]) -> Encoded {
        Encoded {
            inputs: xs.to_vec(),
            targets: ys.to_vec(),
            coords: xs.iter().map(|x| (*x, 50.0)).collect(),
            n_features: 1,
        }
    }

    #[test]
    fn perfect_predictor() {
        let r = evaluate(&affine(1.0, 0.0), &data(&[0.1, 0.7], &[0.1, 0.7]), &normalizer()).unwrap();
        assert!(r.mae < 1e-12 && r.mse < 1e-20);
        assert_eq!(r.n_test, 2);
    }

    #[test]
    fn single_sample_error_in_physical_units() {
        // Normalized error 0.025 is 0.5 degrees over a 20-degree range.
        let r = evaluate(&affine(0.0, 0.525), &data(&[0.3], &[0.5]), &normalizer()).unwrap();
        assert!((r.mae - 0.5).abs() < 1e-12);
        assert!((r.mse - 0.25).abs() < 1e-12);
    }

    #[test]
    fn constant_predictor_gives_mean_absolute_deviation() {
        let ys = [0.0, 0.25, 1.0];
        let mean = (0.0 + 0.25 + 1.0) / 3.0;
        let r = evaluate(&affine(0.0, mean), &data(&[0.0, 0.0, 0.0], &ys), &normalizer()).unwrap();
        let mad = ys.iter().map(|y| (y - mean).abs() * 20.0).sum::<f64>() / 3.0;
        assert!((r.mae - mad).abs() < 1e-12);
        let (bmae, _) = constant_baseline(&[-10.0, -5.0, 10.0], &[-10.0, -5.0, 10.0]).unwrap();
        assert!((bmae - mad).abs() < 1e-12);
    }

    #[test]
    fn report_files() {
        let r = evaluate(&affine(1.0, 0.0), &data(&[0.1], &[0.2]), &normalizer()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        r.write(dir.path(), "test").unwrap();
        assert_eq!(MetricsReport::read(&dir.path().join("test.json")).unwrap(), r);
        let csv = std::fs::read_to_string(dir.path().join("test_errors.csv")).unwrap();
        assert!(csv.starts_with("alpha_deg,v_inf,abs_error\n"));
        assert!(evaluate(&affine(1.0, 0.0), &data(&[], &[]), &normalizer()).is_err());
    }
}
