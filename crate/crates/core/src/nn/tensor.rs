use crate::error::{Error, Result};

/// Batch of 1-D feature maps stored sample-major, then channel, then position.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor1D {
    batch: usize,
    channels: usize,
    length: usize,
    values: Vec<f64>,
}

impl Tensor1D {
    pub fn new(batch: usize, channels: usize, length: usize, values: Vec<f64>) -> Result<Self> {
        if batch == 0 || channels == 0 || length == 0 {
            return Err(Error::invalid(format!(
                "tensor dimensions must be positive, got {batch}x{channels}x{length}"
            )));
        }
        if values.len() != batch * channels * length {
            return Err(Error::invalid(format!(
                "tensor {batch}x{channels}x{length} needs {} values, got {}",
                batch * channels * length,
                values.len()
            )));
        }
        Ok(Tensor1D {
            batch,
            channels,
            length,
            values,
        })
    }

    pub fn zeros(batch: usize, channels: usize, length: usize) -> Self {
        Tensor1D {
            batch,
            channels,
            length,
            values: vec![0.0; batch * channels * length],
        }
    }

    /// Single-channel batch, one row per sample.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let length = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        if rows.iter().any(|r| r.as_ref().len() != length) {
            return Err(Error::invalid("rows of a batch must share one length"));
        }
        let values = rows.iter().flat_map(|r| r.as_ref().iter().copied()).collect();
        Tensor1D::new(rows.len(), 1, length, values)
    }

    pub fn batch(&self) -> usize {
        self.batch
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn length(&self) -> usize {
        self.length
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Values of sample `b`.
    pub fn sample(&self, b: usize) -> &[f64] {
        let n = self.channels * self.length;
        &self.values[b * n..(b + 1) * n]
    }

    pub(crate) fn from_parts(batch: usize, channels: usize, length: usize, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), batch * channels * length);
        Tensor1D {
            batch,
            channels,
            length,
            values,
        }
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}
