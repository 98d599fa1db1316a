use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::loss::mse_loss;
use super::network::{Mode, Network, Tape};
use super::tensor::Tensor1D;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub checked: usize,
    /// (block, index, analytic, numeric) of the worst parameter.
    pub worst: Option<(usize, usize, f64, f64)>,
}

/// Compares backward gradients of the MSE loss against central differences
/// on at most `per_block` evenly strided parameters of each trainable block.
pub fn grad_check(
    network: &Network,
    input: &Tensor1D,
    target: &[f64],
    epsilon: f64,
    per_block: usize,
) -> Result<GradCheckReport> {
    if !(epsilon > 0.0) {
        return Err(Error::invalid("epsilon must be positive"));
    }
    let loss_of = |net: &Network| -> Result<f64> { Ok(mse_loss(net.predict(input)?.values(), target)?.0) };

    let mut tape = Tape::new();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let pred = network.forward_recorded(input, Mode::Eval, &mut rng, &mut tape)?;
    let (_, g) = mse_loss(pred.values(), target)?;
    let grad_out = Tensor1D::from_parts(pred.batch(), pred.channels(), pred.length(), g);
    let mut grads = network.gradients();
    network.backward(&mut tape, &grad_out, &mut grads)?;

    let mut probe = network.clone();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        checked: 0,
        worst: None,
    };
    for (bi, analytic) in grads.blocks.iter().enumerate() {
        let Some(analytic) = analytic else { continue };
        let stride = analytic.len().div_ceil(per_block.max(1)).max(1);
        for idx in (0..analytic.len()).step_by(stride) {
            let original = probe.blocks()[bi].values[idx];
            probe.blocks_mut()[bi].values[idx] = original + epsilon;
            let up = loss_of(&probe)?;
            probe.blocks_mut()[bi].values[idx] = original - epsilon;
            let down = loss_of(&probe)?;
            probe.blocks_mut()[bi].values[idx] = original;
            let numeric = (up - down) / (2.0 * epsilon);
            let a = analytic[idx];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
            report.checked += 1;
            if rel > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = report.max_rel_error.max(rel);
                report.worst = Some((bi, idx, a, numeric));
            }
        }
    }
    Ok(report)
}
