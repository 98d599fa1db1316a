//! Offline-to-transfer protocol: copy the offline network, freeze all but the
//! last linear layers and retrain them on target-domain data.

use serde::{Deserialize, Serialize};

use crate::aerogen::DomainDataset;
use crate::architectures::retrainable_fraction;
use crate::error::{Error, Result};
use crate::nn::{LayerSpec, Network};
use crate::pipeline::{evaluate, train, Encoded, MetricsReport, Normalizer, Prepared, Splits, Task, TrainConfig, TrainOutcome};

pub const DEFAULT_LAST_K: usize = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TransferConfig {
    /// Number of trailing linear layers retrained (1 or 2).
    pub last_k_linear: usize,
    pub train: TrainConfig,
    pub target_domain: String,
}

impl Default for TransferConfig {
    fn default() -> Self {
        TransferConfig {
            last_k_linear: DEFAULT_LAST_K,
            train: TrainConfig::default(),
            target_domain: "D_R".to_string(),
        }
    }
}

impl TransferConfig {
    pub fn validate(&self) -> Result<()> {
        if !(1..=2).contains(&self.last_k_linear) {
            return Err(Error::invalid(format!(
                "last_k_linear must be 1 or 2, got {}",
                self.last_k_linear
            )));
        }
        self.train.validate()
    }
}

/// Deep copy of the offline network with every block trainable.
pub fn init_from_source(source: &Network) -> Network {
    let mut copy = source.clone();
    copy.set_all_trainable(true);
    copy
}

/// Leaves exactly the last `k` linear layers trainable; returns their share in percent.
pub fn freeze_for_transfer(network: &mut Network, k: usize) -> Result<f64> {
    retrainable_fraction(network, k)
}

fn linear_layers(network: &Network) -> Vec<usize> {
    network
        .parametric_layers()
        .into_iter()
        .filter(|&i| matches!(network.layers()[i], LayerSpec::Linear { .. }))
        .collect()
}

/// Checks that the trainable set is exactly the last `k` linear layers.
pub fn check_transfer_mask(network: &Network, k: usize) -> Result<()> {
    let linear = linear_layers(network);
    if k == 0 || k > linear.len() {
        return Err(Error::invalid(format!("cannot retrain {k} of {} linear layers", linear.len())));
    }
    let keep = &linear[linear.len() - k..];
    for layer in network.parametric_layers() {
        if network.is_layer_trainable(layer) != keep.contains(&layer) {
            return Err(Error::State(format!(
                "layer {layer} trainability does not match a last-{k} transfer freeze"
            )));
        }
    }
    Ok(())
}

/// Retrains a frozen copy with a fresh optimizer. `train`/`val` must be
/// normalized with a normalizer fitted on the target training split.
pub fn transfer_train(network: &mut Network, train_data: &Encoded, val: &Encoded, k: usize, config: &TrainConfig) -> Result<TrainOutcome> {
    check_transfer_mask(network, k)?;
    train(network, train_data, val, config)
}

/// MAE reports of both networks on both domains' test sets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FourWayReport {
    pub source_domain: String,
    pub target_domain: String,
    pub last_k_linear: usize,
    pub ol_on_source: MetricsReport,
    pub ol_on_target: MetricsReport,
    pub tl_on_source: MetricsReport,
    pub tl_on_target: MetricsReport,
}

impl FourWayReport {
    pub fn maes(&self) -> [f64; 4] {
        [
            self.ol_on_source.mae,
            self.ol_on_target.mae,
            self.tl_on_source.mae,
            self.tl_on_target.mae,
        ]
    }

    pub fn to_csv(&self) -> String {
        let s = &self.source_domain;
        let t = &self.target_domain;
        let mut out = String::from("network,domain,mae,mse\n");
        for (net, dom, r) in [
            ("N_OL", s, &self.ol_on_source),
            ("N_OL", t, &self.ol_on_target),
            ("N_TL", s, &self.tl_on_source),
            ("N_TL", t, &self.tl_on_target),
        ] {
            out.push_str(&format!("{net},{dom},{:?},{:?}\n", r.mae, r.mse));
        }
        out
    }
}

/// Evaluates a network on a raw test dataset with its own normalizer.
pub fn evaluate_dataset(network: &Network, dataset: &DomainDataset, normalizer: &Normalizer) -> Result<MetricsReport> {
    evaluate(network, &Encoded::encode(dataset, normalizer)?, normalizer)
}

/// Output of one transfer run.
#[derive(Debug, Clone)]
pub struct TransferResult {
    pub network: Network,
    pub prepared: Prepared,
    pub outcome: TrainOutcome,
    pub retrained_percent: f64,
    pub report: FourWayReport,
}

/// Copies `source`, freezes it, retrains on `target` splits and scores both
/// networks on both test sets.
#[allow(clippy::too_many_arguments)]
pub fn run_transfer(
    source: &Network,
    source_normalizer: &Normalizer,
    source_test: &DomainDataset,
    target: &Splits,
    task: Task,
    config: &TransferConfig,
) -> Result<TransferResult> {
    config.validate()?;
    let prepared = Prepared::from_splits(target, task)?;
    let mut network = init_from_source(source);
    let retrained_percent = freeze_for_transfer(&mut network, config.last_k_linear)?;
    let outcome = transfer_train(&mut network, &prepared.train, &prepared.val, config.last_k_linear, &config.train)?;
    let mut tl_on_target = evaluate(&network, &prepared.test, &prepared.normalizer)?;
    tl_on_target.train_time_s = Some(outcome.train_time_s);
    let report = FourWayReport {
        source_domain: domain_name(source_test),
        target_domain: config.target_domain.clone(),
        last_k_linear: config.last_k_linear,
        ol_on_source: evaluate_dataset(source, source_test, source_normalizer)?,
        ol_on_target: evaluate_dataset(source, &target.test, source_normalizer)?,
        tl_on_source: evaluate_dataset(&network, source_test, &prepared.normalizer)?,
        tl_on_target,
    };
    Ok(TransferResult {
        network,
        prepared,
        outcome,
        retrained_percent,
        report,
    })
}

fn domain_name(ds: &DomainDataset) -> String {
    ds.domain_tag.split('/').next().unwrap_or(&ds.domain_tag).to_string()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::architectures::{build_convnet_d, build_convnet_s, build_fcnn};

    #[test]
    fn copy_is_bitwise_and_independent() {
        let mut src = build_fcnn(8, 1).unwrap();
        src.freeze_all_but_last(1).unwrap();
        let mut copy = init_from_source(&src);
        assert_eq!(copy.blocks()[0].values, src.blocks()[0].values);
        assert_eq!(copy.trainable_params(), copy.total_params());
        copy.blocks_mut()[0].values[0] += 1.0;
        assert_ne!(copy.blocks()[0].values[0], src.blocks()[0].values[0]);
        assert_eq!(copy.layers(), src.layers());
    }

    #[test]
    fn freeze_fractions() {
        let mut s = build_convnet_s(75, 0).unwrap();
        assert_eq!(format!("{:.3}", freeze_for_transfer(&mut s, 1).unwrap()), "0.086");
        check_transfer_mask(&s, 1).unwrap();
        assert!(check_transfer_mask(&s, 2).is_err());
        let k1 = s.trainable_params();
        freeze_for_transfer(&mut s, 2).unwrap();
        assert!(s.trainable_params() > k1);

        let mut d = build_convnet_d(75, 0).unwrap();
        assert_eq!(format!("{:.3}", freeze_for_transfer(&mut d, 2).unwrap()), "70.359");
        let mut f = build_fcnn(75, 0).unwrap();
        assert_eq!(freeze_for_transfer(&mut f, 2).unwrap(), 100.0);
        assert!(matches!(freeze_for_transfer(&mut f, 3), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn config_rejects_k3() {
        let cfg = TransferConfig {
            last_k_linear: 3,
            ..TransferConfig::default()
        };
        assert!(cfg.validate().is_err());
    }
}
