use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{mean_sd, OfflineRow, RunContext, ScenarioReport, ScenarioSpec, TaskAdaptationRow, TimingCell, TransferRow};
use crate::aerogen::{add_noise, generate_dataset_with, AirfoilGeometry, DomainDataset, Fidelity};
use crate::architectures::{build, ArchitectureKind};
use crate::error::Result;
use crate::nn::{checkpoint, Network};
use crate::pipeline::{
    constant_baseline, downsample_dataset, evaluate, extension_splits, split_ordered, train, MetricsReport, Normalizer,
    Prepared, Splits, Task, TrainConfig, TrainOutcome,
};
use crate::quasirandom::halton_plan;
use crate::transfer::{run_transfer, TransferConfig, TransferResult};

/// A trained offline network with its data encoding and test report.
#[derive(Debug, Clone)]
pub struct OfflineRun {
    pub network: Network,
    pub prepared: Prepared,
    pub outcome: TrainOutcome,
    pub report: MetricsReport,
    pub baseline_mae: f64,
    pub from_cache: bool,
}

#[derive(Serialize, Deserialize)]
struct CacheMeta {
    key: String,
    normalizer: Normalizer,
    outcome: TrainOutcome,
    report: MetricsReport,
    baseline_mae: f64,
}

fn cache_key(arch: ArchitectureKind, splits: &Splits, config: &TrainConfig) -> String {
    let mut h = Sha256::new();
    h.update(arch.name().as_bytes());
    h.update(serde_json::to_vec(config).expect("configs serialize"));
    for part in [&splits.train, &splits.val, &splits.test] {
        h.update((part.len() as u64).to_le_bytes());
        for s in &part.samples {
            h.update(s.alpha.to_le_bytes());
            h.update(s.v_inf.to_le_bytes());
            for p in &s.pressures {
                h.update(p.to_le_bytes());
            }
        }
    }
    hex::encode(h.finalize())
}

/// Trains `arch` on already downsampled splits, or loads an identical earlier
/// run from `cache_dir`. `config.seed` seeds both initialization and training.
pub fn offline_run(
    arch: ArchitectureKind,
    splits: &Splits,
    config: &TrainConfig,
    cache_dir: Option<&Path>,
) -> Result<OfflineRun> {
    let task = config.task;
    let prepared = Prepared::from_splits(splits, task)?;
    let labels = |d: &DomainDataset| d.samples.iter().map(|s| task.label(s)).collect::<Vec<_>>();
    let (baseline_mae, _) = constant_baseline(&labels(&splits.train), &labels(&splits.test))?;
    let key = cache_key(arch, splits, config);
    let cache_path = cache_dir.map(|d| d.join(format!("ol-{}.ckpt", &key[..24])));

    if let Some(path) = cache_path.as_deref().filter(|p| p.exists()) {
        let ckpt = checkpoint::load_checkpoint(path)?;
        let meta: Option<CacheMeta> = ckpt.metadata.and_then(|m| serde_json::from_value(m).ok());
        if let Some(meta) = meta.filter(|m| m.key == key && m.normalizer == prepared.normalizer) {
            log::info!("reusing cached offline network {}", path.display());
            return Ok(OfflineRun {
                network: ckpt.network,
                prepared,
                outcome: meta.outcome,
                report: meta.report,
                baseline_mae: meta.baseline_mae,
                from_cache: true,
            });
        }
        log::warn!("ignoring stale cache entry {}", path.display());
    }

    let n_s = prepared.normalizer.n_features();
    let mut network = build(arch, n_s, config.seed)?;
    let outcome = train(&mut network, &prepared.train, &prepared.val, config)?;
    let mut report = evaluate(&network, &prepared.test, &prepared.normalizer)?;
    report.train_time_s = Some(outcome.train_time_s);
    report.config_fingerprint = Some(config_fingerprint(config));
    log::info!(
        "offline {arch} {task} n_s={n_s} seed={}: mae {:.4} (baseline {:.4}) in {:.1}s",
        config.seed,
        report.mae,
        baseline_mae,
        outcome.train_time_s
    );
    if let Some(path) = &cache_path {
        let meta = CacheMeta {
            key,
            normalizer: prepared.normalizer.clone(),
            outcome: outcome.clone(),
            report: report.clone(),
            baseline_mae,
        };
        let value = serde_json::to_value(&meta).expect("cache metadata serializes");
        checkpoint::save_checkpoint(&network, path, Some(&value))?;
    }
    Ok(OfflineRun {
        network,
        prepared,
        outcome,
        report,
        baseline_mae,
        from_cache: false,
    })
}

/// SHA-256 of a serializable configuration.
pub(crate) fn config_fingerprint<T: Serialize>(config: &T) -> String {
    hex::encode(Sha256::digest(serde_json::to_vec(config).expect("configs serialize")))
}

/// Full-resolution datasets generated once per (size, fidelity).
struct DataStore<'a> {
    spec: &'a ScenarioSpec,
    geometry: AirfoilGeometry,
    full: HashMap<(usize, Fidelity), DomainDataset>,
}

impl<'a> DataStore<'a> {
    fn new(spec: &'a ScenarioSpec) -> Result<Self> {
        Ok(DataStore {
            spec,
            geometry: spec.geometry.build()?,
            full: HashMap::new(),
        })
    }

    fn get(&mut self, n_d: usize, fidelity: Fidelity, n_s: usize) -> Result<DomainDataset> {
        if !self.full.contains_key(&(n_d, fidelity)) {
            let doe = halton_plan(n_d, self.spec.bounds)?;
            let ds = generate_dataset_with(&doe, &self.geometry, fidelity, self.spec.ambient, &self.spec.stall)?;
            self.full.insert((n_d, fidelity), ds);
        }
        downsample_dataset(&self.full[&(n_d, fidelity)], n_s)
    }
}

fn label(arch: ArchitectureKind, task: Task, n_d: usize, n_s: usize, seed: u64) -> String {
    format!("{arch}_{task}_nd{n_d}_ns{n_s}_seed{seed}")
}

fn with_run(config: &TrainConfig, task: Task, seed: u64) -> TrainConfig {
    TrainConfig { task, seed, ..*config }
}

fn write_errors(ctx: &RunContext, name: &str, report: &MetricsReport) -> Result<()> {
    if let Some(dir) = ctx.errors_dir() {
        crate::fsutil::write_atomic_str(&dir.join(format!("{name}.csv")), &report.errors_csv())?;
    }
    Ok(())
}

fn save_network(
    ctx: &RunContext,
    spec: &ScenarioSpec,
    name: &str,
    network: &Network,
    normalizer: &Normalizer,
) -> Result<()> {
    if let (true, Some(dir)) = (spec.save_checkpoints, ctx.checkpoints_dir()) {
        let meta = serde_json::json!({ "normalizer": normalizer });
        checkpoint::save_checkpoint(network, &dir.join(format!("{name}.ckpt")), Some(&meta))?;
    }
    Ok(())
}

fn offline_row(arch: ArchitectureKind, task: Task, n_d: usize, n_s: usize, seed: u64, run: &OfflineRun) -> OfflineRow {
    OfflineRow {
        architecture: arch,
        task,
        n_d,
        n_s,
        seed,
        mae: run.report.mae,
        mse: run.report.mse,
        baseline_mae: run.baseline_mae,
        t_ol: run.outcome.train_time_s,
        best_epoch: run.outcome.best_epoch,
        epochs_run: run.outcome.history.len() - 1,
        network_fingerprint: run.report.network_fingerprint.clone(),
    }
}

/// Runs the offline phase and records it.
#[allow(clippy::too_many_arguments)]
fn offline_phase(
    spec: &ScenarioSpec,
    ctx: &RunContext,
    report: &mut ScenarioReport,
    arch: ArchitectureKind,
    task: Task,
    n_d: usize,
    n_s: usize,
    seed: u64,
    splits: &Splits,
) -> Result<OfflineRun> {
    let run = offline_run(arch, splits, &with_run(spec.offline_for(arch), task, seed), ctx.cache_dir.as_deref())?;
    let name = format!("ol_{}", label(arch, task, n_d, n_s, seed));
    write_errors(ctx, &name, &run.report)?;
    save_network(ctx, spec, &name, &run.network, &run.prepared.normalizer)?;
    report.offline.push(offline_row(arch, task, n_d, n_s, seed, &run));
    Ok(run)
}

#[allow(clippy::too_many_arguments)]
fn transfer_phase(
    spec: &ScenarioSpec,
    ctx: &RunContext,
    arch: ArchitectureKind,
    ol: &OfflineRun,
    source_test: &DomainDataset,
    target: &Splits,
    task: Task,
    k: usize,
    seed: u64,
    target_domain: &str,
    name: &str,
) -> Result<TransferResult> {
    let cfg = TransferConfig {
        last_k_linear: k,
        train: with_run(spec.transfer_for(arch), task, seed),
        target_domain: target_domain.to_string(),
    };
    let mut result = run_transfer(&ol.network, &ol.prepared.normalizer, source_test, target, task, &cfg)?;
    result.report.tl_on_target.config_fingerprint = Some(config_fingerprint(&cfg));
    log::info!(
        "transfer {name} k={k}: N_OL {:.4} -> N_TL {:.4} on {target_domain} in {:.1}s",
        result.report.ol_on_target.mae,
        result.report.tl_on_target.mae,
        result.outcome.train_time_s
    );
    let tl_name = format!("tl{k}_{name}");
    write_errors(ctx, &format!("{tl_name}_on_target"), &result.report.tl_on_target)?;
    write_errors(ctx, &format!("ol_{name}_on_{target_domain}"), &result.report.ol_on_target)?;
    save_network(ctx, spec, &tl_name, &result.network, &result.prepared.normalizer)?;
    Ok(result)
}

#[allow(clippy::too_many_arguments)]
fn transfer_row(
    arch: ArchitectureKind,
    task: Task,
    n_d: usize,
    n_s: usize,
    seed: u64,
    noise_sigma: Option<f64>,
    ol: &OfflineRun,
    tl: &TransferResult,
) -> TransferRow {
    let r = &tl.report;
    TransferRow {
        architecture: arch,
        task,
        n_d,
        n_s,
        seed,
        k: r.last_k_linear,
        noise_sigma,
        source_domain: r.source_domain.clone(),
        target_domain: r.target_domain.clone(),
        ol_on_source: r.ol_on_source.mae,
        ol_on_target: r.ol_on_target.mae,
        tl_on_source: r.tl_on_source.mae,
        tl_on_target: r.tl_on_target.mae,
        t_ol: ol.outcome.train_time_s,
        t_tl: tl.outcome.train_time_s,
        retrained_percent: tl.retrained_percent,
    }
}

fn grid(spec: &ScenarioSpec) -> Vec<(ArchitectureKind, usize, usize, Task, u64)> {
    let mut cells = Vec::new();
    for &arch in &spec.architectures {
        for &n_d in &spec.dataset_sizes {
            for &n_s in &spec.n_s {
                for &task in &spec.tasks {
                    for &seed in &spec.seeds {
                        cells.push((arch, n_d, n_s, task, seed));
                    }
                }
            }
        }
    }
    cells
}

pub(super) fn offline_sweep(spec: &ScenarioSpec, ctx: &RunContext, report: &mut ScenarioReport) -> Result<()> {
    let mut data = DataStore::new(spec)?;
    for (arch, n_d, n_s, task, seed) in grid(spec) {
        let ds = data.get(n_d, Fidelity::Inviscid, n_s)?;
        let splits = split_ordered(&ds, &spec.split)?;
        offline_phase(spec, ctx, report, arch, task, n_d, n_s, seed, &splits)?;
    }
    Ok(())
}

pub(super) fn distribution_shift(spec: &ScenarioSpec, ctx: &RunContext, report: &mut ScenarioReport) -> Result<()> {
    let mut data = DataStore::new(spec)?;
    for (arch, n_d, n_s, task, seed) in grid(spec) {
        let source = split_ordered(&data.get(n_d, Fidelity::Inviscid, n_s)?, &spec.split)?;
        let target = split_ordered(&data.get(n_d, Fidelity::StallCorrected, n_s)?, &spec.split)?;
        let ol = offline_phase(spec, ctx, report, arch, task, n_d, n_s, seed, &source)?;
        let name = label(arch, task, n_d, n_s, seed);
        for &k in &spec.last_k {
            let tl = transfer_phase(spec, ctx, arch, &ol, &source.test, &target, task, k, seed, "D_R", &name)?;
            report.transfer.push(transfer_row(arch, task, n_d, n_s, seed, None, &ol, &tl));
        }
    }
    Ok(())
}

pub(super) fn domain_extension(spec: &ScenarioSpec, ctx: &RunContext, report: &mut ScenarioReport) -> Result<()> {
    let mut data = DataStore::new(spec)?;
    for (arch, n_d, n_s, task, seed) in grid(spec) {
        let ds = data.get(n_d, Fidelity::Inviscid, n_s)?.retagged("D");
        let ext = extension_splits(&ds, task, &spec.split)?;
        let ol = offline_phase(spec, ctx, report, arch, task, n_d, n_s, seed, &ext.initial)?;
        let name = label(arch, task, n_d, n_s, seed);
        for &k in &spec.last_k {
            let tl = transfer_phase(spec, ctx, arch, &ol, &ext.initial.test, &ext.extended, task, k, seed, "D_e", &name)?;
            report.transfer.push(transfer_row(arch, task, n_d, n_s, seed, None, &ol, &tl));
        }
    }
    Ok(())
}

pub(super) fn noisy_domain(spec: &ScenarioSpec, ctx: &RunContext, report: &mut ScenarioReport) -> Result<()> {
    let mut data = DataStore::new(spec)?;
    for (arch, n_d, n_s, task, seed) in grid(spec) {
        let clean = data.get(n_d, Fidelity::Inviscid, n_s)?.retagged("D_i");
        let source = split_ordered(&clean, &spec.split)?;
        let ol = offline_phase(spec, ctx, report, arch, task, n_d, n_s, seed, &source)?;
        for (i, &sigma) in spec.noise_sigmas.iter().enumerate() {
            let noise_seed = seed.wrapping_mul(1_000_003).wrapping_add(i as u64);
            let noisy = add_noise(&clean, sigma, spec.noise_copies, noise_seed)?;
            let target = split_ordered(&noisy, &spec.split)?;
            let name = format!("{}_sigma{sigma}", label(arch, task, n_d, n_s, seed));
            for &k in &spec.last_k {
                let tl = transfer_phase(spec, ctx, arch, &ol, &source.test, &target, task, k, seed, "D_n", &name)?;
                report.transfer.push(transfer_row(arch, task, n_d, n_s, seed, Some(sigma), &ol, &tl));
            }
        }
    }
    Ok(())
}

/// Source task alpha, target task v_inf, same domain. `spec.tasks` is not used.
pub(super) fn task_adaptation(spec: &ScenarioSpec, ctx: &RunContext, report: &mut ScenarioReport) -> Result<()> {
    let mut data = DataStore::new(spec)?;
    for &arch in &spec.architectures {
        for &n_d in &spec.dataset_sizes {
            for &n_s in &spec.n_s {
                for &seed in &spec.seeds {
                    let splits = split_ordered(&data.get(n_d, Fidelity::Inviscid, n_s)?, &spec.split)?;
                    let ol_alpha = offline_phase(spec, ctx, report, arch, Task::Alpha, n_d, n_s, seed, &splits)?;
                    let direct = offline_phase(spec, ctx, report, arch, Task::VInf, n_d, n_s, seed, &splits)?;
                    let name = format!("alpha_to_v_inf_{}", label(arch, Task::VInf, n_d, n_s, seed));
                    for &k in &spec.last_k {
                        let tl = transfer_phase(spec, ctx, arch, &ol_alpha, &splits.test, &splits, Task::VInf, k, seed, "D_S", &name)?;
                        report.task_adaptation.push(TaskAdaptationRow {
                            architecture: arch,
                            n_d,
                            n_s,
                            seed,
                            k,
                            ol_alpha_mae: ol_alpha.report.mae,
                            direct_v_inf_mae: direct.report.mae,
                            tl_v_inf_mae: tl.report.tl_on_target.mae,
                            t_direct: direct.outcome.train_time_s,
                            t_tl: tl.outcome.train_time_s,
                        });
                    }
                }
            }
        }
    }
    Ok(())
}

/// Aggregates transfer rows into mean ± sd training times per cell.
pub(super) fn timing_cells(report: &mut ScenarioReport) {
    let mut keys: Vec<(ArchitectureKind, Task, usize)> = Vec::new();
    for r in &report.transfer {
        let key = (r.architecture, r.task, r.n_d);
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    report.timing = keys
        .into_iter()
        .map(|(arch, task, n_d)| {
            let rows = |k: usize| report.transfer_rows(arch, task, n_d, k);
            let t_ol: Vec<f64> = rows(1).iter().map(|r| r.t_ol).collect();
            let t1: Vec<f64> = rows(1).iter().map(|r| r.t_tl).collect();
            let t2: Vec<f64> = rows(2).iter().map(|r| r.t_tl).collect();
            let (t_ol_mean, t_ol_sd) = mean_sd(&t_ol);
            let (t_tl1_mean, t_tl1_sd) = mean_sd(&t1);
            let (t_tl2_mean, t_tl2_sd) = mean_sd(&t2);
            TimingCell {
                architecture: arch,
                task,
                n_d,
                repetitions: t_ol.len(),
                t_ol_mean,
                t_ol_sd,
                t_tl1_mean,
                t_tl1_sd,
                t_tl2_mean,
                t_tl2_sd,
            }
        })
        .collect();
}
