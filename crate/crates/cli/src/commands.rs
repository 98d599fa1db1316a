use std::path::{Path, PathBuf};

use onflow::aerogen::{add_noise, generate_dataset_with, import_dataset, AirfoilGeometry, DomainDataset};
use onflow::architectures::build;
use onflow::experiments::{run_scenario, RunContext, ScenarioSpec};
use onflow::fsutil::write_atomic_str;
use onflow::nn::{load_checkpoint, save_checkpoint, Checkpoint};
use onflow::pipeline::{
    constant_baseline, downsample_dataset, evaluate, split_ordered, write_history, Normalizer, Prepared, Task,
};
use onflow::quasirandom::{halton_plan_from, DoePlan};
use onflow::transfer::{evaluate_dataset, run_transfer, TransferConfig};
use onflow::{Error, Result};
use serde::{Deserialize, Serialize};

use crate::config::{EvalSplit, RunConfig};
use crate::{Cli, Command, TrainingFlags};

/// Scenario specs shipped with the binary.
pub const BUNDLED: &[(&str, &str)] = &[
    ("distribution-shift-default", include_str!("../scenarios/distribution-shift-default.toml")),
    ("domain-extension-default", include_str!("../scenarios/domain-extension-default.toml")),
    ("noisy-domain-default", include_str!("../scenarios/noisy-domain-default.toml")),
    ("task-adaptation-default", include_str!("../scenarios/task-adaptation-default.toml")),
    ("timing-default", include_str!("../scenarios/timing-default.toml")),
    ("offline-sweep-default", include_str!("../scenarios/offline-sweep-default.toml")),
];

/// Stored next to the weights of every network written by `train` and `transfer`.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct NetworkMeta {
    normalizer: Normalizer,
    task: Task,
    n_s: usize,
}

fn network_meta(ckpt: &Checkpoint, path: &Path) -> Result<NetworkMeta> {
    ckpt.metadata
        .clone()
        .and_then(|m| serde_json::from_value(m).ok())
        .ok_or_else(|| Error::Parse {
            path: Some(path.to_path_buf()),
            line: None,
            message: "checkpoint carries no normalizer metadata".into(),
        })
}

fn apply_training(flags: &TrainingFlags, batch: &mut usize, epochs: &mut usize, patience: &mut usize, lr: &mut f64) {
    if let Some(v) = flags.batch_size {
        *batch = v;
    }
    if let Some(v) = flags.max_epochs {
        *epochs = v;
    }
    if let Some(v) = flags.patience {
        *patience = v;
    }
    if let Some(v) = flags.lr {
        *lr = v;
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let mut cfg = RunConfig::load(cli.common.config.as_deref())?;
    if let Some(seed) = cli.common.seed {
        cfg.seed = seed;
    }
    if let Some(t) = cli.common.threads {
        cfg.threads = Some(t);
    }
    if let Some(t) = cfg.threads {
        if t == 0 {
            return Err(Error::InvalidArgument("--threads must be at least 1".into()));
        }
        // Fails only when a pool already exists, which is harmless.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    let default_out = |name: &str| PathBuf::from("runs").join(name);

    match cli.command {
        Command::Doe { count, start_index } => {
            if let Some(c) = count {
                cfg.doe.count = c;
            }
            if let Some(s) = start_index {
                cfg.doe.start_index = s;
            }
            let out = cli.common.out.unwrap_or_else(|| default_out("doe"));
            cmd_doe(&cfg, &out)
        }
        Command::Generate { doe, fidelity, geometry, noise_sigma, noise_copies } => {
            if let Some(f) = fidelity {
                cfg.generate.fidelity = f.parse()?;
            }
            if let Some(g) = geometry {
                cfg.generate.geometry.path = Some(g);
            }
            if let Some(s) = noise_sigma {
                cfg.generate.noise_sigma = s;
            }
            if let Some(c) = noise_copies {
                cfg.generate.noise_copies = c;
            }
            let out = cli.common.out.unwrap_or_else(|| default_out("generate"));
            cmd_generate(&cfg, doe.as_deref(), &out)
        }
        Command::Train { dataset, arch, n_s, task, training } => {
            if let Some(a) = arch {
                cfg.train.architecture = a;
            }
            if let Some(n) = n_s {
                cfg.train.n_s = n;
            }
            if let Some(t) = task {
                cfg.train.task = t;
            }
            let t = &mut cfg.train;
            apply_training(&training, &mut t.batch_size, &mut t.max_epochs, &mut t.patience, &mut t.optimizer.learning_rate);
            let out = cli.common.out.unwrap_or_else(|| default_out("train"));
            cmd_train(&cfg, &dataset, &out)
        }
        Command::Transfer { checkpoint, dataset, source_dataset, last_k, task, target_domain, training } => {
            if let Some(k) = last_k {
                cfg.transfer.last_k = k;
            }
            if let Some(t) = task {
                cfg.transfer.task = Some(t);
            }
            if let Some(d) = target_domain {
                cfg.transfer.target_domain = d;
            }
            let t = &mut cfg.transfer;
            apply_training(&training, &mut t.batch_size, &mut t.max_epochs, &mut t.patience, &mut t.optimizer.learning_rate);
            let out = cli.common.out.unwrap_or_else(|| default_out("transfer"));
            cmd_transfer(&cfg, &checkpoint, &source_dataset, &dataset, &out)
        }
        Command::Evaluate { checkpoint, dataset, split } => {
            if let Some(s) = split {
                cfg.evaluate.split = s;
            }
            let out = cli.common.out.unwrap_or_else(|| default_out("evaluate"));
            cmd_evaluate(&cfg, &checkpoint, &dataset, &out)
        }
        Command::Experiment { scenario, cache_dir, list } => {
            if list {
                for (name, _) in BUNDLED {
                    println!("{name}");
                }
                return Ok(());
            }
            let scenario = scenario.ok_or_else(|| Error::InvalidArgument("missing scenario spec or name".into()))?;
            let mut spec = load_scenario(&scenario)?;
            if let Some(seed) = cli.common.seed {
                spec.seeds = vec![seed];
            }
            let out = cli.common.out.unwrap_or_else(|| default_out(&spec.name));
            cmd_experiment(&cfg, &spec, cache_dir, &out)
        }
    }
}

fn load_scenario(arg: &str) -> Result<ScenarioSpec> {
    let path = Path::new(arg);
    if path.exists() {
        return ScenarioSpec::read(path);
    }
    match BUNDLED.iter().find(|(name, _)| *name == arg) {
        Some((_, text)) => ScenarioSpec::from_toml(text, None),
        None => Err(Error::InvalidArgument(format!(
            "`{arg}` is neither a spec file nor a bundled scenario ({})",
            BUNDLED.iter().map(|(n, _)| *n).collect::<Vec<_>>().join(", ")
        ))),
    }
}

fn cmd_doe(cfg: &RunConfig, out: &Path) -> Result<()> {
    let plan = halton_plan_from(cfg.doe.count, cfg.doe.bounds, cfg.doe.start_index)?;
    plan.write(&out.join("doe.csv"))?;
    cfg.echo(out)?;
    log::info!("wrote {} DoE points to {}", plan.len(), out.display());
    Ok(())
}

fn geometry(cfg: &RunConfig) -> Result<AirfoilGeometry> {
    cfg.generate.geometry.build()
}

fn cmd_generate(cfg: &RunConfig, doe: Option<&Path>, out: &Path) -> Result<()> {
    let plan = match doe {
        Some(p) => DoePlan::read(p, cfg.doe.bounds)?,
        None => halton_plan_from(cfg.doe.count, cfg.doe.bounds, cfg.doe.start_index)?,
    };
    let g = &cfg.generate;
    let mut ds = generate_dataset_with(&plan, &geometry(cfg)?, g.fidelity, g.ambient, &g.stall)?;
    if g.noise_sigma > 0.0 {
        ds = add_noise(&ds, g.noise_sigma, g.noise_copies, cfg.seed)?;
    }
    ds.write(&out.join("dataset.csv"))?;
    plan.write(&out.join("doe.csv"))?;
    cfg.echo(out)?;
    log::info!("wrote {} samples (fidelity {}) to {}", ds.len(), g.fidelity, out.display());
    Ok(())
}

/// Loads a dataset and reduces it to `n_s` surface points when it has more.
fn load_dataset(path: &Path, tag: &str, n_s: usize) -> Result<DomainDataset> {
    let ds = import_dataset(path, tag)?;
    let len = ds.samples.first().map_or(0, |s| s.pressures.len());
    if len == n_s {
        Ok(ds)
    } else {
        downsample_dataset(&ds, n_s)
    }
}

fn cmd_train(cfg: &RunConfig, dataset: &Path, out: &Path) -> Result<()> {
    let t = &cfg.train;
    let train_cfg = cfg.train_config();
    train_cfg.validate()?;
    let ds = load_dataset(dataset, "D_S", t.n_s)?;
    let splits = split_ordered(&ds, &t.split)?;
    let prepared = Prepared::from_splits(&splits, t.task)?;
    let mut network = build(t.architecture, t.n_s, cfg.seed)?;
    log::info!(
        "training {} on {} samples ({} trainable parameters)",
        t.architecture,
        prepared.train.len(),
        network.trainable_params()
    );
    let outcome = onflow::pipeline::train(&mut network, &prepared.train, &prepared.val, &train_cfg)?;
    let mut report = evaluate(&network, &prepared.test, &prepared.normalizer)?;
    report.train_time_s = Some(outcome.train_time_s);
    let labels = |d: &DomainDataset| d.samples.iter().map(|s| t.task.label(s)).collect::<Vec<_>>();
    let (baseline, _) = constant_baseline(&labels(&splits.train), &labels(&splits.test))?;

    let meta = NetworkMeta { normalizer: prepared.normalizer.clone(), task: t.task, n_s: t.n_s };
    let meta = serde_json::to_value(&meta).expect("metadata serializes");
    save_checkpoint(&network, &out.join("network.ckpt"), Some(&meta))?;
    write_history(&outcome.history, &out.join("history.csv"))?;
    report.write(out, "report")?;
    cfg.echo(out)?;
    log::info!(
        "test MAE {:.4} {} (constant predictor {:.4}); best epoch {}",
        report.mae,
        t.task.unit(),
        baseline,
        outcome.best_epoch
    );
    Ok(())
}

fn cmd_transfer(cfg: &RunConfig, checkpoint: &Path, source: &Path, target: &Path, out: &Path) -> Result<()> {
    let ckpt = load_checkpoint(checkpoint)?;
    let meta = network_meta(&ckpt, checkpoint)?;
    let task = cfg.transfer.task.unwrap_or(meta.task);
    let tcfg = TransferConfig {
        last_k_linear: cfg.transfer.last_k,
        train: cfg.transfer_train_config(task),
        target_domain: cfg.transfer.target_domain.clone(),
    };
    tcfg.validate()?;
    let source_splits = split_ordered(&load_dataset(source, "D_S", meta.n_s)?, &cfg.train.split)?;
    let target_splits = split_ordered(&load_dataset(target, &tcfg.target_domain, meta.n_s)?, &cfg.train.split)?;
    let result = run_transfer(&ckpt.network, &meta.normalizer, &source_splits.test, &target_splits, task, &tcfg)?;

    let new_meta = NetworkMeta { normalizer: result.prepared.normalizer.clone(), task, n_s: meta.n_s };
    let new_meta = serde_json::to_value(&new_meta).expect("metadata serializes");
    save_checkpoint(&result.network, &out.join("network.ckpt"), Some(&new_meta))?;
    write_history(&result.outcome.history, &out.join("history.csv"))?;
    write_atomic_str(&out.join("four_way.csv"), &result.report.to_csv())?;
    let r = &result.report;
    for (stem, rep) in [
        ("ol_on_source", &r.ol_on_source),
        ("ol_on_target", &r.ol_on_target),
        ("tl_on_source", &r.tl_on_source),
        ("tl_on_target", &r.tl_on_target),
    ] {
        rep.write(out, stem)?;
    }
    cfg.echo(out)?;
    let [a, b, c, d] = r.maes();
    log::info!(
        "retrained {:.3}% of parameters; MAE N_OL {}: {a:.4}, N_OL {}: {b:.4}, N_TL {}: {c:.4}, N_TL {}: {d:.4}",
        result.retrained_percent,
        r.source_domain,
        r.target_domain,
        r.source_domain,
        r.target_domain
    );
    Ok(())
}

fn cmd_evaluate(cfg: &RunConfig, checkpoint: &Path, dataset: &Path, out: &Path) -> Result<()> {
    let ckpt = load_checkpoint(checkpoint)?;
    let meta = network_meta(&ckpt, checkpoint)?;
    let ds = load_dataset(dataset, "eval", meta.n_s)?;
    let ds = match cfg.evaluate.split {
        EvalSplit::All => ds,
        EvalSplit::Test => split_ordered(&ds, &cfg.train.split)?.test,
    };
    let report = evaluate_dataset(&ckpt.network, &ds, &meta.normalizer)?;
    report.write(out, "report")?;
    cfg.echo(out)?;
    log::info!("MAE {:.4} {} over {} samples", report.mae, meta.task.unit(), report.n_test);
    Ok(())
}

fn cmd_experiment(cfg: &RunConfig, spec: &ScenarioSpec, cache_dir: Option<PathBuf>, out: &Path) -> Result<()> {
    cfg.echo(out)?;
    let report = run_scenario(spec, &RunContext::new(Some(out.to_path_buf()), cache_dir))?;
    for (key, value) in &report.medians {
        log::info!("median {key} = {value:.4}");
    }
    log::info!("scenario `{}` written to {}", report.name, out.display());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use onflow::architectures::ArchitectureKind;

    #[test]
    fn bundled_scenarios_parse() {
        for (name, text) in BUNDLED {
            let spec = ScenarioSpec::from_toml(text, None).unwrap_or_else(|e| panic!("{name}: {e}"));
            assert_eq!(spec.name, *name);
            spec.validate().unwrap();
            if spec.architectures.contains(&ArchitectureKind::ConvNetD) {
                assert_eq!(spec.offline_for(ArchitectureKind::ConvNetD).max_epochs, 12);
                assert_eq!(spec.offline_for(ArchitectureKind::ConvNetD).batch_size, spec.offline.batch_size);
            }
        }
    }
}
