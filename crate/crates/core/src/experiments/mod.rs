//! Scenario runners for the demonstration cases and their report bundles.
//!
//! A scenario with an output directory writes:
//!
//! ```text
//! <out>/spec.toml          resolved scenario specification
//! <out>/reports/*.csv      aggregate tables
//! <out>/reports/errors/    per-sample absolute errors of every evaluated run
//! <out>/checkpoints/       trained networks (when `save_checkpoints` is set)
//! <out>/summary.json       machine-readable report
//! ```

mod runners;
mod spec;

pub use runners::{offline_run, OfflineRun};
pub use spec::{ArchOverrides, GeometrySpec, ScenarioKind, ScenarioSpec};

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::architectures::ArchitectureKind;
use crate::error::{Error, Result};
use crate::fsutil;
use crate::pipeline::Task;

/// Where a scenario writes its bundle and where offline networks are cached.
#[derive(Debug, Clone, Default)]
pub struct RunContext {
    pub out_dir: Option<PathBuf>,
    /// Offline networks are reused across scenarios when keyed identically.
    pub cache_dir: Option<PathBuf>,
}

impl RunContext {
    pub fn new(out_dir: Option<PathBuf>, cache_dir: Option<PathBuf>) -> Self {
        RunContext { out_dir, cache_dir }
    }

    pub(crate) fn errors_dir(&self) -> Option<PathBuf> {
        self.out_dir.as_ref().map(|d| d.join("reports").join("errors"))
    }

    pub(crate) fn checkpoints_dir(&self) -> Option<PathBuf> {
        self.out_dir.as_ref().map(|d| d.join("checkpoints"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OfflineRow {
    pub architecture: ArchitectureKind,
    pub task: Task,
    pub n_d: usize,
    pub n_s: usize,
    pub seed: u64,
    pub mae: f64,
    pub mse: f64,
    /// MAE of predicting the mean training label everywhere.
    pub baseline_mae: f64,
    pub t_ol: f64,
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub network_fingerprint: String,
}

/// One transfer run: both networks scored on both test sets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferRow {
    pub architecture: ArchitectureKind,
    pub task: Task,
    pub n_d: usize,
    pub n_s: usize,
    pub seed: u64,
    pub k: usize,
    pub noise_sigma: Option<f64>,
    pub source_domain: String,
    pub target_domain: String,
    pub ol_on_source: f64,
    pub ol_on_target: f64,
    pub tl_on_source: f64,
    pub tl_on_target: f64,
    pub t_ol: f64,
    pub t_tl: f64,
    pub retrained_percent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskAdaptationRow {
    pub architecture: ArchitectureKind,
    pub n_d: usize,
    pub n_s: usize,
    pub seed: u64,
    pub k: usize,
    /// N_OL(alpha) on its own task, degrees.
    pub ol_alpha_mae: f64,
    /// N_OL(v_inf) trained directly, m/s.
    pub direct_v_inf_mae: f64,
    /// N_TL(alpha -> v_inf), m/s.
    pub tl_v_inf_mae: f64,
    pub t_direct: f64,
    pub t_tl: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingCell {
    pub architecture: ArchitectureKind,
    pub task: Task,
    pub n_d: usize,
    pub repetitions: usize,
    pub t_ol_mean: f64,
    pub t_ol_sd: f64,
    pub t_tl1_mean: f64,
    pub t_tl1_sd: f64,
    pub t_tl2_mean: f64,
    pub t_tl2_sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hardware {
    pub os: String,
    pub arch: String,
    pub logical_cpus: usize,
    pub cpu_model: String,
    pub worker_threads: usize,
}

impl Hardware {
    pub fn detect() -> Self {
        let cpu_model = std::fs::read_to_string("/proc/cpuinfo")
            .ok()
            .and_then(|s| {
                s.lines()
                    .find(|l| l.starts_with("model name"))
                    .and_then(|l| l.split(':').nth(1))
                    .map(|m| m.trim().to_string())
            })
            .unwrap_or_else(|| "unknown".to_string());
        Hardware {
            os: std::env::consts::OS.to_string(),
            arch: std::env::consts::ARCH.to_string(),
            logical_cpus: std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1),
            cpu_model,
            worker_threads: rayon::current_num_threads(),
        }
    }
}

/// Everything a scenario produced; unused sections stay empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub name: String,
    pub kind: ScenarioKind,
    pub offline: Vec<OfflineRow>,
    pub transfer: Vec<TransferRow>,
    pub task_adaptation: Vec<TaskAdaptationRow>,
    pub timing: Vec<TimingCell>,
    pub hardware: Option<Hardware>,
    /// Medians over seeds keyed by `<group>/<metric>`.
    pub medians: BTreeMap<String, f64>,
}

impl ScenarioReport {
    fn new(spec: &ScenarioSpec) -> Self {
        ScenarioReport {
            name: spec.name.clone(),
            kind: spec.kind,
            offline: Vec::new(),
            transfer: Vec::new(),
            task_adaptation: Vec::new(),
            timing: Vec::new(),
            hardware: None,
            medians: BTreeMap::new(),
        }
    }

    /// Transfer rows matching a filter.
    pub fn transfer_rows(&self, arch: ArchitectureKind, task: Task, n_d: usize, k: usize) -> Vec<&TransferRow> {
        self.transfer
            .iter()
            .filter(|r| r.architecture == arch && r.task == task && r.n_d == n_d && r.k == k)
            .collect()
    }

    fn fill_medians(&mut self) {
        let mut groups: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        for r in &self.offline {
            let g = format!("{}/{}/nd{}/ns{}", r.architecture, r.task, r.n_d, r.n_s);
            groups.entry(format!("{g}/mae")).or_default().push(r.mae);
            groups.entry(format!("{g}/baseline_mae")).or_default().push(r.baseline_mae);
        }
        for r in &self.transfer {
            let sigma = r.noise_sigma.map(|s| format!("/sigma{s}")).unwrap_or_default();
            let g = format!("{}/{}/nd{}/ns{}/k{}{sigma}", r.architecture, r.task, r.n_d, r.n_s, r.k);
            for (m, v) in [
                ("ol_on_source", r.ol_on_source),
                ("ol_on_target", r.ol_on_target),
                ("tl_on_source", r.tl_on_source),
                ("tl_on_target", r.tl_on_target),
            ] {
                groups.entry(format!("{g}/{m}")).or_default().push(v);
            }
        }
        for r in &self.task_adaptation {
            let g = format!("{}/nd{}/ns{}/k{}", r.architecture, r.n_d, r.n_s, r.k);
            for (m, v) in [
                ("ol_alpha_mae", r.ol_alpha_mae),
                ("direct_v_inf_mae", r.direct_v_inf_mae),
                ("tl_v_inf_mae", r.tl_v_inf_mae),
            ] {
                groups.entry(format!("{g}/{m}")).or_default().push(v);
            }
        }
        self.medians = groups.into_iter().map(|(k, v)| (k, median(&v))).collect();
    }

    pub fn offline_csv(&self) -> String {
        let mut out =
            String::from("architecture,task,n_d,n_s,seed,mae,mse,baseline_mae,t_ol,best_epoch,epochs_run\n");
        for r in &self.offline {
            out.push_str(&format!(
                "{},{},{},{},{},{:?},{:?},{:?},{:?},{},{}\n",
                r.architecture, r.task, r.n_d, r.n_s, r.seed, r.mae, r.mse, r.baseline_mae, r.t_ol, r.best_epoch, r.epochs_run
            ));
        }
        out
    }

    pub fn transfer_csv(&self) -> String {
        let mut out = String::from(
            "architecture,task,n_d,n_s,seed,k,noise_sigma,source_domain,target_domain,\
             ol_on_source,ol_on_target,tl_on_source,tl_on_target,t_ol,t_tl,retrained_percent\n",
        );
        for r in &self.transfer {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{:?},{:?},{:?},{:?},{:?},{:?},{:?}\n",
                r.architecture,
                r.task,
                r.n_d,
                r.n_s,
                r.seed,
                r.k,
                r.noise_sigma.map(|s| format!("{s:?}")).unwrap_or_default(),
                r.source_domain,
                r.target_domain,
                r.ol_on_source,
                r.ol_on_target,
                r.tl_on_source,
                r.tl_on_target,
                r.t_ol,
                r.t_tl,
                r.retrained_percent
            ));
        }
        out
    }

    pub fn task_adaptation_csv(&self) -> String {
        let mut out =
            String::from("architecture,n_d,n_s,seed,k,ol_alpha_mae,direct_v_inf_mae,tl_v_inf_mae,t_direct,t_tl\n");
        for r in &self.task_adaptation {
            out.push_str(&format!(
                "{},{},{},{},{},{:?},{:?},{:?},{:?},{:?}\n",
                r.architecture, r.n_d, r.n_s, r.seed, r.k, r.ol_alpha_mae, r.direct_v_inf_mae, r.tl_v_inf_mae, r.t_direct, r.t_tl
            ));
        }
        out
    }

    /// Columns ordered t_OL, t_TL(1 layer), t_TL(2 layers), each mean and sd.
    pub fn timing_csv(&self) -> String {
        let mut out = String::from(
            "architecture,task,n_d,repetitions,t_ol_mean,t_ol_sd,t_tl1_mean,t_tl1_sd,t_tl2_mean,t_tl2_sd\n",
        );
        for c in &self.timing {
            out.push_str(&format!(
                "{},{},{},{},{:.3},{:.3},{:.3},{:.3},{:.3},{:.3}\n",
                c.architecture,
                c.task,
                c.n_d,
                c.repetitions,
                c.t_ol_mean,
                c.t_ol_sd,
                c.t_tl1_mean,
                c.t_tl1_sd,
                c.t_tl2_mean,
                c.t_tl2_sd
            ));
        }
        out
    }

    fn write(&self, spec: &ScenarioSpec, dir: &Path) -> Result<()> {
        fsutil::write_atomic_str(&dir.join("spec.toml"), &spec.to_toml()?)?;
        let reports = dir.join("reports");
        if !self.offline.is_empty() {
            fsutil::write_atomic_str(&reports.join("offline_mae.csv"), &self.offline_csv())?;
        }
        if !self.transfer.is_empty() {
            fsutil::write_atomic_str(&reports.join("four_way_mae.csv"), &self.transfer_csv())?;
        }
        if !self.task_adaptation.is_empty() {
            fsutil::write_atomic_str(&reports.join("task_adaptation_mae.csv"), &self.task_adaptation_csv())?;
        }
        if !self.timing.is_empty() {
            fsutil::write_atomic_str(&reports.join("timing.csv"), &self.timing_csv())?;
        }
        let summary = serde_json::to_string_pretty(self).expect("reports serialize");
        fsutil::write_atomic_str(&dir.join("summary.json"), &summary)
    }
}

/// Median with the mean of the two central values for even counts.
pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Mean and sample standard deviation.
pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    let sd = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (mean, sd)
}

/// Runs a scenario and, when the context has an output directory, writes its bundle.
pub fn run_scenario(spec: &ScenarioSpec, ctx: &RunContext) -> Result<ScenarioReport> {
    spec.validate()?;
    if let Some(dir) = &ctx.out_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        fsutil::write_atomic_str(&dir.join("spec.toml"), &spec.to_toml()?)?;
    }
    let mut report = ScenarioReport::new(spec);
    match spec.kind {
        ScenarioKind::OfflineSweep => runners::offline_sweep(spec, ctx, &mut report)?,
        ScenarioKind::DistributionShift => runners::distribution_shift(spec, ctx, &mut report)?,
        ScenarioKind::DomainExtension => runners::domain_extension(spec, ctx, &mut report)?,
        ScenarioKind::NoisyDomain => runners::noisy_domain(spec, ctx, &mut report)?,
        ScenarioKind::TaskAdaptation => runners::task_adaptation(spec, ctx, &mut report)?,
        ScenarioKind::Timing => {
            runners::distribution_shift(spec, ctx, &mut report)?;
            runners::timing_cells(&mut report);
            report.hardware = Some(Hardware::detect());
        }
    }
    report.fill_medians();
    if let Some(dir) = &ctx.out_dir {
        report.write(spec, dir)?;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_and_spread() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert!(median(&[]).is_nan());
        let (m, s) = mean_sd(&[1.0, 2.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s - 1.0).abs() < 1e-12);
        assert_eq!(mean_sd(&[5.0]).1, 0.0);
    }
}
