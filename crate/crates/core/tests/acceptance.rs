//! Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
//! criterion fails. All criteria run sequentially in one process so that wall
//! clock comparisons are not disturbed by concurrent tests. The learning
//! criteria dominate the runtime (about two hours and twenty minutes on one core).
//!
//! `ONFLOW_ACCEPTANCE=1,4,5` restricts the run to the listed criteria.

use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::time::Instant;

use onflow::aerogen::{default_airfoil, generate_dataset, parametric_airfoil, Ambient, Fidelity, PanelSolver};
use onflow::architectures::{build, retrainable_fraction, ArchitectureKind};
use onflow::experiments::{median, offline_run, run_scenario, RunContext, ScenarioKind, ScenarioReport, ScenarioSpec};
use onflow::nn::{checkpoint, grad_check, LayerSpec, Network, OptimizerConfig, Shape, Tensor1D};
use onflow::pipeline::{downsample_dataset, split_ordered, Splits, SplitSpec, Task, TrainConfig};
use onflow::quasirandom::{halton_plan, radical_inverse, DomainBounds};
use onflow::transfer::{run_transfer, TransferConfig};

// Pinned tolerances and settings.
const FD_EPSILON: f64 = 1e-5;
const FD_MAX_REL_ERROR: f64 = 1e-4;
const SYMMETRIC_CL_MAX: f64 = 1e-3;
const LIFT_SLOPE_REL_TOL: f64 = 0.05;
const LIFT_SLOPE_ALPHA_DEG: f64 = 3.0;
const KUTTA_CP_MAX: f64 = 0.05;
const OFFLINE_MAE_RATIO_MAX: f64 = 0.2;
const SEEDS: [u64; 5] = [0, 1, 2, 3, 4];
const N_S: usize = 75;
const N_D: usize = 1024;
const FREEZE_EPOCHS: usize = 50;

const LEARNING_RATE: f64 = 1e-3;
const EPOCHS_S: usize = 30;
const EPOCHS_D: usize = 12;

/// Adam at `LEARNING_RATE` for a fixed budget; early stopping never fires.
fn budget(max_epochs: usize) -> TrainConfig {
    TrainConfig {
        optimizer: OptimizerConfig { learning_rate: LEARNING_RATE, ..Default::default() },
        max_epochs,
        patience: max_epochs,
        ..Default::default()
    }
}

fn offline_s() -> TrainConfig {
    budget(EPOCHS_S)
}

struct Suite {
    only: Option<BTreeSet<u32>>,
    failed: Vec<u32>,
    ctx: RunContext,
    _cache: tempfile::TempDir,
}

impl Suite {
    fn wants(&self, id: u32) -> bool {
        self.only.as_ref().is_none_or(|s| s.contains(&id))
    }

    fn report(&mut self, id: u32, name: &str, pass: bool, detail: String, started: Instant) {
        let verdict = if pass { "PASS" } else { "FAIL" };
        println!(
            "criterion {id:>2} [{verdict}] {name}: {detail} ({:.1}s)",
            started.elapsed().as_secs_f64()
        );
        if !pass {
            self.failed.push(id);
        }
    }
}

fn scenario(kind: ScenarioKind, arch: ArchitectureKind) -> ScenarioSpec {
    let mut s = ScenarioSpec::for_kind(kind);
    s.name = format!("acceptance-{kind}-{arch}");
    s.architectures = vec![arch];
    s.n_s = vec![N_S];
    s.seeds = SEEDS.to_vec();
    s.save_checkpoints = false;
    let (ol, tl) = match arch {
        ArchitectureKind::ConvNetD => (budget(EPOCHS_D), budget(EPOCHS_D)),
        _ => (budget(EPOCHS_S), budget(EPOCHS_S)),
    };
    s.offline = ol;
    s.transfer = tl;
    s
}

fn source_splits(n_d: usize, fidelity: Fidelity) -> Splits {
    let doe = halton_plan(n_d, DomainBounds::default()).unwrap();
    let ds = generate_dataset(&doe, &default_airfoil(), fidelity, Ambient::default()).unwrap();
    split_ordered(&downsample_dataset(&ds, N_S).unwrap(), &SplitSpec::default()).unwrap()
}

fn med<'a>(rows: impl Iterator<Item = &'a f64>) -> f64 {
    median(&rows.copied().collect::<Vec<_>>())
}

fn main() {
    let only = std::env::var("ONFLOW_ACCEPTANCE").ok().map(|v| {
        v.split(',').filter_map(|s| s.trim().parse().ok()).collect::<BTreeSet<u32>>()
    });
    let cache = tempfile::tempdir().unwrap();
    let mut suite = Suite {
        only,
        failed: Vec::new(),
        ctx: RunContext::new(None, Some(cache.path().to_path_buf())),
        _cache: cache,
    };
    let total = Instant::now();

    if suite.wants(1) {
        architecture_fidelity(&mut suite);
    }
    if suite.wants(2) {
        gradient_suite(&mut suite);
    }
    if suite.wants(3) {
        freezing_suite(&mut suite);
    }
    if suite.wants(4) {
        halton_suite(&mut suite);
    }
    if suite.wants(5) {
        panel_suite(&mut suite);
    }
    if suite.wants(6) || suite.wants(11) {
        offline_and_determinism(&mut suite);
    }
    if suite.wants(7) || suite.wants(10) {
        distribution_shift_and_timing(&mut suite);
    }
    if suite.wants(8) {
        domain_extension(&mut suite);
    }
    if suite.wants(9) {
        task_adaptation(&mut suite);
    }

    println!("acceptance finished in {:.0}s", total.elapsed().as_secs_f64());
    if !suite.failed.is_empty() {
        println!("failed criteria: {:?}", suite.failed);
        std::process::exit(1);
    }
}

/// Per-layer sum from the architecture tables, independent of the builders.
fn table_count(convs: &[(usize, usize, usize)], linears: &[(usize, usize)]) -> usize {
    convs.iter().map(|(i, o, k)| i * o * k + o).sum::<usize>() + linears.iter().map(|(i, o)| i * o + o).sum::<usize>()
}

fn architecture_fidelity(suite: &mut Suite) {
    let t = Instant::now();
    let d_table = table_count(
        &[(1, 64, 11), (64, 192, 5), (192, 384, 3), (384, 256, 3), (256, 256, 3)],
        &[(1536, 4096), (4096, 4096), (4096, 1)],
    );
    let s_table = table_count(&[(1, 64, 11), (64, 192, 5)], &[(1152, 4096), (4096, 1)]);
    let mut pass = d_table == 23_856_961;
    let mut parts = Vec::new();
    for (kind, table) in [(ArchitectureKind::ConvNetS, s_table), (ArchitectureKind::ConvNetD, d_table)] {
        let mut net = build(kind, N_S, 0).unwrap();
        pass &= net.total_params() == table;
        parts.push(format!("{kind} total {} (table sum {table})", net.total_params()));
        for (k, expected) in match kind {
            ArchitectureKind::ConvNetS => [(1, "0.086"), (2, "98.697")],
            _ => [(1, "0.017"), (2, "70.359")],
        } {
            let got = format!("{:.3}", retrainable_fraction(&mut net, k).unwrap());
            pass &= got == expected;
            parts.push(format!("k={k} {got}% (expected {expected}%)"));
        }
    }
    // The ConvNet-S literal 4,790,209 exceeds the table sum by 1,024.
    parts.push(format!("ConvNet-S literal 4,790,209 differs from table sum by {}", 4_790_209 - s_table as i64));
    suite.report(1, "architecture fidelity", pass, parts.join("; "), t);
}

fn random_tensor(batch: usize, channels: usize, len: usize, seed: u64) -> Tensor1D {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let values = (0..batch * channels * len).map(|_| rng.random_range(-1.0..1.0)).collect();
    Tensor1D::new(batch, channels, len, values).unwrap()
}

fn gradient_suite(suite: &mut Suite) {
    let t = Instant::now();
    let conv = LayerSpec::conv1d(2, 3, 3, 1, 1);
    let head = |features: usize| vec![LayerSpec::Flatten, LayerSpec::linear(features, 1)];
    let cases: Vec<(&str, Vec<LayerSpec>, Shape)> = vec![
        ("conv1d", [vec![LayerSpec::conv1d(2, 3, 5, 2, 2)], head(3 * 6)].concat(), Shape::new(2, 12)),
        ("relu", [vec![conv.clone(), LayerSpec::Relu], head(36)].concat(), Shape::new(2, 12)),
        ("maxpool1d", [vec![conv.clone(), LayerSpec::maxpool(3, 2)], head(15)].concat(), Shape::new(2, 12)),
        (
            "adaptive_avgpool1d (shrink)",
            [vec![conv.clone(), LayerSpec::AdaptiveAvgPool1d { output_len: 5 }], head(15)].concat(),
            Shape::new(2, 12),
        ),
        (
            "adaptive_avgpool1d (expand)",
            [vec![conv.clone(), LayerSpec::AdaptiveAvgPool1d { output_len: 6 }], head(18)].concat(),
            Shape::new(2, 4),
        ),
        ("dropout (eval)", [vec![conv.clone(), LayerSpec::Dropout { p: 0.5 }], head(36)].concat(), Shape::new(2, 12)),
        ("flatten", [vec![conv.clone()], head(36)].concat(), Shape::new(2, 12)),
        (
            "linear",
            vec![LayerSpec::Flatten, LayerSpec::linear(8, 5), LayerSpec::Relu, LayerSpec::linear(5, 2)],
            Shape::new(1, 8),
        ),
    ];
    let mut pass = true;
    let mut worst: f64 = 0.0;
    let mut lines = Vec::new();
    for (i, (name, layers, shape)) in cases.into_iter().enumerate() {
        let net = Network::new(layers, shape, 10 + i as u64).unwrap();
        let out = net.output_shape().numel();
        let x = random_tensor(3, shape.channels, shape.length, i as u64);
        let y: Vec<f64> = (0..3 * out).map(|j| 0.1 * j as f64 - 0.2).collect();
        let r = grad_check(&net, &x, &y, FD_EPSILON, 64).unwrap();
        pass &= r.max_rel_error < FD_MAX_REL_ERROR && r.checked > 0;
        worst = worst.max(r.max_rel_error);
        lines.push(format!("{name} {:.1e}", r.max_rel_error));
    }
    // Whole shallow network on a short input.
    let net = build(ArchitectureKind::ConvNetS, 40, 3).unwrap();
    let x = random_tensor(2, 1, 40, 99);
    let r = grad_check(&net, &x, &[0.3, 0.7], FD_EPSILON, 24).unwrap();
    pass &= r.max_rel_error < FD_MAX_REL_ERROR;
    worst = worst.max(r.max_rel_error);
    lines.push(format!("convnet-s {:.1e}", r.max_rel_error));
    suite.report(
        2,
        "gradient suite",
        pass,
        format!("max relative error {worst:.2e} < {FD_MAX_REL_ERROR:e} [{}]", lines.join(", ")),
        t,
    );
}

fn freezing_suite(suite: &mut Suite) {
    let t = Instant::now();
    let source = source_splits(128, Fidelity::Inviscid);
    let target = source_splits(128, Fidelity::StallCorrected);
    let ol_cfg = TrainConfig { max_epochs: 5, patience: 5, ..offline_s() };
    let ol = offline_run(ArchitectureKind::ConvNetS, &source, &ol_cfg, None).unwrap();
    let mut pass = true;
    let mut parts = Vec::new();
    for k in [1, 2] {
        let cfg = TransferConfig { last_k_linear: k, train: budget(FREEZE_EPOCHS), target_domain: "D_R".into() };
        let tl = run_transfer(&ol.network, &ol.prepared.normalizer, &source.test, &target, Task::Alpha, &cfg).unwrap();
        let linear: Vec<usize> = tl
            .network
            .layers()
            .iter()
            .enumerate()
            .filter(|(_, l)| matches!(l, LayerSpec::Linear { .. }))
            .map(|(i, _)| i)
            .collect();
        let retrained = &linear[linear.len() - k..];
        let (mut frozen_same, mut frozen_total, mut changed) = (0, 0, 0);
        for (before, after) in ol.network.blocks().iter().zip(tl.network.blocks()) {
            if retrained.contains(&after.layer) {
                changed += usize::from(before.values != after.values);
            } else {
                frozen_total += 1;
                frozen_same += usize::from(before.values.iter().map(|v| v.to_bits()).eq(after.values.iter().map(|v| v.to_bits())));
            }
        }
        let ok = frozen_same == frozen_total && changed == 2 * k && tl.outcome.history.len() == FREEZE_EPOCHS + 1;
        pass &= ok;
        parts.push(format!(
            "k={k}: {frozen_same}/{frozen_total} frozen blocks bitwise unchanged, {changed}/{} retrained blocks changed",
            2 * k
        ));
    }
    suite.report(3, "freezing suite (50-epoch ConvNet-S transfer)", pass, parts.join("; "), t);
}

/// Digit-reversal oracle evaluated with one final division.
fn radical_oracle(mut i: u64, base: u64) -> f64 {
    let (mut num, mut den) = (0u64, 1u64);
    while i > 0 {
        num = num * base + i % base;
        den *= base;
        i /= base;
    }
    num as f64 / den as f64
}

fn halton_suite(suite: &mut Suite) {
    let t = Instant::now();
    let expected2 = [0.5, 0.25, 0.75, 0.125, 0.625, 0.375, 0.875, 0.0625];
    let expected3 = [1.0 / 3.0, 2.0 / 3.0, 1.0 / 9.0, 4.0 / 9.0, 7.0 / 9.0, 2.0 / 9.0, 5.0 / 9.0, 8.0 / 9.0];
    let mut exact = 0;
    for i in 1..=8u64 {
        let (b2, b3) = (radical_inverse(i, 2).unwrap(), radical_inverse(i, 3).unwrap());
        exact += usize::from(b2 == radical_oracle(i, 2) && b2 == expected2[i as usize - 1]);
        exact += usize::from(b3 == radical_oracle(i, 3) && b3 == expected3[i as usize - 1]);
    }
    let short = halton_plan(128, DomainBounds::default()).unwrap();
    let long = halton_plan(1024, DomainBounds::default()).unwrap();
    let prefix = short.points.iter().zip(&long.points).all(|(a, b)| {
        a.v_inf.to_bits() == b.v_inf.to_bits() && a.alpha.to_bits() == b.alpha.to_bits()
    });
    suite.report(
        4,
        "Halton suite",
        exact == 16 && prefix,
        format!("{exact}/16 radical inverses exact; (128, 1024) prefix stable: {prefix}"),
        t,
    );
}

fn panel_suite(suite: &mut Suite) {
    let t = Instant::now();
    let sym = parametric_airfoil(0.0, 0.4, 0.12, 200).unwrap();
    let cl0 = PanelSolver::new(&sym).unwrap().solve(0.0).unwrap().cl;

    let thin = PanelSolver::new(&parametric_airfoil(0.0, 0.4, 0.06, 200).unwrap()).unwrap();
    let slope = thin.solve(LIFT_SLOPE_ALPHA_DEG).unwrap().cl / LIFT_SLOPE_ALPHA_DEG.to_radians();
    let slope_err = (slope - 2.0 * PI).abs() / (2.0 * PI);

    let solver = PanelSolver::new(&default_airfoil()).unwrap();
    let m = solver.panel_count();
    let bounds = DomainBounds::default();
    let mut kutta: f64 = 0.0;
    let steps = 64;
    for i in 0..=steps {
        let a = bounds.alpha_min + (bounds.alpha_max - bounds.alpha_min) * i as f64 / steps as f64;
        let cp = solver.solve(a).unwrap().cp;
        kutta = kutta.max((cp[0] - cp[m - 1]).abs());
    }
    let pass = cl0.abs() < SYMMETRIC_CL_MAX && slope_err < LIFT_SLOPE_REL_TOL && kutta < KUTTA_CP_MAX;
    suite.report(
        5,
        "panel-method suite",
        pass,
        format!(
            "|CL(0)| = {:.1e}; 6% thick section CL/alpha at {LIFT_SLOPE_ALPHA_DEG} deg {slope:.4}/rad ({:.2}% from 2pi); max trailing-edge Cp mismatch {kutta:.4} over alpha in [{}, {}]",
            cl0.abs(),
            100.0 * slope_err,
            bounds.alpha_min,
            bounds.alpha_max
        ),
        t,
    );
}

fn offline_and_determinism(suite: &mut Suite) {
    let t = Instant::now();
    let splits = source_splits(N_D, Fidelity::Inviscid);
    let mut runs = Vec::new();
    let mut parts = Vec::new();
    let mut pass = true;
    for task in Task::ALL {
        let mut maes = Vec::new();
        let mut baseline = 0.0;
        for seed in SEEDS {
            let cfg = TrainConfig { seed, task, ..offline_s() };
            let run = offline_run(ArchitectureKind::ConvNetS, &splits, &cfg, suite.ctx.cache_dir.as_deref()).unwrap();
            maes.push(run.report.mae);
            baseline = run.baseline_mae;
            runs.push((cfg, run));
        }
        let m = median(&maes);
        pass &= m <= OFFLINE_MAE_RATIO_MAX * baseline;
        parts.push(format!(
            "{task}: median MAE {m:.4} {} vs baseline {baseline:.4} (ratio {:.3} <= {OFFLINE_MAE_RATIO_MAX})",
            task.unit(),
            m / baseline
        ));
    }
    if suite.wants(6) {
        suite.report(6, "offline learning (ConvNet-S, n_s=75, n_d=1024, 5 seeds)", pass, parts.join("; "), t);
    }

    if suite.wants(11) {
        let t = Instant::now();
        let mut identical = 0;
        for (cfg, first) in &runs {
            let again = offline_run(ArchitectureKind::ConvNetS, &splits, cfg, None).unwrap();
            let same_bytes = checkpoint::encode(&first.network, None) == checkpoint::encode(&again.network, None);
            let same_report = first.report.without_timing() == again.report.without_timing();
            let same_history = first
                .outcome
                .history
                .iter()
                .zip(&again.outcome.history)
                .all(|(a, b)| a.train_mse.to_bits() == b.train_mse.to_bits() && a.val_mse.to_bits() == b.val_mse.to_bits());
            identical += usize::from(same_bytes && same_report && same_history);
        }
        suite.report(
            11,
            "determinism (criterion 6 retrained without cache)",
            identical == runs.len(),
            format!("{identical}/{} runs with bitwise-identical checkpoints, reports and histories", runs.len()),
            t,
        );
    }
}

fn distribution_shift_and_timing(suite: &mut Suite) {
    let t = Instant::now();
    let mut reports: Vec<ScenarioReport> = Vec::new();
    for arch in [ArchitectureKind::ConvNetS, ArchitectureKind::ConvNetD] {
        let spec = scenario(ScenarioKind::Timing, arch);
        // ConvNet-D checkpoints are large; only ConvNet-S runs go through the cache.
        let ctx = if arch == ArchitectureKind::ConvNetS { suite.ctx.clone() } else { RunContext::default() };
        reports.push(run_scenario(&spec, &ctx).unwrap());
    }
    if suite.wants(7) {
        let mut pass = true;
        let mut parts = Vec::new();
        for r in &reports {
            for task in Task::ALL {
                let arch = r.transfer[0].architecture;
                let rows = r.transfer_rows(arch, task, N_D, 1);
                let tl = med(rows.iter().map(|r| &r.tl_on_target));
                let ol = med(rows.iter().map(|r| &r.ol_on_target));
                pass &= tl < ol && rows.len() == SEEDS.len();
                parts.push(format!("{arch}/{task}: N_TL {tl:.4} < N_OL {ol:.4}"));
            }
        }
        suite.report(7, "distribution-shift ordering on D_R (k=1, 5 seeds)", pass, parts.join("; "), t);
    }
    if suite.wants(10) {
        let t2 = Instant::now();
        let mut pass = true;
        let mut parts = Vec::new();
        let mut cells = 0;
        for c in reports.iter().flat_map(|r| &r.timing) {
            cells += 1;
            pass &= c.t_tl1_mean < c.t_ol_mean && c.repetitions == SEEDS.len();
            parts.push(format!(
                "{}/{}/n_d={}: t_TL1 {:.1}s < t_OL {:.1}s (t_TL2 {:.1}s)",
                c.architecture, c.task, c.n_d, c.t_tl1_mean, c.t_ol_mean, c.t_tl2_mean
            ));
        }
        pass &= cells == 8;
        suite.report(10, "timing ordering (5 repetitions)", pass, parts.join("; "), t2);
    }
}

fn domain_extension(suite: &mut Suite) {
    let t = Instant::now();
    let spec = scenario(ScenarioKind::DomainExtension, ArchitectureKind::ConvNetS);
    let r = run_scenario(&spec, &suite.ctx).unwrap();
    let mut pass = true;
    let mut parts = Vec::new();
    for task in Task::ALL {
        let rows = r.transfer_rows(ArchitectureKind::ConvNetS, task, N_D, 1);
        let ol_i = med(rows.iter().map(|r| &r.ol_on_source));
        let ol_e = med(rows.iter().map(|r| &r.ol_on_target));
        let tl_e = med(rows.iter().map(|r| &r.tl_on_target));
        pass &= ol_e > ol_i && tl_e < ol_e && rows.len() == SEEDS.len();
        parts.push(format!("convnet-s/{task}: N_OL on D_e {ol_e:.4} > on D_i {ol_i:.4}; N_TL on D_e {tl_e:.4} < {ol_e:.4}"));
    }
    suite.report(8, "domain-extension ordering (5 seeds)", pass, parts.join("; "), t);
}

fn task_adaptation(suite: &mut Suite) {
    let t = Instant::now();
    let spec = scenario(ScenarioKind::TaskAdaptation, ArchitectureKind::ConvNetS);
    let r = run_scenario(&spec, &suite.ctx).unwrap();
    let at = |k: usize| med(r.task_adaptation.iter().filter(|row| row.k == k).map(|row| &row.tl_v_inf_mae));
    let direct = med(r.task_adaptation.iter().filter(|row| row.k == 1).map(|row| &row.direct_v_inf_mae));
    let (k1, k2) = (at(1), at(2));
    suite.report(
        9,
        "task-adaptation ordering (ConvNet-S, alpha -> v_inf, 5 seeds)",
        k2 < k1 && r.task_adaptation.len() == 2 * SEEDS.len(),
        format!("median MAE k=2 {k2:.4} m/s < k=1 {k1:.4} m/s (direct N_OL(v_inf) {direct:.4} m/s)"),
        t,
    );
}
