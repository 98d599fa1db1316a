use std::path::Path;
use std::process::{Command, Output};

fn onflow(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_onflow"))
        .args(args)
        .arg("--quiet")
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn doe_and_generate_write_outputs_with_config() {
    let tmp = tempfile::tempdir().unwrap();
    ok(&onflow(&["doe", "--count", "16", "--out", "doe"], tmp.path()));
    let doe = std::fs::read_to_string(tmp.path().join("doe/doe.csv")).unwrap();
    assert_eq!(doe.lines().count(), 17);
    assert!(tmp.path().join("doe/config.toml").exists());

    ok(&onflow(&["generate", "--doe", "doe/doe.csv", "--fidelity", "B", "--out", "gen"], tmp.path()));
    let ds = std::fs::read_to_string(tmp.path().join("gen/dataset.csv")).unwrap();
    assert_eq!(ds.lines().count(), 17);
    let cfg = std::fs::read_to_string(tmp.path().join("gen/config.toml")).unwrap();
    assert!(cfg.contains("fidelity = \"B\""), "{cfg}");
}

#[test]
fn train_smoke_transfer_and_evaluate() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok(&onflow(&["doe", "--count", "10", "--out", "doe"], d));
    ok(&onflow(&["generate", "--doe", "doe/doe.csv", "--out", "src"], d));
    ok(&onflow(&["generate", "--doe", "doe/doe.csv", "--fidelity", "B", "--out", "tgt"], d));

    ok(&onflow(
        &["train", "--dataset", "src/dataset.csv", "--arch", "fcnn", "--n-s", "40", "--max-epochs", "1", "--out", "ol"],
        d,
    ));
    for f in ["network.ckpt", "history.csv", "report.json", "report_errors.csv", "config.toml"] {
        assert!(d.join("ol").join(f).exists(), "missing {f}");
    }
    let history = std::fs::read_to_string(d.join("ol/history.csv")).unwrap();
    assert_eq!(history.lines().count(), 3, "{history}");

    let bad = onflow(
        &["transfer", "--checkpoint", "ol/network.ckpt", "--dataset", "tgt/dataset.csv", "--source-dataset",
          "src/dataset.csv", "-k", "3", "--out", "tl"],
        d,
    );
    assert_eq!(bad.status.code(), Some(2), "{}", String::from_utf8_lossy(&bad.stderr));

    ok(&onflow(
        &["transfer", "--checkpoint", "ol/network.ckpt", "--dataset", "tgt/dataset.csv", "--source-dataset",
          "src/dataset.csv", "-k", "2", "--max-epochs", "1", "--out", "tl"],
        d,
    ));
    let four = std::fs::read_to_string(d.join("tl/four_way.csv")).unwrap();
    assert!(four.contains("D_S") && four.contains("D_R"), "{four}");
    assert!(d.join("tl/config.toml").exists());

    ok(&onflow(
        &["evaluate", "--checkpoint", "tl/network.ckpt", "--dataset", "tgt/dataset.csv", "--split", "all", "--out", "ev"],
        d,
    ));
    let report = std::fs::read_to_string(d.join("ev/report.json")).unwrap();
    assert!(report.contains("\"n_test\": 10"), "{report}");
}

#[test]
fn error_categories_map_to_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let missing = onflow(&["train", "--dataset", "nope.csv", "--out", "x"], d);
    assert_eq!(missing.status.code(), Some(3));

    std::fs::write(d.join("bad.toml"), "seed = 1\nunknown_key = 2\n").unwrap();
    let parse = onflow(&["doe", "--config", "bad.toml", "--out", "x"], d);
    assert_eq!(parse.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&parse.stderr).contains("bad.toml:2"));

    let usage = onflow(&["train"], d);
    assert_eq!(usage.status.code(), Some(2));
    let unknown = onflow(&["experiment", "no-such-scenario"], d);
    assert_eq!(unknown.status.code(), Some(2));

    ok(&onflow(&["doe", "--count", "10", "--out", "doe"], d));
    ok(&onflow(&["generate", "--doe", "doe/doe.csv", "--out", "src"], d));
    std::fs::write(
        d.join("sgd.toml"),
        "[train.optimizer]\nlearning_rate = 1e200\nkind = { type = \"sgd_momentum\", momentum = 0.9 }\n",
    )
    .unwrap();
    let diverge = onflow(
        &["train", "--config", "sgd.toml", "--dataset", "src/dataset.csv", "--arch", "fcnn", "--n-s", "40",
          "--max-epochs", "5", "--out", "nan"],
        d,
    );
    assert_eq!(diverge.status.code(), Some(4), "{}", String::from_utf8_lossy(&diverge.stderr));
}

#[test]
fn config_values_are_overridden_by_flags() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    std::fs::write(d.join("run.toml"), "seed = 9\n[doe]\ncount = 12\n").unwrap();
    ok(&onflow(&["doe", "--config", "run.toml", "--count", "5", "--out", "doe"], d));
    let doe = std::fs::read_to_string(d.join("doe/doe.csv")).unwrap();
    assert_eq!(doe.lines().count(), 6);
    let cfg = std::fs::read_to_string(d.join("doe/config.toml")).unwrap();
    assert!(cfg.contains("seed = 9") && cfg.contains("count = 5"), "{cfg}");
}

#[test]
fn experiment_lists_bundled_specs() {
    let tmp = tempfile::tempdir().unwrap();
    let out = onflow(&["experiment", "--list"], tmp.path());
    ok(&out);
    assert!(String::from_utf8_lossy(&out.stdout).contains("distribution-shift-default"));
}
