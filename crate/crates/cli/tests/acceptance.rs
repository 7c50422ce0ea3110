//! CLI acceptance: the determinism sweep (every command rerun with the
//! same config and seed produces byte-identical data outputs, excluding
//! the run-metadata file) plus the documented exit-code contract.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn foglab() -> Command {
    Command::new(env!("CARGO_BIN_EXE_foglab"))
}

fn run_ok(args: &[&str]) -> Output {
    let output = foglab().args(args).output().expect("failed to spawn foglab");
    assert!(
        output.status.success(),
        "foglab {args:?} failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&output.stdout),
        String::from_utf8_lossy(&output.stderr)
    );
    output
}

fn run_expect_code(args: &[&str], code: i32) -> Output {
    let output = foglab().args(args).output().expect("failed to spawn foglab");
    assert_eq!(
        output.status.code(),
        Some(code),
        "foglab {args:?}\nstderr: {}",
        String::from_utf8_lossy(&output.stderr)
    );
    output
}

const SMALL_CONFIG: &str = r#"
schema_version = 1
seed = 7

[data]
source = "synthetic"

[data.synthetic]
users = 2
samples_per_user = 400
positive_fraction = 0.5
shift = 3.0
heterogeneity = 0.3

[preprocess]
window_len = 8
stride = 8

[models.random_forest]
n_estimators = 10
max_depth = 3

[models.stack]
cv_folds = 5

[nested_cv]
outer_k = 4
inner_k = 2
grid_max_depth = [2, 4]
grid_n_estimators = [5]

[explain]
background_size = 25
samples = 8

[federated]
rounds = 2
min_samples_per_user = 10
filters = 4
units = 4
max_epochs = 2
patience = 0
"#;

/// Recursively lists data files (relative paths), skipping run metadata.
fn data_files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
        for entry in fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(root, &path, out);
            } else {
                let rel = path.strip_prefix(root).unwrap().to_str().unwrap().to_string();
                if rel == "run_meta.kv" || rel == ".lock" {
                    continue;
                }
                out.insert(rel, fs::read(&path).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(dir, dir, &mut out);
    out
}

fn assert_identical_outputs(a: &Path, b: &Path, context: &str) {
    let fa = data_files(a);
    let fb = data_files(b);
    let names_a: Vec<&String> = fa.keys().collect();
    let names_b: Vec<&String> = fb.keys().collect();
    assert_eq!(names_a, names_b, "{context}: file sets differ");
    for (name, bytes) in &fa {
        assert_eq!(
            bytes, &fb[name],
            "{context}: {name} differs between reruns"
        );
    }
    assert!(!fa.is_empty(), "{context}: no data files produced");
}

#[test]
fn criterion_10_determinism_sweep() {
    let root = tempfile::tempdir().unwrap();
    let config_path = root.path().join("exp.toml");
    fs::write(&config_path, SMALL_CONFIG).unwrap();
    let config = config_path.to_str().unwrap();
    let dir = |name: &str| root.path().join(name).to_str().unwrap().to_string();

    // synth twice
    run_ok(&["synth", "--config", config, "--out-dir", &dir("synth_a")]);
    run_ok(&["synth", "--config", config, "--out-dir", &dir("synth_b")]);
    assert_identical_outputs(
        &root.path().join("synth_a"),
        &root.path().join("synth_b"),
        "synth",
    );

    // ingest twice, reading the synth output
    let ingest_config = root.path().join("ingest.toml");
    fs::write(
        &ingest_config,
        format!(
            "schema_version = 1\nseed = 7\n[data]\nsource = \"csv\"\npaths = [\"{}\"]\n\
             [data.columns]\nuser = \"user_id\"\n",
            root.path().join("synth_a/dataset.csv").display()
        ),
    )
    .unwrap();
    let ingest_config = ingest_config.to_str().unwrap().to_string();
    run_ok(&["ingest", "--config", &ingest_config, "--out-dir", &dir("ingest_a")]);
    run_ok(&["ingest", "--config", &ingest_config, "--out-dir", &dir("ingest_b")]);
    assert_identical_outputs(
        &root.path().join("ingest_a"),
        &root.path().join("ingest_b"),
        "ingest",
    );

    // train-central twice
    run_ok(&["train-central", "--config", config, "--out-dir", &dir("central_a")]);
    run_ok(&["train-central", "--config", config, "--out-dir", &dir("central_b")]);
    assert_identical_outputs(
        &root.path().join("central_a"),
        &root.path().join("central_b"),
        "train-central",
    );

    // nested-cv twice
    run_ok(&["nested-cv", "--config", config, "--out-dir", &dir("ncv_a")]);
    run_ok(&["nested-cv", "--config", config, "--out-dir", &dir("ncv_b")]);
    assert_identical_outputs(
        &root.path().join("ncv_a"),
        &root.path().join("ncv_b"),
        "nested-cv",
    );

    // explain twice, on the stack model from train-central
    let model = root.path().join("central_a/stack_model.txt");
    let model = model.to_str().unwrap();
    run_ok(&[
        "explain", "--config", config, "--out-dir", &dir("explain_a"), "--model", model,
    ]);
    run_ok(&[
        "explain", "--config", config, "--out-dir", &dir("explain_b"), "--model", model,
    ]);
    assert_identical_outputs(
        &root.path().join("explain_a"),
        &root.path().join("explain_b"),
        "explain",
    );

    // federate twice
    run_ok(&["federate", "--config", config, "--out-dir", &dir("fed_a")]);
    run_ok(&["federate", "--config", config, "--out-dir", &dir("fed_b")]);
    assert_identical_outputs(
        &root.path().join("fed_a"),
        &root.path().join("fed_b"),
        "federate",
    );

    // a different seed must change at least the dataset
    run_ok(&["synth", "--config", config, "--seed", "8", "--out-dir", &dir("synth_c")]);
    let a = fs::read(root.path().join("synth_a/dataset.csv")).unwrap();
    let c = fs::read(root.path().join("synth_c/dataset.csv")).unwrap();
    assert_ne!(a, c, "seed override must change the synthetic dataset");

    println!("acceptance criterion 10: PASS - byte-identical reruns for all six commands");
}

#[test]
fn synth_fixture_counts_match_config() {
    let root = tempfile::tempdir().unwrap();
    let config_path = root.path().join("exp.toml");
    fs::write(&config_path, SMALL_CONFIG).unwrap();
    run_ok(&[
        "synth",
        "--config",
        config_path.to_str().unwrap(),
        "--out-dir",
        root.path().join("out").to_str().unwrap(),
    ]);
    let csv = fs::read_to_string(root.path().join("out/dataset.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 2 * 400, "header plus users*samples rows");
    let report = fs::read_to_string(root.path().join("out/synth_report.kv")).unwrap();
    assert!(report.contains("user_1_samples = 400"));
    assert!(report.contains("user_2_samples = 400"));
}

#[test]
fn train_central_lists_one_row_per_model() {
    let root = tempfile::tempdir().unwrap();
    let config_path = root.path().join("exp.toml");
    fs::write(&config_path, SMALL_CONFIG).unwrap();
    run_ok(&[
        "train-central",
        "--config",
        config_path.to_str().unwrap(),
        "--out-dir",
        root.path().join("out").to_str().unwrap(),
    ]);
    let table = fs::read_to_string(root.path().join("out/comparison.csv")).unwrap();
    let rows: Vec<&str> = table.lines().collect();
    assert_eq!(rows.len(), 5, "header + 4 model rows:\n{table}");
    for name in ["random_forest", "extra_trees", "gbm", "stack"] {
        assert!(table.contains(name), "missing {name} row");
        assert!(root.path().join(format!("out/{name}_model.txt")).exists());
        assert!(root.path().join(format!("out/{name}_confusion.csv")).exists());
    }
}

#[test]
fn nested_cv_reports_folds_mean_and_std() {
    let root = tempfile::tempdir().unwrap();
    let config_path = root.path().join("exp.toml");
    fs::write(&config_path, SMALL_CONFIG).unwrap();
    run_ok(&[
        "nested-cv",
        "--config",
        config_path.to_str().unwrap(),
        "--out-dir",
        root.path().join("out").to_str().unwrap(),
    ]);
    let csv = fs::read_to_string(root.path().join("out/nested_cv.csv")).unwrap();
    // header + 4 outer folds + mean + std
    assert_eq!(csv.lines().count(), 7, "{csv}");
    assert!(csv.contains("mean,"));
    assert!(csv.contains("std,"));
}

#[test]
fn federate_writes_logs_summary_checkpoints_and_trend() {
    let root = tempfile::tempdir().unwrap();
    let config_path = root.path().join("exp.toml");
    fs::write(&config_path, SMALL_CONFIG).unwrap();
    let out = root.path().join("out");
    run_ok(&[
        "federate",
        "--config",
        config_path.to_str().unwrap(),
        "--out-dir",
        out.to_str().unwrap(),
    ]);
    let trend = fs::read_to_string(out.join("round_global.csv")).unwrap();
    assert_eq!(trend.lines().count(), 3, "header + 2 rounds:\n{trend}");
    let clients = fs::read_to_string(out.join("round_clients.csv")).unwrap();
    assert_eq!(clients.lines().count(), 5, "header + 2 rounds x 2 users");
    assert!(out.join("user_summary.txt").exists());
    assert!(out.join("user_summary.kv").exists());
    assert!(out.join("checkpoints/round_01.fogw").exists());
    assert!(out.join("checkpoints/round_02.fogw").exists());
    assert!(out.join("global_model.fogw").exists());
    // durations live in run metadata only
    let meta = fs::read_to_string(out.join("run_meta.kv")).unwrap();
    assert!(meta.contains("round_1_duration_s"));
}

#[test]
fn missing_column_exits_2_and_names_it() {
    let root = tempfile::tempdir().unwrap();
    // make a valid dataset first
    let config_path = root.path().join("exp.toml");
    fs::write(&config_path, SMALL_CONFIG).unwrap();
    run_ok(&[
        "synth",
        "--config",
        config_path.to_str().unwrap(),
        "--out-dir",
        root.path().join("synth").to_str().unwrap(),
    ]);
    let bad = root.path().join("bad.toml");
    fs::write(
        &bad,
        format!(
            "schema_version = 1\n[data]\nsource = \"csv\"\npaths = [\"{}\"]\n\
             [data.columns]\nlabel = \"Missing Flag Column\"\n",
            root.path().join("synth/dataset.csv").display()
        ),
    )
    .unwrap();
    let output = run_expect_code(
        &[
            "ingest",
            "--config",
            bad.to_str().unwrap(),
            "--out-dir",
            root.path().join("bad_out").to_str().unwrap(),
        ],
        2,
    );
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(
        stderr.contains("Missing Flag Column"),
        "stderr must name the column: {stderr}"
    );
}

#[test]
fn unknown_config_key_is_rejected() {
    let root = tempfile::tempdir().unwrap();
    let config_path = root.path().join("exp.toml");
    fs::write(
        &config_path,
        "schema_version = 1\n[preprocess]\nwindow_length_typo = 5\n",
    )
    .unwrap();
    run_expect_code(
        &[
            "synth",
            "--config",
            config_path.to_str().unwrap(),
            "--out-dir",
            root.path().join("out").to_str().unwrap(),
        ],
        2,
    );
}

#[test]
fn federate_min_samples_gate_exits_2_with_diagnostic() {
    let root = tempfile::tempdir().unwrap();
    let config_path = root.path().join("exp.toml");
    fs::write(
        &config_path,
        SMALL_CONFIG.replace("min_samples_per_user = 10", "min_samples_per_user = 100000"),
    )
    .unwrap();
    let output = run_expect_code(
        &[
            "federate",
            "--config",
            config_path.to_str().unwrap(),
            "--out-dir",
            root.path().join("out").to_str().unwrap(),
        ],
        2,
    );
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(
        stderr.contains("below the minimum") || stderr.contains("no usable clients"),
        "needs a diagnostic: {stderr}"
    );
}

#[test]
fn locked_output_directory_is_refused() {
    let root = tempfile::tempdir().unwrap();
    let config_path = root.path().join("exp.toml");
    fs::write(&config_path, SMALL_CONFIG).unwrap();
    let out = root.path().join("out");
    fs::create_dir_all(&out).unwrap();
    fs::write(out.join(".lock"), b"").unwrap();
    let output = run_expect_code(
        &[
            "synth",
            "--config",
            config_path.to_str().unwrap(),
            "--out-dir",
            out.to_str().unwrap(),
        ],
        2,
    );
    assert!(String::from_utf8_lossy(&output.stderr).contains("locked"));
}
