//! End-to-end checks of the `slicelab` binary: file outputs, seeding
//! contracts and exit codes.

use std::path::Path;
use std::process::Command;

fn slicelab() -> Command {
    Command::new(env!("CARGO_BIN_EXE_slicelab"))
}

fn write_desk_config(dir: &Path) -> std::path::PathBuf {
    // Tiny but complete experiment: full flow population, short horizon.
    let config = serde_json::json!({
        "network": {
            "bandwidth_hz": 20e6,
            "num_flows": 20,
            "num_windows": 10,
            "dual_period": 2,
            "window_duration": 0.05,
            "slot_duration": 0.0005,
            "packet_size_bits": 10000.0,
            "queue_capacity_packets": 25,
            "noise_power": 1.0,
            "qos": { "r_min": 1.0, "ell_max": 10.0 },
            "rng_seed": 5
        },
        "train": {
            "num_epochs": 1,
            "batch_size": 2,
            "learning_rate": 1e-4,
            "eta_lambda_pd": 0.1,
            "eta_lambda": 1.0,
            "lambda_max_init": [1.0, 1.0],
            "fd_epsilon": 0.01,
            "adam_beta1": 0.9,
            "adam_beta2": 0.999,
            "adam_epsilon": 1e-8,
            "seed": 5
        },
        "num_train": 2,
        "num_val": 1
    });
    let path = dir.join("config.json");
    std::fs::write(&path, serde_json::to_string_pretty(&config).unwrap()).unwrap();
    path
}

#[test]
fn eval_uniform_needs_no_checkpoint_and_writes_expected_rows() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_desk_config(dir.path());
    let out = dir.path().join("eval");
    let status = slicelab()
        .args(["eval", "--method", "uniform", "--num-test", "3"])
        .arg("--config")
        .arg(&config)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let jsonl = std::fs::read_to_string(out.join("trajectories.jsonl")).unwrap();
    // num_test x T windows
    assert_eq!(jsonl.lines().count(), 3 * 10);
    let first: serde_json::Value = serde_json::from_str(jsonl.lines().next().unwrap()).unwrap();
    for key in ["t", "p_h", "p_l", "p_b", "lambda_h", "lambda_l", "f_h", "f_l", "objective"] {
        assert!(first.get(key).is_some(), "missing {key}");
    }
    assert!(out.join("table.csv").exists());
    assert!(out.join("curves.csv").exists());
    assert!(out.join("summary.json").exists());
}

#[test]
fn train_with_zero_epochs_writes_the_initialization_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_desk_config(dir.path());
    let out = dir.path().join("run");
    let status = slicelab()
        .args(["train", "--algo", "sapd", "--epochs", "0"])
        .arg("--config")
        .arg(&config)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let params = slicelab::policy::load_checkpoint(out.join("checkpoint.json")).unwrap();
    let fresh = slicelab::policy::init_params(&mut slicelab::seeds::rng(
        5,
        slicelab::seeds::stream::INIT,
        0,
    ));
    assert_eq!(params, fresh);
    assert!(out.join("epochs.csv").exists());

    // the checkpoint drives the state-augmented eval path
    let eval_out = dir.path().join("sapd-eval");
    let status = slicelab()
        .args(["eval", "--method", "sapd", "--num-test", "2"])
        .arg("--checkpoint")
        .arg(out.join("checkpoint.json"))
        .arg("--config")
        .arg(&config)
        .arg("--out")
        .arg(&eval_out)
        .status()
        .unwrap();
    assert!(status.success());
    let jsonl = std::fs::read_to_string(eval_out.join("trajectories.jsonl")).unwrap();
    assert_eq!(jsonl.lines().count(), 2 * 10);
}

#[test]
fn same_seed_reproduces_training_byte_for_byte() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_desk_config(dir.path());
    let run = |name: &str| {
        let out = dir.path().join(name);
        let status = slicelab()
            .args(["train", "--algo", "sapd", "--seed", "11"])
            .arg("--config")
            .arg(&config)
            .arg("--out")
            .arg(&out)
            .status()
            .unwrap();
        assert!(status.success());
        (
            std::fs::read(out.join("epochs.csv")).unwrap(),
            std::fs::read(out.join("checkpoint.json")).unwrap(),
        )
    };
    let (epochs_a, ckpt_a) = run("a");
    let (epochs_b, ckpt_b) = run("b");
    assert_eq!(ckpt_a, ckpt_b);
    // epochs.csv is byte-identical apart from the wall-clock column
    let strip_timing = |bytes: &[u8]| -> Vec<String> {
        String::from_utf8(bytes.to_vec())
            .unwrap()
            .lines()
            .map(|line| line.rsplit_once(',').map(|(rest, _)| rest.to_string()).unwrap())
            .collect()
    };
    assert_eq!(strip_timing(&epochs_a), strip_timing(&epochs_b));
}

#[test]
fn trained_pd_checkpoint_supports_eval_and_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_desk_config(dir.path());
    let train_out = dir.path().join("pd");
    assert!(slicelab()
        .args(["train", "--algo", "pd"])
        .arg("--config")
        .arg(&config)
        .arg("--out")
        .arg(&train_out)
        .status()
        .unwrap()
        .success());
    assert!(train_out.join("duals.csv").exists());
    assert!(train_out.join("final_lambda.json").exists());

    let eval_out = dir.path().join("pd-eval");
    assert!(slicelab()
        .args(["eval", "--method", "pd", "--num-test", "2"])
        .arg("--checkpoint")
        .arg(train_out.join("checkpoint.json"))
        .arg("--config")
        .arg(&config)
        .arg("--out")
        .arg(&eval_out)
        .status()
        .unwrap()
        .success());

    let sweep_out = dir.path().join("sweep");
    assert!(slicelab()
        .args([
            "sweep",
            "--methods",
            "pd,uniform,proportional",
            "--grid",
            "0.9:10,1.0:10",
            "--num-test",
            "2",
        ])
        .arg("--checkpoint-pd")
        .arg(train_out.join("checkpoint.json"))
        .arg("--config")
        .arg(&config)
        .arg("--out")
        .arg(&sweep_out)
        .status()
        .unwrap()
        .success());
    let table = std::fs::read_to_string(sweep_out.join("table.csv")).unwrap();
    // header + 3 methods x 2 grid points
    assert_eq!(table.lines().count(), 1 + 3 * 2);
    // baseline rows depend only on the measuring thresholds
    assert!(table.lines().any(|l| l.starts_with("uniform,0.9,10")));
    assert!(table.lines().any(|l| l.starts_with("uniform,1,10")));

    // degenerate single-point grid -> single row per method
    let single_out = dir.path().join("sweep-single");
    assert!(slicelab()
        .args(["sweep", "--methods", "uniform", "--grid", "1.0:10", "--num-test", "2"])
        .arg("--config")
        .arg(&config)
        .arg("--out")
        .arg(&single_out)
        .status()
        .unwrap()
        .success());
    let single = std::fs::read_to_string(single_out.join("table.csv")).unwrap();
    assert_eq!(single.lines().count(), 2);
}

#[test]
fn config_errors_exit_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{ not json").unwrap();
    let status = slicelab()
        .args(["eval", "--method", "uniform", "--num-test", "1"])
        .arg("--config")
        .arg(&bad)
        .arg("--out")
        .arg(dir.path().join("x"))
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));

    // malformed grid
    let config = write_desk_config(dir.path());
    let status = slicelab()
        .args([
            "sweep",
            "--methods",
            "uniform",
            "--grid",
            "oops",
            "--num-test",
            "1",
        ])
        .arg("--config")
        .arg(&config)
        .arg("--out")
        .arg(dir.path().join("y"))
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
}

#[test]
fn missing_checkpoint_exits_with_code_three() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_desk_config(dir.path());
    let status = slicelab()
        .args(["eval", "--method", "sapd", "--num-test", "1"])
        .arg("--checkpoint")
        .arg(dir.path().join("nope.json"))
        .arg("--config")
        .arg(&config)
        .arg("--out")
        .arg(dir.path().join("z"))
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(3));

    // sapd without --checkpoint at all
    let status = slicelab()
        .args(["eval", "--method", "sapd", "--num-test", "1"])
        .arg("--config")
        .arg(&config)
        .arg("--out")
        .arg(dir.path().join("w"))
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(3));
}

#[test]
fn unknown_method_in_sweep_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_desk_config(dir.path());
    let status = slicelab()
        .args(["sweep", "--methods", "magic", "--num-test", "1"])
        .arg("--config")
        .arg(&config)
        .arg("--out")
        .arg(dir.path().join("m"))
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
}
