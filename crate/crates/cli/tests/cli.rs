//! End-to-end tests of the `ams` binary and its exit-code contract.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn ams() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ams"))
}

fn write_config(dir: &Path, name: &str, extra: &str) -> std::path::PathBuf {
    let base = "\
suite.preset = mixed
suite.K = 4
suite.w = 8
suite.pool_size = 32
sampler.kind = uniform
sampler.selection = stochastic
model.hidden = 6
policy.attention_dim = 4
policy.lstm_input = 6
policy.lstm_hidden = 8
run.iterations = 12
eval.every = 6
eval.n_tasks = 3
eval.shots = 4
eval.steps = 1
";
    let path = dir.join(name);
    fs::write(&path, format!("{base}{extra}")).unwrap();
    path
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

#[test]
fn gradcheck_is_deterministic_and_reports_components() {
    let run = || {
        let out = ams()
            .args(["gradcheck", "--seed", "7", "--rounds", "3"])
            .output()
            .unwrap();
        assert!(out.status.success());
        stdout(&out)
    };
    let a = run();
    let b = run();
    assert_eq!(a, b, "gradcheck report must be identical across runs");
    for component in ["linear", "lstm-cell", "attention", "policy-surrogate-prob", "maml-outer"] {
        assert!(a.contains(component), "missing {component} in report:\n{a}");
    }
}

#[test]
fn missing_config_exits_1_with_message() {
    let out = ams()
        .args(["train", "--config", "does-not-exist.cfg"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("does-not-exist.cfg"), "{err}");
}

#[test]
fn unknown_subcommand_exits_1() {
    let out = ams().arg("explode").output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn unknown_config_key_exits_1_naming_the_key() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "bad.cfg", "meta.momentum = 0.9\n");
    let out = ams()
        .args(["train", "--config", cfg.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("meta.momentum"));
}

#[test]
fn train_writes_run_artifacts_and_resolved_config_round_trips() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "run.cfg", "");
    let out_dir = tmp.path().join("out");
    let out = ams()
        .args([
            "train",
            "--config",
            cfg.to_str().unwrap(),
            "--seed",
            "3",
            "--out",
            out_dir.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let run_dir = out_dir.join("uniform-s3");
    for f in ["config.resolved.cfg", "metrics.csv", "summary.json", "theta.ckpt.json"] {
        assert!(run_dir.join(f).exists(), "{f} missing");
    }

    // The echoed config reparses to the same resolved form.
    let echoed = fs::read_to_string(run_dir.join("config.resolved.cfg")).unwrap();
    let reparsed = ams_core::harness::ExperimentConfig::from_text(&echoed).unwrap();
    assert_eq!(reparsed.to_text(), echoed);

    // The run replays bit-exactly from the resolved config.
    let out2_dir = tmp.path().join("out2");
    let out2 = ams()
        .args([
            "train",
            "--config",
            run_dir.join("config.resolved.cfg").to_str().unwrap(),
            "--seed",
            "3",
            "--out",
            out2_dir.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(out2.status.success());
    assert_eq!(
        fs::read(run_dir.join("metrics.csv")).unwrap(),
        fs::read(out2_dir.join("uniform-s3").join("metrics.csv")).unwrap()
    );
}

#[test]
fn overrides_take_precedence_and_reject_garbage() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "run.cfg", "meta.M = 2\n");
    let out_dir = tmp.path().join("out");
    let out = ams()
        .args([
            "train",
            "--config",
            cfg.to_str().unwrap(),
            "--set",
            "meta.M=3",
            "--out",
            out_dir.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(out.status.success());
    let echoed = fs::read_to_string(out_dir.join("uniform-s0").join("config.resolved.cfg")).unwrap();
    assert!(echoed.contains("meta.M = 3"));

    let bad = ams()
        .args(["train", "--config", cfg.to_str().unwrap(), "--set", "nonsense"])
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(1));
}

#[test]
fn compare_produces_run_matrix_and_summary() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "run.cfg", "");
    let out_dir = tmp.path().join("cmp");
    let out = ams()
        .args([
            "compare",
            "--config",
            cfg.to_str().unwrap(),
            "--samplers",
            "uniform,ams",
            "--seeds",
            "0..2",
            "--out",
            out_dir.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let mut run_dirs = 0;
    for sampler in ["uniform", "ams"] {
        for seed in 0..3 {
            let d = out_dir.join(format!("{sampler}-s{seed}"));
            assert!(d.join("metrics.csv").exists(), "{d:?}");
            run_dirs += 1;
        }
    }
    assert_eq!(run_dirs, 6);
    for f in [
        "comparison.json",
        "comparison.csv",
        "loss_vs_iteration.csv",
        "sample_counts.csv",
    ] {
        assert!(out_dir.join(f).exists(), "{f} missing");
    }
}

#[test]
fn eval_scores_a_trained_checkpoint() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "run.cfg", "");
    let out_dir = tmp.path().join("out");
    assert!(ams()
        .args([
            "train",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out_dir.to_str().unwrap(),
        ])
        .output()
        .unwrap()
        .status
        .success());

    let ckpt = out_dir.join("uniform-s0").join("theta.ckpt.json");
    let out = ams()
        .args([
            "eval",
            "--config",
            cfg.to_str().unwrap(),
            "--theta",
            ckpt.to_str().unwrap(),
            "--seed",
            "5",
        ])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    assert!(text.contains("target t0"), "{text}");
    assert!(text.contains("target t1"), "{text}");
}

#[test]
fn suite_lists_and_serializes_presets() {
    let out = ams().args(["suite", "--list"]).output().unwrap();
    assert!(out.status.success());
    let text = stdout(&out);
    for preset in ["balanced", "quantity-imbalance", "difficulty-imbalance", "mixed"] {
        assert!(text.contains(preset), "{text}");
    }

    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("suite.json");
    let out = ams()
        .args([
            "suite",
            "--preset",
            "mixed",
            "--domains",
            "4",
            "-w",
            "8",
            "--seed",
            "2",
            "--out",
            path.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = fs::read_to_string(&path).unwrap();
    let suite = ams_core::taskgen::DomainSuite::from_json(&text).unwrap();
    assert_eq!(suite.num_sources(), 4);
}

#[test]
fn env_var_provides_default_output_root() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "run.cfg", "");
    let root = tmp.path().join("env-root");
    let out = ams()
        .env("AMS_OUT_DIR", root.to_str().unwrap())
        .args(["train", "--config", cfg.to_str().unwrap()])
        .current_dir(tmp.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(root.join("uniform-s0").join("metrics.csv").exists());
}
