//! End-to-end pipeline through the `samoe` binary: gen-data -> preprocess ->
//! train -> adapt -> eval -> predict, plus exit-code behavior.

use std::path::Path;
use std::process::Command;

fn samoe() -> Command {
    Command::new(env!("CARGO_BIN_EXE_samoe"))
}

fn read(path: &Path) -> Vec<u8> {
    std::fs::read(path).unwrap_or_else(|e| panic!("read {}: {e}", path.display()))
}

fn write_tiny_config(path: &Path) {
    let config = serde_json::json!({
        "model": {
            "n_e": 3,
            "d": 16,
            "n": 64,
            "layers_fe": 1,
            "layers_expert": 1,
            "layers_mgr": 1,
            "layers_sup": 1,
            "heads": 2,
            "dropout": 0.0,
            "ffn_mult": 2
        },
        "train": {
            "lambda": 0.1,
            "beta": 0.1,
            "batch_size": 4,
            "base_lr": 1e-3,
            "warmup_steps": 1,
            "steps": 4,
            "steps_stage2": 2,
            "eval_interval": 2,
            "seed": 0
        },
        "preprocess": { "max_len": 64, "min_freq": 1 },
        "gen": {
            "seed": 3,
            "n_train": 40,
            "n_dev": 12,
            "n_test": 8,
            "rows_min": 4,
            "rows_max": 4,
            "cols_min": 3,
            "cols_max": 3,
            "value_max": 20,
            "max_retries": 64
        }
    });
    std::fs::write(path, serde_json::to_string_pretty(&config).unwrap()).unwrap();
}

#[test]
fn gen_data_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("config.json");
    write_tiny_config(&config);
    for out in ["a", "b"] {
        let status = samoe()
            .args(["gen-data", "--seed", "7", "--config"])
            .arg(&config)
            .arg("--out")
            .arg(dir.path().join(out))
            .status()
            .unwrap();
        assert!(status.success());
    }
    for file in ["train.jsonl", "dev.jsonl", "test.jsonl"] {
        assert_eq!(
            read(&dir.path().join("a").join(file)),
            read(&dir.path().join("b").join(file)),
            "{file} differs between identical runs"
        );
    }
    // Every referenced table exists and matches.
    let a_tables: Vec<_> = std::fs::read_dir(dir.path().join("a/tables"))
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    assert!(!a_tables.is_empty());
    for name in a_tables {
        assert_eq!(
            read(&dir.path().join("a/tables").join(&name)),
            read(&dir.path().join("b/tables").join(&name))
        );
    }
}

#[test]
fn adapt_without_stage1_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let status = samoe()
        .args(["adapt", "--stage1"])
        .arg(dir.path().join("missing"))
        .arg("--data")
        .arg(dir.path().join("nocache"))
        .arg("--out")
        .arg(dir.path().join("out"))
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
}

#[test]
fn unknown_flag_exits_2() {
    let status = samoe()
        .args(["train", "--no-such-flag"])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
}

#[test]
fn full_pipeline_smoke() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("config.json");
    write_tiny_config(&config);
    let dataset = dir.path().join("dataset");
    let cache = dir.path().join("cache");
    let run1 = dir.path().join("stage1");
    let run2 = dir.path().join("stage2");

    let ok = |mut cmd: Command| {
        let output = cmd.output().unwrap();
        assert!(
            output.status.success(),
            "command failed: {}\n{}",
            String::from_utf8_lossy(&output.stdout),
            String::from_utf8_lossy(&output.stderr)
        );
    };

    let mut cmd = samoe();
    cmd.args(["gen-data", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&dataset);
    ok(cmd);
    assert!(dataset.join("run.json").exists());
    assert!(dataset.join("train.specs.jsonl").exists());

    let mut cmd = samoe();
    cmd.args(["preprocess", "--config"])
        .arg(&config)
        .arg("--data")
        .arg(&dataset)
        .arg("--out")
        .arg(&cache);
    ok(cmd);
    assert!(cache.join("cache.json").exists());
    assert!(cache.join("train.ids.bin").exists());

    let mut cmd = samoe();
    cmd.args(["train", "--config"])
        .arg(&config)
        .arg("--data")
        .arg(&cache)
        .arg("--out")
        .arg(&run1);
    ok(cmd);
    let ckpt1 = run1.join("best");
    assert!(ckpt1.join("manifest.json").exists());
    assert!(run1.join("log.jsonl").exists());
    assert!(run1.join("run.json").exists());

    let mut cmd = samoe();
    cmd.args(["adapt", "--config"])
        .arg(&config)
        .arg("--stage1")
        .arg(&run1)
        .arg("--data")
        .arg(&cache)
        .arg("--out")
        .arg(&run2);
    ok(cmd);
    let ckpt2 = run2.join("best");
    assert!(ckpt2.join("manifest.json").exists());
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(run2.join("run.json")).unwrap()).unwrap();
    assert_eq!(manifest["stage2_done"], serde_json::json!(true));

    // eval must not modify the checkpoint.
    let weights_before = read(&ckpt2.join("weights.bin"));
    let report_path = dir.path().join("report.json");
    let mut cmd = samoe();
    cmd.args(["eval", "--checkpoint"])
        .arg(&run2)
        .arg("--data")
        .arg(&cache)
        .args(["--split", "dev", "--report-path"])
        .arg(&report_path);
    ok(cmd);
    assert_eq!(weights_before, read(&ckpt2.join("weights.bin")));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&report_path).unwrap()).unwrap();
    assert!(report["overall_accuracy"].is_number());
    assert!(report_path.with_extension("txt").exists());

    let predictions = dir.path().join("preds.jsonl");
    let mut cmd = samoe();
    cmd.args(["predict", "--checkpoint"])
        .arg(&run2)
        .arg("--data")
        .arg(&cache)
        .args(["--split", "test", "--out"])
        .arg(&predictions);
    ok(cmd);
    let lines: Vec<String> = std::fs::read_to_string(&predictions)
        .unwrap()
        .lines()
        .map(String::from)
        .collect();
    assert_eq!(lines.len(), 8);
    let first: serde_json::Value = serde_json::from_str(&lines[0]).unwrap();
    assert!(first["attention"].as_array().unwrap().len() == 3);
    assert!(first["expert_p"].as_array().unwrap().len() == 3);
}

#[test]
fn stage2_config_hash_mismatch_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("config.json");
    write_tiny_config(&config);
    let dataset = dir.path().join("dataset");
    let cache = dir.path().join("cache");
    let run1 = dir.path().join("stage1");

    let run = |args: &mut Command| args.status().unwrap();
    let mut c = samoe();
    c.args(["gen-data", "--config"]).arg(&config).arg("--out").arg(&dataset);
    assert!(run(&mut c).success());
    let mut c = samoe();
    c.args(["preprocess", "--config"]).arg(&config).arg("--data").arg(&dataset).arg("--out").arg(&cache);
    assert!(run(&mut c).success());
    let mut c = samoe();
    c.args(["train", "--config"]).arg(&config).arg("--data").arg(&cache).arg("--out").arg(&run1);
    assert!(run(&mut c).success());

    // A different model config must be rejected by adapt.
    let mut bad: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&config).unwrap()).unwrap();
    bad["model"]["d"] = serde_json::json!(32);
    let bad_config = dir.path().join("bad.json");
    std::fs::write(&bad_config, serde_json::to_string(&bad).unwrap()).unwrap();
    let mut c = samoe();
    c.args(["adapt", "--config"])
        .arg(&bad_config)
        .arg("--stage1")
        .arg(&run1)
        .arg("--data")
        .arg(&cache)
        .arg("--out")
        .arg(dir.path().join("stage2"));
    assert_eq!(run(&mut c).code(), Some(2));
}
