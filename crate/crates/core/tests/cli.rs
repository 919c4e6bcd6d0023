use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn dforge(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dforge"))
        .current_dir(dir)
        .env_remove("DFORGE_DATA_DIR")
        .env("RUST_LOG", "error")
        .args(args)
        .output()
        .unwrap()
}

fn manifest(dir: &Path, command: &str) -> serde_json::Value {
    let run = fs::read_dir(dir.join("runs"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .find(|p| p.file_name().unwrap().to_str().unwrap().contains(command))
        .unwrap();
    serde_json::from_str(&fs::read_to_string(run.join("manifest.json")).unwrap()).unwrap()
}

fn small_data(dir: &Path) {
    let out = dforge(dir, &["gen-data", "--seed", "7", "--out", "data", "--pool-size", "120", "--validation-size", "60"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn gen_data_is_byte_identical_across_runs() {
    let t = tempfile::tempdir().unwrap();
    for out in ["a", "b"] {
        assert!(dforge(t.path(), &["gen-data", "--seed", "7", "--out", out, "--pool-size", "80"]).status.success());
    }
    for f in ["dataset.json", "train_pool.jsonl", "validation_matched.jsonl", "validation_mismatched.jsonl"] {
        assert_eq!(fs::read(t.path().join("a").join(f)).unwrap(), fs::read(t.path().join("b").join(f)).unwrap(), "{f}");
    }
}

#[test]
fn out_of_range_alpha_is_a_usage_error() {
    let t = tempfile::tempdir().unwrap();
    small_data(t.path());
    let out = dforge(t.path(), &["distill", "--data", "data", "--alpha", "1.5"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("alpha") && err.contains("[0, 1]"), "{err}");
}

#[test]
fn unknown_flags_and_subcommands_exit_2() {
    let t = tempfile::tempdir().unwrap();
    assert_eq!(dforge(t.path(), &["frobnicate"]).status.code(), Some(2));
    assert_eq!(dforge(t.path(), &["train", "--no-such-flag"]).status.code(), Some(2));
    assert_eq!(dforge(t.path(), &["train", "--method", "cd"]).status.code(), Some(2));
    let out = dforge(t.path(), &["train"]);
    assert_eq!(out.status.code(), Some(2), "missing data is a config error");
    assert!(String::from_utf8_lossy(&out.stderr).contains("DFORGE_DATA_DIR"));
}

#[test]
fn help_lists_flags_with_defaults() {
    let t = tempfile::tempdir().unwrap();
    let cases: &[(&str, &[&str])] = &[
        ("gen-data", &["--pool-size", "--seed"]),
        ("pretrain", &["--steps", "--lr"]),
        ("train", &["--method", "--adapter", "--lr", "--epochs"]),
        ("distill", &["--alpha", "--temperature", "--kl-support", "--kl-direction"]),
        ("eval", &["--method", "--k", "--seeds"]),
        ("sweep", &["--methods", "--support-counts", "--seeds", "--n-inferences"]),
        ("alpha-sweep", &["--alphas"]),
        ("hp-sweep", &["--lrs", "--epochs-grid"]),
        ("inspect-checkpoint", &[]),
    ];
    for (cmd, flags) in cases {
        let out = dforge(t.path(), &[cmd, "--help"]);
        assert!(out.status.success());
        let help = String::from_utf8_lossy(&out.stdout);
        for f in *flags {
            let line = help.lines().position(|l| l.trim_start().starts_with(f)).unwrap_or_else(|| panic!("{cmd} {f}"));
            let text: String = help.lines().skip(line).take(2).collect();
            assert!(text.contains("[default:"), "{cmd} {f}: {text}");
        }
    }
}

#[test]
fn flags_override_the_config_file() {
    let t = tempfile::tempdir().unwrap();
    fs::write(t.path().join("g.json"), r#"{"synthetic": {"pool_size": 50, "validation_size": 30}}"#).unwrap();
    let out = dforge(t.path(), &["gen-data", "--config", "g.json", "--pool-size", "60", "--out", "d", "--seed", "3"]);
    assert!(out.status.success());
    let m = manifest(t.path(), "gen-data");
    assert_eq!(m["config"]["synthetic"]["pool_size"], 60);
    assert_eq!(m["config"]["synthetic"]["validation_size"], 30);
    assert_eq!(m["config"]["synthetic"]["seed"], 3);
    assert_eq!(m["status"], "ok");
    assert!(m["finished_at"].is_string());
}

#[test]
fn unknown_config_keys_rejected() {
    let t = tempfile::tempdir().unwrap();
    fs::write(t.path().join("g.json"), r#"{"pool": 5}"#).unwrap();
    assert_eq!(dforge(t.path(), &["gen-data", "--config", "g.json"]).status.code(), Some(2));
}

#[test]
fn sweep_writes_csv_at_configured_path() {
    let t = tempfile::tempdir().unwrap();
    small_data(t.path());
    fs::write(
        t.path().join("bench.json"),
        r#"{"methods": ["baseline", "icl", "pbft_bitfit"], "support_counts": [1, 2], "seeds": [0, 1, 2],
            "n_inferences": 8, "output": "results/bench.csv", "timing": "disabled",
            "teacher": {"preset": "student-xs"},
            "train": {"learning_rate": 1e-4, "epochs": 1, "train_set_size": 2}}"#,
    )
    .unwrap();
    let out = dforge(t.path(), &["sweep", "--config", "bench.json", "--data", "data", "--jobs", "2"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(t.path().join("results/bench.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 3 * 2 * 3);
    assert!(t.path().join("results/bench.summary.json").exists());
    assert_eq!(manifest(t.path(), "sweep")["config"]["jobs"], 2);
}

#[test]
fn train_eval_and_inspect_round_trip() {
    let t = tempfile::tempdir().unwrap();
    small_data(t.path());
    let out = dforge(
        t.path(),
        &["train", "--data", "data", "--k", "1", "--epochs", "2", "--train-set-size", "2", "--lr", "1e-4",
          "--adapter", "bitfit", "--n-inferences", "5", "--out", "tr"],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(t.path().join("tr/train_log.jsonl").exists());
    let out = dforge(t.path(), &["inspect-checkpoint", "tr/model.dfck"]);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["config"]["d_model"], 64);
    let out = dforge(
        t.path(),
        &["eval", "--method", "baseline", "--data", "data", "--model", "tr/model.dfck", "--n-inferences", "5",
          "--seeds", "1,2", "--out", "e.json"],
    );
    assert!(out.status.success());
    let e: serde_json::Value = serde_json::from_str(&fs::read_to_string(t.path().join("e.json")).unwrap()).unwrap();
    assert_eq!(e["k"], 0);
    assert_eq!(e["matched"]["per_seed"].as_array().unwrap().len(), 2);
}
