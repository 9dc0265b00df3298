use std::path::Path;
use std::process::{Command, Output};

const TINY: &str = r#"
[run]
name = "tiny"
output_dir = "from-config"
seeds = [0]
episodes = 4

[env]
kind = "chain"
length = 3

[agent]
heatup = 10
minibatch = 4
eval_interval = 2
eval_episodes = 1

[encoder]
dense_layers = [6]

[reduction]
key_dim = 3
"#;

fn nec_rp(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nec-rp"))
        .args(args)
        .current_dir(dir)
        .env_remove("NEC_RP_OUTPUT_DIR")
        .output()
        .unwrap()
}

fn write(dir: &Path, name: &str, text: &str) {
    std::fs::write(dir.join(name), text).unwrap();
}

#[test]
fn train_then_evaluate() {
    let tmp = tempfile::tempdir().unwrap();
    write(tmp.path(), "tiny.toml", TINY);
    let out = nec_rp(
        tmp.path(),
        &["train", "--config", "tiny.toml", "--out", "base", "--seeds", "3,4"],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for seed in [3, 4] {
        assert!(tmp.path().join(format!("base/tiny/seed-{seed}/metrics.csv")).is_file());
    }
    assert!(!tmp.path().join("from-config").exists());
    let out = nec_rp(
        tmp.path(),
        &[
            "evaluate",
            "--config",
            "tiny.toml",
            "--out",
            "base",
            "--seeds",
            "3,4",
            "--episodes",
            "2",
        ],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(tmp.path().join("base/tiny/evaluation.json").is_file());
}

#[test]
fn output_dir_precedence() {
    let tmp = tempfile::tempdir().unwrap();
    write(tmp.path(), "tiny.toml", TINY);
    let out = Command::new(env!("CARGO_BIN_EXE_nec-rp"))
        .args(["train", "--config", "tiny.toml"])
        .current_dir(tmp.path())
        .env("NEC_RP_OUTPUT_DIR", "from-env")
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(tmp.path().join("from-env/tiny/summary.json").is_file());
    assert!(nec_rp(tmp.path(), &["train", "--config", "tiny.toml", "--steps", "20"])
        .status
        .success());
    assert!(tmp.path().join("from-config/tiny/summary.json").is_file());
}

#[test]
fn config_errors_exit_with_one() {
    let tmp = tempfile::tempdir().unwrap();
    write(
        tmp.path(),
        "bad.toml",
        &TINY.replace("key_dim = 3", "key_dim = 3\nkeydim = 4"),
    );
    let out = nec_rp(tmp.path(), &["train", "--config", "bad.toml"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("reduction.keydim"));

    write(tmp.path(), "zero.toml", &TINY.replace("key_dim = 3", "key_dim = 0"));
    assert_eq!(
        nec_rp(tmp.path(), &["train", "--config", "zero.toml"]).status.code(),
        Some(1)
    );
    assert_eq!(nec_rp(tmp.path(), &["train"]).status.code(), Some(1));
    assert_eq!(nec_rp(tmp.path(), &["frobnicate"]).status.code(), Some(1));
    write(tmp.path(), "tiny.toml", TINY);
    write(
        tmp.path(),
        "other.toml",
        &TINY
            .replace("length = 3", "length = 5")
            .replace("\"tiny\"", "\"other\""),
    );
    let out = nec_rp(
        tmp.path(),
        &["compare", "--config", "tiny.toml", "other.toml", "--out", "cmp"],
    );
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn runtime_errors_exit_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(
        nec_rp(tmp.path(), &["train", "--config", "missing.toml"]).status.code(),
        Some(2)
    );
    write(
        tmp.path(),
        "huge.toml",
        &TINY.replace("length = 3", "length = 3\nreward_scale = 1e200"),
    );
    let out = nec_rp(tmp.path(), &["train", "--config", "huge.toml"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(tmp.path().join("from-config/tiny/summary.json").is_file());
    write(tmp.path(), "tiny.toml", TINY);
    assert_eq!(
        nec_rp(tmp.path(), &["evaluate", "--config", "tiny.toml", "--out", "nowhere"])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn tools_write_reports() {
    let tmp = tempfile::tempdir().unwrap();
    write(
        tmp.path(),
        "jl.toml",
        "n_points = 40\ninput_dim = 32\noutput_dims = [4, 8]\n",
    );
    let out = nec_rp(tmp.path(), &["jl-check", "--config", "jl.toml", "--out", "jl.json"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(tmp.path().join("jl.json").is_file());
    write(
        tmp.path(),
        "bench.toml",
        "methods = [\"gaussian\"]\ninput_dims = [16]\noutput_dims = [4]\nbatch_sizes = [1]\n",
    );
    let out = nec_rp(tmp.path(), &["bench", "--config", "bench.toml", "--out", "b.csv"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(tmp.path().join("b.csv")).unwrap();
    assert!(text.starts_with("method,d,k,n,construct_ns,project_ns"));
    write(tmp.path(), "typo.toml", "n_point = 40\n");
    assert_eq!(
        nec_rp(tmp.path(), &["jl-check", "--config", "typo.toml"]).status.code(),
        Some(1)
    );
}
