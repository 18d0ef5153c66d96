//! End-to-end tests of the `snkit` binary: command flows and exit codes
//! (0 ok, 1 usage, 2 verification failure, 3 I/O).

use std::path::Path;
use std::process::{Command, Output};

use tempfile::tempdir;

fn snkit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_snkit"))
        .args(args)
        .env_remove("SNK_THREADS")
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn build_model(dir: &Path, name: &str, extra: &[&str]) -> String {
    let path = dir.join(name).to_string_lossy().into_owned();
    let mut args = vec!["build", "--out", &path];
    args.extend_from_slice(extra);
    let out = snkit(&args);
    assert_eq!(code(&out), 0, "build failed: {}", stdout(&out));
    path
}

#[test]
fn build_then_analyze_flow() {
    let dir = tempdir().unwrap();
    let model = build_model(dir.path(), "g3.bin", &["--groups", "3"]);

    let out = snkit(&["analyze", "--model", &model, "--format", "json"]);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    assert!(text.contains("\"mult_adds\": 137460672"), "{text}");

    // Quadratic in resolution: total at 448 is 4x the conv mult-adds at 224
    // (4 * 136_500_672) plus the resolution-independent fc (960_000).
    let out448 = snkit(&["analyze", "--model", &model, "--input", "448x448"]);
    assert_eq!(code(&out448), 0);
    assert!(stdout(&out448).contains("546962688"), "{}", stdout(&out448));

    let conn = snkit(&["analyze", "--model", &model, "--connectivity"]);
    assert_eq!(code(&conn), 0);
    let text = stdout(&conn);
    assert!(text.contains("without shuffle -> block-diagonal (3 blocks)"));
    assert!(text.contains("with shuffle -> fully-connected"));
}

#[test]
fn build_summary_reports_depth() {
    let dir = tempdir().unwrap();
    let path = dir.path().join("shallow.bin").to_string_lossy().into_owned();
    let out = snkit(&["build", "--groups", "3", "--shallow", "--out", &path]);
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).contains("weighted layers: 26"), "{}", stdout(&out));
}

#[test]
fn invalid_scale_is_usage_error() {
    let dir = tempdir().unwrap();
    let path = dir.path().join("x.bin").to_string_lossy().into_owned();
    let out = snkit(&["build", "--scale", "0", "--out", &path]);
    assert_eq!(code(&out), 1);
}

#[test]
fn missing_subcommand_is_usage_error() {
    assert_eq!(code(&snkit(&[])), 1);
    assert_eq!(code(&snkit(&["--help"])), 0);
}

#[test]
fn corrupt_model_is_io_error() {
    let dir = tempdir().unwrap();
    let model = build_model(dir.path(), "m.bin", &["--scale", "0.25"]);
    let bytes = std::fs::read(&model).unwrap();
    let trunc = dir.path().join("trunc.bin");
    std::fs::write(&trunc, &bytes[..bytes.len() / 3]).unwrap();

    let out = snkit(&["analyze", "--model", &trunc.to_string_lossy()]);
    assert_eq!(code(&out), 3);

    let missing = snkit(&["analyze", "--model", "/nonexistent/m.bin"]);
    assert_eq!(code(&missing), 3);
}

#[test]
fn verify_passes_and_detects_injected_faults() {
    let out = snkit(&["verify"]);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    for suite in ["tensor", "shuffle", "conv", "bn", "connectivity"] {
        assert!(text.contains(&format!("suite {suite}")), "{text}");
    }

    for fault in ["shuffle-perm", "conv-fast", "bn-fold"] {
        let out = snkit(&["verify", "--inject-fault", fault]);
        assert_eq!(code(&out), 2, "fault {fault} was not detected");
        assert!(stdout(&out).contains("first failure:"));
    }

    let filtered = snkit(&["verify", "--suite", "shuffle"]);
    assert_eq!(code(&filtered), 0);
    assert!(!stdout(&filtered).contains("suite conv"));

    assert_eq!(code(&snkit(&["verify", "--suite", "bogus"])), 1);
}

#[test]
fn bench_runs_and_guards_thread_contract() {
    let dir = tempdir().unwrap();
    let model = build_model(dir.path(), "tiny.bin", &["--scale", "0.25", "--shallow"]);

    let out = snkit(&[
        "bench", "--model", &model, "--resolutions", "56x56,112x112", "--warmup", "3", "--iters",
        "10", "--check",
    ]);
    assert_eq!(code(&out), 0, "{}", stdout(&out));
    let text = stdout(&out);
    assert!(text.contains("threads: 1"));
    assert!(text.contains("bench checks passed"));

    let json = snkit(&[
        "bench", "--model", &model, "--resolutions", "56x56", "--warmup", "3", "--iters", "10",
        "--format", "json",
    ]);
    assert_eq!(code(&json), 0);
    assert!(stdout(&json).contains("\"median_ms\""));

    let out = Command::new(env!("CARGO_BIN_EXE_snkit"))
        .args(["bench", "--model", &model, "--resolutions", "56x56"])
        .env("SNK_THREADS", "2")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));

    let bad_iters = snkit(&["bench", "--model", &model, "--iters", "5"]);
    assert_eq!(code(&bad_iters), 1);
}

#[test]
fn compare_reports_all_structures() {
    let out = snkit(&["compare", "--groups", "3", "--scale", "0.5"]);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    for name in ["vgg_like", "resnet", "resnext", "xception_like", "shufflenet-g3-s0.5"] {
        assert!(text.contains(name), "{text}");
    }
}
