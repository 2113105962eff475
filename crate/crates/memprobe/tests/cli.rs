//! End-to-end checks of the command-line binary: reproducible generation,
//! the mock pipeline, report emission, and exit codes.

use std::path::Path;
use std::process::{Command, Output};

fn memprobe(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_memprobe"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn assert_success(out: &Output) {
    assert!(
        out.status.success(),
        "command failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn generate_is_reproducible_and_pipeline_reaches_ceiling() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path();

    let args = [
        "generate",
        "--seed",
        "3",
        "--task",
        "batch_search",
        "--out",
        "a.jsonl",
    ];
    assert_success(&memprobe(path, &args));
    let mut again = args;
    again[6] = "b.jsonl";
    assert_success(&memprobe(path, &again));
    let a = std::fs::read(path.join("a.jsonl")).unwrap();
    let b = std::fs::read(path.join("b.jsonl")).unwrap();
    assert_eq!(a, b, "equal flags must produce byte-identical snapshots");
    assert_eq!(a.iter().filter(|&&c| c == b'\n').count(), 20);

    assert_success(&memprobe(
        path,
        &[
            "run",
            "--snapshot",
            "a.jsonl",
            "--mock",
            "oracle",
            "--out",
            "results.jsonl",
        ],
    ));
    assert_success(&memprobe(
        path,
        &[
            "eval",
            "--snapshot",
            "a.jsonl",
            "--results",
            "results.jsonl",
            "--out",
            "scores.jsonl",
        ],
    ));
    let report = memprobe(
        path,
        &["report", "--scores", "scores.jsonl", "--format", "json"],
    );
    assert_success(&report);
    let parsed: serde_json::Value =
        serde_json::from_slice(&report.stdout).expect("report is valid JSON");
    assert_eq!(parsed["overall"]["mean"], 1.0);
    assert_eq!(parsed["per_task"]["batch_search"]["count"], 20);

    let csv = memprobe(
        path,
        &["report", "--scores", "scores.jsonl", "--format", "csv"],
    );
    assert_success(&csv);
    let text = String::from_utf8(csv.stdout).unwrap();
    assert!(text.starts_with("level,name,metric_mean,case_count\n"));
    assert!(text.contains("task,batch_search,1,20\n"));
}

#[test]
fn empty_mock_floor_through_the_binary() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path();
    assert_success(&memprobe(
        path,
        &[
            "generate",
            "--task",
            "set_state",
            "--out",
            "snap.jsonl",
        ],
    ));
    assert_success(&memprobe(
        path,
        &[
            "run",
            "--snapshot",
            "snap.jsonl",
            "--mock",
            "empty",
            "--out",
            "results.jsonl",
        ],
    ));
    assert_success(&memprobe(
        path,
        &[
            "eval",
            "--snapshot",
            "snap.jsonl",
            "--results",
            "results.jsonl",
            "--out",
            "scores.jsonl",
        ],
    ));
    let report = memprobe(
        path,
        &["report", "--scores", "scores.jsonl", "--format", "json"],
    );
    assert_success(&report);
    let parsed: serde_json::Value = serde_json::from_slice(&report.stdout).unwrap();
    let mean = parsed["overall"]["mean"].as_f64().unwrap();
    assert!(mean <= 0.05, "empty-response mean {mean} above the floor");
}

#[test]
fn exit_codes_distinguish_usage_and_operational_errors() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path();

    // Unknown task name: usage error.
    let usage = memprobe(path, &["generate", "--task", "bogus", "--out", "x.jsonl"]);
    assert_eq!(usage.status.code(), Some(2));

    // Unknown flag: clap usage error.
    let flag = memprobe(path, &["generate", "--frobnicate"]);
    assert_eq!(flag.status.code(), Some(2));

    // Missing snapshot file: operational error.
    let missing = memprobe(
        path,
        &[
            "run",
            "--snapshot",
            "absent.jsonl",
            "--mock",
            "oracle",
            "--out",
            "r.jsonl",
        ],
    );
    assert_eq!(missing.status.code(), Some(1));

    // --endpoint without --model: usage error.
    assert_success(&memprobe(
        path,
        &["generate", "--task", "count", "--out", "snap.jsonl"],
    ));
    let no_model = memprobe(
        path,
        &[
            "run",
            "--snapshot",
            "snap.jsonl",
            "--endpoint",
            "http://127.0.0.1:1",
            "--out",
            "r.jsonl",
        ],
    );
    assert_eq!(no_model.status.code(), Some(2));
}

#[test]
fn config_file_supplies_defaults_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path();
    std::fs::write(
        path.join("memprobe.toml"),
        "[generate]\nseed = 9\ncontext_tokens = 800\n",
    )
    .unwrap();

    assert_success(&memprobe(
        path,
        &[
            "--config",
            "memprobe.toml",
            "generate",
            "--task",
            "count",
            "--out",
            "from_config.jsonl",
        ],
    ));
    let line = std::fs::read_to_string(path.join("from_config.jsonl")).unwrap();
    let case: serde_json::Value = serde_json::from_str(line.lines().next().unwrap()).unwrap();
    assert_eq!(case["seed_path"]["master_seed"], 9);
    assert_eq!(case["params"]["token_budget"]["target_tokens"], 800);

    // An explicit flag overrides the config value.
    assert_success(&memprobe(
        path,
        &[
            "--config",
            "memprobe.toml",
            "generate",
            "--task",
            "count",
            "--seed",
            "4",
            "--out",
            "flag_wins.jsonl",
        ],
    ));
    let line = std::fs::read_to_string(path.join("flag_wins.jsonl")).unwrap();
    let case: serde_json::Value = serde_json::from_str(line.lines().next().unwrap()).unwrap();
    assert_eq!(case["seed_path"]["master_seed"], 4);
}
