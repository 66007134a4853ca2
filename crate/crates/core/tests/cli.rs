use std::path::Path;
use std::process::{Command, Output};

use kbtext::trainer::Checkpoint;

fn kbtext(cwd: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kbtext"))
        .current_dir(cwd)
        .args(args)
        .output()
        .unwrap()
}

fn ok(cwd: &Path, args: &[&str]) {
    let out = kbtext(cwd, args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn toy(dir: &Path) {
    ok(
        dir,
        &[
            "gen-toy",
            "--entities",
            "20",
            "--properties",
            "4",
            "--pairs",
            "60",
            "--judgments",
            "20",
            "--out",
            "toy",
        ],
    );
}

#[test]
fn help_lists_defaults_and_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let out = kbtext(dir.path(), &["train", "--help"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("[default: 30]"), "{text}");
    assert!(text.contains("--bigram-buckets"));
    assert_eq!(kbtext(dir.path(), &["--version"]).status.code(), Some(0));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    toy(d);
    // usage error
    assert_eq!(kbtext(d, &["train"]).status.code(), Some(1));
    assert_eq!(kbtext(d, &["no-such-command"]).status.code(), Some(1));
    // invalid values
    assert_eq!(
        kbtext(
            d,
            &["train", "--data", "toy/toy.jsonl", "--temperature", "0"]
        )
        .status
        .code(),
        Some(1)
    );
    assert_eq!(
        kbtext(
            d,
            &[
                "eval-retrieval",
                "--checkpoint",
                "toy/toy.jsonl",
                "--data",
                "toy/toy.jsonl"
            ]
        )
        .status
        .code(),
        Some(1)
    );
    std::fs::write(d.join("bad.jsonl"), "{\"id\": \"x\"}\n").unwrap();
    let bad = kbtext(d, &["stats", "--data", "bad.jsonl"]);
    assert_eq!(bad.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("bad.jsonl:1"));
    // filesystem errors
    assert_eq!(
        kbtext(d, &["stats", "--data", "missing.jsonl"])
            .status
            .code(),
        Some(2)
    );
    std::fs::write(d.join("blocker"), "").unwrap();
    assert_eq!(
        kbtext(
            d,
            &["stats", "--data", "toy/toy.jsonl", "--out", "blocker/sub"]
        )
        .status
        .code(),
        Some(2)
    );
}

#[test]
fn checkpoints_are_byte_identical_across_runs_and_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    toy(d);
    let train = |out: &str, threads: &str| {
        ok(
            d,
            &[
                "--threads",
                threads,
                "train",
                "--data",
                "toy/toy.jsonl",
                "--epochs",
                "3",
                "--seed",
                "5",
                "--out",
                out,
            ],
        );
        std::fs::read(d.join(out).join("checkpoint.bin")).unwrap()
    };
    let a = train("a", "1");
    let b = train("b", "4");
    assert_eq!(a, b);
    let c = Checkpoint::from_bytes(&a).unwrap();
    assert_eq!(c.meta.kind, "pretrain");
    assert_eq!(c.meta.epochs, 3);
}

#[test]
fn config_file_supplies_defaults_and_flags_override() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    toy(d);
    std::fs::write(
        d.join("run.toml"),
        "seed = 11\n[train]\nepochs = 2\ndim = 8\n",
    )
    .unwrap();
    ok(
        d,
        &[
            "--config",
            "run.toml",
            "train",
            "--data",
            "toy/toy.jsonl",
            "--dim",
            "12",
            "--out",
            "t",
        ],
    );
    let run: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("t/run.json")).unwrap()).unwrap();
    let args = &run["args"]["train"];
    assert_eq!(args["epochs"], 2);
    assert_eq!(args["seed"], 11);
    assert_eq!(args["dim"], 12);
    let metrics = std::fs::read_to_string(d.join("t/metrics.jsonl")).unwrap();
    assert_eq!(metrics.lines().count(), 2);

    std::fs::write(d.join("bad.toml"), "[train]\nepochz = 2\n").unwrap();
    assert_eq!(
        kbtext(
            d,
            &["--config", "bad.toml", "train", "--data", "toy/toy.jsonl"]
        )
        .status
        .code(),
        Some(1)
    );
}

#[test]
fn mix_size_is_k_times_smallest() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    for (name, n) in [("a", "12"), ("b", "30"), ("c", "17")] {
        ok(
            d,
            &[
                "gen-toy",
                "--entities",
                "15",
                "--properties",
                "3",
                "--pairs",
                n,
                "--out",
                name,
            ],
        );
        std::fs::rename(
            d.join(name).join("toy.jsonl"),
            d.join(format!("{name}.jsonl")),
        )
        .unwrap();
    }
    ok(
        d,
        &[
            "mix", "--data", "a.jsonl", "--data", "b.jsonl", "--data", "c.jsonl", "--out", "m",
        ],
    );
    let mixed = std::fs::read_to_string(d.join("m/mixed.jsonl")).unwrap();
    assert_eq!(mixed.lines().count(), 36);
    for prefix in ["\"a/", "\"b/", "\"c/"] {
        assert_eq!(mixed.lines().filter(|l| l.contains(prefix)).count(), 12);
    }
}

#[test]
fn score_then_correlate() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    toy(d);
    ok(
        d,
        &[
            "train",
            "--data",
            "toy/toy.jsonl",
            "--epochs",
            "2",
            "--out",
            "t",
        ],
    );
    ok(
        d,
        &[
            "score",
            "--checkpoint",
            "t/checkpoint.bin",
            "--judgments",
            "toy/judgments.csv",
            "--out",
            "s",
        ],
    );
    let scores = std::fs::read_to_string(d.join("s/scores.jsonl")).unwrap();
    assert_eq!(scores.lines().count(), 20);
    ok(
        d,
        &[
            "correlate",
            "--scores",
            "s/scores.jsonl",
            "--judgments",
            "toy/judgments.csv",
            "--criteria",
            "semantic_adequacy",
            "--out",
            "c",
        ],
    );
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("c/correlation.json")).unwrap())
            .unwrap();
    assert_eq!(report["n"], 20);
    let r = report["criteria"]["semantic_adequacy"]["r"]
        .as_f64()
        .unwrap();
    assert!((-1.0..=1.0).contains(&r));
    // scoring needs exactly one input
    assert_eq!(
        kbtext(d, &["score", "--checkpoint", "t/checkpoint.bin"])
            .status
            .code(),
        Some(1)
    );
}
