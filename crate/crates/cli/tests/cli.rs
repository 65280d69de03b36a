use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn surgbench(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_surgbench")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = surgbench(args);
    assert!(
        out.status.success(),
        "{args:?} failed\nstdout:\n{}\nstderr:\n{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn only_subdir(dir: &Path) -> PathBuf {
    let mut dirs: Vec<PathBuf> = std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
    assert_eq!(dirs.len(), 1);
    dirs.pop().unwrap()
}

#[test]
fn kernel_selftest_passes() {
    let out = ok(&["kernel", "selftest"]);
    assert!(out.contains("mrope_1d_reduction"));
    assert!(out.contains("0 failed"));
}

#[test]
fn bench_run_replay_and_arena() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    ok(&["bench", "synth", "--out", p(&corpus), "--samples", "40", "--budget", "15", "--seed", "5"]);
    let suite = corpus.join("suite.toml");

    let live = dir.path().join("live");
    let out = ok(&["bench", "run", "--suite", p(&suite), "--endpoint", "oracle", "--protocol", "mcq", "--out", p(&live)]);
    assert!(out.contains("600.00"), "{out}");
    let live_run = only_subdir(&live);
    for f in ["manifest.json", "leaderboard.txt", "leaderboard.json"] {
        assert!(live_run.join(f).is_file(), "{f}");
    }
    for f in ["predictions.jsonl", "parsed.jsonl", "report.json"] {
        assert!(live_run.join("cholec80").join(f).is_file(), "{f}");
    }

    let replay = dir.path().join("replay");
    ok(&[
        "bench", "run", "--suite", p(&suite), "--predictions", p(&live_run), "--protocol", "mcq", "--model", "replayed",
        "--out", p(&replay),
    ]);
    let replay_run = only_subdir(&replay);
    for id in ["cholec80", "endovis2018_vqa", "endoscape2023_cvs"] {
        assert_eq!(
            std::fs::read(live_run.join(id).join("report.json")).unwrap(),
            std::fs::read(replay_run.join(id).join("report.json")).unwrap()
        );
    }

    let board = dir.path().join("board");
    let out = ok(&["arena", "--reports", p(&live_run), p(&replay_run), "--out", p(&board.with_extension("txt"))]);
    assert!(out.contains("mock-oracle") && out.contains("replayed"));
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(board.with_extension("json")).unwrap()).unwrap();
    assert_eq!(json["entries"].as_array().unwrap().len(), 2);
}

#[test]
fn missing_predictions_fail_with_ids() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    ok(&["bench", "synth", "--out", p(&corpus), "--samples", "5", "--budget", "5"]);
    let empty = dir.path().join("empty");
    std::fs::create_dir_all(&empty).unwrap();
    let out = surgbench(&[
        "bench", "run", "--suite", p(&corpus.join("suite.toml")), "--predictions", p(&empty), "--out",
        p(&dir.path().join("r")),
    ]);
    assert!(!out.status.success());
}

const PRED_HEADER: &str =
    r#"{"schema_version":"1.0","dataset_id":"fx","created_at":"1970-01-01T00:00:00Z","record_kind":"prediction"}"#;

fn write_preds(path: &Path, rows: &[(&str, &str)]) {
    let mut text = String::from(PRED_HEADER);
    text.push('\n');
    for (id, response) in rows {
        let rec = serde_json::json!({
            "conversation_id": id, "turn_index": 0, "response": response, "status": "parse_failed"
        });
        text.push_str(&rec.to_string());
        text.push('\n');
    }
    std::fs::write(path, text).unwrap();
}

#[test]
fn parse_and_metrics_compute() {
    let dir = tempfile::tempdir().unwrap();
    let actions = dir.path().join("action_discrete.txt");
    std::fs::write(&actions, "0,1\n6,5\n12,5\n18,0\n").unwrap();
    let gt = dir.path().join("gt.jsonl");
    let out = ok(&[
        "pipeline", "import", "--format", "sar_rarp", "--in", p(&actions), "--video", "v1", "--stride", "6", "--out",
        p(&gt),
    ]);
    assert!(out.contains("imported 4"), "{out}");

    let raw = dir.path().join("raw.jsonl");
    write_preds(
        &raw,
        &[
            ("v1_000000", "The surgeon is picking up the needle."),
            ("v1_000006", "tying a knot"),
            ("v1_000012:action_recognition", "I cannot assist with analyzing this surgical image."),
            ("v1_000018", "unclear"),
        ],
    );
    let parsed = dir.path().join("parsed.jsonl");
    let out = ok(&["parse", "--task", "action_recognition", "--in", p(&raw), "--out", p(&parsed)]);
    assert!(out.contains("parsed 2 failed 1 refused 1"), "{out}");

    let report = dir.path().join("report.json");
    ok(&["metrics", "compute", "--task", "action_recognition", "--gt", p(&gt), "--pred", p(&parsed), "--out", p(&report)]);
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(json["metrics"]["accuracy"], 50.0);
    assert_eq!(json["refusals"], 1);
    assert_eq!(json["parse_failures"], 1);

    // raw records are parsed on the fly
    ok(&["metrics", "compute", "--task", "action_recognition", "--gt", p(&gt), "--pred", p(&raw), "--out", p(&report)]);
    let again: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(again["metrics"], json["metrics"]);
}

#[test]
fn pipeline_build_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    ok(&["bench", "synth", "--out", p(&corpus), "--samples", "30"]);
    let mut outputs = Vec::new();
    for i in 0..2 {
        let cfg = dir.path().join(format!("build{i}.toml"));
        std::fs::write(
            &cfg,
            format!(
                "inputs = [\"corpus/cholec80.jsonl\", \"corpus/endovis2018_vqa.jsonl\"]\noutput = \"out{i}/db.jsonl\"\nseed = 9\n"
            ),
        )
        .unwrap();
        let out = ok(&["pipeline", "build", "--config", p(&cfg)]);
        assert!(out.contains("conversations"), "{out}");
        let db = dir.path().join(format!("out{i}/db.jsonl"));
        assert!(dir.path().join(format!("out{i}/db.jsonl.report.json")).is_file());
        outputs.push(std::fs::read(db).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
}
