use std::path::Path;

use surgbench::arena::ARENA_FIELDS;
use surgbench::datamodel::Protocol;
use surgbench::harness::{
    run_eval, write_synthetic_suite, BenchmarkSuite, ModelEndpoint, PredictionSource, RunOptions, ScoredTurn,
};
use surgbench::kernel::planted_correct;
use surgbench::Error;

fn suite(dir: &Path, n: usize, budget: usize) -> BenchmarkSuite {
    write_synthetic_suite(&dir.join("corpus"), n, budget, 7).unwrap()
}

fn endpoint(uri: &str, workers: usize) -> PredictionSource {
    let mut e = ModelEndpoint::new(uri);
    e.max_in_flight = workers;
    PredictionSource::Endpoint { name: "mock".into(), endpoint: e }
}

fn scored(run_dir: &Path, id: &str) -> Vec<ScoredTurn> {
    std::fs::read_to_string(run_dir.join(id).join("parsed.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

#[test]
fn oracle_scores_600() {
    let dir = tempfile::tempdir().unwrap();
    let s = suite(dir.path(), 80, 50);
    for protocol in [Protocol::Ov, Protocol::Mcq] {
        let out = run_eval(&s, &endpoint("mock://oracle", 4), &RunOptions::new(protocol)).unwrap();
        assert!((out.manifest.arena_score - 600.0).abs() < 1e-9, "{protocol}: {:?}", out.manifest.arena);
        for (id, d) in &out.manifest.datasets {
            assert_eq!(d.sample_ids.len(), 50, "{id}");
            assert!(d.is_conserved());
            match protocol {
                Protocol::Ov => assert_eq!(d.parser_calls.parse_choice, 0),
                Protocol::Mcq => assert_eq!(d.parser_calls.match_keyword, 0),
            }
        }
    }
}

#[test]
fn planted_accuracy_is_the_realized_draw_fraction() {
    let dir = tempfile::tempdir().unwrap();
    let s = suite(dir.path(), 120, 50);
    let (p, seed) = (0.6, 11);
    let mut opts = RunOptions::new(Protocol::Ov);
    opts.out = Some(dir.path().join("runs"));
    let out = run_eval(&s, &endpoint(&format!("mock://planted?p={p}&seed={seed}"), 3), &opts).unwrap();
    let run_dir = out.run_dir.unwrap();
    for (id, key) in ARENA_FIELDS {
        let turns = scored(&run_dir, id);
        let hits = turns
            .iter()
            .filter(|t| planted_correct(&t.conversation_id, t.turn_index, p, seed))
            .count();
        assert!(hits > 0 && hits < turns.len(), "{id}: degenerate draw");
        let expected = 100.0 * hits as f64 / turns.len() as f64;
        let got = out.reports[id].get(key).unwrap();
        assert!((got - expected).abs() < 1e-9, "{id}: {got} vs {expected}");
    }
}

fn dataset_files(rd: &Path, names: &[&str]) -> Vec<Vec<u8>> {
    let mut files = Vec::new();
    for (id, _) in ARENA_FIELDS {
        for f in names {
            files.push(std::fs::read(rd.join(id).join(f)).unwrap());
        }
    }
    files
}

#[test]
fn reports_identical_across_worker_counts() {
    let dir = tempfile::tempdir().unwrap();
    let s = suite(dir.path(), 60, 30);
    let mut files = Vec::new();
    for workers in [1usize, 8] {
        let mut o = RunOptions::new(Protocol::Mcq);
        o.out = Some(dir.path().join(format!("w{workers}")));
        let r = run_eval(&s, &endpoint("mock://planted?p=0.5&seed=2", workers), &o).unwrap();
        files.push(dataset_files(&r.run_dir.unwrap(), &["report.json", "parsed.jsonl"]));
    }
    assert_eq!(files[0], files[1]);
}

#[test]
fn canned_replay_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let s = suite(dir.path(), 60, 30);
    let mut opts = RunOptions::new(Protocol::Mcq);
    opts.out = Some(dir.path().join("live"));
    let live = run_eval(&s, &endpoint("mock://planted?p=0.5&seed=2", 2), &opts).unwrap();
    let canned = PredictionSource::Canned(live.run_dir.clone().unwrap());

    let mut runs = Vec::new();
    for i in 0..2 {
        let mut o = RunOptions::new(Protocol::Mcq);
        o.out = Some(dir.path().join(format!("replay{i}")));
        let r = run_eval(&s, &canned, &o).unwrap();
        assert!(r.manifest.started_at.is_none());
        assert_eq!(r.reports, live.reports);
        let rd = r.run_dir.unwrap();
        let mut files = dataset_files(&rd, &["report.json", "parsed.jsonl", "predictions.jsonl"]);
        files.push(std::fs::read(rd.join("leaderboard.txt")).unwrap());
        files.push(std::fs::read(rd.join("leaderboard.json")).unwrap());
        files.push(std::fs::read(rd.join("manifest.json")).unwrap());
        runs.push(files);
    }
    assert_eq!(runs[0], runs[1]);
}

#[test]
fn missing_predictions_list_sample_ids() {
    let dir = tempfile::tempdir().unwrap();
    let s = suite(dir.path(), 20, 20);
    let mut opts = RunOptions::new(Protocol::Ov);
    opts.out = Some(dir.path().join("live"));
    let live = run_eval(&s, &endpoint("mock://oracle", 1), &opts).unwrap();
    let rd = live.run_dir.unwrap();
    let path = rd.join("cholec80").join("predictions.jsonl");
    let text = std::fs::read_to_string(&path).unwrap();
    let kept: Vec<&str> = text.lines().filter(|l| !l.contains("cholec80-00003")).collect();
    std::fs::write(&path, kept.join("\n") + "\n").unwrap();
    match run_eval(&s, &PredictionSource::Canned(rd), &RunOptions::new(Protocol::Ov)) {
        Err(Error::MissingPredictions { dataset, ids }) => {
            assert_eq!(dataset, "cholec80");
            assert_eq!(ids, vec!["cholec80-00003".to_string()]);
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn refuser_counts_refusals() {
    let dir = tempfile::tempdir().unwrap();
    let s = suite(dir.path(), 20, 20);
    let out = run_eval(&s, &endpoint("mock://refuser?rate=1", 2), &RunOptions::new(Protocol::Ov)).unwrap();
    assert_eq!(out.manifest.arena_score, 0.0);
    for d in out.manifest.datasets.values() {
        assert_eq!(d.refused, d.queries);
    }
}
