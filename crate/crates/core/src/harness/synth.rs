use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::suite::{default_tasks, BenchmarkSuite};
use crate::arena::ARENA_FIELDS;
use crate::datamodel::{
    write_corpus, BoundingBox, CorpusHeader, CvsVector, GridCell, ImageExtent, Label, RecordKind, SampleRecord,
    TaskKind, TaskVocabularies, Triplet,
};
use crate::error::{Error, Result};
use crate::util::sub_seed;

const WIDTH: f64 = 1280.0;
const HEIGHT: f64 = 1024.0;

fn surgery(dataset: &str) -> &'static str {
    match dataset {
        "sar_rarp" => "prostatectomy",
        "endovis2017" | "endovis2018_vqa" => "nephrectomy",
        _ => "cholecystectomy",
    }
}

fn pick<R: Rng>(terms: &[String], rng: &mut R, what: &str) -> Result<String> {
    terms
        .choose(rng)
        .cloned()
        .ok_or_else(|| Error::Config(format!("vocabulary for {what} is empty")))
}

fn label_for<R: Rng>(task: TaskKind, vocab: &TaskVocabularies, rng: &mut R) -> Result<Label> {
    Ok(match task {
        TaskKind::InstrumentLocalizationBox => {
            // one box per frame, kept in the left 60% so a box displaced to
            // the right still fits the image
            let w = rng.gen_range(80.0..300.0);
            let h = rng.gen_range(80.0..300.0);
            let x1 = rng.gen_range(0.0..(0.6 * WIDTH - w)).round();
            let y1 = rng.gen_range(0.0..(HEIGHT - h)).round();
            let name = pick(vocab.for_task(TaskKind::InstrumentRecognition), rng, "instruments")?;
            Label::Boxes(vec![BoundingBox::new(x1, y1, (x1 + w).round(), (y1 + h).round()).with_label(name)])
        }
        TaskKind::InstrumentLocalizationGrid => Label::Grid(*GridCell::ALL.choose(rng).expect("non-empty")),
        TaskKind::TripletRecognition => {
            let t = &vocab.triplet;
            Label::Triplet(Triplet::new(
                pick(&t.instruments, rng, "instrument")?,
                pick(&t.verbs, rng, "verb")?,
                pick(&t.targets, rng, "target")?,
            ))
        }
        TaskKind::CvsAssessment => Label::Cvs(CvsVector::new(rng.gen(), rng.gen(), rng.gen())),
        other => Label::Class(pick(vocab.for_task(other), rng, other.as_str())?),
    })
}

/// `n` frames for a benchmark dataset with labels drawn uniformly from the
/// vocabulary. Image references point at files that need not exist.
pub fn synthetic_records(dataset: &str, n: usize, seed: u64, vocab: &TaskVocabularies) -> Result<Vec<SampleRecord>> {
    let tasks = default_tasks(dataset).ok_or_else(|| Error::Suite(format!("unknown dataset id `{dataset}`")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(seed, dataset));
    (0..n)
        .map(|i| {
            let mut labels = BTreeMap::new();
            for &task in &tasks {
                labels.insert(task, label_for(task, vocab, &mut rng)?);
            }
            Ok(SampleRecord {
                sample_id: format!("{dataset}-{i:05}"),
                image_ref: format!("{dataset}/{i:05}.png"),
                surgery_type: surgery(dataset).to_string(),
                dataset_id: dataset.to_string(),
                image_extent: Some(ImageExtent { width: WIDTH, height: HEIGHT }),
                labels,
            })
        })
        .collect()
}

/// Writes `<dir>/<id>.jsonl` for all six datasets plus `<dir>/suite.toml`,
/// and returns the suite.
pub fn write_synthetic_suite(dir: &Path, n: usize, budget: usize, seed: u64) -> Result<BenchmarkSuite> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let vocab = TaskVocabularies::builtin();
    let mut toml_text = format!("budget = {budget}\nseed = {seed}\n");
    for (id, _) in ARENA_FIELDS {
        let records = synthetic_records(id, n, seed, &vocab)?;
        let header = CorpusHeader::new(id, "1970-01-01T00:00:00Z", RecordKind::Sample);
        write_corpus(&records, &header, &dir.join(format!("{id}.jsonl")))?;
        toml_text.push_str(&format!("\n[[datasets]]\nid = \"{id}\"\ncorpus = \"{id}.jsonl\"\n"));
    }
    toml_text.push_str("\n[endpoints.oracle]\nuri = \"mock://oracle\"\nmodel = \"mock-oracle\"\nimages = \"none\"\n");
    let path = dir.join("suite.toml");
    std::fs::write(&path, toml_text).map_err(|e| Error::io(&path, e))?;
    BenchmarkSuite::load(&path)
}
