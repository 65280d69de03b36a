use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::arena::ARENA_FIELDS;
use crate::datamodel::{Protocol, TaskKind};
use crate::error::{Error, Result};

pub const DEFAULT_BUDGET: usize = 1000;

/// Tasks evaluated for each benchmark dataset.
pub fn default_tasks(dataset: &str) -> Option<Vec<TaskKind>> {
    use TaskKind::*;
    Some(match dataset {
        "cholec80" => vec![PhaseRecognition],
        "sar_rarp" => vec![ActionRecognition],
        "cholect50" => vec![TripletRecognition],
        "endovis2017" => vec![InstrumentLocalizationBox],
        "endovis2018_vqa" => vec![InstrumentRecognition, TissueRecognition, InstrumentLocalizationGrid],
        "endoscape2023_cvs" => vec![CvsAssessment],
        _ => return None,
    })
}

/// Primary metric key of a benchmark dataset.
pub fn primary_metric(dataset: &str) -> Option<&'static str> {
    ARENA_FIELDS.iter().find(|(d, _)| *d == dataset).map(|(_, k)| *k)
}

fn both_protocols() -> Vec<Protocol> {
    vec![Protocol::Ov, Protocol::Mcq]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetDescriptor {
    pub id: String,
    pub corpus: PathBuf,
    #[serde(default)]
    pub tasks: Vec<TaskKind>,
    #[serde(default)]
    pub primary_metric: String,
    #[serde(default = "both_protocols")]
    pub protocols: Vec<Protocol>,
}

impl DatasetDescriptor {
    /// Descriptor with the standard tasks and primary metric for `id`.
    pub fn standard(id: &str, corpus: impl Into<PathBuf>) -> Result<Self> {
        let mut d = DatasetDescriptor {
            id: id.to_string(),
            corpus: corpus.into(),
            tasks: Vec::new(),
            primary_metric: String::new(),
            protocols: both_protocols(),
        };
        d.fill_defaults()?;
        Ok(d)
    }

    fn fill_defaults(&mut self) -> Result<()> {
        let tasks = default_tasks(&self.id)
            .ok_or_else(|| Error::Suite(format!("unknown dataset id `{}`", self.id)))?;
        if self.tasks.is_empty() {
            self.tasks = tasks;
        }
        let primary = primary_metric(&self.id).expect("standard ids have a primary metric");
        if self.primary_metric.is_empty() {
            self.primary_metric = primary.to_string();
        } else if self.primary_metric != primary {
            return Err(Error::Suite(format!(
                "dataset `{}` has primary metric `{primary}`, not `{}`",
                self.id, self.primary_metric
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImageMode {
    /// Send the image reference as a URI.
    #[default]
    Uri,
    /// Inline the image file, read from the suite's image root.
    Base64,
    /// Text only; for dry runs.
    None,
}

/// Decoding parameters, fixed for a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Decoding {
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "one")]
    pub top_p: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub top_k: Option<u32>,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
}

fn one() -> f64 {
    1.0
}

fn default_max_tokens() -> u32 {
    512
}

impl Default for Decoding {
    fn default() -> Self {
        Decoding {
            temperature: 0.0,
            top_p: 1.0,
            top_k: None,
            max_tokens: default_max_tokens(),
        }
    }
}

/// A model behind the wire contract. `uri` is an HTTP(S) URL receiving
/// POSTed requests, or `mock://oracle`, `mock://planted?p=0.7&seed=1`,
/// `mock://refuser?rate=0.2&seed=1` for the in-process mock.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelEndpoint {
    pub uri: String,
    #[serde(default)]
    pub model: String,
    #[serde(default)]
    pub institute: String,
    /// Environment variable holding the bearer token.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token_env: Option<String>,
    #[serde(default = "default_timeout")]
    pub timeout_secs: f64,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
    /// First retry delay; doubles on each further retry.
    #[serde(default = "default_backoff")]
    pub backoff_ms: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub requests_per_second: Option<f64>,
    #[serde(default = "default_protocol")]
    pub protocol: Protocol,
    #[serde(default)]
    pub images: ImageMode,
    #[serde(default)]
    pub decoding: Decoding,
}

fn default_timeout() -> f64 {
    60.0
}
fn default_retries() -> u32 {
    4
}
fn default_in_flight() -> usize {
    4
}
fn default_backoff() -> u64 {
    500
}
fn default_protocol() -> Protocol {
    Protocol::Ov
}

impl ModelEndpoint {
    pub fn new(uri: impl Into<String>) -> Self {
        ModelEndpoint {
            uri: uri.into(),
            model: String::new(),
            institute: String::new(),
            token_env: None,
            timeout_secs: default_timeout(),
            max_retries: default_retries(),
            max_in_flight: default_in_flight(),
            backoff_ms: default_backoff(),
            requests_per_second: None,
            protocol: default_protocol(),
            images: ImageMode::default(),
            decoding: Decoding::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.timeout_secs > 0.0) {
            return Err(Error::Config("endpoint timeout must be positive".into()));
        }
        if self.max_in_flight == 0 {
            return Err(Error::Config("endpoint max_in_flight must be at least 1".into()));
        }
        if let Some(r) = self.requests_per_second {
            if !(r > 0.0) {
                return Err(Error::Config("requests_per_second must be positive".into()));
            }
        }
        Ok(())
    }
}

/// Six datasets plus sampling settings and named endpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkSuite {
    #[serde(default = "default_budget")]
    pub budget: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_root: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vocab: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub templates: Option<PathBuf>,
    pub datasets: Vec<DatasetDescriptor>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub endpoints: BTreeMap<String, ModelEndpoint>,
}

fn default_budget() -> usize {
    DEFAULT_BUDGET
}

impl BenchmarkSuite {
    /// Standard suite with corpora at `<dir>/<id>.jsonl`.
    pub fn standard(dir: &Path, budget: usize, seed: u64) -> Result<Self> {
        let datasets = ARENA_FIELDS
            .iter()
            .map(|(id, _)| DatasetDescriptor::standard(id, dir.join(format!("{id}.jsonl"))))
            .collect::<Result<_>>()?;
        Ok(BenchmarkSuite {
            budget,
            seed,
            image_root: None,
            vocab: None,
            templates: None,
            datasets,
            endpoints: BTreeMap::new(),
        })
    }

    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut s: BenchmarkSuite = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for d in &mut s.datasets {
            resolve(&mut d.corpus);
        }
        for p in [&mut s.image_root, &mut s.vocab, &mut s.templates].into_iter().flatten() {
            resolve(p);
        }
        s.validate()?;
        Ok(s)
    }

    /// Reads a suite file; relative paths resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    /// Checks the dataset ids and fills default tasks and metric names.
    pub fn validate(&mut self) -> Result<()> {
        let ids: BTreeSet<&str> = self.datasets.iter().map(|d| d.id.as_str()).collect();
        let want: BTreeSet<&str> = ARENA_FIELDS.iter().map(|(d, _)| *d).collect();
        if ids != want || self.datasets.len() != 6 {
            return Err(Error::Suite(format!(
                "datasets must be exactly {want:?}, got {:?}",
                self.datasets.iter().map(|d| &d.id).collect::<Vec<_>>()
            )));
        }
        for d in &mut self.datasets {
            d.fill_defaults()?;
        }
        for e in self.endpoints.values() {
            e.validate()?;
        }
        Ok(())
    }

    pub fn dataset(&self, id: &str) -> Option<&DatasetDescriptor> {
        self.datasets.iter().find(|d| d.id == id)
    }

    /// SHA-256 of the suite's canonical JSON, hex.
    pub fn config_hash(&self) -> String {
        let json = serde_json::to_string(self).expect("suite serializes");
        hex(&Sha256::digest(json.as_bytes()))
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Uniform sample of `budget` ids without replacement, returned in corpus
/// order. Takes everything when the corpus is not larger than the budget.
pub fn sample_frames(ids: &[String], budget: usize, seed: u64) -> Result<Vec<String>> {
    if ids.is_empty() {
        return Err(Error::EmptyCorpus("sample".into()));
    }
    if ids.len() <= budget {
        return Ok(ids.to_vec());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = rand::seq::index::sample(&mut rng, ids.len(), budget).into_vec();
    picked.sort_unstable();
    Ok(picked.into_iter().map(|i| ids[i].clone()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("f{i:05}")).collect()
    }

    #[test]
    fn small_corpus_taken_whole() {
        assert_eq!(sample_frames(&ids(500), 1000, 3).unwrap(), ids(500));
        assert!(sample_frames(&[], 10, 0).is_err());
    }

    #[test]
    fn deterministic_sorted_and_distinct() {
        let all = ids(5000);
        let a = sample_frames(&all, 1000, 11).unwrap();
        assert_eq!(a, sample_frames(&all, 1000, 11).unwrap());
        assert_eq!(a.len(), 1000);
        assert!(a.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn overlap_near_hypergeometric_mean() {
        // overlap of two independent 1000-of-5000 draws: mean 200,
        // sd = sqrt(1000 * 0.2 * 0.8 * 4000 / 4999) ~ 11.3
        let all = ids(5000);
        let a: BTreeSet<String> = sample_frames(&all, 1000, 1).unwrap().into_iter().collect();
        let b: BTreeSet<String> = sample_frames(&all, 1000, 2).unwrap().into_iter().collect();
        let overlap = a.intersection(&b).count() as f64;
        let sd = (1000.0 * 0.2 * 0.8 * 4000.0 / 4999.0f64).sqrt();
        assert!((overlap - 200.0).abs() < 6.0 * sd, "{overlap}");
        assert_ne!(a, b);
    }

    #[test]
    fn suite_parses_and_validates() {
        let mut text = String::from("budget = 50\nseed = 4\n");
        for (id, _) in ARENA_FIELDS {
            text.push_str(&format!("[[datasets]]\nid = \"{id}\"\ncorpus = \"c/{id}.jsonl\"\n"));
        }
        text.push_str("[endpoints.mock]\nuri = \"mock://oracle\"\n");
        let s = BenchmarkSuite::parse(&text, Path::new("/base")).unwrap();
        assert_eq!(s.budget, 50);
        assert_eq!(s.dataset("cholect50").unwrap().primary_metric, "triplet_accuracy");
        assert_eq!(s.dataset("cholec80").unwrap().corpus, Path::new("/base/c/cholec80.jsonl"));
        assert_eq!(s.endpoints["mock"].decoding.temperature, 0.0);
        assert_eq!(s.config_hash(), s.clone().config_hash());

        let missing = text.replace("id = \"sar_rarp\"", "id = \"cholec80\"");
        assert!(BenchmarkSuite::parse(&missing, Path::new("/")).is_err());
        let wrong_metric = text.replace(
            "id = \"endovis2017\"\n",
            "id = \"endovis2017\"\nprimary_metric = \"map50\"\n",
        );
        assert!(BenchmarkSuite::parse(&wrong_metric, Path::new("/")).is_err());
    }

    #[test]
    fn default_budget() {
        let mut text = String::new();
        for (id, _) in ARENA_FIELDS {
            text.push_str(&format!("[[datasets]]\nid = \"{id}\"\ncorpus = \"{id}.jsonl\"\n"));
        }
        assert_eq!(BenchmarkSuite::parse(&text, Path::new(".")).unwrap().budget, 1000);
    }

    #[test]
    fn endpoint_invariants() {
        let mut e = ModelEndpoint::new("http://x");
        e.validate().unwrap();
        e.max_in_flight = 0;
        assert!(e.validate().is_err());
        let mut e = ModelEndpoint::new("http://x");
        e.timeout_secs = 0.0;
        assert!(e.validate().is_err());
    }
}
