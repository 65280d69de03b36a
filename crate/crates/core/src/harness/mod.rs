//! End-to-end evaluation: sample frames from each benchmark corpus, query a
//! model endpoint or load canned predictions, parse, score and persist a
//! run directory.

mod client;
mod run;
mod score;
mod suite;
mod synth;

pub use client::{
    parallel_map, query_model, Attempt, ContentPart, HttpTransport, Message, MockTransport, RateLimiter,
    RequestMeta, Transport, WireRequest, WireResponse,
};
pub use run::{
    entry_from_run_dir, run_eval, DatasetOutcome, ModelIdentity, PredictionSource, RunManifest, RunOptions,
    RunOutcome,
};
pub use score::{dataset_report, score_turn, ParserCalls, ScoredTurn};
pub use suite::{
    default_tasks, primary_metric, sample_frames, BenchmarkSuite, DatasetDescriptor, Decoding, ImageMode,
    ModelEndpoint, DEFAULT_BUDGET,
};
pub use synth::{synthetic_records, write_synthetic_suite};
