//! Surgical vision-language toolkit: corpus construction, response parsing,
//! metrics, arena scoring, an evaluation harness and a reference kernel.

pub mod arena;
pub mod datamodel;
pub mod error;
pub mod harness;
pub mod kernel;
pub mod metrics;
pub mod parser;
pub mod pipeline;
pub mod util;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/overview.md")]
    mod overview {}
    #[doc = include_str!("../../../book/src/datamodel.md")]
    mod datamodel {}
    #[doc = include_str!("../../../book/src/pipeline.md")]
    mod pipeline {}
    #[doc = include_str!("../../../book/src/parsing.md")]
    mod parsing {}
    #[doc = include_str!("../../../book/src/metrics.md")]
    mod metrics {}
    #[doc = include_str!("../../../book/src/arena.md")]
    mod arena {}
    #[doc = include_str!("../../../book/src/harness.md")]
    mod harness {}
    #[doc = include_str!("../../../book/src/kernel.md")]
    mod kernel {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
