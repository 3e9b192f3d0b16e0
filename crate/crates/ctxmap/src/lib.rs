//! Map-reduce retrieval-augmented answering: corpus and dataset IO, LLM
//! backends, the answering pipeline, experiment protocols and reports.
//!
//! The pure parts (ranking, preflight, prompts, cost model, metrics) live
//! in [`ctxmap_core`] and are re-exported as [`core`].

pub use ctxmap_core as core;

pub mod backend;
pub mod cli;
pub mod config;
pub mod dataprep;
pub mod eval;
pub mod exec;
pub mod io;
pub mod pipeline;
