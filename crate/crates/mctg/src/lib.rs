//! Pipeline driver for building multi-aspect controllable generation data:
//! dataset ingestion, LLM-backed augmentation, rewrite filtering,
//! instruction-tuning assembly, dataset mixing and evaluation.
//!
//! The algorithms live in [`mctg_core`]; this crate adds configuration, file
//! formats, the external service layer (live HTTP, record and replay) and the
//! `mctg` command line tool.

pub mod config;
pub mod error;
pub mod ingest;
pub mod jsonl;
pub mod run;
pub mod services;
pub mod stages;

pub use error::{Error, Result};
pub use mctg_core as core;
