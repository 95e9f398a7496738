//! Algorithmic core for building multi-aspect controllable text generation
//! (MCTG) instruction-tuning data and scoring MCTG models.
//!
//! Everything here is pure and allocation-only (`no_std` + `alloc`): aspect
//! registries and label normalization, consistency voting over repeated LLM
//! answers, in-context example sampling, prompt templates, the rewrite quality
//! filters, instruction/response construction, seeded dataset mixing, and the
//! accuracy and mutual-information metrics. IO, HTTP services and the CLI live
//! in the `mctg` crate.
#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod aspect;
mod error;
pub mod eval;
pub mod icl;
pub mod info;
pub mod itbuild;
pub mod mix;
pub mod prompt;
pub mod quality;
pub mod record;
pub mod rng;
pub mod similarity;
pub mod text;
pub mod vote;

pub use aspect::{
    enumerate_combinations, normalize_label, Aspect, AspectDef, AspectRegistry, Attribute,
    AttributeDef, ControlCombination, LabelOutcome, RejectTokens, Restriction,
};
pub use error::{Error, Result};
pub use eval::{accuracy_report, AccuracyReport, ClassifierOutput, EvalRecord, GenerationTask};
pub use icl::{sample_icl, Demonstration, IclExampleSet};
pub use info::{mutual_information, JointAttributeTable, LogBase};
pub use itbuild::{build_instance, extract_prefix, InstructionTemplate, ItInstance};
pub use mix::{mix, MixEntry, Mixture, MixtureSpec};
pub use quality::{length_filter, similarity_band_filter, BandScope, FilterPolicy, RewritePair, RewriteVerdict};
pub use record::{record_id, LabeledSentence, Provenance};
pub use rng::SeededRng;
pub use similarity::{cosine_similarity, EmbeddingVector};
pub use vote::{consistency_vote, Verdict, VoteResult};
