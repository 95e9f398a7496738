//! Pipeline stages. Each reads the previous stages' files from the run
//! directory and writes its own outputs plus a JSON report.

pub mod augment;
pub mod build_it;
pub mod eval;
pub mod filter;
pub mod ingest;
pub mod mix;

use serde::{Deserialize, Serialize};

use crate::config::OnError;
use crate::error::Result;

/// Tally written by every augmentation stage.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageReport {
    pub input: usize,
    pub kept: usize,
    pub rejected: usize,
    pub inconsistent: usize,
    pub errors: usize,
}

/// Walks per-record results in input order. The first error aborts under
/// [`OnError::Fail`]; under [`OnError::Skip`] errors are logged and counted.
pub(crate) fn collect<T>(
    results: Vec<(String, Result<T>)>,
    on_error: OnError,
    report: &mut StageReport,
) -> Result<Vec<T>> {
    let mut out = Vec::with_capacity(results.len());
    for (id, r) in results {
        match r {
            Ok(v) => out.push(v),
            // a replay miss means the cassette does not match the run; never skip it
            Err(e) if on_error == OnError::Fail || e.fingerprint().is_some() => return Err(e.for_record(id)),
            Err(e) => {
                log::warn!("record {id} skipped: {e}");
                report.errors += 1;
            }
        }
    }
    Ok(out)
}
