//! Quality control for rewrite pairs: length filter, embedding similarity,
//! then the similarity band.

use std::collections::BTreeMap;

use mctg_core::{
    cosine_similarity, length_filter, similarity_band_filter, LabeledSentence, Provenance, RewritePair, RewriteVerdict,
};
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::run::Run;

pub const FILTERED: &str = "filter/rewrite.filtered.jsonl";
pub const KEPT: &str = "filter/rewrite.kept.jsonl";
pub const REPORT: &str = "filter/report.json";

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterReport {
    pub entered: usize,
    pub kept: usize,
    pub dropped_length: usize,
    pub dropped_similarity_high: usize,
    pub dropped_similarity_low: usize,
    pub dropped_reject: usize,
}

impl FilterReport {
    pub fn tally(pairs: &[RewritePair]) -> Self {
        let mut r = Self { entered: pairs.len(), ..Default::default() };
        for p in pairs {
            match p.verdict {
                RewriteVerdict::Kept => r.kept += 1,
                RewriteVerdict::DroppedLength => r.dropped_length += 1,
                RewriteVerdict::DroppedSimilarityHigh => r.dropped_similarity_high += 1,
                RewriteVerdict::DroppedSimilarityLow => r.dropped_similarity_low += 1,
                RewriteVerdict::DroppedReject | RewriteVerdict::Pending => r.dropped_reject += 1,
            }
        }
        r
    }
}

/// The labeled record a kept rewrite pair contributes.
pub fn kept_record(pair: &RewritePair) -> Option<LabeledSentence> {
    if pair.verdict != RewriteVerdict::Kept {
        return None;
    }
    let mut meta = BTreeMap::new();
    meta.insert("source_id".to_string(), pair.source.id.clone());
    Some(LabeledSentence {
        id: pair.id.clone(),
        text: pair.rewritten_text.clone()?,
        aspect_id: pair.target_aspect.clone(),
        label_index: pair.target_index,
        label_text: pair.target_name.clone(),
        provenance: Provenance::Rewrite,
        source_dataset: pair.source.source_dataset.clone(),
        meta,
    })
}

pub fn run(run: &Run) -> Result<FilterReport> {
    run.check_outputs(&[FILTERED, KEPT, REPORT])?;
    let policy = run.cfg.config.filter;
    let pairs: Vec<RewritePair> = run.input(super::augment::REWRITE)?;
    let mut pairs = length_filter(pairs, &policy);

    let scored = run.par_map(&pairs, |p| -> Result<Option<f64>> {
        if p.verdict != RewriteVerdict::Pending {
            return Ok(None);
        }
        let services = run.services()?;
        let rewritten = p.rewritten_text.as_deref().unwrap_or_default();
        let u = services.embed(&p.source.text).map_err(|e| e.for_record(&p.id))?;
        let v = services.embed(rewritten).map_err(|e| e.for_record(&p.id))?;
        Ok(Some(cosine_similarity(&u, &v)?))
    });
    for (pair, sim) in pairs.iter_mut().zip(scored) {
        pair.similarity = sim?;
    }
    let pairs = similarity_band_filter(pairs, &policy)?;
    let kept: Vec<LabeledSentence> = pairs.iter().filter_map(kept_record).collect();
    let report = FilterReport::tally(&pairs);
    run.write_jsonl(FILTERED, &pairs)?;
    run.write_jsonl(KEPT, &kept)?;
    run.write_json(REPORT, &report)?;
    log::info!("filter: {report:?}");
    Ok(report)
}
