//! Cross, grained and rewrite augmentation over the ingested originals.
//!
//! Request tags: `cross/<target>/<id>/<repeat>`, `grained/<aspect>/<id>`,
//! `rewrite/<target>/<attribute index>/<id>`. The three consistency repeats
//! of a cross record send the same prompt; only the tag differs.

use std::collections::BTreeMap;

use mctg_core::prompt::PromptSet;
use mctg_core::rng::{derive_seed, SeededRng};
use mctg_core::text::{clean_text, last_non_empty_line, normalize_token};
use mctg_core::vote::CONSISTENCY_REPEATS;
use mctg_core::{
    consistency_vote, normalize_label, record_id, sample_icl, Aspect, LabelOutcome, LabeledSentence, Provenance,
    RejectTokens, RewritePair, RewriteVerdict, Verdict,
};
use serde::{Deserialize, Serialize};

use super::{collect, StageReport};
use crate::error::{Error, Result};
use crate::run::Run;
use crate::services::{ChatMessage, ChatRequest, ChatTarget};

pub const CROSS: &str = "augment/cross.jsonl";
pub const CROSS_VOTES: &str = "augment/cross.votes.jsonl";
pub const CROSS_REPORT: &str = "augment/cross.report.json";
pub const GRAINED: &str = "augment/grained.jsonl";
pub const GRAINED_REPORT: &str = "augment/grained.report.json";
pub const REWRITE: &str = "augment/rewrite.jsonl";
pub const REWRITE_REPORT: &str = "augment/rewrite.report.json";

/// Audit line for one cross-labeled record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoteLine {
    pub source_id: String,
    pub target: String,
    pub responses: Vec<String>,
    pub outcomes: Vec<LabelOutcome>,
    #[serde(flatten)]
    pub verdict: Verdict,
}

fn originals(run: &Run) -> Result<Vec<LabeledSentence>> {
    let records: Vec<LabeledSentence> = run.input(super::ingest::RECORDS)?;
    Ok(records.into_iter().filter(|r| r.provenance == Provenance::Original).collect())
}

fn of_aspect<'a>(records: &'a [LabeledSentence], aspect: &str) -> Vec<&'a LabeledSentence> {
    records.iter().filter(|r| r.aspect_id == aspect).collect()
}

/// Seeded sample of at most `cap` records, returned in id order.
fn capped<'a>(mut records: Vec<&'a LabeledSentence>, cap: Option<usize>, seed: u64, label: &str) -> Vec<&'a LabeledSentence> {
    records.sort_by(|a, b| a.id.cmp(&b.id));
    match cap {
        Some(cap) if cap < records.len() => {
            let picked = SeededRng::derive(seed, label).sample_indices(records.len(), cap);
            let mut out: Vec<&LabeledSentence> = picked.into_iter().map(|i| records[i]).collect();
            out.sort_by(|a, b| a.id.cmp(&b.id));
            out
        }
        _ => records,
    }
}

fn owned(records: &[&LabeledSentence]) -> Vec<LabeledSentence> {
    records.iter().map(|r| (*r).clone()).collect()
}

fn request(run: &Run, prompt: String, temperature: f64, tag: String) -> ChatRequest {
    ChatRequest {
        model: run.chat_model().to_string(),
        messages: vec![ChatMessage::user(prompt)],
        temperature,
        max_tokens: run.cfg.config.augment.max_tokens,
        request_tag: tag,
    }
}

struct CrossJob<'a> {
    source: &'a LabeledSentence,
    target: &'a Aspect,
    pool: &'a [LabeledSentence],
}

/// Labels one source sentence for `target` three times and votes.
pub fn cross_one(
    run: &Run,
    prompts: &PromptSet,
    rejects: &RejectTokens,
    source: &LabeledSentence,
    target: &Aspect,
    pool: &[LabeledSentence],
) -> Result<(VoteLine, Option<LabeledSentence>)> {
    let aug = &run.cfg.config.augment;
    let icl = sample_icl(pool, target, aug.k, derive_seed(run.seed(), &format!("icl/cross/{}/{}", target.id, source.id)))?;
    let prompt = prompts.cross_prompt(target, &icl, &source.text)?;
    let services = run.services()?;
    let mut responses = Vec::with_capacity(CONSISTENCY_REPEATS);
    let mut outcomes = Vec::with_capacity(CONSISTENCY_REPEATS);
    for repeat in 1..=CONSISTENCY_REPEATS {
        let tag = format!("cross/{}/{}/{repeat}", target.id, source.id);
        let raw = services.chat_complete(ChatTarget::Augmenter, &request(run, prompt.clone(), aug.cross_temperature, tag))?;
        let line = last_non_empty_line(&raw).to_string();
        outcomes.push(normalize_label(&line, target, rejects));
        responses.push(line);
    }
    let vote = consistency_vote(&outcomes)?;
    let labeled = match vote.verdict {
        Verdict::Consistent(index) => {
            let attribute = target.attribute(index).expect("vote returns in-range attributes");
            let mut meta = BTreeMap::new();
            meta.insert("source_id".into(), source.id.clone());
            meta.insert("source_aspect".into(), source.aspect_id.clone());
            meta.insert("source_label".into(), source.label_text.clone());
            Some(LabeledSentence {
                id: record_id(&["cross", &source.id, &target.id]),
                text: source.text.clone(),
                aspect_id: target.id.clone(),
                label_index: index,
                label_text: attribute.name.clone(),
                provenance: Provenance::Cross,
                source_dataset: source.source_dataset.clone(),
                meta,
            })
        }
        _ => None,
    };
    let line = VoteLine {
        source_id: source.id.clone(),
        target: target.id.clone(),
        responses,
        outcomes,
        verdict: vote.verdict,
    };
    Ok((line, labeled))
}

pub fn cross(run: &Run) -> Result<StageReport> {
    run.check_outputs(&[CROSS, CROSS_VOTES, CROSS_REPORT])?;
    let cfg = &run.cfg.config;
    let records = originals(run)?;
    let prompts = run.cfg.prompts()?;
    let rejects = cfg.reject_tokens();

    let mut pools: BTreeMap<String, Vec<LabeledSentence>> = BTreeMap::new();
    let mut jobs = Vec::new();
    for pair in cfg.cross_pairs() {
        let target = run.registry.require(&pair.target)?;
        let pool = pools.entry(target.id.clone()).or_insert_with(|| owned(&of_aspect(&records, &target.id)));
        // surface an undersized demonstration pool once, as a config error
        sample_icl(pool, target, cfg.augment.k, 0)?;
        let label = format!("augment/cross/{}/{}", pair.source, pair.target);
        for source in capped(of_aspect(&records, &pair.source), cfg.augment.cross_cap, cfg.seed, &label) {
            jobs.push((source, target));
        }
    }
    let jobs: Vec<CrossJob> = jobs.into_iter().map(|(source, target)| CrossJob { source, target, pool: &pools[&target.id] }).collect();

    let results = run.par_map(&jobs, |job| {
        (job.source.id.clone(), cross_one(run, &prompts, &rejects, job.source, job.target, job.pool))
    });
    let mut report = StageReport { input: jobs.len(), ..Default::default() };
    let done = collect(results, cfg.augment.on_error, &mut report)?;
    let mut votes = Vec::with_capacity(done.len());
    let mut kept = Vec::new();
    for (vote, labeled) in done {
        match vote.verdict {
            Verdict::Consistent(_) => report.kept += 1,
            Verdict::Rejected => report.rejected += 1,
            Verdict::Inconsistent => report.inconsistent += 1,
        }
        votes.push(vote);
        kept.extend(labeled);
    }
    run.write_jsonl(CROSS, &kept)?;
    run.write_jsonl(CROSS_VOTES, &votes)?;
    run.write_json(CROSS_REPORT, &report)?;
    log::info!("cross: {report:?}");
    Ok(report)
}

/// Asks for a fine-grained description of one record's attribute. `None`
/// when the model rejects.
pub fn grained_one(
    run: &Run,
    prompts: &PromptSet,
    rejects: &RejectTokens,
    source: &LabeledSentence,
) -> Result<Option<LabeledSentence>> {
    let aspect = run.registry.require(&source.aspect_id)?;
    let attribute = aspect.attribute(source.label_index).ok_or_else(|| {
        Error::Config(format!("record {} has label {} outside `{}`", source.id, source.label_index, aspect.id))
    })?;
    let prompt = prompts.grained_prompt(aspect, attribute, &source.text)?;
    let tag = format!("grained/{}/{}", aspect.id, source.id);
    let raw = run
        .services()?
        .chat_complete(ChatTarget::Augmenter, &request(run, prompt, run.cfg.config.augment.grained_temperature, tag))?;
    let description = normalize_token(last_non_empty_line(&raw));
    if description.is_empty() || rejects.contains(&description) {
        return Ok(None);
    }
    let mut meta = BTreeMap::new();
    meta.insert("source_id".into(), source.id.clone());
    Ok(Some(LabeledSentence {
        id: record_id(&["grained", &source.id]),
        text: source.text.clone(),
        aspect_id: source.aspect_id.clone(),
        label_index: source.label_index,
        label_text: description,
        provenance: Provenance::Grained,
        source_dataset: source.source_dataset.clone(),
        meta,
    }))
}

pub fn grained(run: &Run) -> Result<StageReport> {
    run.check_outputs(&[GRAINED, GRAINED_REPORT])?;
    let cfg = &run.cfg.config;
    let records = originals(run)?;
    let prompts = run.cfg.prompts()?;
    let rejects = cfg.reject_tokens();
    let mut jobs = Vec::new();
    for aspect in run.registry.aspects() {
        let label = format!("augment/grained/{}", aspect.id);
        jobs.extend(capped(of_aspect(&records, &aspect.id), cfg.augment.grained_cap, cfg.seed, &label));
    }
    let results = run.par_map(&jobs, |source| (source.id.clone(), grained_one(run, &prompts, &rejects, source)));
    let mut report = StageReport { input: jobs.len(), ..Default::default() };
    let done = collect(results, cfg.augment.on_error, &mut report)?;
    let mut kept = Vec::new();
    for out in done {
        match out {
            Some(record) => {
                report.kept += 1;
                kept.push(record);
            }
            None => report.rejected += 1,
        }
    }
    run.write_jsonl(GRAINED, &kept)?;
    run.write_json(GRAINED_REPORT, &report)?;
    log::info!("grained: {report:?}");
    Ok(report)
}

/// Rewrites one foreign sentence toward `target_index` of `aspect`.
pub fn rewrite_one(
    run: &Run,
    prompts: &PromptSet,
    rejects: &RejectTokens,
    source: &LabeledSentence,
    aspect: &Aspect,
    target_index: usize,
    pool: &[LabeledSentence],
) -> Result<RewritePair> {
    if !aspect.rewrite_target {
        return Err(Error::Config(format!("aspect `{}` is not a rewrite target", aspect.id)));
    }
    if source.aspect_id == aspect.id {
        return Err(Error::Config(format!("record {} already belongs to `{}`", source.id, aspect.id)));
    }
    let target = aspect
        .attribute(target_index)
        .ok_or_else(|| Error::Config(format!("attribute {target_index} outside `{}`", aspect.id)))?;
    let aug = &run.cfg.config.augment;
    let icl = sample_icl(pool, aspect, aug.k, derive_seed(run.seed(), &format!("icl/rewrite/{}/{}", aspect.id, source.id)))?;
    let prompt = prompts.rewrite_prompt(aspect, target, &icl, &source.text)?;
    let tag = format!("rewrite/{}/{}/{}", aspect.id, target_index, source.id);
    let raw = run
        .services()?
        .chat_complete(ChatTarget::Augmenter, &request(run, prompt, aug.rewrite_temperature, tag))?;
    let line = last_non_empty_line(&raw);
    let text = clean_text(line);
    let rejected = text.is_empty() || rejects.contains(&normalize_token(line));
    Ok(RewritePair {
        id: record_id(&["rewrite", &source.id, &aspect.id, &target_index.to_string()]),
        source: source.clone(),
        target_aspect: aspect.id.clone(),
        target_index,
        target_name: target.name.clone(),
        rewritten_text: (!rejected).then_some(text),
        similarity: None,
        verdict: if rejected { RewriteVerdict::DroppedReject } else { RewriteVerdict::Pending },
    })
}

pub fn rewrite(run: &Run) -> Result<StageReport> {
    run.check_outputs(&[REWRITE, REWRITE_REPORT])?;
    let cfg = &run.cfg.config;
    let records = originals(run)?;
    let prompts = run.cfg.prompts()?;
    let rejects = cfg.reject_tokens();
    let mut pools: BTreeMap<String, Vec<LabeledSentence>> = BTreeMap::new();
    let mut jobs: Vec<(&LabeledSentence, &Aspect, usize)> = Vec::new();
    for target in cfg.rewrite_targets() {
        let aspect = run.registry.require(&target)?;
        if !aspect.rewrite_target {
            return Err(Error::Config(format!("aspect `{target}` is not a rewrite target")));
        }
        let pool = pools.entry(target.clone()).or_insert_with(|| owned(&of_aspect(&records, &target)));
        sample_icl(pool, aspect, cfg.augment.k, 0)?;
        let foreign: Vec<&LabeledSentence> = records.iter().filter(|r| r.aspect_id != target).collect();
        let chosen = capped(foreign, cfg.augment.rewrite_cap, cfg.seed, &format!("augment/rewrite/{target}"));
        // target attributes assigned round-robin over the id-sorted foreign records
        for (i, source) in chosen.into_iter().enumerate() {
            jobs.push((source, aspect, i % aspect.len() + 1));
        }
    }
    let results = run.par_map(&jobs, |(source, aspect, index)| {
        (source.id.clone(), rewrite_one(run, &prompts, &rejects, source, aspect, *index, &pools[&aspect.id]))
    });
    let mut report = StageReport { input: jobs.len(), ..Default::default() };
    let pairs = collect(results, cfg.augment.on_error, &mut report)?;
    for p in &pairs {
        if p.verdict == RewriteVerdict::DroppedReject {
            report.rejected += 1;
        } else {
            report.kept += 1;
        }
    }
    run.write_jsonl(REWRITE, &pairs)?;
    run.write_json(REWRITE_REPORT, &report)?;
    log::info!("rewrite: {report:?}");
    Ok(report)
}
