//! Instruction-tuning pools from originals and the augmented records.

use std::collections::BTreeMap;

use mctg_core::itbuild::build_with_controls;
use mctg_core::{build_instance, AspectRegistry, InstructionTemplate, ItInstance, LabeledSentence, Provenance};
use serde::Serialize;
use serde_json::json;

use crate::config::CrossControls;
use crate::error::{Error, Result};
use crate::run::Run;

pub const REPORT: &str = "it/report.json";

pub fn pool_path(pool: &str) -> String {
    format!("it/{pool}.jsonl")
}

pub fn chat_path(pool: &str) -> String {
    format!("it/{pool}.chat.jsonl")
}

/// Two-message chat rendering of an instance.
pub fn chat_line(instance: &ItInstance) -> serde_json::Value {
    json!({
        "messages": [
            {"role": "user", "content": instance.instruction},
            {"role": "assistant", "content": instance.response},
        ]
    })
}

/// Builds one instance. Cross records in `joined` mode also carry the
/// source's original label, taken from their metadata.
pub fn instance_for(
    record: &LabeledSentence,
    registry: &AspectRegistry,
    template: &InstructionTemplate,
    cross_controls: CrossControls,
) -> Result<ItInstance> {
    if record.provenance == Provenance::Cross && cross_controls == CrossControls::Joined {
        let source_aspect = record.meta.get("source_aspect");
        let source_label = record.meta.get("source_label");
        if let (Some(aspect), Some(label)) = (source_aspect, source_label) {
            let controls = vec![
                (aspect.clone(), label.clone()),
                (record.aspect_id.clone(), record.label_text.clone()),
            ];
            return Ok(build_with_controls(record, controls, registry, template)?);
        }
        return Err(Error::Config(format!("cross record {} lacks source label metadata", record.id)));
    }
    Ok(build_instance(record, registry, template)?)
}

#[derive(Debug, Serialize)]
struct PoolReport {
    instances: usize,
    /// Stage output the pool was built from; absent when that stage was not run.
    source: Option<String>,
}

pub fn run(run: &Run) -> Result<BTreeMap<String, usize>> {
    let mut outputs = vec![REPORT.to_string()];
    for (pool, _) in crate::config::IT_POOLS {
        outputs.push(pool_path(pool));
        outputs.push(chat_path(pool));
    }
    run.check_outputs(&outputs.iter().map(String::as_str).collect::<Vec<_>>())?;

    let sources = [
        ("vanilla", super::ingest::RECORDS, Provenance::Original),
        ("cross", super::augment::CROSS, Provenance::Cross),
        ("grained", super::augment::GRAINED, Provenance::Grained),
        ("rewrite", super::filter::KEPT, Provenance::Rewrite),
    ];
    let mut report = BTreeMap::new();
    let mut counts = BTreeMap::new();
    for (pool, file, provenance) in sources {
        if !run.path(file).exists() {
            if provenance == Provenance::Original {
                return Err(Error::Config(format!("{file} is missing; run `ingest` first")));
            }
            log::warn!("build-it: {file} not found, pool `{pool}` left empty");
            report.insert(pool.to_string(), PoolReport { instances: 0, source: None });
            continue;
        }
        let records: Vec<LabeledSentence> = run.input(file)?;
        let template = run.cfg.instruction_template(provenance)?;
        let cross_controls = run.cfg.config.it.cross_controls;
        let built = run.par_map(&records, |r| {
            instance_for(r, &run.registry, &template, cross_controls).map_err(|e| e.for_record(&r.id))
        });
        let mut instances = built.into_iter().collect::<Result<Vec<_>>>()?;
        instances.sort_by(|a, b| a.source_id.cmp(&b.source_id));
        run.write_jsonl(&pool_path(pool), &instances)?;
        let chat: Vec<_> = instances.iter().map(chat_line).collect();
        run.write_jsonl(&chat_path(pool), &chat)?;
        counts.insert(pool.to_string(), instances.len());
        report.insert(pool.to_string(), PoolReport { instances: instances.len(), source: Some(file.to_string()) });
    }
    run.write_json(REPORT, &report)?;
    log::info!("build-it: {counts:?}");
    Ok(counts)
}
