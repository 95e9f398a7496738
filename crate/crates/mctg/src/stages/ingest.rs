use std::collections::BTreeMap;

use mctg_core::LabeledSentence;
use serde::Serialize;

use crate::error::Result;
use crate::ingest::load_dataset;
use crate::run::Run;

pub const RECORDS: &str = "ingest/records.jsonl";
pub const REPORT: &str = "ingest/report.json";

#[derive(Debug, Serialize)]
struct DatasetReport {
    rows: usize,
    kept: usize,
    skipped: usize,
}

/// Loads every configured dataset into `ingest/records.jsonl` (sorted by id)
/// with one `ingest/<dataset>.skipped.jsonl` per dataset.
pub fn run(run: &Run) -> Result<()> {
    let cfg = &run.cfg.config;
    let mut outputs = vec![RECORDS.to_string(), REPORT.to_string()];
    outputs.extend(cfg.datasets.iter().map(|d| format!("ingest/{}.skipped.jsonl", d.name)));
    run.check_outputs(&outputs.iter().map(String::as_str).collect::<Vec<_>>())?;

    let loaded = run.par_map(&cfg.datasets, |spec| load_dataset(spec, &run.cfg.resolve(&spec.path), &run.registry, cfg.seed));
    let mut records: Vec<LabeledSentence> = Vec::new();
    let mut report = BTreeMap::new();
    for (spec, out) in cfg.datasets.iter().zip(loaded) {
        let out = out?;
        run.write_jsonl(&format!("ingest/{}.skipped.jsonl", spec.name), &out.skipped)?;
        report.insert(
            spec.name.clone(),
            DatasetReport { rows: out.rows, kept: out.records.len(), skipped: out.skipped.len() },
        );
        records.extend(out.records);
    }
    records.sort_by(|a, b| a.id.cmp(&b.id));
    run.write_jsonl(RECORDS, &records)?;
    run.write_json(REPORT, &report)?;
    log::info!("ingest: {} records", records.len());
    Ok(())
}
