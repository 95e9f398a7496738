//! Training mixtures drawn from the IT pools and universal IT datasets.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use mctg_core::mix::volume_parity_mismatches;
use mctg_core::{mix, record_id, ItInstance, Provenance};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::config::IT_POOLS;
use crate::error::{Error, Result};
use crate::run::Run;

pub const REPORT: &str = "mix/report.json";

/// Reads an opaque universal IT file: one object per line with string
/// `instruction` and `response`; other fields are ignored.
pub fn load_universal(pool: &str, path: &Path) -> Result<Vec<ItInstance>> {
    let rows: Vec<Value> = crate::jsonl::read(path)?;
    rows.into_iter()
        .enumerate()
        .map(|(i, row)| {
            let field = |name: &str| {
                row.get(name).and_then(Value::as_str).map(str::to_string).ok_or_else(|| Error::Parse {
                    path: path.to_path_buf(),
                    line: i + 1,
                    message: format!("missing string field `{name}`"),
                })
            };
            Ok(ItInstance {
                instruction: field("instruction")?,
                response: field("response")?,
                controls: Vec::new(),
                prefix: String::new(),
                provenance: Provenance::Universal,
                source_id: record_id(&[pool, &(i + 1).to_string()]),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MixtureReport {
    pub total: usize,
    pub per_pool: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MixReport {
    pub mixtures: BTreeMap<String, MixtureReport>,
    /// Mixtures whose total differs from the first one's (`name`, total).
    pub parity_warnings: Vec<(String, usize)>,
}

pub fn run(run: &Run) -> Result<MixReport> {
    let cfg = &run.cfg.config;
    let specs = cfg.mixture_specs();
    if specs.is_empty() {
        return Err(Error::Config("no [[mix.mixtures]] configured".into()));
    }
    let mut outputs = vec![REPORT.to_string()];
    for s in &specs {
        outputs.push(format!("mix/{}.jsonl", s.output_name));
        outputs.push(format!("mix/{}.manifest.json", s.output_name));
    }
    run.check_outputs(&outputs.iter().map(String::as_str).collect::<Vec<_>>())?;

    let needed: BTreeSet<&str> = specs.iter().flat_map(|s| s.entries.iter().map(|e| e.pool.as_str())).collect();
    let mut pools = BTreeMap::new();
    for name in needed {
        let instances = if IT_POOLS.iter().any(|(p, _)| *p == name) {
            run.input(&super::build_it::pool_path(name))?
        } else {
            let source = cfg
                .mix
                .pools
                .iter()
                .find(|p| p.name == name)
                .ok_or_else(|| Error::Config(format!("unknown pool `{name}`")))?;
            load_universal(name, &run.cfg.resolve(&source.path))?
        };
        pools.insert(name.to_string(), instances);
    }

    let mut report = MixReport { mixtures: BTreeMap::new(), parity_warnings: Vec::new() };
    for spec in &specs {
        let mixture = mix(&pools, spec)?;
        run.write_jsonl(&format!("mix/{}.jsonl", spec.output_name), &mixture.instances)?;
        run.write_json(&format!("mix/{}.manifest.json", spec.output_name), &mixture.manifest)?;
        report.mixtures.insert(
            spec.output_name.clone(),
            MixtureReport {
                total: mixture.instances.len(),
                per_pool: mixture.manifest.iter().map(|(k, v)| (k.clone(), v.len())).collect(),
            },
        );
    }
    if cfg.mix.parity_check {
        report.parity_warnings = volume_parity_mismatches(&specs);
        for (name, total) in &report.parity_warnings {
            log::warn!("mixture `{name}` has {total} instances, unlike the first mixture; baseline volumes differ");
        }
    }
    run.write_json(REPORT, &report)?;
    Ok(report)
}
