//! Evaluation: generate over the control grid, classify each generation per
//! aspect, then report accuracy and mutual information.

use std::collections::BTreeMap;

use mctg_core::eval::{generation_tasks, mi_report};
use mctg_core::{accuracy_report, AspectRegistry, EvalRecord, GenerationTask, InstructionTemplate, LogBase, Provenance};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::run::Run;
use crate::services::{ChatMessage, ChatRequest, ChatTarget};

pub const GENERATIONS: &str = "eval/generations.jsonl";
pub const RECORDS: &str = "eval/records.jsonl";
pub const CLASSIFY_REPORT: &str = "eval/classify.report.json";
pub const REPORT: &str = "eval/report.json";
pub const TABLES: &str = "eval/tables.txt";

/// Instruction for a task: every aspect's commanded attribute plus the prefix clause.
pub fn instruction(registry: &AspectRegistry, template: &InstructionTemplate, task: &GenerationTask) -> Result<String> {
    let controls: Vec<(String, String)> = registry
        .aspects()
        .iter()
        .zip(task.combination.indices())
        .map(|(aspect, &i)| (aspect.id.clone(), aspect.attributes[i - 1].name.clone()))
        .collect();
    Ok(template.render(registry, &controls, &task.prefix)?)
}

pub fn generate(run: &Run) -> Result<usize> {
    run.check_outputs(&[GENERATIONS])?;
    let cfg = &run.cfg.config;
    let combinations = cfg.combinations(&run.registry)?;
    let prefixes = run.cfg.prefixes()?;
    let tasks = generation_tasks(&combinations, &prefixes, cfg.eval.repeats);
    let template = run.cfg.instruction_template(Provenance::Original)?;
    let results = run.par_map(&tasks, |task| -> Result<EvalRecord> {
        let req = ChatRequest {
            model: run.eval_model().to_string(),
            messages: vec![ChatMessage::user(instruction(&run.registry, &template, task)?)],
            temperature: cfg.eval.temperature,
            max_tokens: cfg.eval.max_tokens,
            request_tag: task.tag(),
        };
        let generation = run.services()?.chat_complete(ChatTarget::EvalModel, &req)?;
        Ok(EvalRecord::new(task.clone(), generation))
    });
    let records = results
        .into_iter()
        .zip(&tasks)
        .map(|(r, t)| r.map_err(|e| e.for_record(t.tag())))
        .collect::<Result<Vec<_>>>()?;
    run.write_jsonl(GENERATIONS, &records)?;
    log::info!("eval generate: {} generations", records.len());
    Ok(records.len())
}

/// Classifies one generation on every aspect. Service failures other than a
/// replay miss mark the record unevaluated.
pub fn classify_one(run: &Run, record: EvalRecord) -> Result<EvalRecord> {
    let services = run.services()?;
    let mut predicted = Vec::with_capacity(run.registry.len());
    for aspect in run.registry.aspects() {
        let outcome = services
            .classify(&aspect.id, &record.generation)
            .and_then(|out| Ok(out.resolve(aspect.len())?));
        match outcome {
            Ok(index) => predicted.push(index),
            Err(e) if e.fingerprint().is_some() => return Err(e),
            Err(e) => return Ok(record.mark_unevaluated(format!("{}: {e}", aspect.id))),
        }
    }
    Ok(record.with_predictions(predicted)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassifyReport {
    pub records: usize,
    pub evaluated: usize,
    pub unevaluated: usize,
}

pub fn classify(run: &Run) -> Result<ClassifyReport> {
    run.check_outputs(&[RECORDS, CLASSIFY_REPORT])?;
    let generations: Vec<EvalRecord> = run.input(GENERATIONS)?;
    let results = run.par_map(&generations, |r| classify_one(run, r.clone()).map_err(|e| e.for_record(r.task.tag())));
    let records = results.into_iter().collect::<Result<Vec<_>>>()?;
    let evaluated = records.iter().filter(|r| r.is_evaluated()).count();
    let report = ClassifyReport { records: records.len(), evaluated, unevaluated: records.len() - evaluated };
    run.write_jsonl(RECORDS, &records)?;
    run.write_json(CLASSIFY_REPORT, &report)?;
    log::info!("eval classify: {report:?}");
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Counts {
    pub records: usize,
    pub evaluated: usize,
    pub total_matched: usize,
    pub per_aspect_matched: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiSummary {
    pub base: LogBase,
    /// Keyed `"<first>,<second>"` in registry order.
    pub pairwise: BTreeMap<String, f64>,
    /// Total correlation of all three aspects.
    pub three_way: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub baseline: String,
    /// Percentages rounded to 2 decimals.
    pub per_aspect_accuracy: BTreeMap<String, f64>,
    pub total_accuracy: f64,
    pub counts: Counts,
    pub mi: MiSummary,
    pub unevaluated: usize,
}

pub fn pair_key(first: &str, second: &str) -> String {
    format!("{first},{second}")
}

pub fn build_report(baseline: &str, records: &[EvalRecord], registry: &AspectRegistry, base: LogBase) -> Result<EvalReport> {
    let acc = accuracy_report(records, registry)?;
    let mi = mi_report(records, registry, base)?;
    Ok(EvalReport {
        baseline: baseline.to_string(),
        per_aspect_accuracy: acc.per_aspect.iter().map(|a| (a.aspect_id.clone(), a.percent)).collect(),
        total_accuracy: acc.total_percent,
        counts: Counts {
            records: records.len(),
            evaluated: acc.evaluated,
            total_matched: acc.total_matched,
            per_aspect_matched: acc.per_aspect.iter().map(|a| (a.aspect_id.clone(), a.matched)).collect(),
        },
        mi: MiSummary {
            base,
            pairwise: mi.pairwise.iter().map(|p| (pair_key(&p.first, &p.second), p.value)).collect(),
            three_way: mi.three_way,
        },
        unevaluated: acc.unevaluated,
    })
}

fn aligned(rows: &[Vec<String>]) -> String {
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> = (0..cols)
        .map(|c| rows.iter().filter_map(|r| r.get(c)).map(|s| s.chars().count()).max().unwrap_or(0))
        .collect();
    let line = |row: &Vec<String>| {
        let cells: Vec<String> = row
            .iter()
            .enumerate()
            .map(|(c, s)| format!("{s}{}", " ".repeat(widths[c] - s.chars().count())))
            .collect();
        cells.join(" | ").trim_end().to_string()
    };
    let rule: String = widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().join("-+-");
    let mut out = String::new();
    for (i, row) in rows.iter().enumerate() {
        out.push_str(&line(row));
        out.push('\n');
        if i == 0 {
            out.push_str(&rule);
            out.push('\n');
        }
    }
    out
}

/// The accuracy table (one row per baseline) and the MI table (one column
/// per baseline, `A1..An` in registry order).
pub fn render_tables(registry: &AspectRegistry, reports: &[EvalReport]) -> String {
    let aspects = registry.aspects();
    let mut t1 = vec![{
        let mut h = vec!["Baselines".to_string(), "Total Accuracy↑(%)".to_string()];
        h.extend(aspects.iter().map(|a| format!("{}↑(%)", a.display_name)));
        h
    }];
    for r in reports {
        let mut row = vec![r.baseline.clone(), format!("{:.2}", r.total_accuracy)];
        row.extend(aspects.iter().map(|a| {
            r.per_aspect_accuracy.get(&a.id).map_or_else(|| "-".to_string(), |v| format!("{v:.2}"))
        }));
        t1.push(row);
    }

    let mut header = vec![String::new()];
    header.extend(reports.iter().map(|r| r.baseline.clone()));
    let mut t2 = vec![header];
    let fmt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |v| format!("{v:.3}"));
    if aspects.len() == 3 {
        let mut row = vec!["MI(A1,A2,A3)".to_string()];
        row.extend(reports.iter().map(|r| fmt(r.mi.three_way)));
        t2.push(row);
    }
    for i in 0..aspects.len() {
        for j in i + 1..aspects.len() {
            let mut row = vec![format!("MI(A{},A{})", i + 1, j + 1)];
            let key = pair_key(&aspects[i].id, &aspects[j].id);
            row.extend(reports.iter().map(|r| fmt(r.mi.pairwise.get(&key).copied())));
            t2.push(row);
        }
    }
    let legend: Vec<String> = aspects.iter().enumerate().map(|(i, a)| format!("A{} = {}", i + 1, a.display_name)).collect();
    let base = match reports.first().map(|r| r.mi.base) {
        Some(LogBase::Bits) => "bits",
        _ => "nats",
    };
    format!(
        "Table 1: accuracy of controlled generations\n\n{}\nTable 2: mutual information of predicted attributes ({base})\n\n{}\n{}\n",
        aligned(&t1),
        aligned(&t2),
        legend.join(", ")
    )
}

/// Writes `eval/report.json` and `eval/tables.txt`. Extra baselines are
/// earlier `report.json` files, added as further table columns.
pub fn report(run: &Run, extra: &[(String, std::path::PathBuf)]) -> Result<EvalReport> {
    run.check_outputs(&[REPORT, TABLES])?;
    let cfg = &run.cfg.config;
    let records: Vec<EvalRecord> = run.input(RECORDS)?;
    let name = cfg.eval.baseline_name.clone().unwrap_or_else(|| cfg.run_label.clone());
    let report = build_report(&name, &records, &run.registry, cfg.eval.log_base)?;
    let mut all = vec![report.clone()];
    for (label, path) in extra {
        let mut other: EvalReport = crate::jsonl::read_json(path)?;
        if other.mi.base != report.mi.base {
            return Err(Error::Config(format!("baseline `{label}` uses a different log base")));
        }
        other.baseline = label.clone();
        all.push(other);
    }
    run.write_json(REPORT, &report)?;
    crate::jsonl::write_text(&run.path(TABLES), &render_tables(&run.registry, &all))?;
    log::info!("eval report: total accuracy {:.2}%", report.total_accuracy);
    Ok(report)
}
