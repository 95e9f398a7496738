//! Generation tasks over the control grid, per-record classifier verdicts,
//! and the accuracy / mutual-information summaries.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::aspect::{AspectRegistry, ControlCombination};
use crate::error::{Error, Result};
use crate::info::{mutual_information, JointAttributeTable, LogBase};

/// One generation request: model input `(prefix | combination)`, repeated.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationTask {
    pub combination: ControlCombination,
    pub prefix_index: usize,
    /// The generation prompt the output must start with.
    pub prefix: String,
    /// 1-based.
    pub repeat_index: usize,
}

impl GenerationTask {
    pub fn tag(&self) -> String {
        format!("eval/{}/{}/{}", self.combination, self.prefix_index, self.repeat_index)
    }
}

/// Grid of tasks: combinations x prefixes x repeats, in that nesting order.
pub fn generation_tasks(combinations: &[ControlCombination], prefixes: &[String], repeats: usize) -> Vec<GenerationTask> {
    let mut out = Vec::with_capacity(combinations.len() * prefixes.len() * repeats);
    for combination in combinations {
        for (prefix_index, prefix) in prefixes.iter().enumerate() {
            for repeat_index in 1..=repeats {
                out.push(GenerationTask {
                    combination: combination.clone(),
                    prefix_index,
                    prefix: prefix.clone(),
                    repeat_index,
                });
            }
        }
    }
    out
}

/// What a classifier endpoint may answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ClassifierOutput {
    LabelIndex { label_index: usize },
    Distribution { distribution: Vec<f64> },
}

impl ClassifierOutput {
    /// 1-based attribute index; argmax for distributions, lowest index on ties.
    pub fn resolve(&self, cardinality: usize) -> Result<usize> {
        let index = match self {
            ClassifierOutput::LabelIndex { label_index } => *label_index,
            ClassifierOutput::Distribution { distribution } => {
                if distribution.len() != cardinality {
                    return Err(Error::Contract(format!(
                        "distribution has {} entries, aspect has {cardinality}",
                        distribution.len()
                    )));
                }
                if distribution.iter().any(|p| !p.is_finite()) {
                    return Err(Error::Contract("distribution has non-finite entries".into()));
                }
                let mut best = 0;
                for (i, p) in distribution.iter().enumerate() {
                    if *p > distribution[best] {
                        best = i;
                    }
                }
                best + 1
            }
        };
        if index == 0 || index > cardinality {
            return Err(Error::Contract(format!("label index {index} out of range 1..={cardinality}")));
        }
        Ok(index)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub task: GenerationTask,
    pub generation: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predicted: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matched: Option<Vec<bool>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub all_matched: Option<bool>,
    /// Reason the record could not be classified; excluded from every metric.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unevaluated: Option<String>,
}

impl EvalRecord {
    pub fn new(task: GenerationTask, generation: String) -> Self {
        Self { task, generation, predicted: None, matched: None, all_matched: None, unevaluated: None }
    }

    pub fn with_predictions(mut self, predicted: Vec<usize>) -> Result<Self> {
        let commanded = self.task.combination.indices();
        if predicted.len() != commanded.len() {
            return Err(Error::Contract(format!(
                "{} predictions for {} aspects",
                predicted.len(),
                commanded.len()
            )));
        }
        let matched: Vec<bool> = predicted.iter().zip(commanded).map(|(p, c)| p == c).collect();
        self.all_matched = Some(matched.iter().all(|&m| m));
        self.matched = Some(matched);
        self.predicted = Some(predicted);
        self.unevaluated = None;
        Ok(self)
    }

    pub fn mark_unevaluated(mut self, reason: String) -> Self {
        self.predicted = None;
        self.matched = None;
        self.all_matched = None;
        self.unevaluated = Some(reason);
        self
    }

    pub fn is_evaluated(&self) -> bool {
        self.predicted.is_some() && self.unevaluated.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AspectAccuracy {
    pub aspect_id: String,
    pub matched: usize,
    pub percent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub evaluated: usize,
    pub unevaluated: usize,
    pub per_aspect: Vec<AspectAccuracy>,
    pub total_matched: usize,
    pub total_percent: f64,
}

fn percent(matched: usize, total: usize) -> f64 {
    libm::round(matched as f64 * 10_000.0 / total as f64) / 100.0
}

pub fn accuracy_report(records: &[EvalRecord], registry: &AspectRegistry) -> Result<AccuracyReport> {
    let evaluated: Vec<&EvalRecord> = records.iter().filter(|r| r.is_evaluated()).collect();
    let n = evaluated.len();
    if n == 0 {
        return Err(Error::Computation("no evaluated records".into()));
    }
    let mut per_aspect = Vec::with_capacity(registry.len());
    for (i, aspect) in registry.aspects().iter().enumerate() {
        let matched = evaluated
            .iter()
            .filter(|r| r.matched.as_ref().is_some_and(|m| m.get(i).copied().unwrap_or(false)))
            .count();
        per_aspect.push(AspectAccuracy { aspect_id: aspect.id.clone(), matched, percent: percent(matched, n) });
    }
    let total_matched = evaluated.iter().filter(|r| r.all_matched == Some(true)).count();
    Ok(AccuracyReport {
        evaluated: n,
        unevaluated: records.len() - n,
        per_aspect,
        total_matched,
        total_percent: percent(total_matched, n),
    })
}

/// Joint table of predicted indices over the given aspect positions.
pub fn prediction_table(records: &[EvalRecord], registry: &AspectRegistry, axes: &[usize]) -> Result<JointAttributeTable> {
    let aspects = registry.aspects();
    let mut table = JointAttributeTable::new(
        axes.iter().map(|&a| aspects[a].id.clone()).collect(),
        axes.iter().map(|&a| aspects[a].len()).collect(),
    )?;
    for r in records.iter().filter(|r| r.is_evaluated()) {
        let predicted = r.predicted.as_ref().expect("evaluated record has predictions");
        let cell: Vec<usize> = axes.iter().map(|&a| predicted[a]).collect();
        table.add(&cell, 1)?;
    }
    Ok(table)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseMi {
    pub first: String,
    pub second: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiReport {
    pub base: LogBase,
    /// Every aspect pair `(i, j)`, `i < j`, in registry order.
    pub pairwise: Vec<PairwiseMi>,
    /// Total correlation over all aspects when there are exactly three.
    pub three_way: Option<f64>,
}

pub fn mi_report(records: &[EvalRecord], registry: &AspectRegistry, base: LogBase) -> Result<MiReport> {
    let n = registry.len();
    let mut pairwise = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let table = prediction_table(records, registry, &[i, j])?;
            pairwise.push(PairwiseMi {
                first: registry.aspects()[i].id.clone(),
                second: registry.aspects()[j].id.clone(),
                value: mutual_information(&table, base)?,
            });
        }
    }
    let three_way = if n == 3 {
        Some(mutual_information(&prediction_table(records, registry, &[0, 1, 2])?, base)?)
    } else {
        None
    };
    Ok(MiReport { base, pairwise, three_way })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aspect::{enumerate_combinations, AspectDef, AttributeDef};
    use alloc::string::ToString;
    use alloc::vec;

    fn registry() -> AspectRegistry {
        let mk = |id: &str, n: usize| AspectDef {
            id: id.into(),
            display_name: id.into(),
            description: None,
            attributes: (0..n)
                .map(|i| AttributeDef { name: format!("{id}{i}"), aliases: vec![], description: None })
                .collect(),
            rewrite_target: true,
        };
        AspectRegistry::new(&[mk("sentiment", 2), mk("topic", 4), mk("detox", 2)]).unwrap()
    }

    fn task(reg: &AspectRegistry, c: Vec<usize>) -> GenerationTask {
        GenerationTask {
            combination: ControlCombination::new(reg, c).unwrap(),
            prefix_index: 0,
            prefix: "The".into(),
            repeat_index: 1,
        }
    }

    #[test]
    fn matching_rules() {
        let reg = registry();
        let r = EvalRecord::new(task(&reg, vec![1, 2, 1]), "x".into());
        let all = r.clone().with_predictions(vec![1, 2, 1]).unwrap();
        assert_eq!(all.all_matched, Some(true));
        let topic_miss = r.clone().with_predictions(vec![1, 3, 1]).unwrap();
        assert_eq!(topic_miss.matched, Some(vec![true, false, true]));
        assert_eq!(topic_miss.all_matched, Some(false));
        assert!(r.with_predictions(vec![1]).is_err());
    }

    #[test]
    fn classifier_tie_goes_to_lowest() {
        let d = ClassifierOutput::Distribution { distribution: vec![0.5, 0.5] };
        assert_eq!(d.resolve(2).unwrap(), 1);
        let d = ClassifierOutput::Distribution { distribution: vec![0.1, 0.6, 0.3] };
        assert_eq!(d.resolve(3).unwrap(), 2);
        assert!(ClassifierOutput::LabelIndex { label_index: 3 }.resolve(2).is_err());
        assert!(ClassifierOutput::Distribution { distribution: vec![1.0] }.resolve(2).is_err());
    }

    #[test]
    fn accuracy_examples() {
        let reg = registry();
        let mut records = Vec::new();
        for i in 0..8 {
            let r = EvalRecord::new(task(&reg, vec![1, 1, 1]), "x".into());
            let topic = if i < 2 { 1 } else { 2 };
            records.push(r.with_predictions(vec![1, topic, 1]).unwrap());
        }
        records.push(EvalRecord::new(task(&reg, vec![1, 1, 1]), "x".into()).mark_unevaluated("timeout".to_string()));
        let rep = accuracy_report(&records, &reg).unwrap();
        assert_eq!(rep.evaluated, 8);
        assert_eq!(rep.unevaluated, 1);
        assert_eq!(rep.total_percent, 25.0);
        assert_eq!(rep.per_aspect[0].percent, 100.0);
        assert_eq!(rep.per_aspect[1].matched, 2);
        assert!(accuracy_report(&records[8..], &reg).is_err());
    }

    #[test]
    fn percent_rounds_to_two_decimals() {
        assert_eq!(percent(1, 3), 33.33);
        assert_eq!(percent(2, 3), 66.67);
    }

    #[test]
    fn task_grid() {
        let reg = registry();
        let combos = enumerate_combinations(&reg, None).unwrap();
        let prefixes: Vec<String> = (0..20).map(|i| format!("p{i}")).collect();
        let tasks = generation_tasks(&combos[..8], &prefixes, 10);
        assert_eq!(tasks.len(), 1600);
        assert_eq!(tasks[0].tag(), "eval/1-1-1/0/1");
    }

    #[test]
    fn obedient_full_grid_has_zero_mi() {
        let reg = registry();
        let combos = enumerate_combinations(&reg, None).unwrap();
        let prefixes = vec!["a".to_string(), "b".to_string()];
        let records: Vec<EvalRecord> = generation_tasks(&combos, &prefixes, 3)
            .into_iter()
            .map(|t| {
                let p = t.combination.indices().to_vec();
                EvalRecord::new(t, String::new()).with_predictions(p).unwrap()
            })
            .collect();
        let mi = mi_report(&records, &reg, LogBase::Nats).unwrap();
        assert_eq!(mi.pairwise.len(), 3);
        assert!(mi.pairwise.iter().all(|p| p.value.abs() < 1e-12));
        assert!(mi.three_way.unwrap().abs() < 1e-12);
    }
}
