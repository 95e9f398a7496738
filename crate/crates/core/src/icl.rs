//! Contrastive in-context demonstrations: `k` original sentences for every
//! attribute of the target aspect.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::aspect::Aspect;
use crate::error::{Error, Result};
use crate::record::{LabeledSentence, Provenance};
use crate::rng::SeededRng;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Demonstration {
    pub text: String,
    /// Canonical attribute name.
    pub attribute: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IclExampleSet {
    pub aspect_id: String,
    pub k: usize,
    /// Demonstrations grouped by attribute, in attribute order.
    pub per_attribute: Vec<Vec<Demonstration>>,
}

impl IclExampleSet {
    pub fn is_empty(&self) -> bool {
        self.per_attribute.iter().all(Vec::is_empty)
    }

    /// Demonstrations attribute by attribute.
    pub fn iter(&self) -> impl Iterator<Item = &Demonstration> {
        self.per_attribute.iter().flatten()
    }
}

/// Seeded uniform sample without replacement of `k` original records per
/// attribute. Candidates keep their pool order, so the result depends only
/// on `(pool order, seed)`.
pub fn sample_icl(pool: &[LabeledSentence], aspect: &Aspect, k: usize, seed: u64) -> Result<IclExampleSet> {
    let mut rng = SeededRng::derive(seed, &aspect.id);
    let mut per_attribute = Vec::with_capacity(aspect.len());
    for attribute in &aspect.attributes {
        let candidates: Vec<&LabeledSentence> = pool
            .iter()
            .filter(|r| {
                r.provenance == Provenance::Original
                    && r.aspect_id == aspect.id
                    && r.label_index == attribute.index
            })
            .collect();
        if candidates.len() < k {
            return Err(Error::InsufficientPool {
                attribute: attribute.name.clone(),
                available: candidates.len(),
                requested: k,
            });
        }
        let demos = rng
            .sample_indices(candidates.len(), k)
            .into_iter()
            .map(|i| Demonstration {
                text: candidates[i].text.clone(),
                attribute: attribute.name.clone(),
            })
            .collect();
        per_attribute.push(demos);
    }
    Ok(IclExampleSet { aspect_id: aspect.id.clone(), k, per_attribute })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aspect::{AspectDef, AttributeDef};
    use crate::record::record_id;
    use alloc::collections::BTreeMap;
    use alloc::format;
    use alloc::vec;

    fn topic() -> Aspect {
        Aspect::from_def(&AspectDef {
            id: "topic".into(),
            display_name: "Topic".into(),
            description: None,
            attributes: ["world", "sports"]
                .iter()
                .map(|n| AttributeDef { name: (*n).into(), aliases: vec![], description: None })
                .collect(),
            rewrite_target: true,
        })
        .unwrap()
    }

    fn pool(per_label: &[(usize, usize)]) -> Vec<LabeledSentence> {
        let mut out = Vec::new();
        for &(label, n) in per_label {
            for i in 0..n {
                let row = format!("{label}-{i}");
                out.push(LabeledSentence {
                    id: record_id(&["ag", &row]),
                    text: format!("sentence {row}"),
                    aspect_id: "topic".into(),
                    label_index: label,
                    label_text: if label == 1 { "world".into() } else { "sports".into() },
                    provenance: Provenance::Original,
                    source_dataset: "ag".into(),
                    meta: BTreeMap::new(),
                });
            }
        }
        out
    }

    #[test]
    fn same_seed_same_sample() {
        let p = pool(&[(1, 5), (2, 5)]);
        let a = sample_icl(&p, &topic(), 2, 42).unwrap();
        let b = sample_icl(&p, &topic(), 2, 42).unwrap();
        assert_eq!(a, b);
        assert!(a.per_attribute.iter().all(|d| d.len() == 2));
        assert!(a.per_attribute[0].iter().all(|d| d.attribute == "world"));
        assert!(a.per_attribute[1].iter().all(|d| d.attribute == "sports"));
    }

    #[test]
    fn zero_k_is_zero_shot() {
        let p = pool(&[(1, 1)]);
        let set = sample_icl(&p, &topic(), 0, 1).unwrap();
        assert!(set.is_empty());
    }

    #[test]
    fn insufficient_pool_names_attribute() {
        let p = pool(&[(1, 5), (2, 1)]);
        match sample_icl(&p, &topic(), 2, 1) {
            Err(Error::InsufficientPool { attribute, available, requested }) => {
                assert_eq!((attribute.as_str(), available, requested), ("sports", 1, 2));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn only_originals_are_demonstrations() {
        let mut p = pool(&[(1, 2), (2, 2)]);
        for r in p.iter_mut().take(1) {
            r.provenance = Provenance::Cross;
        }
        assert!(sample_icl(&p, &topic(), 2, 3).is_err());
    }
}
