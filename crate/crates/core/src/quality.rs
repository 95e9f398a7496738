//! Quality control for rewritten sentences: a minimum-length rule and the
//! similarity band that drops near-copies (most similar) and failed rewrites
//! (least similar).

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::record::LabeledSentence;
use crate::text::word_count;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterPolicy {
    pub min_words: usize,
    pub low_drop_fraction: f64,
    pub high_drop_fraction: f64,
    pub scope: BandScope,
}

impl Default for FilterPolicy {
    fn default() -> Self {
        Self { min_words: 5, low_drop_fraction: 0.10, high_drop_fraction: 0.50, scope: BandScope::Global }
    }
}

impl FilterPolicy {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = (self.low_drop_fraction, self.high_drop_fraction);
        if !(lo.is_finite() && hi.is_finite()) || lo < 0.0 || hi < 0.0 || lo + hi >= 1.0 {
            return Err(Error::Config(format!(
                "filter fractions must satisfy 0 <= low, 0 <= high, low + high < 1 (got {lo}, {hi})"
            )));
        }
        Ok(())
    }

    /// `(floor(low * n), ceil(high * n))`.
    pub fn band_sizes(&self, n: usize) -> (usize, usize) {
        // the epsilon absorbs representation error in products like 0.1 * 30
        let low = libm::floor(self.low_drop_fraction * n as f64 + 1e-9) as usize;
        let high = libm::ceil(self.high_drop_fraction * n as f64 - 1e-9) as usize;
        (low.min(n), high.min(n - low.min(n)))
    }
}

/// Whether the band is computed over the whole rewrite pool or separately
/// for each target attribute.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BandScope {
    #[default]
    Global,
    PerAttribute,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewriteVerdict {
    /// Produced by the rewriter, not yet filtered.
    Pending,
    Kept,
    DroppedLength,
    DroppedSimilarityHigh,
    DroppedSimilarityLow,
    DroppedReject,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewritePair {
    pub id: String,
    pub source: LabeledSentence,
    pub target_aspect: String,
    pub target_index: usize,
    pub target_name: String,
    pub rewritten_text: Option<String>,
    pub similarity: Option<f64>,
    pub verdict: RewriteVerdict,
}

/// Marks pending pairs whose rewrite has fewer than `min_words` whitespace tokens.
pub fn length_filter(mut pairs: Vec<RewritePair>, policy: &FilterPolicy) -> Vec<RewritePair> {
    for pair in &mut pairs {
        if pair.verdict != RewriteVerdict::Pending {
            continue;
        }
        let words = pair.rewritten_text.as_deref().map_or(0, word_count);
        if words < policy.min_words {
            pair.verdict = RewriteVerdict::DroppedLength;
        }
    }
    pairs
}

/// Assigns band verdicts to every pending pair; other pairs pass through.
/// Pending pairs are ranked by ascending similarity, ties by id; the lowest
/// `floor(low * N)` and highest `ceil(high * N)` are dropped.
pub fn similarity_band_filter(mut pairs: Vec<RewritePair>, policy: &FilterPolicy) -> Result<Vec<RewritePair>> {
    policy.validate()?;
    let mut groups: BTreeMap<(String, usize), Vec<usize>> = BTreeMap::new();
    for (i, pair) in pairs.iter().enumerate() {
        if pair.verdict != RewriteVerdict::Pending {
            continue;
        }
        if pair.similarity.is_none() {
            return Err(Error::Contract(format!("rewrite pair {} has no similarity", pair.id)));
        }
        let key = match policy.scope {
            BandScope::Global => (String::new(), 0),
            BandScope::PerAttribute => (pair.target_aspect.clone(), pair.target_index),
        };
        groups.entry(key).or_default().push(i);
    }
    for mut members in groups.into_values() {
        members.sort_by(|&a, &b| {
            let (pa, pb) = (&pairs[a], &pairs[b]);
            pa.similarity
                .unwrap()
                .total_cmp(&pb.similarity.unwrap())
                .then_with(|| pa.id.cmp(&pb.id))
                .then(Ordering::Equal)
        });
        let n = members.len();
        let (low, high) = policy.band_sizes(n);
        for (rank, &i) in members.iter().enumerate() {
            pairs[i].verdict = if rank < low {
                RewriteVerdict::DroppedSimilarityLow
            } else if rank >= n - high {
                RewriteVerdict::DroppedSimilarityHigh
            } else {
                RewriteVerdict::Kept
            };
        }
    }
    Ok(pairs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::record::{record_id, Provenance};
    use crate::rng::SeededRng;
    use alloc::collections::BTreeSet;
    use alloc::string::ToString;
    use alloc::vec;
    use proptest::prelude::*;

    fn pair(n: usize, similarity: Option<f64>, text: &str) -> RewritePair {
        let row = n.to_string();
        RewritePair {
            id: record_id(&["pair", &row]),
            source: LabeledSentence {
                id: record_id(&["ag", &row]),
                text: "Stocks rallied after the earnings report".into(),
                aspect_id: "topic".into(),
                label_index: 3,
                label_text: "business".into(),
                provenance: Provenance::Original,
                source_dataset: "ag".into(),
                meta: BTreeMap::new(),
            },
            target_aspect: "sentiment".into(),
            target_index: 1 + n % 2,
            target_name: if n % 2 == 0 { "positive".into() } else { "negative".into() },
            rewritten_text: Some(text.into()),
            similarity,
            verdict: RewriteVerdict::Pending,
        }
    }

    #[test]
    fn length_examples() {
        let p = FilterPolicy::default();
        let out = length_filter(vec![pair(0, None, "Bad."), pair(1, None, "one two three four five")], &p);
        assert_eq!(out[0].verdict, RewriteVerdict::DroppedLength);
        assert_eq!(out[1].verdict, RewriteVerdict::Pending);
        assert!(length_filter(vec![], &p).is_empty());
        let mut rejected = pair(2, None, "x");
        rejected.verdict = RewriteVerdict::DroppedReject;
        assert_eq!(length_filter(vec![rejected], &p)[0].verdict, RewriteVerdict::DroppedReject);
    }

    #[test]
    fn band_on_ten_distinct() {
        let pairs: Vec<_> = (1..=10).map(|i| pair(i, Some(i as f64 / 10.0), "t")).collect();
        let out = similarity_band_filter(pairs, &FilterPolicy::default()).unwrap();
        let kept: Vec<f64> = out
            .iter()
            .filter(|p| p.verdict == RewriteVerdict::Kept)
            .map(|p| p.similarity.unwrap())
            .collect();
        assert_eq!(kept, vec![0.2, 0.3, 0.4, 0.5]);
        assert_eq!(out[0].verdict, RewriteVerdict::DroppedSimilarityLow);
        assert!(out[5..].iter().all(|p| p.verdict == RewriteVerdict::DroppedSimilarityHigh));
    }

    #[test]
    fn band_on_empty_and_ties() {
        assert!(similarity_band_filter(vec![], &FilterPolicy::default()).unwrap().is_empty());
        let pairs: Vec<_> = (0..10).map(|i| pair(i, Some(0.5), "t")).collect();
        let kept = |v: Vec<RewritePair>| -> BTreeSet<String> {
            similarity_band_filter(v, &FilterPolicy::default())
                .unwrap()
                .into_iter()
                .filter(|p| p.verdict == RewriteVerdict::Kept)
                .map(|p| p.id)
                .collect()
        };
        let a = kept(pairs.clone());
        let mut shuffled = pairs;
        SeededRng::derive(3, "shuffle").shuffle(&mut shuffled);
        assert_eq!(a.len(), 4);
        assert_eq!(a, kept(shuffled));
    }

    #[test]
    fn missing_similarity_is_contract_violation() {
        let r = similarity_band_filter(vec![pair(0, None, "t")], &FilterPolicy::default());
        assert!(matches!(r, Err(Error::Contract(_))));
    }

    #[test]
    fn per_attribute_scope_bands_each_target() {
        let policy = FilterPolicy { scope: BandScope::PerAttribute, ..FilterPolicy::default() };
        let pairs: Vec<_> = (0..20).map(|i| pair(i, Some(i as f64 / 20.0), "t")).collect();
        let out = similarity_band_filter(pairs, &policy).unwrap();
        for target in [1, 2] {
            let kept = out.iter().filter(|p| p.target_index == target && p.verdict == RewriteVerdict::Kept).count();
            assert_eq!(kept, 10 - 1 - 5);
        }
    }

    #[test]
    fn invalid_policy() {
        let p = FilterPolicy { low_drop_fraction: 0.5, high_drop_fraction: 0.5, ..FilterPolicy::default() };
        assert!(p.validate().is_err());
        let p = FilterPolicy { low_drop_fraction: -0.1, ..FilterPolicy::default() };
        assert!(p.validate().is_err());
    }

    proptest! {
        #[test]
        fn band_ordering_invariant(sims in proptest::collection::vec(0.0f64..1.0, 0..80)) {
            let pairs: Vec<_> = sims.iter().enumerate().map(|(i, &s)| pair(i, Some(s), "t")).collect();
            let n = pairs.len();
            let out = similarity_band_filter(pairs, &FilterPolicy::default()).unwrap();
            let of = |v: RewriteVerdict| -> Vec<f64> {
                out.iter().filter(|p| p.verdict == v).map(|p| p.similarity.unwrap()).collect()
            };
            let (low, kept, high) = (of(RewriteVerdict::DroppedSimilarityLow), of(RewriteVerdict::Kept), of(RewriteVerdict::DroppedSimilarityHigh));
            prop_assert_eq!(kept.len(), n - n / 10 - n.div_ceil(2));
            for k in &kept {
                prop_assert!(low.iter().all(|l| l <= k));
                prop_assert!(high.iter().all(|h| h >= k));
            }
        }
    }
}
