//! Plug-in (maximum-likelihood) information measures over predicted
//! attribute tuples.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LogBase {
    #[default]
    Nats,
    Bits,
}

impl LogBase {
    fn scale(self, nats: f64) -> f64 {
        match self {
            LogBase::Nats => nats,
            LogBase::Bits => nats / core::f64::consts::LN_2,
        }
    }
}

/// Counts over attribute-index tuples for an ordered subset of aspects.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JointAttributeTable {
    aspects: Vec<String>,
    cardinalities: Vec<usize>,
    counts: BTreeMap<Vec<usize>, u64>,
}

impl JointAttributeTable {
    pub fn new(aspects: Vec<String>, cardinalities: Vec<usize>) -> Result<Self> {
        if aspects.is_empty() || aspects.len() != cardinalities.len() {
            return Err(Error::Contract("table needs one cardinality per aspect".into()));
        }
        if cardinalities.contains(&0) {
            return Err(Error::Contract("aspect cardinality must be positive".into()));
        }
        Ok(Self { aspects, cardinalities, counts: BTreeMap::new() })
    }

    pub fn aspects(&self) -> &[String] {
        &self.aspects
    }

    pub fn cardinalities(&self) -> &[usize] {
        &self.cardinalities
    }

    /// Adds `count` observations of a 1-based attribute tuple.
    pub fn add(&mut self, cell: &[usize], count: u64) -> Result<()> {
        if cell.len() != self.aspects.len() {
            return Err(Error::Contract(format!(
                "cell has {} entries, table covers {} aspects",
                cell.len(),
                self.aspects.len()
            )));
        }
        for (i, (&v, &card)) in cell.iter().zip(&self.cardinalities).enumerate() {
            if v == 0 || v > card {
                return Err(Error::Contract(format!(
                    "index {v} out of range 1..={card} for `{}`",
                    self.aspects[i]
                )));
            }
        }
        if count > 0 {
            *self.counts.entry(cell.to_vec()).or_insert(0) += count;
        }
        Ok(())
    }

    pub fn total(&self) -> u64 {
        self.counts.values().sum()
    }

    pub fn cells(&self) -> impl Iterator<Item = (&[usize], u64)> {
        self.counts.iter().map(|(k, &v)| (k.as_slice(), v))
    }

    /// Table restricted to the given axes, in the given order.
    pub fn marginal(&self, axes: &[usize]) -> Result<Self> {
        if let Some(&bad) = axes.iter().find(|&&a| a >= self.aspects.len()) {
            return Err(Error::Contract(format!("axis {bad} out of range")));
        }
        let mut out = Self::new(
            axes.iter().map(|&a| self.aspects[a].clone()).collect(),
            axes.iter().map(|&a| self.cardinalities[a]).collect(),
        )?;
        for (cell, &count) in &self.counts {
            let key: Vec<usize> = axes.iter().map(|&a| cell[a]).collect();
            *out.counts.entry(key).or_insert(0) += count;
        }
        Ok(out)
    }

    /// Joint Shannon entropy in nats; `0 log 0 = 0`.
    pub fn entropy(&self) -> f64 {
        let n = self.total() as f64;
        if n == 0.0 {
            return 0.0;
        }
        -self
            .counts
            .values()
            .map(|&c| {
                let p = c as f64 / n;
                p * libm::log(p)
            })
            .sum::<f64>()
    }
}

/// Mutual information of a 2-aspect table, or total correlation
/// `H(X) + H(Y) + H(Z) - H(X,Y,Z)` of a 3-aspect table. Tiny negative
/// rounding residue is clamped to zero.
pub fn mutual_information(table: &JointAttributeTable, base: LogBase) -> Result<f64> {
    let n = table.total();
    if n == 0 {
        return Err(Error::Computation("mutual information of an empty table".into()));
    }
    let nats = match table.aspects.len() {
        2 => {
            let x = table.marginal(&[0])?;
            let y = table.marginal(&[1])?;
            let n = n as f64;
            table
                .counts
                .iter()
                .map(|(cell, &c)| {
                    let cx = x.counts[&cell[..1]] as f64;
                    let cy = y.counts[&cell[1..]] as f64;
                    let c = c as f64;
                    (c / n) * libm::log(c * n / (cx * cy))
                })
                .sum::<f64>()
        }
        3 => {
            let marginals: f64 = (0..3)
                .map(|axis| table.marginal(&[axis]).map(|m| m.entropy()))
                .sum::<Result<f64>>()?;
            marginals - table.entropy()
        }
        k => {
            return Err(Error::Computation(format!(
                "mutual information needs 2 or 3 aspects, table has {k}"
            )))
        }
    };
    debug_assert!(nats > -1e-9, "negative information {nats}");
    Ok(base.scale(nats.max(0.0)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;
    use alloc::vec;
    use proptest::prelude::*;

    fn table(cards: &[usize], cells: &[(&[usize], u64)]) -> JointAttributeTable {
        let names = (0..cards.len()).map(|i| format!("a{i}")).collect();
        let mut t = JointAttributeTable::new(names, cards.to_vec()).unwrap();
        for (cell, c) in cells {
            t.add(cell, *c).unwrap();
        }
        t
    }

    #[test]
    fn anchors() {
        let indep = table(&[2, 2], &[(&[1, 1], 25), (&[1, 2], 25), (&[2, 1], 25), (&[2, 2], 25)]);
        assert!(mutual_information(&indep, LogBase::Nats).unwrap().abs() < 1e-12);

        let corr = table(&[2, 2], &[(&[1, 1], 50), (&[2, 2], 50)]);
        let mi = mutual_information(&corr, LogBase::Nats).unwrap();
        assert!((mi - 0.693_147_180_559_945_3).abs() < 1e-9);
        assert!((mutual_information(&corr, LogBase::Bits).unwrap() - 1.0).abs() < 1e-12);

        let triple = table(&[2, 2, 2], &[(&[1, 1, 1], 50), (&[2, 2, 2], 50)]);
        let tc = mutual_information(&triple, LogBase::Nats).unwrap();
        assert!((tc - 1.386_294_361_119_890_6).abs() < 1e-9);
    }

    #[test]
    fn errors() {
        let empty = table(&[2, 2], &[]);
        assert!(mutual_information(&empty, LogBase::Nats).is_err());
        let single = table(&[2], &[(&[1], 3)]);
        assert!(mutual_information(&single, LogBase::Nats).is_err());
        let mut t = table(&[2, 2], &[]);
        assert!(t.add(&[3, 1], 1).is_err());
        assert!(t.add(&[1], 1).is_err());
        assert!(JointAttributeTable::new(vec!["a".to_string()], vec![0]).is_err());
    }

    fn arb_table(dims: usize) -> impl Strategy<Value = JointAttributeTable> {
        proptest::collection::vec(1usize..5, dims).prop_flat_map(move |cards| {
            let cells: usize = cards.iter().product();
            proptest::collection::vec(0u64..20, cells).prop_map(move |counts| {
                let names = (0..cards.len()).map(|i| format!("a{i}")).collect();
                let mut t = JointAttributeTable::new(names, cards.clone()).unwrap();
                for (flat, &c) in counts.iter().enumerate() {
                    let mut rem = flat;
                    let mut cell = vec![0; cards.len()];
                    for d in (0..cards.len()).rev() {
                        cell[d] = rem % cards[d] + 1;
                        rem /= cards[d];
                    }
                    t.add(&cell, c).unwrap();
                }
                t.add(&vec![1; cards.len()], 1).unwrap();
                t
            })
        })
    }

    proptest! {
        #[test]
        fn pairwise_is_symmetric_and_nonnegative(t in arb_table(2)) {
            let a = mutual_information(&t, LogBase::Nats).unwrap();
            let swapped = t.marginal(&[1, 0]).unwrap();
            let b = mutual_information(&swapped, LogBase::Nats).unwrap();
            prop_assert!(a >= 0.0);
            prop_assert!((a - b).abs() < 1e-12);
        }

        #[test]
        fn total_correlation_is_permutation_invariant(t in arb_table(3)) {
            let base = mutual_information(&t, LogBase::Nats).unwrap();
            prop_assert!(base >= 0.0);
            for perm in [[0, 2, 1], [1, 0, 2], [2, 1, 0], [1, 2, 0]] {
                let p = t.marginal(&perm).unwrap();
                prop_assert!((mutual_information(&p, LogBase::Nats).unwrap() - base).abs() < 1e-12);
            }
        }

        #[test]
        fn relabeling_invariance(t in arb_table(2), shift in 0usize..4) {
            let cards = t.cardinalities().to_vec();
            let mut relabeled = JointAttributeTable::new(t.aspects().to_vec(), cards.clone()).unwrap();
            for (cell, c) in t.cells() {
                let moved = [(cell[0] - 1 + shift) % cards[0] + 1, cell[1]];
                relabeled.add(&moved, c).unwrap();
            }
            let a = mutual_information(&t, LogBase::Nats).unwrap();
            let b = mutual_information(&relabeled, LogBase::Nats).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
        }
    }
}
