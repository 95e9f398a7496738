//! Seeded training mixtures with exact per-pool counts.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::itbuild::ItInstance;
use crate::rng::SeededRng;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MixEntry {
    pub pool: String,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MixtureSpec {
    pub output_name: String,
    pub seed: u64,
    pub entries: Vec<MixEntry>,
}

impl MixtureSpec {
    pub fn validate(&self) -> Result<()> {
        if self.entries.is_empty() {
            return Err(Error::Config(format!("mixture `{}` has no entries", self.output_name)));
        }
        let mut names = BTreeSet::new();
        for e in &self.entries {
            if e.count == 0 {
                return Err(Error::Config(format!(
                    "mixture `{}`: count for pool `{}` must be positive",
                    self.output_name, e.pool
                )));
            }
            if !names.insert(e.pool.as_str()) {
                return Err(Error::Config(format!(
                    "mixture `{}` lists pool `{}` twice",
                    self.output_name, e.pool
                )));
            }
        }
        Ok(())
    }

    pub fn total(&self) -> usize {
        self.entries.iter().map(|e| e.count).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mixture {
    pub instances: Vec<ItInstance>,
    /// Pool name to contributed source ids, in output order.
    pub manifest: BTreeMap<String, Vec<String>>,
}

/// Draws exactly `count` instances without replacement from each pool
/// (stream `"<output>/pool/<name>"`), concatenates in entry order, then
/// shuffles (stream `"<output>/shuffle"`).
pub fn mix(pools: &BTreeMap<String, Vec<ItInstance>>, spec: &MixtureSpec) -> Result<Mixture> {
    spec.validate()?;
    let mut tagged: Vec<(&str, &ItInstance)> = Vec::with_capacity(spec.total());
    for entry in &spec.entries {
        let pool = pools.get(&entry.pool).ok_or_else(|| Error::PoolTooSmall {
            pool: entry.pool.clone(),
            available: 0,
            requested: entry.count,
        })?;
        if pool.len() < entry.count {
            return Err(Error::PoolTooSmall {
                pool: entry.pool.clone(),
                available: pool.len(),
                requested: entry.count,
            });
        }
        let mut rng = SeededRng::derive(spec.seed, &format!("{}/pool/{}", spec.output_name, entry.pool));
        tagged.extend(rng.sample_indices(pool.len(), entry.count).into_iter().map(|i| (entry.pool.as_str(), &pool[i])));
    }
    SeededRng::derive(spec.seed, &format!("{}/shuffle", spec.output_name)).shuffle(&mut tagged);

    let mut manifest: BTreeMap<String, Vec<String>> =
        spec.entries.iter().map(|e| (e.pool.clone(), Vec::with_capacity(e.count))).collect();
    let mut instances = Vec::with_capacity(tagged.len());
    for (pool, inst) in tagged {
        manifest.get_mut(pool).expect("pool registered").push(inst.source_id.clone());
        instances.push(inst.clone());
    }
    Ok(Mixture { instances, manifest })
}

/// Names of mixtures whose totals differ from the first one, if any.
pub fn volume_parity_mismatches(specs: &[MixtureSpec]) -> Vec<(String, usize)> {
    let Some(first) = specs.first() else { return Vec::new() };
    let expected = first.total();
    specs
        .iter()
        .filter(|s| s.total() != expected)
        .map(|s| (s.output_name.clone(), s.total()))
        .collect()
}
