//! Control aspects, their attributes, and control combinations.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text::normalize_token;

/// Configuration-side description of an attribute.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributeDef {
    pub name: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub aliases: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
}

/// Configuration-side description of an aspect.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AspectDef {
    pub id: String,
    pub display_name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    pub attributes: Vec<AttributeDef>,
    #[serde(default)]
    pub rewrite_target: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Attribute {
    /// 1-based position within the aspect.
    pub index: usize,
    pub name: String,
    /// Normalized surface forms; always contains the normalized name.
    pub aliases: BTreeSet<String>,
    pub description: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Aspect {
    pub id: String,
    pub display_name: String,
    pub description: Option<String>,
    pub attributes: Vec<Attribute>,
    pub rewrite_target: bool,
}

impl Aspect {
    pub fn from_def(def: &AspectDef) -> Result<Self> {
        if def.id.trim().is_empty() {
            return Err(Error::Config("aspect id must not be empty".into()));
        }
        if def.attributes.is_empty() {
            return Err(Error::Config(format!("aspect `{}` has no attributes", def.id)));
        }
        let mut names = BTreeSet::new();
        let mut owner: BTreeMap<String, usize> = BTreeMap::new();
        let mut attributes = Vec::with_capacity(def.attributes.len());
        for (i, a) in def.attributes.iter().enumerate() {
            let index = i + 1;
            let canonical = normalize_token(&a.name);
            if canonical.is_empty() {
                return Err(Error::Config(format!("aspect `{}` has an empty attribute name", def.id)));
            }
            if !names.insert(canonical.clone()) {
                return Err(Error::Config(format!(
                    "aspect `{}` repeats attribute `{}`",
                    def.id, a.name
                )));
            }
            let mut aliases = BTreeSet::new();
            aliases.insert(canonical);
            aliases.extend(a.aliases.iter().map(|s| normalize_token(s)).filter(|s| !s.is_empty()));
            for alias in &aliases {
                if let Some(&prev) = owner.get(alias) {
                    if prev != index {
                        return Err(Error::Config(format!(
                            "alias `{alias}` maps to two attributes of aspect `{}`",
                            def.id
                        )));
                    }
                }
                owner.insert(alias.clone(), index);
            }
            attributes.push(Attribute {
                index,
                name: a.name.trim().to_string(),
                aliases,
                description: a.description.clone(),
            });
        }
        Ok(Self {
            id: def.id.clone(),
            display_name: def.display_name.clone(),
            description: def.description.clone(),
            attributes,
            rewrite_target: def.rewrite_target,
        })
    }

    pub fn len(&self) -> usize {
        self.attributes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.attributes.is_empty()
    }

    /// Attribute by 1-based index.
    pub fn attribute(&self, index: usize) -> Option<&Attribute> {
        index.checked_sub(1).and_then(|i| self.attributes.get(i))
    }

    /// Attribute by name or alias, after normalization.
    pub fn find(&self, raw: &str) -> Option<&Attribute> {
        let key = normalize_token(raw);
        self.attributes.iter().find(|a| a.aliases.contains(&key))
    }

    pub fn describe(&self) -> &str {
        self.description.as_deref().unwrap_or(&self.display_name)
    }
}

impl Attribute {
    pub fn describe(&self) -> &str {
        self.description.as_deref().unwrap_or(&self.name)
    }
}

/// The ordered set of control aspects. Position in the list is the aspect index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AspectRegistry {
    aspects: Vec<Aspect>,
}

impl AspectRegistry {
    pub fn new(defs: &[AspectDef]) -> Result<Self> {
        if defs.is_empty() {
            return Err(Error::Config("at least one aspect is required".into()));
        }
        let mut ids = BTreeSet::new();
        let mut aspects = Vec::with_capacity(defs.len());
        for def in defs {
            if !ids.insert(def.id.as_str()) {
                return Err(Error::Config(format!("duplicate aspect id `{}`", def.id)));
            }
            aspects.push(Aspect::from_def(def)?);
        }
        Ok(Self { aspects })
    }

    pub fn aspects(&self) -> &[Aspect] {
        &self.aspects
    }

    pub fn len(&self) -> usize {
        self.aspects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.aspects.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Aspect> {
        self.aspects.iter().find(|a| a.id == id)
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.aspects.iter().position(|a| a.id == id)
    }

    pub fn require(&self, id: &str) -> Result<&Aspect> {
        self.get(id)
            .ok_or_else(|| Error::Config(format!("unknown aspect `{id}`")))
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.aspects.iter().map(Aspect::len).collect()
    }
}

/// Tokens that, after normalization, mean the labeler abstained.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RejectTokens(BTreeSet<String>);

impl RejectTokens {
    pub fn new<I, S>(tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        Self(tokens.into_iter().map(|t| normalize_token(t.as_ref())).collect())
    }

    pub fn contains(&self, normalized: &str) -> bool {
        self.0.contains(normalized)
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.0.iter().map(String::as_str)
    }
}

impl Default for RejectTokens {
    fn default() -> Self {
        Self::new(["none", "n/a", "reject", ""])
    }
}

/// Result of mapping one raw LLM answer onto an aspect.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelOutcome {
    /// 1-based attribute index.
    Attribute(usize),
    Reject,
    Unknown,
}

pub fn normalize_label(raw: &str, aspect: &Aspect, rejects: &RejectTokens) -> LabelOutcome {
    let key = normalize_token(raw);
    if rejects.contains(&key) {
        return LabelOutcome::Reject;
    }
    aspect
        .attributes
        .iter()
        .find(|a| a.aliases.contains(&key))
        .map_or(LabelOutcome::Unknown, |a| LabelOutcome::Attribute(a.index))
}

/// One attribute index per aspect, in registry order.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ControlCombination {
    indices: Vec<usize>,
}

impl ControlCombination {
    pub fn new(registry: &AspectRegistry, indices: Vec<usize>) -> Result<Self> {
        if indices.len() != registry.len() {
            return Err(Error::Contract(format!(
                "combination has {} entries, registry has {} aspects",
                indices.len(),
                registry.len()
            )));
        }
        for (aspect, &idx) in registry.aspects().iter().zip(&indices) {
            if idx == 0 || idx > aspect.len() {
                return Err(Error::Contract(format!(
                    "index {idx} out of range 1..={} for aspect `{}`",
                    aspect.len(),
                    aspect.id
                )));
            }
        }
        Ok(Self { indices })
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }
}

impl fmt::Display for ControlCombination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, idx) in self.indices.iter().enumerate() {
            if i > 0 {
                f.write_str("-")?;
            }
            write!(f, "{idx}")?;
        }
        Ok(())
    }
}

/// Allowed attribute indices per aspect id; aspects not listed are unrestricted.
pub type Restriction = BTreeMap<String, BTreeSet<usize>>;

/// Cartesian product of the allowed attribute indices, lexicographic in
/// aspect order then index order.
pub fn enumerate_combinations(
    registry: &AspectRegistry,
    restriction: Option<&Restriction>,
) -> Result<Vec<ControlCombination>> {
    if let Some(r) = restriction {
        for id in r.keys() {
            registry.require(id)?;
        }
    }
    let mut allowed: Vec<Vec<usize>> = Vec::with_capacity(registry.len());
    for aspect in registry.aspects() {
        match restriction.and_then(|r| r.get(&aspect.id)) {
            Some(set) => {
                if set.is_empty() {
                    return Err(Error::Config(format!(
                        "restriction for aspect `{}` is empty",
                        aspect.id
                    )));
                }
                if let Some(bad) = set.iter().find(|&&i| i == 0 || i > aspect.len()) {
                    return Err(Error::Config(format!(
                        "restriction index {bad} out of range for aspect `{}`",
                        aspect.id
                    )));
                }
                allowed.push(set.iter().copied().collect());
            }
            None => allowed.push((1..=aspect.len()).collect()),
        }
    }

    let mut out = Vec::new();
    let mut cursor = alloc::vec![0usize; allowed.len()];
    loop {
        out.push(ControlCombination {
            indices: cursor.iter().zip(&allowed).map(|(&c, a)| a[c]).collect(),
        });
        // odometer increment, last aspect fastest
        let mut pos = allowed.len();
        loop {
            if pos == 0 {
                return Ok(out);
            }
            pos -= 1;
            cursor[pos] += 1;
            if cursor[pos] < allowed[pos].len() {
                break;
            }
            cursor[pos] = 0;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    fn attr(name: &str) -> AttributeDef {
        AttributeDef { name: name.into(), aliases: vec![], description: None }
    }

    fn aspect(id: &str, names: &[&str]) -> AspectDef {
        AspectDef {
            id: id.into(),
            display_name: id.into(),
            description: None,
            attributes: names.iter().map(|n| attr(n)).collect(),
            rewrite_target: true,
        }
    }

    fn toy() -> AspectRegistry {
        AspectRegistry::new(&[
            aspect("sentiment", &["positive", "negative"]),
            aspect("topic", &["world", "sports", "business", "sci/tech"]),
            aspect("detoxification", &["non-toxic", "toxic"]),
        ])
        .unwrap()
    }

    #[test]
    fn normalize_examples() {
        let reg = toy();
        let topic = reg.get("topic").unwrap();
        let rejects = RejectTokens::default();
        assert_eq!(normalize_label(" SPORTS.", topic, &rejects), LabelOutcome::Attribute(2));
        assert_eq!(normalize_label("None", topic, &rejects), LabelOutcome::Reject);
        assert_eq!(normalize_label("", topic, &rejects), LabelOutcome::Reject);
        assert_eq!(normalize_label("weather", topic, &rejects), LabelOutcome::Unknown);
        assert_eq!(normalize_label("Sci/Tech", topic, &rejects), LabelOutcome::Attribute(4));
    }

    #[test]
    fn aliases_extend_matching() {
        let mut def = aspect("topic", &["world", "sci/tech"]);
        def.attributes[1].aliases = vec!["Science".into(), "technology".into()];
        let a = Aspect::from_def(&def).unwrap();
        let r = RejectTokens::default();
        assert_eq!(normalize_label("science.", &a, &r), LabelOutcome::Attribute(2));
        assert_eq!(normalize_label("TECHNOLOGY", &a, &r), LabelOutcome::Attribute(2));
    }

    #[test]
    fn registry_rejects_bad_definitions() {
        assert!(AspectRegistry::new(&[]).is_err());
        assert!(AspectRegistry::new(&[aspect("a", &["x"]), aspect("a", &["y"])]).is_err());
        assert!(AspectRegistry::new(&[aspect("a", &[])]).is_err());
        assert!(AspectRegistry::new(&[aspect("a", &["Pos", "pos"])]).is_err());
        let mut clash = aspect("a", &["x", "y"]);
        clash.attributes[1].aliases = vec!["X".into()];
        assert!(AspectRegistry::new(&[clash]).is_err());
    }

    #[test]
    fn combination_counts() {
        let reg = toy();
        assert_eq!(enumerate_combinations(&reg, None).unwrap().len(), 16);

        let mut r = Restriction::new();
        r.insert("detoxification".into(), [1].into_iter().collect());
        let combos = enumerate_combinations(&reg, Some(&r)).unwrap();
        // hand enumeration of 2 x 4 x 1
        let expected: Vec<Vec<usize>> = vec![
            vec![1, 1, 1], vec![1, 2, 1], vec![1, 3, 1], vec![1, 4, 1],
            vec![2, 1, 1], vec![2, 2, 1], vec![2, 3, 1], vec![2, 4, 1],
        ];
        let got: Vec<Vec<usize>> = combos.iter().map(|c| c.indices().to_vec()).collect();
        assert_eq!(got, expected);

        let single = AspectRegistry::new(&[aspect("only", &["one"])]).unwrap();
        assert_eq!(enumerate_combinations(&single, None).unwrap().len(), 1);
    }

    #[test]
    fn combination_errors() {
        let reg = toy();
        let mut r = Restriction::new();
        r.insert("topic".into(), BTreeSet::new());
        assert!(matches!(enumerate_combinations(&reg, Some(&r)), Err(Error::Config(_))));
        let mut r = Restriction::new();
        r.insert("topic".into(), [5].into_iter().collect());
        assert!(enumerate_combinations(&reg, Some(&r)).is_err());
        let mut r = Restriction::new();
        r.insert("style".into(), [1].into_iter().collect());
        assert!(enumerate_combinations(&reg, Some(&r)).is_err());
        assert!(ControlCombination::new(&reg, vec![1, 1]).is_err());
        assert!(ControlCombination::new(&reg, vec![1, 5, 1]).is_err());
        assert_eq!(ControlCombination::new(&reg, vec![2, 4, 1]).unwrap().to_string(), "2-4-1");
    }

    proptest! {
        #[test]
        fn normalize_is_idempotent(raw in "[ \"'A-Za-z/.!?-]{0,16}") {
            let reg = toy();
            let rejects = RejectTokens::default();
            for aspect in reg.aspects() {
                if let LabelOutcome::Attribute(i) = normalize_label(&raw, aspect, &rejects) {
                    let name = &aspect.attribute(i).unwrap().name;
                    prop_assert_eq!(normalize_label(name, aspect, &rejects), LabelOutcome::Attribute(i));
                }
            }
        }

        #[test]
        fn product_size_no_duplicates(sizes in proptest::collection::vec(1usize..5, 1..5)) {
            let defs: Vec<AspectDef> = sizes.iter().enumerate().map(|(i, &n)| {
                let names: Vec<String> = (0..n).map(|j| format!("a{j}")).collect();
                let refs: Vec<&str> = names.iter().map(String::as_str).collect();
                aspect(&format!("x{i}"), &refs)
            }).collect();
            let reg = AspectRegistry::new(&defs).unwrap();
            let combos = enumerate_combinations(&reg, None).unwrap();
            prop_assert_eq!(combos.len(), sizes.iter().product::<usize>());
            let unique: BTreeSet<_> = combos.iter().collect();
            prop_assert_eq!(unique.len(), combos.len());
            prop_assert!(combos.windows(2).all(|w| w[0] < w[1]));
        }
    }
}
