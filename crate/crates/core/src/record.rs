//! Labeled sentences flowing between pipeline stages.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::aspect::AspectRegistry;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Original,
    Cross,
    Grained,
    Rewrite,
    /// General instruction data mixed in from outside the aspect datasets.
    /// Only ever attached to instruction instances, never to a `LabeledSentence`.
    Universal,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::Original => "original",
            Provenance::Cross => "cross",
            Provenance::Grained => "grained",
            Provenance::Rewrite => "rewrite",
            Provenance::Universal => "universal",
        }
    }
}

/// Content-addressed id: first 16 hex chars of SHA-256 over the parts joined by U+001F.
pub fn record_id(parts: &[&str]) -> String {
    let mut hasher = Sha256::new();
    for (i, part) in parts.iter().enumerate() {
        if i > 0 {
            hasher.update([0x1f]);
        }
        hasher.update(part.as_bytes());
    }
    let digest = hasher.finalize();
    hex::encode(&digest[..8])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSentence {
    pub id: String,
    pub text: String,
    pub aspect_id: String,
    pub label_index: usize,
    /// Canonical attribute name, or the fine-grained description for grained records.
    pub label_text: String,
    pub provenance: Provenance,
    pub source_dataset: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub meta: BTreeMap<String, String>,
}

impl LabeledSentence {
    /// Checks the record against the registry invariants.
    pub fn validate(&self, registry: &AspectRegistry) -> Result<()> {
        if self.text.trim().is_empty() {
            return Err(Error::Contract(format!("record {} has empty text", self.id)));
        }
        let aspect = registry.require(&self.aspect_id)?;
        let attribute = aspect.attribute(self.label_index).ok_or_else(|| {
            Error::Contract(format!(
                "record {} label index {} out of range for `{}`",
                self.id, self.label_index, self.aspect_id
            ))
        })?;
        match self.provenance {
            Provenance::Universal => Err(Error::Contract(format!(
                "record {} cannot carry universal provenance",
                self.id
            ))),
            Provenance::Grained if self.label_text.trim().is_empty() => Err(Error::Contract(
                format!("grained record {} has an empty description", self.id),
            )),
            Provenance::Grained => Ok(()),
            _ if self.label_text != attribute.name => Err(Error::Contract(format!(
                "record {} label text `{}` is not the canonical name `{}`",
                self.id, self.label_text, attribute.name
            ))),
            _ => Ok(()),
        }
    }

    /// Id of the record this one was derived from, or its own id.
    pub fn source_id(&self) -> &str {
        self.meta.get("source_id").map_or(self.id.as_str(), String::as_str)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aspect::{AspectDef, AttributeDef};
    use alloc::string::ToString;
    use alloc::vec;

    fn registry() -> AspectRegistry {
        AspectRegistry::new(&[AspectDef {
            id: "sentiment".into(),
            display_name: "Sentiment".into(),
            description: None,
            attributes: vec![
                AttributeDef { name: "positive".into(), aliases: vec![], description: None },
                AttributeDef { name: "negative".into(), aliases: vec![], description: None },
            ],
            rewrite_target: true,
        }])
        .unwrap()
    }

    fn sentence(provenance: Provenance, label_text: &str) -> LabeledSentence {
        LabeledSentence {
            id: record_id(&["imdb", "0"]),
            text: "worst two hours of my life".into(),
            aspect_id: "sentiment".into(),
            label_index: 2,
            label_text: label_text.into(),
            provenance,
            source_dataset: "imdb".into(),
            meta: BTreeMap::new(),
        }
    }

    #[test]
    fn ids_are_stable_and_separated() {
        assert_eq!(record_id(&["imdb", "0"]), record_id(&["imdb", "0"]));
        assert_ne!(record_id(&["imdb", "10"]), record_id(&["imdb1", "0"]));
        assert_eq!(record_id(&["a"]).len(), 16);
    }

    #[test]
    fn validate_label_text_rules() {
        let reg = registry();
        assert!(sentence(Provenance::Original, "negative").validate(&reg).is_ok());
        assert!(sentence(Provenance::Original, "disappointed").validate(&reg).is_err());
        assert!(sentence(Provenance::Grained, "disappointed").validate(&reg).is_ok());
        let mut blank = sentence(Provenance::Original, "negative");
        blank.text = "  ".to_string();
        assert!(blank.validate(&reg).is_err());
        let mut bad = sentence(Provenance::Cross, "negative");
        bad.label_index = 3;
        assert!(bad.validate(&reg).is_err());
    }
}
