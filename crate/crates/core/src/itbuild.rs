//! Instruction-tuning instances: instruction = task + controls + prefix
//! clause, response = the controlled sentence.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::aspect::AspectRegistry;
use crate::error::{Error, Result};
use crate::prompt::{Template, DEFAULT_INSTRUCTION_TEMPLATE, DEFAULT_TASK};
use crate::record::{LabeledSentence, Provenance};
use crate::text::first_tokens;

pub const PREFIX_WORDS: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItInstance {
    pub instruction: String,
    pub response: String,
    /// `(aspect_id, label_text)` in registry aspect order.
    pub controls: Vec<(String, String)>,
    pub prefix: String,
    pub provenance: Provenance,
    pub source_id: String,
}

/// First `min(3, tokens)` whitespace tokens joined by single spaces.
pub fn extract_prefix(text: &str) -> Result<String> {
    let tokens = first_tokens(text, PREFIX_WORDS);
    if tokens.is_empty() {
        return Err(Error::Contract("cannot take a prefix of empty text".into()));
    }
    Ok(tokens.join(" "))
}

#[derive(Debug, Clone)]
pub struct InstructionTemplate {
    template: Template,
    task: String,
}

impl InstructionTemplate {
    pub fn new(source: &str, task: &str) -> Result<Self> {
        let template = Template::parse(source)?;
        template.require(&["controls", "prefix"])?;
        Ok(Self { template, task: task.to_string() })
    }

    pub fn render(&self, registry: &AspectRegistry, controls: &[(String, String)], prefix: &str) -> Result<String> {
        let mut parts = Vec::with_capacity(controls.len());
        for (aspect_id, label) in controls {
            let aspect = registry.require(aspect_id)?;
            parts.push(format!("{}: {}", aspect.display_name, label));
        }
        let mut vars = BTreeMap::new();
        vars.insert("task", self.task.clone());
        vars.insert("controls", parts.join(", "));
        vars.insert("prefix", prefix.to_string());
        self.template.render(&vars)
    }
}

impl Default for InstructionTemplate {
    fn default() -> Self {
        Self::new(DEFAULT_INSTRUCTION_TEMPLATE, DEFAULT_TASK).expect("default instruction template is valid")
    }
}

/// Instance for a single labeled record; its label is the only control.
pub fn build_instance(
    record: &LabeledSentence,
    registry: &AspectRegistry,
    template: &InstructionTemplate,
) -> Result<ItInstance> {
    let controls = alloc::vec![(record.aspect_id.clone(), record.label_text.clone())];
    build_with_controls(record, controls, registry, template)
}

/// Instance carrying several controls (e.g. an original label joined with a
/// cross label for the same sentence). Controls are reordered to registry order.
pub fn build_with_controls(
    record: &LabeledSentence,
    mut controls: Vec<(String, String)>,
    registry: &AspectRegistry,
    template: &InstructionTemplate,
) -> Result<ItInstance> {
    if record.text.trim().is_empty() {
        return Err(Error::Contract(format!("record {} has empty text", record.id)));
    }
    for (aspect_id, _) in &controls {
        registry.require(aspect_id)?;
    }
    controls.sort_by_key(|(a, _)| registry.position(a));
    let prefix = extract_prefix(&record.text)?;
    if !record.text.starts_with(&prefix) {
        return Err(Error::Contract(format!(
            "record {} text is not whitespace-normalized; response would not start with its prefix",
            record.id
        )));
    }
    let instruction = template.render(registry, &controls, &prefix)?;
    Ok(ItInstance {
        instruction,
        response: record.text.clone(),
        controls,
        prefix,
        provenance: record.provenance,
        source_id: record.id.clone(),
    })
}
