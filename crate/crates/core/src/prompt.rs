//! Prompt templates with `{name}` placeholders (`{{` and `}}` are literal
//! braces) and the default augmentation prompts.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::aspect::{Aspect, Attribute};
use crate::error::{Error, Result};
use crate::icl::IclExampleSet;

/// Line label that precedes the sentence under consideration in the default
/// augmentation prompts. Demonstrations use `Text:` so this marker occurs once.
pub const SENTENCE_MARKER: &str = "**Sentence**:";

pub const DEFAULT_CROSS_TEMPLATE: &str = "\
You label sentences for the **{aspect}** aspect. {aspect_description}

**Attributes**
{attributes}

Answer with exactly one attribute name from the list. If no attribute fits the sentence, answer \"None\".

{examples}**Sentence**: {sentence}
**Answer**:";

pub const DEFAULT_GRAINED_TEMPLATE: &str = "\
You describe the **{aspect}** of sentences precisely. {aspect_description}

The sentence below is labeled **{attribute}** ({attribute_description}). Answer with a more specific description of its {aspect} in one to three words. If no more specific description applies, answer \"None\".

**Sentence**: {sentence}
**Description**:";

pub const DEFAULT_REWRITE_TEMPLATE: &str = "\
You rewrite sentences so that they carry a target **{aspect}**. {aspect_description}

**Attributes**
{attributes}

{examples}Rewrite the sentence below so that its {aspect} is **{target_attribute}** ({target_description}). Keep the content where possible and answer with the rewritten sentence only. If it cannot be rewritten, answer \"None\".

**Sentence**: {sentence}
**Rewrite**:";

pub const DEFAULT_INSTRUCTION_TEMPLATE: &str = "\
{task}
Control attributes: {controls}.
Write the text starting with \"{prefix}\".";

pub const DEFAULT_TASK: &str = "Generate a sentence that satisfies every control attribute listed below.";

#[derive(Debug, Clone, PartialEq, Eq)]
enum Segment {
    Literal(String),
    Placeholder(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Template {
    segments: Vec<Segment>,
}

impl Template {
    pub fn parse(source: &str) -> Result<Self> {
        let mut segments = Vec::new();
        let mut literal = String::new();
        let mut chars = source.chars().peekable();
        while let Some(c) = chars.next() {
            match c {
                '{' if chars.peek() == Some(&'{') => {
                    chars.next();
                    literal.push('{');
                }
                '}' if chars.peek() == Some(&'}') => {
                    chars.next();
                    literal.push('}');
                }
                '{' => {
                    let mut name = String::new();
                    loop {
                        match chars.next() {
                            Some('}') => break,
                            Some(ch) if ch.is_ascii_alphanumeric() || ch == '_' => name.push(ch),
                            Some(ch) => {
                                return Err(Error::Config(format!(
                                    "invalid character `{ch}` in template placeholder"
                                )))
                            }
                            None => return Err(Error::Config("unclosed `{` in template".into())),
                        }
                    }
                    if name.is_empty() {
                        return Err(Error::Config("empty placeholder `{}` in template".into()));
                    }
                    if !literal.is_empty() {
                        segments.push(Segment::Literal(core::mem::take(&mut literal)));
                    }
                    segments.push(Segment::Placeholder(name));
                }
                '}' => return Err(Error::Config("unmatched `}` in template".into())),
                _ => literal.push(c),
            }
        }
        if !literal.is_empty() {
            segments.push(Segment::Literal(literal));
        }
        Ok(Self { segments })
    }

    pub fn placeholders(&self) -> BTreeSet<&str> {
        self.segments
            .iter()
            .filter_map(|s| match s {
                Segment::Placeholder(n) => Some(n.as_str()),
                Segment::Literal(_) => None,
            })
            .collect()
    }

    /// Fails with a configuration error naming the first missing placeholder.
    pub fn require(&self, names: &[&str]) -> Result<()> {
        let present = self.placeholders();
        match names.iter().find(|n| !present.contains(*n)) {
            Some(missing) => Err(Error::Config(format!("template is missing placeholder `{{{missing}}}`"))),
            None => Ok(()),
        }
    }

    pub fn render(&self, vars: &BTreeMap<&str, String>) -> Result<String> {
        let mut out = String::new();
        for segment in &self.segments {
            match segment {
                Segment::Literal(s) => out.push_str(s),
                Segment::Placeholder(name) => match vars.get(name.as_str()) {
                    Some(v) => out.push_str(v),
                    None => {
                        return Err(Error::Config(format!("no value for template placeholder `{{{name}}}`")))
                    }
                },
            }
        }
        Ok(out)
    }
}

/// The three augmentation prompt templates.
#[derive(Debug, Clone)]
pub struct PromptSet {
    pub cross: Template,
    pub grained: Template,
    pub rewrite: Template,
}

impl PromptSet {
    pub fn new(cross: &str, grained: &str, rewrite: &str) -> Result<Self> {
        let cross = Template::parse(cross)?;
        cross.require(&["attributes", "sentence"])?;
        let grained = Template::parse(grained)?;
        grained.require(&["attribute", "sentence"])?;
        let rewrite = Template::parse(rewrite)?;
        rewrite.require(&["target_attribute", "sentence"])?;
        Ok(Self { cross, grained, rewrite })
    }

    pub fn defaults() -> Self {
        Self::new(DEFAULT_CROSS_TEMPLATE, DEFAULT_GRAINED_TEMPLATE, DEFAULT_REWRITE_TEMPLATE)
            .expect("default templates are valid")
    }

    pub fn cross_prompt(&self, target: &Aspect, icl: &IclExampleSet, sentence: &str) -> Result<String> {
        let mut vars = aspect_vars(target);
        vars.insert("examples", render_examples(icl, true));
        vars.insert("sentence", sentence.to_string());
        self.cross.render(&vars)
    }

    pub fn grained_prompt(&self, aspect: &Aspect, attribute: &Attribute, sentence: &str) -> Result<String> {
        let mut vars = aspect_vars(aspect);
        vars.insert("attribute", attribute.name.clone());
        vars.insert("attribute_description", attribute.describe().to_string());
        vars.insert("sentence", sentence.to_string());
        self.grained.render(&vars)
    }

    pub fn rewrite_prompt(
        &self,
        aspect: &Aspect,
        target: &Attribute,
        icl: &IclExampleSet,
        sentence: &str,
    ) -> Result<String> {
        let mut vars = aspect_vars(aspect);
        vars.insert("examples", render_examples(icl, false));
        vars.insert("target_attribute", target.name.clone());
        vars.insert("target_description", target.describe().to_string());
        vars.insert("sentence", sentence.to_string());
        self.rewrite.render(&vars)
    }
}

fn aspect_vars(aspect: &Aspect) -> BTreeMap<&'static str, String> {
    let mut vars = BTreeMap::new();
    vars.insert("aspect", aspect.display_name.clone());
    vars.insert("aspect_description", aspect.describe().to_string());
    let attributes: Vec<String> = aspect
        .attributes
        .iter()
        .map(|a| format!("- {}: {}", a.name, a.describe()))
        .collect();
    vars.insert("attributes", attributes.join("\n"));
    vars
}

fn render_examples(icl: &IclExampleSet, with_answer: bool) -> String {
    let mut out = String::new();
    for demo in icl.iter() {
        if with_answer {
            out.push_str(&format!("**Example**\nText: {}\nAnswer: {}\n\n", demo.text, demo.attribute));
        } else {
            out.push_str(&format!("**Example** ({})\nText: {}\n\n", demo.attribute, demo.text));
        }
    }
    out
}

/// Text following the last [`SENTENCE_MARKER`] up to the end of that line.
pub fn extract_marked_sentence(prompt: &str) -> Option<&str> {
    let start = prompt.rfind(SENTENCE_MARKER)? + SENTENCE_MARKER.len();
    let rest = &prompt[start..];
    Some(rest.lines().next().unwrap_or("").trim())
}
