//! Deterministic rule-based stand-ins for the augmenter LLM, the embedder,
//! the trained model and the attribute classifiers.
//!
//! All behaviour is driven by a keyword lexicon (aspect -> attribute ->
//! keywords) and the request tag, so recordings made with these services are
//! reproducible and the metrics they induce can be computed by hand.
//!
//! * `cross/<aspect>/<id>/<repeat>`: answers the unique attribute whose
//!   keywords occur in the marked sentence (varying case and punctuation per
//!   repeat), the aspect default when none occur, `None` when there is no
//!   default, and a different candidate per repeat when several occur.
//! * `grained/<aspect>/<id>`: answers the first keyword of the aspect found in
//!   the sentence, `None` otherwise.
//! * `rewrite/<aspect>/<index>/<id>`: rejects, answers a too-short sentence,
//!   copies the input, or substitutes target keywords, chosen by a hash of the id.
//! * `eval/<combination>/<prefix>/<repeat>`: writes the prefix followed by one
//!   keyword per aspect, where each aspect's attribute follows a policy:
//!   `obey`, `rotate` (commanded index shifted by the repeat index),
//!   `follow:<aspect>` (copies another aspect's emitted index) or
//!   `fixed:<attribute>`.

use std::collections::BTreeMap;

use mctg_core::prompt::extract_marked_sentence;
use mctg_core::{AspectRegistry, ClassifierOutput};
use serde::{Deserialize, Serialize};

use super::{ChatBackend, ChatRequest, ClassifierBackend, EmbedBackend, ServiceError};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScriptedConfig {
    /// aspect id -> attribute name -> keywords.
    pub lexicon: BTreeMap<String, BTreeMap<String, Vec<String>>>,
    /// aspect id -> attribute assumed when no keyword matches.
    pub defaults: BTreeMap<String, String>,
    /// aspect id -> generation policy of the scripted model (default `obey`).
    pub model: BTreeMap<String, String>,
    pub embed_dim: usize,
}

impl Default for ScriptedConfig {
    fn default() -> Self {
        Self { lexicon: BTreeMap::new(), defaults: BTreeMap::new(), model: BTreeMap::new(), embed_dim: 64 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Policy {
    Obey,
    Rotate,
    Follow(usize),
    Fixed(usize),
}

#[derive(Debug, Clone)]
struct AspectLexicon {
    id: String,
    size: usize,
    /// keywords per attribute, attribute order, lowercase
    keywords: Vec<Vec<String>>,
    names: Vec<String>,
    default: Option<usize>,
    policy: Policy,
}

/// Compiled lexicon shared by the scripted services.
#[derive(Debug, Clone)]
pub struct Lexicon {
    aspects: Vec<AspectLexicon>,
}

impl Lexicon {
    pub fn new(registry: &AspectRegistry, cfg: &ScriptedConfig) -> Result<Self> {
        for id in cfg.lexicon.keys().chain(cfg.defaults.keys()).chain(cfg.model.keys()) {
            registry.require(id)?;
        }
        let mut aspects = Vec::new();
        for aspect in registry.aspects() {
            let mut keywords = vec![Vec::new(); aspect.len()];
            if let Some(words) = cfg.lexicon.get(&aspect.id) {
                for (name, kws) in words {
                    let attr = aspect.find(name).ok_or_else(|| {
                        Error::Config(format!("scripted lexicon: unknown attribute `{name}` of `{}`", aspect.id))
                    })?;
                    keywords[attr.index - 1] = kws.iter().map(|k| k.to_lowercase()).collect();
                }
            }
            let default = match cfg.defaults.get(&aspect.id) {
                Some(name) => Some(
                    aspect
                        .find(name)
                        .ok_or_else(|| Error::Config(format!("scripted default `{name}` not in `{}`", aspect.id)))?
                        .index,
                ),
                None => None,
            };
            let policy = match cfg.model.get(&aspect.id).map(String::as_str) {
                None | Some("obey") => Policy::Obey,
                Some("rotate") => Policy::Rotate,
                Some(p) if p.starts_with("follow:") => {
                    let other = &p["follow:".len()..];
                    Policy::Follow(
                        registry
                            .position(other)
                            .ok_or_else(|| Error::Config(format!("scripted policy follows unknown aspect `{other}`")))?,
                    )
                }
                Some(p) if p.starts_with("fixed:") => {
                    let name = &p["fixed:".len()..];
                    Policy::Fixed(
                        aspect
                            .find(name)
                            .ok_or_else(|| Error::Config(format!("scripted policy: unknown attribute `{name}`")))?
                            .index,
                    )
                }
                Some(p) => return Err(Error::Config(format!("unknown scripted model policy `{p}`"))),
            };
            aspects.push(AspectLexicon {
                id: aspect.id.clone(),
                size: aspect.len(),
                keywords,
                names: aspect.attributes.iter().map(|a| a.name.clone()).collect(),
                default,
                policy,
            });
        }
        for a in &aspects {
            if let Policy::Follow(target) = a.policy {
                if matches!(aspects[target].policy, Policy::Follow(_)) {
                    return Err(Error::Config(format!("scripted policy of `{}` follows a follower", a.id)));
                }
            }
        }
        Ok(Self { aspects })
    }

    fn aspect(&self, id: &str) -> Option<&AspectLexicon> {
        self.aspects.iter().find(|a| a.id == id)
    }

    /// 1-based attributes with at least one keyword in `text`.
    fn matches(&self, aspect: &AspectLexicon, text: &str) -> Vec<usize> {
        let words = words(text);
        (0..aspect.size)
            .filter(|&i| aspect.keywords[i].iter().any(|k| words.contains(k)))
            .map(|i| i + 1)
            .collect()
    }

    fn keyword_counts(&self, aspect: &AspectLexicon, text: &str) -> Vec<f64> {
        let words = words(text);
        aspect
            .keywords
            .iter()
            .map(|kws| words.iter().filter(|w| kws.contains(w)).count() as f64)
            .collect()
    }
}

fn words(text: &str) -> Vec<String> {
    text.split(|c: char| !(c.is_alphanumeric() || c == '-' || c == '\''))
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect()
}

fn fnv1a(s: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in s.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn decode(msg: impl Into<String>) -> ServiceError {
    ServiceError::Decode(msg.into())
}

pub struct ScriptedChat {
    lexicon: Lexicon,
}

impl ScriptedChat {
    pub fn new(lexicon: Lexicon) -> Self {
        Self { lexicon }
    }

    fn sentence<'a>(&self, req: &'a ChatRequest) -> Result<&'a str, ServiceError> {
        extract_marked_sentence(req.user_content()).ok_or_else(|| decode("prompt has no marked sentence"))
    }

    fn lex(&self, aspect: &str) -> Result<&AspectLexicon, ServiceError> {
        self.lexicon.aspect(aspect).ok_or_else(|| decode(format!("unknown aspect `{aspect}`")))
    }

    fn cross(&self, req: &ChatRequest, aspect: &str, repeat: usize) -> Result<String, ServiceError> {
        let lex = self.lex(aspect)?;
        let mut found = self.lexicon.matches(lex, self.sentence(req)?);
        if found.is_empty() {
            found.extend(lex.default);
        }
        let name = match found.len() {
            0 => return Ok("None".into()),
            1 => lex.names[found[0] - 1].clone(),
            n => lex.names[found[(repeat + n - 1) % n] - 1].clone(),
        };
        Ok(match repeat % 3 {
            1 => {
                let mut c = name.chars();
                c.next().map(|f| f.to_uppercase().chain(c).collect()).unwrap_or_default()
            }
            2 => format!("The label is:\n{name}"),
            _ => format!("{}.", name.to_uppercase()),
        })
    }

    fn grained(&self, req: &ChatRequest, aspect: &str, id: &str) -> Result<String, ServiceError> {
        let lex = self.lex(aspect)?;
        let hit = words(self.sentence(req)?)
            .into_iter()
            .find(|w| lex.keywords.iter().any(|kws| kws.contains(w)));
        Ok(match hit {
            Some(word) if fnv1a(id) % 2 == 0 => format!("{word}."),
            Some(word) => word,
            None => "None".into(),
        })
    }

    fn rewrite(&self, req: &ChatRequest, aspect: &str, index: usize, id: &str) -> Result<String, ServiceError> {
        let lex = self.lex(aspect)?;
        let sentence = self.sentence(req)?;
        let h = fnv1a(id);
        match h % 20 {
            0 => return Ok("None".into()),
            1 => return Ok("Too short.".into()),
            2 => return Ok(sentence.to_string()),
            _ => {}
        }
        let targets = lex
            .keywords
            .get(index.wrapping_sub(1))
            .filter(|k| !k.is_empty())
            .ok_or_else(|| decode(format!("no keywords for attribute {index} of `{aspect}`")))?;
        let all_keywords: Vec<&String> = lex.keywords.iter().flatten().collect();
        let mut kept: Vec<&str> = sentence
            .split_whitespace()
            .filter(|w| !all_keywords.iter().any(|k| words(w).contains(k)))
            .collect();
        let drop = (h / 20 % 5) as usize;
        kept.truncate(kept.len().saturating_sub(drop).max(3));
        let keyword = &targets[(h / 100) as usize % targets.len()];
        let extra = (h / 1000 % 3) as usize;
        let mut text = kept.join(" ");
        text.push_str(&format!(", and it was {keyword}"));
        for _ in 0..extra {
            text.push_str(&format!(" and {keyword}"));
        }
        Ok(format!("Rewritten sentence:\n{text}."))
    }

    fn generate(&self, req: &ChatRequest, combination: &str, repeat: usize) -> Result<String, ServiceError> {
        let commanded: Vec<usize> = combination
            .split('-')
            .map(|s| s.parse().map_err(|_| decode(format!("bad combination `{combination}`"))))
            .collect::<Result<_, _>>()?;
        let aspects = &self.lexicon.aspects;
        if commanded.len() != aspects.len() {
            return Err(decode("combination length does not match the registry"));
        }
        let mut emitted = vec![0usize; aspects.len()];
        for (i, a) in aspects.iter().enumerate() {
            emitted[i] = match a.policy {
                Policy::Obey => commanded[i],
                Policy::Rotate => (commanded[i] - 1 + repeat) % a.size + 1,
                Policy::Fixed(idx) => idx,
                Policy::Follow(_) => 0,
            };
        }
        for (i, a) in aspects.iter().enumerate() {
            if let Policy::Follow(target) = a.policy {
                emitted[i] = (emitted[target] - 1) % a.size + 1;
            }
        }
        let content = req.user_content();
        let prefix = content
            .split_once("starting with \"")
            .and_then(|(_, rest)| rest.split_once('"'))
            .map_or("", |(p, _)| p);
        let mut out = prefix.to_string();
        for (i, a) in aspects.iter().enumerate() {
            if let Some(word) = a.keywords[emitted[i] - 1].first() {
                out.push(' ');
                out.push_str(word);
            }
        }
        out.push_str(" news today.");
        Ok(out.trim_start().to_string())
    }
}

impl ChatBackend for ScriptedChat {
    fn complete(&self, req: &ChatRequest) -> Result<String, ServiceError> {
        let parts: Vec<&str> = req.request_tag.split('/').collect();
        let num = |s: &str| s.parse::<usize>().map_err(|_| decode(format!("bad number in tag `{}`", req.request_tag)));
        match parts.as_slice() {
            ["cross", aspect, _id, repeat] => self.cross(req, aspect, num(repeat)?),
            ["grained", aspect, id] => self.grained(req, aspect, id),
            ["rewrite", aspect, index, id] => self.rewrite(req, aspect, num(index)?, id),
            ["eval", combination, _prefix, repeat] => self.generate(req, combination, num(repeat)?),
            _ => Err(decode(format!("scripted chat cannot answer tag `{}`", req.request_tag))),
        }
    }
}

/// Hashed bag-of-words embedding: component 0 is a constant bias, every
/// lowercase word adds one to bucket `1 + fnv1a(word) mod (dim - 1)`.
pub struct ScriptedEmbedder {
    dim: usize,
}

impl ScriptedEmbedder {
    pub fn new(dim: usize) -> Self {
        Self { dim: dim.max(2) }
    }
}

impl EmbedBackend for ScriptedEmbedder {
    fn embed(&self, _model: &str, text: &str) -> Result<Vec<f64>, ServiceError> {
        let mut v = vec![0.0; self.dim];
        v[0] = 1.0;
        for w in words(text) {
            v[1 + (fnv1a(&w) % (self.dim as u64 - 1)) as usize] += 1.0;
        }
        Ok(v)
    }
}

/// Keyword-count classifier. Answers the normalized keyword counts as a
/// distribution, the aspect default when nothing matches, or a uniform
/// distribution when there is no default.
pub struct ScriptedClassifier {
    lexicon: Lexicon,
}

impl ScriptedClassifier {
    pub fn new(lexicon: Lexicon) -> Self {
        Self { lexicon }
    }
}

impl ClassifierBackend for ScriptedClassifier {
    fn classify(&self, aspect_id: &str, text: &str) -> Result<ClassifierOutput, ServiceError> {
        let lex = self.lexicon.aspect(aspect_id).ok_or_else(|| decode(format!("unknown aspect `{aspect_id}`")))?;
        let counts = self.lexicon.keyword_counts(lex, text);
        let total: f64 = counts.iter().sum();
        Ok(match (total, lex.default) {
            (t, _) if t > 0.0 => ClassifierOutput::Distribution { distribution: counts.iter().map(|c| c / t).collect() },
            (_, Some(label_index)) => ClassifierOutput::LabelIndex { label_index },
            (_, None) => ClassifierOutput::Distribution { distribution: vec![1.0 / lex.size as f64; lex.size] },
        })
    }
}
