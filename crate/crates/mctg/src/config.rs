//! Pipeline configuration (TOML), validation, and the resolved-config hash
//! that names run directories.
//!
//! Relative paths are resolved against the directory holding the config file.
//! Environment variables override endpoints and secrets only:
//! `MCTG_CHAT_BASE_URL`, `MCTG_CHAT_API_KEY`, `MCTG_EMBED_BASE_URL`,
//! `MCTG_EMBED_API_KEY`, `MCTG_EVAL_BASE_URL`, `MCTG_EVAL_API_KEY`.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use mctg_core::prompt::{PromptSet, DEFAULT_INSTRUCTION_TEMPLATE, DEFAULT_TASK};
use mctg_core::{
    enumerate_combinations, AspectDef, AspectRegistry, ControlCombination, FilterPolicy, InstructionTemplate,
    LogBase, MixEntry, MixtureSpec, Provenance, RejectTokens, Restriction,
};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::services::limit::RetryPolicy;
use crate::services::scripted::{Lexicon, ScriptedConfig};
use crate::services::Mode;

pub const ENV_PREFIX: &str = "MCTG";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    #[serde(default = "default_run_label")]
    pub run_label: String,
    /// Default service mode; `--mode` wins. Not part of the config hash.
    #[serde(default, skip_serializing)]
    pub mode: Option<Mode>,
    pub aspects: Vec<AspectDef>,
    #[serde(default)]
    pub labels: LabelsConfig,
    #[serde(default)]
    pub datasets: Vec<DatasetSpec>,
    #[serde(default)]
    pub services: ServicesConfig,
    #[serde(default)]
    pub augment: AugmentConfig,
    #[serde(default)]
    pub filter: FilterPolicy,
    #[serde(default)]
    pub templates: TemplatesConfig,
    #[serde(default)]
    pub it: ItConfig,
    #[serde(default)]
    pub mix: MixConfig,
    #[serde(default)]
    pub eval: EvalConfig,
}

fn default_run_label() -> String {
    "run".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LabelsConfig {
    pub reject_tokens: Vec<String>,
}

impl Default for LabelsConfig {
    fn default() -> Self {
        Self { reject_tokens: RejectTokens::default().iter().map(String::from).collect() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetFormat {
    Csv,
    Tsv,
    Jsonl,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    pub name: String,
    pub path: PathBuf,
    pub format: DatasetFormat,
    pub text_field: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label_field: Option<String>,
    /// Multi-label columns collapsed to "1" when any is nonzero, else "0".
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub label_fields: Vec<String>,
    pub aspect_id: String,
    /// raw label value -> 1-based attribute index
    pub label_mapping: BTreeMap<String, usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_cap: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    #[default]
    Http,
    Scripted,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Endpoint {
    #[serde(default)]
    pub base_url: String,
    #[serde(default, skip_serializing)]
    pub api_key: Option<String>,
    #[serde(default = "default_model")]
    pub model: String,
}

fn default_model() -> String {
    "default".into()
}

impl Default for Endpoint {
    fn default() -> Self {
        Self { base_url: String::new(), api_key: None, model: default_model() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifierEndpoint {
    pub url: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServicesConfig {
    pub backend: BackendKind,
    pub max_in_flight: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rate_per_sec: Option<f64>,
    pub timeout_secs: u64,
    pub retry: RetryPolicy,
    pub chat: Endpoint,
    pub embed: Endpoint,
    pub eval_model: Endpoint,
    pub classifiers: BTreeMap<String, ClassifierEndpoint>,
    pub scripted: ScriptedConfig,
}

impl Default for ServicesConfig {
    fn default() -> Self {
        Self {
            backend: BackendKind::Http,
            max_in_flight: 8,
            rate_per_sec: None,
            timeout_secs: 120,
            retry: RetryPolicy::default(),
            chat: Endpoint::default(),
            embed: Endpoint::default(),
            eval_model: Endpoint::default(),
            classifiers: BTreeMap::new(),
            scripted: ScriptedConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OnError {
    /// Abort the stage on the first failing record.
    #[default]
    Fail,
    /// Drop the record and count it under `errors` in the stage report.
    Skip,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrossPair {
    pub source: String,
    pub target: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentConfig {
    /// ICL demonstrations per attribute.
    pub k: usize,
    pub repeats: usize,
    pub cross_temperature: f64,
    pub grained_temperature: f64,
    pub rewrite_temperature: f64,
    pub max_tokens: u32,
    /// Defaults to every ordered pair of distinct aspects.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cross_pairs: Option<Vec<CrossPair>>,
    /// Defaults to every aspect with `rewrite_target = true`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rewrite_targets: Option<Vec<String>>,
    /// Seeded caps on the records fed to each cross pair, grained aspect and
    /// rewrite target.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cross_cap: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grained_cap: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rewrite_cap: Option<usize>,
    pub on_error: OnError,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            k: 2,
            repeats: mctg_core::vote::CONSISTENCY_REPEATS,
            cross_temperature: 0.7,
            grained_temperature: 0.7,
            rewrite_temperature: 0.7,
            max_tokens: 256,
            cross_pairs: None,
            rewrite_targets: None,
            cross_cap: None,
            grained_cap: None,
            rewrite_cap: None,
            on_error: OnError::Fail,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TemplatesConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cross: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grained: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rewrite: Option<PathBuf>,
    /// Instruction template shared by originals and any provenance without its own.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub instruction: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub instruction_cross: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub instruction_grained: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub instruction_rewrite: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CrossControls {
    /// The source's original label plus the cross label.
    #[default]
    Joined,
    /// The cross label only.
    Single,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ItConfig {
    pub task: String,
    pub cross_controls: CrossControls,
}

impl Default for ItConfig {
    fn default() -> Self {
        Self { task: DEFAULT_TASK.into(), cross_controls: CrossControls::Joined }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoolSource {
    pub name: String,
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixtureConfig {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub entries: Vec<MixEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MixConfig {
    /// Universal instruction/response pools, opaque JSONL.
    pub pools: Vec<PoolSource>,
    pub mixtures: Vec<MixtureConfig>,
    pub parity_check: bool,
}

impl Default for MixConfig {
    fn default() -> Self {
        Self { pools: Vec::new(), mixtures: Vec::new(), parity_check: true }
    }
}

/// Pool names produced by `build-it`.
pub const IT_POOLS: [(&str, Provenance); 4] = [
    ("vanilla", Provenance::Original),
    ("cross", Provenance::Cross),
    ("grained", Provenance::Grained),
    ("rewrite", Provenance::Rewrite),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// One generation prompt per line.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub prefixes: Option<PathBuf>,
    pub repeats: usize,
    pub temperature: f64,
    pub max_tokens: u32,
    /// aspect id -> allowed attribute names
    pub restriction: BTreeMap<String, Vec<String>>,
    pub log_base: LogBase,
    /// Column label of this run in the report tables; defaults to the run label.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub baseline_name: Option<String>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            prefixes: None,
            repeats: 10,
            temperature: 0.2,
            max_tokens: 128,
            restriction: BTreeMap::new(),
            log_base: LogBase::Nats,
            baseline_name: None,
        }
    }
}

/// A parsed config together with the directory its relative paths refer to.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: PipelineConfig,
    pub base_dir: PathBuf,
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("cannot serialize config: {e}")))
    }

    /// SHA-256 of the resolved TOML (secrets and mode excluded).
    pub fn hash(&self) -> Result<String> {
        Ok(hex::encode(Sha256::digest(self.to_toml()?.as_bytes())))
    }

    pub fn registry(&self) -> Result<AspectRegistry> {
        Ok(AspectRegistry::new(&self.aspects)?)
    }

    pub fn reject_tokens(&self) -> RejectTokens {
        RejectTokens::new(self.labels.reject_tokens.iter())
    }

    pub fn apply_env(&mut self, lookup: impl Fn(&str) -> Option<String>) {
        let set = |endpoint: &mut Endpoint, name: &str| {
            if let Some(url) = lookup(&format!("{ENV_PREFIX}_{name}_BASE_URL")) {
                endpoint.base_url = url;
            }
            if let Some(key) = lookup(&format!("{ENV_PREFIX}_{name}_API_KEY")) {
                endpoint.api_key = Some(key);
            }
        };
        set(&mut self.services.chat, "CHAT");
        set(&mut self.services.embed, "EMBED");
        set(&mut self.services.eval_model, "EVAL");
    }

    pub fn cross_pairs(&self) -> Vec<CrossPair> {
        match &self.augment.cross_pairs {
            Some(pairs) => pairs.clone(),
            None => {
                let ids: Vec<&String> = self.aspects.iter().map(|a| &a.id).collect();
                let mut pairs = Vec::new();
                for s in &ids {
                    for t in &ids {
                        if s != t {
                            pairs.push(CrossPair { source: (*s).clone(), target: (*t).clone() });
                        }
                    }
                }
                pairs
            }
        }
    }

    pub fn rewrite_targets(&self) -> Vec<String> {
        match &self.augment.rewrite_targets {
            Some(t) => t.clone(),
            None => self.aspects.iter().filter(|a| a.rewrite_target).map(|a| a.id.clone()).collect(),
        }
    }

    pub fn restriction(&self, registry: &AspectRegistry) -> Result<Restriction> {
        let mut out = Restriction::new();
        for (aspect_id, names) in &self.eval.restriction {
            let aspect = registry.require(aspect_id)?;
            let mut set = BTreeSet::new();
            for name in names {
                let attr = aspect
                    .find(name)
                    .ok_or_else(|| Error::Config(format!("eval restriction: `{name}` is not an attribute of `{aspect_id}`")))?;
                set.insert(attr.index);
            }
            out.insert(aspect_id.clone(), set);
        }
        Ok(out)
    }

    pub fn combinations(&self, registry: &AspectRegistry) -> Result<Vec<ControlCombination>> {
        let restriction = self.restriction(registry)?;
        Ok(enumerate_combinations(registry, Some(&restriction))?)
    }

    pub fn mixture_specs(&self) -> Vec<MixtureSpec> {
        self.mix
            .mixtures
            .iter()
            .map(|m| MixtureSpec {
                output_name: m.name.clone(),
                seed: m.seed.unwrap_or_else(|| mctg_core::rng::derive_seed(self.seed, &format!("mix/{}", m.name))),
                entries: m.entries.clone(),
            })
            .collect()
    }
}

impl LoadedConfig {
    /// Reads the config and applies environment overrides.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config = PipelineConfig::from_toml(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        config.apply_env(|k| std::env::var(k).ok());
        let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(Self { config, base_dir })
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    fn read(&self, path: &Path) -> Result<String> {
        let full = self.resolve(path);
        std::fs::read_to_string(&full).map_err(|e| Error::io(full, e))
    }

    fn template_text(&self, path: &Option<PathBuf>, default: &str) -> Result<String> {
        match path {
            Some(p) => self.read(p),
            None => Ok(default.to_string()),
        }
    }

    pub fn prompts(&self) -> Result<PromptSet> {
        use mctg_core::prompt::{DEFAULT_CROSS_TEMPLATE, DEFAULT_GRAINED_TEMPLATE, DEFAULT_REWRITE_TEMPLATE};
        let t = &self.config.templates;
        Ok(PromptSet::new(
            &self.template_text(&t.cross, DEFAULT_CROSS_TEMPLATE)?,
            &self.template_text(&t.grained, DEFAULT_GRAINED_TEMPLATE)?,
            &self.template_text(&t.rewrite, DEFAULT_REWRITE_TEMPLATE)?,
        )?)
    }

    /// Instruction template for records of the given provenance.
    pub fn instruction_template(&self, provenance: Provenance) -> Result<InstructionTemplate> {
        let t = &self.config.templates;
        let specific = match provenance {
            Provenance::Cross => &t.instruction_cross,
            Provenance::Grained => &t.instruction_grained,
            Provenance::Rewrite => &t.instruction_rewrite,
            _ => &None,
        };
        let path = if specific.is_some() { specific } else { &t.instruction };
        let text = self.template_text(path, DEFAULT_INSTRUCTION_TEMPLATE)?;
        Ok(InstructionTemplate::new(&text, &self.config.it.task)?)
    }

    pub fn prefixes(&self) -> Result<Vec<String>> {
        let path = self
            .config
            .eval
            .prefixes
            .as_ref()
            .ok_or_else(|| Error::Config("eval.prefixes is not set".into()))?;
        let prefixes: Vec<String> = self
            .read(path)?
            .lines()
            .map(|l| l.trim().to_string())
            .filter(|l| !l.is_empty())
            .collect();
        if prefixes.is_empty() {
            return Err(Error::Config(format!("prefix file {} is empty", path.display())));
        }
        Ok(prefixes)
    }

    /// Checks everything that can be checked without running a stage,
    /// including that every referenced file exists.
    pub fn validate(&self) -> Result<()> {
        let cfg = &self.config;
        let registry = cfg.registry()?;
        let exists = |path: &Path, what: &str| -> Result<()> {
            let full = self.resolve(path);
            if full.is_file() {
                Ok(())
            } else {
                Err(Error::Config(format!("{what}: file {} does not exist", full.display())))
            }
        };

        let mut names = BTreeSet::new();
        for ds in &cfg.datasets {
            if !names.insert(ds.name.as_str()) {
                return Err(Error::Config(format!("duplicate dataset name `{}`", ds.name)));
            }
            let aspect = registry.require(&ds.aspect_id)?;
            exists(&ds.path, &format!("dataset `{}`", ds.name))?;
            if ds.label_field.is_some() == !ds.label_fields.is_empty() {
                return Err(Error::Config(format!(
                    "dataset `{}` needs exactly one of label_field or label_fields",
                    ds.name
                )));
            }
            if ds.label_mapping.is_empty() {
                return Err(Error::Config(format!("dataset `{}` has an empty label_mapping", ds.name)));
            }
            for (raw, &idx) in &ds.label_mapping {
                if aspect.attribute(idx).is_none() {
                    return Err(Error::Config(format!(
                        "dataset `{}` maps `{raw}` to {idx}, outside 1..={}",
                        ds.name,
                        aspect.len()
                    )));
                }
            }
            if ds.sample_cap == Some(0) {
                return Err(Error::Config(format!("dataset `{}`: sample_cap must be > 0", ds.name)));
            }
        }

        let aug = &cfg.augment;
        if aug.repeats != mctg_core::vote::CONSISTENCY_REPEATS {
            return Err(Error::Config(format!(
                "augment.repeats must be {}, got {}",
                mctg_core::vote::CONSISTENCY_REPEATS,
                aug.repeats
            )));
        }
        for (name, t) in [
            ("cross", aug.cross_temperature),
            ("grained", aug.grained_temperature),
            ("rewrite", aug.rewrite_temperature),
            ("eval", cfg.eval.temperature),
        ] {
            if !(t.is_finite() && t >= 0.0) {
                return Err(Error::Config(format!("{name} temperature must be a non-negative number")));
            }
        }
        for cap in [aug.cross_cap, aug.grained_cap, aug.rewrite_cap] {
            if cap == Some(0) {
                return Err(Error::Config("augmentation caps must be > 0".into()));
            }
        }
        for pair in cfg.cross_pairs() {
            registry.require(&pair.source)?;
            registry.require(&pair.target)?;
            if pair.source == pair.target {
                return Err(Error::Config(format!("cross pair {0} -> {0} is not cross-aspect", pair.source)));
            }
        }
        for target in cfg.rewrite_targets() {
            if !registry.require(&target)?.rewrite_target {
                return Err(Error::Config(format!("aspect `{target}` is not a rewrite target")));
            }
        }
        cfg.filter.validate()?;

        let t = &cfg.templates;
        for p in [&t.cross, &t.grained, &t.rewrite, &t.instruction, &t.instruction_cross, &t.instruction_grained, &t.instruction_rewrite]
            .into_iter()
            .flatten()
        {
            exists(p, "template")?;
        }
        self.prompts()?;
        for (_, prov) in IT_POOLS {
            self.instruction_template(prov)?;
        }

        let mut pool_names: BTreeSet<&str> = IT_POOLS.iter().map(|(n, _)| *n).collect();
        for pool in &cfg.mix.pools {
            exists(&pool.path, &format!("pool `{}`", pool.name))?;
            if !pool_names.insert(&pool.name) {
                return Err(Error::Config(format!("pool name `{}` is already taken", pool.name)));
            }
        }
        let mut mixture_names = BTreeSet::new();
        for spec in cfg.mixture_specs() {
            if !mixture_names.insert(spec.output_name.clone()) {
                return Err(Error::Config(format!("duplicate mixture `{}`", spec.output_name)));
            }
            spec.validate()?;
            for entry in &spec.entries {
                if !pool_names.contains(entry.pool.as_str()) {
                    return Err(Error::Config(format!(
                        "mixture `{}` references unknown pool `{}`",
                        spec.output_name, entry.pool
                    )));
                }
            }
        }

        if let Some(p) = &cfg.eval.prefixes {
            exists(p, "eval prefixes")?;
            self.prefixes()?;
        }
        if cfg.eval.repeats == 0 {
            return Err(Error::Config("eval.repeats must be > 0".into()));
        }
        cfg.combinations(&registry)?;

        let s = &cfg.services;
        if s.max_in_flight == 0 {
            return Err(Error::Config("services.max_in_flight must be > 0".into()));
        }
        if matches!(s.rate_per_sec, Some(r) if !(r.is_finite() && r > 0.0)) {
            return Err(Error::Config("services.rate_per_sec must be positive".into()));
        }
        if s.retry.max_attempts == 0 {
            return Err(Error::Config("services.retry.max_attempts must be > 0".into()));
        }
        for aspect in s.classifiers.keys() {
            registry.require(aspect)?;
        }
        if s.backend == BackendKind::Scripted {
            Lexicon::new(&registry, &s.scripted)?;
        }
        Ok(())
    }
}
