//! A run directory and the shared state every stage needs: the resolved
//! configuration, the aspect registry, the worker pool and the services.

use std::path::{Path, PathBuf};
use std::sync::{Arc, OnceLock};
use std::time::Duration;

use mctg_core::AspectRegistry;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{BackendKind, LoadedConfig};
use crate::error::{Error, Result};
use crate::services::cassette::Cassette;
use crate::services::http::{HttpChat, HttpClassifier, HttpEmbed};
use crate::services::limit::Limiter;
use crate::services::scripted::{Lexicon, ScriptedChat, ScriptedClassifier, ScriptedEmbedder};
use crate::services::{Backends, Mode, Services};
use crate::jsonl;

pub const RESOLVED_CONFIG: &str = "config.resolved.toml";
pub const DEFAULT_CASSETTE: &str = "cassette.jsonl";

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub mode: Option<Mode>,
    pub cassette: Option<PathBuf>,
    pub workers: Option<usize>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub label: Option<String>,
    pub resume: bool,
}

pub struct Run {
    pub cfg: LoadedConfig,
    pub registry: AspectRegistry,
    pub dir: PathBuf,
    pub mode: Mode,
    resume: bool,
    cassette_path: PathBuf,
    pool: rayon::ThreadPool,
    services: OnceLock<Services>,
}

/// `<label>-<first 12 hex digits of the config hash>`.
pub fn run_dir_name(cfg: &LoadedConfig) -> Result<String> {
    let hash = cfg.config.hash()?;
    Ok(format!("{}-{}", cfg.config.run_label, &hash[..12]))
}

impl Run {
    /// Applies command-line overrides, validates the config and creates (or
    /// reopens) the run directory.
    pub fn open(config_path: &Path, opts: RunOptions) -> Result<Self> {
        let mut cfg = LoadedConfig::load(config_path)?;
        if let Some(seed) = opts.seed {
            cfg.config.seed = seed;
        }
        if let Some(label) = &opts.label {
            cfg.config.run_label = label.clone();
        }
        if cfg.config.run_label.is_empty() || cfg.config.run_label.contains(['/', '\\']) {
            return Err(Error::Config(format!("invalid run label `{}`", cfg.config.run_label)));
        }
        cfg.validate()?;
        let registry = cfg.config.registry()?;
        let mode = opts.mode.or(cfg.config.mode).unwrap_or_default();
        let out = opts.out.unwrap_or_else(|| PathBuf::from("runs"));
        let dir = out.join(run_dir_name(&cfg)?);
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let resolved = cfg.config.to_toml()?;
        let resolved_path = dir.join(RESOLVED_CONFIG);
        if !resolved_path.exists() {
            jsonl::write_text(&resolved_path, &resolved)?;
        }
        let cassette_path = opts.cassette.unwrap_or_else(|| dir.join(DEFAULT_CASSETTE));
        let workers = opts.workers.unwrap_or_else(|| cfg.config.services.max_in_flight).max(1);
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
        Ok(Self { cfg, registry, dir, mode, resume: opts.resume, cassette_path, pool, services: OnceLock::new() })
    }

    pub fn seed(&self) -> u64 {
        self.cfg.config.seed
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.dir.join(rel)
    }

    /// Stage outputs are immutable: writing over one needs `--resume`.
    pub fn check_outputs(&self, rels: &[&str]) -> Result<()> {
        if self.resume {
            return Ok(());
        }
        for rel in rels {
            let p = self.path(rel);
            if p.exists() {
                return Err(Error::OutputExists(p));
            }
        }
        Ok(())
    }

    /// Reads a previous stage's output.
    pub fn input<T: serde::de::DeserializeOwned>(&self, rel: &str) -> Result<Vec<T>> {
        let p = self.path(rel);
        if !p.exists() {
            return Err(Error::Config(format!("{} is missing; run the stage that produces it first", p.display())));
        }
        jsonl::read(&p)
    }

    pub fn write_jsonl<T: Serialize>(&self, rel: &str, items: &[T]) -> Result<()> {
        jsonl::write(&self.path(rel), items)
    }

    pub fn write_json<T: Serialize + ?Sized>(&self, rel: &str, value: &T) -> Result<()> {
        jsonl::write_json(&self.path(rel), value)
    }

    /// Maps `f` over `items` on the worker pool; results keep input order.
    pub fn par_map<T: Sync, U: Send>(&self, items: &[T], f: impl Fn(&T) -> U + Sync + Send) -> Vec<U> {
        self.pool.install(|| items.par_iter().map(&f).collect())
    }

    pub fn services(&self) -> Result<&Services> {
        if let Some(s) = self.services.get() {
            return Ok(s);
        }
        let built = self.build_services()?;
        Ok(self.services.get_or_init(|| built))
    }

    fn build_services(&self) -> Result<Services> {
        let s = &self.cfg.config.services;
        let cassette = match self.mode {
            Mode::Live => None,
            Mode::Record => Some(Arc::new(Cassette::open(&self.cassette_path)?)),
            Mode::Replay => {
                if !self.cassette_path.is_file() {
                    return Err(Error::Config(format!("replay cassette {} does not exist", self.cassette_path.display())));
                }
                Some(Arc::new(Cassette::open(&self.cassette_path)?))
            }
        };
        let backends = if self.mode == Mode::Replay {
            Backends::default()
        } else {
            match s.backend {
                BackendKind::Scripted => {
                    let lexicon = Lexicon::new(&self.registry, &s.scripted)?;
                    let chat: Arc<ScriptedChat> = Arc::new(ScriptedChat::new(lexicon.clone()));
                    Backends {
                        chat: Some(chat.clone()),
                        eval_chat: Some(chat),
                        embed: Some(Arc::new(ScriptedEmbedder::new(s.scripted.embed_dim))),
                        classifier: Some(Arc::new(ScriptedClassifier::new(lexicon))),
                    }
                }
                BackendKind::Http => {
                    let timeout = Duration::from_secs(s.timeout_secs);
                    let chat_backend = |e: &crate::config::Endpoint| -> Option<Arc<dyn crate::services::ChatBackend>> {
                        (!e.base_url.is_empty()).then(|| {
                            Arc::new(HttpChat::new(&e.base_url, e.api_key.clone(), timeout)) as Arc<dyn crate::services::ChatBackend>
                        })
                    };
                    Backends {
                        chat: chat_backend(&s.chat),
                        eval_chat: chat_backend(&s.eval_model),
                        embed: (!s.embed.base_url.is_empty()).then(|| {
                            Arc::new(HttpEmbed::new(&s.embed.base_url, s.embed.api_key.clone(), timeout))
                                as Arc<dyn crate::services::EmbedBackend>
                        }),
                        classifier: (!s.classifiers.is_empty()).then(|| {
                            let urls = s.classifiers.iter().map(|(k, v)| (k.clone(), v.url.clone())).collect();
                            Arc::new(HttpClassifier::new(urls, timeout)) as Arc<dyn crate::services::ClassifierBackend>
                        }),
                    }
                }
            }
        };
        Ok(Services::new(self.mode, backends, cassette, s.retry, Limiter::new(s.max_in_flight, s.rate_per_sec))?
            .with_embed_model(s.embed.model.clone()))
    }

    /// Model name sent with augmenter requests.
    pub fn chat_model(&self) -> &str {
        &self.cfg.config.services.chat.model
    }

    pub fn eval_model(&self) -> &str {
        &self.cfg.config.services.eval_model.model
    }

    /// Persists new cassette entries (record mode) and logs call statistics.
    pub fn finish(&self) -> Result<()> {
        let Some(services) = self.services.get() else { return Ok(()) };
        let stats = services.stats();
        let load = |a: &std::sync::atomic::AtomicU64| a.load(std::sync::atomic::Ordering::Relaxed);
        log::info!(
            "service calls: {} upstream, {} retries, {} cassette hits",
            load(&stats.upstream_calls),
            load(&stats.retries),
            load(&stats.cassette_hits)
        );
        if self.mode == Mode::Record {
            if let Some(c) = services.cassette() {
                c.save()?;
            }
        }
        Ok(())
    }
}
