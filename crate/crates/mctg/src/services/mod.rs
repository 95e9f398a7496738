//! Chat-completion, embedding and classifier clients behind one facade that
//! adds retries, rate limiting, caching and cassette record/replay.

pub mod cassette;
pub mod http;
pub mod limit;
pub mod scripted;

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use mctg_core::{ClassifierOutput, EmbeddingVector};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

pub use cassette::Cassette;
pub use limit::{Limiter, RetryPolicy};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn user(content: impl Into<String>) -> Self {
        Self { role: Role::User, content: content.into() }
    }

    pub fn system(content: impl Into<String>) -> Self {
        Self { role: Role::System, content: content.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub max_tokens: u32,
    /// Stage, record id and repeat index, e.g. `cross/topic/1f2e.../2`.
    pub request_tag: String,
}

impl ChatRequest {
    pub fn validate(&self) -> Result<()> {
        match self.messages.first() {
            None => Err(Error::Config(format!("{}: chat request has no messages", self.request_tag))),
            Some(m) if m.role == Role::Assistant => Err(Error::Config(format!(
                "{}: first chat message must be system or user",
                self.request_tag
            ))),
            _ if !(self.temperature.is_finite() && self.temperature >= 0.0) => Err(Error::Config(format!(
                "{}: temperature must be non-negative",
                self.request_tag
            ))),
            _ => Ok(()),
        }
    }

    /// SHA-256 over `(model, messages, temperature, request_tag)`.
    pub fn fingerprint(&self) -> String {
        fingerprint(&json!(["chat", self.model, self.messages, self.temperature, self.request_tag]))
    }

    /// Content of the last user message.
    pub fn user_content(&self) -> &str {
        self.messages
            .iter()
            .rev()
            .find(|m| m.role == Role::User)
            .map_or("", |m| m.content.as_str())
    }
}

pub fn fingerprint(value: &Value) -> String {
    hex::encode(Sha256::digest(value.to_string().as_bytes()))
}

/// Failure of one upstream call.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ServiceError {
    #[error("transport: {0}")]
    Transport(String),
    #[error("HTTP {code}: {body}")]
    Status { code: u16, body: String },
    #[error("malformed response: {0}")]
    Decode(String),
}

impl ServiceError {
    /// 408, 429, 5xx and transport failures are worth retrying.
    pub fn is_retryable(&self) -> bool {
        match self {
            ServiceError::Transport(_) => true,
            ServiceError::Status { code, .. } => matches!(code, 408 | 429 | 500..=599),
            ServiceError::Decode(_) => false,
        }
    }
}

pub trait ChatBackend: Send + Sync {
    fn complete(&self, req: &ChatRequest) -> Result<String, ServiceError>;
}

pub trait EmbedBackend: Send + Sync {
    fn embed(&self, model: &str, text: &str) -> Result<Vec<f64>, ServiceError>;
}

pub trait ClassifierBackend: Send + Sync {
    fn classify(&self, aspect_id: &str, text: &str) -> Result<ClassifierOutput, ServiceError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Call upstream services; nothing is persisted.
    #[default]
    Live,
    /// Serve from the cassette when possible, otherwise call upstream and record.
    Record,
    /// Serve only from the cassette; never touch the network.
    Replay,
}

/// Upstream backends. Any of them may be absent in replay mode.
#[derive(Default, Clone)]
pub struct Backends {
    pub chat: Option<Arc<dyn ChatBackend>>,
    pub eval_chat: Option<Arc<dyn ChatBackend>>,
    pub embed: Option<Arc<dyn EmbedBackend>>,
    pub classifier: Option<Arc<dyn ClassifierBackend>>,
}

#[derive(Debug, Default)]
pub struct CallStats {
    pub upstream_calls: AtomicU64,
    pub retries: AtomicU64,
    pub cassette_hits: AtomicU64,
}

/// Which chat backend a request goes to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChatTarget {
    Augmenter,
    EvalModel,
}

pub struct Services {
    mode: Mode,
    backends: Backends,
    cassette: Option<Arc<Cassette>>,
    retry: RetryPolicy,
    limiter: Limiter,
    embed_model: String,
    embed_cache: Mutex<HashMap<String, EmbeddingVector>>,
    stats: CallStats,
}

impl Services {
    pub fn new(mode: Mode, backends: Backends, cassette: Option<Arc<Cassette>>, retry: RetryPolicy, limiter: Limiter) -> Result<Self> {
        if mode != Mode::Live && cassette.is_none() {
            return Err(Error::Config(format!("{mode:?} mode needs a cassette")));
        }
        Ok(Self {
            mode,
            backends,
            cassette,
            retry,
            limiter,
            embed_model: String::new(),
            embed_cache: Mutex::new(HashMap::new()),
            stats: CallStats::default(),
        })
    }

    pub fn with_embed_model(mut self, model: impl Into<String>) -> Self {
        self.embed_model = model.into();
        self
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn stats(&self) -> &CallStats {
        &self.stats
    }

    pub fn cassette(&self) -> Option<&Arc<Cassette>> {
        self.cassette.as_ref()
    }

    pub fn chat_complete(&self, target: ChatTarget, req: &ChatRequest) -> Result<String> {
        req.validate()?;
        let fp = req.fingerprint();
        let value = self.cached_call(&fp, &req.request_tag, || {
            let backend = match target {
                ChatTarget::Augmenter => self.backends.chat.as_ref(),
                ChatTarget::EvalModel => self.backends.eval_chat.as_ref(),
            };
            let backend = backend.ok_or_else(|| missing_backend("chat", &req.request_tag))?;
            self.upstream(&req.request_tag, || backend.complete(req)).map(Value::String)
        })?;
        match value {
            Value::String(s) => Ok(s),
            other => Err(Error::Service {
                tag: req.request_tag.clone(),
                message: format!("cassette entry is not a string: {other}"),
            }),
        }
    }

    pub fn embed(&self, text: &str) -> Result<EmbeddingVector> {
        if text.trim().is_empty() {
            return Err(Error::Config("cannot embed empty text".into()));
        }
        let fp = fingerprint(&json!(["embed", self.embed_model, text]));
        if let Some(v) = self.embed_cache.lock().expect("embed cache").get(&fp) {
            return Ok(v.clone());
        }
        let tag = format!("embed/{}", &fp[..16]);
        let value = self.cached_call(&fp, &tag, || {
            let backend = self.backends.embed.as_ref().ok_or_else(|| missing_backend("embedding", &tag))?;
            let v = self.upstream(&tag, || backend.embed(&self.embed_model, text))?;
            Ok(json!(v))
        })?;
        let values: Vec<f64> = serde_json::from_value(value).map_err(|e| Error::Service {
            tag: tag.clone(),
            message: format!("embedding is not a number array: {e}"),
        })?;
        let vector = EmbeddingVector::new(values)?;
        self.embed_cache.lock().expect("embed cache").insert(fp, vector.clone());
        Ok(vector)
    }

    pub fn classify(&self, aspect_id: &str, text: &str) -> Result<ClassifierOutput> {
        let fp = fingerprint(&json!(["classify", aspect_id, text]));
        let tag = format!("classify/{aspect_id}/{}", &fp[..16]);
        let value = self.cached_call(&fp, &tag, || {
            let backend = self.backends.classifier.as_ref().ok_or_else(|| missing_backend("classifier", &tag))?;
            let out = self.upstream(&tag, || backend.classify(aspect_id, text))?;
            Ok(serde_json::to_value(out).expect("classifier output serializes"))
        })?;
        serde_json::from_value(value).map_err(|e| Error::Service { tag, message: format!("bad classifier output: {e}") })
    }

    fn cached_call(&self, fp: &str, tag: &str, call: impl FnOnce() -> Result<Value>) -> Result<Value> {
        match self.mode {
            Mode::Live => call(),
            Mode::Replay => {
                let cassette = self.cassette.as_ref().expect("checked in new");
                match cassette.get(fp) {
                    Some(v) => {
                        self.stats.cassette_hits.fetch_add(1, Ordering::Relaxed);
                        Ok(v)
                    }
                    None => Err(Error::ReplayMiss { fingerprint: fp.to_string(), tag: tag.to_string() }),
                }
            }
            Mode::Record => {
                let cassette = self.cassette.as_ref().expect("checked in new");
                if let Some(v) = cassette.get(fp) {
                    self.stats.cassette_hits.fetch_add(1, Ordering::Relaxed);
                    return Ok(v);
                }
                let v = call()?;
                cassette.insert(fp.to_string(), v.clone());
                Ok(v)
            }
        }
    }

    fn upstream<T>(&self, tag: &str, mut call: impl FnMut() -> Result<T, ServiceError>) -> Result<T> {
        let outcome = self.retry.run(tag, || {
            let _permit = self.limiter.acquire();
            self.stats.upstream_calls.fetch_add(1, Ordering::Relaxed);
            call()
        });
        match outcome {
            Ok((value, retries)) => {
                self.stats.retries.fetch_add(u64::from(retries), Ordering::Relaxed);
                Ok(value)
            }
            Err((err, attempts)) => {
                self.stats.retries.fetch_add(u64::from(attempts.saturating_sub(1)), Ordering::Relaxed);
                Err(Error::Service { tag: tag.to_string(), message: format!("{err} (after {attempts} attempts)") })
            }
        }
    }
}

fn missing_backend(what: &str, tag: &str) -> Error {
    Error::Service { tag: tag.to_string(), message: format!("no {what} backend configured") }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::AtomicUsize;

    struct Echo(AtomicUsize);

    impl ChatBackend for Echo {
        fn complete(&self, req: &ChatRequest) -> Result<String, ServiceError> {
            self.0.fetch_add(1, Ordering::SeqCst);
            Ok(format!("echo {}", req.user_content()))
        }
    }

    struct CountingEmbed(AtomicUsize);

    impl EmbedBackend for CountingEmbed {
        fn embed(&self, _model: &str, text: &str) -> Result<Vec<f64>, ServiceError> {
            self.0.fetch_add(1, Ordering::SeqCst);
            Ok(if text == "pythagoras" { vec![3.0, 4.0] } else { vec![1.0, text.len() as f64] })
        }
    }

    fn req(tag: &str) -> ChatRequest {
        ChatRequest {
            model: "m".into(),
            messages: vec![ChatMessage::user("hello")],
            temperature: 0.7,
            max_tokens: 16,
            request_tag: tag.into(),
        }
    }

    fn fast_retry() -> RetryPolicy {
        RetryPolicy { max_attempts: 5, base_delay_ms: 1, max_delay_ms: 2 }
    }

    #[test]
    fn fingerprint_covers_tag_and_temperature() {
        let a = req("cross/x/1/1");
        let mut b = a.clone();
        b.request_tag = "cross/x/1/2".into();
        let mut c = a.clone();
        c.temperature = 0.2;
        assert_ne!(a.fingerprint(), b.fingerprint());
        assert_ne!(a.fingerprint(), c.fingerprint());
        assert_eq!(a.fingerprint(), a.clone().fingerprint());
    }

    #[test]
    fn request_validation() {
        let mut r = req("t");
        r.messages.clear();
        assert!(r.validate().is_err());
        let mut r = req("t");
        r.messages[0].role = Role::Assistant;
        assert!(r.validate().is_err());
        let mut r = req("t");
        r.temperature = -1.0;
        assert!(r.validate().is_err());
    }

    #[test]
    fn replay_hit_and_miss() {
        let cassette = Arc::new(Cassette::in_memory());
        let r = req("t1");
        cassette.insert(r.fingerprint(), Value::String("recorded".into()));
        let backend = Arc::new(Echo(AtomicUsize::new(0)));
        let backends = Backends { chat: Some(backend.clone()), ..Backends::default() };
        let s = Services::new(Mode::Replay, backends, Some(cassette), fast_retry(), Limiter::unlimited()).unwrap();
        assert_eq!(s.chat_complete(ChatTarget::Augmenter, &r).unwrap(), "recorded");
        let miss = s.chat_complete(ChatTarget::Augmenter, &req("t2")).unwrap_err();
        assert_eq!(miss.fingerprint(), Some(req("t2").fingerprint().as_str()));
        assert_eq!(backend.0.load(Ordering::SeqCst), 0);
    }

    #[test]
    fn record_then_replay() {
        let cassette = Arc::new(Cassette::in_memory());
        let backend = Arc::new(Echo(AtomicUsize::new(0)));
        let backends = Backends { chat: Some(backend.clone()), ..Backends::default() };
        let rec = Services::new(Mode::Record, backends, Some(cassette.clone()), fast_retry(), Limiter::unlimited()).unwrap();
        assert_eq!(rec.chat_complete(ChatTarget::Augmenter, &req("a")).unwrap(), "echo hello");
        assert_eq!(rec.chat_complete(ChatTarget::Augmenter, &req("a")).unwrap(), "echo hello");
        assert_eq!(backend.0.load(Ordering::SeqCst), 1);
        let replay = Services::new(Mode::Replay, Backends::default(), Some(cassette), fast_retry(), Limiter::unlimited()).unwrap();
        assert_eq!(replay.chat_complete(ChatTarget::Augmenter, &req("a")).unwrap(), "echo hello");
    }

    #[test]
    fn embed_cache_and_passthrough() {
        let backend = Arc::new(CountingEmbed(AtomicUsize::new(0)));
        let backends = Backends { embed: Some(backend.clone()), ..Backends::default() };
        let s = Services::new(Mode::Live, backends, None, fast_retry(), Limiter::unlimited()).unwrap();
        let a = s.embed("same text").unwrap();
        let b = s.embed("same text").unwrap();
        assert_eq!(a, b);
        assert_eq!(backend.0.load(Ordering::SeqCst), 1);
        let v = s.embed("pythagoras").unwrap();
        assert_eq!(v.dim(), 2);
        assert_eq!(v.values(), &[3.0, 4.0]);
        assert!(s.embed("  ").is_err());
    }

    #[test]
    fn modes_other_than_live_need_cassette() {
        assert!(Services::new(Mode::Replay, Backends::default(), None, fast_retry(), Limiter::unlimited()).is_err());
    }
}
