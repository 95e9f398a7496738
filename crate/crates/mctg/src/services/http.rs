//! OpenAI-compatible HTTP backends and the JSON classifier protocol.

use std::collections::BTreeMap;
use std::time::Duration;

use mctg_core::ClassifierOutput;
use serde_json::{json, Value};

use super::{ChatBackend, ChatRequest, ClassifierBackend, EmbedBackend, ServiceError};

fn agent(timeout: Duration) -> ureq::Agent {
    ureq::Agent::config_builder()
        .http_status_as_error(false)
        .timeout_global(Some(timeout))
        .build()
        .into()
}

fn post_json(agent: &ureq::Agent, url: &str, api_key: Option<&str>, body: &Value) -> Result<Value, ServiceError> {
    let mut req = agent.post(url).header("content-type", "application/json");
    if let Some(key) = api_key.filter(|k| !k.is_empty()) {
        req = req.header("authorization", &format!("Bearer {key}"));
    }
    let mut resp = req.send(body.to_string()).map_err(|e| ServiceError::Transport(e.to_string()))?;
    let code = resp.status().as_u16();
    let text = resp
        .body_mut()
        .read_to_string()
        .map_err(|e| ServiceError::Transport(e.to_string()))?;
    if !(200..300).contains(&code) {
        return Err(ServiceError::Status { code, body: text });
    }
    serde_json::from_str(&text).map_err(|e| ServiceError::Decode(e.to_string()))
}

fn endpoint(base_url: &str, path: &str) -> String {
    format!("{}{path}", base_url.trim_end_matches('/'))
}

/// `POST {base}/v1/chat/completions`.
pub struct HttpChat {
    agent: ureq::Agent,
    url: String,
    api_key: Option<String>,
}

impl HttpChat {
    pub fn new(base_url: &str, api_key: Option<String>, timeout: Duration) -> Self {
        Self { agent: agent(timeout), url: endpoint(base_url, "/v1/chat/completions"), api_key }
    }
}

impl ChatBackend for HttpChat {
    fn complete(&self, req: &ChatRequest) -> Result<String, ServiceError> {
        let body = json!({
            "model": req.model,
            "messages": req.messages,
            "temperature": req.temperature,
            "max_tokens": req.max_tokens,
        });
        let resp = post_json(&self.agent, &self.url, self.api_key.as_deref(), &body)?;
        resp.pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| ServiceError::Decode("missing choices[0].message.content".into()))
    }
}

/// `POST {base}/v1/embeddings`.
pub struct HttpEmbed {
    agent: ureq::Agent,
    url: String,
    api_key: Option<String>,
}

impl HttpEmbed {
    pub fn new(base_url: &str, api_key: Option<String>, timeout: Duration) -> Self {
        Self { agent: agent(timeout), url: endpoint(base_url, "/v1/embeddings"), api_key }
    }
}

impl EmbedBackend for HttpEmbed {
    fn embed(&self, model: &str, text: &str) -> Result<Vec<f64>, ServiceError> {
        let resp = post_json(&self.agent, &self.url, self.api_key.as_deref(), &json!({ "model": model, "input": text }))?;
        let values = resp
            .pointer("/data/0/embedding")
            .and_then(Value::as_array)
            .ok_or_else(|| ServiceError::Decode("missing data[0].embedding".into()))?;
        values
            .iter()
            .map(|v| v.as_f64().ok_or_else(|| ServiceError::Decode("non-numeric embedding value".into())))
            .collect()
    }
}

/// One URL per aspect; `POST {"text": ...}` answers `{"label_index": n}` or
/// `{"distribution": [...]}`.
pub struct HttpClassifier {
    agent: ureq::Agent,
    urls: BTreeMap<String, String>,
}

impl HttpClassifier {
    pub fn new(urls: BTreeMap<String, String>, timeout: Duration) -> Self {
        Self { agent: agent(timeout), urls }
    }
}

impl ClassifierBackend for HttpClassifier {
    fn classify(&self, aspect_id: &str, text: &str) -> Result<ClassifierOutput, ServiceError> {
        let url = self
            .urls
            .get(aspect_id)
            .ok_or_else(|| ServiceError::Transport(format!("no classifier URL for aspect `{aspect_id}`")))?;
        let resp = post_json(&self.agent, url, None, &json!({ "text": text }))?;
        serde_json::from_value(resp).map_err(|e| ServiceError::Decode(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::services::{Backends, ChatMessage, ChatTarget, Limiter, Mode, RetryPolicy, Services};
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;
    use std::sync::atomic::Ordering;
    use std::sync::Arc;
    use std::thread;

    /// Serves the scripted `(status, body)` replies in order, one per
    /// connection, and returns the request bodies it saw.
    fn fake_server(replies: Vec<(u16, String)>) -> (String, thread::JoinHandle<Vec<String>>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = format!("http://{}", listener.local_addr().unwrap());
        let handle = thread::spawn(move || {
            let mut seen = Vec::new();
            for (status, body) in replies {
                let (stream, _) = listener.accept().unwrap();
                let mut reader = BufReader::new(stream);
                let mut len = 0usize;
                loop {
                    let mut line = String::new();
                    reader.read_line(&mut line).unwrap();
                    if line == "\r\n" || line.is_empty() {
                        break;
                    }
                    if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                        len = v.trim().parse().unwrap();
                    }
                }
                let mut buf = vec![0; len];
                reader.read_exact(&mut buf).unwrap();
                seen.push(String::from_utf8(buf).unwrap());
                let mut stream = reader.into_inner();
                write!(
                    stream,
                    "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                    body.len()
                )
                .unwrap();
            }
            seen
        });
        (addr, handle)
    }

    #[test]
    fn chat_succeeds_after_two_429s() {
        let ok = json!({"choices": [{"message": {"role": "assistant", "content": "Sports"}}]}).to_string();
        let (addr, server) = fake_server(vec![(429, "{}".into()), (429, "{}".into()), (200, ok)]);
        let backends = Backends {
            chat: Some(Arc::new(HttpChat::new(&addr, Some("k".into()), Duration::from_secs(5)))),
            ..Backends::default()
        };
        let retry = RetryPolicy { max_attempts: 5, base_delay_ms: 1, max_delay_ms: 2 };
        let services = Services::new(Mode::Live, backends, None, retry, Limiter::new(8, None)).unwrap();
        let req = ChatRequest {
            model: "gpt".into(),
            messages: vec![ChatMessage::user("label this")],
            temperature: 0.7,
            max_tokens: 8,
            request_tag: "cross/topic/abc/1".into(),
        };
        assert_eq!(services.chat_complete(ChatTarget::Augmenter, &req).unwrap(), "Sports");
        assert_eq!(services.stats().retries.load(Ordering::SeqCst), 2);
        assert_eq!(services.stats().upstream_calls.load(Ordering::SeqCst), 3);
        let bodies = server.join().unwrap();
        let sent: Value = serde_json::from_str(&bodies[2]).unwrap();
        assert_eq!(sent["model"], "gpt");
        assert_eq!(sent["messages"][0]["role"], "user");
        assert_eq!(sent["max_tokens"], 8);
    }

    #[test]
    fn non_retryable_status_fails_fast() {
        let (addr, server) = fake_server(vec![(401, "{\"error\":\"nope\"}".into())]);
        let chat = HttpChat::new(&addr, None, Duration::from_secs(5));
        let req = ChatRequest {
            model: "gpt".into(),
            messages: vec![ChatMessage::user("x")],
            temperature: 0.0,
            max_tokens: 8,
            request_tag: "t".into(),
        };
        assert!(matches!(chat.complete(&req), Err(ServiceError::Status { code: 401, .. })));
        server.join().unwrap();
    }

    #[test]
    fn embedding_and_classifier_protocols() {
        let (addr, server) = fake_server(vec![
            (200, json!({"data": [{"embedding": [3, 4]}]}).to_string()),
            (200, json!({"distribution": [0.5, 0.5]}).to_string()),
            (200, json!({"label_index": 2}).to_string()),
        ]);
        let embed = HttpEmbed::new(&addr, None, Duration::from_secs(5));
        assert_eq!(embed.embed("bge", "hello").unwrap(), vec![3.0, 4.0]);
        let mut urls = BTreeMap::new();
        urls.insert("sentiment".to_string(), format!("{addr}/classify"));
        let clf = HttpClassifier::new(urls, Duration::from_secs(5));
        assert_eq!(clf.classify("sentiment", "good").unwrap().resolve(2).unwrap(), 1);
        assert_eq!(clf.classify("sentiment", "bad").unwrap().resolve(2).unwrap(), 2);
        assert!(clf.classify("topic", "x").is_err());
        let bodies = server.join().unwrap();
        assert_eq!(serde_json::from_str::<Value>(&bodies[0]).unwrap()["input"], "hello");
        assert_eq!(serde_json::from_str::<Value>(&bodies[1]).unwrap()["text"], "good");
    }
}
