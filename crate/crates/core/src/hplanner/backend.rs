use std::collections::BTreeMap;
use std::fs;
use std::path::PathBuf;
use std::time::Duration;

use base64::Engine as _;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use super::PromptRequest;
use crate::error::BackendError;

/// Reply of the mock backend for requests missing from its table.
pub const MOCK_FALLBACK: &str = "no response configured";

/// A vision-language model endpoint. One call at a time per engine.
pub trait VlmBackend: Send {
    fn complete(&self, req: &PromptRequest, timeout_ms: u64) -> Result<String, BackendError>;
}

/// Stable lookup key: hex SHA-256 of the user text, a zero byte, then each
/// image's digest in order.
pub fn request_key(req: &PromptRequest) -> String {
    let mut h = Sha256::new();
    h.update(req.user_text.as_bytes());
    h.update([0u8]);
    for img in &req.images {
        h.update(img.digest());
    }
    hex::encode(h.finalize())
}

/// Canned replies keyed by [`request_key`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockTable {
    #[serde(default)]
    pub responses: BTreeMap<String, String>,
    #[serde(default)]
    pub fallback: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MockBackend {
    table: MockTable,
}

impl MockBackend {
    pub fn new(table: MockTable) -> Self {
        Self { table }
    }

    /// Answers every request with `reply`.
    pub fn constant(reply: impl Into<String>) -> Self {
        Self::new(MockTable {
            responses: BTreeMap::new(),
            fallback: Some(reply.into()),
        })
    }

    pub fn insert(&mut self, req: &PromptRequest, reply: impl Into<String>) {
        self.table.responses.insert(request_key(req), reply.into());
    }
}

impl VlmBackend for MockBackend {
    fn complete(&self, req: &PromptRequest, _timeout_ms: u64) -> Result<String, BackendError> {
        Ok(self
            .table
            .responses
            .get(&request_key(req))
            .cloned()
            .or_else(|| self.table.fallback.clone())
            .unwrap_or_else(|| MOCK_FALLBACK.to_string()))
    }
}

/// OpenAI-style chat-completions client.
#[derive(Debug, Clone)]
pub struct HttpBackend {
    endpoint: String,
    model: String,
    api_key: Option<String>,
}

impl HttpBackend {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>, api_key: Option<String>) -> Self {
        Self {
            endpoint: endpoint.into().trim_end_matches('/').to_string(),
            model: model.into(),
            api_key,
        }
    }

    /// JSON body for `req`; the system message is left out when empty.
    pub fn request_body(&self, req: &PromptRequest) -> Result<Value, BackendError> {
        let mut content = vec![json!({"type": "text", "text": req.user_text})];
        for img in &req.images {
            let png = img.to_png().map_err(|e| BackendError::Config(e.to_string()))?;
            let uri = format!("data:image/png;base64,{}", base64::engine::general_purpose::STANDARD.encode(png));
            content.push(json!({"type": "image_url", "image_url": {"url": uri}}));
        }
        let mut messages = Vec::new();
        if !req.system_text.is_empty() {
            messages.push(json!({"role": "system", "content": req.system_text}));
        }
        messages.push(json!({"role": "user", "content": content}));
        Ok(json!({
            "model": self.model,
            "temperature": req.temperature,
            "max_tokens": req.max_tokens,
            "messages": messages,
        }))
    }
}

impl VlmBackend for HttpBackend {
    fn complete(&self, req: &PromptRequest, timeout_ms: u64) -> Result<String, BackendError> {
        let body = self.request_body(req)?.to_string();
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(timeout_ms)))
            .http_status_as_error(false)
            .build()
            .into();
        let mut call = agent
            .post(format!("{}/chat/completions", self.endpoint))
            .header("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            call = call.header("Authorization", format!("Bearer {key}"));
        }
        let mut response = call.send(body).map_err(|e| match e {
            ureq::Error::Timeout(_) => BackendError::Timeout(timeout_ms),
            other => BackendError::Transport(other.to_string()),
        })?;
        let status = response.status().as_u16();
        let text = response.body_mut().read_to_string().map_err(|e| match e {
            ureq::Error::Timeout(_) => BackendError::Timeout(timeout_ms),
            other => BackendError::Transport(other.to_string()),
        })?;
        if !(200..300).contains(&status) {
            return Err(BackendError::Status { status, body: text });
        }
        let value: Value = serde_json::from_str(&text).map_err(|e| BackendError::Malformed(e.to_string()))?;
        value
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| BackendError::Malformed("missing choices[0].message.content".into()))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    #[default]
    Mock,
    Http,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendDescriptor {
    pub kind: BackendKind,
    pub endpoint_url: Option<String>,
    pub model_name: String,
    /// Name of the environment variable holding the API key.
    pub api_key_env: Option<String>,
    /// JSON [`MockTable`] used by the mock backend.
    pub mock_responses: Option<PathBuf>,
}

impl BackendDescriptor {
    pub fn validate(&self) -> Result<(), BackendError> {
        if self.kind == BackendKind::Http && self.endpoint_url.as_deref().is_none_or(|u| u.trim().is_empty()) {
            return Err(BackendError::Config("http backend requires endpoint_url".into()));
        }
        Ok(())
    }
}

pub fn build_backend(desc: &BackendDescriptor) -> Result<Box<dyn VlmBackend>, BackendError> {
    desc.validate()?;
    match desc.kind {
        BackendKind::Mock => {
            let table = match &desc.mock_responses {
                None => MockTable::default(),
                Some(path) => {
                    let text = fs::read_to_string(path)
                        .map_err(|e| BackendError::Config(format!("{}: {e}", path.display())))?;
                    serde_json::from_str(&text).map_err(|e| BackendError::Config(format!("{}: {e}", path.display())))?
                }
            };
            Ok(Box::new(MockBackend::new(table)))
        }
        BackendKind::Http => {
            let api_key = match desc.api_key_env.as_deref().filter(|v| !v.is_empty()) {
                None => None,
                Some(var) => Some(
                    std::env::var(var)
                        .map_err(|_| BackendError::Config(format!("environment variable {var} is not set")))?,
                ),
            };
            let endpoint = desc.endpoint_url.clone().expect("validated");
            Ok(Box::new(HttpBackend::new(endpoint, desc.model_name.clone(), api_key)))
        }
    }
}
