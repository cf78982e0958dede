use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const ENV_CHAT_URL: &str = "TOG_CHAT_URL";
pub const ENV_CHAT_API_KEY: &str = "TOG_CHAT_API_KEY";
pub const ENV_CHAT_MODEL: &str = "TOG_CHAT_MODEL";
pub const ENV_FIXTURE_DIR: &str = "TOG_FIXTURE_DIR";

/// A single-turn text completion backend.
pub trait ChatClient: Send + Sync {
    fn complete(&self, prompt: &str) -> Result<String>;
}

impl<C: ChatClient + ?Sized> ChatClient for &C {
    fn complete(&self, prompt: &str) -> Result<String> {
        (**self).complete(prompt)
    }
}

impl<C: ChatClient + ?Sized> ChatClient for Box<C> {
    fn complete(&self, prompt: &str) -> Result<String> {
        (**self).complete(prompt)
    }
}

/// Hex SHA-256 of the exact prompt bytes; fixture file stem.
pub fn prompt_key(prompt: &str) -> String {
    hex::encode(Sha256::digest(prompt.as_bytes()))
}

/// Replays recorded responses from `<dir>/<sha256(prompt)>.txt`, plus any
/// responses registered in memory.
#[derive(Debug, Clone, Default)]
pub struct FixtureClient {
    dir: Option<PathBuf>,
    inline: HashMap<String, String>,
}

impl FixtureClient {
    pub fn from_dir(dir: impl Into<PathBuf>) -> Self {
        Self {
            dir: Some(dir.into()),
            inline: HashMap::new(),
        }
    }

    pub fn from_pairs<P: AsRef<str>, R: Into<String>>(pairs: impl IntoIterator<Item = (P, R)>) -> Self {
        Self {
            dir: None,
            inline: pairs
                .into_iter()
                .map(|(p, r)| (prompt_key(p.as_ref()), r.into()))
                .collect(),
        }
    }

    pub fn insert(&mut self, prompt: &str, response: impl Into<String>) {
        self.inline.insert(prompt_key(prompt), response.into());
    }

    /// Writes a fixture file for `prompt` and returns its path.
    pub fn record(dir: impl AsRef<Path>, prompt: &str, response: &str) -> Result<PathBuf> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(format!("{}.txt", prompt_key(prompt)));
        fs::write(&path, response).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }
}

impl ChatClient for FixtureClient {
    fn complete(&self, prompt: &str) -> Result<String> {
        let key = prompt_key(prompt);
        if let Some(r) = self.inline.get(&key) {
            return Ok(r.clone());
        }
        if let Some(dir) = &self.dir {
            let path = dir.join(format!("{key}.txt"));
            match fs::read_to_string(&path) {
                Ok(text) => return Ok(text),
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
                Err(e) => return Err(Error::io(&path, e)),
            }
        }
        Err(Error::Chat(format!("no fixture recorded for prompt {key}")))
    }
}

/// OpenAI-style chat-completions endpoint.
///
/// Request: `POST <url>` with `{"model": .., "messages": [{"role": "user", "content": ..}]}`
/// and `Authorization: Bearer <key>`. The assistant text is read from
/// `choices[0].message.content`.
#[derive(Debug, Clone)]
pub struct HttpChatClient {
    url: String,
    api_key: Option<String>,
    model: String,
    timeout: Duration,
}

impl HttpChatClient {
    pub fn new(url: impl Into<String>, api_key: Option<String>, model: impl Into<String>) -> Self {
        Self {
            url: url.into(),
            api_key,
            model: model.into(),
            timeout: Duration::from_secs(120),
        }
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    /// Reads `TOG_CHAT_URL`, `TOG_CHAT_API_KEY` and `TOG_CHAT_MODEL` (default `gpt-4o`).
    pub fn from_env() -> Result<Self> {
        let url = std::env::var(ENV_CHAT_URL).map_err(|_| Error::Chat(format!("{ENV_CHAT_URL} is not set")))?;
        let key = std::env::var(ENV_CHAT_API_KEY).ok();
        let model = std::env::var(ENV_CHAT_MODEL).unwrap_or_else(|_| "gpt-4o".to_string());
        Ok(Self::new(url, key, model))
    }

    pub fn request_body(&self, prompt: &str) -> Value {
        json!({
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": 0,
        })
    }
}

pub fn parse_chat_response(value: &Value) -> Result<String> {
    value
        .pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .map(str::to_string)
        .ok_or_else(|| Error::Chat("response lacks choices[0].message.content".into()))
}

impl ChatClient for HttpChatClient {
    fn complete(&self, prompt: &str) -> Result<String> {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(self.timeout))
            .build()
            .into();
        let mut req = agent.post(&self.url).header("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", format!("Bearer {key}"));
        }
        let response = req
            .send_json(self.request_body(prompt))
            .map_err(|e| Error::Chat(format!("request to {} failed: {e}", self.url)))?;
        let value: Value = response
            .into_body()
            .read_json()
            .map_err(|e| Error::Chat(format!("malformed response body: {e}")))?;
        parse_chat_response(&value)
    }
}
