//! OpenAI-compatible HTTP client for chat completions and embeddings.

use std::sync::{Arc, Condvar, Mutex};
use std::thread;
use std::time::Duration;

use serde_json::{json, Value};
use ureq::Agent;

use crate::config::Config;
use crate::error::{Error, Result};
use crate::prompt::{OutputKind, Prompt};
use crate::providers::{ChatProvider, EmbeddingProvider};

const MAX_BACKOFF: Duration = Duration::from_secs(30);

/// Caps concurrent requests across clones of one client.
#[derive(Debug)]
struct Gate {
    limit: usize,
    in_flight: Mutex<usize>,
    freed: Condvar,
}

struct Permit<'a>(&'a Gate);

impl Gate {
    fn new(limit: usize) -> Self {
        Self { limit: limit.max(1), in_flight: Mutex::new(0), freed: Condvar::new() }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut n = self.in_flight.lock().unwrap_or_else(|e| e.into_inner());
        while *n >= self.limit {
            n = self.freed.wait(n).unwrap_or_else(|e| e.into_inner());
        }
        *n += 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut n = self.0.in_flight.lock().unwrap_or_else(|e| e.into_inner());
        *n -= 1;
        self.0.freed.notify_one();
    }
}

#[derive(Debug, Clone)]
struct Client {
    agent: Agent,
    base_url: String,
    api_key: String,
    rate_limit_retries: u32,
    gate: Arc<Gate>,
}

impl Client {
    fn new(config: &Config, api_key: &str) -> Self {
        let agent: Agent = Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            agent,
            base_url: config.base_url.trim_end_matches('/').to_string(),
            api_key: api_key.to_string(),
            rate_limit_retries: config.rate_limit_retries,
            gate: Arc::new(Gate::new(config.max_in_flight)),
        }
    }

    /// POST `body` to `path`, backing off on 429 as the server asks.
    fn post(&self, path: &str, body: &Value) -> Result<Value> {
        let url = format!("{}/{}", self.base_url, path);
        let mut attempt = 0;
        loop {
            let (status, retry_after, text) = {
                let _permit = self.gate.acquire();
                let mut resp = self
                    .agent
                    .post(&url)
                    .header("Authorization", &format!("Bearer {}", self.api_key))
                    .send_json(body)
                    .map_err(|e| Error::Transport(e.to_string()))?;
                let retry_after = resp
                    .headers()
                    .get("retry-after")
                    .and_then(|v| v.to_str().ok())
                    .and_then(|s| s.trim().parse::<f64>().ok())
                    .filter(|s| s.is_finite() && *s >= 0.0)
                    .map(Duration::from_secs_f64);
                let text = resp.body_mut().read_to_string().map_err(|e| Error::Transport(e.to_string()))?;
                (resp.status().as_u16(), retry_after, text)
            };
            match status {
                200..=299 => {
                    return serde_json::from_str(&text)
                        .map_err(|e| Error::Provider(format!("response is not JSON: {e}")))
                }
                401 | 403 => return Err(Error::AuthFailure),
                429 if attempt < self.rate_limit_retries => {
                    attempt += 1;
                    let wait = retry_after.unwrap_or(Duration::from_secs(1 << attempt.min(4))).min(MAX_BACKOFF);
                    tracing::warn!(?wait, attempt, "rate limited");
                    thread::sleep(wait);
                }
                429 => return Err(Error::RateLimited { retry_after }),
                s => return Err(Error::Provider(format!("HTTP {s}: {}", text.chars().take(200).collect::<String>()))),
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct LiveChat {
    client: Client,
    model: String,
    structured_retries: u32,
}

impl LiveChat {
    pub fn new(config: &Config, api_key: &str) -> Self {
        Self {
            client: Client::new(config, api_key),
            model: config.chat_model.clone(),
            structured_retries: config.structured_retries,
        }
    }
}

impl ChatProvider for LiveChat {
    fn complete(&self, prompt: &Prompt) -> Result<String> {
        let mut body = json!({
            "model": self.model,
            "messages": [{"role": "user", "content": prompt.text}],
            "temperature": 0,
        });
        if prompt.template.expected_output() == OutputKind::Json {
            body["response_format"] = json!({"type": "json_object"});
        }
        let doc = self.client.post("chat/completions", &body)?;
        doc["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| Error::Provider("completion has no choices[0].message.content".into()))
    }

    fn structured_retries(&self) -> u32 {
        self.structured_retries
    }

    fn is_live(&self) -> bool {
        true
    }
}

#[derive(Debug, Clone)]
pub struct LiveEmbedder {
    client: Client,
    model: String,
    dim: usize,
}

impl LiveEmbedder {
    pub fn new(config: &Config, api_key: &str) -> Self {
        Self { client: Client::new(config, api_key), model: config.embed_model.clone(), dim: config.embed_dim }
    }
}

impl EmbeddingProvider for LiveEmbedder {
    fn embed(&self, text: &str) -> Result<Vec<f64>> {
        let doc = self.client.post("embeddings", &json!({"model": self.model, "input": text}))?;
        let v: Vec<f64> = doc["data"][0]["embedding"]
            .as_array()
            .ok_or_else(|| Error::EmbedderFailure("response has no data[0].embedding".into()))?
            .iter()
            .map(|x| x.as_f64().ok_or(Error::NonFiniteEmbedding))
            .collect::<Result<_>>()?;
        if v.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: v.len() });
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFiniteEmbedding);
        }
        Ok(v)
    }

    fn dimension(&self) -> usize {
        self.dim
    }
}
