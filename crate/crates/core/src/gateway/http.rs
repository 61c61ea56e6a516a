//! OpenAI-compatible chat-completions backend.
//!
//! Speaks `POST {endpoint}/v1/chat/completions` with `model`, `messages`,
//! `temperature`, `max_tokens`, and (for beam requests) `n` plus `logprobs`.
//! A continuation's log-probability is the sum of its token logprobs.

use serde::Deserialize;
use serde_json::json;

use super::{ChatBackend, ChatRequest, ChatResponse, Continuation, GatewayError, MsgRole};

#[derive(Debug, Clone)]
pub struct HttpBackendConfig {
    /// Base URL, e.g. `http://localhost:8000` (the `/v1/chat/completions`
    /// path is appended) or a full URL ending in `/chat/completions`.
    pub endpoint: String,
    pub model: String,
    pub api_key: Option<String>,
    pub timeout_secs: u64,
    /// Whether the server exposes per-token logprobs.
    pub supports_logprobs: bool,
}

impl HttpBackendConfig {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>) -> Self {
        HttpBackendConfig {
            endpoint: endpoint.into(),
            model: model.into(),
            api_key: None,
            timeout_secs: 120,
            supports_logprobs: false,
        }
    }
}

pub struct HttpBackend {
    config: HttpBackendConfig,
    client: reqwest::blocking::Client,
    url: String,
}

#[derive(Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireMessage,
    #[serde(default)]
    logprobs: Option<WireLogprobs>,
}

#[derive(Deserialize)]
struct WireMessage {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize)]
struct WireLogprobs {
    #[serde(default)]
    content: Option<Vec<WireTokenLogprob>>,
}

#[derive(Deserialize)]
struct WireTokenLogprob {
    logprob: f64,
}

impl HttpBackend {
    pub fn new(config: HttpBackendConfig) -> Result<Self, GatewayError> {
        let base = config.endpoint.trim_end_matches('/');
        let url = if base.ends_with("/chat/completions") {
            base.to_string()
        } else {
            format!("{base}/v1/chat/completions")
        };
        let client = reqwest::blocking::Client::builder()
            .timeout(std::time::Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| GatewayError::Transport {
                detail: e.to_string(),
                status: None,
            })?;
        Ok(HttpBackend { config, client, url })
    }

    fn wire_messages(req: &ChatRequest) -> Vec<serde_json::Value> {
        let mut messages = Vec::with_capacity(req.messages.len() + 1);
        if !req.system_prompt.is_empty() {
            messages.push(json!({"role": "system", "content": req.system_prompt}));
        }
        for m in &req.messages {
            let role = match m.role {
                MsgRole::User => "user",
                MsgRole::Assistant => "assistant",
            };
            messages.push(json!({"role": role, "content": m.text}));
        }
        messages
    }
}

impl ChatBackend for HttpBackend {
    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        let mut body = json!({
            "model": self.config.model,
            "messages": Self::wire_messages(req),
            "temperature": req.temperature,
            "max_tokens": req.max_tokens,
        });
        if req.want_logprobs {
            body["logprobs"] = json!(true);
            if let Some(width) = req.beam_width {
                body["n"] = json!(width);
            }
        }

        let mut builder = self.client.post(&self.url).json(&body);
        if let Some(key) = &self.config.api_key {
            builder = builder.bearer_auth(key);
        }
        let resp = builder.send().map_err(|e| GatewayError::Transport {
            detail: e.to_string(),
            status: None,
        })?;
        let status = resp.status();
        if !status.is_success() {
            return Err(GatewayError::Transport {
                detail: format!("HTTP {status}"),
                status: Some(status.as_u16()),
            });
        }
        let wire: WireResponse = resp
            .json()
            .map_err(|e| GatewayError::Protocol(e.to_string()))?;
        if wire.choices.is_empty() {
            return Err(GatewayError::Protocol("empty choices".into()));
        }
        let continuations = wire
            .choices
            .into_iter()
            .map(|choice| {
                let logprob = choice.logprobs.and_then(|lp| {
                    lp.content
                        .map(|tokens| tokens.iter().map(|t| t.logprob).sum())
                });
                Continuation {
                    text: choice.message.content.unwrap_or_default(),
                    logprob,
                }
            })
            .collect();
        Ok(ChatResponse { continuations })
    }

    fn supports_logprobs(&self) -> bool {
        self.config.supports_logprobs
    }
}
