//! Single boundary through which every LLM role (policy proposer, system,
//! user, critic, emotion) is queried.
//!
//! Two backends are provided: an OpenAI-compatible chat-completions client
//! and a deterministic scripted mock driven by substring rules. A
//! [`Gateway`] wraps per-role backends with retries, a per-run call cap,
//! and optional request recording.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Which planning role a request is issued for. Distinct roles may be
/// served by distinct backends.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RoleTag {
    Policy,
    System,
    User,
    Critic,
    Emotion,
}

impl RoleTag {
    pub const ALL: [RoleTag; 5] = [
        RoleTag::Policy,
        RoleTag::System,
        RoleTag::User,
        RoleTag::Critic,
        RoleTag::Emotion,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            RoleTag::Policy => "policy",
            RoleTag::System => "system",
            RoleTag::User => "user",
            RoleTag::Critic => "critic",
            RoleTag::Emotion => "emotion",
        }
    }
}

/// Chat position of a message, mapped onto the wire roles of the
/// chat-completions protocol.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MsgRole {
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: MsgRole,
    pub text: String,
}

/// Default token budget for action proposals.
pub const MAX_TOKENS_PROPOSAL: u32 = 25;
/// Default token budget for full dialogue turns.
pub const MAX_TOKENS_DIALOGUE: u32 = 100;
/// Token budget for single-word emotion labels.
pub const MAX_TOKENS_EMOTION: u32 = 10;
/// Default sampling temperature.
pub const DEFAULT_TEMPERATURE: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub role_tag: RoleTag,
    pub system_prompt: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub max_tokens: u32,
    pub want_logprobs: bool,
    pub beam_width: Option<u32>,
}

impl ChatRequest {
    /// A single-message request carrying the whole rendered prompt, which is
    /// how the self-play loop issues every query.
    pub fn single(role_tag: RoleTag, prompt: impl Into<String>, max_tokens: u32) -> Self {
        ChatRequest {
            role_tag,
            system_prompt: String::new(),
            messages: vec![ChatMessage {
                role: MsgRole::User,
                text: prompt.into(),
            }],
            temperature: DEFAULT_TEMPERATURE,
            max_tokens,
            want_logprobs: false,
            beam_width: None,
        }
    }

    pub fn with_beam(mut self, width: u32) -> Self {
        self.want_logprobs = true;
        self.beam_width = Some(width);
        self
    }

    pub fn last_message_text(&self) -> &str {
        self.messages.last().map(|m| m.text.as_str()).unwrap_or("")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Continuation {
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub logprob: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub continuations: Vec<Continuation>,
}

impl ChatResponse {
    pub fn text(text: impl Into<String>) -> Self {
        ChatResponse {
            continuations: vec![Continuation {
                text: text.into(),
                logprob: None,
            }],
        }
    }

    /// The first (highest-ranked) continuation.
    pub fn top_text(&self) -> &str {
        self.continuations
            .first()
            .map(|c| c.text.as_str())
            .unwrap_or("")
    }

    /// All `(text, logprob)` pairs; `None` if any continuation lacks one.
    pub fn scored(&self) -> Option<Vec<(String, f64)>> {
        self.continuations
            .iter()
            .map(|c| c.logprob.map(|lp| (c.text.clone(), lp)))
            .collect()
    }
}

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("transport failure: {detail}")]
    Transport { detail: String, status: Option<u16> },
    #[error("malformed backend response: {0}")]
    Protocol(String),
    #[error("per-run LLM call budget of {cap} exhausted")]
    BudgetExceeded { cap: u64 },
    #[error("backend cannot return log-probabilities")]
    UnsupportedCapability,
    #[error("bad script: {0}")]
    BadScript(String),
}

/// A chat-completion provider. Implementations must be deterministic for
/// the scripted mock and may be freely shared across threads.
pub trait ChatBackend: Send + Sync {
    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, GatewayError>;
    fn supports_logprobs(&self) -> bool;
}

#[derive(Debug, Clone)]
pub struct GatewayConfig {
    /// Retries for transient transport failures (network errors, HTTP >= 500).
    pub max_retries: u32,
    /// Base backoff delay; doubles per retry.
    pub retry_base_ms: u64,
    /// Per-run cap on total completed calls, if any.
    pub call_cap: Option<u64>,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        GatewayConfig {
            max_retries: 2,
            retry_base_ms: 200,
            call_cap: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RecordedCall {
    pub role_tag: RoleTag,
    pub prompt: String,
    pub response: String,
}

/// Role-routing front end for all LLM traffic. Counts calls, enforces the
/// per-run budget, retries transient failures with exponential backoff, and
/// optionally records every prompt/response pair.
pub struct Gateway {
    default_backend: Arc<dyn ChatBackend>,
    role_backends: BTreeMap<RoleTag, Arc<dyn ChatBackend>>,
    config: GatewayConfig,
    total: AtomicU64,
    per_role: Mutex<BTreeMap<RoleTag, u64>>,
    recorder: Option<Mutex<Vec<RecordedCall>>>,
}

impl Gateway {
    pub fn new(backend: Arc<dyn ChatBackend>, config: GatewayConfig) -> Self {
        Gateway {
            default_backend: backend,
            role_backends: BTreeMap::new(),
            config,
            total: AtomicU64::new(0),
            per_role: Mutex::new(BTreeMap::new()),
            recorder: None,
        }
    }

    pub fn with_role_backend(mut self, role: RoleTag, backend: Arc<dyn ChatBackend>) -> Self {
        self.role_backends.insert(role, backend);
        self
    }

    /// Enables in-memory recording of every prompt/response pair.
    pub fn with_recording(mut self) -> Self {
        self.recorder = Some(Mutex::new(Vec::new()));
        self
    }

    pub fn recorded_calls(&self) -> Vec<RecordedCall> {
        match &self.recorder {
            Some(rec) => rec.lock().unwrap().clone(),
            None => Vec::new(),
        }
    }

    pub fn total_calls(&self) -> u64 {
        self.total.load(Ordering::SeqCst)
    }

    pub fn calls_for(&self, role: RoleTag) -> u64 {
        *self.per_role.lock().unwrap().get(&role).unwrap_or(&0)
    }

    fn backend_for(&self, role: RoleTag) -> &Arc<dyn ChatBackend> {
        self.role_backends.get(&role).unwrap_or(&self.default_backend)
    }

    fn charge(&self, role: RoleTag) -> Result<(), GatewayError> {
        if let Some(cap) = self.config.call_cap {
            // Increment optimistically and roll back on breach so concurrent
            // callers cannot slip past the cap.
            let prev = self.total.fetch_add(1, Ordering::SeqCst);
            if prev >= cap {
                self.total.fetch_sub(1, Ordering::SeqCst);
                return Err(GatewayError::BudgetExceeded { cap });
            }
        } else {
            self.total.fetch_add(1, Ordering::SeqCst);
        }
        *self.per_role.lock().unwrap().entry(role).or_insert(0) += 1;
        Ok(())
    }

    fn is_transient(err: &GatewayError) -> bool {
        matches!(err, GatewayError::Transport { status, .. } if status.is_none() || status.unwrap() >= 500)
    }

    /// Issues a completion, retrying transient transport failures.
    /// Returns at least one continuation on success.
    pub fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        self.charge(req.role_tag)?;
        let backend = self.backend_for(req.role_tag);
        let mut attempt = 0;
        let resp = loop {
            match backend.complete(req) {
                Ok(resp) => break resp,
                Err(err) if Self::is_transient(&err) && attempt < self.config.max_retries => {
                    let delay = self.config.retry_base_ms.saturating_mul(1 << attempt);
                    if delay > 0 {
                        std::thread::sleep(Duration::from_millis(delay));
                    }
                    attempt += 1;
                }
                Err(err) => return Err(err),
            }
        };
        if resp.continuations.is_empty() {
            return Err(GatewayError::Protocol("no continuations returned".into()));
        }
        if let Some(rec) = &self.recorder {
            rec.lock().unwrap().push(RecordedCall {
                role_tag: req.role_tag,
                prompt: req.last_message_text().to_string(),
                response: resp.top_text().to_string(),
            });
        }
        Ok(resp)
    }

    /// Issues a log-probability beam request: exactly `beam_width`
    /// `(text, logprob)` pairs, sorted by logprob descending.
    pub fn complete_beam(&self, req: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        let width = req.beam_width.unwrap_or(1).max(1) as usize;
        if !req.want_logprobs {
            return Err(GatewayError::Protocol(
                "complete_beam requires want_logprobs".into(),
            ));
        }
        if !self.backend_for(req.role_tag).supports_logprobs() {
            return Err(GatewayError::UnsupportedCapability);
        }
        let resp = self.complete(req)?;
        let mut scored: Vec<Continuation> = Vec::with_capacity(resp.continuations.len());
        for c in resp.continuations {
            match c.logprob {
                Some(lp) if lp.is_finite() => scored.push(c),
                Some(lp) => {
                    return Err(GatewayError::Protocol(format!(
                        "non-finite logprob {lp} in beam response"
                    )))
                }
                None => return Err(GatewayError::UnsupportedCapability),
            }
        }
        if scored.len() < width {
            return Err(GatewayError::Protocol(format!(
                "beam of width {width} requested but backend returned {}",
                scored.len()
            )));
        }
        scored.sort_by(|a, b| {
            b.logprob
                .unwrap()
                .partial_cmp(&a.logprob.unwrap())
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        scored.truncate(width);
        Ok(ChatResponse {
            continuations: scored,
        })
    }
}

pub mod scripted;

pub mod http;

pub use http::{HttpBackend, HttpBackendConfig};
pub use scripted::{ScriptedBackend, ScriptedRule};
