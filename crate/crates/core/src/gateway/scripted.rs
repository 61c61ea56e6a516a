//! Deterministic scripted backend for desk-scale runs and tests.
//!
//! Responses are selected by the first rule whose role matches the request
//! and whose substrings all occur in the request's last message; unmatched
//! requests get the default response. Lookup is a pure function of
//! `(role_tag, last message)`, so runs are bit-reproducible.

use serde::{Deserialize, Serialize};

use super::{ChatBackend, ChatRequest, ChatResponse, Continuation, GatewayError, RoleTag};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScriptedRule {
    pub role: RoleTag,
    /// All substrings must occur (case-sensitive) in the last message.
    #[serde(default)]
    pub contains: Vec<String>,
    /// Plain single-continuation reply.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    /// Scored continuations served to beam requests.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub beam: Vec<BeamEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BeamEntry {
    pub text: String,
    pub logprob: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScriptFile {
    pub default: String,
    #[serde(default)]
    pub rules: Vec<ScriptedRule>,
}

pub struct ScriptedBackend {
    rules: Vec<ScriptedRule>,
    default_response: ChatResponse,
}

impl ScriptedBackend {
    pub fn new(rules: Vec<ScriptedRule>, default_text: impl Into<String>) -> Self {
        ScriptedBackend {
            rules,
            default_response: ChatResponse::text(default_text),
        }
    }

    /// Parses the JSON script format:
    ///
    /// ```json
    /// {
    ///   "default": "Okay.",
    ///   "rules": [
    ///     {"role": "policy", "contains": ["tutoring"], "text": "1,2,3,4"},
    ///     {"role": "policy", "contains": ["?"],
    ///      "beam": [{"text": "Question", "logprob": -0.5}]}
    ///   ]
    /// }
    /// ```
    pub fn from_script(text: &str) -> Result<Self, GatewayError> {
        let file: ScriptFile =
            serde_json::from_str(text).map_err(|e| GatewayError::BadScript(e.to_string()))?;
        for (i, rule) in file.rules.iter().enumerate() {
            if rule.text.is_none() && rule.beam.is_empty() {
                return Err(GatewayError::BadScript(format!(
                    "rule {i} has neither text nor beam"
                )));
            }
        }
        Ok(ScriptedBackend::new(file.rules, file.default))
    }

    fn lookup(&self, req: &ChatRequest) -> Option<&ScriptedRule> {
        let key = req.last_message_text();
        self.rules
            .iter()
            .find(|r| r.role == req.role_tag && r.contains.iter().all(|s| key.contains(s)))
    }
}

impl ChatBackend for ScriptedBackend {
    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        match self.lookup(req) {
            Some(rule) => {
                if req.want_logprobs && !rule.beam.is_empty() {
                    Ok(ChatResponse {
                        continuations: rule
                            .beam
                            .iter()
                            .map(|b| Continuation {
                                text: b.text.clone(),
                                logprob: Some(b.logprob),
                            })
                            .collect(),
                    })
                } else if let Some(text) = &rule.text {
                    Ok(ChatResponse::text(text.clone()))
                } else {
                    // Beam-only rule answering a plain request: top entry wins.
                    let top = rule
                        .beam
                        .iter()
                        .max_by(|a, b| a.logprob.partial_cmp(&b.logprob).unwrap())
                        .unwrap();
                    Ok(ChatResponse::text(top.text.clone()))
                }
            }
            None => Ok(self.default_response.clone()),
        }
    }

    fn supports_logprobs(&self) -> bool {
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{Gateway, GatewayConfig, MAX_TOKENS_PROPOSAL};
    use std::sync::Arc;

    fn backend() -> ScriptedBackend {
        ScriptedBackend::from_script(
            r#"{
                "default": "fallback",
                "rules": [
                    {"role": "policy", "contains": ["Options:"], "text": "6,8,3,1"},
                    {"role": "critic", "contains": ["deal"], "text": "They have not reached a deal."},
                    {"role": "policy", "contains": ["beam me"],
                     "beam": [
                        {"text": "Question", "logprob": -1.2},
                        {"text": "Reflection of feelings", "logprob": -0.3},
                        {"text": "Information", "logprob": -2.5}
                     ]}
                ]
            }"#,
        )
        .unwrap()
    }

    #[test]
    fn matched_key_returns_canned_response_verbatim() {
        let b = backend();
        let req = ChatRequest::single(RoleTag::Policy, "... Options: (1) ...", MAX_TOKENS_PROPOSAL);
        assert_eq!(b.complete(&req).unwrap().top_text(), "6,8,3,1");
    }

    #[test]
    fn unmatched_key_returns_default() {
        let b = backend();
        let req = ChatRequest::single(RoleTag::User, "anything", 100);
        assert_eq!(b.complete(&req).unwrap().top_text(), "fallback");
        // role mismatch on an otherwise matching key also falls through
        let req = ChatRequest::single(RoleTag::System, "Options:", 100);
        assert_eq!(b.complete(&req).unwrap().top_text(), "fallback");
    }

    #[test]
    fn beam_returns_sorted_pairs() {
        let gw = Gateway::new(Arc::new(backend()), GatewayConfig::default());
        let req = ChatRequest::single(RoleTag::Policy, "beam me up", MAX_TOKENS_PROPOSAL).with_beam(3);
        let resp = gw.complete_beam(&req).unwrap();
        let texts: Vec<&str> = resp.continuations.iter().map(|c| c.text.as_str()).collect();
        assert_eq!(texts, ["Reflection of feelings", "Question", "Information"]);
        let lps: Vec<f64> = resp.continuations.iter().map(|c| c.logprob.unwrap()).collect();
        assert!(lps.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn beam_width_one_keeps_only_the_top_continuation() {
        let gw = Gateway::new(Arc::new(backend()), GatewayConfig::default());
        let req = ChatRequest::single(RoleTag::Policy, "beam me up", MAX_TOKENS_PROPOSAL).with_beam(1);
        let resp = gw.complete_beam(&req).unwrap();
        assert_eq!(resp.continuations.len(), 1);
        assert_eq!(resp.top_text(), "Reflection of feelings");
    }

    #[test]
    fn beam_against_textual_rule_lacks_logprobs() {
        let gw = Gateway::new(Arc::new(backend()), GatewayConfig::default());
        let req = ChatRequest::single(RoleTag::Policy, "Options:", MAX_TOKENS_PROPOSAL).with_beam(2);
        match gw.complete_beam(&req) {
            Err(GatewayError::UnsupportedCapability) => {}
            other => panic!("expected unsupported capability, got {other:?}"),
        }
    }

    #[test]
    fn identical_request_sequences_yield_identical_responses() {
        let b = backend();
        let reqs = [
            ChatRequest::single(RoleTag::Policy, "Options: x", 25),
            ChatRequest::single(RoleTag::Critic, "was a deal made", 25),
            ChatRequest::single(RoleTag::User, "hi", 100),
        ];
        let run = |b: &ScriptedBackend| -> Vec<String> {
            reqs.iter()
                .map(|r| b.complete(r).unwrap().top_text().to_string())
                .collect()
        };
        assert_eq!(run(&b), run(&b));
    }

    #[test]
    fn concurrent_callers_each_get_their_own_deterministic_response() {
        let gw = std::sync::Arc::new(Gateway::new(
            Arc::new(backend()),
            GatewayConfig::default(),
        ));
        let mut handles = Vec::new();
        for i in 0..8 {
            let gw = std::sync::Arc::clone(&gw);
            handles.push(std::thread::spawn(move || {
                let (req, want) = if i % 2 == 0 {
                    (ChatRequest::single(RoleTag::Policy, "Options: x", 25), "6,8,3,1")
                } else {
                    (ChatRequest::single(RoleTag::User, "hi", 100), "fallback")
                };
                for _ in 0..50 {
                    assert_eq!(gw.complete(&req).unwrap().top_text(), want);
                }
            }));
        }
        for h in handles {
            h.join().unwrap();
        }
        assert_eq!(gw.total_calls(), 400);
    }

    #[test]
    fn rule_without_text_or_beam_is_rejected() {
        let err = ScriptedBackend::from_script(
            r#"{"default": "x", "rules": [{"role": "policy", "contains": ["a"]}]}"#,
        )
        .err()
        .unwrap();
        assert!(matches!(err, GatewayError::BadScript(_)));
    }
}
