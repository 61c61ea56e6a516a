//! Emotion tracking: infer a single emotion label from each user utterance
//! via the gateway and accumulate the per-turn trace.

use thiserror::Error;

use crate::gateway::{ChatRequest, Gateway, GatewayError, RoleTag, MAX_TOKENS_EMOTION};
use crate::model::EmotionTrace;
use crate::prompts;

/// Sentinel label recorded when the reply carries no alphabetic token.
pub const NEUTRAL_LABEL: &str = "neutral";

#[derive(Debug, Error)]
pub enum EmotionError {
    #[error("emotion reply contains no alphabetic token: {0:?}")]
    EmptyLabel(String),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

/// Extracts the label from a raw tracker reply: a leading `Emotion:` prefix
/// is stripped, then the first alphabetic token is lowercased.
pub fn parse_emotion_reply(raw: &str) -> Result<String, EmotionError> {
    let trimmed = raw.trim();
    let without_prefix = if trimmed.to_ascii_lowercase().starts_with("emotion:") {
        &trimmed["emotion:".len()..]
    } else {
        trimmed
    };
    let token: String = without_prefix
        .chars()
        .skip_while(|c| !c.is_alphabetic())
        .take_while(|c| c.is_alphabetic())
        .collect();
    if token.is_empty() {
        return Err(EmotionError::EmptyLabel(raw.to_string()));
    }
    Ok(token.to_lowercase())
}

/// Queries the tracker for the user's current emotion: one gateway call
/// with a small token budget, normalized to a single lowercase word.
pub fn infer_emotion(user_utterance: &str, gateway: &Gateway) -> Result<String, EmotionError> {
    let req = ChatRequest::single(
        RoleTag::Emotion,
        prompts::emotion_prompt(user_utterance),
        MAX_TOKENS_EMOTION,
    );
    let resp = gateway.complete(&req)?;
    parse_emotion_reply(resp.top_text())
}

/// Like [`infer_emotion`], but substitutes the `"neutral"` sentinel when
/// the reply has no alphabetic token.
pub fn infer_emotion_or_neutral(
    user_utterance: &str,
    gateway: &Gateway,
) -> Result<String, EmotionError> {
    match infer_emotion(user_utterance, gateway) {
        Ok(label) => Ok(label),
        Err(EmotionError::EmptyLabel(raw)) => {
            log::warn!("emotion reply {raw:?} had no alphabetic token; recording neutral");
            Ok(NEUTRAL_LABEL.to_string())
        }
        Err(other) => Err(other),
    }
}

/// Returns `trace` with `label` appended.
pub fn accumulate(trace: &EmotionTrace, label: impl Into<String>) -> EmotionTrace {
    let mut next = trace.clone();
    next.labels.push(label.into());
    next
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{GatewayConfig, ScriptedBackend};
    use std::sync::Arc;

    #[test]
    fn strips_punctuation_and_lowercases() {
        assert_eq!(parse_emotion_reply("Anxious.").unwrap(), "anxious");
        assert_eq!(parse_emotion_reply("  HOPEFUL!!").unwrap(), "hopeful");
    }

    #[test]
    fn strips_a_leading_emotion_prefix() {
        assert_eq!(parse_emotion_reply("Emotion: fear").unwrap(), "fear");
        assert_eq!(parse_emotion_reply("emotion:  Calm.").unwrap(), "calm");
    }

    #[test]
    fn non_alphabetic_reply_is_empty_label() {
        match parse_emotion_reply("!!!") {
            Err(EmotionError::EmptyLabel(_)) => {}
            other => panic!("expected EmptyLabel, got {other:?}"),
        }
    }

    #[test]
    fn neutral_sentinel_on_empty_label() {
        let backend = ScriptedBackend::from_script(
            r#"{"default": "!!!", "rules": []}"#,
        )
        .unwrap();
        let gw = Gateway::new(Arc::new(backend), GatewayConfig::default());
        assert_eq!(infer_emotion_or_neutral("whatever", &gw).unwrap(), "neutral");
    }

    #[test]
    fn scripted_inference_round_trip() {
        let backend = ScriptedBackend::from_script(
            r#"{"default": "calm", "rules": [
                {"role": "emotion", "contains": ["lost my job"], "text": "Anxious."}
            ]}"#,
        )
        .unwrap();
        let gw = Gateway::new(Arc::new(backend), GatewayConfig::default());
        assert_eq!(infer_emotion("I lost my job", &gw).unwrap(), "anxious");
        assert_eq!(infer_emotion("nice weather", &gw).unwrap(), "calm");
    }

    #[test]
    fn accumulate_appends_without_dedup() {
        let t0 = EmotionTrace::new();
        let t1 = accumulate(&t0, "disgust");
        assert_eq!(t1.labels, ["disgust"]);
        let t2 = accumulate(&accumulate(&t1, "betrayed"), "disoriented");
        assert_eq!(t2.render(), "disgust -> betrayed -> disoriented");
        let t3 = accumulate(&accumulate(&t2, "x"), "x");
        assert_eq!(t3.len(), 5);
        assert!(t0.is_empty());
    }
}
