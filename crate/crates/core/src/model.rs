//! Task-agnostic domain types and the canonical textual serialization of
//! dialogue states.
//!
//! Every type here is an immutable value; operations return new values and
//! never mutate their inputs.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// The five supported dialogue tasks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskId {
    Esconv,
    Cima,
    Cb,
    P4g,
    Extes,
}

impl TaskId {
    pub const ALL: [TaskId; 5] = [
        TaskId::Esconv,
        TaskId::Cima,
        TaskId::Cb,
        TaskId::P4g,
        TaskId::Extes,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            TaskId::Esconv => "esconv",
            TaskId::Cima => "cima",
            TaskId::Cb => "cb",
            TaskId::P4g => "p4g",
            TaskId::Extes => "extes",
        }
    }

    pub fn parse(name: &str) -> Result<TaskId, ModelError> {
        match name.to_ascii_lowercase().as_str() {
            "esconv" => Ok(TaskId::Esconv),
            "cima" => Ok(TaskId::Cima),
            "cb" => Ok(TaskId::Cb),
            "p4g" => Ok(TaskId::P4g),
            "extes" => Ok(TaskId::Extes),
            other => Err(ModelError::UnknownTask(other.to_string())),
        }
    }
}

impl fmt::Display for TaskId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Case information seeding one episode: the background text plus any
/// named slots the task's role prompts refer to.
///
/// `numeric_slots` is only populated for price negotiation (listed price,
/// buyer target price, seller desired price); `text_slots` carries fields
/// like `emotion_type`, `problem_type`, `product`, or `english_sentence`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseInfo {
    pub task_id: TaskId,
    pub background: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub numeric_slots: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub text_slots: BTreeMap<String, String>,
}

pub const SLOT_LISTED_PRICE: &str = "listed_price";
pub const SLOT_BUYER_TARGET_PRICE: &str = "buyer_target_price";
pub const SLOT_SELLER_DESIRED_PRICE: &str = "seller_desired_price";

impl CaseInfo {
    pub fn new(task_id: TaskId, background: impl Into<String>) -> Self {
        CaseInfo {
            task_id,
            background: background.into(),
            numeric_slots: BTreeMap::new(),
            text_slots: BTreeMap::new(),
        }
    }

    pub fn with_text_slot(mut self, key: &str, value: impl Into<String>) -> Self {
        self.text_slots.insert(key.to_string(), value.into());
        self
    }

    pub fn with_numeric_slot(mut self, key: &str, value: f64) -> Self {
        self.numeric_slots.insert(key.to_string(), value);
        self
    }

    pub fn text_slot(&self, key: &str) -> &str {
        self.text_slots.get(key).map(String::as_str).unwrap_or("")
    }

    pub fn listed_price(&self) -> Option<f64> {
        self.numeric_slots.get(SLOT_LISTED_PRICE).copied()
    }

    pub fn buyer_target_price(&self) -> Option<f64> {
        self.numeric_slots.get(SLOT_BUYER_TARGET_PRICE).copied()
    }

    pub fn seller_desired_price(&self) -> Option<f64> {
        self.numeric_slots.get(SLOT_SELLER_DESIRED_PRICE).copied()
    }

    /// Checks the task-specific slot invariants: price negotiation cases
    /// define all three prices with `listed_price > buyer_target_price > 0`;
    /// every other task has an empty numeric slot map.
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.task_id == TaskId::Cb {
            let listed = self
                .listed_price()
                .ok_or_else(|| ModelError::InvalidCase("missing listed_price".into()))?;
            let target = self
                .buyer_target_price()
                .ok_or_else(|| ModelError::InvalidCase("missing buyer_target_price".into()))?;
            if self.seller_desired_price().is_none() {
                return Err(ModelError::InvalidCase("missing seller_desired_price".into()));
            }
            if !(listed > target && target > 0.0) {
                return Err(ModelError::InvalidCase(format!(
                    "prices must satisfy listed ({listed}) > buyer target ({target}) > 0"
                )));
            }
        } else if !self.numeric_slots.is_empty() {
            return Err(ModelError::InvalidCase(format!(
                "{} cases must not define numeric slots",
                self.task_id
            )));
        }
        Ok(())
    }
}

/// Who produced an utterance. `System` is the planning agent; `User` is the
/// simulated (or human) counterpart.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Speaker {
    System,
    User,
}

impl Speaker {
    pub fn label(&self) -> &'static str {
        match self {
            Speaker::System => "System",
            Speaker::User => "User",
        }
    }
}

/// One turn of dialogue. `turn_index` is the utterance's position in the
/// episode history and must strictly increase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Utterance {
    pub speaker: Speaker,
    pub text: String,
    pub turn_index: usize,
}

impl Utterance {
    pub fn new(speaker: Speaker, text: impl Into<String>, turn_index: usize) -> Self {
        Utterance {
            speaker,
            text: text.into(),
            turn_index,
        }
    }
}

/// Ordered list of per-turn user emotion labels, one appended per completed
/// user turn. Rendered with " -> " separators.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EmotionTrace {
    pub labels: Vec<String>,
}

impl EmotionTrace {
    pub fn new() -> Self {
        EmotionTrace::default()
    }

    pub fn render(&self) -> String {
        self.labels.join(" -> ")
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// The planner's dialogue state: case information, the full utterance
/// history, the accumulated emotion trace, and the count of completed
/// system turns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DialogueState {
    pub case: CaseInfo,
    pub history: Vec<Utterance>,
    pub emotions: EmotionTrace,
    pub turn: usize,
}

impl DialogueState {
    pub fn new(case: CaseInfo) -> Self {
        DialogueState {
            case,
            history: Vec::new(),
            emotions: EmotionTrace::new(),
            turn: 0,
        }
    }

    /// Returns a new state with `u` appended. The turn counter advances only
    /// on system utterances.
    pub fn append_turn(&self, u: Utterance) -> Result<DialogueState, ModelError> {
        if u.turn_index != self.history.len() {
            return Err(ModelError::IndexMismatch {
                got: u.turn_index,
                expected: self.history.len(),
            });
        }
        let mut next = self.clone();
        let is_system = u.speaker == Speaker::System;
        next.history.push(u);
        if is_system {
            next.turn += 1;
        }
        Ok(next)
    }

    /// Returns a new state with `label` appended to the emotion trace.
    pub fn with_emotion(&self, label: impl Into<String>) -> DialogueState {
        let mut next = self.clone();
        next.emotions.labels.push(label.into());
        next
    }

    pub fn last_utterance(&self) -> Option<&Utterance> {
        self.history.last()
    }

    pub fn last_text_of(&self, speaker: Speaker) -> Option<&str> {
        self.history
            .iter()
            .rev()
            .find(|u| u.speaker == speaker)
            .map(|u| u.text.as_str())
    }
}

/// One catalog entry: a 1-based index, the strategy name, and the natural
/// language prompt injected into the system role prompt when the strategy
/// is executed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CatalogAction {
    pub index: usize,
    pub name: String,
    pub strategy_prompt: String,
}

/// The ordered, task-specific action set: indices are contiguous `1..=n`,
/// names are unique, and every action carries a non-empty strategy prompt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionCatalog {
    pub task_id: TaskId,
    pub actions: Vec<CatalogAction>,
}

impl ActionCatalog {
    pub fn new(task_id: TaskId, entries: &[(&str, &str)]) -> Self {
        let actions = entries
            .iter()
            .enumerate()
            .map(|(i, (name, prompt))| CatalogAction {
                index: i + 1,
                name: name.to_string(),
                strategy_prompt: prompt.to_string(),
            })
            .collect();
        ActionCatalog { task_id, actions }
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn get(&self, index: usize) -> Option<&CatalogAction> {
        if index == 0 {
            return None;
        }
        self.actions.get(index - 1)
    }

    pub fn contains(&self, index: usize) -> bool {
        index >= 1 && index <= self.actions.len()
    }

    pub fn action_name(&self, index: usize) -> Option<&str> {
        self.get(index).map(|a| a.name.as_str())
    }

    pub fn all_indices(&self) -> Vec<usize> {
        (1..=self.actions.len()).collect()
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let mut seen = std::collections::BTreeSet::new();
        for (i, action) in self.actions.iter().enumerate() {
            if action.index != i + 1 {
                return Err(ModelError::InvalidCatalog(format!(
                    "index {} at position {} is not contiguous",
                    action.index, i
                )));
            }
            if !seen.insert(action.name.as_str()) {
                return Err(ModelError::InvalidCatalog(format!(
                    "duplicate action name {:?}",
                    action.name
                )));
            }
            if action.strategy_prompt.trim().is_empty() {
                return Err(ModelError::InvalidCatalog(format!(
                    "action {:?} has an empty strategy prompt",
                    action.name
                )));
            }
        }
        Ok(())
    }
}

/// One replay-buffer item: the serialized source state, the action taken,
/// the scalar reward, the serialized successor state, the terminal flag,
/// and the successor state's candidate actions (used for the bootstrap
/// max; empty when `terminal`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state_text: String,
    pub action_index: usize,
    pub reward: f64,
    pub next_state_text: String,
    pub terminal: bool,
    pub candidate_indices_next: Vec<usize>,
}

/// Canonical textual serialization of a state, consumed both by the policy
/// prompt machinery and as the value-head input text.
///
/// The output is exactly:
/// `Case: {background}; History: {turns}; Emotions: {labels}; Actions: [{names}]; Next action:`
/// with history turns rendered one per line as `Speaker: text` and emotion
/// labels joined by `" -> "`. Deterministic for equal inputs.
pub fn serialize_state(state: &DialogueState, catalog: &ActionCatalog) -> String {
    serialize_state_with(state, catalog, true)
}

/// Like [`serialize_state`], with the emotion segment optionally omitted
/// (the emotion-ablated configuration).
pub fn serialize_state_with(
    state: &DialogueState,
    catalog: &ActionCatalog,
    include_emotions: bool,
) -> String {
    let history = state
        .history
        .iter()
        .map(|u| format!("{}: {}", u.speaker.label(), u.text))
        .collect::<Vec<_>>()
        .join("\n");
    let actions = catalog
        .actions
        .iter()
        .map(|a| a.name.as_str())
        .collect::<Vec<_>>()
        .join(", ");
    if include_emotions {
        format!(
            "Case: {}; History: {}; Emotions: {}; Actions: [{}]; Next action:",
            state.case.background,
            history,
            state.emotions.render(),
            actions
        )
    } else {
        format!(
            "Case: {}; History: {}; Actions: [{}]; Next action:",
            state.case.background, history, actions
        )
    }
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("utterance turn_index {got} does not match history length {expected}")]
    IndexMismatch { got: usize, expected: usize },
    #[error("invalid case: {0}")]
    InvalidCase(String),
    #[error("invalid catalog: {0}")]
    InvalidCatalog(String),
    #[error("unknown task {0:?}")]
    UnknownTask(String),
}
