//! Proactive dialogue planning engine.
//!
//! A frozen LLM proposes a small set of candidate dialogue strategies each
//! turn; a compact three-layer value head over fixed text embeddings picks
//! among them and improves online through temporal-difference learning
//! against self-play episodes judged by an LLM critic, with the user's
//! emotion trace folded into the planning state.

pub mod checkpoint;
pub mod config;
pub mod emotion;
pub mod encoder;
pub mod gateway;
pub mod learner;
pub mod metrics;
pub mod model;
pub mod prior;
pub mod prompts;
pub mod qhead;
pub mod runner;
pub mod selfplay;
pub mod tasks;

pub use config::RunConfig;
pub use model::{ActionCatalog, CaseInfo, DialogueState, EmotionTrace, TaskId, Transition, Utterance};
pub use runner::{run, RunArtifacts, RunMode};
