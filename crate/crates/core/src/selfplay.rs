//! Self-play orchestration: the per-turn protocol (prior → value selection
//! → system utterance → user reply → emotion → critic), terminal
//! classification, and critic-verdict-to-reward conversion.

use rand_chacha::ChaCha8Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::emotion;
use crate::encoder::PairEncoder;
use crate::gateway::{
    ChatRequest, Gateway, GatewayError, RoleTag, MAX_TOKENS_DIALOGUE, MAX_TOKENS_PROPOSAL,
};
use crate::model::{
    serialize_state_with, CaseInfo, DialogueState, ModelError, Speaker, TaskId, Transition,
    Utterance,
};
use crate::prior::{self, CandidateSet, ProjectionTable};
use crate::prompts;
use crate::qhead::{self, QHeadParams};
use crate::tasks::{TaskProfile, TerminalStatus};

#[derive(Debug, Error)]
pub enum EnvError {
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Encoder(#[from] crate::encoder::EncoderError),
    #[error(transparent)]
    Emotion(#[from] emotion::EmotionError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("turn cap reached; episode already terminal")]
    EpisodeOver,
    #[error("deal phrase present but no price parsed: {0:?}")]
    MalformedPrice(String),
    #[error("invalid case: {0}")]
    InvalidCase(String),
}

/// How candidate actions are produced each turn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PriorMode {
    /// One plain policy call parsed as a comma-separated index list.
    List,
    /// One logprob beam call marginalized through the projection table.
    Beam,
}

/// Per-run behavior switches, including the ablation toggles.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunOptions {
    pub k: usize,
    pub prior_mode: PriorMode,
    pub beam_width: u32,
    /// `--no-prior` clears this: candidates become the full catalog.
    pub use_prior: bool,
    /// `--no-emotion` clears this: no tracker calls, no emotion segments.
    pub use_emotion: bool,
    /// `--no-rl` clears this: no parameter updates during training runs.
    pub use_rl: bool,
    /// Optional per-prompt character budget; oldest history pairs are
    /// dropped until a prompt fits.
    pub max_prompt_chars: Option<usize>,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            k: 4,
            prior_mode: PriorMode::List,
            beam_width: 8,
            use_prior: true,
            use_emotion: true,
            use_rl: true,
            max_prompt_chars: None,
        }
    }
}

/// Where user turns come from: the user-role LLM, or an injected callback
/// receiving `(state, action_name, system_text)` (the interactive chat
/// mode and piped-input tests). A `None` reply ends the episode as failed.
pub enum UserSource<'a> {
    Llm,
    Callback(&'a mut dyn FnMut(&DialogueState, &str, &str) -> Option<String>),
}

/// One transcript line, serialized as one JSON object per turn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnRecord {
    pub episode_id: u64,
    pub task: TaskId,
    pub turn: usize,
    pub action_index: usize,
    pub action_name: String,
    pub system_text: String,
    pub user_text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub emotion: Option<String>,
    pub verdict: String,
    pub reward: f64,
    pub terminal: TerminalStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deal_price: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sl: Option<f64>,
}

/// Episode outcome plus everything needed for metrics and training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub episode_id: u64,
    pub task: TaskId,
    pub outcome: TerminalStatus,
    pub turns: usize,
    pub transcript: Vec<Utterance>,
    pub transitions: Vec<Transition>,
    pub records: Vec<TurnRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deal_price: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sl: Option<f64>,
}

/// Maps a raw critic reply onto `(reward, status)` by case-insensitive
/// containment against the profile's verdict options, first match wins.
/// Unmatched replies are logged and treated as reward 0, ongoing.
pub fn map_critic_verdict(raw: &str, profile: &TaskProfile) -> (f64, TerminalStatus) {
    let raw_lower = raw.to_lowercase();
    for rule in &profile.verdict_map {
        if raw_lower.contains(&rule.option_text.to_lowercase()) {
            return (rule.reward, rule.terminal);
        }
    }
    log::warn!(
        "CriticUnparseable: {:?} matched no verdict option for {}",
        raw,
        profile.task_id
    );
    (0.0, TerminalStatus::Ongoing)
}

/// Extracts the agreed price from a negotiation critic reply of the form
/// "They have reached a deal at [price]". Currency symbols and thousands
/// separators are stripped. Returns `None` for the no-deal sentence or any
/// reply without the deal phrase.
pub fn extract_deal_price(raw: &str) -> Result<Option<f64>, EnvError> {
    let lower = raw.to_lowercase();
    let Some(pos) = lower.find("reached a deal at") else {
        return Ok(None);
    };
    let tail = &raw[pos + "reached a deal at".len()..];
    let cleaned = tail.replace([',', '$', '€', '£'], "");
    let number = Regex::new(r"-?\d+(?:\.\d+)?").unwrap();
    match number.find(&cleaned) {
        Some(m) => Ok(Some(m.as_str().parse::<f64>().unwrap())),
        None => Err(EnvError::MalformedPrice(raw.to_string())),
    }
}

/// Buyer-side sale-to-list reward:
/// `(listed - deal) / (listed - buyer_target)`, clamped to `[0, 1]`.
pub fn cb_reward(deal_price: f64, case: &CaseInfo) -> Result<f64, EnvError> {
    let listed = case
        .listed_price()
        .ok_or_else(|| EnvError::InvalidCase("missing listed_price".into()))?;
    let target = case
        .buyer_target_price()
        .ok_or_else(|| EnvError::InvalidCase("missing buyer_target_price".into()))?;
    if listed <= target {
        return Err(EnvError::InvalidCase(format!(
            "listed price {listed} must exceed buyer target {target}"
        )));
    }
    Ok(((listed - deal_price) / (listed - target)).clamp(0.0, 1.0))
}

/// Splits a system reply of the shape `Emotion: ... Response: ...`,
/// keeping only the response segment for the transcript.
pub fn parse_system_reply(raw: &str) -> String {
    let lower = raw.to_lowercase();
    if let Some(pos) = lower.find("response:") {
        return raw[pos + "response:".len()..].trim().to_string();
    }
    // tolerate a bare leading emotion tag without a Response marker
    let tagless = Regex::new(r"(?i)^\s*emotion:\s*\w+[.,!;:]?\s*")
        .unwrap()
        .replace(raw, "");
    tagless.trim().to_string()
}

/// Everything a single episode borrows while it runs. Episodes are
/// independent; each owns its encoder cache and RNG stream.
pub struct EpisodeContext<'a> {
    pub profile: &'a TaskProfile,
    pub projection: &'a ProjectionTable,
    pub gateway: &'a Gateway,
    pub params: &'a QHeadParams,
    pub encoder: &'a mut PairEncoder,
    pub rng: &'a mut ChaCha8Rng,
    pub opts: &'a RunOptions,
    pub epsilon: f64,
    pub user_source: UserSource<'a>,
}

impl EpisodeContext<'_> {
    fn serialize(&self, state: &DialogueState) -> String {
        serialize_state_with(state, &self.profile.catalog, self.opts.use_emotion)
    }
}

/// Computes the turn's candidate set: full catalog when the prior is
/// ablated, otherwise one policy-role gateway call in the configured mode.
pub fn propose_candidates(
    state: &DialogueState,
    ctx: &mut EpisodeContext<'_>,
) -> Result<CandidateSet, EnvError> {
    let catalog = &ctx.profile.catalog;
    if !ctx.opts.use_prior {
        return Ok(CandidateSet::full_catalog(catalog));
    }
    let prompt = prior::build_policy_prompt_with(
        state,
        catalog,
        ctx.opts.k,
        ctx.opts.use_emotion,
        ctx.opts.max_prompt_chars,
    );
    match ctx.opts.prior_mode {
        PriorMode::List => {
            let req = ChatRequest::single(RoleTag::Policy, prompt, MAX_TOKENS_PROPOSAL);
            let resp = ctx.gateway.complete(&req)?;
            Ok(prior::candidates_from_raw(
                resp.top_text(),
                catalog,
                ctx.profile.noop_index,
                ctx.opts.k,
            ))
        }
        PriorMode::Beam => {
            let req = ChatRequest::single(RoleTag::Policy, prompt, MAX_TOKENS_PROPOSAL)
                .with_beam(ctx.opts.beam_width);
            let resp = ctx.gateway.complete_beam(&req)?;
            let scored = resp
                .scored()
                .expect("beam response carries logprobs by contract");
            let prior_dist = prior::estimate_prior_beam(&scored, ctx.projection);
            Ok(prior::top_k(&prior_dist, catalog, ctx.opts.k))
        }
    }
}

/// Output of one protocol turn. `candidates_used` is the candidate set for
/// the *incoming* state; the episode loop backfills it into the previous
/// transition's `candidate_indices_next`.
pub struct TurnOutput {
    pub next_state: DialogueState,
    pub transition: Transition,
    pub record: TurnRecord,
    pub status: TerminalStatus,
    pub candidates_used: CandidateSet,
}

/// Runs one turn of the protocol against `state`:
/// candidates → scored selection → system utterance → user reply →
/// emotion → critic verdict. The returned transition's terminal flag
/// reflects the critic verdict and the turn cap; its
/// `candidate_indices_next` is filled in by the caller from the *next*
/// turn's candidate set (terminal transitions keep it empty).
pub fn run_turn(
    state: &DialogueState,
    episode_id: u64,
    candidates: Option<CandidateSet>,
    ctx: &mut EpisodeContext<'_>,
) -> Result<TurnOutput, EnvError> {
    if state.turn >= ctx.profile.max_turns {
        return Err(EnvError::EpisodeOver);
    }
    let profile = ctx.profile;
    let catalog = &profile.catalog;
    let state_text = ctx.serialize(state);

    // (1) candidate actions for s_t
    let candidates = match candidates {
        Some(c) => c,
        None => propose_candidates(state, ctx)?,
    };

    // (2) value scores + ε-greedy selection
    let scored = qhead::score_candidates(ctx.params, &state_text, &candidates, catalog, ctx.encoder)?;
    let action_index = qhead::select_action(&scored, ctx.epsilon, ctx.rng);
    let action = catalog.get(action_index).expect("selected index in catalog");

    // (3) system utterance under the chosen strategy prompt
    let sys_prompt = prompts::system_prompt(
        profile,
        state,
        &action.strategy_prompt,
        ctx.opts.use_emotion,
        ctx.opts.max_prompt_chars,
    );
    let sys_raw = ctx
        .gateway
        .complete(&ChatRequest::single(RoleTag::System, sys_prompt, MAX_TOKENS_DIALOGUE))?
        .top_text()
        .to_string();
    let system_text = parse_system_reply(&sys_raw);
    let mut next = state.append_turn(Utterance::new(
        Speaker::System,
        system_text.clone(),
        state.history.len(),
    ))?;

    // (4) user reply
    let user_text = match &mut ctx.user_source {
        UserSource::Llm => {
            let prompt = prompts::user_prompt(profile, &next, ctx.opts.max_prompt_chars);
            ctx.gateway
                .complete(&ChatRequest::single(RoleTag::User, prompt, MAX_TOKENS_DIALOGUE))?
                .top_text()
                .trim()
                .to_string()
        }
        UserSource::Callback(get) => match get(&next, &action.name, &system_text) {
            Some(text) => text,
            None => {
                // caller quit mid-episode: surface as a failed episode
                return Err(EnvError::EpisodeOver);
            }
        },
    };
    next = next.append_turn(Utterance::new(
        Speaker::User,
        user_text.clone(),
        next.history.len(),
    ))?;

    // (5) emotion inference on the user turn
    let emotion_label = if ctx.opts.use_emotion {
        let label = emotion::infer_emotion_or_neutral(&user_text, ctx.gateway)?;
        next = next.with_emotion(label.clone());
        Some(label)
    } else {
        None
    };

    // (6) critic verdict → reward and terminal status
    let critic_prompt =
        prompts::critic_prompt(profile, &next, ctx.opts.use_emotion, ctx.opts.max_prompt_chars);
    let verdict = ctx
        .gateway
        .complete(&ChatRequest::single(RoleTag::Critic, critic_prompt, MAX_TOKENS_DIALOGUE))?
        .top_text()
        .to_string();

    let mut deal_price = None;
    let mut sl = None;
    let deal = if profile.task_id == TaskId::Cb {
        match extract_deal_price(&verdict) {
            Ok(found) => found,
            Err(EnvError::MalformedPrice(raw)) => {
                log::warn!("deal phrase without a parseable price, treating as no deal: {raw:?}");
                None
            }
            Err(other) => return Err(other),
        }
    } else {
        None
    };
    let (reward, mut status) = match deal {
        Some(price) => {
            let ratio = cb_reward(price, &state.case)?;
            deal_price = Some(price);
            sl = Some(ratio);
            (ratio, TerminalStatus::Completed)
        }
        None => map_critic_verdict(&verdict, profile),
    };

    // turn-cap: an ongoing verdict on the final turn fails the episode
    if status == TerminalStatus::Ongoing && next.turn >= profile.max_turns {
        status = TerminalStatus::Failed;
    }

    let terminal = status != TerminalStatus::Ongoing;
    let transition = Transition {
        state_text,
        action_index,
        reward,
        next_state_text: ctx.serialize(&next),
        terminal,
        candidate_indices_next: Vec::new(),
    };
    let record = TurnRecord {
        episode_id,
        task: profile.task_id,
        turn: next.turn,
        action_index,
        action_name: action.name.clone(),
        system_text,
        user_text,
        emotion: emotion_label,
        verdict,
        reward,
        terminal: status,
        deal_price,
        sl,
    };
    Ok(TurnOutput {
        next_state: next,
        transition,
        record,
        status,
        candidates_used: candidates,
    })
}

/// Runs one full episode from `case` until the critic completes it or the
/// turn cap fails it. Non-terminal transitions get their next-state
/// candidate sets backfilled from the following turn's policy query.
pub fn run_episode(
    case: &CaseInfo,
    episode_id: u64,
    ctx: &mut EpisodeContext<'_>,
) -> Result<EpisodeResult, EnvError> {
    case.validate().map_err(|e| EnvError::InvalidCase(e.to_string()))?;
    let mut state = DialogueState::new(case.clone());
    let mut transitions: Vec<Transition> = Vec::new();
    let mut records: Vec<TurnRecord> = Vec::new();
    let mut deal_price = None;
    let mut sl = None;

    let outcome = loop {
        let candidates = propose_candidates(&state, ctx)?;
        if let Some(prev) = transitions.last_mut() {
            if !prev.terminal {
                prev.candidate_indices_next = candidates.indices.clone();
            }
        }
        let out = match run_turn(&state, episode_id, Some(candidates), ctx) {
            Ok(out) => out,
            // interactive quit: wrap up as a failed partial episode
            Err(EnvError::EpisodeOver) => break TerminalStatus::Failed,
            Err(other) => return Err(other),
        };
        state = out.next_state;
        transitions.push(out.transition);
        if let Some(p) = out.record.deal_price {
            deal_price = Some(p);
            sl = out.record.sl;
        }
        records.push(out.record);
        match out.status {
            TerminalStatus::Ongoing => {}
            done => break done,
        }
    };

    Ok(EpisodeResult {
        episode_id,
        task: case.task_id,
        outcome,
        turns: state.turn,
        transcript: state.history,
        transitions,
        records,
        deal_price,
        sl,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::HashEncoder;
    use crate::gateway::{GatewayConfig, ScriptedBackend};
    use crate::qhead::{QHeadDims, QHeadParams};
    use crate::tasks;
    use rand::SeedableRng;
    use std::sync::Arc;

    fn esconv_profile() -> TaskProfile {
        tasks::profile(TaskId::Esconv)
    }

    #[test]
    fn verdict_mapping_returns_the_task_reward_values() {
        let p = esconv_profile();
        assert_eq!(
            map_critic_verdict("Yes, the patient's emotional issues have been resolved.", &p),
            (1.0, TerminalStatus::Completed)
        );
        let cima = tasks::profile(TaskId::Cima);
        assert_eq!(
            map_critic_verdict("No, the Student did not try to translate.", &cima),
            (-0.5, TerminalStatus::Ongoing)
        );
        let p4g = tasks::profile(TaskId::P4g);
        assert_eq!(
            map_critic_verdict(
                "The persuadee has a positive attitude towards donating but hasn't decided yet.",
                &p4g
            ),
            (0.1, TerminalStatus::Ongoing)
        );
    }

    #[test]
    fn unmatched_verdict_falls_back_to_zero_ongoing() {
        let p = esconv_profile();
        assert_eq!(map_critic_verdict("gibberish", &p), (0.0, TerminalStatus::Ongoing));
    }

    #[test]
    fn verdict_matching_is_case_insensitive_containment() {
        let p = esconv_profile();
        assert_eq!(
            map_critic_verdict(
                "Verdict: NO, THE PATIENT FEELS WORSE. (confidence high)",
                &p
            ),
            (-1.0, TerminalStatus::Ongoing)
        );
    }

    #[test]
    fn deal_price_extraction() {
        assert_eq!(extract_deal_price("They have reached a deal at 120").unwrap(), Some(120.0));
        assert_eq!(extract_deal_price("They have not reached a deal.").unwrap(), None);
        assert_eq!(
            extract_deal_price("They have reached a deal at $1,250").unwrap(),
            Some(1250.0)
        );
        assert_eq!(
            extract_deal_price("they have reached a deal at 99.50!").unwrap(),
            Some(99.5)
        );
        match extract_deal_price("They have reached a deal at a fair price") {
            Err(EnvError::MalformedPrice(_)) => {}
            other => panic!("expected MalformedPrice, got {other:?}"),
        }
    }

    #[test]
    fn cb_reward_matches_hand_values_and_clamps() {
        let case = &tasks::sample_cases(TaskId::Cb)[0]; // listed 150, target 100
        assert!((cb_reward(120.0, case).unwrap() - 0.6).abs() < 1e-12);
        assert_eq!(cb_reward(100.0, case).unwrap(), 1.0);
        assert_eq!(cb_reward(150.0, case).unwrap(), 0.0);
        assert_eq!(cb_reward(500.0, case).unwrap(), 0.0);
        assert_eq!(cb_reward(10.0, case).unwrap(), 1.0);
    }

    #[test]
    fn system_reply_parsing_keeps_only_the_response_segment() {
        assert_eq!(
            parse_system_reply("Emotion: anxious. Response: It sounds hard."),
            "It sounds hard."
        );
        assert_eq!(parse_system_reply("Just a plain reply."), "Just a plain reply.");
        assert_eq!(parse_system_reply("Emotion: calm. I hear you."), "I hear you.");
    }

    fn scripted_gateway(script: &str) -> Gateway {
        let backend = ScriptedBackend::from_script(script).unwrap();
        Gateway::new(Arc::new(backend), GatewayConfig::default()).with_recording()
    }

    fn toy_ctx_parts() -> (TaskProfile, ProjectionTable, QHeadParams, RunOptions) {
        (
            esconv_profile(),
            ProjectionTable::default_for(TaskId::Esconv),
            QHeadParams::zeros(QHeadDims { input: 16, hidden1: 8, hidden2: 8 }),
            RunOptions::default(),
        )
    }

    const SOLVE_ON_REASSURE: &str = r#"{
        "default": "Okay.",
        "rules": [
            {"role": "policy", "contains": ["Options:"], "text": "6,8,3,1"},
            {"role": "system", "contains": ["affirmation and reassurance"],
             "text": "Emotion: warm. Response: You have real strength and this will pass."},
            {"role": "system", "contains": [], "text": "Emotion: calm. Response: Tell me more."},
            {"role": "user", "contains": ["this will pass"], "text": "Thank you, I feel much better now."},
            {"role": "user", "contains": [], "text": "I am still worried about it."},
            {"role": "emotion", "contains": ["much better"], "text": "relieved"},
            {"role": "emotion", "contains": [], "text": "anxious"},
            {"role": "critic", "contains": ["I feel much better now"],
             "text": "Yes, the patient's emotional issues have been resolved."},
            {"role": "critic", "contains": [], "text": "No, the patient feels the same."}
        ]
    }"#;

    #[test]
    fn scripted_turn_is_deterministic_and_counts_five_calls() {
        let (profile, table, params, opts) = toy_ctx_parts();
        let case = tasks::sample_cases(TaskId::Esconv)[0].clone();
        let run = || {
            let gw = scripted_gateway(SOLVE_ON_REASSURE);
            let mut enc = PairEncoder::new(Arc::new(HashEncoder::new(16)));
            let mut rng = ChaCha8Rng::seed_from_u64(77);
            let mut ctx = EpisodeContext {
                profile: &profile,
                projection: &table,
                gateway: &gw,
                params: &params,
                encoder: &mut enc,
                rng: &mut rng,
                opts: &opts,
                epsilon: 0.5,
                user_source: UserSource::Llm,
            };
            let state = DialogueState::new(case.clone());
            let out = run_turn(&state, 0, None, &mut ctx).unwrap();
            (out.transition, out.record, gw.total_calls())
        };
        let (t1, r1, calls1) = run();
        let (t2, r2, calls2) = run();
        assert_eq!(t1, t2);
        assert_eq!(r1, r2);
        assert_eq!(calls1, 5);
        assert_eq!(calls2, 5);
    }

    #[test]
    fn completion_on_turn_one_when_the_critic_resolves() {
        let (profile, table, params, opts) = toy_ctx_parts();
        let case = tasks::sample_cases(TaskId::Esconv)[0].clone();
        let gw = scripted_gateway(SOLVE_ON_REASSURE);
        let mut enc = PairEncoder::new(Arc::new(HashEncoder::new(16)));
        // epsilon 0 + zero head: greedy tie goes to the first candidate (6).
        // Drive exploration instead so action 3 is reachable: use epsilon 1
        // with a seed that draws it on the first turn.
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut ctx = EpisodeContext {
            profile: &profile,
            projection: &table,
            gateway: &gw,
            params: &params,
            encoder: &mut enc,
            rng: &mut rng,
            opts: &opts,
            epsilon: 1.0,
            user_source: UserSource::Llm,
        };
        let result = run_episode(&case, 0, &mut ctx).unwrap();
        let solved_turn = result
            .records
            .iter()
            .position(|r| r.action_index == 3)
            .expect("exploration reaches the reassurance action");
        assert_eq!(result.outcome, TerminalStatus::Completed);
        assert_eq!(result.turns, solved_turn + 1);
        let last = result.transitions.last().unwrap();
        assert!(last.terminal);
        assert_eq!(last.reward, 1.0);
        // every non-terminal transition carries next-state candidates
        for t in &result.transitions[..result.transitions.len() - 1] {
            assert_eq!(t.candidate_indices_next, vec![6, 8, 3, 1]);
            assert!(!t.terminal);
        }
    }

    #[test]
    fn never_completing_episode_fails_at_the_turn_cap() {
        let (profile, table, params, opts) = toy_ctx_parts();
        let case = tasks::sample_cases(TaskId::Esconv)[0].clone();
        let gw = scripted_gateway(
            r#"{"default": "Okay.", "rules": [
                {"role": "policy", "contains": [], "text": "6,8,1,2"},
                {"role": "critic", "contains": [], "text": "No, the patient feels the same."}
            ]}"#,
        );
        let mut enc = PairEncoder::new(Arc::new(HashEncoder::new(16)));
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut ctx = EpisodeContext {
            profile: &profile,
            projection: &table,
            gateway: &gw,
            params: &params,
            encoder: &mut enc,
            rng: &mut rng,
            opts: &opts,
            epsilon: 0.0,
            user_source: UserSource::Llm,
        };
        let result = run_episode(&case, 0, &mut ctx).unwrap();
        assert_eq!(result.outcome, TerminalStatus::Failed);
        assert_eq!(result.turns, profile.max_turns);
        assert_eq!(result.transcript.len(), 2 * profile.max_turns);
        // one emotion label per completed user turn, exactly
        assert!(result.records.iter().all(|r| r.emotion.is_some()));
        assert_eq!(result.records.len(), profile.max_turns);
        let last = result.transitions.last().unwrap();
        assert!(last.terminal, "cap-failed episodes end in a terminal transition");
        assert_eq!(result.records.last().unwrap().terminal, TerminalStatus::Failed);
        // per-turn reward came from the "same" verdict
        assert_eq!(result.records[0].reward, -0.5);
    }

    #[test]
    fn run_turn_refuses_states_at_the_cap() {
        let (profile, table, params, opts) = toy_ctx_parts();
        let case = tasks::sample_cases(TaskId::Esconv)[0].clone();
        let gw = scripted_gateway(SOLVE_ON_REASSURE);
        let mut enc = PairEncoder::new(Arc::new(HashEncoder::new(16)));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut ctx = EpisodeContext {
            profile: &profile,
            projection: &table,
            gateway: &gw,
            params: &params,
            encoder: &mut enc,
            rng: &mut rng,
            opts: &opts,
            epsilon: 0.0,
            user_source: UserSource::Llm,
        };
        let mut state = DialogueState::new(case);
        state.turn = profile.max_turns;
        match run_turn(&state, 0, None, &mut ctx) {
            Err(EnvError::EpisodeOver) => {}
            Err(other) => panic!("expected EpisodeOver, got {other:?}"),
            Ok(_) => panic!("expected EpisodeOver, got a completed turn"),
        }
    }

    #[test]
    fn cb_episode_records_deal_price_and_sl() {
        let profile = tasks::profile(TaskId::Cb);
        let table = ProjectionTable::default_for(TaskId::Cb);
        let params = QHeadParams::zeros(QHeadDims { input: 16, hidden1: 8, hidden2: 8 });
        let opts = RunOptions::default();
        let case = tasks::sample_cases(TaskId::Cb)[0].clone(); // listed 150, target 100
        let gw = scripted_gateway(
            r#"{"default": "Okay.", "rules": [
                {"role": "policy", "contains": [], "text": "4,5,10,2"},
                {"role": "system", "contains": [], "text": "Emotion: hopeful. Response: Would you take 120 for it?"},
                {"role": "user", "contains": [], "text": "Fine, 120 works."},
                {"role": "emotion", "contains": [], "text": "satisfied"},
                {"role": "critic", "contains": ["120 works"], "text": "They have reached a deal at 120"},
                {"role": "critic", "contains": [], "text": "They have not reached a deal."}
            ]}"#,
        );
        let mut enc = PairEncoder::new(Arc::new(HashEncoder::new(16)));
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut ctx = EpisodeContext {
            profile: &profile,
            projection: &table,
            gateway: &gw,
            params: &params,
            encoder: &mut enc,
            rng: &mut rng,
            opts: &opts,
            epsilon: 0.0,
            user_source: UserSource::Llm,
        };
        let result = run_episode(&case, 0, &mut ctx).unwrap();
        assert_eq!(result.outcome, TerminalStatus::Completed);
        assert_eq!(result.turns, 1);
        assert_eq!(result.deal_price, Some(120.0));
        assert!((result.sl.unwrap() - 0.6).abs() < 1e-12);
        assert!((result.transitions[0].reward - 0.6).abs() < 1e-12);
    }

    #[test]
    fn piped_user_callback_drives_a_deterministic_chat_episode() {
        let (profile, table, params, opts) = toy_ctx_parts();
        let case = tasks::sample_cases(TaskId::Esconv)[0].clone();
        let gw = scripted_gateway(SOLVE_ON_REASSURE);
        let mut enc = PairEncoder::new(Arc::new(HashEncoder::new(16)));
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut lines = vec!["I feel much better now.".to_string()].into_iter();
        let mut next_line = move |_: &DialogueState, _: &str, _: &str| lines.next();
        let mut ctx = EpisodeContext {
            profile: &profile,
            projection: &table,
            gateway: &gw,
            params: &params,
            encoder: &mut enc,
            rng: &mut rng,
            opts: &opts,
            epsilon: 0.0,
            user_source: UserSource::Callback(&mut next_line),
        };
        let result = run_episode(&case, 0, &mut ctx).unwrap();
        assert_eq!(result.outcome, TerminalStatus::Completed);
        assert_eq!(result.turns, 1);
        // user role never hit the gateway
        assert_eq!(gw.calls_for(RoleTag::User), 0);
    }

    #[test]
    fn exhausted_user_callback_fails_the_partial_episode() {
        let (profile, table, params, opts) = toy_ctx_parts();
        let case = tasks::sample_cases(TaskId::Esconv)[0].clone();
        let gw = scripted_gateway(
            r#"{"default": "Okay.", "rules": [
                {"role": "critic", "contains": [], "text": "No, the patient feels the same."},
                {"role": "policy", "contains": [], "text": "6,8,1,2"}
            ]}"#,
        );
        let mut enc = PairEncoder::new(Arc::new(HashEncoder::new(16)));
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut lines = vec!["first reply".to_string()].into_iter();
        let mut next_line = move |_: &DialogueState, _: &str, _: &str| lines.next();
        let mut ctx = EpisodeContext {
            profile: &profile,
            projection: &table,
            gateway: &gw,
            params: &params,
            encoder: &mut enc,
            rng: &mut rng,
            opts: &opts,
            epsilon: 0.0,
            user_source: UserSource::Callback(&mut next_line),
        };
        let result = run_episode(&case, 0, &mut ctx).unwrap();
        assert_eq!(result.outcome, TerminalStatus::Failed);
        assert_eq!(result.turns, 1);
        assert_eq!(result.records.len(), 1);
    }
}
