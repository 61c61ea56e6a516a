//! Run drivers: online training, evaluation, the fully scripted simulation
//! mode, interactive chat, and prior inspection. Shared by the CLI and the
//! Python bindings.

use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::checkpoint::{load_checkpoint, save_checkpoint, CheckpointError};
use crate::config::{EncoderKind, RunConfig};
use crate::encoder::{Encoder, HashEncoder, HttpEncoder, PairEncoder};
use crate::gateway::{
    ChatBackend, ChatRequest, Gateway, GatewayConfig, GatewayError, HttpBackend,
    HttpBackendConfig, RoleTag, ScriptedBackend, MAX_TOKENS_PROPOSAL,
};
use crate::learner::{epsilon_at, td_update, LearnerError, Optimizer, ReplayBuffer};
use crate::metrics::{MetricsError, MetricsReport};
use crate::model::{CaseInfo, DialogueState};
use crate::prior::{self, ProjectionTable};
use crate::qhead::{QHeadDims, QHeadParams};
use crate::selfplay::{
    run_episode, EnvError, EpisodeContext, EpisodeResult, PriorMode, RunOptions, UserSource,
};
use crate::tasks;

/// The bundled scripted-backend rules covering all five tasks.
pub fn bundled_mock_script() -> &'static str {
    include_str!("../assets/mock_script.json")
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Learner(#[from] LearnerError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunMode {
    Train,
    Eval,
    /// Scripted-backend end-to-end run (training updates included unless
    /// ablated), fully deterministic under a fixed seed.
    Simulate,
}

pub struct RunArtifacts {
    pub results: Vec<EpisodeResult>,
    pub metrics: MetricsReport,
    pub transcript_path: Option<PathBuf>,
    pub metrics_path: Option<PathBuf>,
    pub checkpoint_path: Option<PathBuf>,
    pub updates: u64,
    pub final_loss: Option<f64>,
    pub total_llm_calls: u64,
}

fn run_options(cfg: &RunConfig) -> RunOptions {
    RunOptions {
        k: cfg.k,
        prior_mode: cfg.prior_mode,
        beam_width: cfg.beam_width,
        use_prior: cfg.use_prior,
        use_emotion: cfg.use_emotion,
        use_rl: cfg.use_rl,
        max_prompt_chars: cfg.max_prompt_chars,
    }
}

/// Builds the gateway: scripted when `mock` is forced or set in config,
/// otherwise the OpenAI-compatible client with optional per-role endpoints.
pub fn build_gateway(cfg: &RunConfig, force_mock: bool) -> Result<Gateway, RunError> {
    let gw_config = GatewayConfig {
        call_cap: cfg.call_cap,
        ..GatewayConfig::default()
    };
    if force_mock || cfg.mock {
        let script = match &cfg.mock_script {
            Some(path) => fs::read_to_string(path)?,
            None => bundled_mock_script().to_string(),
        };
        let backend = Arc::new(ScriptedBackend::from_script(&script)?);
        return Ok(Gateway::new(backend, gw_config));
    }
    let endpoint = cfg.llm.endpoint.clone().ok_or_else(|| {
        RunError::Invalid(
            "no LLM endpoint configured; set [llm].endpoint, LLM_ENDPOINT, or use --mock".into(),
        )
    })?;
    let mut base = HttpBackendConfig::new(endpoint, cfg.llm.model.clone());
    base.api_key = cfg.llm.api_key.clone();
    base.supports_logprobs = cfg.llm.supports_logprobs;
    let default_backend: Arc<dyn ChatBackend> = Arc::new(HttpBackend::new(base.clone())?);
    let mut gateway = Gateway::new(default_backend, gw_config);
    for role in RoleTag::ALL {
        if let Some(over) = cfg.llm.roles.get(role.as_str()) {
            let mut role_cfg = base.clone();
            if let Some(e) = &over.endpoint {
                role_cfg.endpoint = e.clone();
            }
            if let Some(m) = &over.model {
                role_cfg.model = m.clone();
            }
            if let Some(k) = &over.api_key {
                role_cfg.api_key = Some(k.clone());
            }
            gateway = gateway.with_role_backend(role, Arc::new(HttpBackend::new(role_cfg)?));
        }
    }
    Ok(gateway)
}

pub fn build_encoder(cfg: &RunConfig) -> Result<Arc<dyn Encoder>, RunError> {
    match cfg.encoder.kind {
        EncoderKind::Hash => Ok(Arc::new(HashEncoder::new(cfg.model.embed_dim))),
        EncoderKind::Http => {
            let endpoint = cfg.encoder.endpoint.clone().ok_or_else(|| {
                RunError::Invalid("encoder kind is http but no endpoint configured".into())
            })?;
            Ok(Arc::new(
                HttpEncoder::new(endpoint, cfg.model.embed_dim)
                    .map_err(LearnerError::Encoder)?,
            ))
        }
    }
}

fn load_cases(cfg: &RunConfig) -> Result<Vec<CaseInfo>, RunError> {
    let cases = match &cfg.cases_file {
        Some(path) => tasks::load_cases(&fs::read_to_string(path)?)
            .map_err(|e| RunError::Invalid(e.to_string()))?,
        None => tasks::sample_cases(cfg.task),
    };
    if cases.is_empty() {
        return Err(RunError::Invalid("no cases to run".into()));
    }
    for case in &cases {
        if case.task_id != cfg.task {
            return Err(RunError::Invalid(format!(
                "case for task {} in a {} run",
                case.task_id, cfg.task
            )));
        }
    }
    Ok(cases)
}

fn load_projection(cfg: &RunConfig) -> Result<ProjectionTable, RunError> {
    match &cfg.projection_file {
        Some(path) => ProjectionTable::from_lines(cfg.task, &fs::read_to_string(path)?)
            .map_err(|e| RunError::Invalid(e.to_string())),
        None => Ok(ProjectionTable::default_for(cfg.task)),
    }
}

fn initial_params(cfg: &RunConfig) -> Result<QHeadParams, RunError> {
    if let Some(path) = &cfg.checkpoint {
        let params = load_checkpoint(path)?;
        if params.dims().input != cfg.model.embed_dim {
            return Err(RunError::Invalid(format!(
                "checkpoint input width {} does not match configured embed_dim {}",
                params.dims().input,
                cfg.model.embed_dim
            )));
        }
        return Ok(params);
    }
    let dims = QHeadDims {
        input: cfg.model.embed_dim,
        hidden1: cfg.model.hidden1,
        hidden2: cfg.model.hidden2,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    Ok(QHeadParams::new(dims, &mut rng))
}

fn episode_rng(seed: u64, episode_id: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ (episode_id.wrapping_add(1)).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

struct ArtifactWriter {
    transcript: Option<(PathBuf, fs::File)>,
    out_dir: Option<PathBuf>,
}

struct ArtifactPaths {
    transcript: Option<PathBuf>,
    metrics: Option<PathBuf>,
    checkpoint: Option<PathBuf>,
}

impl ArtifactWriter {
    fn new(out_dir: Option<&PathBuf>) -> Result<Self, RunError> {
        match out_dir {
            Some(dir) => {
                fs::create_dir_all(dir)?;
                let path = dir.join("transcripts.jsonl");
                let file = fs::File::create(&path)?;
                Ok(ArtifactWriter {
                    transcript: Some((path, file)),
                    out_dir: Some(dir.clone()),
                })
            }
            None => Ok(ArtifactWriter {
                transcript: None,
                out_dir: None,
            }),
        }
    }

    fn append(&mut self, result: &EpisodeResult) -> Result<(), RunError> {
        if let Some((_, file)) = &mut self.transcript {
            for record in &result.records {
                serde_json::to_writer(&mut *file, record)
                    .map_err(|e| RunError::Invalid(e.to_string()))?;
                file.write_all(b"\n")?;
            }
        }
        Ok(())
    }

    fn finish(
        mut self,
        metrics: &MetricsReport,
        params: Option<&QHeadParams>,
    ) -> Result<ArtifactPaths, RunError> {
        let transcript = match &mut self.transcript {
            Some((path, file)) => {
                file.flush()?;
                Some(path.clone())
            }
            None => None,
        };
        let mut paths = ArtifactPaths {
            transcript,
            metrics: None,
            checkpoint: None,
        };
        if let Some(dir) = &self.out_dir {
            let mpath = dir.join("metrics.json");
            let body = serde_json::to_string_pretty(metrics)
                .map_err(|e| RunError::Invalid(e.to_string()))?;
            fs::write(&mpath, body + "\n")?;
            paths.metrics = Some(mpath);
            if let Some(p) = params {
                let cpath = dir.join("qhead.ckpt");
                save_checkpoint(p, &cpath)?;
                paths.checkpoint = Some(cpath);
            }
        }
        Ok(paths)
    }
}

/// Runs a full train, eval, or simulate session and writes artifacts to
/// `cfg.out_dir` when set.
pub fn run(cfg: &RunConfig, mode: RunMode) -> Result<RunArtifacts, RunError> {
    let profile = tasks::profile_with_max_turns(cfg.task, cfg.max_turns);
    let projection = load_projection(cfg)?;
    let gateway = build_gateway(cfg, mode == RunMode::Simulate)?;
    let encoder = build_encoder(cfg)?;
    let cases = load_cases(cfg)?;
    let opts = run_options(cfg);
    let mut params = initial_params(cfg)?;

    let training = mode != RunMode::Eval && cfg.use_rl;
    let episodes = match mode {
        RunMode::Train => cfg.train.episodes,
        RunMode::Eval | RunMode::Simulate => cfg.eval_episodes,
    };
    let mut buffer = ReplayBuffer::new(cfg.train.buffer_capacity, cfg.seed.wrapping_add(1));
    let mut optimizer = Optimizer::new(cfg.train.optimizer);
    let mut writer = ArtifactWriter::new(cfg.out_dir.as_ref())?;
    let mut results = Vec::with_capacity(episodes);
    let mut updates: u64 = 0;
    let mut final_loss = None;

    for episode_id in 0..episodes as u64 {
        let case = &cases[(episode_id as usize) % cases.len()];
        let epsilon = match mode {
            RunMode::Eval => cfg.epsilon_eval,
            _ => {
                if cfg.use_rl {
                    epsilon_at(episode_id as usize, episodes, &cfg.train)
                } else {
                    cfg.epsilon_eval
                }
            }
        };
        let mut episode_encoder = PairEncoder::new(Arc::clone(&encoder));
        let mut rng = episode_rng(cfg.seed, episode_id);
        let mut ctx = EpisodeContext {
            profile: &profile,
            projection: &projection,
            gateway: &gateway,
            params: &params,
            encoder: &mut episode_encoder,
            rng: &mut rng,
            opts: &opts,
            epsilon,
            user_source: UserSource::Llm,
        };
        let result = run_episode(case, episode_id, &mut ctx)?;
        writer.append(&result)?;
        for t in &result.transitions {
            buffer.push(t.clone());
        }
        results.push(result);

        if training && buffer.len() >= cfg.train.batch_size {
            let steps = results.last().map(|r| r.transitions.len()).unwrap_or(0);
            let mut update_encoder = PairEncoder::new(Arc::clone(&encoder));
            for _ in 0..steps {
                let batch = buffer.sample(cfg.train.batch_size)?;
                let loss = td_update(
                    &mut params,
                    &batch,
                    &cfg.train,
                    &profile.catalog,
                    &mut update_encoder,
                    &mut optimizer,
                )?;
                updates += 1;
                final_loss = Some(loss);
                if params.train_steps % cfg.train.target_sync_every == 0 {
                    params.sync_target();
                }
            }
        }
    }

    // offline refinement passes over the final buffer
    if training && buffer.len() >= cfg.train.batch_size {
        let passes = cfg.train.epochs;
        let steps_per_pass = buffer.len() / cfg.train.batch_size;
        let mut update_encoder = PairEncoder::new(Arc::clone(&encoder));
        for _ in 0..passes * steps_per_pass {
            let batch = buffer.sample(cfg.train.batch_size)?;
            let loss = td_update(
                &mut params,
                &batch,
                &cfg.train,
                &profile.catalog,
                &mut update_encoder,
                &mut optimizer,
            )?;
            updates += 1;
            final_loss = Some(loss);
            if params.train_steps % cfg.train.target_sync_every == 0 {
                params.sync_target();
            }
        }
    }

    let metrics = MetricsReport::from_results(&results, profile.max_turns, cfg.at_count_failures)?;
    let save_params = if mode == RunMode::Eval { None } else { Some(&params) };
    let paths = writer.finish(&metrics, save_params)?;

    Ok(RunArtifacts {
        results,
        metrics,
        transcript_path: paths.transcript,
        metrics_path: paths.metrics,
        checkpoint_path: paths.checkpoint,
        updates,
        final_loss,
        total_llm_calls: gateway.total_calls(),
    })
}

/// Terminal hooks for the interactive chat mode.
pub trait ChatIo {
    /// Called once per turn with the chosen action and the system line.
    fn on_system_turn(&mut self, action_name: &str, system_text: &str);
    /// Returns the human's reply, or `None` to quit.
    fn read_user_line(&mut self) -> Option<String>;
}

/// Runs one episode with a human in the user seat. The system, critic, and
/// (when enabled) emotion roles still go through the gateway.
pub fn run_chat(
    cfg: &RunConfig,
    case_index: usize,
    io: &mut dyn ChatIo,
) -> Result<RunArtifacts, RunError> {
    let profile = tasks::profile_with_max_turns(cfg.task, cfg.max_turns);
    let projection = load_projection(cfg)?;
    let gateway = build_gateway(cfg, cfg.mock)?;
    let encoder = build_encoder(cfg)?;
    let cases = load_cases(cfg)?;
    let case = cases
        .get(case_index)
        .ok_or_else(|| RunError::Invalid(format!("case index {case_index} out of range")))?;
    let opts = run_options(cfg);
    let params = initial_params(cfg)?;
    let mut writer = ArtifactWriter::new(cfg.out_dir.as_ref())?;

    let mut episode_encoder = PairEncoder::new(Arc::clone(&encoder));
    let mut rng = episode_rng(cfg.seed, 0);
    let mut callback = |_state: &DialogueState, action_name: &str, system_text: &str| {
        io.on_system_turn(action_name, system_text);
        match io.read_user_line() {
            Some(line) if line.trim() == "/quit" => None,
            Some(line) => Some(line),
            None => None,
        }
    };
    let mut ctx = EpisodeContext {
        profile: &profile,
        projection: &projection,
        gateway: &gateway,
        params: &params,
        encoder: &mut episode_encoder,
        rng: &mut rng,
        opts: &opts,
        epsilon: cfg.epsilon_eval,
        user_source: UserSource::Callback(&mut callback),
    };
    let result = run_episode(case, 0, &mut ctx)?;
    writer.append(&result)?;
    let metrics = MetricsReport::from_results(
        std::slice::from_ref(&result),
        profile.max_turns,
        cfg.at_count_failures,
    )?;
    let paths = writer.finish(&metrics, None)?;
    Ok(RunArtifacts {
        total_llm_calls: gateway.total_calls(),
        results: vec![result],
        metrics,
        transcript_path: paths.transcript,
        metrics_path: paths.metrics,
        checkpoint_path: None,
        updates: 0,
        final_loss: None,
    })
}

/// Renders a human-readable report of the candidate machinery for one
/// case: the serialized state, the policy prompt, the raw policy reply,
/// and the parsed candidate set (with the estimated prior in beam mode).
pub fn inspect_prior(cfg: &RunConfig, case_index: usize) -> Result<String, RunError> {
    let profile = tasks::profile_with_max_turns(cfg.task, cfg.max_turns);
    let projection = load_projection(cfg)?;
    let gateway = build_gateway(cfg, cfg.mock)?;
    let cases = load_cases(cfg)?;
    let case = cases
        .get(case_index)
        .ok_or_else(|| RunError::Invalid(format!("case index {case_index} out of range")))?;
    let state = DialogueState::new(case.clone());
    let state_text =
        crate::model::serialize_state_with(&state, &profile.catalog, cfg.use_emotion);
    let prompt = prior::build_policy_prompt_with(
        &state,
        &profile.catalog,
        cfg.k,
        cfg.use_emotion,
        cfg.max_prompt_chars,
    );

    let mut out = String::new();
    out.push_str(&format!("state: {state_text}\n\n"));
    out.push_str(&format!("policy prompt:\n{prompt}\n\n"));
    match cfg.prior_mode {
        PriorMode::List => {
            let req = ChatRequest::single(RoleTag::Policy, prompt.clone(), MAX_TOKENS_PROPOSAL);
            let raw = gateway.complete(&req)?.top_text().to_string();
            let set = prior::candidates_from_raw(&raw, &profile.catalog, profile.noop_index, cfg.k);
            out.push_str(&format!("raw policy reply: {raw}\n"));
            out.push_str("candidates (list mode):\n");
            for idx in &set.indices {
                out.push_str(&format!(
                    "  {idx}: {}\n",
                    profile.catalog.action_name(*idx).unwrap_or("?")
                ));
            }
        }
        PriorMode::Beam => {
            let req = ChatRequest::single(RoleTag::Policy, prompt.clone(), MAX_TOKENS_PROPOSAL)
                .with_beam(cfg.beam_width);
            let resp = gateway.complete_beam(&req)?;
            let scored = resp.scored().expect("beam carries logprobs");
            out.push_str("beam continuations:\n");
            for (text, lp) in &scored {
                out.push_str(&format!("  {lp:+.4}  {text:?} -> {}\n", prior::project(text, &projection)));
            }
            let dist = prior::estimate_prior_beam(&scored, &projection);
            out.push_str("estimated prior:\n");
            for (idx, w) in &dist.weights {
                out.push_str(&format!(
                    "  {idx}: {w:.6}  {}\n",
                    profile.catalog.action_name(*idx).unwrap_or("?")
                ));
            }
            let set = prior::top_k(&dist, &profile.catalog, cfg.k);
            out.push_str(&format!("top-{} candidates: {:?}\n", cfg.k, set.indices));
        }
    }
    Ok(out)
}
