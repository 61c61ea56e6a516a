//! Python bindings: the main planning types and operations, plus the
//! scripted end-to-end simulation entry point.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use dialoplan_core::checkpoint;
use dialoplan_core::config::{ModelConfig, RunConfig};
use dialoplan_core::encoder::{Encoder, HashEncoder, PairEncoder};
use dialoplan_core::learner::{
    td_update, Optimizer, OptimizerKind, ReplayBuffer, TrainConfig,
};
use dialoplan_core::model::{
    serialize_state_with, CaseInfo, DialogueState, Speaker, TaskId, Transition, Utterance,
};
use dialoplan_core::prior::{self, PriorDistribution, ProjectionTable};
use dialoplan_core::qhead::{self, QHeadDims, QHeadParams, ScoredCandidates};
use dialoplan_core::runner::{self, RunMode};
use dialoplan_core::selfplay::PriorMode;
use dialoplan_core::tasks;

fn parse_task(name: &str) -> PyResult<TaskId> {
    TaskId::parse(name).map_err(|e| PyValueError::new_err(e.to_string()))
}

fn value_err<E: std::fmt::Display>(e: E) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Ordered task-specific action set.
#[pyclass(name = "Catalog")]
struct PyCatalog {
    inner: dialoplan_core::ActionCatalog,
}

#[pymethods]
impl PyCatalog {
    #[new]
    fn new(task: &str) -> PyResult<Self> {
        Ok(PyCatalog {
            inner: tasks::catalog(parse_task(task)?),
        })
    }

    #[getter]
    fn size(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn task(&self) -> String {
        self.inner.task_id.to_string()
    }

    fn action_name(&self, index: usize) -> PyResult<String> {
        self.inner
            .action_name(index)
            .map(str::to_string)
            .ok_or_else(|| PyValueError::new_err(format!("index {index} outside catalog")))
    }

    fn strategy_prompt(&self, index: usize) -> PyResult<String> {
        self.inner
            .get(index)
            .map(|a| a.strategy_prompt.clone())
            .ok_or_else(|| PyValueError::new_err(format!("index {index} outside catalog")))
    }

    fn names(&self) -> Vec<String> {
        self.inner.actions.iter().map(|a| a.name.clone()).collect()
    }

    #[getter]
    fn noop_index(&self) -> usize {
        tasks::noop_index(self.inner.task_id)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

/// Case information seeding one episode.
#[pyclass(name = "Case", from_py_object)]
#[derive(Clone)]
struct PyCase {
    inner: CaseInfo,
}

#[pymethods]
impl PyCase {
    #[new]
    #[pyo3(signature = (task, background, text_slots=None, numeric_slots=None))]
    fn new(
        task: &str,
        background: &str,
        text_slots: Option<BTreeMap<String, String>>,
        numeric_slots: Option<BTreeMap<String, f64>>,
    ) -> PyResult<Self> {
        let mut inner = CaseInfo::new(parse_task(task)?, background);
        if let Some(slots) = text_slots {
            inner.text_slots = slots;
        }
        if let Some(slots) = numeric_slots {
            inner.numeric_slots = slots;
        }
        inner.validate().map_err(value_err)?;
        Ok(PyCase { inner })
    }

    #[getter]
    fn background(&self) -> String {
        self.inner.background.clone()
    }

    #[getter]
    fn task(&self) -> String {
        self.inner.task_id.to_string()
    }
}

/// Bundled sample cases for a task.
#[pyfunction]
fn sample_cases(task: &str) -> PyResult<Vec<PyCase>> {
    Ok(tasks::sample_cases(parse_task(task)?)
        .into_iter()
        .map(|inner| PyCase { inner })
        .collect())
}

/// Mutable dialogue-state builder over immutable core values.
#[pyclass(name = "State")]
struct PyState {
    inner: DialogueState,
}

#[pymethods]
impl PyState {
    #[new]
    fn new(case: PyCase) -> Self {
        PyState {
            inner: DialogueState::new(case.inner),
        }
    }

    fn append_system(&mut self, text: &str) -> PyResult<()> {
        let u = Utterance::new(Speaker::System, text, self.inner.history.len());
        self.inner = self.inner.append_turn(u).map_err(value_err)?;
        Ok(())
    }

    fn append_user(&mut self, text: &str) -> PyResult<()> {
        let u = Utterance::new(Speaker::User, text, self.inner.history.len());
        self.inner = self.inner.append_turn(u).map_err(value_err)?;
        Ok(())
    }

    fn add_emotion(&mut self, label: &str) {
        self.inner = self.inner.with_emotion(label);
    }

    #[getter]
    fn turn(&self) -> usize {
        self.inner.turn
    }

    #[getter]
    fn emotions(&self) -> Vec<String> {
        self.inner.emotions.labels.clone()
    }

    fn history(&self) -> Vec<(String, String)> {
        self.inner
            .history
            .iter()
            .map(|u| (u.speaker.label().to_string(), u.text.clone()))
            .collect()
    }

    /// Canonical serialization used for prompting and value-head input.
    #[pyo3(signature = (include_emotions=true))]
    fn serialize(&self, include_emotions: bool) -> String {
        let catalog = tasks::catalog(self.inner.case.task_id);
        serialize_state_with(&self.inner, &catalog, include_emotions)
    }

    /// The policy-planner prompt asking for the top-k actions.
    #[pyo3(signature = (k=4, include_emotions=true))]
    fn policy_prompt(&self, k: usize, include_emotions: bool) -> String {
        let catalog = tasks::catalog(self.inner.case.task_id);
        prior::build_policy_prompt_with(&self.inner, &catalog, k, include_emotions, None)
    }
}

/// Parses a list-mode policy reply into k distinct valid indices,
/// substituting the no-op fallback when the reply carries no digits.
#[pyfunction]
#[pyo3(signature = (raw, task, k=4))]
fn parse_topk(raw: &str, task: &str, k: usize) -> PyResult<Vec<usize>> {
    let task = parse_task(task)?;
    let catalog = tasks::catalog(task);
    Ok(prior::candidates_from_raw(raw, &catalog, tasks::noop_index(task), k).indices)
}

/// Projects free-form text onto a catalog action index.
#[pyfunction]
fn project(text: &str, task: &str) -> PyResult<usize> {
    let table = ProjectionTable::default_for(parse_task(task)?);
    Ok(prior::project(text, &table))
}

/// Estimates the projected prior from `(text, logprob)` beam continuations.
#[pyfunction]
fn beam_prior(continuations: Vec<(String, f64)>, task: &str) -> PyResult<BTreeMap<usize, f64>> {
    if continuations.is_empty() {
        return Err(PyValueError::new_err("continuations must be non-empty"));
    }
    let table = ProjectionTable::default_for(parse_task(task)?);
    Ok(prior::estimate_prior_beam(&continuations, &table).weights)
}

/// Top-k actions of a prior distribution (ties to the lower index, padded
/// with unused actions).
#[pyfunction]
#[pyo3(signature = (weights, task, k=4))]
fn top_k(weights: BTreeMap<usize, f64>, task: &str, k: usize) -> PyResult<Vec<usize>> {
    let catalog = tasks::catalog(parse_task(task)?);
    let prior = PriorDistribution { weights };
    Ok(prior::top_k(&prior, &catalog, k).indices)
}

/// The three-layer value head over the built-in deterministic hash
/// encoder, with a replay buffer trainer.
#[pyclass(name = "QHead")]
struct PyQHead {
    params: QHeadParams,
    encoder: Arc<dyn Encoder>,
    rng: ChaCha8Rng,
    optimizer: Optimizer,
}

#[pymethods]
impl PyQHead {
    #[new]
    #[pyo3(signature = (embed_dim=64, hidden1=64, hidden2=64, seed=42))]
    fn new(embed_dim: usize, hidden1: usize, hidden2: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = QHeadParams::new(
            QHeadDims {
                input: embed_dim,
                hidden1,
                hidden2,
            },
            &mut rng,
        );
        PyQHead {
            params,
            encoder: Arc::new(HashEncoder::new(embed_dim)),
            rng,
            optimizer: Optimizer::new(OptimizerKind::Sgd),
        }
    }

    #[getter]
    fn train_steps(&self) -> u64 {
        self.params.train_steps
    }

    /// Scalar value of one (state, action) pair.
    #[pyo3(signature = (state_text, action_name, target=false))]
    fn forward(&self, state_text: &str, action_name: &str, target: bool) -> PyResult<f64> {
        let mut enc = PairEncoder::new(Arc::clone(&self.encoder));
        let x = enc.encode_pair(state_text, action_name).map_err(value_err)?;
        Ok(self.params.q_forward(&x, target))
    }

    /// Raw scores and softmax probabilities for a candidate list.
    fn score(&self, state_text: &str, action_names: Vec<String>) -> PyResult<(Vec<f64>, Vec<f64>)> {
        if action_names.is_empty() {
            return Err(PyValueError::new_err("candidate list must be non-empty"));
        }
        let mut enc = PairEncoder::new(Arc::clone(&self.encoder));
        let mut raw = Vec::with_capacity(action_names.len());
        for name in &action_names {
            let x = enc.encode_pair(state_text, name).map_err(value_err)?;
            raw.push(self.params.q_forward(&x, false));
        }
        let probs = qhead::softmax(&raw);
        Ok((raw, probs))
    }

    /// ε-greedy pick over candidate indices scored against `state_text`.
    fn select(
        &mut self,
        state_text: &str,
        candidates: Vec<usize>,
        task: &str,
        epsilon: f64,
    ) -> PyResult<usize> {
        if !(0.0..=1.0).contains(&epsilon) {
            return Err(PyValueError::new_err("epsilon must lie in [0, 1]"));
        }
        let catalog = tasks::catalog(parse_task(task)?);
        let mut enc = PairEncoder::new(Arc::clone(&self.encoder));
        let mut raw = Vec::with_capacity(candidates.len());
        for &idx in &candidates {
            let name = catalog
                .action_name(idx)
                .ok_or_else(|| PyValueError::new_err(format!("index {idx} outside catalog")))?;
            let x = enc.encode_pair(state_text, name).map_err(value_err)?;
            raw.push(self.params.q_forward(&x, false));
        }
        let probs = qhead::softmax(&raw);
        let scored = ScoredCandidates {
            indices: candidates,
            raw_scores: raw,
            probs,
        };
        Ok(qhead::select_action(&scored, epsilon, &mut self.rng))
    }

    /// One TD update over a sampled minibatch; returns the pre-step loss.
    #[pyo3(signature = (buffer, task, batch_size=32, gamma=0.999, learning_rate=1e-3))]
    fn td_update(
        &mut self,
        buffer: &mut PyReplayBuffer,
        task: &str,
        batch_size: usize,
        gamma: f64,
        learning_rate: f64,
    ) -> PyResult<f64> {
        let catalog = tasks::catalog(parse_task(task)?);
        let batch = buffer.inner.sample(batch_size).map_err(value_err)?;
        let cfg = TrainConfig {
            gamma,
            batch_size,
            learning_rate,
            ..TrainConfig::default()
        };
        let mut enc = PairEncoder::new(Arc::clone(&self.encoder));
        td_update(
            &mut self.params,
            &batch,
            &cfg,
            &catalog,
            &mut enc,
            &mut self.optimizer,
        )
        .map_err(value_err)
    }

    fn sync_target(&mut self) {
        self.params.sync_target();
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        checkpoint::save_checkpoint(&self.params, &path)
            .map_err(|e| PyIOError::new_err(e.to_string()))
    }

    /// Loads a checkpoint; the head keeps its encoder width so the
    /// checkpoint must match the constructor's `embed_dim`.
    fn load(&mut self, path: PathBuf) -> PyResult<()> {
        let params =
            checkpoint::load_checkpoint(&path).map_err(|e| PyIOError::new_err(e.to_string()))?;
        if params.dims().input != self.encoder.dim() {
            return Err(PyValueError::new_err(format!(
                "checkpoint input width {} does not match encoder width {}",
                params.dims().input,
                self.encoder.dim()
            )));
        }
        self.params = params;
        Ok(())
    }
}

/// FIFO replay buffer of transitions.
#[pyclass(name = "ReplayBuffer")]
struct PyReplayBuffer {
    inner: ReplayBuffer,
}

#[pymethods]
impl PyReplayBuffer {
    #[new]
    #[pyo3(signature = (capacity=10_000, seed=0))]
    fn new(capacity: usize, seed: u64) -> PyResult<Self> {
        if capacity == 0 {
            return Err(PyValueError::new_err("capacity must be positive"));
        }
        Ok(PyReplayBuffer {
            inner: ReplayBuffer::new(capacity, seed),
        })
    }

    #[pyo3(signature = (state_text, action_index, reward, next_state_text="", terminal=true, next_candidates=vec![]))]
    fn push(
        &mut self,
        state_text: &str,
        action_index: usize,
        reward: f64,
        next_state_text: &str,
        terminal: bool,
        next_candidates: Vec<usize>,
    ) -> PyResult<()> {
        if !terminal && next_candidates.is_empty() {
            return Err(PyValueError::new_err(
                "non-terminal transitions need next-state candidates",
            ));
        }
        self.inner.push(Transition {
            state_text: state_text.to_string(),
            action_index,
            reward,
            next_state_text: next_state_text.to_string(),
            terminal,
            candidate_indices_next: next_candidates,
        });
        Ok(())
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

/// Runs the fully scripted end-to-end simulation and returns its metrics
/// (plus artifact paths when `out_dir` is given).
#[pyfunction]
#[pyo3(signature = (task="esconv", episodes=10, seed=42, k=4, epsilon_eval=0.5,
                    out_dir=None, no_rl=false, no_prior=false, no_emotion=false,
                    beam=false, embed_dim=32, hidden=16))]
#[allow(clippy::too_many_arguments)]
fn simulate(
    py: Python<'_>,
    task: &str,
    episodes: usize,
    seed: u64,
    k: usize,
    epsilon_eval: f64,
    out_dir: Option<PathBuf>,
    no_rl: bool,
    no_prior: bool,
    no_emotion: bool,
    beam: bool,
    embed_dim: usize,
    hidden: usize,
) -> PyResult<Py<PyDict>> {
    let cfg = RunConfig {
        task: parse_task(task)?,
        eval_episodes: episodes,
        seed,
        k,
        epsilon_eval,
        out_dir,
        use_rl: !no_rl,
        use_prior: !no_prior,
        use_emotion: !no_emotion,
        prior_mode: if beam { PriorMode::Beam } else { PriorMode::List },
        mock: true,
        model: ModelConfig {
            embed_dim,
            hidden1: hidden,
            hidden2: hidden,
        },
        ..RunConfig::default()
    };
    let artifacts = runner::run(&cfg, RunMode::Simulate).map_err(value_err)?;
    let dict = PyDict::new(py);
    dict.set_item("task", artifacts.metrics.task.to_string())?;
    dict.set_item("n_episodes", artifacts.metrics.n_episodes)?;
    dict.set_item("at", artifacts.metrics.at)?;
    dict.set_item("sr", artifacts.metrics.sr)?;
    dict.set_item("sl_avg", artifacts.metrics.sl_avg)?;
    dict.set_item("updates", artifacts.updates)?;
    dict.set_item("llm_calls", artifacts.total_llm_calls)?;
    dict.set_item(
        "transcript_path",
        artifacts.transcript_path.map(|p| p.display().to_string()),
    )?;
    dict.set_item(
        "metrics_path",
        artifacts.metrics_path.map(|p| p.display().to_string()),
    )?;
    dict.set_item(
        "checkpoint_path",
        artifacts.checkpoint_path.map(|p| p.display().to_string()),
    )?;
    Ok(dict.unbind())
}

#[pymodule]
fn dialoplan(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<PyCatalog>()?;
    m.add_class::<PyCase>()?;
    m.add_class::<PyState>()?;
    m.add_class::<PyQHead>()?;
    m.add_class::<PyReplayBuffer>()?;
    m.add_function(wrap_pyfunction!(sample_cases, m)?)?;
    m.add_function(wrap_pyfunction!(parse_topk, m)?)?;
    m.add_function(wrap_pyfunction!(project, m)?)?;
    m.add_function(wrap_pyfunction!(beam_prior, m)?)?;
    m.add_function(wrap_pyfunction!(top_k, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    Ok(())
}
