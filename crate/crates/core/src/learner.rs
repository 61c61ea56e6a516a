//! Online value learning: replay buffer, Bellman targets over the stored
//! next-state candidates, mean-squared TD loss with hand-written
//! backpropagation through the online head, the optimizer step, and the
//! ε decay schedule.

use std::collections::VecDeque;

use rand::seq::index::sample as index_sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encoder::{EncoderError, PairEncoder};
use crate::model::{ActionCatalog, Transition};
use crate::qhead::QHeadParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    /// Plain gradient descent (the reproducible default).
    Sgd,
    /// Adaptive-moment estimation, available behind config.
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub gamma: f64,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub episodes: usize,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Gradient steps between target-network syncs.
    pub target_sync_every: u64,
    pub buffer_capacity: usize,
    pub optimizer: OptimizerKind,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            gamma: 0.999,
            batch_size: 32,
            learning_rate: 1e-6,
            epochs: 3,
            episodes: 1000,
            epsilon_start: 1.0,
            epsilon_end: 0.1,
            target_sync_every: 100,
            buffer_capacity: 10_000,
            optimizer: OptimizerKind::Sgd,
        }
    }
}

/// Linear ε decay from `epsilon_start` at step 0 to `epsilon_end` at
/// `total_steps`, clamped thereafter.
pub fn epsilon_at(step: usize, total_steps: usize, cfg: &TrainConfig) -> f64 {
    if total_steps == 0 || step >= total_steps {
        return cfg.epsilon_end;
    }
    let frac = step as f64 / total_steps as f64;
    cfg.epsilon_start + (cfg.epsilon_end - cfg.epsilon_start) * frac
}

#[derive(Debug, Error)]
pub enum LearnerError {
    #[error("buffer holds {have} transitions, need {need}")]
    InsufficientData { have: usize, need: usize },
    #[error("TD loss is not finite ({0}); aborting the run")]
    NonFiniteLoss(f64),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
}

/// FIFO ring of transitions with seeded uniform sampling.
pub struct ReplayBuffer {
    capacity: usize,
    items: VecDeque<Transition>,
    rng: ChaCha8Rng,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, rng_seed: u64) -> Self {
        assert!(capacity > 0, "capacity must be positive");
        ReplayBuffer {
            capacity,
            items: VecDeque::with_capacity(capacity),
            rng: ChaCha8Rng::seed_from_u64(rng_seed),
        }
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(t);
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.items.iter()
    }

    /// Draws `n` transitions uniformly without replacement.
    pub fn sample(&mut self, n: usize) -> Result<Vec<Transition>, LearnerError> {
        if self.items.len() < n {
            return Err(LearnerError::InsufficientData {
                have: self.items.len(),
                need: n,
            });
        }
        let picks = index_sample(&mut self.rng, self.items.len(), n);
        Ok(picks.into_iter().map(|i| self.items[i].clone()).collect())
    }
}

/// Gradient accumulator matching the online head's layer shapes.
#[derive(Debug, Clone, PartialEq)]
pub struct GradBuffer {
    pub d_w: Vec<Vec<f64>>,
    pub d_b: Vec<Vec<f64>>,
}

impl GradBuffer {
    pub fn zeros_like(params: &QHeadParams) -> Self {
        GradBuffer {
            d_w: params.online.iter().map(|l| vec![0.0; l.w.len()]).collect(),
            d_b: params.online.iter().map(|l| vec![0.0; l.b.len()]).collect(),
        }
    }

    fn scale(&mut self, factor: f64) {
        for layer in self.d_w.iter_mut().chain(self.d_b.iter_mut()) {
            for g in layer.iter_mut() {
                *g *= factor;
            }
        }
    }
}

/// The Bellman target for one transition: `r` when terminal, otherwise
/// `r + γ · max` of the frozen target head over the stored next-state
/// candidates.
pub fn bellman_target(
    t: &Transition,
    params: &QHeadParams,
    cfg: &TrainConfig,
    catalog: &ActionCatalog,
    encoder: &mut PairEncoder,
) -> Result<f64, LearnerError> {
    if t.terminal {
        return Ok(t.reward);
    }
    debug_assert!(
        !t.candidate_indices_next.is_empty(),
        "non-terminal transition needs next-state candidates"
    );
    let mut best = f64::NEG_INFINITY;
    for &index in &t.candidate_indices_next {
        let name = catalog
            .action_name(index)
            .unwrap_or_else(|| panic!("candidate index {index} outside catalog"));
        let enc = encoder.encode_pair(&t.next_state_text, name)?;
        best = best.max(params.q_forward(&enc, true));
    }
    Ok(t.reward + cfg.gamma * best)
}

/// Mean squared error of the online head against fixed targets.
pub fn batch_loss(params: &QHeadParams, inputs: &[Vec<f64>], targets: &[f64]) -> f64 {
    assert_eq!(inputs.len(), targets.len());
    let n = inputs.len() as f64;
    inputs
        .iter()
        .zip(targets)
        .map(|(x, y)| {
            let q = params.q_forward(x, false);
            (q - y) * (q - y)
        })
        .sum::<f64>()
        / n
}

/// Loss and its gradient with respect to every online parameter, with
/// targets treated as constants. Backprop through the rectifier chain:
/// `dz = da ⊙ [z > 0]`, `dW = dz xᵀ`, propagated layer by layer.
pub fn batch_grads(
    params: &QHeadParams,
    inputs: &[Vec<f64>],
    targets: &[f64],
) -> (f64, GradBuffer) {
    assert_eq!(inputs.len(), targets.len());
    assert!(!inputs.is_empty());
    let n = inputs.len() as f64;
    let mut grads = GradBuffer::zeros_like(params);
    let mut loss = 0.0;

    for (x, y) in inputs.iter().zip(targets) {
        let trace = params.forward_trace(x);
        let err = trace.q - y;
        loss += err * err;
        // dL/dq for the per-sample squared error before the 1/n mean
        let dq = 2.0 * err;

        // output layer: q = W3 a2 + b3
        let w3 = &params.online[2];
        for (j, a) in trace.a2.iter().enumerate() {
            grads.d_w[2][j] += dq * a;
        }
        grads.d_b[2][0] += dq;

        // hidden layer 2
        let mut dz2 = vec![0.0; trace.z2.len()];
        for (j, dz) in dz2.iter_mut().enumerate() {
            if trace.z2[j] > 0.0 {
                *dz = dq * w3.w[j];
            }
        }
        let w2 = &params.online[1];
        for (row, dz) in dz2.iter().enumerate() {
            if *dz == 0.0 {
                continue;
            }
            let base = row * w2.in_dim;
            for (col, a) in trace.a1.iter().enumerate() {
                grads.d_w[1][base + col] += dz * a;
            }
            grads.d_b[1][row] += dz;
        }

        // hidden layer 1
        let mut dz1 = vec![0.0; trace.z1.len()];
        for (col, dz) in dz1.iter_mut().enumerate() {
            if trace.z1[col] <= 0.0 {
                continue;
            }
            let mut acc = 0.0;
            for (row, d2) in dz2.iter().enumerate() {
                acc += d2 * w2.w[row * w2.in_dim + col];
            }
            *dz = acc;
        }
        let w1 = &params.online[0];
        for (row, dz) in dz1.iter().enumerate() {
            if *dz == 0.0 {
                continue;
            }
            let base = row * w1.in_dim;
            for (col, xv) in x.iter().enumerate() {
                grads.d_w[0][base + col] += dz * xv;
            }
            grads.d_b[0][row] += dz;
        }
    }

    grads.scale(1.0 / n);
    (loss / n, grads)
}

/// Optimizer state for the online head. Plain gradient descent keeps no
/// state; the adaptive option tracks first and second moments.
pub struct Optimizer {
    kind: OptimizerKind,
    m: Option<GradBuffer>,
    v: Option<GradBuffer>,
    t: u64,
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

impl Optimizer {
    pub fn new(kind: OptimizerKind) -> Self {
        Optimizer {
            kind,
            m: None,
            v: None,
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut QHeadParams, grads: &GradBuffer, lr: f64) {
        match self.kind {
            OptimizerKind::Sgd => {
                for (li, layer) in params.online.iter_mut().enumerate() {
                    for (w, g) in layer.w.iter_mut().zip(&grads.d_w[li]) {
                        *w -= lr * g;
                    }
                    for (b, g) in layer.b.iter_mut().zip(&grads.d_b[li]) {
                        *b -= lr * g;
                    }
                }
            }
            OptimizerKind::Adam => {
                if self.m.is_none() {
                    self.m = Some(GradBuffer::zeros_like(params));
                    self.v = Some(GradBuffer::zeros_like(params));
                }
                self.t += 1;
                let t = self.t as i32;
                let m = self.m.as_mut().unwrap();
                let v = self.v.as_mut().unwrap();
                let bc1 = 1.0 - ADAM_BETA1.powi(t);
                let bc2 = 1.0 - ADAM_BETA2.powi(t);
                for (li, layer) in params.online.iter_mut().enumerate() {
                    for (j, (w, g)) in layer.w.iter_mut().zip(&grads.d_w[li]).enumerate() {
                        let mj = &mut m.d_w[li][j];
                        let vj = &mut v.d_w[li][j];
                        *mj = ADAM_BETA1 * *mj + (1.0 - ADAM_BETA1) * g;
                        *vj = ADAM_BETA2 * *vj + (1.0 - ADAM_BETA2) * g * g;
                        *w -= lr * (*mj / bc1) / ((*vj / bc2).sqrt() + ADAM_EPS);
                    }
                    for (j, (b, g)) in layer.b.iter_mut().zip(&grads.d_b[li]).enumerate() {
                        let mj = &mut m.d_b[li][j];
                        let vj = &mut v.d_b[li][j];
                        *mj = ADAM_BETA1 * *mj + (1.0 - ADAM_BETA1) * g;
                        *vj = ADAM_BETA2 * *vj + (1.0 - ADAM_BETA2) * g * g;
                        *b -= lr * (*mj / bc1) / ((*vj / bc2).sqrt() + ADAM_EPS);
                    }
                }
            }
        }
    }
}

/// One TD update over `batch`: Bellman targets from the frozen target head
/// (no gradient flows through them), MSE loss, backprop through the online
/// head, one optimizer step. Returns the pre-step loss.
pub fn td_update(
    params: &mut QHeadParams,
    batch: &[Transition],
    cfg: &TrainConfig,
    catalog: &ActionCatalog,
    encoder: &mut PairEncoder,
    optimizer: &mut Optimizer,
) -> Result<f64, LearnerError> {
    assert!(!batch.is_empty(), "batch must be non-empty");
    let mut inputs = Vec::with_capacity(batch.len());
    let mut targets = Vec::with_capacity(batch.len());
    for t in batch {
        let name = catalog
            .action_name(t.action_index)
            .unwrap_or_else(|| panic!("action index {} outside catalog", t.action_index));
        inputs.push(encoder.encode_pair(&t.state_text, name)?.as_ref().clone());
        targets.push(bellman_target(t, params, cfg, catalog, encoder)?);
    }
    let (loss, grads) = batch_grads(params, &inputs, &targets);
    if !loss.is_finite() {
        return Err(LearnerError::NonFiniteLoss(loss));
    }
    optimizer.step(params, &grads, cfg.learning_rate);
    params.train_steps += 1;
    Ok(loss)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::HashEncoder;
    use crate::model::TaskId;
    use crate::qhead::QHeadDims;
    use crate::tasks;
    use rand::Rng;
    use std::sync::Arc;

    fn transition(state: &str, action: usize, reward: f64, terminal: bool) -> Transition {
        Transition {
            state_text: state.to_string(),
            action_index: action,
            reward,
            next_state_text: format!("{state}-next"),
            terminal,
            candidate_indices_next: if terminal { vec![] } else { vec![1, 2, 3] },
        }
    }

    #[test]
    fn buffer_evicts_fifo_at_capacity() {
        let mut buf = ReplayBuffer::new(2, 0);
        buf.push(transition("a", 1, 0.0, true));
        buf.push(transition("b", 1, 0.0, true));
        buf.push(transition("c", 1, 0.0, true));
        assert_eq!(buf.len(), 2);
        let states: Vec<&str> = buf.iter().map(|t| t.state_text.as_str()).collect();
        assert_eq!(states, ["b", "c"]);
    }

    #[test]
    fn sample_of_full_buffer_is_a_permutation() {
        let mut buf = ReplayBuffer::new(8, 1);
        for i in 0..5 {
            buf.push(transition(&format!("s{i}"), 1, 0.0, true));
        }
        let mut sampled: Vec<String> = buf
            .sample(5)
            .unwrap()
            .into_iter()
            .map(|t| t.state_text)
            .collect();
        sampled.sort();
        assert_eq!(sampled, ["s0", "s1", "s2", "s3", "s4"]);
    }

    #[test]
    fn sampling_more_than_stored_is_insufficient_data() {
        let mut buf = ReplayBuffer::new(8, 1);
        for i in 0..3 {
            buf.push(transition(&format!("s{i}"), 1, 0.0, true));
        }
        match buf.sample(4) {
            Err(LearnerError::InsufficientData { have: 3, need: 4 }) => {}
            other => panic!("unexpected: {other:?}"),
        }
    }

    #[test]
    fn seeded_sampling_is_reproducible() {
        let fill = |seed| {
            let mut buf = ReplayBuffer::new(16, seed);
            for i in 0..10 {
                buf.push(transition(&format!("s{i}"), 1, 0.0, true));
            }
            let a: Vec<String> = buf.sample(4).unwrap().into_iter().map(|t| t.state_text).collect();
            let b: Vec<String> = buf.sample(4).unwrap().into_iter().map(|t| t.state_text).collect();
            (a, b)
        };
        assert_eq!(fill(9), fill(9));
    }

    #[test]
    fn buffer_never_exceeds_capacity() {
        let mut buf = ReplayBuffer::new(64, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for i in 0..10_000 {
            buf.push(transition(&format!("s{}", rng.random_range(0..10_000u32)), 1, 0.0, true));
            assert!(buf.len() <= 64, "overflow at push {i}");
        }
    }

    #[test]
    fn terminal_target_is_the_reward_regardless_of_gamma() {
        let params = QHeadParams::zeros(QHeadDims { input: 8, hidden1: 4, hidden2: 4 });
        let catalog = tasks::catalog(TaskId::Cima);
        let mut enc = PairEncoder::new(Arc::new(HashEncoder::new(8)));
        let t = transition("s", 1, 1.0, true);
        for gamma in [0.0, 0.5, 0.999] {
            let cfg = TrainConfig { gamma, ..TrainConfig::default() };
            let y = bellman_target(&t, &params, &cfg, &catalog, &mut enc).unwrap();
            assert_eq!(y, 1.0);
        }
    }

    #[test]
    fn bootstrap_target_matches_hand_arithmetic() {
        // Rig the head so the target copy returns 0.2 for every input:
        // zero weights, final bias 0.2.
        let mut params = QHeadParams::zeros(QHeadDims { input: 8, hidden1: 4, hidden2: 4 });
        params.online[2].b[0] = 0.2;
        params.sync_target();
        let catalog = tasks::catalog(TaskId::Cima);
        let mut enc = PairEncoder::new(Arc::new(HashEncoder::new(8)));
        let t = transition("s", 1, 0.5, false);
        let cfg = TrainConfig::default();
        let y = bellman_target(&t, &params, &cfg, &catalog, &mut enc).unwrap();
        assert!((y - 0.6998).abs() < 1e-12, "got {y}");
    }

    #[test]
    fn fresh_zero_target_head_bootstraps_to_reward() {
        let params = QHeadParams::zeros(QHeadDims { input: 8, hidden1: 4, hidden2: 4 });
        let catalog = tasks::catalog(TaskId::Cima);
        let mut enc = PairEncoder::new(Arc::new(HashEncoder::new(8)));
        let t = transition("s", 1, -1.0, false);
        let y = bellman_target(&t, &params, &TrainConfig::default(), &catalog, &mut enc).unwrap();
        assert_eq!(y, -1.0);
    }

    #[test]
    fn zero_error_batch_leaves_parameters_untouched() {
        // Zero head, terminal transitions with reward 0: Q == y == 0.
        let mut params = QHeadParams::zeros(QHeadDims { input: 8, hidden1: 4, hidden2: 4 });
        let before = params.clone();
        let catalog = tasks::catalog(TaskId::Cima);
        let mut enc = PairEncoder::new(Arc::new(HashEncoder::new(8)));
        let batch: Vec<Transition> = (0..4).map(|i| transition(&format!("s{i}"), 1, 0.0, true)).collect();
        let mut opt = Optimizer::new(OptimizerKind::Sgd);
        let cfg = TrainConfig { learning_rate: 0.1, ..TrainConfig::default() };
        let loss = td_update(&mut params, &batch, &cfg, &catalog, &mut enc, &mut opt).unwrap();
        assert_eq!(loss, 0.0);
        assert_eq!(params.online, before.online);
        assert_eq!(params.train_steps, 1);
    }

    #[test]
    fn one_dimensional_gradients_match_hand_derivation() {
        // d = h1 = h2 = 1, w1 = 0.5, w2 = 0.8, w3 = 1.2, biases 0, x = 1, y = 1:
        //   a1 = 0.5, a2 = 0.4, q = 0.48, dL/dq = 2(q - y) = -1.04
        //   dw3 = dq*a2 = -0.416        db3 = -1.04
        //   dz2 = dq*w3 = -1.248        dw2 = dz2*a1 = -0.624   db2 = -1.248
        //   dz1 = dz2*w2 = -0.9984      dw1 = dz1*x  = -0.9984  db1 = -0.9984
        let mut params = QHeadParams::zeros(QHeadDims { input: 1, hidden1: 1, hidden2: 1 });
        params.online[0].w[0] = 0.5;
        params.online[1].w[0] = 0.8;
        params.online[2].w[0] = 1.2;
        let (loss, grads) = batch_grads(&params, &[vec![1.0]], &[1.0]);
        assert!((loss - 0.2704).abs() < 1e-10);
        assert!((grads.d_w[2][0] - (-0.416)).abs() < 1e-10);
        assert!((grads.d_b[2][0] - (-1.04)).abs() < 1e-10);
        assert!((grads.d_w[1][0] - (-0.624)).abs() < 1e-10);
        assert!((grads.d_b[1][0] - (-1.248)).abs() < 1e-10);
        assert!((grads.d_w[0][0] - (-0.9984)).abs() < 1e-10);
        assert!((grads.d_b[0][0] - (-0.9984)).abs() < 1e-10);
    }

    #[test]
    fn gradients_match_central_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..5 {
            let (params, inputs, targets) = random_kink_safe_instance(&mut rng);
            let (_, grads) = batch_grads(&params, &inputs, &targets);
            let rel = max_relative_fd_error(&params, &inputs, &targets, &grads);
            assert!(rel < 1e-4, "max relative error {rel}");
        }
    }

    /// Random d=8, h=8 head with a batch of 4, rejecting draws where any
    /// rectifier preactivation sits within 1e-3 of its kink: central
    /// differences with step 1e-4 are only meaningful inside one linear
    /// region.
    pub(crate) fn random_kink_safe_instance(
        rng: &mut ChaCha8Rng,
    ) -> (QHeadParams, Vec<Vec<f64>>, Vec<f64>) {
        let dims = QHeadDims { input: 8, hidden1: 8, hidden2: 8 };
        loop {
            let mut params = QHeadParams::new(dims, rng);
            for layer in params.online.iter_mut() {
                for b in layer.b.iter_mut() {
                    *b = rng.random_range(-0.5..0.5);
                }
            }
            params.sync_target();
            let inputs: Vec<Vec<f64>> = (0..4)
                .map(|_| (0..8).map(|_| rng.random_range(-1.0..1.0)).collect())
                .collect();
            let targets: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
            let margin = 1e-3;
            let safe = inputs.iter().all(|x| {
                let t = params.forward_trace(x);
                t.z1.iter().chain(t.z2.iter()).all(|z| z.abs() > margin)
            });
            if safe {
                return (params, inputs, targets);
            }
        }
    }

    /// Central finite differences over every parameter, step 1e-4.
    pub(crate) fn max_relative_fd_error(
        params: &QHeadParams,
        inputs: &[Vec<f64>],
        targets: &[f64],
        grads: &GradBuffer,
    ) -> f64 {
        let h = 1e-4;
        let mut worst: f64 = 0.0;
        let mut probe = |li: usize, is_bias: bool, j: usize, analytic: f64| {
            let mut plus = params.clone();
            let mut minus = params.clone();
            if is_bias {
                plus.online[li].b[j] += h;
                minus.online[li].b[j] -= h;
            } else {
                plus.online[li].w[j] += h;
                minus.online[li].w[j] -= h;
            }
            let fd = (batch_loss(&plus, inputs, targets) - batch_loss(&minus, inputs, targets))
                / (2.0 * h);
            let denom = analytic.abs().max(fd.abs()).max(1e-6);
            worst = worst.max((fd - analytic).abs() / denom);
        };
        for li in 0..3 {
            for j in 0..params.online[li].w.len() {
                probe(li, false, j, grads.d_w[li][j]);
            }
            for j in 0..params.online[li].b.len() {
                probe(li, true, j, grads.d_b[li][j]);
            }
        }
        worst
    }

    #[test]
    fn adam_option_also_drives_the_loss_down() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let dims = QHeadDims { input: 8, hidden1: 8, hidden2: 8 };
        let mut params = QHeadParams::new(dims, &mut rng);
        let catalog = tasks::catalog(TaskId::Cima);
        let mut enc = PairEncoder::new(Arc::new(HashEncoder::new(8)));
        let batch: Vec<Transition> = (0..8)
            .map(|i| transition(&format!("s{i}"), 1 + i % 5, if i % 2 == 0 { 1.0 } else { -1.0 }, true))
            .collect();
        let cfg = TrainConfig {
            learning_rate: 1e-2,
            optimizer: OptimizerKind::Adam,
            ..TrainConfig::default()
        };
        let mut opt = Optimizer::new(cfg.optimizer);
        let first = td_update(&mut params, &batch, &cfg, &catalog, &mut enc, &mut opt).unwrap();
        let mut last = first;
        for _ in 0..200 {
            last = td_update(&mut params, &batch, &cfg, &catalog, &mut enc, &mut opt).unwrap();
        }
        assert!(last < first * 0.1, "adam loss {first} -> {last}");
    }

    #[test]
    fn non_finite_loss_aborts() {
        let mut params = QHeadParams::zeros(QHeadDims { input: 8, hidden1: 4, hidden2: 4 });
        params.online[2].b[0] = f64::INFINITY;
        let catalog = tasks::catalog(TaskId::Cima);
        let mut enc = PairEncoder::new(Arc::new(HashEncoder::new(8)));
        let batch = vec![transition("s", 1, 0.0, true)];
        let mut opt = Optimizer::new(OptimizerKind::Sgd);
        match td_update(&mut params, &batch, &TrainConfig::default(), &catalog, &mut enc, &mut opt) {
            Err(LearnerError::NonFiniteLoss(_)) => {}
            other => panic!("expected NonFiniteLoss, got {other:?}"),
        }
    }

    #[test]
    fn sync_target_is_idempotent() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut params = QHeadParams::new(QHeadDims { input: 4, hidden1: 3, hidden2: 3 }, &mut rng);
        params.online[1].w[2] = 0.77;
        params.sync_target();
        let once = params.target.clone();
        params.sync_target();
        assert_eq!(once, params.target);
    }

    #[test]
    fn epsilon_schedule_is_linear_and_clamped() {
        let cfg = TrainConfig::default();
        assert_eq!(epsilon_at(0, 1000, &cfg), 1.0);
        assert_eq!(epsilon_at(1000, 1000, &cfg), 0.1);
        assert!((epsilon_at(500, 1000, &cfg) - 0.55).abs() < 1e-12);
        assert_eq!(epsilon_at(2000, 1000, &cfg), 0.1);
    }
}
