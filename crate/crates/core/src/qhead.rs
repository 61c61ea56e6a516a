//! The value head: a three-layer rectifier MLP over frozen pair embeddings,
//! softmax normalization across a turn's candidates, and ε-greedy selection.
//!
//! Parameters live in plain row-major buffers; forward and backward passes
//! are written out by hand so gradient checks can pin them down exactly.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::encoder::{EncoderError, PairEncoder};
use crate::model::ActionCatalog;
use crate::prior::CandidateSet;

/// One dense layer: `out_dim x in_dim` weights (row-major) plus biases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerParams {
    pub in_dim: usize,
    pub out_dim: usize,
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl LayerParams {
    fn zeros(in_dim: usize, out_dim: usize) -> Self {
        LayerParams {
            in_dim,
            out_dim,
            w: vec![0.0; in_dim * out_dim],
            b: vec![0.0; out_dim],
        }
    }

    fn xavier<R: Rng>(in_dim: usize, out_dim: usize, rng: &mut R) -> Self {
        let bound = (6.0 / (in_dim + out_dim) as f64).sqrt();
        let w = (0..in_dim * out_dim)
            .map(|_| rng.random_range(-bound..bound))
            .collect();
        LayerParams {
            in_dim,
            out_dim,
            w,
            b: vec![0.0; out_dim],
        }
    }

    /// `y = W x + b`
    fn affine(&self, x: &[f64], out: &mut Vec<f64>) {
        debug_assert_eq!(x.len(), self.in_dim);
        out.clear();
        for row in 0..self.out_dim {
            let base = row * self.in_dim;
            let mut acc = self.b[row];
            for (col, xv) in x.iter().enumerate() {
                acc += self.w[base + col] * xv;
            }
            out.push(acc);
        }
    }
}

/// Layer widths of the head: `input -> hidden1 -> hidden2 -> 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QHeadDims {
    pub input: usize,
    pub hidden1: usize,
    pub hidden2: usize,
}

impl Default for QHeadDims {
    fn default() -> Self {
        QHeadDims {
            input: crate::encoder::DEFAULT_EMBED_DIM,
            hidden1: 256,
            hidden2: 256,
        }
    }
}

/// Online and frozen-target copies of the three-layer head, plus the
/// gradient-step counter. The target copy changes only through
/// [`QHeadParams::sync_target`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QHeadParams {
    pub online: Vec<LayerParams>,
    pub target: Vec<LayerParams>,
    pub train_steps: u64,
}

/// Intermediate activations of one online forward pass, kept for backprop.
pub(crate) struct ForwardTrace {
    pub z1: Vec<f64>,
    pub a1: Vec<f64>,
    pub z2: Vec<f64>,
    pub a2: Vec<f64>,
    pub q: f64,
}

fn relu(z: &[f64]) -> Vec<f64> {
    z.iter().map(|v| v.max(0.0)).collect()
}

impl QHeadParams {
    /// Fresh head with uniform `±sqrt(6 / (fan_in + fan_out))` weights and
    /// zero biases; the target starts as an exact copy.
    pub fn new<R: Rng>(dims: QHeadDims, rng: &mut R) -> Self {
        let online = vec![
            LayerParams::xavier(dims.input, dims.hidden1, rng),
            LayerParams::xavier(dims.hidden1, dims.hidden2, rng),
            LayerParams::xavier(dims.hidden2, 1, rng),
        ];
        QHeadParams {
            target: online.clone(),
            online,
            train_steps: 0,
        }
    }

    /// All-zero head (every input scores 0.0); handy in tests.
    pub fn zeros(dims: QHeadDims) -> Self {
        let online = vec![
            LayerParams::zeros(dims.input, dims.hidden1),
            LayerParams::zeros(dims.hidden1, dims.hidden2),
            LayerParams::zeros(dims.hidden2, 1),
        ];
        QHeadParams {
            target: online.clone(),
            online,
            train_steps: 0,
        }
    }

    pub fn dims(&self) -> QHeadDims {
        QHeadDims {
            input: self.online[0].in_dim,
            hidden1: self.online[0].out_dim,
            hidden2: self.online[1].out_dim,
        }
    }

    /// Scalar value `W3·relu(W2·relu(W1·x + b1) + b2) + b3`.
    pub fn q_forward(&self, x: &[f64], use_target: bool) -> f64 {
        let layers = if use_target { &self.target } else { &self.online };
        let mut buf = Vec::new();
        layers[0].affine(x, &mut buf);
        let a1 = relu(&buf);
        layers[1].affine(&a1, &mut buf);
        let a2 = relu(&buf);
        layers[2].affine(&a2, &mut buf);
        buf[0]
    }

    pub(crate) fn forward_trace(&self, x: &[f64]) -> ForwardTrace {
        let mut z1 = Vec::new();
        self.online[0].affine(x, &mut z1);
        let a1 = relu(&z1);
        let mut z2 = Vec::new();
        self.online[1].affine(&a1, &mut z2);
        let a2 = relu(&z2);
        let mut out = Vec::new();
        self.online[2].affine(&a2, &mut out);
        ForwardTrace {
            q: out[0],
            z1,
            a1,
            z2,
            a2,
        }
    }

    /// Copies the online weights into the target head.
    pub fn sync_target(&mut self) {
        self.target = self.online.clone();
    }

    pub fn param_count(&self) -> usize {
        self.online.iter().map(|l| l.w.len() + l.b.len()).sum()
    }
}

/// Candidate scores for one turn: raw head outputs and their softmax.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredCandidates {
    pub indices: Vec<usize>,
    pub raw_scores: Vec<f64>,
    pub probs: Vec<f64>,
}

/// Shift-stable softmax.
pub fn softmax(xs: &[f64]) -> Vec<f64> {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = xs.iter().map(|x| (x - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Scores every candidate with the online head and softmax-normalizes
/// across the set.
pub fn score_candidates(
    params: &QHeadParams,
    state_text: &str,
    candidates: &CandidateSet,
    catalog: &ActionCatalog,
    encoder: &mut PairEncoder,
) -> Result<ScoredCandidates, EncoderError> {
    assert!(!candidates.indices.is_empty(), "candidate set must be non-empty");
    let mut raw_scores = Vec::with_capacity(candidates.indices.len());
    for &index in &candidates.indices {
        let name = catalog
            .action_name(index)
            .unwrap_or_else(|| panic!("candidate index {index} outside catalog"));
        let enc = encoder.encode_pair(state_text, name)?;
        raw_scores.push(params.q_forward(&enc, false));
    }
    let probs = softmax(&raw_scores);
    Ok(ScoredCandidates {
        indices: candidates.indices.clone(),
        raw_scores,
        probs,
    })
}

/// ε-greedy selection over the scored candidates: with probability
/// `1 - epsilon` the raw-score argmax (ties to the earliest candidate),
/// otherwise a uniform draw over the set. Never leaves the candidate set.
pub fn select_action<R: Rng>(scored: &ScoredCandidates, epsilon: f64, rng: &mut R) -> usize {
    debug_assert!((0.0..=1.0).contains(&epsilon));
    if rng.random::<f64>() < epsilon {
        let pick = rng.random_range(0..scored.indices.len());
        return scored.indices[pick];
    }
    greedy_action(scored)
}

/// The raw-score argmax, ties broken by candidate order.
pub fn greedy_action(scored: &ScoredCandidates) -> usize {
    let mut best = 0;
    for (i, score) in scored.raw_scores.iter().enumerate().skip(1) {
        if *score > scored.raw_scores[best] {
            best = i;
        }
    }
    scored.indices[best]
}
