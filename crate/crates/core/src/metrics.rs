//! Evaluation metrics: average turns to goal, success rate under the turn
//! cap, and the buyer-side sale-to-list ratio for negotiation runs.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::TaskId;
use crate::selfplay::EpisodeResult;
use crate::tasks::TerminalStatus;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("no episodes to aggregate")]
    EmptyInput,
    #[error("sale-to-list ratio is only defined for the negotiation task, got {0}")]
    WrongTask(TaskId),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub task: TaskId,
    pub n_episodes: usize,
    pub at: f64,
    pub sr: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sl_avg: Option<f64>,
}

impl MetricsReport {
    /// Aggregates a full report; `sl_avg` is present only for negotiation.
    pub fn from_results(
        results: &[EpisodeResult],
        max_turns: usize,
        count_failures_at_cap: bool,
    ) -> Result<MetricsReport, MetricsError> {
        let first = results.first().ok_or(MetricsError::EmptyInput)?;
        let task = first.task;
        let at = compute_at(results, max_turns, count_failures_at_cap)?;
        let sr = compute_sr(results)?;
        let sl_avg = if task == TaskId::Cb {
            Some(compute_sl(results)?)
        } else {
            None
        };
        Ok(MetricsReport {
            task,
            n_episodes: results.len(),
            at,
            sr,
            sl_avg,
        })
    }

    pub fn render_table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("task        {}\n", self.task));
        out.push_str(&format!("episodes    {}\n", self.n_episodes));
        out.push_str(&format!("AT          {:.4}\n", self.at));
        out.push_str(&format!("SR          {:.4}\n", self.sr));
        if let Some(sl) = self.sl_avg {
            out.push_str(&format!("SL          {:.4}\n", sl));
        }
        out
    }
}

/// Mean number of turns across episodes. Failed episodes count at
/// `max_turns` when `count_failures_at_cap` is set (the default), otherwise
/// at their actual length.
pub fn compute_at(
    results: &[EpisodeResult],
    max_turns: usize,
    count_failures_at_cap: bool,
) -> Result<f64, MetricsError> {
    if results.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let total: usize = results
        .iter()
        .map(|r| {
            if count_failures_at_cap && r.outcome == TerminalStatus::Failed {
                max_turns
            } else {
                r.turns
            }
        })
        .sum();
    Ok(total as f64 / results.len() as f64)
}

/// Fraction of episodes the critic completed within the turn cap.
pub fn compute_sr(results: &[EpisodeResult]) -> Result<f64, MetricsError> {
    if results.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let completed = results
        .iter()
        .filter(|r| r.outcome == TerminalStatus::Completed)
        .count();
    Ok(completed as f64 / results.len() as f64)
}

/// Mean sale-to-list ratio for negotiation episodes, with failed
/// negotiations contributing zero.
pub fn compute_sl(results: &[EpisodeResult]) -> Result<f64, MetricsError> {
    if results.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    if let Some(bad) = results.iter().find(|r| r.task != TaskId::Cb) {
        return Err(MetricsError::WrongTask(bad.task));
    }
    let total: f64 = results.iter().map(|r| r.sl.unwrap_or(0.0)).sum();
    Ok(total / results.len() as f64)
}
