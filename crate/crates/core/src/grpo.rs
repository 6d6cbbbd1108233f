//! Group-relative advantage estimation and tabular policy gradients.
//!
//! Rewards within a rollout group are normalized to zero mean and unit
//! population standard deviation; the normalized values serve as
//! advantages for a REINFORCE-style update of per-decision-point softmax
//! logits. There is no critic, no KL penalty, and no importance-ratio
//! clipping: updates are single-policy and on-policy, which is all the
//! tabular setting needs.

use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

/// Guard added to the advantage denominator.
pub const DEFAULT_ADVANTAGE_EPSILON: f64 = 1e-8;

/// Discrete confidence actions: bins {0, 0.1, ..., 1.0}.
pub const CONFIDENCE_BINS: usize = 11;

/// Confidence value carried by a bin index.
pub fn bin_confidence(bin: usize) -> f64 {
    bin as f64 / (CONFIDENCE_BINS - 1) as f64
}

#[derive(Debug, Error, PartialEq)]
pub enum GrpoError {
    #[error("advantage groups need at least 2 rewards, got {0}")]
    GroupTooSmall(usize),
    #[error("episode count {0} does not match advantage count {1}")]
    LengthMismatch(usize, usize),
    #[error("unknown decision point {0:?}")]
    UnknownDecisionPoint(String),
    #[error("action {index} out of range for decision point {point:?} ({actions} actions)")]
    ActionOutOfRange {
        point: String,
        index: usize,
        actions: usize,
    },
}

/// One rollout's contribution to a group update: which actions were taken
/// at which decision points, and what the trajectory earned.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeOutcome {
    pub question_key: String,
    pub action_choices: Vec<(String, usize)>,
    pub reward: f64,
    pub correct: bool,
    pub confidence_bin: usize,
}

/// Tabular softmax policy: one logit vector per decision point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyParams {
    pub logits: BTreeMap<String, Vec<f64>>,
    pub learning_rate: f64,
}

impl PolicyParams {
    pub fn new(learning_rate: f64) -> Self {
        Self {
            logits: BTreeMap::new(),
            learning_rate,
        }
    }

    pub fn add_decision_point(&mut self, id: impl Into<String>, logits: Vec<f64>) {
        self.logits.insert(id.into(), logits);
    }

    /// Softmax action distribution at one decision point.
    pub fn action_probabilities(&self, point: &str) -> Result<Vec<f64>, GrpoError> {
        self.logits
            .get(point)
            .map(|l| softmax(l))
            .ok_or_else(|| GrpoError::UnknownDecisionPoint(point.to_string()))
    }
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Group-relative advantages: `(r_i - mean) / (std_pop + epsilon)`.
/// A zero-variance group yields all-zero advantages.
pub fn group_advantages(rewards: &[f64], epsilon: f64) -> Result<Vec<f64>, GrpoError> {
    if rewards.len() < 2 {
        return Err(GrpoError::GroupTooSmall(rewards.len()));
    }
    let n = rewards.len() as f64;
    let mean = rewards.iter().sum::<f64>() / n;
    let variance = rewards.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n;
    let std = variance.sqrt();
    if std == 0.0 {
        return Ok(vec![0.0; rewards.len()]);
    }
    Ok(rewards.iter().map(|r| (r - mean) / (std + epsilon)).collect())
}

/// One batched REINFORCE update. For every episode `i` and every visited
/// decision point with chosen action `a`:
///
/// ```text
/// logits += learning_rate * A_i * (onehot(a) - softmax(logits))
/// ```
///
/// Gradients for the whole batch are evaluated at the incoming
/// parameters, then applied once, so the update is deterministic and
/// independent of episode order.
pub fn policy_gradient_step(
    mut params: PolicyParams,
    episodes: &[EpisodeOutcome],
    advantages: &[f64],
) -> Result<PolicyParams, GrpoError> {
    if episodes.len() != advantages.len() {
        return Err(GrpoError::LengthMismatch(episodes.len(), advantages.len()));
    }
    let mut gradients: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut probabilities: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for (episode, &advantage) in episodes.iter().zip(advantages) {
        for (point, action) in &episode.action_choices {
            let logits = params
                .logits
                .get(point)
                .ok_or_else(|| GrpoError::UnknownDecisionPoint(point.clone()))?;
            if *action >= logits.len() {
                return Err(GrpoError::ActionOutOfRange {
                    point: point.clone(),
                    index: *action,
                    actions: logits.len(),
                });
            }
            let probs = probabilities
                .entry(point.clone())
                .or_insert_with(|| softmax(logits));
            let grad = gradients
                .entry(point.clone())
                .or_insert_with(|| vec![0.0; logits.len()]);
            for (j, g) in grad.iter_mut().enumerate() {
                let indicator = if j == *action { 1.0 } else { 0.0 };
                *g += advantage * (indicator - probs[j]);
            }
        }
    }
    for (point, grad) in gradients {
        let logits = params
            .logits
            .get_mut(&point)
            .expect("gradient keys come from existing decision points");
        for (l, g) in logits.iter_mut().zip(grad) {
            *l += params.learning_rate * g;
        }
    }
    Ok(params)
}

/// Draw an action index from the softmax distribution at one decision
/// point, consuming exactly one uniform draw from the generator.
pub fn sample_action<R: Rng>(
    params: &PolicyParams,
    point: &str,
    rng: &mut R,
) -> Result<usize, GrpoError> {
    let probs = params.action_probabilities(point)?;
    let draw: f64 = rng.gen();
    let mut cumulative = 0.0;
    for (index, p) in probs.iter().enumerate() {
        cumulative += p;
        if draw < cumulative {
            return Ok(index);
        }
    }
    Ok(probs.len() - 1)
}
