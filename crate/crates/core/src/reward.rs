//! Reward families and the unified format-aware reward.
//!
//! Four families are implemented:
//!
//! - exact-match only: `1` if correct else `0`;
//! - weighted Brier: `1_correct - lambda * (q - 1_correct)^2`;
//! - margin-separated calibration (MSCR): `1 + beta1 * (1 - (1-q)^2)` when
//!   correct, `-beta2 * q^2` when incorrect — correct trajectories always
//!   out-reward incorrect ones;
//! - search penalty: `1_correct - alpha * tool_calls`.
//!
//! [`unified_reward`] combines the selected family with the format
//! constraint: invalid trajectories pay a flat penalty, and a missing
//! confidence falls back to the worst-case value for its correctness
//! branch so omitting the tag is never advantageous.

use crate::transcript::{exact_match, ParsedTrajectory};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default Brier weight.
pub const DEFAULT_LAMBDA: f64 = 1.0 / 3.0;
/// Default MSCR calibration magnitudes.
pub const DEFAULT_BETA: f64 = 0.5;
/// Default penalty for format violations.
pub const DEFAULT_FORMAT_PENALTY: f64 = 0.5;
/// Default per-call search penalty.
pub const DEFAULT_ALPHA: f64 = 0.1;

#[derive(Debug, Error, PartialEq)]
pub enum RewardError {
    #[error("confidence {0} outside [0, 1]")]
    ConfidenceOutOfRange(f64),
    #[error("belief probability {0} outside [0, 1]")]
    BeliefOutOfRange(f64),
    #[error("grid step {0} outside (0, 0.1]")]
    BadGridStep(f64),
    #[error("{0}")]
    BadHyperparameter(String),
}

/// Reward family selector with its hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum RewardFamily {
    EmOnly,
    WeightedBrier { lambda: f64 },
    Mscr { beta1: f64, beta2: f64 },
    SearchPenalty { alpha: f64 },
}

impl RewardFamily {
    /// True when the reward value does not depend on the reported
    /// confidence.
    pub fn confidence_independent(&self) -> bool {
        matches!(
            self,
            RewardFamily::EmOnly
                | RewardFamily::SearchPenalty { .. }
                | RewardFamily::WeightedBrier { lambda: 0.0 }
        )
    }

    fn validate(&self) -> Result<(), RewardError> {
        match *self {
            RewardFamily::EmOnly => Ok(()),
            RewardFamily::WeightedBrier { lambda } => {
                if lambda >= 0.0 && lambda.is_finite() {
                    Ok(())
                } else {
                    Err(RewardError::BadHyperparameter(format!(
                        "lambda must be a nonnegative finite real, got {lambda}"
                    )))
                }
            }
            RewardFamily::Mscr { beta1, beta2 } => {
                if beta1 > 0.0 && beta2 > 0.0 && beta1.is_finite() && beta2.is_finite() {
                    Ok(())
                } else {
                    Err(RewardError::BadHyperparameter(format!(
                        "beta1 and beta2 must be positive finite reals, got {beta1}, {beta2}"
                    )))
                }
            }
            RewardFamily::SearchPenalty { alpha } => {
                if alpha >= 0.0 && alpha.is_finite() {
                    Ok(())
                } else {
                    Err(RewardError::BadHyperparameter(format!(
                        "alpha must be a nonnegative finite real, got {alpha}"
                    )))
                }
            }
        }
    }
}

/// Fallback confidence substituted when a trajectory carries no usable
/// confidence: the minimum-reward value of each correctness branch, so a
/// missing tag is weakly dominated by any honest report.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FallbackConfidence {
    pub on_correct: f64,
    pub on_incorrect: f64,
}

impl Default for FallbackConfidence {
    fn default() -> Self {
        Self {
            on_correct: 0.0,
            on_incorrect: 1.0,
        }
    }
}

/// Full reward configuration: family, format penalty, fallback rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardSpec {
    #[serde(flatten)]
    pub family: RewardFamily,
    pub format_penalty: f64,
    #[serde(default)]
    pub fallback_confidence: FallbackConfidence,
}

impl RewardSpec {
    pub fn new(family: RewardFamily) -> Self {
        Self {
            family,
            format_penalty: DEFAULT_FORMAT_PENALTY,
            fallback_confidence: FallbackConfidence::default(),
        }
    }

    /// MSCR with the default betas and format penalty.
    pub fn mscr_default() -> Self {
        Self::new(RewardFamily::Mscr {
            beta1: DEFAULT_BETA,
            beta2: DEFAULT_BETA,
        })
    }

    pub fn validate(&self) -> Result<(), RewardError> {
        self.family.validate()?;
        if !(self.format_penalty >= 0.0 && self.format_penalty.is_finite()) {
            return Err(RewardError::BadHyperparameter(format!(
                "format penalty must be a nonnegative finite real, got {}",
                self.format_penalty
            )));
        }
        for q in [
            self.fallback_confidence.on_correct,
            self.fallback_confidence.on_incorrect,
        ] {
            if !(0.0..=1.0).contains(&q) {
                return Err(RewardError::ConfidenceOutOfRange(q));
            }
        }
        Ok(())
    }
}

/// Per-term decomposition of one scored trajectory.
///
/// `total = outcome + calibration - format_penalty` always holds;
/// `format_penalty` is either zero or the spec's penalty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub outcome: f64,
    pub calibration: f64,
    pub format_penalty: f64,
    pub total: f64,
    pub used_fallback_confidence: bool,
}

fn check_confidence(q: f64) -> Result<(), RewardError> {
    if (0.0..=1.0).contains(&q) {
        Ok(())
    } else {
        Err(RewardError::ConfidenceOutOfRange(q))
    }
}

/// Weighted Brier reward: `1_correct - lambda * (q - 1_correct)^2`.
/// With `lambda = 1` the lowest correct reward equals the highest
/// incorrect reward (both zero, at `q = 0`).
pub fn weighted_brier_reward(correct: bool, q: f64, lambda: f64) -> Result<f64, RewardError> {
    check_confidence(q)?;
    let indicator = if correct { 1.0 } else { 0.0 };
    Ok(indicator - lambda * (q - indicator).powi(2))
}

/// Margin-separated calibration reward: correct answers earn at least 1,
/// incorrect answers earn at most 0, and confidence shapes the reward
/// within each branch.
pub fn mscr_reward(correct: bool, q: f64, beta1: f64, beta2: f64) -> Result<f64, RewardError> {
    check_confidence(q)?;
    if correct {
        Ok(1.0 + beta1 * (1.0 - (1.0 - q).powi(2)))
    } else {
        Ok(-beta2 * q.powi(2))
    }
}

/// Exact-match outcome reward.
pub fn em_reward(correct: bool) -> f64 {
    if correct {
        1.0
    } else {
        0.0
    }
}

/// Outcome reward with a per-call usage penalty.
pub fn search_penalty_reward(correct: bool, tool_calls: usize, alpha: f64) -> f64 {
    em_reward(correct) - alpha * tool_calls as f64
}

/// Outcome and shaping terms for one family. Both terms are reported
/// separately so the breakdown's additivity is structural.
fn family_terms(
    family: &RewardFamily,
    correct: bool,
    q: f64,
    tool_calls: usize,
) -> Result<(f64, f64), RewardError> {
    check_confidence(q)?;
    let outcome = em_reward(correct);
    let calibration = match *family {
        RewardFamily::EmOnly => 0.0,
        RewardFamily::WeightedBrier { lambda } => {
            -lambda * (q - outcome).powi(2)
        }
        RewardFamily::Mscr { beta1, beta2 } => {
            if correct {
                beta1 * (1.0 - (1.0 - q).powi(2))
            } else {
                -beta2 * q.powi(2)
            }
        }
        RewardFamily::SearchPenalty { alpha } => -alpha * tool_calls as f64,
    };
    Ok((outcome, calibration))
}

/// Family reward value at a given confidence, ignoring format effects.
/// Used by the incentive analysis in [`crate::oracle`].
pub fn family_value(
    family: &RewardFamily,
    correct: bool,
    q: f64,
    tool_calls: usize,
) -> Result<f64, RewardError> {
    let (outcome, calibration) = family_terms(family, correct, q, tool_calls)?;
    Ok(outcome + calibration)
}

/// Score already-judged trajectory facts. This is the shared core behind
/// [`unified_reward`]; simulation episodes use it directly since they
/// never pass through text form.
pub fn score_outcome(
    correct: bool,
    confidence: Option<f64>,
    tool_calls: usize,
    format_valid: bool,
    spec: &RewardSpec,
) -> Result<RewardBreakdown, RewardError> {
    let used_fallback_confidence = confidence.is_none();
    let q = match confidence {
        Some(q) => {
            check_confidence(q)?;
            q
        }
        None if correct => spec.fallback_confidence.on_correct,
        None => spec.fallback_confidence.on_incorrect,
    };
    let (outcome, calibration) = family_terms(&spec.family, correct, q, tool_calls)?;
    let format_penalty = if format_valid { 0.0 } else { spec.format_penalty };
    Ok(RewardBreakdown {
        outcome,
        calibration,
        format_penalty,
        total: outcome + calibration - format_penalty,
        used_fallback_confidence,
    })
}

/// Unified reward for a parsed trajectory: correctness by normalized
/// exact match, the spec's calibration family on the extracted
/// confidence, and the format penalty when the trajectory is invalid.
/// Format failure is a reward outcome, never an error.
pub fn unified_reward<S: AsRef<str>>(
    trajectory: &ParsedTrajectory,
    gold: &[S],
    spec: &RewardSpec,
) -> RewardBreakdown {
    let correct = trajectory
        .answer
        .as_deref()
        .map(|pred| exact_match(pred, gold))
        .unwrap_or(false);
    let confidence = trajectory.confidence().filter(|q| (0.0..=1.0).contains(q));
    score_outcome(
        correct,
        confidence,
        trajectory.tool_call_count,
        trajectory.format_valid,
        spec,
    )
    .expect("fallback and parsed confidences are always in [0, 1]")
}

/// Minimum reward attainable by a correct trajectory minus the maximum
/// attainable by an incorrect one, scanning confidence over a uniform
/// grid. Positive margin means no "safe failure" loophole exists.
/// Confidence-independent families have margin 1 by construction.
pub fn reward_margin(spec: &RewardSpec, grid_step: f64) -> Result<f64, RewardError> {
    if !(grid_step > 0.0 && grid_step <= 0.1) {
        return Err(RewardError::BadGridStep(grid_step));
    }
    let steps = (1.0 / grid_step).round() as usize;
    let mut min_correct = f64::INFINITY;
    let mut max_incorrect = f64::NEG_INFINITY;
    for i in 0..=steps {
        let q = i as f64 / steps as f64;
        min_correct = min_correct.min(family_value(&spec.family, true, q, 0)?);
        max_incorrect = max_incorrect.max(family_value(&spec.family, false, q, 0)?);
    }
    Ok(min_correct - max_incorrect)
}

/// Scored-output record: one JSON line per trajectory case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredRecord {
    pub id: String,
    pub correct: bool,
    pub confidence: Option<f64>,
    pub format_valid: bool,
    pub reward: RewardTerms,
}

/// Reward terms as serialized in scored output.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardTerms {
    pub outcome: f64,
    pub calibration: f64,
    pub format_penalty: f64,
    pub total: f64,
}

impl From<RewardBreakdown> for RewardTerms {
    fn from(b: RewardBreakdown) -> Self {
        Self {
            outcome: b.outcome,
            calibration: b.calibration,
            format_penalty: b.format_penalty,
            total: b.total,
        }
    }
}
