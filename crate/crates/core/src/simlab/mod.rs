//! Synthetic tool-use environments and seeded training loops.
//!
//! Two environment kinds model the two tool families:
//!
//! - **Evidence**: using the tool fetches a document that is faithful
//!   with some retrieval precision. The policy only ever observes that a
//!   document *arrived*, never whether it was faithful — arrival carries
//!   no correctness information.
//! - **Verification**: each candidate answer is correct with a
//!   per-attempt probability; wrong candidates trigger observable
//!   failure feedback with some detection rate, allowing a resample
//!   while budget remains. Correct candidates always pass, so feedback
//!   is one-sided: a pass does not certify correctness, but an exhausted
//!   budget certifies failure.
//!
//! A policy has one tool-use head per question archetype and one
//! confidence head per (archetype, feedback state) pair; a blinded
//! policy collapses all feedback states into one confidence head.
//! Everything is driven by per-episode generator streams derived from a
//! master seed, so runs are reproducible regardless of scheduling.

mod dichotomy;
mod train;

pub use dichotomy::{
    dichotomy_experiment, DichotomyConfig, DichotomyReport, RepetitionResult,
};
pub use train::{
    episode_reward, evaluate_policy, train, train_policy, TrainConfig, TrainLog, TrainLogRow,
};

use crate::grpo::{sample_action, GrpoError, PolicyParams, CONFIDENCE_BINS};
use crate::metrics::MetricsError;
use crate::reward::RewardError;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid environment field {field}: {reason}")]
    BadEnv {
        field: &'static str,
        reason: String,
    },
    #[error("invalid config field {field}: {reason}")]
    BadConfig {
        field: &'static str,
        reason: String,
    },
    #[error(transparent)]
    Grpo(#[from] GrpoError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Reward(#[from] RewardError),
}

/// Environment family and its outcome probabilities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EnvKind {
    Evidence {
        /// Probability a retrieved document is faithful.
        retrieval_precision: f64,
        /// Accuracy when answering without the tool.
        p_direct: f64,
        /// Accuracy given a faithful document.
        p_good: f64,
        /// Accuracy given a misleading document.
        p_bad: f64,
    },
    Verification {
        /// Per-attempt probability a candidate answer is correct.
        p_attempt: f64,
        /// Probability a wrong candidate triggers failure feedback.
        detection_rate: f64,
        /// Maximum resample attempts after the first candidate.
        budget: usize,
    },
}

/// Full environment description.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvSpec {
    #[serde(flatten)]
    pub kind: EnvKind,
    pub n_archetypes: usize,
    pub seed: u64,
}

impl EnvSpec {
    /// Evidence environment with the default illustrative parameters.
    pub fn default_evidence(seed: u64) -> Self {
        Self {
            kind: EnvKind::Evidence {
                retrieval_precision: 0.7,
                p_direct: 0.4,
                p_good: 0.9,
                p_bad: 0.2,
            },
            n_archetypes: 8,
            seed,
        }
    }

    /// Verification environment with headline accuracy matched to
    /// [`EnvSpec::default_evidence`]'s always-tool rate.
    pub fn default_verification(seed: u64) -> Self {
        Self {
            kind: EnvKind::Verification {
                p_attempt: 0.45,
                detection_rate: 0.7,
                budget: 1,
            },
            n_archetypes: 8,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let check = |field: &'static str, value: f64| -> Result<(), SimError> {
            if (0.0..=1.0).contains(&value) {
                Ok(())
            } else {
                Err(SimError::BadEnv {
                    field,
                    reason: format!("probability {value} outside [0, 1]"),
                })
            }
        };
        match self.kind {
            EnvKind::Evidence {
                retrieval_precision,
                p_direct,
                p_good,
                p_bad,
            } => {
                check("retrieval_precision", retrieval_precision)?;
                check("p_direct", p_direct)?;
                check("p_good", p_good)?;
                check("p_bad", p_bad)?;
            }
            EnvKind::Verification {
                p_attempt,
                detection_rate,
                ..
            } => {
                check("p_attempt", p_attempt)?;
                check("detection_rate", detection_rate)?;
            }
        }
        if self.n_archetypes == 0 {
            return Err(SimError::BadEnv {
                field: "n_archetypes",
                reason: "must be positive".to_string(),
            });
        }
        Ok(())
    }

    /// Long-run accuracy of a fixed policy that always (or never) uses
    /// the tool, by total probability. The oracle the sampler is checked
    /// against.
    pub fn closed_form_accuracy(&self, use_tool: bool) -> f64 {
        match self.kind {
            EnvKind::Evidence {
                retrieval_precision,
                p_direct,
                p_good,
                p_bad,
            } => {
                if use_tool {
                    retrieval_precision * p_good + (1.0 - retrieval_precision) * p_bad
                } else {
                    p_direct
                }
            }
            EnvKind::Verification {
                p_attempt,
                detection_rate,
                budget,
            } => {
                if use_tool {
                    // P(correct) = p0 * sum_{j=0..=budget} ((1-p0) * gamma)^j
                    let retry = (1.0 - p_attempt) * detection_rate;
                    let mut sum = 0.0;
                    let mut term = 1.0;
                    for _ in 0..=budget {
                        sum += term;
                        term *= retry;
                    }
                    p_attempt * sum
                } else {
                    p_attempt
                }
            }
        }
    }

    fn feedback_states(&self) -> &'static [FeedbackState] {
        match self.kind {
            EnvKind::Evidence { .. } => &[FeedbackState::None, FeedbackState::ToolUsed],
            EnvKind::Verification { .. } => &[
                FeedbackState::None,
                FeedbackState::PassObserved,
                FeedbackState::FailThenPass,
                FeedbackState::Exhausted,
            ],
        }
    }
}

/// What the policy observed about its tool interaction before reporting
/// confidence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeedbackState {
    /// Answered directly, no tool used.
    None,
    /// Evidence arrived; nothing is known about its faithfulness.
    ToolUsed,
    /// A candidate passed with no failure ever observed.
    PassObserved,
    /// At least one failure was observed before a candidate passed.
    FailThenPass,
    /// Every attempt failed observably and the budget ran out.
    Exhausted,
}

impl FeedbackState {
    pub fn key(self) -> &'static str {
        match self {
            FeedbackState::None => "none",
            FeedbackState::ToolUsed => "tool_used",
            FeedbackState::PassObserved => "pass_observed",
            FeedbackState::FailThenPass => "fail_then_pass",
            FeedbackState::Exhausted => "exhausted",
        }
    }
}

/// Tool-choice decision point id for an archetype.
pub fn tool_point(archetype: usize) -> String {
    format!("tool/{archetype}")
}

/// Confidence decision point id for an archetype and feedback state.
pub fn confidence_point(archetype: usize, state: &str) -> String {
    format!("conf/{archetype}/{state}")
}

const BLIND_STATE: &str = "blind";
/// Tool action indices: 0 answers directly, 1 uses the tool.
pub const ACTION_DIRECT: usize = 0;
pub const ACTION_TOOL: usize = 1;

/// Confidence-head initialization biased toward the top bins: 0.8 of the
/// probability mass sits on bins {0.9, 1.0}, and the remaining mass
/// tilts upward, for an initial mean confidence near 0.9.
pub fn overconfident_confidence_logits() -> Vec<f64> {
    let mut logits: Vec<f64> = (0..CONFIDENCE_BINS)
        .map(|bin| 0.6 * bin as f64)
        .collect();
    let low_mass: f64 = logits[..CONFIDENCE_BINS - 2]
        .iter()
        .map(|l| l.exp())
        .sum();
    // Two top bins carry four times the rest: mass 0.8 exactly.
    let boost = (2.0 * low_mass).ln();
    logits[CONFIDENCE_BINS - 2] = boost;
    logits[CONFIDENCE_BINS - 1] = boost;
    logits
}

/// Tabular policy over one environment's decision points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimPolicy {
    pub params: PolicyParams,
    pub n_archetypes: usize,
    pub blind_confidence: bool,
}

impl SimPolicy {
    /// Fresh policy: uniform tool choice, overconfident confidence heads.
    pub fn new(
        env: &EnvSpec,
        learning_rate: f64,
        blind_confidence: bool,
    ) -> Result<Self, SimError> {
        env.validate()?;
        let mut params = PolicyParams::new(learning_rate);
        for archetype in 0..env.n_archetypes {
            params.add_decision_point(tool_point(archetype), vec![0.0, 0.0]);
            if blind_confidence {
                params.add_decision_point(
                    confidence_point(archetype, BLIND_STATE),
                    overconfident_confidence_logits(),
                );
            } else {
                for state in env.feedback_states() {
                    params.add_decision_point(
                        confidence_point(archetype, state.key()),
                        overconfident_confidence_logits(),
                    );
                }
            }
        }
        Ok(Self {
            params,
            n_archetypes: env.n_archetypes,
            blind_confidence,
        })
    }

    /// Confidence decision point id seen by this policy in a given state.
    pub fn confidence_point_for(&self, archetype: usize, state: FeedbackState) -> String {
        if self.blind_confidence {
            confidence_point(archetype, BLIND_STATE)
        } else {
            confidence_point(archetype, state.key())
        }
    }

    /// Pin every tool head to one choice (for fixed-policy oracles).
    pub fn force_tool_choice(&mut self, use_tool: bool) {
        let logit = if use_tool { 40.0 } else { -40.0 };
        for archetype in 0..self.n_archetypes {
            self.params
                .logits
                .insert(tool_point(archetype), vec![-logit, logit]);
        }
    }

    /// Pin every confidence head to one bin.
    pub fn force_confidence(&mut self, bin: usize) {
        assert!(bin < CONFIDENCE_BINS, "bin {bin} out of range");
        for logits in self
            .params
            .logits
            .iter_mut()
            .filter(|(id, _)| id.starts_with("conf/"))
            .map(|(_, l)| l)
        {
            for (i, l) in logits.iter_mut().enumerate() {
                *l = if i == bin { 40.0 } else { -40.0 };
            }
        }
    }

    /// Bias tool heads toward direct answering (a low-accuracy start in
    /// environments where the tool helps).
    pub fn bias_toward_direct(&mut self, strength: f64) {
        for archetype in 0..self.n_archetypes {
            self.params
                .logits
                .insert(tool_point(archetype), vec![strength, -strength]);
        }
    }
}

/// Play one episode on a sampled archetype.
pub fn run_episode<R: Rng>(
    env: &EnvSpec,
    policy: &SimPolicy,
    rng: &mut R,
) -> crate::grpo::EpisodeOutcome {
    let archetype = rng.gen_range(0..env.n_archetypes);
    run_episode_for(env, policy, archetype, rng)
}

/// Play one episode on a fixed archetype. Draw order is tool choice,
/// environment outcomes, then confidence, so matched-seed runs of
/// policies with identical tool behavior see identical outcomes.
pub fn run_episode_for<R: Rng>(
    env: &EnvSpec,
    policy: &SimPolicy,
    archetype: usize,
    rng: &mut R,
) -> crate::grpo::EpisodeOutcome {
    let tool_id = tool_point(archetype);
    let tool_action = sample_action(&policy.params, &tool_id, rng)
        .expect("policy owns a head for every archetype");
    let use_tool = tool_action == ACTION_TOOL;

    let (correct, state) = match env.kind {
        EnvKind::Evidence {
            retrieval_precision,
            p_direct,
            p_good,
            p_bad,
        } => {
            if use_tool {
                let faithful = rng.gen_bool(retrieval_precision);
                let p = if faithful { p_good } else { p_bad };
                (rng.gen_bool(p), FeedbackState::ToolUsed)
            } else {
                (rng.gen_bool(p_direct), FeedbackState::None)
            }
        }
        EnvKind::Verification {
            p_attempt,
            detection_rate,
            budget,
        } => {
            if use_tool {
                let mut outcome = None;
                let mut fail_seen = false;
                for _ in 0..=budget {
                    if rng.gen_bool(p_attempt) {
                        // Correct candidates always pass.
                        let state = if fail_seen {
                            FeedbackState::FailThenPass
                        } else {
                            FeedbackState::PassObserved
                        };
                        outcome = Some((true, state));
                        break;
                    }
                    if !rng.gen_bool(detection_rate) {
                        // Undetected wrong candidate looks like a pass.
                        let state = if fail_seen {
                            FeedbackState::FailThenPass
                        } else {
                            FeedbackState::PassObserved
                        };
                        outcome = Some((false, state));
                        break;
                    }
                    fail_seen = true;
                }
                outcome.unwrap_or((false, FeedbackState::Exhausted))
            } else {
                (rng.gen_bool(p_attempt), FeedbackState::None)
            }
        }
    };

    let confidence_id = policy.confidence_point_for(archetype, state);
    let confidence_bin = sample_action(&policy.params, &confidence_id, rng)
        .expect("policy owns a head for every feedback state");

    crate::grpo::EpisodeOutcome {
        question_key: format!("arch{archetype}"),
        action_choices: vec![(tool_id, tool_action), (confidence_id, confidence_bin)],
        reward: 0.0,
        correct,
        confidence_bin,
    }
}

/// Tool invocations recorded in an episode's action choices.
pub fn episode_tool_calls(episode: &crate::grpo::EpisodeOutcome) -> usize {
    episode
        .action_choices
        .iter()
        .filter(|(id, action)| id.starts_with("tool/") && *action == ACTION_TOOL)
        .count()
}

/// Feedback-state key recorded in an episode's confidence decision point.
pub fn episode_feedback_key(episode: &crate::grpo::EpisodeOutcome) -> Option<&str> {
    episode
        .action_choices
        .iter()
        .find(|(id, _)| id.starts_with("conf/"))
        .and_then(|(id, _)| id.rsplit('/').next())
}
