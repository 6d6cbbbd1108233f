//! Group-sampled training and evaluation loops.

use super::{episode_tool_calls, run_episode, run_episode_for, EnvSpec, SimError, SimPolicy};
use crate::grpo::{bin_confidence, group_advantages, policy_gradient_step, EpisodeOutcome};
use crate::metrics::{build_report, PredictionRecord, DEFAULT_BINS};
use crate::reward::{score_outcome, RewardSpec};
use crate::seeds;
use serde::{Deserialize, Serialize};

// Stream tags keeping rollout and evaluation draws disjoint.
const STREAM_EPISODE: u64 = 2;
const STREAM_EVAL: u64 = 3;

/// One training run's full configuration.
///
/// Each optimizer iteration samples `groups_per_iteration` rollout groups
/// of `group_size` episodes for every archetype and applies one batched
/// update. `advantage_epsilon` is the guard added to the group standard
/// deviation; the large default keeps near-zero-variance groups (all
/// episodes correct, confidences nearly equal) from having tiny reward
/// differences amplified into full-scale advantages, which otherwise
/// drives confidence toward 1.0 regardless of accuracy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub env: EnvSpec,
    pub reward: RewardSpec,
    pub iterations: usize,
    pub group_size: usize,
    pub learning_rate: f64,
    /// Multiplier on the learning rate of confidence heads; zero freezes
    /// them.
    #[serde(default = "default_confidence_lr_scale")]
    pub confidence_lr_scale: f64,
    #[serde(default = "default_groups_per_iteration")]
    pub groups_per_iteration: usize,
    #[serde(default = "default_advantage_epsilon")]
    pub advantage_epsilon: f64,
    pub eval_every: usize,
    pub eval_episodes: usize,
    pub seed: u64,
}

fn default_confidence_lr_scale() -> f64 {
    1.0
}

fn default_groups_per_iteration() -> usize {
    16
}

fn default_advantage_epsilon() -> f64 {
    3.0
}

impl TrainConfig {
    pub fn defaults(env: EnvSpec, reward: RewardSpec, seed: u64) -> Self {
        Self {
            env,
            reward,
            iterations: 2000,
            group_size: 8,
            learning_rate: 0.05,
            confidence_lr_scale: 1.0,
            groups_per_iteration: default_groups_per_iteration(),
            advantage_epsilon: default_advantage_epsilon(),
            eval_every: 500,
            eval_episodes: 2000,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        self.env.validate()?;
        self.reward
            .validate()
            .map_err(|e| SimError::BadConfig {
                field: "reward",
                reason: e.to_string(),
            })?;
        let positive = |field: &'static str, value: usize| -> Result<(), SimError> {
            if value == 0 {
                Err(SimError::BadConfig {
                    field,
                    reason: "must be positive".to_string(),
                })
            } else {
                Ok(())
            }
        };
        positive("iterations", self.iterations)?;
        positive("eval_every", self.eval_every)?;
        positive("eval_episodes", self.eval_episodes)?;
        if self.group_size < 2 {
            return Err(SimError::BadConfig {
                field: "group_size",
                reason: "needs at least 2 rollouts per group".to_string(),
            });
        }
        positive("groups_per_iteration", self.groups_per_iteration)?;
        if !(self.advantage_epsilon > 0.0 && self.advantage_epsilon.is_finite()) {
            return Err(SimError::BadConfig {
                field: "advantage_epsilon",
                reason: format!(
                    "must be a positive finite real, got {}",
                    self.advantage_epsilon
                ),
            });
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(SimError::BadConfig {
                field: "learning_rate",
                reason: format!("must be a positive finite real, got {}", self.learning_rate),
            });
        }
        if !(self.confidence_lr_scale >= 0.0 && self.confidence_lr_scale.is_finite()) {
            return Err(SimError::BadConfig {
                field: "confidence_lr_scale",
                reason: format!(
                    "must be a nonnegative finite real, got {}",
                    self.confidence_lr_scale
                ),
            });
        }
        Ok(())
    }

    /// Master seed mixing the run seed with the environment seed.
    fn master_seed(&self) -> u64 {
        seeds::derive(self.seed, &[self.env.seed])
    }
}

/// One checkpoint row of a training trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainLogRow {
    pub iteration: usize,
    pub train_mean_reward: f64,
    pub eval_accuracy: f64,
    pub eval_ece: f64,
    pub eval_brier: f64,
    pub eval_auroc: Option<f64>,
    pub eval_mcip: Option<f64>,
    pub mean_confidence: f64,
}

/// Training trace: one row per checkpoint, ordered by iteration.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainLog {
    pub rows: Vec<TrainLogRow>,
}

impl TrainLog {
    pub fn final_row(&self) -> Option<&TrainLogRow> {
        self.rows.last()
    }

    /// Render as CSV; undefined metrics become empty fields.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "iteration,train_mean_reward,eval_accuracy,eval_ece,eval_brier,eval_auroc,eval_mcip,mean_confidence\n",
        );
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for row in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                row.iteration,
                row.train_mean_reward,
                row.eval_accuracy,
                row.eval_ece,
                row.eval_brier,
                opt(row.eval_auroc),
                opt(row.eval_mcip),
                row.mean_confidence,
            ));
        }
        out
    }
}

/// Total unified reward for a simulated episode. Episodes are always
/// format-valid; tool calls are the tool-choice actions taken.
pub fn episode_reward(episode: &EpisodeOutcome, reward: &RewardSpec) -> f64 {
    score_outcome(
        episode.correct,
        Some(bin_confidence(episode.confidence_bin)),
        episode_tool_calls(episode),
        true,
        reward,
    )
    .expect("bin confidences lie in [0, 1]")
    .total
}

/// Train a fresh policy under the config.
pub fn train(config: &TrainConfig) -> Result<(SimPolicy, TrainLog), SimError> {
    config.validate()?;
    let policy = SimPolicy::new(&config.env, config.learning_rate, false)?;
    train_policy(config, policy)
}

/// Train a caller-initialized policy (blinded, biased, ...) under the
/// config. Each iteration rolls one group of episodes per archetype
/// through per-slot generator streams, scores them, normalizes
/// advantages within each group, and applies one batched
/// policy-gradient update for the whole iteration.
pub fn train_policy(
    config: &TrainConfig,
    mut policy: SimPolicy,
) -> Result<(SimPolicy, TrainLog), SimError> {
    config.validate()?;
    let master = config.master_seed();
    let mut log = TrainLog::default();
    let mut window_reward_sum = 0.0;
    let mut window_episodes = 0usize;

    for iteration in 0..config.iterations {
        let batch = config.env.n_archetypes * config.groups_per_iteration * config.group_size;
        let mut episodes = Vec::with_capacity(batch);
        let mut advantages = Vec::with_capacity(batch);
        for archetype in 0..config.env.n_archetypes {
            for group in 0..config.groups_per_iteration {
                let mut rewards = Vec::with_capacity(config.group_size);
                for slot in 0..config.group_size {
                    let mut rng = seeds::rng(
                        master,
                        &[
                            STREAM_EPISODE,
                            iteration as u64,
                            archetype as u64,
                            group as u64,
                            slot as u64,
                        ],
                    );
                    let mut episode =
                        run_episode_for(&config.env, &policy, archetype, &mut rng);
                    episode.reward = episode_reward(&episode, &config.reward);
                    window_reward_sum += episode.reward;
                    window_episodes += 1;
                    rewards.push(episode.reward);
                    episodes.push(episode);
                }
                advantages.extend(group_advantages(&rewards, config.advantage_epsilon)?);
            }
        }
        policy = apply_update(policy, &episodes, &advantages, config.confidence_lr_scale)?;

        let done = iteration + 1 == config.iterations;
        if (iteration + 1) % config.eval_every == 0 || done {
            let eval_seed = seeds::derive(master, &[STREAM_EVAL, (iteration + 1) as u64]);
            let records =
                evaluate_policy(&policy, &config.env, config.eval_episodes, eval_seed);
            let report = build_report(&records, DEFAULT_BINS)?;
            let mean_confidence =
                records.iter().map(|r| r.confidence).sum::<f64>() / records.len() as f64;
            log.rows.push(TrainLogRow {
                iteration: iteration + 1,
                train_mean_reward: window_reward_sum / window_episodes.max(1) as f64,
                eval_accuracy: report.accuracy,
                eval_ece: report.ece,
                eval_brier: report.brier,
                eval_auroc: report.auroc,
                eval_mcip: report.mcip,
                mean_confidence,
            });
            window_reward_sum = 0.0;
            window_episodes = 0;
        }
    }
    Ok((policy, log))
}

/// Apply one group update, optionally rescaling the confidence-head
/// learning rate. Tool heads and confidence heads are disjoint, so the
/// two passes cannot interact.
fn apply_update(
    mut policy: SimPolicy,
    episodes: &[EpisodeOutcome],
    advantages: &[f64],
    confidence_lr_scale: f64,
) -> Result<SimPolicy, SimError> {
    if confidence_lr_scale == 1.0 {
        policy.params = policy_gradient_step(policy.params, episodes, advantages)?;
        return Ok(policy);
    }
    let filter_episodes = |prefix: &str| -> Vec<EpisodeOutcome> {
        episodes
            .iter()
            .map(|e| EpisodeOutcome {
                action_choices: e
                    .action_choices
                    .iter()
                    .filter(|(id, _)| id.starts_with(prefix))
                    .cloned()
                    .collect(),
                ..e.clone()
            })
            .collect()
    };
    let base_lr = policy.params.learning_rate;
    policy.params = policy_gradient_step(policy.params, &filter_episodes("tool/"), advantages)?;
    if confidence_lr_scale > 0.0 {
        policy.params.learning_rate = base_lr * confidence_lr_scale;
        policy.params =
            policy_gradient_step(policy.params, &filter_episodes("conf/"), advantages)?;
        policy.params.learning_rate = base_lr;
    }
    Ok(policy)
}

/// Roll fresh evaluation episodes and map them to prediction records.
/// Episode `i` draws from its own stream derived from `eval_seed`, so
/// records are independent of evaluation batching.
pub fn evaluate_policy(
    policy: &SimPolicy,
    env: &EnvSpec,
    n_episodes: usize,
    eval_seed: u64,
) -> Vec<PredictionRecord> {
    (0..n_episodes)
        .map(|i| {
            let mut rng = seeds::rng(eval_seed, &[i as u64]);
            let episode = run_episode(env, policy, &mut rng);
            PredictionRecord {
                id: format!("ep{i:06}"),
                confidence: bin_confidence(episode.confidence_bin),
                correct: episode.correct,
                config_label: None,
            }
        })
        .collect()
}
