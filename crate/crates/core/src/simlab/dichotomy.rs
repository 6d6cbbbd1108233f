//! Paired evidence/verification experiment.
//!
//! Trains matched calibration-reward policies on an evidence environment
//! and a verification environment with matched headline accuracy, plus a
//! variant of each whose confidence head is blinded to feedback state,
//! plus outcome-reward-only controls. Verification feedback is
//! correlated with correctness by construction, so conditioning the
//! confidence head on it buys failure discrimination (AUROC); evidence
//! arrival carries no correctness information, so conditioning buys
//! nothing there. The outcome-only controls keep their overconfident
//! initialization.

use super::train::{evaluate_policy, train_policy, TrainConfig, TrainLog};
use super::{EnvKind, EnvSpec, SimError, SimPolicy};
use crate::metrics::{auroc, mcip, sign_test, SignTest};
use crate::reward::{RewardFamily, RewardSpec};
use crate::seeds;
use serde::{Deserialize, Serialize};

/// Experiment layout: the two environments, the training budget shared
/// by every run, and the repetition count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DichotomyConfig {
    pub evidence_env: EnvSpec,
    pub verification_env: EnvSpec,
    pub reward: RewardSpec,
    pub iterations: usize,
    pub group_size: usize,
    pub learning_rate: f64,
    pub eval_episodes: usize,
    pub repetitions: usize,
}

impl Default for DichotomyConfig {
    fn default() -> Self {
        // Always-tool accuracy 0.6225 (evidence) vs 0.62325 (verification).
        Self {
            evidence_env: EnvSpec {
                kind: EnvKind::Evidence {
                    retrieval_precision: 0.65,
                    p_direct: 0.35,
                    p_good: 0.85,
                    p_bad: 0.2,
                },
                n_archetypes: 8,
                seed: 0,
            },
            verification_env: EnvSpec::default_verification(0),
            reward: RewardSpec::mscr_default(),
            iterations: 1000,
            group_size: 8,
            learning_rate: 0.05,
            eval_episodes: 2000,
            repetitions: 10,
        }
    }
}

impl DichotomyConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        self.evidence_env.validate()?;
        self.verification_env.validate()?;
        if self.repetitions == 0 {
            return Err(SimError::BadConfig {
                field: "repetitions",
                reason: "must be positive".to_string(),
            });
        }
        self.train_config(&self.evidence_env, self.reward, 0).validate()
    }

    fn train_config(&self, env: &EnvSpec, reward: RewardSpec, seed: u64) -> TrainConfig {
        let mut config = TrainConfig::defaults(*env, reward, seed);
        config.iterations = self.iterations;
        config.group_size = self.group_size;
        config.learning_rate = self.learning_rate;
        // Evaluate only at the end; the experiment does its own paired
        // evaluation.
        config.eval_every = self.iterations;
        config.eval_episodes = self.eval_episodes;
        config
    }
}

/// Per-repetition evaluation summary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RepetitionResult {
    pub seed: u64,
    pub evidence_conditioned_auroc: Option<f64>,
    pub evidence_blinded_auroc: Option<f64>,
    pub verification_conditioned_auroc: Option<f64>,
    pub verification_blinded_auroc: Option<f64>,
    pub evidence_conditioned_accuracy: f64,
    pub verification_conditioned_accuracy: f64,
    pub evidence_em_only_mcip: Option<f64>,
    pub verification_em_only_mcip: Option<f64>,
}

/// Full experiment output: per-repetition rows, sign tests of the
/// conditioned-minus-blinded AUROC gaps, and sample training traces from
/// the first repetition.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DichotomyReport {
    pub config: DichotomyConfig,
    pub repetitions: Vec<RepetitionResult>,
    pub verification_auroc_sign: SignTest,
    pub evidence_auroc_sign: SignTest,
    pub mean_evidence_em_only_mcip: Option<f64>,
    pub mean_verification_em_only_mcip: Option<f64>,
    pub evidence_sample_log: TrainLog,
    pub verification_sample_log: TrainLog,
}

struct EnvOutcome {
    conditioned_auroc: Option<f64>,
    blinded_auroc: Option<f64>,
    conditioned_accuracy: f64,
    em_only_mcip: Option<f64>,
    conditioned_log: TrainLog,
}

fn run_env(
    config: &DichotomyConfig,
    env: &EnvSpec,
    rep_seed: u64,
    env_tag: u64,
) -> Result<EnvOutcome, SimError> {
    // Conditioned and blinded runs share one seed so their episode
    // streams pair; the evaluation stream is shared by all three runs.
    let run_seed = seeds::derive(rep_seed, &[env_tag, 0]);
    let em_seed = seeds::derive(rep_seed, &[env_tag, 1]);
    let eval_seed = seeds::derive(rep_seed, &[env_tag, 2]);

    let train_cfg = config.train_config(env, config.reward, run_seed);
    let conditioned_init = SimPolicy::new(env, config.learning_rate, false)?;
    let blinded_init = SimPolicy::new(env, config.learning_rate, true)?;
    let (conditioned, conditioned_log) = train_policy(&train_cfg, conditioned_init)?;
    let (blinded, _) = train_policy(&train_cfg, blinded_init)?;

    let em_cfg = config.train_config(env, RewardSpec::new(RewardFamily::EmOnly), em_seed);
    let (em_only, _) = train_policy(&em_cfg, SimPolicy::new(env, config.learning_rate, false)?)?;

    let conditioned_records =
        evaluate_policy(&conditioned, env, config.eval_episodes, eval_seed);
    let blinded_records = evaluate_policy(&blinded, env, config.eval_episodes, eval_seed);
    let em_records = evaluate_policy(&em_only, env, config.eval_episodes, eval_seed);

    let correct = conditioned_records.iter().filter(|r| r.correct).count();
    Ok(EnvOutcome {
        conditioned_auroc: auroc(&conditioned_records),
        blinded_auroc: auroc(&blinded_records),
        conditioned_accuracy: correct as f64 / conditioned_records.len() as f64,
        em_only_mcip: mcip(&em_records),
        conditioned_log,
    })
}

fn mean_of(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let collected: Vec<f64> = values.flatten().collect();
    if collected.is_empty() {
        None
    } else {
        Some(collected.iter().sum::<f64>() / collected.len() as f64)
    }
}

/// Run the full experiment from a master seed.
pub fn dichotomy_experiment(
    seed: u64,
    config: &DichotomyConfig,
) -> Result<DichotomyReport, SimError> {
    config.validate()?;
    let mut repetitions = Vec::with_capacity(config.repetitions);
    let mut evidence_sample_log = TrainLog::default();
    let mut verification_sample_log = TrainLog::default();

    for rep in 0..config.repetitions {
        let rep_seed = seeds::derive(seed, &[rep as u64]);
        let evidence = run_env(config, &config.evidence_env, rep_seed, 0)?;
        let verification = run_env(config, &config.verification_env, rep_seed, 1)?;
        if rep == 0 {
            evidence_sample_log = evidence.conditioned_log.clone();
            verification_sample_log = verification.conditioned_log.clone();
        }
        repetitions.push(RepetitionResult {
            seed: rep_seed,
            evidence_conditioned_auroc: evidence.conditioned_auroc,
            evidence_blinded_auroc: evidence.blinded_auroc,
            verification_conditioned_auroc: verification.conditioned_auroc,
            verification_blinded_auroc: verification.blinded_auroc,
            evidence_conditioned_accuracy: evidence.conditioned_accuracy,
            verification_conditioned_accuracy: verification.conditioned_accuracy,
            evidence_em_only_mcip: evidence.em_only_mcip,
            verification_em_only_mcip: verification.em_only_mcip,
        });
    }

    let gaps = |pick: fn(&RepetitionResult) -> (Option<f64>, Option<f64>)| -> Vec<f64> {
        repetitions
            .iter()
            .filter_map(|r| {
                let (conditioned, blinded) = pick(r);
                Some(conditioned? - blinded?)
            })
            .collect()
    };
    let verification_gaps = gaps(|r| {
        (
            r.verification_conditioned_auroc,
            r.verification_blinded_auroc,
        )
    });
    let evidence_gaps = gaps(|r| (r.evidence_conditioned_auroc, r.evidence_blinded_auroc));

    Ok(DichotomyReport {
        config: *config,
        verification_auroc_sign: sign_test(&verification_gaps),
        evidence_auroc_sign: sign_test(&evidence_gaps),
        mean_evidence_em_only_mcip: mean_of(
            repetitions.iter().map(|r| r.evidence_em_only_mcip),
        ),
        mean_verification_em_only_mcip: mean_of(
            repetitions.iter().map(|r| r.verification_em_only_mcip),
        ),
        repetitions,
        evidence_sample_log,
        verification_sample_log,
    })
}
