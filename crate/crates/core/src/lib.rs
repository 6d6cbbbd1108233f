//! Calibration-aware reward engineering and evaluation for tool-use agent
//! trajectories.
//!
//! The crate is organized around the lifecycle of a scored trajectory:
//!
//! - [`transcript`] parses raw tag-structured transcripts into
//!   [`transcript::ParsedTrajectory`] values, enforces the extended format
//!   constraint, and judges answers by normalized exact match.
//! - [`reward`] computes the reward families (exact-match, weighted Brier,
//!   margin-separated calibration, search penalty) and combines them with
//!   the format constraint into a unified per-trajectory reward.
//! - [`metrics`] aggregates prediction records into calibration reports
//!   (accuracy, ECE, Brier, AUROC, MCIP) and provides paired t-tests and
//!   temperature scaling.
//! - [`oracle`] analyzes reward incentive structure by brute force and in
//!   closed form: expected-reward surfaces, optimal reported confidence,
//!   and propriety certification.
//! - [`grpo`] implements group-relative advantage estimation and tabular
//!   softmax policy-gradient updates.
//! - [`simlab`] provides synthetic evidence/verification tool environments
//!   and seeded training loops built on the pieces above.

pub mod grpo;
pub mod metrics;
pub mod oracle;
pub mod reward;
pub mod seeds;
pub mod simlab;
pub mod transcript;

pub use metrics::{CalibrationReport, PredictionRecord, TTestResult};
pub use reward::{RewardBreakdown, RewardFamily, RewardSpec};
pub use transcript::{ParsedTrajectory, ToolSchema, TrajectoryCase};
