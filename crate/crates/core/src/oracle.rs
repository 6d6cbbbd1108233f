//! Incentive analysis of reward families.
//!
//! For a trajectory believed correct with probability `p` and reporting
//! confidence `q`, the expected reward is affine in `p`. This module
//! locates the reported confidence that maximizes it — by exhaustive grid
//! scan and, where one exists, in closed form — and certifies whether a
//! family is a proper scoring rule (truthful reporting `q* = p` is
//! optimal everywhere). Families that ignore confidence entirely report a
//! flat profile instead of a number.

use crate::reward::{family_value, RewardError, RewardSpec};
use serde::ser::Serializer;
use serde::Serialize;

/// Default confidence grid resolution for argmax scans.
pub const DEFAULT_GRID_STEP: f64 = 0.001;
/// Default propriety tolerance: the coarsest setting the grid cannot
/// alias at [`DEFAULT_GRID_STEP`].
pub const DEFAULT_PROPRIETY_TOLERANCE: f64 = 0.005;
/// Default belief-grid step for propriety scans.
pub const DEFAULT_BELIEF_STEP: f64 = 0.05;

/// Reward-maximizing reported confidence, or `Flat` when the reward does
/// not depend on the report at all.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OptimalConfidence {
    Value(f64),
    Flat,
}

impl OptimalConfidence {
    pub fn value(self) -> Option<f64> {
        match self {
            OptimalConfidence::Value(v) => Some(v),
            OptimalConfidence::Flat => None,
        }
    }

    /// Grid value used for truthfulness gaps: flat profiles tie-break to
    /// the smallest grid point, zero.
    pub fn value_or_tiebreak(self) -> f64 {
        self.value().unwrap_or(0.0)
    }
}

impl Serialize for OptimalConfidence {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            OptimalConfidence::Value(v) => serializer.serialize_f64(*v),
            OptimalConfidence::Flat => serializer.serialize_str("flat"),
        }
    }
}

/// One belief-grid row of an incentive profile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProfilePoint {
    pub p: f64,
    pub optimal_q: OptimalConfidence,
    pub expected_reward: f64,
}

/// Incentive structure of a reward family over a belief grid.
///
/// `proper` holds when the grid argmax never strays more than `tolerance`
/// from the truthful report; a flat family is never proper and records a
/// gap against the tie-broken argmax at zero.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IncentiveProfile {
    pub spec: RewardSpec,
    pub tolerance: f64,
    pub points: Vec<ProfilePoint>,
    pub proper: bool,
    pub max_truthfulness_gap: f64,
    pub flat: bool,
}

fn check_probability(value: f64, err: fn(f64) -> RewardError) -> Result<(), RewardError> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(err(value))
    }
}

fn check_step(step: f64) -> Result<usize, RewardError> {
    if step > 0.0 && step <= 0.1 {
        Ok((1.0 / step).round() as usize)
    } else {
        Err(RewardError::BadGridStep(step))
    }
}

/// Expected reward under correctness probability `p` and report `q`:
/// `p * R(correct, q) + (1 - p) * R(incorrect, q)`.
pub fn expected_reward(spec: &RewardSpec, p: f64, q: f64) -> Result<f64, RewardError> {
    check_probability(p, RewardError::BeliefOutOfRange)?;
    let correct = family_value(&spec.family, true, q, 0)?;
    let incorrect = family_value(&spec.family, false, q, 0)?;
    Ok(p * correct + (1.0 - p) * incorrect)
}

/// Argmax of the expected reward over the confidence grid
/// `{0, step, ..., 1}`. Ties break toward the smallest `q`; a family
/// whose expected reward never varies reports `Flat`.
pub fn optimal_confidence_grid(
    spec: &RewardSpec,
    p: f64,
    step: f64,
) -> Result<OptimalConfidence, RewardError> {
    let steps = check_step(step)?;
    let mut best_q = 0.0;
    let mut best = f64::NEG_INFINITY;
    let mut worst = f64::INFINITY;
    for i in 0..=steps {
        let q = i as f64 / steps as f64;
        let value = expected_reward(spec, p, q)?;
        if value > best {
            best = value;
            best_q = q;
        }
        worst = worst.min(value);
    }
    if best == worst {
        Ok(OptimalConfidence::Flat)
    } else {
        Ok(OptimalConfidence::Value(best_q))
    }
}

/// First-order-condition optimum of the expected reward:
/// the truthful report `p` for any positively weighted Brier family, and
/// `beta1 * p / (beta1 * p + beta2 * (1 - p))` for MSCR. Families that
/// ignore confidence are `Flat`.
pub fn optimal_confidence_closed(
    spec: &RewardSpec,
    p: f64,
) -> Result<OptimalConfidence, RewardError> {
    check_probability(p, RewardError::BeliefOutOfRange)?;
    spec.validate()?;
    use crate::reward::RewardFamily::*;
    Ok(match spec.family {
        EmOnly | SearchPenalty { .. } => OptimalConfidence::Flat,
        WeightedBrier { lambda } if lambda == 0.0 => OptimalConfidence::Flat,
        WeightedBrier { .. } => OptimalConfidence::Value(p),
        Mscr { beta1, beta2 } => {
            OptimalConfidence::Value(beta1 * p / (beta1 * p + beta2 * (1.0 - p)))
        }
    })
}

/// Scan a belief grid, locating the grid-optimal report at each `p` and
/// comparing it to the truthful report.
pub fn propriety_check(
    spec: &RewardSpec,
    tolerance: f64,
    belief_step: f64,
) -> Result<IncentiveProfile, RewardError> {
    spec.validate()?;
    let steps = check_step(belief_step)?;
    let mut points = Vec::with_capacity(steps + 1);
    let mut max_gap = 0.0f64;
    let mut flat = false;
    for i in 0..=steps {
        let p = i as f64 / steps as f64;
        let optimal = optimal_confidence_grid(spec, p, DEFAULT_GRID_STEP)?;
        flat |= matches!(optimal, OptimalConfidence::Flat);
        max_gap = max_gap.max((optimal.value_or_tiebreak() - p).abs());
        let expected = expected_reward(spec, p, optimal.value_or_tiebreak())?;
        points.push(ProfilePoint {
            p,
            optimal_q: optimal,
            expected_reward: expected,
        });
    }
    Ok(IncentiveProfile {
        spec: *spec,
        tolerance,
        points,
        proper: !flat && max_gap <= tolerance,
        max_truthfulness_gap: max_gap,
        flat,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reward::{reward_margin, RewardFamily, RewardSpec};
    use proptest::prelude::*;

    fn wb(lambda: f64) -> RewardSpec {
        RewardSpec::new(RewardFamily::WeightedBrier { lambda })
    }

    fn mscr(beta1: f64, beta2: f64) -> RewardSpec {
        RewardSpec::new(RewardFamily::Mscr { beta1, beta2 })
    }

    #[test]
    fn expected_reward_examples() {
        assert_eq!(expected_reward(&wb(1.0), 1.0, 1.0).unwrap(), 1.0);
        assert_eq!(expected_reward(&mscr(0.5, 0.5), 0.0, 0.0).unwrap(), 0.0);
        let mid = expected_reward(&wb(1.0), 0.5, 0.5).unwrap();
        assert!((mid - 0.25).abs() < 1e-15);
        assert!(expected_reward(&wb(1.0), 1.5, 0.5).is_err());
        assert!(expected_reward(&wb(1.0), 0.5, 1.5).is_err());
    }

    #[test]
    fn grid_optimum_examples() {
        let q = optimal_confidence_grid(&wb(1.0 / 3.0), 0.3, 0.001)
            .unwrap()
            .value()
            .unwrap();
        assert!((q - 0.3).abs() < 1e-12, "q = {q}");

        let q = optimal_confidence_grid(&mscr(0.5, 0.5), 0.7, 0.001)
            .unwrap()
            .value()
            .unwrap();
        assert!((q - 0.7).abs() < 1e-12);

        let q = optimal_confidence_grid(&mscr(1.0, 3.0), 0.5, 0.001)
            .unwrap()
            .value()
            .unwrap();
        assert!((q - 0.25).abs() < 1e-12);

        assert_eq!(
            optimal_confidence_grid(&RewardSpec::new(RewardFamily::EmOnly), 0.5, 0.001)
                .unwrap(),
            OptimalConfidence::Flat
        );
        assert_eq!(
            optimal_confidence_grid(&wb(0.0), 0.4, 0.001).unwrap(),
            OptimalConfidence::Flat
        );
    }

    #[test]
    fn closed_form_examples() {
        assert_eq!(
            optimal_confidence_closed(&wb(1.0), 0.42).unwrap(),
            OptimalConfidence::Value(0.42)
        );
        for i in 0..=10 {
            let p = i as f64 / 10.0;
            let q = optimal_confidence_closed(&mscr(0.7, 0.7), p)
                .unwrap()
                .value()
                .unwrap();
            assert!((q - p).abs() < 1e-12, "symmetric betas must be truthful");
        }
        assert_eq!(
            optimal_confidence_closed(&RewardSpec::new(RewardFamily::EmOnly), 0.5).unwrap(),
            OptimalConfidence::Flat
        );
    }

    #[test]
    fn grid_matches_closed_form_within_one_step() {
        let specs = [
            wb(0.1),
            wb(1.0 / 3.0),
            wb(1.0),
            wb(3.0),
            mscr(0.25, 0.25),
            mscr(0.5, 0.5),
            mscr(1.0, 1.0),
            mscr(1.0, 3.0),
            mscr(2.0, 0.5),
        ];
        for spec in &specs {
            for i in 0..=20 {
                let p = i as f64 / 20.0;
                let closed = optimal_confidence_closed(spec, p).unwrap().value().unwrap();
                let grid = optimal_confidence_grid(spec, p, DEFAULT_GRID_STEP)
                    .unwrap()
                    .value()
                    .unwrap();
                assert!(
                    (grid - closed).abs() <= DEFAULT_GRID_STEP + 1e-12,
                    "{spec:?} at p={p}: grid {grid} vs closed {closed}"
                );
            }
        }
    }

    #[test]
    fn propriety_examples() {
        for lambda in [0.1, 1.0 / 3.0, 1.0, 3.0] {
            let profile = propriety_check(&wb(lambda), 0.005, 0.05).unwrap();
            assert!(profile.proper, "weighted Brier lambda={lambda} must be proper");
        }
        for beta in [0.25, 0.5, 1.0] {
            let profile = propriety_check(&mscr(beta, beta), 0.005, 0.05).unwrap();
            assert!(profile.proper, "symmetric MSCR beta={beta} must be proper");
        }

        let skewed = propriety_check(&mscr(1.0, 3.0), 0.005, 0.05).unwrap();
        assert!(!skewed.proper);
        // The gap peaks over mid-range beliefs.
        let peak = skewed
            .points
            .iter()
            .max_by(|a, b| {
                let ga = (a.optimal_q.value_or_tiebreak() - a.p).abs();
                let gb = (b.optimal_q.value_or_tiebreak() - b.p).abs();
                ga.total_cmp(&gb)
            })
            .unwrap()
            .p;
        assert!((0.4..=0.8).contains(&peak), "gap peak at p = {peak}");
        // Grid argmax still matches the closed form.
        for point in &skewed.points {
            let closed = optimal_confidence_closed(&skewed.spec, point.p)
                .unwrap()
                .value()
                .unwrap();
            assert!((point.optimal_q.value_or_tiebreak() - closed).abs() <= 0.005);
        }

        let flat = propriety_check(&RewardSpec::new(RewardFamily::EmOnly), 0.005, 0.05).unwrap();
        assert!(flat.flat);
        assert!(!flat.proper);
    }

    #[test]
    fn optimal_confidence_serializes_flat_as_string() {
        assert_eq!(
            serde_json::to_string(&OptimalConfidence::Value(0.25)).unwrap(),
            "0.25"
        );
        assert_eq!(
            serde_json::to_string(&OptimalConfidence::Flat).unwrap(),
            "\"flat\""
        );
    }

    #[test]
    fn positive_margin_implies_incorrect_certainty_is_dominated() {
        let specs = [mscr(0.5, 0.5), mscr(1.0, 3.0), wb(1.0 / 3.0)];
        for spec in &specs {
            let margin = reward_margin(spec, 0.01).unwrap();
            assert!(margin > 0.0);
            let best_at_zero = (0..=100)
                .map(|i| expected_reward(spec, 0.0, i as f64 / 100.0).unwrap())
                .fold(f64::NEG_INFINITY, f64::max);
            for i in 1..=20 {
                let p = i as f64 / 20.0;
                let q = optimal_confidence_grid(spec, p, 0.001)
                    .unwrap()
                    .value_or_tiebreak();
                let at_optimum = expected_reward(spec, p, q).unwrap();
                assert!(
                    at_optimum > best_at_zero,
                    "{spec:?}: E({p}) = {at_optimum} vs incorrect-certain {best_at_zero}"
                );
            }
        }
    }

    proptest! {
        // Expected reward is affine in p for fixed q: the midpoint value
        // is collinear with the endpoints.
        #[test]
        fn expected_reward_is_affine_in_p(
            q in 0.0f64..=1.0,
            p in 0.0f64..=1.0,
            lambda in 0.0f64..2.0,
            beta1 in 0.05f64..2.0,
            beta2 in 0.05f64..2.0,
        ) {
            for spec in [wb(lambda), mscr(beta1, beta2)] {
                let at_zero = expected_reward(&spec, 0.0, q).unwrap();
                let at_one = expected_reward(&spec, 1.0, q).unwrap();
                let at_p = expected_reward(&spec, p, q).unwrap();
                prop_assert!((at_p - (at_zero + p * (at_one - at_zero))).abs() < 1e-12);
            }
        }
    }
}
