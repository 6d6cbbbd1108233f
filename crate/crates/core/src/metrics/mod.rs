//! Calibration metrics over prediction records.
//!
//! Every metric is a pure, order-invariant aggregation of
//! [`PredictionRecord`] values: accuracy, equal-width-bin ECE, Brier
//! score, rank-based AUROC (ties half-credited), and MCIP (mean
//! confidence on incorrect predictions). AUROC and MCIP are undefined on
//! degenerate inputs and report that explicitly rather than through a
//! sentinel. The module also provides temperature scaling of verbalized
//! confidences, wrong-set intersection across configurations, and paired
//! t-tests.

pub mod student;

use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::io::BufRead;
use thiserror::Error;

/// Default bin count for ECE.
pub const DEFAULT_BINS: usize = 10;

/// Logit-space clamp for temperature scaling.
pub const TEMPERATURE_CLAMP: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("no prediction records")]
    EmptyRecords,
    #[error("bin count must be positive")]
    BadBinCount,
    #[error("temperature must be a positive finite real, got {0}")]
    BadTemperature(f64),
    #[error("confidence {value} outside [0, 1] (record {id:?})")]
    ConfidenceOutOfRange { id: String, value: f64 },
    #[error("paired samples differ in length: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("paired t-test needs at least 2 pairs, got {0}")]
    TooFewPairs(usize),
    #[error("need at least 2 runs to intersect, got {0}")]
    NeedTwoRuns(usize),
    #[error("duplicate record id {id:?} in run {config:?}")]
    DuplicateRecordId { config: String, id: String },
    #[error("runs cover different id universes; symmetric difference: {0:?}")]
    IdUniverseMismatch(Vec<String>),
    #[error("i/o error reading predictions: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: invalid prediction record: {source}")]
    Json {
        line: usize,
        source: serde_json::Error,
    },
}

/// One prediction: the atom every calibration metric is built from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub id: String,
    pub confidence: f64,
    pub correct: bool,
    #[serde(
        rename = "config",
        default,
        skip_serializing_if = "Option::is_none"
    )]
    pub config_label: Option<String>,
}

/// Per-bin reliability statistics. Empty bins carry no mean confidence
/// or accuracy and contribute nothing to the ECE sum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinStat {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
    pub mean_confidence: Option<f64>,
    pub empirical_accuracy: Option<f64>,
}

/// Aggregate calibration report for one evaluation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub n: usize,
    pub accuracy: f64,
    pub ece: f64,
    pub brier: f64,
    pub auroc: Option<f64>,
    pub mcip: Option<f64>,
    pub bins: Vec<BinStat>,
}

/// Paired t-test outcome. `degenerate` flags the zero-variance,
/// nonzero-mean case where the statistic diverges and `p = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TTestResult {
    pub t_statistic: f64,
    pub degrees_of_freedom: usize,
    pub p_value: f64,
    pub degenerate: bool,
}

fn check_nonempty(records: &[PredictionRecord]) -> Result<(), MetricsError> {
    if records.is_empty() {
        Err(MetricsError::EmptyRecords)
    } else {
        Ok(())
    }
}

fn check_confidences(records: &[PredictionRecord]) -> Result<(), MetricsError> {
    for r in records {
        if !(0.0..=1.0).contains(&r.confidence) {
            return Err(MetricsError::ConfidenceOutOfRange {
                id: r.id.clone(),
                value: r.confidence,
            });
        }
    }
    Ok(())
}

/// Fraction of correct records.
pub fn accuracy(records: &[PredictionRecord]) -> Result<f64, MetricsError> {
    check_nonempty(records)?;
    let correct = records.iter().filter(|r| r.correct).count();
    Ok(correct as f64 / records.len() as f64)
}

/// Expected calibration error over `n_bins` equal-width bins, plus the
/// bin table. Confidence `c` lands in bin `floor(c * n_bins)` with 1.0
/// assigned to the top bin; empty bins are skipped.
pub fn ece(
    records: &[PredictionRecord],
    n_bins: usize,
) -> Result<(f64, Vec<BinStat>), MetricsError> {
    check_nonempty(records)?;
    check_confidences(records)?;
    if n_bins == 0 {
        return Err(MetricsError::BadBinCount);
    }
    let mut counts = vec![0usize; n_bins];
    let mut conf_sums = vec![0.0f64; n_bins];
    let mut correct_counts = vec![0usize; n_bins];
    for r in records {
        let idx = ((r.confidence * n_bins as f64) as usize).min(n_bins - 1);
        counts[idx] += 1;
        conf_sums[idx] += r.confidence;
        correct_counts[idx] += usize::from(r.correct);
    }
    let n = records.len() as f64;
    let mut total = 0.0;
    let mut bins = Vec::with_capacity(n_bins);
    for i in 0..n_bins {
        let (mean_confidence, empirical_accuracy) = if counts[i] > 0 {
            let mean_conf = conf_sums[i] / counts[i] as f64;
            let acc = correct_counts[i] as f64 / counts[i] as f64;
            total += counts[i] as f64 / n * (acc - mean_conf).abs();
            (Some(mean_conf), Some(acc))
        } else {
            (None, None)
        };
        bins.push(BinStat {
            lower: i as f64 / n_bins as f64,
            upper: (i + 1) as f64 / n_bins as f64,
            count: counts[i],
            mean_confidence,
            empirical_accuracy,
        });
    }
    Ok((total, bins))
}

/// Mean squared difference between confidence and the correctness
/// indicator.
pub fn brier(records: &[PredictionRecord]) -> Result<f64, MetricsError> {
    check_nonempty(records)?;
    check_confidences(records)?;
    let sum: f64 = records
        .iter()
        .map(|r| {
            let outcome = if r.correct { 1.0 } else { 0.0 };
            (r.confidence - outcome).powi(2)
        })
        .sum();
    Ok(sum / records.len() as f64)
}

/// Probability that a uniformly random correct record carries higher
/// confidence than a uniformly random incorrect one, ties counted half
/// (the Mann-Whitney convention). `None` whenever either class is empty.
pub fn auroc(records: &[PredictionRecord]) -> Option<f64> {
    let n_pos = records.iter().filter(|r| r.correct).count();
    let n_neg = records.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    // Midranks over the pooled sample: tied confidences share the average
    // of the rank range they occupy.
    let mut order: Vec<usize> = (0..records.len()).collect();
    order.sort_by(|&a, &b| records[a].confidence.total_cmp(&records[b].confidence));
    let mut rank_sum_pos = 0.0f64;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len()
            && records[order[j]].confidence == records[order[i]].confidence
        {
            j += 1;
        }
        // ranks i+1 ..= j averaged
        let midrank = (i + 1 + j) as f64 / 2.0;
        for &k in &order[i..j] {
            if records[k].correct {
                rank_sum_pos += midrank;
            }
        }
        i = j;
    }
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Some(u / (n_pos as f64 * n_neg as f64))
}

/// Mean confidence on incorrect predictions; `None` when every record is
/// correct.
pub fn mcip(records: &[PredictionRecord]) -> Option<f64> {
    let wrong: Vec<f64> = records
        .iter()
        .filter(|r| !r.correct)
        .map(|r| r.confidence)
        .collect();
    if wrong.is_empty() {
        None
    } else {
        Some(wrong.iter().sum::<f64>() / wrong.len() as f64)
    }
}

/// Ids answered incorrectly in every run. All runs must cover the same
/// id universe; a mismatch is an error carrying the symmetric difference.
pub fn intersect_wrong(
    runs: &BTreeMap<String, Vec<PredictionRecord>>,
) -> Result<BTreeSet<String>, MetricsError> {
    if runs.len() < 2 {
        return Err(MetricsError::NeedTwoRuns(runs.len()));
    }
    let mut universes: Vec<(&String, BTreeSet<&str>)> = Vec::new();
    for (config, records) in runs {
        let mut ids = BTreeSet::new();
        for r in records {
            if !ids.insert(r.id.as_str()) {
                return Err(MetricsError::DuplicateRecordId {
                    config: config.clone(),
                    id: r.id.clone(),
                });
            }
        }
        universes.push((config, ids));
    }
    let reference = &universes[0].1;
    let mut mismatch: BTreeSet<String> = BTreeSet::new();
    for (_, ids) in &universes[1..] {
        for d in reference.symmetric_difference(ids) {
            mismatch.insert((*d).to_string());
        }
    }
    if !mismatch.is_empty() {
        return Err(MetricsError::IdUniverseMismatch(
            mismatch.into_iter().collect(),
        ));
    }
    let mut wrong_everywhere: BTreeSet<String> =
        reference.iter().map(|s| s.to_string()).collect();
    for records in runs.values() {
        let wrong: BTreeSet<&str> = records
            .iter()
            .filter(|r| !r.correct)
            .map(|r| r.id.as_str())
            .collect();
        wrong_everywhere.retain(|id| wrong.contains(id.as_str()));
    }
    Ok(wrong_everywhere)
}

/// Paired sign-test outcome over a set of differences.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignTest {
    pub positive: usize,
    pub negative: usize,
    pub ties: usize,
    pub p_value: f64,
}

/// Two-sided exact sign test: ties are dropped, and the p-value is the
/// binomial probability of a split at least as lopsided as observed
/// under a fair coin.
pub fn sign_test(differences: &[f64]) -> SignTest {
    let positive = differences.iter().filter(|d| **d > 0.0).count();
    let negative = differences.iter().filter(|d| **d < 0.0).count();
    let ties = differences.len() - positive - negative;
    let n = positive + negative;
    let p_value = if n == 0 {
        1.0
    } else {
        let k = positive.max(negative);
        let mut tail = 0.0f64;
        for j in k..=n {
            tail += binomial_coefficient(n, j);
        }
        (2.0 * tail / 2.0f64.powi(n as i32)).min(1.0)
    };
    SignTest {
        positive,
        negative,
        ties,
        p_value,
    }
}

fn binomial_coefficient(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    let mut value = 1.0f64;
    for i in 0..k {
        value = value * (n - i) as f64 / (i + 1) as f64;
    }
    value
}

/// Paired t-test on samples aligned by position: `d = a - b`,
/// `t = mean(d) / (sd(d) / sqrt(n))` with sample standard deviation,
/// `df = n - 1`, two-sided p-value.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<TTestResult, MetricsError> {
    if a.len() != b.len() {
        return Err(MetricsError::LengthMismatch(a.len(), b.len()));
    }
    if a.len() < 2 {
        return Err(MetricsError::TooFewPairs(a.len()));
    }
    let n = a.len() as f64;
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = diffs.iter().sum::<f64>() / n;
    let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let df = a.len() - 1;
    if var == 0.0 {
        return Ok(if mean == 0.0 {
            TTestResult {
                t_statistic: 0.0,
                degrees_of_freedom: df,
                p_value: 1.0,
                degenerate: false,
            }
        } else {
            TTestResult {
                t_statistic: if mean > 0.0 {
                    f64::INFINITY
                } else {
                    f64::NEG_INFINITY
                },
                degrees_of_freedom: df,
                p_value: 0.0,
                degenerate: true,
            }
        });
    }
    let t = mean / (var.sqrt() / n.sqrt());
    Ok(TTestResult {
        t_statistic: t,
        degrees_of_freedom: df,
        p_value: student::two_sided_p(t, df),
        degenerate: false,
    })
}

/// Temperature scaling of a verbalized confidence: clamp to
/// `[eps, 1 - eps]`, divide the logit by `T`, map back through the
/// sigmoid. `T = 1` is the identity on the clamped value.
pub fn temperature_scale(q: f64, temperature: f64) -> Result<f64, MetricsError> {
    if !(temperature > 0.0 && temperature.is_finite()) {
        return Err(MetricsError::BadTemperature(temperature));
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(MetricsError::ConfidenceOutOfRange {
            id: String::new(),
            value: q,
        });
    }
    let clamped = q.clamp(TEMPERATURE_CLAMP, 1.0 - TEMPERATURE_CLAMP);
    if temperature == 1.0 {
        return Ok(clamped);
    }
    let logit = (clamped / (1.0 - clamped)).ln();
    Ok(1.0 / (1.0 + (-logit / temperature).exp()))
}

/// Aggregate every metric into one report.
pub fn build_report(
    records: &[PredictionRecord],
    n_bins: usize,
) -> Result<CalibrationReport, MetricsError> {
    check_nonempty(records)?;
    let (ece_value, bins) = ece(records, n_bins)?;
    Ok(CalibrationReport {
        n: records.len(),
        accuracy: accuracy(records)?,
        ece: ece_value,
        brier: brier(records)?,
        auroc: auroc(records),
        mcip: mcip(records),
        bins,
    })
}

/// Read a predictions JSON-lines stream. Blank lines are skipped;
/// confidences must lie in `[0, 1]`.
pub fn read_predictions<R: BufRead>(
    reader: R,
) -> Result<Vec<PredictionRecord>, MetricsError> {
    let mut records = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: PredictionRecord =
            serde_json::from_str(&line).map_err(|source| MetricsError::Json {
                line: idx + 1,
                source,
            })?;
        if !(0.0..=1.0).contains(&record.confidence) || !record.confidence.is_finite() {
            return Err(MetricsError::ConfidenceOutOfRange {
                id: record.id,
                value: record.confidence,
            });
        }
        records.push(record);
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rec(id: &str, confidence: f64, correct: bool) -> PredictionRecord {
        PredictionRecord {
            id: id.to_string(),
            confidence,
            correct,
            config_label: None,
        }
    }

    fn recs(items: &[(f64, bool)]) -> Vec<PredictionRecord> {
        items
            .iter()
            .enumerate()
            .map(|(i, &(c, ok))| rec(&format!("q{i}"), c, ok))
            .collect()
    }

    /// All-pairs AUROC with half credit for ties; the independent oracle
    /// the rank implementation must agree with.
    fn auroc_brute_force(records: &[PredictionRecord]) -> Option<f64> {
        let pos: Vec<f64> = records
            .iter()
            .filter(|r| r.correct)
            .map(|r| r.confidence)
            .collect();
        let neg: Vec<f64> = records
            .iter()
            .filter(|r| !r.correct)
            .map(|r| r.confidence)
            .collect();
        if pos.is_empty() || neg.is_empty() {
            return None;
        }
        let mut score = 0.0;
        for &p in &pos {
            for &q in &neg {
                if p > q {
                    score += 1.0;
                } else if p == q {
                    score += 0.5;
                }
            }
        }
        Some(score / (pos.len() * neg.len()) as f64)
    }

    #[test]
    fn ece_worked_examples() {
        let all_confident = recs(&[(1.0, true), (1.0, true), (1.0, true)]);
        assert_eq!(ece(&all_confident, 10).unwrap().0, 0.0);

        let half_right: Vec<_> = (0..10).map(|i| rec(&format!("{i}"), 1.0, i < 5)).collect();
        assert_eq!(ece(&half_right, 10).unwrap().0, 0.5);

        let mut mixed = Vec::new();
        for i in 0..4 {
            mixed.push(rec(&format!("a{i}"), 0.75, i < 3));
        }
        for i in 0..6 {
            mixed.push(rec(&format!("b{i}"), 0.55, i < 3));
        }
        let (value, bins) = ece(&mixed, 10).unwrap();
        assert!((value - 0.03).abs() < 1e-12, "ece = {value}");
        assert_eq!(bins.len(), 10);
        assert_eq!(bins[7].count, 4);
        assert_eq!(bins[5].count, 6);
        assert_eq!(bins[0].count, 0);
        assert_eq!(bins[0].mean_confidence, None);
    }

    #[test]
    fn top_bin_is_closed() {
        let records = recs(&[(1.0, true)]);
        let (_, bins) = ece(&records, 10).unwrap();
        assert_eq!(bins[9].count, 1);
    }

    #[test]
    fn brier_worked_examples() {
        assert_eq!(brier(&recs(&[(1.0, true), (1.0, true)])).unwrap(), 0.0);
        assert_eq!(brier(&recs(&[(1.0, false), (1.0, false)])).unwrap(), 1.0);
        let b = brier(&recs(&[(0.8, true), (0.6, false)])).unwrap();
        assert!((b - 0.2).abs() < 1e-12);
    }

    #[test]
    fn auroc_worked_examples() {
        let separated = recs(&[(0.9, true), (0.8, true), (0.3, false), (0.1, false)]);
        assert_eq!(auroc(&separated), Some(1.0));

        let all_tied = recs(&[(0.5, true), (0.5, false), (0.5, true), (0.5, false)]);
        assert_eq!(auroc(&all_tied), Some(0.5));

        let split = recs(&[(0.9, true), (0.4, true), (0.6, false)]);
        assert_eq!(auroc(&split), Some(0.5));

        assert_eq!(auroc(&recs(&[(0.9, true)])), None);
        assert_eq!(auroc(&recs(&[(0.9, false)])), None);
    }

    #[test]
    fn mcip_worked_examples() {
        let records = recs(&[(0.8, false), (1.0, false), (0.2, true)]);
        assert!((mcip(&records).unwrap() - 0.9).abs() < 1e-12);
        assert_eq!(mcip(&recs(&[(0.9, true)])), None);
        let four = recs(&[(1.0, false), (1.0, false), (0.7, false), (0.9, false)]);
        assert!((mcip(&four).unwrap() - 0.9).abs() < 1e-12);
    }

    #[test]
    fn intersect_wrong_worked_examples() {
        let mk_run = |wrong: &[&str]| -> Vec<PredictionRecord> {
            ["1", "2", "3", "4"]
                .iter()
                .map(|id| rec(id, 0.5, !wrong.contains(id)))
                .collect()
        };
        let mut runs = BTreeMap::new();
        runs.insert("a".to_string(), mk_run(&["1", "2", "3"]));
        runs.insert("b".to_string(), mk_run(&["2", "3", "4"]));
        let inter = intersect_wrong(&runs).unwrap();
        assert_eq!(
            inter.into_iter().collect::<Vec<_>>(),
            vec!["2".to_string(), "3".to_string()]
        );

        let mut disjoint = BTreeMap::new();
        disjoint.insert("a".to_string(), mk_run(&["1"]));
        disjoint.insert("b".to_string(), mk_run(&["2"]));
        assert!(intersect_wrong(&disjoint).unwrap().is_empty());

        let mut mismatched = BTreeMap::new();
        mismatched.insert("a".to_string(), mk_run(&["1"]));
        mismatched.insert(
            "b".to_string(),
            vec![rec("1", 0.5, true), rec("9", 0.5, false)],
        );
        match intersect_wrong(&mismatched) {
            Err(MetricsError::IdUniverseMismatch(diff)) => {
                assert!(diff.contains(&"9".to_string()));
            }
            other => panic!("expected id mismatch, got {other:?}"),
        }

        let mut single = BTreeMap::new();
        single.insert("a".to_string(), mk_run(&[]));
        assert!(matches!(
            intersect_wrong(&single),
            Err(MetricsError::NeedTwoRuns(1))
        ));
    }

    #[test]
    fn paired_t_worked_examples() {
        let identical = paired_t_test(&[0.4, 0.5, 0.6], &[0.4, 0.5, 0.6]).unwrap();
        assert_eq!(identical.t_statistic, 0.0);
        assert!((identical.p_value - 1.0).abs() < 1e-9);
        assert!(!identical.degenerate);

        let worked = paired_t_test(&[0.9, 0.8, 0.95], &[0.6, 0.5, 0.7]).unwrap();
        assert!(
            (worked.t_statistic - 17.0).abs() < 0.01,
            "t = {}",
            worked.t_statistic
        );
        assert_eq!(worked.degrees_of_freedom, 2);
        assert!((worked.p_value - 0.0034423510070664185).abs() < 1e-6);

        let zero_mean = paired_t_test(&[0.1, -0.1], &[0.0, 0.0]).unwrap();
        assert_eq!(zero_mean.t_statistic, 0.0);
        assert!((zero_mean.p_value - 1.0).abs() < 1e-9);

        let degenerate = paired_t_test(&[1.0, 2.0], &[0.5, 1.5]).unwrap();
        assert!(degenerate.degenerate);
        assert_eq!(degenerate.p_value, 0.0);
        assert!(degenerate.t_statistic.is_infinite());

        assert!(matches!(
            paired_t_test(&[1.0], &[1.0]),
            Err(MetricsError::TooFewPairs(1))
        ));
        assert!(matches!(
            paired_t_test(&[1.0, 2.0], &[1.0]),
            Err(MetricsError::LengthMismatch(2, 1))
        ));
    }

    #[test]
    fn sign_test_examples() {
        let all_ties = sign_test(&[0.0, 0.0, 0.0]);
        assert_eq!(all_ties.ties, 3);
        assert_eq!(all_ties.p_value, 1.0);

        let nine_of_ten = sign_test(&[1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, -1.0]);
        assert_eq!(nine_of_ten.positive, 9);
        assert!((nine_of_ten.p_value - 22.0 / 1024.0).abs() < 1e-12);

        let eight_of_ten = sign_test(&[1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, -1.0, -1.0]);
        assert!((eight_of_ten.p_value - 2.0 * 56.0 / 1024.0).abs() < 1e-12);
        assert!(eight_of_ten.p_value > 0.05);

        let even = sign_test(&[1.0, -1.0, 1.0, -1.0]);
        assert_eq!(even.p_value, 1.0);
    }

    #[test]
    fn temperature_scale_worked_examples() {
        assert_eq!(temperature_scale(0.5, 4.2).unwrap(), 0.5);
        assert_eq!(temperature_scale(0.37, 1.0).unwrap(), 0.37);
        let scaled = temperature_scale(0.9, 1.5).unwrap();
        assert!(
            (scaled - 0.81226822321286693).abs() < 1e-12,
            "scaled = {scaled}"
        );
        assert!(matches!(
            temperature_scale(0.5, 0.0),
            Err(MetricsError::BadTemperature(_))
        ));
        assert!(matches!(
            temperature_scale(1.5, 1.0),
            Err(MetricsError::ConfidenceOutOfRange { .. })
        ));
    }

    #[test]
    fn build_report_worked_examples() {
        let all_correct = recs(&[(1.0, true), (1.0, true)]);
        let report = build_report(&all_correct, 10).unwrap();
        assert_eq!(report.accuracy, 1.0);
        assert_eq!(report.ece, 0.0);
        assert_eq!(report.brier, 0.0);
        assert_eq!(report.auroc, None);
        assert_eq!(report.mcip, None);

        assert!(matches!(
            build_report(&[], 10),
            Err(MetricsError::EmptyRecords)
        ));
    }

    #[test]
    fn report_serializes_undefined_as_null() {
        let report = build_report(&recs(&[(1.0, true)]), 2).unwrap();
        let json = serde_json::to_value(&report).unwrap();
        assert!(json["auroc"].is_null());
        assert!(json["mcip"].is_null());
    }

    #[test]
    fn predictions_round_trip() {
        let jsonl = concat!(
            r#"{"id":"a","confidence":0.8,"correct":true}"#,
            "\n",
            r#"{"id":"b","confidence":0.2,"correct":false,"config":"run1"}"#,
            "\n",
        );
        let records = read_predictions(jsonl.as_bytes()).unwrap();
        assert_eq!(records.len(), 2);
        assert_eq!(records[1].config_label.as_deref(), Some("run1"));
        let line = serde_json::to_string(&records[0]).unwrap();
        assert_eq!(line, r#"{"id":"a","confidence":0.8,"correct":true}"#);

        let bad = r#"{"id":"a","confidence":1.8,"correct":true}"#.to_string();
        assert!(matches!(
            read_predictions(bad.as_bytes()),
            Err(MetricsError::ConfidenceOutOfRange { .. })
        ));
    }

    fn record_vec_strategy(max_len: usize) -> impl Strategy<Value = Vec<PredictionRecord>> {
        proptest::collection::vec((0u8..=100, any::<bool>()), 1..max_len).prop_map(|items| {
            items
                .into_iter()
                .enumerate()
                .map(|(i, (grid, correct))| PredictionRecord {
                    id: format!("p{i}"),
                    confidence: f64::from(grid) / 100.0,
                    correct,
                    config_label: None,
                })
                .collect()
        })
    }

    proptest! {
        #[test]
        fn metrics_are_permutation_invariant(
            records in record_vec_strategy(40),
            seed in any::<u64>(),
        ) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let mut shuffled = records.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let a = build_report(&records, 10).unwrap();
            let b = build_report(&shuffled, 10).unwrap();
            prop_assert_eq!(a.accuracy, b.accuracy);
            prop_assert!((a.ece - b.ece).abs() < 1e-12);
            prop_assert!((a.brier - b.brier).abs() < 1e-12);
            prop_assert_eq!(a.auroc.is_some(), b.auroc.is_some());
            if let (Some(x), Some(y)) = (a.auroc, b.auroc) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }

        #[test]
        fn ece_stays_in_unit_interval(records in record_vec_strategy(60)) {
            let (value, _) = ece(&records, 10).unwrap();
            prop_assert!((0.0..=1.0).contains(&value));
        }

        #[test]
        fn brier_partition_decomposes(records in record_vec_strategy(60), split in 1usize..59) {
            prop_assume!(split < records.len());
            let whole = brier(&records).unwrap();
            let (left, right) = records.split_at(split);
            let nl = left.len() as f64;
            let nr = right.len() as f64;
            let merged = (brier(left).unwrap() * nl + brier(right).unwrap() * nr) / (nl + nr);
            prop_assert!((whole - merged).abs() < 1e-12);
        }

        #[test]
        fn auroc_matches_brute_force(records in record_vec_strategy(50)) {
            let fast = auroc(&records);
            let slow = auroc_brute_force(&records);
            prop_assert_eq!(fast.is_some(), slow.is_some());
            if let (Some(a), Some(b)) = (fast, slow) {
                prop_assert!((a - b).abs() < 1e-12, "rank {} vs pairs {}", a, b);
            }
        }

        #[test]
        fn auroc_invariant_under_temperature(
            records in record_vec_strategy(40),
            temp in 0.2f64..5.0,
        ) {
            let before = auroc(&records);
            let scaled: Vec<PredictionRecord> = records
                .iter()
                .map(|r| PredictionRecord {
                    confidence: temperature_scale(r.confidence, temp).unwrap(),
                    ..r.clone()
                })
                .collect();
            let after = auroc(&scaled);
            prop_assert_eq!(before.is_some(), after.is_some());
            if let (Some(a), Some(b)) = (before, after) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn temperature_scale_is_strictly_increasing(
            q1 in 0.0f64..=1.0,
            q2 in 0.0f64..=1.0,
            temp in 0.1f64..10.0,
        ) {
            let lo = q1.min(q2);
            let hi = q1.max(q2);
            // Strict once both points are inside the clamp region.
            prop_assume!(hi - lo > 1e-5);
            let a = temperature_scale(lo, temp).unwrap();
            let b = temperature_scale(hi, temp).unwrap();
            prop_assert!(a < b);
            prop_assert_eq!(temperature_scale(0.5, temp).unwrap(), 0.5);
        }

        #[test]
        fn temperature_flattens_toward_half(q in 0.0f64..=1.0) {
            let mut prev_gap = (temperature_scale(q, 1.0).unwrap() - 0.5).abs();
            for temp in [2.0, 4.0, 8.0, 16.0, 64.0] {
                let gap = (temperature_scale(q, temp).unwrap() - 0.5).abs();
                prop_assert!(gap <= prev_gap + 1e-15);
                prev_gap = gap;
            }
        }

        #[test]
        fn mcip_bounded_by_wrong_confidences(records in record_vec_strategy(40)) {
            if let Some(value) = mcip(&records) {
                let wrong: Vec<f64> = records
                    .iter()
                    .filter(|r| !r.correct)
                    .map(|r| r.confidence)
                    .collect();
                let min = wrong.iter().cloned().fold(f64::INFINITY, f64::min);
                let max = wrong.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                prop_assert!(value >= min - 1e-12 && value <= max + 1e-12);
            }
        }
    }
}
