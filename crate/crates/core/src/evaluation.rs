//! Pairwise evaluation of labeled records: ground truth, deterministic
//! train/test split, threshold learning and per-level metrics.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::matching::{
    classify, learn_thresholds, metrics, metrics_csv, threshold_sweep, ConfusionCounts,
    MatchClass, MatchError, Metrics, SweepPoint, Thresholds,
};

/// Caregiver-side annotation of one record. Never leaves the caregiver.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Label {
    pub word: String,
    pub mood: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub background: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub notes: Option<String>,
}

pub fn ground_truth(a: &Label, b: &Label) -> MatchClass {
    match (a.word == b.word, a.mood == b.mood) {
        (true, true) => MatchClass::SameWordSameMood,
        (true, false) => MatchClass::SameWordDifferentMood,
        (false, _) => MatchClass::DifferentWord,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairSample {
    pub a: String,
    pub b: String,
    pub distance: f64,
    pub truth: MatchClass,
    /// `None` unless both records carry a background label.
    pub same_background: Option<bool>,
}

impl PairSample {
    pub fn new(a: &str, la: &Label, b: &str, lb: &Label, distance: f64) -> Self {
        let (a, b) = if a <= b { (a, b) } else { (b, a) };
        Self {
            a: a.into(),
            b: b.into(),
            distance,
            truth: ground_truth(la, lb),
            same_background: match (&la.background, &lb.background) {
                (Some(x), Some(y)) => Some(x == y),
                _ => None,
            },
        }
    }

    /// Training membership from the first byte of SHA-256("a\nb") over the
    /// ordered ids, so the split does not depend on corpus order.
    pub fn is_training(&self) -> bool {
        let digest = Sha256::digest(format!("{}\n{}", self.a, self.b));
        digest[0] & 1 == 0
    }
}

pub const LEVEL_SAME_MOOD: &str = "Same Mood";
pub const LEVEL_DIFFERENT_MOOD: &str = "Different Mood";
pub const LEVEL_BACKGROUND: &str = "Different Background Noise";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelReport {
    pub level: String,
    pub counts: ConfusionCounts,
    pub metrics: Metrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub thresholds: Thresholds,
    pub train_pairs: usize,
    pub test_pairs: usize,
    pub levels: Vec<LevelReport>,
    /// Sweep over test pairs, positive = same word and mood.
    pub sweep: Vec<SweepPoint>,
}

impl EvaluationReport {
    pub fn metrics_csv(&self) -> String {
        let rows: Vec<(String, Metrics)> = self
            .levels
            .iter()
            .map(|l| (l.level.clone(), l.metrics))
            .collect();
        metrics_csv(&rows)
    }
}

/// Confusion counts for each similarity level:
/// - same mood: actual same word and mood vs predicted `dis <= T_m`;
/// - different mood: actual same word, other mood vs predicted
///   `T_m < dis <= T_w`;
/// - background: actual same background vs predicted `dis <= T_m`, over
///   pairs where both records carry a background label.
pub fn level_counts(pairs: &[PairSample], t: &Thresholds) -> Vec<(String, ConfusionCounts)> {
    let mut same = ConfusionCounts::default();
    let mut diff = ConfusionCounts::default();
    let mut bg = ConfusionCounts::default();
    for p in pairs {
        let predicted = classify(p.distance, t);
        same.record(
            p.truth == MatchClass::SameWordSameMood,
            predicted == MatchClass::SameWordSameMood,
        );
        diff.record(
            p.truth == MatchClass::SameWordDifferentMood,
            predicted == MatchClass::SameWordDifferentMood,
        );
        if let Some(actual) = p.same_background {
            bg.record(actual, p.distance <= t.tm);
        }
    }
    vec![
        (LEVEL_SAME_MOOD.into(), same),
        (LEVEL_DIFFERENT_MOOD.into(), diff),
        (LEVEL_BACKGROUND.into(), bg),
    ]
}

fn labeled(pairs: &[&PairSample]) -> Vec<(f64, MatchClass)> {
    pairs.iter().map(|p| (p.distance, p.truth)).collect()
}

/// Learns thresholds on the training pairs (unless given) and reports
/// metrics on the test pairs.
pub fn evaluate_pairs(
    pairs: &[PairSample],
    thresholds: Option<Thresholds>,
) -> Result<EvaluationReport, MatchError> {
    let (train, test): (Vec<&PairSample>, Vec<&PairSample>) =
        pairs.iter().partition(|p| p.is_training());
    let thresholds = match thresholds {
        Some(t) => t,
        None => learn_thresholds(&labeled(&train))?,
    };
    if test.is_empty() {
        return Err(MatchError::InsufficientLabels("test split is empty".into()));
    }
    let test_owned: Vec<PairSample> = test.iter().map(|p| (*p).clone()).collect();
    let levels = level_counts(&test_owned, &thresholds)
        .into_iter()
        .map(|(level, counts)| LevelReport {
            level,
            counts,
            metrics: metrics(&counts),
        })
        .collect();
    let sweep_points: Vec<(f64, bool)> = test
        .iter()
        .map(|p| (p.distance, p.truth == MatchClass::SameWordSameMood))
        .collect();
    let sweep = threshold_sweep(&sweep_points).unwrap_or_default();
    Ok(EvaluationReport {
        thresholds,
        train_pairs: train.len(),
        test_pairs: test.len(),
        levels,
        sweep,
    })
}

/// All unordered pairs of labeled records with a known distance.
pub fn build_pairs(
    labels: &BTreeMap<String, Label>,
    distance: impl Fn(&str, &str) -> Option<f64>,
) -> Vec<PairSample> {
    let ids: Vec<&String> = labels.keys().collect();
    let mut out = Vec::new();
    for (i, a) in ids.iter().enumerate() {
        for b in &ids[i + 1..] {
            if let Some(d) = distance(a, b) {
                out.push(PairSample::new(a, &labels[*a], b, &labels[*b], d));
            }
        }
    }
    out
}
