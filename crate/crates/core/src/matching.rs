//! Encrypted squared-distance evaluation and the caregiver-side decision
//! logic built on the decrypted distances.
//!
//! Distances are sums (not means) of 36 squared coordinate differences of
//! fixed-point encoded column means. After decryption the integer result
//! carries scale `S^2`.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mfcc::{FeatureVector, FEATURE_DIM};
use crate::ringhe::{quantize, Ciphertext, HeContext, HeError};

#[derive(Debug, Error)]
pub enum MatchError {
    #[error("expected {expected} values, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Crypto(#[from] HeError),
    #[error("insufficient labels: {0}")]
    InsufficientLabels(String),
    #[error("{0} is undefined: zero denominator")]
    DegenerateDenominator(&'static str),
    #[error("invalid thresholds: {0}")]
    InvalidThresholds(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub tm: f64,
    pub tw: f64,
}

impl Thresholds {
    pub fn new(tm: f64, tw: f64) -> Result<Self, MatchError> {
        if !(tm.is_finite() && tw.is_finite()) || tm < 0.0 || tm > tw {
            return Err(MatchError::InvalidThresholds(format!(
                "need finite 0 <= tm ({tm}) <= tw ({tw})"
            )));
        }
        Ok(Self { tm, tw })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MatchClass {
    SameWordSameMood,
    SameWordDifferentMood,
    DifferentWord,
}

impl MatchClass {
    pub fn same_word(self) -> bool {
        self != MatchClass::DifferentWord
    }
}

/// `sum_j (eq_j - ev_j)^2` over ciphertexts. No key material involved.
pub fn encrypted_distance(
    ctx: &HeContext,
    eq: &[Ciphertext],
    ev: &[Ciphertext],
) -> Result<Ciphertext, MatchError> {
    for v in [eq, ev] {
        if v.len() != FEATURE_DIM {
            return Err(MatchError::LengthMismatch {
                expected: FEATURE_DIM,
                got: v.len(),
            });
        }
    }
    Ok(ctx.sum_of_squared_differences(eq, ev)?)
}

/// Integer squared distance between the quantized vectors: the plaintext
/// counterpart of [`encrypted_distance`].
pub fn plaintext_distance(
    v: &FeatureVector,
    w: &FeatureVector,
    scale: u64,
) -> Result<u64, MatchError> {
    for x in [v, w] {
        if x.len() != FEATURE_DIM {
            return Err(MatchError::LengthMismatch {
                expected: FEATURE_DIM,
                got: x.len(),
            });
        }
    }
    v.as_slice()
        .iter()
        .zip(w.as_slice())
        .try_fold(0u64, |acc, (&a, &b)| {
            let d = quantize(a, scale)? - quantize(b, scale)?;
            Ok(acc + (d as i128 * d as i128) as u64)
        })
}

/// Decrypted integer distance back to feature units.
pub fn descale(raw: i64, scale: u64) -> f64 {
    raw as f64 / (scale as f64 * scale as f64)
}

/// Left-inclusive three-way decision.
pub fn classify(dis: f64, t: &Thresholds) -> MatchClass {
    if dis <= t.tm {
        MatchClass::SameWordSameMood
    } else if dis <= t.tw {
        MatchClass::SameWordDifferentMood
    } else {
        MatchClass::DifferentWord
    }
}

/// Midpoints between consecutive distinct sorted distances.
fn midpoints(distances: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut d: Vec<f64> = distances.collect();
    d.sort_by(f64::total_cmp);
    d.dedup();
    d.windows(2).map(|w| (w[0] + w[1]) / 2.0).collect()
}

/// Accuracy of "positive iff dis <= t" at every candidate.
fn binary_accuracy(points: &[(f64, bool)], candidates: &[f64]) -> Vec<usize> {
    candidates
        .iter()
        .map(|&t| points.iter().filter(|&&(d, pos)| (d <= t) == pos).count())
        .collect()
}

pub fn three_class_correct(labeled: &[(f64, MatchClass)], t: &Thresholds) -> usize {
    labeled.iter().filter(|(d, c)| classify(*d, t) == *c).count()
}

fn check_labeled(labeled: &[(f64, MatchClass)]) -> Result<(), MatchError> {
    let has = |c: MatchClass| labeled.iter().any(|&(_, k)| k == c);
    if !has(MatchClass::SameWordSameMood) || !has(MatchClass::DifferentWord) {
        return Err(MatchError::InsufficientLabels(
            "need same-word-same-mood and different-word examples".into(),
        ));
    }
    if labeled.iter().any(|(d, _)| !d.is_finite() || *d < 0.0) {
        return Err(MatchError::InvalidThresholds("distances must be finite and >= 0".into()));
    }
    Ok(())
}

/// Fits `T_m` (same word and mood vs rest) and `T_w` (same word vs
/// different word) independently over the midpoint grid. Ties go to the
/// smallest `T_m` and the largest `T_w`. If the two fits cross, both are
/// refit jointly by exhaustive 3-class search.
pub fn learn_thresholds(labeled: &[(f64, MatchClass)]) -> Result<Thresholds, MatchError> {
    check_labeled(labeled)?;
    let grid = midpoints(labeled.iter().map(|p| p.0));
    if grid.is_empty() {
        return Err(MatchError::InsufficientLabels("all distances are equal".into()));
    }

    let m_points: Vec<(f64, bool)> = labeled
        .iter()
        .map(|&(d, c)| (d, c == MatchClass::SameWordSameMood))
        .collect();
    let w_points: Vec<(f64, bool)> = labeled.iter().map(|&(d, c)| (d, c.same_word())).collect();
    let m_acc = binary_accuracy(&m_points, &grid);
    let w_acc = binary_accuracy(&w_points, &grid);
    let m_best = *m_acc.iter().max().expect("non-empty");
    let w_best = *w_acc.iter().max().expect("non-empty");
    let tm = grid[m_acc.iter().position(|&a| a == m_best).expect("max exists")];
    let tw = grid[w_acc.iter().rposition(|&a| a == w_best).expect("max exists")];
    if tm <= tw {
        return Thresholds::new(tm, tw);
    }

    joint_search(labeled, &grid)
}

/// Exhaustive 3-class search over `T_m <= T_w` on the midpoint grid; ties go
/// to the lexicographically smallest pair.
pub fn learn_thresholds_joint(labeled: &[(f64, MatchClass)]) -> Result<Thresholds, MatchError> {
    check_labeled(labeled)?;
    let grid = midpoints(labeled.iter().map(|p| p.0));
    if grid.is_empty() {
        return Err(MatchError::InsufficientLabels("all distances are equal".into()));
    }
    joint_search(labeled, &grid)
}

fn joint_search(labeled: &[(f64, MatchClass)], grid: &[f64]) -> Result<Thresholds, MatchError> {
    // cumulative class counts with distance <= grid[i]
    let mut sorted: Vec<(f64, MatchClass)> = labeled.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut below = vec![[0usize; 3]; grid.len()];
    let mut idx = 0;
    let mut running = [0usize; 3];
    for (i, &t) in grid.iter().enumerate() {
        while idx < sorted.len() && sorted[idx].0 <= t {
            running[sorted[idx].1 as usize] += 1;
            idx += 1;
        }
        below[i] = running;
    }
    let total_dw = labeled
        .iter()
        .filter(|p| p.1 == MatchClass::DifferentWord)
        .count();
    let mut best = (0usize, 0usize, 0usize);
    let mut found = false;
    for i in 0..grid.len() {
        for j in i..grid.len() {
            let correct = below[i][0] + (below[j][1] - below[i][1]) + (total_dw - below[j][2]);
            if !found || correct > best.0 {
                best = (correct, i, j);
                found = true;
            }
        }
    }
    Thresholds::new(grid[best.1], grid[best.2])
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn record(&mut self, actual: bool, predicted: bool) {
        match (actual, predicted) {
            (true, true) => self.tp += 1,
            (false, true) => self.fp += 1,
            (false, false) => self.tn += 1,
            (true, false) => self.fn_ += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn accuracy(&self) -> Result<f64, MatchError> {
        ratio(self.tp + self.tn, self.total(), "accuracy")
    }

    pub fn sensitivity(&self) -> Result<f64, MatchError> {
        ratio(self.tp, self.tp + self.fn_, "sensitivity")
    }

    pub fn specificity(&self) -> Result<f64, MatchError> {
        ratio(self.tn, self.tn + self.fp, "specificity")
    }
}

fn ratio(num: u64, den: u64, what: &'static str) -> Result<f64, MatchError> {
    if den == 0 {
        Err(MatchError::DegenerateDenominator(what))
    } else {
        Ok(num as f64 / den as f64)
    }
}

/// Accuracy, sensitivity and specificity; `None` where undefined.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: Option<f64>,
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
}

pub fn metrics(c: &ConfusionCounts) -> Metrics {
    Metrics {
        accuracy: c.accuracy().ok(),
        sensitivity: c.sensitivity().ok(),
        specificity: c.specificity().ok(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub threshold: f64,
    pub sensitivity: f64,
    pub specificity: f64,
}

/// Sensitivity and specificity of "positive iff dis <= threshold" at
/// -inf, every midpoint of the sorted distinct distances, and +inf.
pub fn threshold_sweep(labeled: &[(f64, bool)]) -> Result<Vec<SweepPoint>, MatchError> {
    let pos = labeled.iter().filter(|p| p.1).count();
    let neg = labeled.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(MatchError::InsufficientLabels(
            "sweep needs positive and negative examples".into(),
        ));
    }
    let mut sorted = labeled.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let thresholds = std::iter::once(f64::NEG_INFINITY)
        .chain(midpoints(labeled.iter().map(|p| p.0)))
        .chain(std::iter::once(f64::INFINITY));
    let (mut tp, mut fp, mut idx) = (0usize, 0usize, 0usize);
    Ok(thresholds
        .map(|t| {
            while idx < sorted.len() && sorted[idx].0 <= t {
                if sorted[idx].1 {
                    tp += 1;
                } else {
                    fp += 1;
                }
                idx += 1;
            }
            SweepPoint {
                threshold: t,
                sensitivity: tp as f64 / pos as f64,
                specificity: (neg - fp) as f64 / neg as f64,
            }
        })
        .collect())
}

fn fmt_float(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".into()
    } else if v == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{v:.6}")
    }
}

pub fn sweep_csv(points: &[SweepPoint]) -> String {
    let mut out = String::from("threshold,sensitivity,specificity\n");
    for p in points {
        let _ = writeln!(
            out,
            "{},{},{}",
            fmt_float(p.threshold),
            fmt_float(p.sensitivity),
            fmt_float(p.specificity)
        );
    }
    out
}

/// `similarity_level,accuracy,sensitivity,specificity`; undefined metrics
/// are written as `NA`.
pub fn metrics_csv(rows: &[(String, Metrics)]) -> String {
    let cell = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |x| format!("{x:.4}"));
    let mut out = String::from("similarity_level,accuracy,sensitivity,specificity\n");
    for (level, m) in rows {
        let _ = writeln!(
            out,
            "{level},{},{},{}",
            cell(m.accuracy),
            cell(m.sensitivity),
            cell(m.specificity)
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ringhe::{encode_fixed, HeParams};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;
    use MatchClass::*;

    fn vector(vals: impl FnMut(usize) -> f64) -> FeatureVector {
        FeatureVector((0..FEATURE_DIM).map(vals).collect())
    }

    fn encrypt_vec(
        ctx: &HeContext,
        pk: &crate::ringhe::PublicKey,
        v: &FeatureVector,
        rng: &mut ChaCha20Rng,
    ) -> Vec<Ciphertext> {
        v.as_slice()
            .iter()
            .map(|&x| ctx.encrypt(pk, &encode_fixed(x, ctx.params()).unwrap(), rng).unwrap())
            .collect()
    }

    #[test]
    fn encrypted_distance_cases() {
        let ctx = HeContext::new(HeParams::recommended(64).unwrap()).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let kp = ctx.keygen(&mut rng);
        let v = vector(|j| j as f64 * 0.7 - 10.0);
        let ev = encrypt_vec(&ctx, &kp.public, &v, &mut rng);

        let zero = encrypted_distance(&ctx, &ev, &ev).unwrap();
        assert_eq!(zero.degree(), 2);
        assert_eq!(ctx.decrypt(&kp.secret, &zero).unwrap().constant(), 0);

        // one coordinate shifted by d = 5 encoded units
        let mut w = v.clone();
        w.0[0] += 5.0 / 16.0;
        let ew = encrypt_vec(&ctx, &kp.public, &w, &mut rng);
        let d = encrypted_distance(&ctx, &ev, &ew).unwrap();
        assert_eq!(ctx.decrypt(&kp.secret, &d).unwrap().constant(), 25);

        for _ in 0..5 {
            let a = vector(|_| rng.random_range(-64.0..64.0));
            let b = vector(|_| rng.random_range(-64.0..64.0));
            let ea = encrypt_vec(&ctx, &kp.public, &a, &mut rng);
            let eb = encrypt_vec(&ctx, &kp.public, &b, &mut rng);
            let got = ctx.decrypt(&kp.secret, &encrypted_distance(&ctx, &ea, &eb).unwrap()).unwrap();
            assert_eq!(got.constant() as u64, plaintext_distance(&a, &b, 16).unwrap());
        }

        // fused evaluation equals the plain sub/square/add fold
        let mut folded = ctx.square(&ctx.sub(&ev[0], &ew[0]).unwrap()).unwrap();
        for (a, b) in ev.iter().zip(&ew).skip(1) {
            folded = ctx.add(&folded, &ctx.square(&ctx.sub(a, b).unwrap()).unwrap()).unwrap();
        }
        assert_eq!(encrypted_distance(&ctx, &ev, &ew).unwrap(), folded);

        assert!(matches!(
            encrypted_distance(&ctx, &ev[..35], &ev),
            Err(MatchError::LengthMismatch { got: 35, .. })
        ));
    }

    #[test]
    fn plaintext_distance_cases() {
        let v = vector(|j| j as f64);
        assert_eq!(plaintext_distance(&v, &v, 16).unwrap(), 0);
        let mut w = v.clone();
        w.0[3] += 1.0;
        assert_eq!(plaintext_distance(&v, &w, 16).unwrap(), 256);
        assert_eq!(plaintext_distance(&w, &v, 16).unwrap(), 256);
        assert!(plaintext_distance(&FeatureVector(vec![1.0]), &v, 16).is_err());
        assert_eq!(descale(256, 16), 1.0);
    }

    #[test]
    fn classify_cases() {
        let t = Thresholds::new(10.0, 20.0).unwrap();
        assert_eq!(classify(0.0, &Thresholds::new(0.0, 0.0).unwrap()), SameWordSameMood);
        assert_eq!(classify(10.0, &t), SameWordSameMood);
        assert_eq!(classify(15.0, &t), SameWordDifferentMood);
        assert_eq!(classify(20.0, &t), SameWordDifferentMood);
        assert_eq!(classify(20.5, &t), DifferentWord);
        assert!(Thresholds::new(5.0, 1.0).is_err());
        assert!(Thresholds::new(-1.0, 1.0).is_err());
        assert!(Thresholds::new(1.0, f64::INFINITY).is_err());
    }

    #[test]
    fn learn_separated_clusters() {
        let data = [
            (1.0, SameWordSameMood),
            (2.0, SameWordSameMood),
            (10.0, SameWordDifferentMood),
            (11.0, SameWordDifferentMood),
            (50.0, DifferentWord),
        ];
        let t = learn_thresholds(&data).unwrap();
        assert_eq!((t.tm, t.tw), (6.0, 30.5));
        assert_eq!(three_class_correct(&data, &t), data.len());
    }

    #[test]
    fn learn_requires_classes() {
        assert!(matches!(
            learn_thresholds(&[(1.0, SameWordSameMood), (2.0, SameWordSameMood)]),
            Err(MatchError::InsufficientLabels(_))
        ));
        assert!(matches!(
            learn_thresholds(&[(1.0, SameWordSameMood), (1.0, DifferentWord)]),
            Err(MatchError::InsufficientLabels(_))
        ));
    }

    #[test]
    fn crossing_fits_fall_back_to_joint_search() {
        // SSM-vs-rest prefers a high cut, same-word-vs-DW a low one.
        let data = [
            (1.0, SameWordDifferentMood),
            (2.0, DifferentWord),
            (3.0, DifferentWord),
            (4.0, SameWordSameMood),
            (5.0, SameWordSameMood),
            (6.0, SameWordSameMood),
            (7.0, DifferentWord),
        ];
        let t = learn_thresholds(&data).unwrap();
        assert!(t.tm <= t.tw);
        let grid = midpoints(data.iter().map(|p| p.0));
        let best = brute_force_three_class(&data, &grid);
        assert_eq!(three_class_correct(&data, &t), best);
    }

    fn brute_force_three_class(data: &[(f64, MatchClass)], grid: &[f64]) -> usize {
        let mut best = 0;
        for &a in grid {
            for &b in grid.iter().filter(|&&b| b >= a) {
                let t = Thresholds { tm: a, tw: b };
                best = best.max(data.iter().filter(|(d, c)| classify(*d, &t) == *c).count());
            }
        }
        best
    }

    #[test]
    fn metric_examples() {
        let same_mood = ConfusionCounts { tp: 3, fn_: 2, ..Default::default() };
        assert!((same_mood.sensitivity().unwrap() - 0.60).abs() < 1e-12);
        let perfect = ConfusionCounts { tp: 4, tn: 6, ..Default::default() };
        assert_eq!(perfect.accuracy().unwrap(), 1.0);
        let noise = ConfusionCounts { tn: 3, fp: 1, ..Default::default() };
        assert!((noise.specificity().unwrap() - 0.75).abs() < 1e-12);
        assert!(matches!(
            noise.sensitivity(),
            Err(MatchError::DegenerateDenominator("sensitivity"))
        ));
        assert_eq!(metrics(&noise).sensitivity, None);
        assert!(ConfusionCounts::default().accuracy().is_err());
    }

    #[test]
    fn sweep_sentinels() {
        let pts = threshold_sweep(&[(1.0, true), (3.0, false), (2.0, true)]).unwrap();
        let first = pts.first().unwrap();
        assert_eq!((first.sensitivity, first.specificity), (0.0, 1.0));
        let last = pts.last().unwrap();
        assert_eq!((last.sensitivity, last.specificity), (1.0, 0.0));
        assert_eq!(pts.len(), 4);
        assert!(threshold_sweep(&[(1.0, true)]).is_err());
        let csv = sweep_csv(&pts);
        assert!(csv.starts_with("threshold,sensitivity,specificity\n-inf,0.000000,1.000000\n"));
        assert!(csv.trim_end().ends_with("inf,1.000000,0.000000"));
    }

    #[test]
    fn metrics_csv_header() {
        let csv = metrics_csv(&[(
            "Same Mood".into(),
            Metrics { accuracy: Some(0.8666), sensitivity: Some(0.6), specificity: None },
        )]);
        assert_eq!(
            csv,
            "similarity_level,accuracy,sensitivity,specificity\nSame Mood,0.8666,0.6000,NA\n"
        );
    }

    fn labeled_points() -> impl Strategy<Value = Vec<(f64, MatchClass)>> {
        prop::collection::vec(
            ((0u32..40).prop_map(|d| d as f64), prop_oneof![
                Just(SameWordSameMood),
                Just(SameWordDifferentMood),
                Just(DifferentWord)
            ]),
            2..30,
        )
    }

    proptest! {
        #[test]
        fn sweep_is_monotone_and_matches_brute_force(
            pts in prop::collection::vec(((0u32..50).prop_map(|d| d as f64 / 2.0), any::<bool>()), 2..40)
        ) {
            prop_assume!(pts.iter().any(|p| p.1) && pts.iter().any(|p| !p.1));
            let sweep = threshold_sweep(&pts).unwrap();
            for w in sweep.windows(2) {
                prop_assert!(w[0].threshold < w[1].threshold);
                prop_assert!(w[0].sensitivity <= w[1].sensitivity);
                prop_assert!(w[0].specificity >= w[1].specificity);
            }
            for s in &sweep {
                let mut c = ConfusionCounts::default();
                for &(d, pos) in &pts {
                    c.record(pos, d <= s.threshold);
                }
                prop_assert_eq!(c.sensitivity().unwrap(), s.sensitivity);
                prop_assert_eq!(c.specificity().unwrap(), s.specificity);
            }
        }

        #[test]
        fn learned_thresholds_ordered_and_binary_optimal(data in labeled_points()) {
            match learn_thresholds(&data) {
                Ok(t) => {
                    prop_assert!(t.tm <= t.tw);
                    let grid = midpoints(data.iter().map(|p| p.0));
                    // whenever the independent fits did not cross, each is binary-optimal
                    let m: Vec<(f64, bool)> = data.iter().map(|&(d, c)| (d, c == SameWordSameMood)).collect();
                    let w: Vec<(f64, bool)> = data.iter().map(|&(d, c)| (d, c.same_word())).collect();
                    let m_best = *binary_accuracy(&m, &grid).iter().max().unwrap();
                    let w_best = *binary_accuracy(&w, &grid).iter().max().unwrap();
                    let m_got = binary_accuracy(&m, &[t.tm])[0];
                    let w_got = binary_accuracy(&w, &[t.tw])[0];
                    if m_got != m_best || w_got != w_best {
                        // joint fallback: must be 3-class optimal
                        prop_assert_eq!(three_class_correct(&data, &t), brute_force_three_class(&data, &grid));
                    }
                }
                Err(MatchError::InsufficientLabels(_)) => {}
                Err(e) => prop_assert!(false, "{e}"),
            }
        }

        #[test]
        fn joint_fit_never_loses_correct_count_on_duplicate(data in labeled_points(), pick in any::<prop::sample::Index>()) {
            let Ok(t) = learn_thresholds_joint(&data) else { return Ok(()); };
            prop_assert_eq!(three_class_correct(&data, &t), brute_force_three_class(&data, &midpoints(data.iter().map(|p| p.0))));
            let before = three_class_correct(&data, &t);
            let mut more = data.clone();
            more.push(data[pick.index(data.len())]);
            let t2 = learn_thresholds_joint(&more).unwrap();
            let after = three_class_correct(&more, &t2);
            prop_assert!(after >= before, "before {before} after {after}");
        }

        #[test]
        fn classes_partition(d in 0.0f64..100.0, a in 0.0f64..50.0, b in 0.0f64..50.0) {
            let t = Thresholds::new(a.min(b), a.max(b)).unwrap();
            let c = classify(d, &t);
            let expected = [d <= t.tm, t.tm < d && d <= t.tw, d > t.tw];
            prop_assert_eq!(expected.iter().filter(|&&x| x).count(), 1);
            prop_assert_eq!(expected[c as usize], true);
        }
    }
}
