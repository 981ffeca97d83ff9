//! ROC/AUC evaluation, rule-classifier threshold sweeps, and
//! participant-grouped cross-validation.
//!
//! AUC is computed from exact pair counts (the Mann-Whitney statistic) in
//! integer arithmetic, so equal scores are handled by the half-credit
//! convention with no floating-point drift: for wake-positive labels,
//! `auc = P(score_wake > score_sleep) + P(tie)/2` over all wake/sleep
//! pairs. The reported curve lists one operating point per distinct score
//! value, which makes the trapezoidal area under it equal that statistic.
//!
//! Rule-based classifiers have no continuous score to sweep, so their
//! curve comes from sweeping the probability threshold that binarizes the
//! input to the rules, rescoring at each threshold, and pooling the
//! resulting confusion counts.
//!
//! Cross-validation splits by participant, never by night or epoch:
//! epochs within a night are heavily autocorrelated, and letting one
//! night straddle folds would leak that structure into held-out scores.

use std::collections::BTreeMap;
use std::io;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::data::EpochSeries;
use crate::error::{Error, Result};
use crate::features::ScoreSequence;
use crate::num::{real, Scalar};
use crate::webster::{apply_webster, RuleParams};

/// One operating point on a ROC curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint<S> {
    pub fpr: S,
    pub tpr: S,
    /// Score cutoff that produces this point; infinite at the synthetic
    /// all-negative / all-positive endpoints.
    pub threshold: S,
}

/// An ordered ROC curve with its area.
///
/// Points run from (0, 0) to (1, 1). Curves from [`roc`] have
/// nondecreasing `fpr` and `tpr`; curves from [`roc_webster`] are sorted
/// by `fpr` but may wobble in `tpr`, because rescoring at a higher
/// threshold is not a superset of rescoring at a lower one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve<S> {
    pub points: Vec<RocPoint<S>>,
    pub auc: S,
}

impl<S: Scalar> RocCurve<S> {
    /// Writes `method,threshold,fpr,tpr` rows for external plotting.
    pub fn write_csv<W: io::Write>(&self, writer: W, method: &str) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["method", "threshold", "fpr", "tpr"])?;
        for p in &self.points {
            w.write_record([
                method.to_string(),
                format!("{}", p.threshold),
                format!("{}", p.fpr),
                format!("{}", p.tpr),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Checks one night's labels and returns its (wake, sleep) counts.
fn count_classes<S: Scalar>(labels: &[S]) -> Result<(u64, u64)> {
    let mut positives = 0u64;
    let mut negatives = 0u64;
    for (i, &y) in labels.iter().enumerate() {
        if y == S::one() {
            positives += 1;
        } else if y == S::zero() {
            negatives += 1;
        } else {
            return Err(Error::NonBinaryScore { index: i, value: y.to_f64().unwrap_or(f64::NAN) });
        }
    }
    Ok((positives, negatives))
}

/// Exact ROC curve of real-valued scores against binary labels (1 = the
/// positive class).
///
/// Every distinct score value contributes one operating point for the
/// classifier `score >= value`; tied scores move together. The area is
/// the exact Mann-Whitney statistic computed by integer pair counting,
/// which the trapezoidal area under the returned points equals.
pub fn roc<S: Scalar>(scores: &[S], labels: &[S]) -> Result<RocCurve<S>> {
    if scores.is_empty() {
        return Err(Error::EmptySequence);
    }
    if scores.len() != labels.len() {
        return Err(Error::LengthMismatch { left: scores.len(), right: labels.len() });
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFiniteInput { context: "roc scores" });
    }
    let (total_pos, total_neg) = count_classes(labels)?;
    if total_pos == 0 || total_neg == 0 {
        return Err(Error::SingleClassLabels);
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_unstable_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap());

    let mut points = Vec::new();
    points.push(RocPoint { fpr: S::zero(), tpr: S::zero(), threshold: S::infinity() });
    let mut tp = 0u64;
    let mut fp = 0u64;
    // Twice the Mann-Whitney count, so ties stay integral.
    let mut numer: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let threshold = scores[order[i]];
        let mut group_pos = 0u64;
        let mut group_neg = 0u64;
        let mut j = i;
        while j < order.len() && scores[order[j]] == threshold {
            if labels[order[j]] == S::one() {
                group_pos += 1;
            } else {
                group_neg += 1;
            }
            j += 1;
        }
        let smaller_neg = total_neg - fp - group_neg;
        numer += u128::from(group_pos) * u128::from(2 * smaller_neg + group_neg);
        tp += group_pos;
        fp += group_neg;
        points.push(RocPoint {
            fpr: real::<S>(fp as f64) / real::<S>(total_neg as f64),
            tpr: real::<S>(tp as f64) / real::<S>(total_pos as f64),
            threshold,
        });
        i = j;
    }

    let denom = 2 * u128::from(total_pos) * u128::from(total_neg);
    let auc = real::<S>(numer as f64) / real::<S>(denom as f64);
    Ok(RocCurve { points, auc })
}

/// Trapezoidal area under points ordered by `fpr`.
fn trapezoid<S: Scalar>(points: &[RocPoint<S>]) -> S {
    let mut area = S::zero();
    let half = real::<S>(0.5);
    for pair in points.windows(2) {
        area += (pair[1].fpr - pair[0].fpr) * (pair[0].tpr + pair[1].tpr) * half;
    }
    area
}

/// The default sweep grid for rule-based curves: 99 evenly spaced
/// thresholds 0.01, 0.02, …, 0.99.
pub fn default_threshold_grid<S: Scalar>() -> Vec<S> {
    (1..=99).map(|i| real::<S>(f64::from(i) / 100.0)).collect()
}

/// ROC curve of threshold-then-rescore classification.
///
/// For each grid threshold θ, every night's probabilities are binarized
/// as wake = `π̂ >= θ`, the rescoring rules run on that binary sequence
/// (with edge-adjacent borders), and the confusion counts pool across
/// nights into one operating point. Points are sorted by false-positive
/// rate with (0,0) and (1,1) endpoints appended, and the area is the
/// trapezoidal area under that polyline; the true-positive rate is kept
/// as computed even where it dips, since the swept classifier family is
/// not nested.
pub fn roc_webster<S: Scalar>(
    nights: &[(ScoreSequence<S>, Vec<S>)],
    params: &RuleParams<S>,
    grid: &[S],
) -> Result<RocCurve<S>> {
    if nights.is_empty() {
        return Err(Error::EmptySequence);
    }
    if grid.is_empty() {
        return Err(Error::InvalidConfig("threshold grid is empty".into()));
    }
    for &theta in grid {
        if !theta.is_finite() || theta <= S::zero() || theta >= S::one() {
            return Err(Error::InvalidConfig(format!(
                "threshold {theta} is outside the open interval (0, 1)"
            )));
        }
    }
    params.validate()?;
    let mut total_pos = 0u64;
    let mut total_neg = 0u64;
    for (probs, labels) in nights {
        if probs.len() != labels.len() {
            return Err(Error::LengthMismatch { left: probs.len(), right: labels.len() });
        }
        let (pos, neg) = count_classes(labels)?;
        total_pos += pos;
        total_neg += neg;
    }
    if total_pos == 0 || total_neg == 0 {
        return Err(Error::SingleClassLabels);
    }

    let mut points = Vec::with_capacity(grid.len() + 2);
    for &theta in grid {
        let mut tp = 0u64;
        let mut fp = 0u64;
        for (probs, labels) in nights {
            let binary: Vec<S> = probs
                .values()
                .iter()
                .map(|&p| if p >= theta { S::one() } else { S::zero() })
                .collect();
            let seq = ScoreSequence::new(binary, probs.epoch_len())?;
            let rescored = apply_webster(&seq, params, None)?;
            for (&w, &y) in rescored.rescored().iter().zip(labels) {
                if w == S::one() {
                    if y == S::one() {
                        tp += 1;
                    } else {
                        fp += 1;
                    }
                }
            }
        }
        points.push(RocPoint {
            fpr: real::<S>(fp as f64) / real::<S>(total_neg as f64),
            tpr: real::<S>(tp as f64) / real::<S>(total_pos as f64),
            threshold: theta,
        });
    }
    points.sort_by(|a, b| {
        (a.fpr, a.tpr).partial_cmp(&(b.fpr, b.tpr)).unwrap()
    });
    points.insert(0, RocPoint { fpr: S::zero(), tpr: S::zero(), threshold: S::infinity() });
    points.push(RocPoint { fpr: S::one(), tpr: S::one(), threshold: S::neg_infinity() });
    let auc = trapezoid(&points);
    Ok(RocCurve { points, auc })
}

/// A participant-level fold assignment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvPlan {
    /// Number of folds.
    pub k: usize,
    /// Fold index (0-based) for every participant.
    pub assignment: BTreeMap<String, usize>,
}

impl CvPlan {
    /// Participants assigned to one fold, in sorted id order.
    pub fn fold_members(&self, fold: usize) -> Vec<&str> {
        self.assignment
            .iter()
            .filter(|(_, &f)| f == fold)
            .map(|(id, _)| id.as_str())
            .collect()
    }
}

/// Assigns every distinct participant in `nights` to one of `k` folds:
/// participants are shuffled with a seeded generator and dealt round-robin,
/// so fold sizes differ by at most one and the plan is deterministic given
/// the seed.
pub fn plan_folds<S: Scalar>(
    nights: &[EpochSeries<S>],
    k: usize,
    seed: u64,
) -> Result<CvPlan> {
    if k < 2 {
        return Err(Error::InvalidConfig(format!("cross-validation needs at least 2 folds, got {k}")));
    }
    let mut ids: Vec<&str> = Vec::new();
    for night in nights {
        if !ids.contains(&night.participant_id.as_str()) {
            ids.push(&night.participant_id);
        }
    }
    if ids.len() < k {
        return Err(Error::TooFewParticipants { participants: ids.len(), folds: k });
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    ids.shuffle(&mut rng);
    let assignment =
        ids.iter().enumerate().map(|(i, id)| ((*id).to_string(), i % k)).collect();
    Ok(CvPlan { k, assignment })
}

/// Everything cross-validation produces: the fold plan, one curve per
/// held-out fold, and the pooled curve over all held-out scores.
#[derive(Debug, Clone, PartialEq)]
pub struct CvOutcome<S> {
    pub plan: CvPlan,
    pub per_fold: Vec<RocCurve<S>>,
    pub pooled: RocCurve<S>,
}

/// Participant-grouped k-fold cross-validation of an arbitrary scorer.
///
/// For each fold, `fit_score(train, held_out)` fits on the training
/// nights and returns one score vector per held-out night (any finite
/// reals; higher means more wake-like). Scores are pooled across folds —
/// every epoch is held out exactly once — into a single curve, the way a
/// single summary table entry is produced; per-fold curves are also
/// returned. Deterministic given the seed and a deterministic scorer.
pub fn cross_validate<S: Scalar, F>(
    nights: &[EpochSeries<S>],
    k: usize,
    seed: u64,
    mut fit_score: F,
) -> Result<CvOutcome<S>>
where
    F: FnMut(&[EpochSeries<S>], &[EpochSeries<S>]) -> Result<Vec<Vec<S>>>,
{
    if nights.is_empty() {
        return Err(Error::EmptySequence);
    }
    for night in nights {
        night.require_labels()?;
    }
    let plan = plan_folds(nights, k, seed)?;

    let mut per_fold = Vec::with_capacity(k);
    let mut pooled_scores: Vec<S> = Vec::new();
    let mut pooled_labels: Vec<S> = Vec::new();
    for fold in 0..k {
        let mut train: Vec<EpochSeries<S>> = Vec::new();
        let mut held_out: Vec<EpochSeries<S>> = Vec::new();
        for night in nights {
            if plan.assignment[&night.participant_id] == fold {
                held_out.push(night.clone());
            } else {
                train.push(night.clone());
            }
        }
        let scores = fit_score(&train, &held_out)?;
        if scores.len() != held_out.len() {
            return Err(Error::LengthMismatch { left: held_out.len(), right: scores.len() });
        }
        let mut fold_scores: Vec<S> = Vec::new();
        let mut fold_labels: Vec<S> = Vec::new();
        for (night, night_scores) in held_out.iter().zip(&scores) {
            if night_scores.len() != night.len() {
                return Err(Error::LengthMismatch {
                    left: night.len(),
                    right: night_scores.len(),
                });
            }
            fold_scores.extend_from_slice(night_scores);
            fold_labels.extend_from_slice(night.require_labels()?);
        }
        per_fold.push(roc(&fold_scores, &fold_labels)?);
        pooled_scores.extend_from_slice(&fold_scores);
        pooled_labels.extend_from_slice(&fold_labels);
    }
    let pooled = roc(&pooled_scores, &pooled_labels)?;
    Ok(CvOutcome { plan, per_fold, pooled })
}
