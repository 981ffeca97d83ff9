//! Bout-structure features computed by a linear recursion over a score
//! sequence.
//!
//! For every epoch `t` of a sleep-wake score sequence, eight directional
//! features describe the surrounding bout structure: looking backward, the
//! time since the most recent wake-scored and sleep-scored epochs and the
//! length of the most recent (or current) wake and sleep bouts; looking
//! forward, the same four quantities toward the future. Four combined
//! features follow from those: the spans of the current sleep and wake bouts
//! (backward lag plus forward lag to the opposite state) and the smaller of
//! the two bordering bout lengths for each state.
//!
//! All eight directional features obey a first-order linear recursion in the
//! score: with `s` the score at the current epoch and `p` the four backward
//! features one step earlier,
//!
//! ```text
//! l = v0 + s * v1 + (M0 + s * M1) * p
//! ```
//!
//! for fixed vectors `v0`, `v1` and matrices `M0`, `M1` that depend only on
//! the epoch length (see [`RecursionCoefficients`]). Forward features run the
//! same recursion from the other end of the sequence. Because each step is
//! affine in the score, the recursion accepts probabilistic scores unchanged
//! and remains differentiable, which is what the joint trainer in
//! [`crate::joint`] exploits. On binary scores it reproduces the literal
//! "scan the sequence and count" definitions; [`features_by_scan`] implements
//! those directly and exists to keep the recursion honest.
//!
//! Conventions worth knowing:
//!
//! * Durations are real durations (epoch count times epoch length), so
//!   datasets with different epoch lengths remain comparable.
//! * The backward features of the first epoch are set to the caller's border
//!   values exactly, and the first score never enters the backward recursion;
//!   the last epoch and the forward recursion mirror this. Borders default to
//!   zero: "the opposite of everything happened just now, with nothing
//!   before it".
//! * When a state is never observed in the scanned range, its lag keeps
//!   growing from the border value and its bout length stays at the border
//!   value.

mod multistate;
mod scan;

pub use multistate::{multistate_features, MultiStateFeatures, StateSequence};
pub use scan::features_by_scan;

use std::io;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::{Matrix, Scalar};

/// Column layout of a [`FeatureFrame`] row.
pub mod columns {
    pub const SCORE: usize = 0;
    pub const LAST_LAG_WAKE: usize = 1;
    pub const LAST_LAG_SLEEP: usize = 2;
    pub const LAST_LEN_WAKE: usize = 3;
    pub const LAST_LEN_SLEEP: usize = 4;
    pub const NEXT_LAG_WAKE: usize = 5;
    pub const NEXT_LAG_SLEEP: usize = 6;
    pub const NEXT_LEN_WAKE: usize = 7;
    pub const NEXT_LEN_SLEEP: usize = 8;
    pub const CUR_LEN_SLEEP: usize = 9;
    pub const CUR_LEN_WAKE: usize = 10;
    pub const MIN_BORDER_SLEEP: usize = 11;
    pub const MIN_BORDER_WAKE: usize = 12;

    /// Number of columns in a feature row.
    pub const COUNT: usize = 13;

    /// Column names, in row order.
    pub const NAMES: [&str; COUNT] = [
        "score",
        "last_lag_wake",
        "last_lag_sleep",
        "last_len_wake",
        "last_len_sleep",
        "next_lag_wake",
        "next_lag_sleep",
        "next_len_wake",
        "next_len_sleep",
        "cur_len_sleep",
        "cur_len_wake",
        "min_border_sleep",
        "min_border_wake",
    ];
}

/// A per-epoch score sequence: 1 = wake, 0 = sleep, values in between are
/// probabilities of wake. The epoch length is in minutes.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreSequence<S> {
    values: Vec<S>,
    epoch_len: S,
}

impl<S: Scalar> ScoreSequence<S> {
    /// Validates and wraps a score sequence.
    pub fn new(values: Vec<S>, epoch_len: S) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptySequence);
        }
        if !(epoch_len > S::zero()) || !epoch_len.is_finite() {
            return Err(Error::NonPositiveEpochLength { value: epoch_len.to_f64().unwrap_or(f64::NAN) });
        }
        for (i, &v) in values.iter().enumerate() {
            if !v.is_finite() || v < S::zero() || v > S::one() {
                return Err(Error::ScoreOutOfRange {
                    index: i,
                    value: v.to_f64().unwrap_or(f64::NAN),
                });
            }
        }
        Ok(ScoreSequence { values, epoch_len })
    }

    /// Builds a binary sequence from 0/1 labels.
    pub fn from_binary(bits: &[u8], epoch_len: S) -> Result<Self> {
        let values = bits
            .iter()
            .enumerate()
            .map(|(i, &b)| match b {
                0 => Ok(S::zero()),
                1 => Ok(S::one()),
                other => Err(Error::NonBinaryScore { index: i, value: f64::from(other) }),
            })
            .collect::<Result<Vec<_>>>()?;
        ScoreSequence::new(values, epoch_len)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[S] {
        &self.values
    }

    pub fn epoch_len(&self) -> S {
        self.epoch_len
    }

    /// True when every score is exactly 0 or 1.
    pub fn is_binary(&self) -> bool {
        self.values.iter().all(|&v| v == S::zero() || v == S::one())
    }

    /// The same scores in reverse order.
    pub fn reversed(&self) -> Self {
        let mut values = self.values.clone();
        values.reverse();
        ScoreSequence { values, epoch_len: self.epoch_len }
    }
}

/// Border values seeding the recursions at the two ends of a sequence.
///
/// `start` seeds the backward features of the first epoch, `end` the forward
/// features of the last epoch. Each is in feature order
/// (lag wake, lag sleep, len wake, len sleep).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BorderValues<S> {
    pub start: [S; 4],
    pub end: [S; 4],
}

impl<S: Scalar> Default for BorderValues<S> {
    fn default() -> Self {
        BorderValues { start: [S::zero(); 4], end: [S::zero(); 4] }
    }
}

impl<S: Scalar> BorderValues<S> {
    pub fn new(start: [S; 4], end: [S; 4]) -> Result<Self> {
        validate_border(&start)?;
        validate_border(&end)?;
        Ok(BorderValues { start, end })
    }

    pub fn validate(&self) -> Result<()> {
        validate_border(&self.start)?;
        validate_border(&self.end)
    }
}

fn validate_border<S: Scalar>(b: &[S; 4]) -> Result<()> {
    for &v in b {
        if !v.is_finite() || v < S::zero() {
            return Err(Error::NegativeBorder { value: v.to_f64().unwrap_or(f64::NAN) });
        }
    }
    Ok(())
}

/// Coefficients of the per-epoch feature recursion
/// `l = v0 + s*v1 + (M0 + s*M1) * p`.
///
/// Only `v0` and `v1` depend on the epoch length; the matrices encode which
/// previous features carry over or hand off under each score.
#[derive(Debug, Clone, PartialEq)]
pub struct RecursionCoefficients<S> {
    pub v0: [S; 4],
    pub v1: [S; 4],
    pub m0: [[S; 4]; 4],
    pub m1: [[S; 4]; 4],
}

impl<S: Scalar> RecursionCoefficients<S> {
    pub fn for_epoch_len(epoch_len: S) -> Self {
        let e = epoch_len;
        let z = S::zero();
        let o = S::one();
        RecursionCoefficients {
            v0: [e, z, z, e],
            v1: [-e, e, e, -e],
            m0: [[o, z, z, z], [z, z, z, z], [z, z, o, z], [o, z, z, z]],
            m1: [[-o, z, z, z], [z, o, z, z], [z, o, -o, z], [-o, z, z, o]],
        }
    }

    /// One recursion step: previous feature vector and current score in,
    /// current feature vector out.
    pub fn step(&self, prev: &[S; 4], score: S) -> [S; 4] {
        let mut out = [S::zero(); 4];
        for i in 0..4 {
            let mut acc = self.v0[i] + score * self.v1[i];
            for j in 0..4 {
                acc += (self.m0[i][j] + score * self.m1[i][j]) * prev[j];
            }
            out[i] = acc;
        }
        out
    }
}

/// Backward features for every epoch: time since the nearest wake and sleep
/// epochs, and lengths of the most recent (or current) wake and sleep bouts.
///
/// The first epoch's features are `start` exactly; its score is not consulted.
pub fn last_features<S: Scalar>(seq: &ScoreSequence<S>, start: [S; 4]) -> Result<Vec<[S; 4]>> {
    validate_border(&start)?;
    let coeff = RecursionCoefficients::for_epoch_len(seq.epoch_len());
    let mut out = Vec::with_capacity(seq.len());
    out.push(start);
    for &s in &seq.values()[1..] {
        let prev = out.last().unwrap();
        out.push(coeff.step(prev, s));
    }
    Ok(out)
}

/// Forward features for every epoch, the mirror image of [`last_features`]:
/// time until the nearest wake and sleep epochs, and lengths of the closest
/// upcoming (or current) bouts.
///
/// The last epoch's features are `end` exactly; its score is not consulted.
pub fn next_features<S: Scalar>(seq: &ScoreSequence<S>, end: [S; 4]) -> Result<Vec<[S; 4]>> {
    validate_border(&end)?;
    let coeff = RecursionCoefficients::for_epoch_len(seq.epoch_len());
    let t = seq.len();
    let mut out = vec![[S::zero(); 4]; t];
    out[t - 1] = end;
    for i in (0..t - 1).rev() {
        let next = out[i + 1];
        out[i] = coeff.step(&next, seq.values()[i]);
    }
    Ok(out)
}

/// Combined features: spans of the current sleep and wake bouts, and the
/// smaller bordering bout length per state.
///
/// * current sleep span = backward wake lag + forward wake lag
/// * current wake span = backward sleep lag + forward sleep lag
/// * min bordering sleep = min(backward sleep length, forward sleep length)
/// * min bordering wake = min(backward wake length, forward wake length)
pub fn combine_features<S: Scalar>(last: &[[S; 4]], next: &[[S; 4]]) -> Result<Vec<[S; 4]>> {
    if last.len() != next.len() {
        return Err(Error::LengthMismatch { left: last.len(), right: next.len() });
    }
    Ok(last
        .iter()
        .zip(next)
        .map(|(l, n)| [l[0] + n[0], l[1] + n[1], l[3].min(n[3]), l[2].min(n[2])])
        .collect())
}

/// Per-epoch feature rows for a whole sequence: the score plus all twelve
/// bout-structure features.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureFrame<S> {
    epoch_len: S,
    binary: bool,
    scores: Vec<S>,
    last: Vec<[S; 4]>,
    next: Vec<[S; 4]>,
    combined: Vec<[S; 4]>,
}

impl<S: Scalar> FeatureFrame<S> {
    pub(crate) fn from_parts(
        epoch_len: S,
        binary: bool,
        scores: Vec<S>,
        last: Vec<[S; 4]>,
        next: Vec<[S; 4]>,
        combined: Vec<[S; 4]>,
    ) -> Self {
        FeatureFrame { epoch_len, binary, scores, last, next, combined }
    }

    /// Number of epochs.
    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn epoch_len(&self) -> S {
        self.epoch_len
    }

    /// True when the source scores were all exactly 0 or 1.
    pub fn is_binary(&self) -> bool {
        self.binary
    }

    pub fn score(&self, t: usize) -> S {
        self.scores[t]
    }

    pub fn scores(&self) -> &[S] {
        &self.scores
    }

    pub fn last(&self, t: usize) -> &[S; 4] {
        &self.last[t]
    }

    pub fn next(&self, t: usize) -> &[S; 4] {
        &self.next[t]
    }

    pub fn combined(&self, t: usize) -> &[S; 4] {
        &self.combined[t]
    }

    /// One epoch as a row in [`columns`] order.
    pub fn row(&self, t: usize) -> [S; columns::COUNT] {
        let l = &self.last[t];
        let n = &self.next[t];
        let c = &self.combined[t];
        [
            self.scores[t],
            l[0], l[1], l[2], l[3],
            n[0], n[1], n[2], n[3],
            c[0], c[1], c[2], c[3],
        ]
    }

    /// Every epoch as a dense matrix in [`columns`] order.
    pub fn rows_matrix(&self) -> Matrix<S> {
        let mut out = Matrix::zeros(0, columns::COUNT);
        for t in 0..self.len() {
            out.push_row(&self.row(t));
        }
        out
    }

    /// Writes the frame as CSV with one row per epoch and a fixed header.
    pub fn write_csv<W: io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = Vec::with_capacity(columns::COUNT + 1);
        header.push("epoch".to_string());
        header.extend(columns::NAMES.iter().map(|s| s.to_string()));
        w.write_record(&header)?;
        for t in 0..self.len() {
            let mut record = Vec::with_capacity(columns::COUNT + 1);
            record.push((t + 1).to_string());
            record.extend(self.row(t).iter().map(|v| format!("{v}")));
            w.write_record(&record)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Computes the full feature frame for a sequence: backward, forward, and
/// combined features for every epoch, alongside the score itself.
pub fn feature_frame<S: Scalar>(
    seq: &ScoreSequence<S>,
    borders: &BorderValues<S>,
) -> Result<FeatureFrame<S>> {
    let last = last_features(seq, borders.start)?;
    let next = next_features(seq, borders.end)?;
    let combined = combine_features(&last, &next)?;
    Ok(FeatureFrame::from_parts(
        seq.epoch_len(),
        seq.is_binary(),
        seq.values().to_vec(),
        last,
        next,
        combined,
    ))
}

/// Border values that treat the record edge like a state change one epoch
/// away: both lags start at one epoch length, both bout lengths at zero.
///
/// Under these borders a run of k epochs touching the start or end of the
/// record measures k epoch lengths, the same as an interior run, which is
/// how rescoring heuristics stated on whole records expect runs to count.
pub fn edge_adjacent_borders<S: Scalar>(epoch_len: S) -> BorderValues<S> {
    BorderValues {
        start: [epoch_len, epoch_len, S::zero(), S::zero()],
        end: [epoch_len, epoch_len, S::zero(), S::zero()],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::num::real;

    fn binary<S: Scalar>(bits: &[u8], eps: f64) -> ScoreSequence<S> {
        ScoreSequence::from_binary(bits, real(eps)).unwrap()
    }

    #[test]
    fn all_wake_has_zero_wake_lag() {
        let seq = binary::<f64>(&[1, 1, 1], 1.0);
        let l = last_features(&seq, [0.0; 4]).unwrap();
        assert!(l.iter().all(|f| f[0] == 0.0));
        let n = next_features(&seq, [0.0; 4]).unwrap();
        assert!(n.iter().all(|f| f[0] == 0.0));
    }

    #[test]
    fn wake_sleep_sleep_wake_final_epoch() {
        // Epoch 4 has just woken: zero wake lag, one minute since sleep, a
        // current wake bout of one minute, and a previous sleep bout of two.
        let seq = binary::<f64>(&[1, 0, 0, 1], 1.0);
        let l = last_features(&seq, [0.0; 4]).unwrap();
        assert_eq!(l[3], [0.0, 1.0, 1.0, 2.0]);
        let n = next_features(&seq, [0.0; 4]).unwrap();
        assert_eq!(n[0], [0.0, 1.0, 1.0, 2.0]);
    }

    #[test]
    fn border_lag_keeps_growing_when_state_never_seen() {
        let seq = binary::<f64>(&[0, 0], 0.5);
        let l = last_features(&seq, [2.0, 0.0, 3.0, 0.0]).unwrap();
        assert_eq!(l[0][0], 2.0);
        assert_eq!(l[1][0], 2.5);
    }

    #[test]
    fn border_bout_length_carries_when_state_never_seen() {
        let seq = binary::<f64>(&[0, 0, 0], 1.0);
        let l = last_features(&seq, [5.0, 0.0, 7.0, 0.0]).unwrap();
        let len_wake: Vec<f64> = l.iter().map(|f| f[2]).collect();
        assert_eq!(len_wake, vec![7.0, 7.0, 7.0]);
    }

    #[test]
    fn combine_follows_the_defining_identities() {
        let l = [[3.0, 0.0, 5.0, 4.0]];
        let n = [[2.0, 0.0, 6.0, 4.0]];
        let c = combine_features(&l, &n).unwrap();
        assert_eq!(c[0], [5.0, 0.0, 4.0, 5.0]);
    }

    #[test]
    fn combine_of_zeros_is_zero() {
        let z = [[0.0_f64; 4]; 3];
        let c = combine_features(&z, &z).unwrap();
        assert!(c.iter().all(|f| *f == [0.0; 4]));
    }

    #[test]
    fn combine_rejects_length_mismatch() {
        let l = [[0.0_f64; 4]; 2];
        let n = [[0.0_f64; 4]; 3];
        assert!(matches!(
            combine_features(&l, &n),
            Err(Error::LengthMismatch { left: 2, right: 3 })
        ));
    }

    #[test]
    fn current_sleep_span_runs_wake_boundary_to_wake_boundary() {
        // The sleep bout occupies epochs 2..3; its span feature measures one
        // minute back to the wake at epoch 1 plus two minutes forward to the
        // wake at epoch 4.
        let seq = binary::<f64>(&[1, 0, 0, 1], 1.0);
        let frame = feature_frame(&seq, &BorderValues::default()).unwrap();
        assert_eq!(frame.combined(1)[0], 3.0);
        assert_eq!(frame.last(1)[0] + frame.next(1)[0], 3.0);
    }

    #[test]
    fn single_epoch_frame_is_all_borders() {
        let seq = binary::<f64>(&[1], 1.0);
        let frame = feature_frame(&seq, &BorderValues::default()).unwrap();
        let row = frame.row(0);
        assert_eq!(row[0], 1.0);
        assert!(row[1..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn continuous_scores_run_through_the_same_recursion() {
        let seq = ScoreSequence::new(vec![0.5, 0.5], 1.0).unwrap();
        let l = last_features(&seq, [0.0; 4]).unwrap();
        assert_eq!(l[1], [0.5, 0.5, 0.5, 0.5]);
    }

    #[test]
    fn time_reversal_identity_is_exact() {
        let seq = ScoreSequence::new(vec![0.3, 0.9, 0.0, 1.0, 0.25, 0.6], 0.5).unwrap();
        let end = [0.5, 1.5, 2.0, 0.25];
        let n = next_features(&seq, end).unwrap();
        let mut rev = last_features(&seq.reversed(), end).unwrap();
        rev.reverse();
        assert_eq!(n, rev);
    }

    #[test]
    fn each_feature_is_affine_in_the_current_score() {
        let coeff = RecursionCoefficients::for_epoch_len(1.0_f64);
        let prev = [1.25, 0.5, 3.0, 0.75];
        let lo = coeff.step(&prev, 0.0);
        let hi = coeff.step(&prev, 1.0);
        let mid = coeff.step(&prev, 0.5);
        for i in 0..4 {
            assert!((mid[i] - 0.5 * (lo[i] + hi[i])).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_scores_outside_unit_interval() {
        assert!(matches!(
            ScoreSequence::new(vec![0.5, 1.5], 1.0),
            Err(Error::ScoreOutOfRange { index: 1, .. })
        ));
        assert!(ScoreSequence::<f64>::new(vec![], 1.0).is_err());
        assert!(ScoreSequence::new(vec![0.5], 0.0).is_err());
    }

    #[test]
    fn rejects_negative_borders() {
        let seq = binary::<f64>(&[1, 0], 1.0);
        assert!(matches!(
            last_features(&seq, [0.0, -1.0, 0.0, 0.0]),
            Err(Error::NegativeBorder { .. })
        ));
    }

    #[test]
    fn works_in_single_precision() {
        let seq = binary::<f32>(&[1, 0, 0, 1], 1.0);
        let l = last_features(&seq, [0.0_f32; 4]).unwrap();
        assert_eq!(l[3], [0.0, 1.0, 1.0, 2.0]);
    }

    #[test]
    fn csv_header_matches_contract() {
        let seq = binary::<f64>(&[1, 0], 0.5);
        let frame = feature_frame(&seq, &BorderValues::default()).unwrap();
        let mut buf = Vec::new();
        frame.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let header = text.lines().next().unwrap();
        assert_eq!(
            header,
            "epoch,score,last_lag_wake,last_lag_sleep,last_len_wake,last_len_sleep,\
             next_lag_wake,next_lag_sleep,next_len_wake,next_len_sleep,\
             cur_len_sleep,cur_len_wake,min_border_sleep,min_border_wake"
        );
        assert_eq!(text.lines().count(), 3);
    }
}
