//! Literal scan implementation of the bout features, used as an oracle for
//! the recursion.
//!
//! Every feature here is produced by searching the sequence and counting:
//! lags by looking for the nearest epoch in the required state, bout lengths
//! by measuring runs. No recursion is involved, so agreement with
//! [`feature_frame`](super::feature_frame) on every binary input is a real
//! check rather than a tautology.
//!
//! The border conventions mirror the recursion's exactly:
//!
//! * epoch 1 takes the start border as its backward features (its own score
//!   is not consulted), so backward searches cover epochs 2..=t only;
//!   symmetrically, forward searches cover t..=T-1;
//! * a lag whose state never occurs in the searched range grows from the
//!   border lag by one epoch length per step;
//! * a bout length whose state never occurs carries the border length;
//! * a run touching the searched range's edge is extended by the border lag
//!   of the opposite state, because "length of the current bout" is defined
//!   through "time since the state last changed".
//!
//! Durations accumulate by adding the epoch length one step at a time, in
//! the same left-to-right order as the recursion. Floating-point addition is
//! not associative, and the scan is held to bit-exact agreement even for
//! borders with arbitrary mantissas.

use super::{combine_features, BorderValues, FeatureFrame, ScoreSequence};
use crate::error::{Error, Result};
use crate::num::Scalar;

/// Computes a feature frame by literal search over a binary sequence.
///
/// Rejects continuous scores: the scan definitions only make sense when each
/// epoch is decisively wake or sleep.
pub fn features_by_scan<S: Scalar>(
    seq: &ScoreSequence<S>,
    borders: &BorderValues<S>,
) -> Result<FeatureFrame<S>> {
    borders.validate()?;
    if let Some((i, &v)) = seq
        .values()
        .iter()
        .enumerate()
        .find(|&(_, &v)| v != S::zero() && v != S::one())
    {
        return Err(Error::NonBinaryScore { index: i, value: v.to_f64().unwrap_or(f64::NAN) });
    }

    let wake: Vec<bool> = seq.values().iter().map(|&v| v == S::one()).collect();
    let eps = seq.epoch_len();
    let t_total = wake.len();

    let last: Vec<[S; 4]> =
        (0..t_total).map(|t| scan_backward(&wake, eps, t, &borders.start)).collect();
    let next: Vec<[S; 4]> =
        (0..t_total).map(|t| scan_forward(&wake, eps, t, &borders.end)).collect();
    let combined = combine_features(&last, &next)?;

    Ok(FeatureFrame::from_parts(
        eps,
        true,
        seq.values().to_vec(),
        last,
        next,
        combined,
    ))
}

/// `base` plus `count` epoch lengths, accumulated one step at a time.
fn accumulate<S: Scalar>(base: S, eps: S, count: usize) -> S {
    let mut acc = base;
    for _ in 0..count {
        acc = acc + eps;
    }
    acc
}

/// Backward features at 0-based epoch `t`; searched range is epochs 1..=t
/// (0-based), i.e. everything after the border epoch.
fn scan_backward<S: Scalar>(wake: &[bool], eps: S, t: usize, start: &[S; 4]) -> [S; 4] {
    if t == 0 {
        return *start;
    }

    // Lag to the most recent epoch in a given state, border-extended when
    // the state never occurs.
    let lag = |state: bool, border: S| -> S {
        match (1..=t).rev().find(|&j| wake[j] == state) {
            Some(j) => accumulate(S::zero(), eps, t - j),
            None => accumulate(border, eps, t),
        }
    };
    let lag_wake = lag(true, start[0]);
    let lag_sleep = lag(false, start[1]);

    // Length of the most recent (or current) bout in a given state. While
    // inside a bout its length so far equals the lag to the opposite state;
    // once the bout has ended the final value carries forward unchanged.
    let bout_len = |state: bool, border_len: S, opposite_border_lag: S| -> S {
        if wake[t] == state {
            return lag(!state, opposite_border_lag);
        }
        let Some(end) = (1..=t).rev().find(|&j| wake[j] == state) else {
            return border_len;
        };
        let begin = (1..=end).rev().take_while(|&j| wake[j] == state).last().unwrap();
        if begin == 1 {
            accumulate(opposite_border_lag, eps, end)
        } else {
            accumulate(S::zero(), eps, end - begin + 1)
        }
    };
    let len_wake = bout_len(true, start[2], start[1]);
    let len_sleep = bout_len(false, start[3], start[0]);

    [lag_wake, lag_sleep, len_wake, len_sleep]
}

/// Forward features at 0-based epoch `t`; searched range is epochs
/// t..=T-2 (0-based), i.e. everything before the border epoch.
fn scan_forward<S: Scalar>(wake: &[bool], eps: S, t: usize, end: &[S; 4]) -> [S; 4] {
    let hi = wake.len() - 1;
    if t == hi {
        return *end;
    }

    let lag = |state: bool, border: S| -> S {
        match (t..hi).find(|&j| wake[j] == state) {
            Some(j) => accumulate(S::zero(), eps, j - t),
            None => accumulate(border, eps, hi - t),
        }
    };
    let lag_wake = lag(true, end[0]);
    let lag_sleep = lag(false, end[1]);

    let bout_len = |state: bool, border_len: S, opposite_border_lag: S| -> S {
        if wake[t] == state {
            return lag(!state, opposite_border_lag);
        }
        let Some(begin) = (t..hi).find(|&j| wake[j] == state) else {
            return border_len;
        };
        let finish = (begin..hi).take_while(|&j| wake[j] == state).last().unwrap();
        if finish == hi - 1 {
            accumulate(opposite_border_lag, eps, hi - begin)
        } else {
            accumulate(S::zero(), eps, finish - begin + 1)
        }
    };
    let len_wake = bout_len(true, end[2], end[1]);
    let len_sleep = bout_len(false, end[3], end[0]);

    [lag_wake, lag_sleep, len_wake, len_sleep]
}
