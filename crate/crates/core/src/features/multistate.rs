//! Bout features for sequences with more than two states.
//!
//! Two generalizations are provided. The paired variant reduces a K-state
//! sequence to the binary question "is the epoch in state k?" and reuses the
//! binary recursion, so "wake" becomes state k and "sleep" becomes
//! everything else. The min variant instead tracks a lag per state and
//! derives the length of the current bout of state k from the smallest lag
//! to any other state, which avoids materializing one binary reduction per
//! state pair.
//!
//! Border conventions differ between the variants, matching how each is
//! defined: the paired variant sets epoch 1 from its border exactly, like
//! [`last_features`](super::last_features); the min variant seeds a virtual
//! epoch 0 with per-state border lags and applies the recursion from the
//! first epoch onward.

use super::{last_features, validate_border, ScoreSequence};
use crate::error::{Error, Result};
use crate::num::Scalar;

/// A per-epoch sequence of integer state labels in `0..n_states`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSequence<S> {
    values: Vec<usize>,
    n_states: usize,
    epoch_len: S,
}

impl<S: Scalar> StateSequence<S> {
    pub fn new(values: Vec<usize>, n_states: usize, epoch_len: S) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptySequence);
        }
        if n_states < 2 {
            return Err(Error::InvalidConfig(format!(
                "need at least 2 states, got {n_states}"
            )));
        }
        if !(epoch_len > S::zero()) || !epoch_len.is_finite() {
            return Err(Error::NonPositiveEpochLength {
                value: epoch_len.to_f64().unwrap_or(f64::NAN),
            });
        }
        if let Some((i, &label)) = values.iter().enumerate().find(|&(_, &v)| v >= n_states) {
            return Err(Error::InvalidStateLabel { index: i, label, n_states });
        }
        Ok(StateSequence { values, n_states, epoch_len })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[usize] {
        &self.values
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn epoch_len(&self) -> S {
        self.epoch_len
    }

    /// Binary indicator sequence for one state: 1 where the label equals
    /// `k`, 0 elsewhere.
    pub fn indicator(&self, k: usize) -> Result<ScoreSequence<S>> {
        self.check_state(k)?;
        let values =
            self.values.iter().map(|&v| if v == k { S::one() } else { S::zero() }).collect();
        ScoreSequence::new(values, self.epoch_len)
    }

    fn check_state(&self, k: usize) -> Result<()> {
        if k >= self.n_states {
            return Err(Error::InvalidStateLabel {
                index: 0,
                label: k,
                n_states: self.n_states,
            });
        }
        Ok(())
    }
}

/// Borders for [`multistate_features`].
#[derive(Debug, Clone, PartialEq)]
pub struct MultiStateBorders<S> {
    /// Epoch-1 values for the paired variant, in binary feature order with
    /// state k playing "wake".
    pub paired_start: [S; 4],
    /// Virtual epoch-0 lag per state for the min variant.
    pub lag: Vec<S>,
    /// Virtual epoch-0 bout length per state for the min variant.
    pub len: Vec<S>,
}

impl<S: Scalar> MultiStateBorders<S> {
    /// All-zero borders for a K-state sequence.
    pub fn zeros(n_states: usize) -> Self {
        MultiStateBorders {
            paired_start: [S::zero(); 4],
            lag: vec![S::zero(); n_states],
            len: vec![S::zero(); n_states],
        }
    }
}

/// Backward bout features of one state within a K-state sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiStateFeatures<S> {
    /// Paired-variant features per epoch: (lag to k, lag to not-k, length of
    /// the latest k bout, length of the latest not-k bout). Identical to
    /// [`last_features`](super::last_features) on the indicator sequence.
    pub paired: Vec<[S; 4]>,
    /// Min-variant lag to state k per epoch.
    pub min_lag: Vec<S>,
    /// Min-variant length of the latest (or current) bout of state k.
    pub min_len: Vec<S>,
}

/// Computes both multistate feature variants for state `k`.
pub fn multistate_features<S: Scalar>(
    seq: &StateSequence<S>,
    k: usize,
    borders: &MultiStateBorders<S>,
) -> Result<MultiStateFeatures<S>> {
    seq.check_state(k)?;
    if borders.lag.len() != seq.n_states() || borders.len.len() != seq.n_states() {
        return Err(Error::LengthMismatch {
            left: borders.lag.len().min(borders.len.len()),
            right: seq.n_states(),
        });
    }
    validate_border(&borders.paired_start)?;
    for &v in borders.lag.iter().chain(&borders.len) {
        if !v.is_finite() || v < S::zero() {
            return Err(Error::NegativeBorder { value: v.to_f64().unwrap_or(f64::NAN) });
        }
    }

    let paired = last_features(&seq.indicator(k)?, borders.paired_start)?;

    let eps = seq.epoch_len();
    let mut lag = borders.lag.clone();
    let mut len_k = borders.len[k];
    let mut min_lag = Vec::with_capacity(seq.len());
    let mut min_len = Vec::with_capacity(seq.len());
    for &y in seq.values() {
        if y == k {
            len_k = (0..seq.n_states())
                .filter(|&s| s != k)
                .map(|s| lag[s] + eps)
                .fold(S::infinity(), S::min);
        }
        for (s, l) in lag.iter_mut().enumerate() {
            *l = if s == y { S::zero() } else { *l + eps };
        }
        min_lag.push(lag[k]);
        min_len.push(len_k);
    }

    Ok(MultiStateFeatures { paired, min_lag, min_len })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paired_variant_is_the_binary_reduction() {
        let seq = StateSequence::new(vec![0, 1, 1, 0, 1], 2, 0.5_f64).unwrap();
        let borders = MultiStateBorders::zeros(2);
        let out = multistate_features(&seq, 1, &borders).unwrap();
        let expected = last_features(&seq.indicator(1).unwrap(), [0.0; 4]).unwrap();
        assert_eq!(out.paired, expected);
    }

    #[test]
    fn min_variant_lag_matches_hand_computation() {
        let seq = StateSequence::new(vec![0, 1, 2, 2], 3, 1.0_f64).unwrap();
        let out = multistate_features(&seq, 2, &MultiStateBorders::zeros(3)).unwrap();
        assert_eq!(out.min_lag, vec![1.0, 2.0, 0.0, 0.0]);
    }

    #[test]
    fn staying_in_state_accumulates_length_one_epoch_at_a_time() {
        let seq = StateSequence::new(vec![1, 1, 1, 1], 3, 1.0_f64).unwrap();
        let out = multistate_features(&seq, 1, &MultiStateBorders::zeros(3)).unwrap();
        assert_eq!(out.min_lag, vec![0.0; 4]);
        assert_eq!(out.min_len, vec![1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn rejects_out_of_range_state() {
        let seq = StateSequence::new(vec![0, 1], 2, 1.0_f64).unwrap();
        assert!(matches!(
            multistate_features(&seq, 2, &MultiStateBorders::zeros(2)),
            Err(Error::InvalidStateLabel { label: 2, .. })
        ));
        assert!(StateSequence::<f64>::new(vec![0, 3], 3, 1.0).is_err());
        assert!(StateSequence::<f64>::new(vec![0], 1, 1.0).is_err());
    }
}
