//! Second-stage models fit on bout features of a first-stage probability
//! sequence.
//!
//! Given per-epoch wake probabilities π̂ from a window model, two feature
//! constructions feed the second-stage regression:
//!
//! * continuous: the recursion runs directly on π̂ and the model sees
//!   `(logit π̂, log(1+l), log(1+c))` — nine columns; the forward features
//!   `n` are omitted because the combined features already contain them and
//!   the regression wants linearly independent inputs;
//! * binary: π̂ is thresholded at 0.5 into a binary sequence W and the
//!   model sees `(π̂, l(W), n(W), c(W))` untransformed — thirteen columns.
//!
//! A thirteen-column transformed variant (adding `log(1+n)`) is available
//! for tree models, which have no collinearity concerns.

use crate::error::Result;
use crate::features::{feature_frame, BorderValues, FeatureFrame, ScoreSequence};
use crate::num::{logit, real, Matrix, Scalar};

use super::glm::{fit_glm, FeatureRecipe, GlmModel};

/// Probabilities are clamped to `[PROB_CLAMP, 1 − PROB_CLAMP]` before the
/// log-odds transform so saturated window models stay finite.
pub const PROB_CLAMP: f64 = 1e-6;

/// Number of feature columns in the continuous construction.
pub const CONTINUOUS_ARITY: usize = 9;

/// Number of feature columns in the binary construction.
pub const BINARY_ARITY: usize = 13;

pub fn clamp_probability<S: Scalar>(p: S) -> S {
    let lo = real::<S>(PROB_CLAMP);
    p.max(lo).min(S::one() - lo)
}

/// Nine-column rows `(logit π̂, log(1+l) ×4, log(1+c) ×4)` from a frame
/// computed on the probability sequence itself.
pub fn continuous_rescoring_features<S: Scalar>(frame: &FeatureFrame<S>) -> Matrix<S> {
    let mut out = Matrix::zeros(0, CONTINUOUS_ARITY);
    let mut row = [S::zero(); CONTINUOUS_ARITY];
    for t in 0..frame.len() {
        row[0] = logit(clamp_probability(frame.score(t)));
        for i in 0..4 {
            row[1 + i] = frame.last(t)[i].ln_1p();
            row[5 + i] = frame.combined(t)[i].ln_1p();
        }
        out.push_row(&row);
    }
    out
}

/// Thirteen-column variant of [`continuous_rescoring_features`] that keeps
/// the transformed forward features as well, for models that tolerate the
/// linear dependence (trees).
pub fn transformed_frame_features<S: Scalar>(frame: &FeatureFrame<S>) -> Matrix<S> {
    let mut out = Matrix::zeros(0, BINARY_ARITY);
    let mut row = [S::zero(); BINARY_ARITY];
    for t in 0..frame.len() {
        row[0] = logit(clamp_probability(frame.score(t)));
        for i in 0..4 {
            row[1 + i] = frame.last(t)[i].ln_1p();
            row[5 + i] = frame.next(t)[i].ln_1p();
            row[9 + i] = frame.combined(t)[i].ln_1p();
        }
        out.push_row(&row);
    }
    out
}

/// Thresholds π̂ at 0.5 into a binary sequence.
pub fn threshold_sequence<S: Scalar>(probs: &ScoreSequence<S>) -> ScoreSequence<S> {
    let half = S::one() / (S::one() + S::one());
    let values =
        probs.values().iter().map(|&p| if p >= half { S::one() } else { S::zero() }).collect();
    ScoreSequence::new(values, probs.epoch_len()).expect("thresholded values are binary")
}

/// Thirteen-column rows `(π̂, l(W) ×4, n(W) ×4, c(W) ×4)` where W is the
/// thresholded sequence; everything untransformed.
pub fn binary_rescoring_features<S: Scalar>(
    probs: &ScoreSequence<S>,
    borders: &BorderValues<S>,
) -> Result<Matrix<S>> {
    let frame = feature_frame(&threshold_sequence(probs), borders)?;
    let mut out = Matrix::zeros(0, BINARY_ARITY);
    let mut row = [S::zero(); BINARY_ARITY];
    for t in 0..frame.len() {
        row[0] = probs.values()[t];
        for i in 0..4 {
            row[1 + i] = frame.last(t)[i];
            row[5 + i] = frame.next(t)[i];
            row[9 + i] = frame.combined(t)[i];
        }
        out.push_row(&row);
    }
    Ok(out)
}

/// Which feature construction a sequential fit uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SequentialMode {
    Continuous,
    Binary,
}

/// Builds the feature rows for one night of probabilities.
pub fn sequential_features<S: Scalar>(
    probs: &ScoreSequence<S>,
    mode: SequentialMode,
    borders: &BorderValues<S>,
) -> Result<Matrix<S>> {
    match mode {
        SequentialMode::Continuous => {
            let frame = feature_frame(probs, borders)?;
            Ok(continuous_rescoring_features(&frame))
        }
        SequentialMode::Binary => binary_rescoring_features(probs, borders),
    }
}

/// Fits the second-stage regression for several nights of first-stage
/// probabilities against their labels.
pub fn fit_sequential<S: Scalar>(
    nights: &[(ScoreSequence<S>, Vec<S>)],
    mode: SequentialMode,
    borders: &BorderValues<S>,
    l2: S,
) -> Result<GlmModel<S>> {
    let arity = match mode {
        SequentialMode::Continuous => CONTINUOUS_ARITY,
        SequentialMode::Binary => BINARY_ARITY,
    };
    let mut features = Matrix::zeros(0, arity);
    let mut labels = Vec::new();
    for (probs, night_labels) in nights {
        if probs.len() != night_labels.len() {
            return Err(crate::error::Error::LengthMismatch {
                left: probs.len(),
                right: night_labels.len(),
            });
        }
        let rows = sequential_features(probs, mode, borders)?;
        for t in 0..rows.rows() {
            features.push_row(rows.row(t));
        }
        labels.extend_from_slice(night_labels);
    }
    let recipe = match mode {
        SequentialMode::Continuous => FeatureRecipe::ContinuousRescoring,
        SequentialMode::Binary => FeatureRecipe::BinaryRescoring,
    };
    fit_glm(&features, &labels, l2, recipe)
}
