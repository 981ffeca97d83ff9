//! Sleep-wake classification from wrist actigraphy with interpretable
//! long-range context.
//!
//! Actigraphy classifiers that look only at a short window of activity counts
//! around the current epoch miss information that human rescorers use all the
//! time: how long the subject has been still, how long the last wake bout
//! lasted, whether a stretch of predicted sleep is a real bout or a blip.
//! This crate provides that context as a small set of bout-structure features
//! that can be computed by a linear recursion over the score sequence, which
//! keeps them cheap, exact on binary scores, and differentiable on soft
//! scores.
//!
//! The pieces fit together as a pipeline:
//!
//! * [`features`] computes per-epoch bout descriptors (time since last wake,
//!   length of the current sleep bout, ...) from a binary or probabilistic
//!   score sequence.
//! * [`webster`] implements the classic Webster rescoring rules on top of
//!   those descriptors.
//! * [`models`] holds the learned equivalents: windowed logistic regression
//!   on raw activity, a second-stage logistic regression on bout features,
//!   and a small decision tree that yields human-readable rules.
//! * [`joint`] trains the window model and the rescoring model as one
//!   network, backpropagating through the feature recursion.
//! * [`eval`] provides exact ROC curves, threshold-swept rule evaluation,
//!   and participant-level cross-validation.
//! * [`data`] reads and writes epoch-level CSV datasets and simulates
//!   plausible actigraphy nights for experiments.
//! * [`pipeline`] wires fitted stages into savable, appliable models.
//!
//! All numeric kernels are generic over the scalar type through the
//! [`Scalar`] trait; [`Real`] fixes the concrete precision used by the I/O
//! layer and the command-line tools.

pub mod data;
pub mod error;
pub mod eval;
pub mod features;
pub mod joint;
pub mod models;
pub mod num;
pub mod pipeline;
pub mod webster;

pub use error::{Error, Result};
pub use num::Scalar;

/// Concrete scalar type used by the data layer and the CLI.
pub type Real = f64;

/// Feature frame at the crate's working precision.
pub type FeatureFrame = features::FeatureFrame<Real>;

/// Score sequence at the crate's working precision.
pub type ScoreSequence = features::ScoreSequence<Real>;
