//! Joint training of the window layer and the rescoring layer as one model.
//!
//! The sequential pipeline fixes the window model first and then fits a
//! rescoring regression on its probabilities. Here both layers are trained
//! together: activity goes through the windowed logistic layer to a
//! probability sequence π̂, the bout-feature recursion runs on π̂, and a
//! second logistic layer maps `(logit π̂, log(1+l), log(1+c))` to the final
//! wake probability. Because every step is differentiable (almost
//! everywhere), the whole stack trains by gradient descent.
//!
//! The interesting part is the backward pass through the recursion
//! `l_t = v0 + π_t v1 + (M0 + π_t M1) l_{t-1}`: adjoints of the backward
//! features flow right-to-left with `∂l_t/∂π_t = v1 + M1 l_{t-1}` and
//! `∂l_t/∂l_{t-1} = M0 + π_t M1`, while the forward features mirror this
//! left-to-right. The `min` in the combined features takes the backward
//! branch's subgradient at exact ties; border feature vectors are fixed
//! constants and absorb their adjoints.
//!
//! Optimization is mini-batch adaptive-moment gradient descent. A batch is
//! a group of whole participant-nights (the features are night-global, so
//! epochs cannot be shuffled individually) collected until it holds at
//! least `batch_size` epochs. The loss is the mean epoch-level negative
//! Bernoulli log-likelihood, so the learning rate does not depend on night
//! length.

use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::data::EpochSeries;
use crate::error::{Error, Result};
use crate::features::{feature_frame, BorderValues, FeatureFrame, RecursionCoefficients, ScoreSequence};
use crate::models::{
    continuous_rescoring_features, window_matrix, EdgeMode, FeatureRecipe, GlmModel, WindowSpec,
    CONTINUOUS_ARITY, PROB_CLAMP,
};
use crate::num::{real, sigmoid, softplus, Matrix, Scalar};

/// Exponential decay of the first moment estimate.
const MOMENT_DECAY_1: f64 = 0.9;
/// Exponential decay of the second moment estimate.
const MOMENT_DECAY_2: f64 = 0.999;
/// Denominator guard in the adaptive update.
const MOMENT_EPS: f64 = 1e-8;

/// Both layers of the windowed-rescoring network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointModel<S> {
    /// Window-layer intercept.
    pub alpha0: S,
    /// Window-layer weights, one per window offset.
    pub beta0: Vec<S>,
    /// Rescoring-layer intercept.
    pub alpha1: S,
    /// Rescoring-layer weights over `(logit π̂, log(1+l), log(1+c))`.
    pub beta1: Vec<S>,
    pub window: WindowSpec,
    pub edge: EdgeMode,
    pub borders: BorderValues<S>,
}

impl<S: Scalar> JointModel<S> {
    /// A model with all coefficients zero, which outputs 0.5 everywhere.
    pub fn zeros(window: WindowSpec, edge: EdgeMode, borders: BorderValues<S>) -> Result<Self> {
        window.validate()?;
        borders.validate()?;
        Ok(JointModel {
            alpha0: S::zero(),
            beta0: vec![S::zero(); window.width()],
            alpha1: S::zero(),
            beta1: vec![S::zero(); CONTINUOUS_ARITY],
            window,
            edge,
            borders,
        })
    }

    /// Initializes both layers from separately fitted sequential models:
    /// the window regression on raw activity and the rescoring regression
    /// on continuous bout features. At this initialization the joint model
    /// computes exactly the sequential pipeline.
    pub fn from_sequential(
        window_model: &GlmModel<S>,
        rescoring_model: &GlmModel<S>,
        window: WindowSpec,
        edge: EdgeMode,
        borders: BorderValues<S>,
    ) -> Result<Self> {
        window.validate()?;
        borders.validate()?;
        if window_model.recipe != FeatureRecipe::RawWindow {
            return Err(Error::InvalidConfig(
                "window layer must come from a raw-window model".into(),
            ));
        }
        if rescoring_model.recipe != FeatureRecipe::ContinuousRescoring {
            return Err(Error::InvalidConfig(
                "rescoring layer must come from a continuous-rescoring model".into(),
            ));
        }
        if window_model.weights.len() != window.width() {
            return Err(Error::ArityMismatch {
                expected: window.width(),
                got: window_model.weights.len(),
            });
        }
        if rescoring_model.weights.len() != CONTINUOUS_ARITY {
            return Err(Error::ArityMismatch {
                expected: CONTINUOUS_ARITY,
                got: rescoring_model.weights.len(),
            });
        }
        Ok(JointModel {
            alpha0: window_model.intercept,
            beta0: window_model.weights.clone(),
            alpha1: rescoring_model.intercept,
            beta1: rescoring_model.weights.clone(),
            window,
            edge,
            borders,
        })
    }

    /// Checks the arity invariants and parameter finiteness.
    pub fn validate(&self) -> Result<()> {
        self.window.validate()?;
        self.borders.validate()?;
        if self.beta0.len() != self.window.width() {
            return Err(Error::ArityMismatch {
                expected: self.window.width(),
                got: self.beta0.len(),
            });
        }
        if self.beta1.len() != CONTINUOUS_ARITY {
            return Err(Error::ArityMismatch {
                expected: CONTINUOUS_ARITY,
                got: self.beta1.len(),
            });
        }
        let finite = self.alpha0.is_finite()
            && self.alpha1.is_finite()
            && self.beta0.iter().all(|w| w.is_finite())
            && self.beta1.iter().all(|w| w.is_finite());
        if !finite {
            return Err(Error::NonFiniteInput { context: "joint model coefficients" });
        }
        Ok(())
    }

    fn window_glm(&self) -> GlmModel<S> {
        GlmModel {
            intercept: self.alpha0,
            weights: self.beta0.clone(),
            recipe: FeatureRecipe::RawWindow,
        }
    }

    fn rescoring_glm(&self) -> GlmModel<S> {
        GlmModel {
            intercept: self.alpha1,
            weights: self.beta1.clone(),
            recipe: FeatureRecipe::ContinuousRescoring,
        }
    }

    /// Window-layer probabilities π̂ for one night.
    pub fn first_stage(&self, night: &EpochSeries<S>) -> Result<Vec<S>> {
        self.validate()?;
        let x = window_matrix(&night.activity, &self.window, self.edge)?;
        self.window_glm().predict(&x)
    }

    /// Final wake probabilities for one night.
    pub fn forward(&self, night: &EpochSeries<S>) -> Result<Vec<S>> {
        Ok(self.night_tape(night)?.output)
    }

    /// Mean negative log-likelihood over every epoch of `nights`.
    pub fn loss(&self, nights: &[EpochSeries<S>]) -> Result<S> {
        let value = self.loss_raw(nights)?;
        if !value.is_finite() {
            return Err(Error::NonFiniteInput { context: "joint model loss" });
        }
        Ok(value)
    }

    /// Gradient of [`JointModel::loss`] with respect to every coefficient.
    pub fn gradient(&self, nights: &[EpochSeries<S>]) -> Result<JointGradient<S>> {
        let (loss, flat) = self.loss_and_gradient_raw(nights)?;
        if !loss.is_finite() || flat.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFiniteInput { context: "joint model gradient" });
        }
        Ok(self.split_flat(&flat))
    }

    /// Forward pass for one night, keeping every intermediate the backward
    /// pass needs.
    fn night_tape(&self, night: &EpochSeries<S>) -> Result<NightTape<S>> {
        self.validate()?;
        let x = window_matrix(&night.activity, &self.window, self.edge)?;
        let pi = self.window_glm().predict(&x)?;
        let seq = ScoreSequence::new(pi, night.epoch_len)?;
        let frame = feature_frame(&seq, &self.borders)?;
        let features = continuous_rescoring_features(&frame);
        let rescoring = self.rescoring_glm();
        let mut linear = Vec::with_capacity(frame.len());
        let mut output = Vec::with_capacity(frame.len());
        for row in features.iter_rows() {
            let a = rescoring.linear(row)?;
            linear.push(a);
            output.push(sigmoid(a));
        }
        Ok(NightTape { x, frame, features, linear, output })
    }

    fn loss_raw(&self, nights: &[EpochSeries<S>]) -> Result<S> {
        if nights.is_empty() {
            return Err(Error::EmptySequence);
        }
        let mut total = S::zero();
        let mut epochs = 0usize;
        for night in nights {
            let labels = night.require_labels()?;
            let tape = self.night_tape(night)?;
            for (&a, &y) in tape.linear.iter().zip(labels) {
                total += softplus(a) - y * a;
            }
            epochs += labels.len();
        }
        Ok(total / S::from_usize(epochs).unwrap())
    }

    /// Loss plus flat gradient `[α0, β0.., α1, β1..]`, without finiteness
    /// checks; the trainer treats non-finite values as divergence.
    fn loss_and_gradient_raw(&self, nights: &[EpochSeries<S>]) -> Result<(S, Vec<S>)> {
        if nights.is_empty() {
            return Err(Error::EmptySequence);
        }
        let mut flat = vec![S::zero(); self.parameter_count()];
        let mut total = S::zero();
        let mut epochs = 0usize;
        for night in nights {
            let labels = night.require_labels()?;
            let tape = self.night_tape(night)?;
            for (&a, &y) in tape.linear.iter().zip(labels) {
                total += softplus(a) - y * a;
            }
            epochs += labels.len();
            self.accumulate_night(&tape, labels, &mut flat);
        }
        let scale = S::one() / S::from_usize(epochs).unwrap();
        for g in &mut flat {
            *g *= scale;
        }
        Ok((total * scale, flat))
    }

    /// Adds one night's unscaled loss gradient into `flat`.
    fn accumulate_night(&self, tape: &NightTape<S>, labels: &[S], flat: &mut [S]) {
        let t_len = tape.frame.len();
        let width = self.window.width();
        let coeff = RecursionCoefficients::for_epoch_len(tape.frame.epoch_len());
        let clamp_lo = real::<S>(PROB_CLAMP);
        let clamp_hi = S::one() - clamp_lo;

        let (head, tail) = flat.split_at_mut(1 + width);
        let (g_alpha0, g_beta0) = head.split_first_mut().unwrap();
        let (g_alpha1, g_beta1) = tail.split_first_mut().unwrap();

        // Output layer: residuals, head gradients, and feature adjoints.
        let mut d_last = vec![[S::zero(); 4]; t_len];
        let mut d_next = vec![[S::zero(); 4]; t_len];
        let mut d_pi = vec![S::zero(); t_len];
        let mut d_z = vec![S::zero(); t_len];
        for t in 0..t_len {
            let residual = tape.output[t] - labels[t];
            let row = tape.features.row(t);
            *g_alpha1 += residual;
            for (g, &f) in g_beta1.iter_mut().zip(row) {
                *g += residual * f;
            }

            // Column 0 is logit(clamp(σ(z))) = z wherever the clamp is
            // inactive, so its adjoint feeds z directly.
            let pi = tape.frame.score(t);
            if pi > clamp_lo && pi < clamp_hi {
                d_z[t] += residual * self.beta1[0];
            }
            // Columns 1..5 are log(1+l), columns 5..9 are log(1+c).
            let last = tape.frame.last(t);
            let next = tape.frame.next(t);
            for i in 0..4 {
                d_last[t][i] += residual * self.beta1[1 + i] / (S::one() + last[i]);
                let d_combined = residual * self.beta1[5 + i] / (S::one() + tape.frame.combined(t)[i]);
                match i {
                    // Current-bout spans are plain sums of the two lags.
                    0 | 1 => {
                        d_last[t][i] += d_combined;
                        d_next[t][i] += d_combined;
                    }
                    // Bordering-bout minima route to whichever side is
                    // smaller, backward side at exact ties.
                    2 => {
                        if last[3] <= next[3] {
                            d_last[t][3] += d_combined;
                        } else {
                            d_next[t][3] += d_combined;
                        }
                    }
                    _ => {
                        if last[2] <= next[2] {
                            d_last[t][2] += d_combined;
                        } else {
                            d_next[t][2] += d_combined;
                        }
                    }
                }
            }
        }

        // Backward-feature chain: l_0 is the start border (constant); for
        // t >= 1, l_t = v0 + π_t v1 + (M0 + π_t M1) l_{t-1}. Adjoints flow
        // from the end of the night toward its start.
        let mut carry = [S::zero(); 4];
        for t in (1..t_len).rev() {
            let mut lambda = d_last[t];
            for i in 0..4 {
                lambda[i] += carry[i];
            }
            let prev = tape.frame.last(t - 1);
            let pi = tape.frame.score(t);
            for i in 0..4 {
                let mut sensitivity = coeff.v1[i];
                for j in 0..4 {
                    sensitivity += coeff.m1[i][j] * prev[j];
                }
                d_pi[t] += lambda[i] * sensitivity;
            }
            let mut next_carry = [S::zero(); 4];
            for j in 0..4 {
                for i in 0..4 {
                    next_carry[j] += (coeff.m0[i][j] + pi * coeff.m1[i][j]) * lambda[i];
                }
            }
            carry = next_carry;
        }

        // Forward-feature chain, mirrored: n_{T-1} is the end border; for
        // t <= T-2, n_t = v0 + π_t v1 + (M0 + π_t M1) n_{t+1}. Adjoints
        // flow from the start of the night toward its end.
        let mut carry = [S::zero(); 4];
        for t in 0..t_len.saturating_sub(1) {
            let mut mu = d_next[t];
            for i in 0..4 {
                mu[i] += carry[i];
            }
            let upcoming = tape.frame.next(t + 1);
            let pi = tape.frame.score(t);
            for i in 0..4 {
                let mut sensitivity = coeff.v1[i];
                for j in 0..4 {
                    sensitivity += coeff.m1[i][j] * upcoming[j];
                }
                d_pi[t] += mu[i] * sensitivity;
            }
            let mut next_carry = [S::zero(); 4];
            for j in 0..4 {
                for i in 0..4 {
                    next_carry[j] += (coeff.m0[i][j] + pi * coeff.m1[i][j]) * mu[i];
                }
            }
            carry = next_carry;
        }

        // Through the sigmoid into the window layer.
        for t in 0..t_len {
            let pi = tape.frame.score(t);
            let dz = d_z[t] + d_pi[t] * pi * (S::one() - pi);
            *g_alpha0 += dz;
            for (g, &x) in g_beta0.iter_mut().zip(tape.x.row(t)) {
                *g += dz * x;
            }
        }
    }

    fn parameter_count(&self) -> usize {
        2 + self.window.width() + CONTINUOUS_ARITY
    }

    fn pack(&self) -> Vec<S> {
        let mut flat = Vec::with_capacity(self.parameter_count());
        flat.push(self.alpha0);
        flat.extend_from_slice(&self.beta0);
        flat.push(self.alpha1);
        flat.extend_from_slice(&self.beta1);
        flat
    }

    fn unpack(&mut self, flat: &[S]) {
        let width = self.beta0.len();
        self.alpha0 = flat[0];
        self.beta0.copy_from_slice(&flat[1..1 + width]);
        self.alpha1 = flat[1 + width];
        self.beta1.copy_from_slice(&flat[2 + width..]);
    }

    fn split_flat(&self, flat: &[S]) -> JointGradient<S> {
        let width = self.beta0.len();
        JointGradient {
            alpha0: flat[0],
            beta0: flat[1..1 + width].to_vec(),
            alpha1: flat[1 + width],
            beta1: flat[2 + width..].to_vec(),
        }
    }
}

/// Per-night forward intermediates kept for the backward pass.
struct NightTape<S> {
    /// Window design matrix (one row per epoch).
    x: Matrix<S>,
    /// Feature frame of the window-layer probability sequence.
    frame: FeatureFrame<S>,
    /// Continuous rescoring features (one row per epoch).
    features: Matrix<S>,
    /// Rescoring-layer linear predictor per epoch.
    linear: Vec<S>,
    /// Final wake probability per epoch.
    output: Vec<S>,
}

/// Loss gradient in the same shape as the model's coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct JointGradient<S> {
    pub alpha0: S,
    pub beta0: Vec<S>,
    pub alpha1: S,
    pub beta1: Vec<S>,
}

/// Mini-batch training settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig<S> {
    /// Minimum number of epochs per batch; whole nights are grouped until
    /// they reach it.
    pub batch_size: usize,
    /// Number of passes over the dataset.
    pub epochs: usize,
    pub learning_rate: S,
    /// Seed for the per-epoch night shuffle.
    pub seed: u64,
}

impl<S: Scalar> Default for TrainConfig<S> {
    fn default() -> Self {
        TrainConfig { batch_size: 100, epochs: 20, learning_rate: real(1e-3), seed: 0 }
    }
}

impl<S: Scalar> TrainConfig<S> {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be at least 1".into()));
        }
        if self.epochs == 0 {
            return Err(Error::InvalidConfig("epochs must be at least 1".into()));
        }
        if !(self.learning_rate >= S::zero()) || !self.learning_rate.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "learning_rate must be finite and nonnegative, got {}",
                self.learning_rate
            )));
        }
        Ok(())
    }
}

/// A finished (or last finite) training state: the model and the loss
/// trace, whose first entry is the pre-training loss and whose k-th entry
/// is the full-dataset loss after training epoch k.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome<S> {
    pub model: JointModel<S>,
    pub trace: Vec<S>,
}

/// Why training stopped without a usable final model.
#[derive(Debug, Clone, PartialEq)]
pub enum TrainError<S> {
    /// Invalid inputs or configuration, before or during training.
    Domain(Error),
    /// The loss or gradient became non-finite; `last` holds the most
    /// recent finite model and the loss trace up to that point, and
    /// `at_epoch` the zero-based training epoch where divergence appeared.
    Diverged { last: TrainOutcome<S>, at_epoch: usize },
}

impl<S> From<Error> for TrainError<S> {
    fn from(e: Error) -> Self {
        TrainError::Domain(e)
    }
}

impl<S: Scalar> From<TrainError<S>> for Error {
    fn from(e: TrainError<S>) -> Self {
        match e {
            TrainError::Domain(e) => e,
            TrainError::Diverged { at_epoch, .. } => Error::DidNotConverge { iterations: at_epoch },
        }
    }
}

impl<S: Scalar> fmt::Display for TrainError<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TrainError::Domain(e) => e.fmt(f),
            TrainError::Diverged { at_epoch, .. } => {
                write!(f, "training diverged during epoch {}", at_epoch + 1)
            }
        }
    }
}

impl<S: Scalar> std::error::Error for TrainError<S> {}

/// Groups night indices (in the given order) into batches of whole nights
/// holding at least `batch_size` epochs each; the final batch may be
/// smaller.
fn plan_batches(epochs_per_night: &[usize], batch_size: usize) -> Vec<Vec<usize>> {
    let mut batches = Vec::new();
    let mut current = Vec::new();
    let mut count = 0usize;
    for (index, &epochs) in epochs_per_night.iter().enumerate() {
        current.push(index);
        count += epochs;
        if count >= batch_size {
            batches.push(std::mem::take(&mut current));
            count = 0;
        }
    }
    if !current.is_empty() {
        batches.push(current);
    }
    batches
}

/// Trains `model` on labeled nights by mini-batch adaptive-moment descent.
///
/// Deterministic given the seed: nights are reshuffled once per training
/// epoch with a seeded generator and batches are reduced in shuffle order.
/// The returned trace has `config.epochs + 1` entries, starting with the
/// initial loss.
pub fn train<S: Scalar>(
    model: &JointModel<S>,
    nights: &[EpochSeries<S>],
    config: &TrainConfig<S>,
) -> std::result::Result<TrainOutcome<S>, TrainError<S>> {
    config.validate()?;
    model.validate()?;
    if nights.is_empty() {
        return Err(TrainError::Domain(Error::EmptySequence));
    }
    for night in nights {
        night.require_labels()?;
    }

    let decay1 = real::<S>(MOMENT_DECAY_1);
    let decay2 = real::<S>(MOMENT_DECAY_2);
    let eps = real::<S>(MOMENT_EPS);

    let mut current = model.clone();
    let mut theta = current.pack();
    let mut moment1 = vec![S::zero(); theta.len()];
    let mut moment2 = vec![S::zero(); theta.len()];
    let mut steps = 0u32;

    let mut trace = vec![current.loss(nights).map_err(TrainError::Domain)?];
    let mut rng = ChaCha20Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..nights.len()).collect();
    let mut batch_nights: Vec<EpochSeries<S>> = Vec::new();

    let diverged = |current: &JointModel<S>, trace: &[S], at_epoch: usize| TrainError::Diverged {
        last: TrainOutcome { model: current.clone(), trace: trace.to_vec() },
        at_epoch,
    };
    // The nights were validated before the loop, so a mid-training
    // complaint about non-finite values or out-of-range probabilities can
    // only come from the current iterate: that is divergence, not bad
    // input.
    let blew_up = |e: &Error| {
        matches!(e, Error::NonFiniteInput { .. } | Error::ScoreOutOfRange { .. })
    };

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let lengths: Vec<usize> = order.iter().map(|&i| nights[i].len()).collect();
        for batch in plan_batches(&lengths, config.batch_size) {
            batch_nights.clear();
            batch_nights.extend(batch.iter().map(|&slot| nights[order[slot]].clone()));
            let (loss, gradient) = match current.loss_and_gradient_raw(&batch_nights) {
                Ok(pair) => pair,
                Err(e) if blew_up(&e) => return Err(diverged(&current, &trace, epoch)),
                Err(e) => return Err(TrainError::Domain(e)),
            };
            if !loss.is_finite() || gradient.iter().any(|g| !g.is_finite()) {
                return Err(diverged(&current, &trace, epoch));
            }
            steps += 1;
            let correction1 = S::one() - decay1.powi(steps as i32);
            let correction2 = S::one() - decay2.powi(steps as i32);
            let mut finite = true;
            for (((t, g), m1), m2) in
                theta.iter_mut().zip(&gradient).zip(&mut moment1).zip(&mut moment2)
            {
                *m1 = decay1 * *m1 + (S::one() - decay1) * *g;
                *m2 = decay2 * *m2 + (S::one() - decay2) * *g * *g;
                let step = (*m1 / correction1) / ((*m2 / correction2).sqrt() + eps);
                *t -= config.learning_rate * step;
                finite &= t.is_finite();
            }
            if !finite {
                return Err(diverged(&current, &trace, epoch));
            }
            current.unpack(&theta);
        }
        let epoch_loss = match current.loss_raw(nights) {
            Ok(loss) => loss,
            Err(e) if blew_up(&e) => return Err(diverged(&current, &trace, epoch)),
            Err(e) => return Err(TrainError::Domain(e)),
        };
        if !epoch_loss.is_finite() {
            return Err(diverged(&current, &trace, epoch));
        }
        trace.push(epoch_loss);
    }
    Ok(TrainOutcome { model: current, trace })
}
