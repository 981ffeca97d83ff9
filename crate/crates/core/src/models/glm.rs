//! L2-penalized logistic regression fit by iteratively reweighted least
//! squares.
//!
//! The fitter maximizes the Bernoulli log-likelihood minus `l2/2 · ‖w‖²`,
//! with the intercept left unpenalized. Newton steps are solved with a
//! Cholesky factorization and halved until they improve the objective;
//! convergence is declared when the gradient norm falls below `1e-8`
//! relative to its starting value.
//!
//! With `l2 = 0` and linearly separable data the maximizer does not exist
//! (weights diverge), so that case is detected — every training point
//! classified to within `1e-6` of its label — and reported as
//! nonconvergence rather than returning arbitrarily large weights.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::{cholesky_solve, sigmoid, softplus, Matrix, Scalar};

const GRADIENT_TOL: f64 = 1e-8;
const MAX_ITERATIONS: usize = 100;
const SEPARATION_MARGIN: f64 = 1e-6;

/// How a model's input rows are constructed; stored with the model so
/// scoring code can rebuild the same inputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureRecipe {
    /// Raw activity counts in a moving window around the epoch.
    RawWindow,
    /// Log-odds of the upstream probability plus log(1+·)-transformed
    /// backward and combined bout features of that probability sequence.
    ContinuousRescoring,
    /// Upstream probability plus untransformed bout features of the
    /// thresholded (binary) sequence.
    BinaryRescoring,
}

/// Logistic regression coefficients plus the recipe of their inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlmModel<S> {
    pub intercept: S,
    pub weights: Vec<S>,
    pub recipe: FeatureRecipe,
}

impl<S: Scalar> GlmModel<S> {
    /// Linear predictor for one input row.
    pub fn linear(&self, row: &[S]) -> Result<S> {
        if row.len() != self.weights.len() {
            return Err(Error::ArityMismatch { expected: self.weights.len(), got: row.len() });
        }
        let mut z = self.intercept;
        for (w, x) in self.weights.iter().zip(row) {
            z += *w * *x;
        }
        Ok(z)
    }

    /// Probability of the positive class for one input row.
    pub fn predict_row(&self, row: &[S]) -> Result<S> {
        Ok(sigmoid(self.linear(row)?))
    }

    /// Probability of the positive class for every row.
    pub fn predict(&self, features: &Matrix<S>) -> Result<Vec<S>> {
        features.iter_rows().map(|r| self.predict_row(r)).collect()
    }
}

fn validate_inputs<S: Scalar>(features: &Matrix<S>, labels: &[S], l2: S) -> Result<()> {
    if features.rows() != labels.len() {
        return Err(Error::LengthMismatch { left: features.rows(), right: labels.len() });
    }
    if labels.is_empty() {
        return Err(Error::EmptySequence);
    }
    if !(l2 >= S::zero()) || !l2.is_finite() {
        return Err(Error::InvalidConfig(format!("l2 penalty must be finite and ≥ 0, got {l2}")));
    }
    for (i, &y) in labels.iter().enumerate() {
        if !(y == S::zero() || y == S::one()) {
            return Err(Error::NonBinaryScore { index: i, value: y.to_f64().unwrap_or(f64::NAN) });
        }
    }
    if features.iter_rows().any(|r| r.iter().any(|v| !v.is_finite())) {
        return Err(Error::NonFiniteInput { context: "model features".into() });
    }
    Ok(())
}

/// Penalized log-likelihood at parameters `theta` = (intercept, weights).
fn objective<S: Scalar>(features: &Matrix<S>, labels: &[S], l2: S, theta: &[S]) -> S {
    let mut ll = S::zero();
    for (row, &y) in features.iter_rows().zip(labels) {
        let mut eta = theta[0];
        for (w, x) in theta[1..].iter().zip(row) {
            eta += *w * *x;
        }
        ll += y * eta - softplus(eta);
    }
    let mut penalty = S::zero();
    for w in &theta[1..] {
        penalty += *w * *w;
    }
    ll - l2 * penalty / (S::one() + S::one())
}

/// Fits a logistic regression with ridge penalty `l2` on the weights.
pub fn fit_glm<S: Scalar>(
    features: &Matrix<S>,
    labels: &[S],
    l2: S,
    recipe: FeatureRecipe,
) -> Result<GlmModel<S>> {
    validate_inputs(features, labels, l2)?;
    let first = labels[0];
    if l2 == S::zero() && labels.iter().all(|&y| y == first) {
        return Err(Error::SingleClassLabels);
    }

    let n = features.rows();
    let k = features.cols();
    let d = k + 1;
    let margin = S::from_f64(SEPARATION_MARGIN).unwrap();

    let mut theta = vec![S::zero(); d];
    let mut grad = vec![S::zero(); d];
    let mut grad0_norm: Option<S> = None;
    let mut probs = vec![S::zero(); n];

    for iteration in 0..MAX_ITERATIONS {
        for (p, row) in probs.iter_mut().zip(features.iter_rows()) {
            let mut eta = theta[0];
            for (w, x) in theta[1..].iter().zip(row) {
                eta += *w * *x;
            }
            *p = sigmoid(eta);
        }

        // Gradient of the penalized log-likelihood.
        for g in grad.iter_mut() {
            *g = S::zero();
        }
        for ((row, &y), &p) in features.iter_rows().zip(labels).zip(&probs) {
            let r = y - p;
            grad[0] += r;
            for (g, x) in grad[1..].iter_mut().zip(row) {
                *g += r * *x;
            }
        }
        for (g, w) in grad[1..].iter_mut().zip(&theta[1..]) {
            *g -= l2 * *w;
        }

        let gnorm = grad.iter().map(|&g| g * g).sum::<S>().sqrt();
        let reference = *grad0_norm.get_or_insert(gnorm);
        if l2 == S::zero() {
            let separated = labels.iter().zip(&probs).all(|(&y, &p)| {
                if y == S::one() { p >= S::one() - margin } else { p <= margin }
            });
            if separated {
                return Err(Error::DidNotConverge { iterations: iteration });
            }
        }
        if gnorm <= real_tol::<S>() * S::one().max(reference) {
            return Ok(GlmModel { intercept: theta[0], weights: theta[1..].to_vec(), recipe });
        }

        // Newton system: (Xᵀ diag(p(1-p)) X + diag(0, l2…)) δ = gradient,
        // on the intercept-augmented design.
        let mut hess = Matrix::zeros(d, d);
        for (row, &p) in features.iter_rows().zip(&probs) {
            let s = p * (S::one() - p);
            hess.row_mut(0)[0] += s;
            for (j, &xj) in row.iter().enumerate() {
                hess.row_mut(0)[j + 1] += s * xj;
                let sxj = s * xj;
                for (j2, &x2) in row.iter().enumerate().skip(j) {
                    hess.row_mut(j + 1)[j2 + 1] += sxj * x2;
                }
            }
        }
        for j in 1..d {
            hess.row_mut(j)[j] += l2;
            for j2 in j + 1..d {
                let v = hess.row(j)[j2];
                hess.row_mut(j2)[j] = v;
            }
        }
        for j in 1..d {
            let v = hess.row(0)[j];
            hess.row_mut(j)[0] = v;
        }

        let delta = cholesky_solve(&hess, &grad)
            .ok_or(Error::DidNotConverge { iterations: iteration })?;

        // Halve the step until the objective strictly improves; when no
        // scale improves it the iterate is at the arithmetic optimum.
        let current = objective(features, labels, l2, &theta);
        let mut scale = S::one();
        let mut accepted = false;
        for _ in 0..40 {
            let trial: Vec<S> =
                theta.iter().zip(&delta).map(|(&t, &dl)| t + scale * dl).collect();
            if objective(features, labels, l2, &trial) > current {
                theta = trial;
                accepted = true;
                break;
            }
            scale /= S::one() + S::one();
        }
        if !accepted {
            // No improving step along the Newton direction: treat the
            // current point as converged as far as the arithmetic allows.
            return Ok(GlmModel { intercept: theta[0], weights: theta[1..].to_vec(), recipe });
        }
    }
    Err(Error::DidNotConverge { iterations: MAX_ITERATIONS })
}

fn real_tol<S: Scalar>() -> S {
    S::from_f64(GRADIENT_TOL).unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn column(values: &[f64]) -> Matrix<f64> {
        Matrix::from_rows(&values.iter().map(|&v| vec![v]).collect::<Vec<_>>())
    }

    #[test]
    fn symmetric_two_point_problem_has_zero_intercept() {
        let x = column(&[-1.0, 1.0]);
        let model = fit_glm(&x, &[0.0, 1.0], 0.1, FeatureRecipe::RawWindow).unwrap();
        assert!(model.weights[0] > 0.0);
        assert!(model.intercept.abs() < 1e-10);
    }

    #[test]
    fn zero_features_and_balanced_labels_give_the_null_model() {
        let x = Matrix::<f64>::zeros(4, 2);
        let model =
            fit_glm(&x, &[0.0, 1.0, 0.0, 1.0], 1e-6, FeatureRecipe::RawWindow).unwrap();
        assert!(model.intercept.abs() < 1e-10);
        assert!(model.weights.iter().all(|w| w.abs() < 1e-10));
    }

    #[test]
    fn recovers_known_coefficients_at_scale() {
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        let (alpha, beta) = (0.3, [1.0, -2.0]);
        let n = 50_000;
        let mut rows = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        for _ in 0..n {
            let x1: f64 = StandardNormal.sample(&mut rng);
            let x2: f64 = StandardNormal.sample(&mut rng);
            let p = sigmoid(alpha + beta[0] * x1 + beta[1] * x2);
            labels.push(if rng.gen::<f64>() < p { 1.0 } else { 0.0 });
            rows.push(vec![x1, x2]);
        }
        let model =
            fit_glm(&Matrix::from_rows(&rows), &labels, 1e-6, FeatureRecipe::RawWindow).unwrap();
        assert!((model.intercept - alpha).abs() / alpha.abs() < 0.05);
        assert!((model.weights[0] - beta[0]).abs() / beta[0].abs() < 0.05);
        assert!((model.weights[1] - beta[1]).abs() / beta[1].abs() < 0.05);
    }

    #[test]
    fn separable_data_without_ridge_does_not_converge() {
        let x = column(&[-1.0, 1.0]);
        assert!(matches!(
            fit_glm(&x, &[0.0, 1.0], 0.0, FeatureRecipe::RawWindow),
            Err(Error::DidNotConverge { .. })
        ));
    }

    #[test]
    fn single_class_labels_without_ridge_are_rejected() {
        let x = column(&[0.5, 1.5]);
        assert!(matches!(
            fit_glm(&x, &[1.0, 1.0], 0.0, FeatureRecipe::RawWindow),
            Err(Error::SingleClassLabels)
        ));
    }

    #[test]
    fn single_class_labels_with_ridge_saturate_the_intercept() {
        let x = column(&[0.5, 1.5, -0.5]);
        let model = fit_glm(&x, &[1.0, 1.0, 1.0], 1e-4, FeatureRecipe::RawWindow).unwrap();
        assert!(model.intercept > 5.0);
    }

    #[test]
    fn rescaling_features_rescales_weights_inversely() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let xs: Vec<f64> = (0..80).map(|_| StandardNormal.sample(&mut rng)).collect();
        let labels: Vec<f64> = xs
            .iter()
            .map(|&x| {
                let flip = rng.gen::<f64>() < 0.2;
                let base = if x > 0.0 { 1.0 } else { 0.0 };
                if flip { 1.0 - base } else { base }
            })
            .collect();
        let doubled: Vec<f64> = xs.iter().map(|&x| 2.0 * x).collect();
        let m1 = fit_glm(&column(&xs), &labels, 0.0, FeatureRecipe::RawWindow).unwrap();
        let m2 = fit_glm(&column(&doubled), &labels, 0.0, FeatureRecipe::RawWindow).unwrap();
        assert!((m2.weights[0] - m1.weights[0] / 2.0).abs() < 1e-6);
        let p1 = m1.predict(&column(&xs)).unwrap();
        let p2 = m2.predict(&column(&doubled)).unwrap();
        for (a, b) in p1.iter().zip(&p2) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn rejects_nan_features() {
        let x = column(&[0.0, f64::NAN]);
        assert!(matches!(
            fit_glm(&x, &[0.0, 1.0], 0.1, FeatureRecipe::RawWindow),
            Err(Error::NonFiniteInput { .. })
        ));
    }

    #[test]
    fn predictions_stay_in_the_unit_interval() {
        let model = GlmModel {
            intercept: 3.0,
            weights: vec![50.0, -80.0],
            recipe: FeatureRecipe::RawWindow,
        };
        for row in [[100.0, 0.0], [0.0, 100.0], [1.0, 1.0]] {
            let p = model.predict_row(&row).unwrap();
            assert!((0.0..=1.0).contains(&p));
        }
    }

    #[test]
    fn class_from_probability_matches_sign_of_linear_score() {
        let model = GlmModel {
            intercept: -0.3,
            weights: vec![1.2, -0.7],
            recipe: FeatureRecipe::RawWindow,
        };
        for row in [[0.1, 0.4], [2.0, 0.3], [-1.0, -2.0], [0.25, 0.0]] {
            let z = model.linear(&row).unwrap();
            let p = model.predict_row(&row).unwrap();
            assert_eq!(p >= 0.5, z >= 0.0);
        }
    }

    #[test]
    fn arity_mismatch_is_reported() {
        let model =
            GlmModel { intercept: 0.0, weights: vec![1.0, 2.0], recipe: FeatureRecipe::RawWindow };
        assert!(matches!(
            model.predict_row(&[1.0]),
            Err(Error::ArityMismatch { expected: 2, got: 1 })
        ));
    }
}
