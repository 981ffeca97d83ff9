//! The method roster as runnable pipelines: fitting, saving, scoring, and
//! cross-validated comparison.
//!
//! Every method shares the same first stage — a windowed logistic
//! regression on activity — and differs in what happens to its
//! probabilities: nothing (`glm-window`), a second regression on
//! continuous bout features (`glm-continuous`) or on binarized bout
//! features (`glm-binary`), classic rescoring rules on the thresholded
//! sequence (`webster`), a rule tree on the thresholded sequence's bout
//! features (`tree`), or joint gradient refinement of both layers
//! (`rescore-nn`).
//!
//! [`evaluate_methods`] runs the comparison the honest way: one
//! participant-level fold plan shared by every method, the first-stage
//! fit shared by every method within a fold, scores pooled over held-out
//! folds only.
//!
//! This module is deliberately concrete over `f64`: it is orchestration,
//! not numerics.

use std::fmt;
use std::io;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::EpochSeries;
use crate::error::{Error, Result};
use crate::eval::{default_threshold_grid, plan_folds, roc, roc_webster, RocCurve};
use crate::features::{edge_adjacent_borders, feature_frame, BorderValues, ScoreSequence};
use crate::joint::{train, JointModel, TrainConfig};
use crate::models::{
    binary_rescoring_features, continuous_rescoring_features, fit_glm, fit_sequential, fit_tree,
    threshold_sequence, window_matrix, EdgeMode, FeatureRecipe, GlmModel, RuleTree,
    SequentialMode, WindowSpec,
};
use crate::webster::{apply_webster, RuleParams};
use crate::Real;

/// The classifier roster.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Windowed logistic regression on raw activity.
    GlmWindow,
    /// Second-stage regression on continuous bout features of the
    /// first-stage probabilities.
    GlmContinuous,
    /// Second-stage regression on bout features of the thresholded
    /// first-stage sequence.
    GlmBinary,
    /// Classic rescoring rules applied to the thresholded first-stage
    /// sequence.
    Webster,
    /// Rule tree on bout features of the thresholded first-stage
    /// sequence.
    Tree,
    /// Both layers trained jointly by gradient descent.
    RescoreNn,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::GlmWindow,
        Method::GlmContinuous,
        Method::GlmBinary,
        Method::Webster,
        Method::Tree,
        Method::RescoreNn,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::GlmWindow => "glm-window",
            Method::GlmContinuous => "glm-continuous",
            Method::GlmBinary => "glm-binary",
            Method::Webster => "webster",
            Method::Tree => "tree",
            Method::RescoreNn => "rescore-nn",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown method {s:?}")))
    }
}

/// Shorthand used in tables and file names, e.g. `-5..2`.
pub fn window_label(window: &WindowSpec) -> String {
    format!("{}..{}", window.past, window.future)
}

/// Everything a fit needs beyond the dataset.
#[derive(Debug, Clone)]
pub struct FitSettings {
    pub window: WindowSpec,
    pub edge: EdgeMode,
    /// Borders for the feature recursions; `None` derives edge-adjacent
    /// borders from the dataset's epoch length.
    pub borders: Option<BorderValues<Real>>,
    /// Ridge strength for both regression stages.
    pub l2: Real,
    /// Rule constants for the `webster` method.
    pub rule_params: RuleParams<Real>,
    pub tree_max_depth: usize,
    pub tree_min_leaf: usize,
    /// Optimizer settings for the `rescore-nn` method.
    pub train: TrainConfig<Real>,
    /// Saved `glm-continuous` model to initialize `rescore-nn` from; its
    /// embedded window, edge mode, and borders take precedence.
    pub init_from: Option<SavedModel>,
}

impl Default for FitSettings {
    fn default() -> Self {
        FitSettings {
            window: WindowSpec { past: -5, future: 2 },
            edge: EdgeMode::default(),
            borders: None,
            l2: 1e-4,
            rule_params: RuleParams::default(),
            tree_max_depth: 3,
            tree_min_leaf: 20,
            train: TrainConfig::default(),
            init_from: None,
        }
    }
}

/// A fitted classifier with everything needed to score new nights,
/// serialized as tagged JSON (`"type": "glm-window"` and so on).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum SavedModel {
    GlmWindow {
        window: WindowSpec,
        edge: EdgeMode,
        model: GlmModel<Real>,
    },
    GlmContinuous {
        window: WindowSpec,
        edge: EdgeMode,
        borders: BorderValues<Real>,
        window_model: GlmModel<Real>,
        rescoring: GlmModel<Real>,
    },
    GlmBinary {
        window: WindowSpec,
        edge: EdgeMode,
        borders: BorderValues<Real>,
        window_model: GlmModel<Real>,
        rescoring: GlmModel<Real>,
    },
    Webster {
        params: RuleParams<Real>,
    },
    Tree {
        window: WindowSpec,
        edge: EdgeMode,
        borders: BorderValues<Real>,
        window_model: GlmModel<Real>,
        tree: RuleTree<Real>,
    },
    RescoreNn {
        model: JointModel<Real>,
    },
}

impl SavedModel {
    pub fn method(&self) -> Method {
        match self {
            SavedModel::GlmWindow { .. } => Method::GlmWindow,
            SavedModel::GlmContinuous { .. } => Method::GlmContinuous,
            SavedModel::GlmBinary { .. } => Method::GlmBinary,
            SavedModel::Webster { .. } => Method::Webster,
            SavedModel::Tree { .. } => Method::Tree,
            SavedModel::RescoreNn { .. } => Method::RescoreNn,
        }
    }

    /// Checks internal consistency (window widths, borders, rule
    /// constants) without touching any data.
    pub fn validate(&self) -> Result<()> {
        match self {
            SavedModel::GlmWindow { window, model, .. } => {
                window.validate()?;
                expect_arity(model, FeatureRecipe::RawWindow, window.width())
            }
            SavedModel::GlmContinuous { window, borders, window_model, rescoring, .. } => {
                window.validate()?;
                borders.validate()?;
                expect_arity(window_model, FeatureRecipe::RawWindow, window.width())?;
                expect_arity(
                    rescoring,
                    FeatureRecipe::ContinuousRescoring,
                    crate::models::CONTINUOUS_ARITY,
                )
            }
            SavedModel::GlmBinary { window, borders, window_model, rescoring, .. } => {
                window.validate()?;
                borders.validate()?;
                expect_arity(window_model, FeatureRecipe::RawWindow, window.width())?;
                expect_arity(
                    rescoring,
                    FeatureRecipe::BinaryRescoring,
                    crate::models::BINARY_ARITY,
                )
            }
            SavedModel::Webster { params } => params.validate(),
            SavedModel::Tree { window, borders, window_model, tree, .. } => {
                window.validate()?;
                borders.validate()?;
                expect_arity(window_model, FeatureRecipe::RawWindow, window.width())?;
                if tree.n_features != crate::features::columns::COUNT {
                    return Err(Error::ArityMismatch {
                        expected: crate::features::columns::COUNT,
                        got: tree.n_features,
                    });
                }
                Ok(())
            }
            SavedModel::RescoreNn { model } => model.validate(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self)
            .map_err(|e| Error::InvalidConfig(format!("cannot serialize model: {e}")))
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let model: SavedModel = serde_json::from_str(json)
            .map_err(|e| Error::InvalidConfig(format!("bad model file: {e}")))?;
        model.validate()?;
        Ok(model)
    }
}

fn expect_arity(model: &GlmModel<Real>, recipe: FeatureRecipe, arity: usize) -> Result<()> {
    if model.recipe != recipe {
        return Err(Error::InvalidConfig(format!(
            "model carries feature recipe {:?}, expected {recipe:?}",
            model.recipe
        )));
    }
    if model.weights.len() != arity {
        return Err(Error::ArityMismatch { expected: arity, got: model.weights.len() });
    }
    if !model.intercept.is_finite() || model.weights.iter().any(|w| !w.is_finite()) {
        return Err(Error::NonFiniteInput { context: "model coefficients" });
    }
    Ok(())
}

/// A fit result: the model plus, for iteratively trained methods, the
/// per-epoch loss trace.
#[derive(Debug, Clone, PartialEq)]
pub struct FitArtifacts {
    pub model: SavedModel,
    /// Full-dataset loss before training and after each pass; only the
    /// `rescore-nn` method produces one.
    pub train_trace: Option<Vec<Real>>,
}

/// The single epoch length shared by every night, or an error: bout
/// features are measured in minutes, so mixing epoch lengths inside one
/// fit would silently mix scales.
fn uniform_epoch_len(nights: &[EpochSeries<Real>]) -> Result<Real> {
    let first = nights.first().ok_or(Error::EmptySequence)?.epoch_len;
    for night in nights {
        if night.epoch_len != first {
            return Err(Error::InvalidConfig(format!(
                "nights mix epoch lengths {first} and {} (night {})",
                night.epoch_len, night.participant_id
            )));
        }
    }
    Ok(first)
}

fn resolve_borders(
    requested: &Option<BorderValues<Real>>,
    epoch_len: Real,
) -> BorderValues<Real> {
    match requested {
        Some(b) => b.clone(),
        None => edge_adjacent_borders(epoch_len),
    }
}

/// Fits the first-stage windowed regression on every epoch of `nights`.
fn fit_window_glm(
    nights: &[EpochSeries<Real>],
    window: &WindowSpec,
    edge: EdgeMode,
    l2: Real,
) -> Result<GlmModel<Real>> {
    let mut design = crate::num::Matrix::zeros(0, window.width());
    let mut labels: Vec<Real> = Vec::new();
    for night in nights {
        let x = window_matrix(&night.activity, window, edge)?;
        for row in x.iter_rows() {
            design.push_row(row);
        }
        labels.extend_from_slice(night.require_labels()?);
    }
    fit_glm(&design, &labels, l2, FeatureRecipe::RawWindow)
}

/// First-stage probabilities for one night.
fn stage_one(
    model: &GlmModel<Real>,
    night: &EpochSeries<Real>,
    window: &WindowSpec,
    edge: EdgeMode,
) -> Result<ScoreSequence<Real>> {
    let x = window_matrix(&night.activity, window, edge)?;
    ScoreSequence::new(model.predict(&x)?, night.epoch_len)
}

/// First-stage probabilities paired with labels for many nights.
fn stage_one_pairs(
    model: &GlmModel<Real>,
    nights: &[EpochSeries<Real>],
    window: &WindowSpec,
    edge: EdgeMode,
) -> Result<Vec<(ScoreSequence<Real>, Vec<Real>)>> {
    nights
        .iter()
        .map(|night| {
            Ok((stage_one(model, night, window, edge)?, night.require_labels()?.to_vec()))
        })
        .collect()
}

/// Stacked 13-column bout-feature rows of the thresholded first-stage
/// sequences, with their labels; the tree method trains and predicts on
/// these.
fn tree_design(
    pairs: &[(ScoreSequence<Real>, Vec<Real>)],
    borders: &BorderValues<Real>,
) -> Result<(crate::num::Matrix<Real>, Vec<Real>)> {
    let mut design = crate::num::Matrix::zeros(0, crate::features::columns::COUNT);
    let mut labels = Vec::new();
    for (probs, night_labels) in pairs {
        let frame = feature_frame(&threshold_sequence(probs), borders)?;
        let rows = frame.rows_matrix();
        for t in 0..rows.rows() {
            design.push_row(rows.row(t));
        }
        labels.extend_from_slice(night_labels);
    }
    Ok((design, labels))
}

/// Fits one method on labeled nights.
///
/// The `webster` method performs no fitting — it packages the configured
/// rule constants — and is the only method that accepts an empty dataset.
pub fn fit_method(
    method: Method,
    nights: &[EpochSeries<Real>],
    settings: &FitSettings,
) -> Result<FitArtifacts> {
    settings.window.validate()?;
    if method == Method::Webster {
        settings.rule_params.validate()?;
        return Ok(FitArtifacts {
            model: SavedModel::Webster { params: settings.rule_params.clone() },
            train_trace: None,
        });
    }
    let epoch_len = uniform_epoch_len(nights)?;
    let borders = resolve_borders(&settings.borders, epoch_len);
    let model = match method {
        Method::GlmWindow => {
            let model = fit_window_glm(nights, &settings.window, settings.edge, settings.l2)?;
            SavedModel::GlmWindow { window: settings.window, edge: settings.edge, model }
        }
        Method::GlmContinuous | Method::GlmBinary => {
            let window_model =
                fit_window_glm(nights, &settings.window, settings.edge, settings.l2)?;
            let pairs = stage_one_pairs(&window_model, nights, &settings.window, settings.edge)?;
            let mode = if method == Method::GlmContinuous {
                SequentialMode::Continuous
            } else {
                SequentialMode::Binary
            };
            let rescoring = fit_sequential(&pairs, mode, &borders, settings.l2)?;
            if method == Method::GlmContinuous {
                SavedModel::GlmContinuous {
                    window: settings.window,
                    edge: settings.edge,
                    borders,
                    window_model,
                    rescoring,
                }
            } else {
                SavedModel::GlmBinary {
                    window: settings.window,
                    edge: settings.edge,
                    borders,
                    window_model,
                    rescoring,
                }
            }
        }
        Method::Tree => {
            let window_model =
                fit_window_glm(nights, &settings.window, settings.edge, settings.l2)?;
            let pairs = stage_one_pairs(&window_model, nights, &settings.window, settings.edge)?;
            let (design, labels) = tree_design(&pairs, &borders)?;
            let tree =
                fit_tree(&design, &labels, settings.tree_max_depth, settings.tree_min_leaf)?;
            SavedModel::Tree {
                window: settings.window,
                edge: settings.edge,
                borders,
                window_model,
                tree,
            }
        }
        Method::RescoreNn => {
            let initial = match &settings.init_from {
                Some(SavedModel::GlmContinuous {
                    window,
                    edge,
                    borders,
                    window_model,
                    rescoring,
                }) => JointModel::from_sequential(
                    window_model,
                    rescoring,
                    *window,
                    *edge,
                    borders.clone(),
                )?,
                Some(other) => {
                    return Err(Error::InvalidConfig(format!(
                        "rescore-nn can only initialize from a glm-continuous model, got {}",
                        other.method()
                    )));
                }
                None => JointModel::zeros(settings.window, settings.edge, borders)?,
            };
            let outcome = train(&initial, nights, &settings.train).map_err(Error::from)?;
            return Ok(FitArtifacts {
                model: SavedModel::RescoreNn { model: outcome.model },
                train_trace: Some(outcome.trace),
            });
        }
        Method::Webster => unreachable!("handled above"),
    };
    Ok(FitArtifacts { model, train_trace: None })
}

/// Wake scores for every night under a saved model, one vector per night.
///
/// Regression methods return probabilities; the tree returns leaf
/// probabilities; `webster` reads each night's label column as the
/// sleep-wake scoring to rescore and returns the rescored 0/1 sequence.
pub fn score_nights(
    saved: &SavedModel,
    nights: &[EpochSeries<Real>],
) -> Result<Vec<Vec<Real>>> {
    saved.validate()?;
    nights
        .iter()
        .map(|night| match saved {
            SavedModel::GlmWindow { window, edge, model } => {
                Ok(stage_one(model, night, window, *edge)?.values().to_vec())
            }
            SavedModel::GlmContinuous { window, edge, borders, window_model, rescoring } => {
                let probs = stage_one(window_model, night, window, *edge)?;
                let features = continuous_rescoring_features(&feature_frame(&probs, borders)?);
                rescoring.predict(&features)
            }
            SavedModel::GlmBinary { window, edge, borders, window_model, rescoring } => {
                let probs = stage_one(window_model, night, window, *edge)?;
                let features = binary_rescoring_features(&probs, borders)?;
                rescoring.predict(&features)
            }
            SavedModel::Webster { params } => {
                let labels = night.require_labels()?;
                let seq = ScoreSequence::new(labels.to_vec(), night.epoch_len)?;
                Ok(apply_webster(&seq, params, None)?.rescored().to_vec())
            }
            SavedModel::Tree { window, edge, borders, window_model, tree } => {
                let probs = stage_one(window_model, night, window, *edge)?;
                let frame = feature_frame(&threshold_sequence(&probs), borders)?;
                tree.predict(&frame.rows_matrix())
            }
            SavedModel::RescoreNn { model } => model.forward(night),
        })
        .collect()
}

/// Settings for a cross-validated method comparison.
#[derive(Debug, Clone)]
pub struct EvaluateConfig {
    pub methods: Vec<Method>,
    pub windows: Vec<WindowSpec>,
    /// Fold count.
    pub k: usize,
    /// Seed for the fold plan.
    pub seed: u64,
    pub edge: EdgeMode,
    /// Ridge strength for both regression stages.
    pub l2: Real,
    /// Rule constants for the `webster` sweep.
    pub rule_params: RuleParams<Real>,
    /// Thresholds for the `webster` sweep.
    pub threshold_grid: Vec<Real>,
    pub tree_max_depth: usize,
    pub tree_min_leaf: usize,
    /// Optimizer settings for `rescore-nn`.
    pub train: TrainConfig<Real>,
}

impl Default for EvaluateConfig {
    fn default() -> Self {
        EvaluateConfig {
            methods: Method::ALL.to_vec(),
            windows: vec![
                WindowSpec { past: -5, future: 2 },
                WindowSpec { past: -10, future: 5 },
                WindowSpec { past: -30, future: 20 },
            ],
            k: 5,
            seed: 0,
            edge: EdgeMode::default(),
            l2: 1e-4,
            rule_params: RuleParams::default(),
            threshold_grid: default_threshold_grid(),
            tree_max_depth: 3,
            tree_min_leaf: 20,
            train: TrainConfig::default(),
        }
    }
}

/// One pooled held-out curve.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodScore {
    pub method: Method,
    pub window: WindowSpec,
    pub curve: RocCurve<Real>,
}

/// All pooled curves from one comparison run, in (window, method) order.
#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationReport {
    pub entries: Vec<MethodScore>,
}

impl EvaluationReport {
    /// Writes the summary table: one `method,window,auc` row per entry.
    pub fn write_auc_table<W: io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["method", "window", "auc"])?;
        for entry in &self.entries {
            w.write_record([
                entry.method.name().to_string(),
                window_label(&entry.window),
                format!("{}", entry.curve.auc),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Writes every curve's points for external plotting, the method
    /// column carrying the window, e.g. `glm-window@-5..2`.
    pub fn write_roc_points<W: io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["method", "threshold", "fpr", "tpr"])?;
        for entry in &self.entries {
            let label = format!("{}@{}", entry.method.name(), window_label(&entry.window));
            for p in &entry.curve.points {
                w.write_record([
                    label.clone(),
                    format!("{}", p.threshold),
                    format!("{}", p.fpr),
                    format!("{}", p.tpr),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Cross-validated comparison of the configured methods and windows.
///
/// One participant-level fold plan is drawn once and shared by every
/// (method, window) pair; within a fold, every method reuses the same
/// first-stage fit for that window, and the continuous rescoring fit is
/// shared between `glm-continuous` and `rescore-nn` initialization.
/// Held-out scores are pooled across folds into one curve per pair. The
/// `webster` method's curve comes from the pooled threshold sweep instead
/// of a plain score ROC.
pub fn evaluate_methods(
    nights: &[EpochSeries<Real>],
    config: &EvaluateConfig,
) -> Result<EvaluationReport> {
    if config.methods.is_empty() {
        return Err(Error::InvalidConfig("no methods requested".into()));
    }
    if config.windows.is_empty() {
        return Err(Error::InvalidConfig("no windows requested".into()));
    }
    for window in &config.windows {
        window.validate()?;
    }
    let epoch_len = uniform_epoch_len(nights)?;
    for night in nights {
        night.require_labels()?;
    }
    let borders = edge_adjacent_borders(epoch_len);
    let plan = plan_folds(nights, config.k, config.seed)?;

    let needs_stage_two = |m: Method| {
        matches!(m, Method::GlmContinuous | Method::GlmBinary | Method::Tree | Method::RescoreNn)
    };
    let fit_continuous = config
        .methods
        .iter()
        .any(|&m| matches!(m, Method::GlmContinuous | Method::RescoreNn));

    let mut entries = Vec::new();
    for window in &config.windows {
        // Pooled held-out scores per method, in fold-major order.
        let mut pooled: Vec<Vec<Real>> = vec![Vec::new(); config.methods.len()];
        let mut pooled_labels: Vec<Real> = Vec::new();
        // The webster sweep needs whole held-out probability sequences.
        let mut webster_nights: Vec<(ScoreSequence<Real>, Vec<Real>)> = Vec::new();

        for fold in 0..config.k {
            let mut train_nights: Vec<EpochSeries<Real>> = Vec::new();
            let mut held_out: Vec<EpochSeries<Real>> = Vec::new();
            for night in nights {
                if plan.assignment[&night.participant_id] == fold {
                    held_out.push(night.clone());
                } else {
                    train_nights.push(night.clone());
                }
            }
            let window_model = fit_window_glm(&train_nights, window, config.edge, config.l2)?;
            let held_probs: Vec<ScoreSequence<Real>> = held_out
                .iter()
                .map(|night| stage_one(&window_model, night, window, config.edge))
                .collect::<Result<_>>()?;
            let train_pairs = if config.methods.iter().any(|&m| needs_stage_two(m)) {
                stage_one_pairs(&window_model, &train_nights, window, config.edge)?
            } else {
                Vec::new()
            };
            let continuous_model = if fit_continuous {
                Some(fit_sequential(
                    &train_pairs,
                    SequentialMode::Continuous,
                    &borders,
                    config.l2,
                )?)
            } else {
                None
            };

            for (slot, &method) in config.methods.iter().enumerate() {
                match method {
                    Method::GlmWindow => {
                        for probs in &held_probs {
                            pooled[slot].extend_from_slice(probs.values());
                        }
                    }
                    Method::GlmContinuous => {
                        let model = continuous_model.as_ref().unwrap();
                        for probs in &held_probs {
                            let features =
                                continuous_rescoring_features(&feature_frame(probs, &borders)?);
                            pooled[slot].extend_from_slice(&model.predict(&features)?);
                        }
                    }
                    Method::GlmBinary => {
                        let model = fit_sequential(
                            &train_pairs,
                            SequentialMode::Binary,
                            &borders,
                            config.l2,
                        )?;
                        for probs in &held_probs {
                            let features = binary_rescoring_features(probs, &borders)?;
                            pooled[slot].extend_from_slice(&model.predict(&features)?);
                        }
                    }
                    Method::Webster => {
                        for (probs, night) in held_probs.iter().zip(&held_out) {
                            webster_nights
                                .push((probs.clone(), night.require_labels()?.to_vec()));
                        }
                    }
                    Method::Tree => {
                        let (design, labels) = tree_design(&train_pairs, &borders)?;
                        let tree = fit_tree(
                            &design,
                            &labels,
                            config.tree_max_depth,
                            config.tree_min_leaf,
                        )?;
                        for probs in &held_probs {
                            let frame = feature_frame(&threshold_sequence(probs), &borders)?;
                            pooled[slot].extend_from_slice(&tree.predict(&frame.rows_matrix())?);
                        }
                    }
                    Method::RescoreNn => {
                        let initial = JointModel::from_sequential(
                            &window_model,
                            continuous_model.as_ref().unwrap(),
                            *window,
                            config.edge,
                            borders.clone(),
                        )?;
                        let outcome =
                            train(&initial, &train_nights, &config.train).map_err(Error::from)?;
                        for night in &held_out {
                            pooled[slot].extend_from_slice(&outcome.model.forward(night)?);
                        }
                    }
                }
            }
            for night in &held_out {
                pooled_labels.extend_from_slice(night.require_labels()?);
            }
        }

        for (slot, &method) in config.methods.iter().enumerate() {
            let curve = if method == Method::Webster {
                roc_webster(&webster_nights, &config.rule_params, &config.threshold_grid)?
            } else {
                roc(&pooled[slot], &pooled_labels)?
            };
            entries.push(MethodScore { method, window: *window, curve });
        }
    }
    Ok(EvaluationReport { entries })
}
