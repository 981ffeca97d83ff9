//! Classifiers over activity windows and bout features: a moving-window
//! logistic regression, second-stage rescoring regressions on its output,
//! and a small CART learner for rule trees.

mod glm;
mod sequential;
mod tree;
mod window;

pub use glm::{fit_glm, FeatureRecipe, GlmModel};
pub use sequential::{
    binary_rescoring_features, clamp_probability, continuous_rescoring_features, fit_sequential,
    sequential_features, threshold_sequence, transformed_frame_features, SequentialMode,
    BINARY_ARITY, CONTINUOUS_ARITY, PROB_CLAMP,
};
pub use tree::{fit_tree, RuleTree, TreeNode};
pub use window::{window_matrix, EdgeMode, WindowSpec};
