//! Published search spaces for the benchmark's model families, plus scaled
//! down "desk" variants that fit a laptop budget with the native learners.
//!
//! Key names match the hyperparameter keys the native learners read:
//! `xgboost` drives the GBDT learner, `node` the soft oblivious-tree learner,
//! and `1d-cnn` the MLP (hidden width, depth, learning rate, batch size). The
//! CatBoost, TabNet and DNF-Net spaces are meant for external adapters.

use super::space::{ChoiceArm, Dimension, ParamValue, SearchSpace};

pub const NAMES: [&str; 9] = [
    "xgboost",
    "catboost",
    "node",
    "tabnet",
    "dnf-net",
    "1d-cnn",
    "xgboost-desk",
    "node-desk",
    "mlp-desk",
];

pub fn by_name(name: &str) -> Option<SearchSpace> {
    Some(match name {
        "xgboost" => xgboost(),
        "catboost" => catboost(),
        "node" => node(),
        "tabnet" => tabnet(),
        "dnf-net" => dnf_net(),
        "1d-cnn" => one_d_cnn(),
        "xgboost-desk" => xgboost_desk(),
        "node-desk" => node_desk(),
        "mlp-desk" => mlp_desk(),
        _ => return None,
    })
}

fn uniform(lo: f64, hi: f64) -> Dimension {
    Dimension::Uniform { lo, hi }
}

fn log_uniform(lo: f64, hi: f64) -> Dimension {
    Dimension::LogUniform { lo, hi }
}

fn e(x: f64) -> f64 {
    x.exp()
}

fn discrete(lo: i64, hi: i64) -> Dimension {
    Dimension::DiscreteUniform { lo, hi }
}

fn ints(values: &[i64]) -> Dimension {
    Dimension::Choice {
        options: values.iter().map(|&v| ChoiceArm::Value(ParamValue::Int(v))).collect(),
    }
}

/// `{0, log-uniform [lo, hi]}` with equal odds.
fn zero_or_log_uniform(lo: f64, hi: f64) -> Dimension {
    Dimension::Choice {
        options: vec![
            ChoiceArm::Value(ParamValue::Float(0.0)),
            ChoiceArm::Dist(Box::new(log_uniform(lo, hi))),
        ],
    }
}

fn batch_sizes() -> Dimension {
    ints(&[512, 1024, 2048, 4096, 8192])
}

pub fn xgboost() -> SearchSpace {
    SearchSpace::new()
        .dim("n_estimators", uniform(100.0, 4000.0))
        .dim("eta", log_uniform(e(-7.0), 1.0))
        .dim("max_depth", discrete(1, 10))
        .dim("subsample", uniform(0.2, 1.0))
        .dim("colsample_bytree", uniform(0.2, 1.0))
        .dim("colsample_bylevel", uniform(0.2, 1.0))
        .dim("min_child_weight", log_uniform(e(-16.0), e(5.0)))
        .dim("alpha", zero_or_log_uniform(e(-16.0), e(2.0)))
        .dim("lambda", zero_or_log_uniform(e(-16.0), e(2.0)))
        .dim("gamma", zero_or_log_uniform(e(-16.0), e(2.0)))
}

pub fn catboost() -> SearchSpace {
    SearchSpace::new()
        .dim("learning_rate", log_uniform(e(-5.0), 1.0))
        .dim("random_strength", discrete(1, 20))
        .dim("max_size", discrete(0, 25))
        .dim("l2_leaf_reg", log_uniform(1.0, 10.0))
        .dim("bagging_temperature", uniform(0.0, 1.0))
        .dim("leaf_estimation_iterations", discrete(1, 20))
}

/// The published NODE list carries two learning-rate entries; the single
/// dimension kept here is the `[e^-4, 0.5]` one shared by the other deep models.
pub fn node() -> SearchSpace {
    SearchSpace::new()
        .dim("num_layers", discrete(1, 10))
        .dim("tree_count", ints(&[256, 512, 1024, 2048]))
        .dim("tree_depth", discrete(4, 9))
        .dim("tree_output_dim", discrete(1, 5))
        .dim("learning_rate", log_uniform(e(-4.0), 0.5))
        .dim("batch_size", batch_sizes())
}

pub fn tabnet() -> SearchSpace {
    SearchSpace::new()
        .dim("learning_rate", log_uniform(e(-5.0), 1.0))
        .dim("feature_dim", discrete(20, 60))
        .dim("output_dim", discrete(20, 60))
        .dim("n_steps", discrete(1, 8))
        .dim("bn_epsilon", uniform(e(-5.0), e(-1.0)))
        .dim("relaxation_factor", uniform(0.3, 2.0))
        .dim("batch_size", batch_sizes())
}

/// The published "discrete uniform [1e-2, 2]" for the feature-selection beta
/// has no integer support; it is realized as a continuous uniform.
pub fn dnf_net() -> SearchSpace {
    SearchSpace::new()
        .dim("n_formulas", discrete(256, 2048))
        .dim("feature_selection_beta", uniform(1e-2, 2.0))
        .dim("learning_rate", log_uniform(e(-4.0), 0.5))
        .dim("batch_size", batch_sizes())
}

pub fn one_d_cnn() -> SearchSpace {
    SearchSpace::new()
        .dim("hidden_size", discrete(100, 4000))
        .dim("num_layers", discrete(1, 6))
        .dim("learning_rate", log_uniform(e(-4.0), 0.5))
        .dim("batch_size", batch_sizes())
}

pub fn xgboost_desk() -> SearchSpace {
    SearchSpace::new()
        .dim("n_estimators", uniform(10.0, 150.0))
        .dim("eta", log_uniform(e(-4.0), 1.0))
        .dim("max_depth", discrete(1, 6))
        .dim("subsample", uniform(0.5, 1.0))
        .dim("colsample_bytree", uniform(0.5, 1.0))
        .dim("colsample_bylevel", uniform(0.5, 1.0))
        .dim("min_child_weight", log_uniform(e(-8.0), e(2.0)))
        .dim("alpha", zero_or_log_uniform(e(-8.0), e(1.0)))
        .dim("lambda", zero_or_log_uniform(e(-8.0), e(2.0)))
        .dim("gamma", zero_or_log_uniform(e(-8.0), e(0.0)))
}

pub fn node_desk() -> SearchSpace {
    SearchSpace::new()
        .dim("num_layers", discrete(1, 2))
        .dim("tree_count", ints(&[4, 8, 16]))
        .dim("tree_depth", discrete(2, 4))
        .dim("tree_output_dim", discrete(1, 3))
        .dim("learning_rate", log_uniform(e(-6.0), e(-1.5)))
        .dim("batch_size", ints(&[64, 128, 256]))
}

pub fn mlp_desk() -> SearchSpace {
    SearchSpace::new()
        .dim("hidden_size", discrete(8, 64))
        .dim("num_layers", discrete(1, 3))
        .dim("learning_rate", log_uniform(e(-7.0), e(-2.0)))
        .dim("batch_size", ints(&[64, 128, 256]))
}
