//! Second-order gradient-boosted decision trees with exact greedy split
//! enumeration.
//!
//! Each round fits one regression tree per raw output to the gradient and
//! hessian of the loss at the current scores. Split quality is the usual
//! regularized gain
//!
//! ```text
//! gain = 1/2 [G_L^2/(H_L+λ) + G_R^2/(H_R+λ) - (G_L+G_R)^2/(H_L+H_R+λ)] - γ
//! ```
//!
//! and leaves take the Newton weight `-G/(H+λ)`. With `alpha > 0` the
//! gradient sums are soft-thresholded first (L1 on the leaf weights).
//! Missing values are routed by a per-node default direction chosen during
//! training.

use ndarray::{Array2, ArrayView2};
use rand::seq::index::sample;
use rand::seq::SliceRandom;

use super::link::{Label, Link};
use super::training::EpochTrainer;
use super::{HpReader, LearnerError};
use crate::hpo::Hyperparameters;
use crate::rng;

/// Regularized split gain for gradient/hessian sums on either side.
pub fn split_gain(g_left: f64, h_left: f64, g_right: f64, h_right: f64, lambda: f64, gamma: f64) -> f64 {
    split_gain_l1(g_left, h_left, g_right, h_right, lambda, gamma, 0.0)
}

/// Newton leaf weight `-G/(H+λ)`.
pub fn leaf_weight(g: f64, h: f64, lambda: f64) -> f64 {
    leaf_weight_l1(g, h, lambda, 0.0)
}

fn soft_threshold(g: f64, alpha: f64) -> f64 {
    if alpha == 0.0 {
        g
    } else if g > alpha {
        g - alpha
    } else if g < -alpha {
        g + alpha
    } else {
        0.0
    }
}

fn score_term(g: f64, h: f64, lambda: f64, alpha: f64) -> f64 {
    let denom = h + lambda;
    if denom <= 0.0 {
        return 0.0;
    }
    let t = soft_threshold(g, alpha);
    t * t / denom
}

fn split_gain_l1(gl: f64, hl: f64, gr: f64, hr: f64, lambda: f64, gamma: f64, alpha: f64) -> f64 {
    0.5 * (score_term(gl, hl, lambda, alpha) + score_term(gr, hr, lambda, alpha)
        - score_term(gl + gr, hl + hr, lambda, alpha))
        - gamma
}

fn leaf_weight_l1(g: f64, h: f64, lambda: f64, alpha: f64) -> f64 {
    let denom = h + lambda;
    if denom <= 0.0 {
        0.0
    } else {
        -soft_threshold(g, alpha) / denom
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GbdtParams {
    pub n_estimators: usize,
    pub eta: f64,
    pub max_depth: usize,
    pub subsample: f64,
    pub colsample_bytree: f64,
    pub colsample_bylevel: f64,
    /// Minimum hessian sum in each child.
    pub min_child_weight: f64,
    pub alpha: f64,
    pub lambda: f64,
    pub gamma: f64,
}

impl Default for GbdtParams {
    fn default() -> Self {
        GbdtParams {
            n_estimators: 100,
            eta: 0.3,
            max_depth: 6,
            subsample: 1.0,
            colsample_bytree: 1.0,
            colsample_bylevel: 1.0,
            min_child_weight: 1.0,
            alpha: 0.0,
            lambda: 1.0,
            gamma: 0.0,
        }
    }
}

pub const KEYS: [&str; 10] = [
    "n_estimators",
    "eta",
    "max_depth",
    "subsample",
    "colsample_bytree",
    "colsample_bylevel",
    "min_child_weight",
    "alpha",
    "lambda",
    "gamma",
];

impl GbdtParams {
    pub fn from_hp(hp: &Hyperparameters) -> Result<Self, LearnerError> {
        let r = HpReader::new(hp, &KEYS)?;
        let d = GbdtParams::default();
        let p = GbdtParams {
            n_estimators: r.count("n_estimators", d.n_estimators)?,
            eta: r.real("eta", d.eta)?,
            max_depth: r.count("max_depth", d.max_depth)?,
            subsample: r.real("subsample", d.subsample)?,
            colsample_bytree: r.real("colsample_bytree", d.colsample_bytree)?,
            colsample_bylevel: r.real("colsample_bylevel", d.colsample_bylevel)?,
            min_child_weight: r.real("min_child_weight", d.min_child_weight)?,
            alpha: r.real("alpha", d.alpha)?,
            lambda: r.real("lambda", d.lambda)?,
            gamma: r.real("gamma", d.gamma)?,
        };
        for (key, v) in [
            ("subsample", p.subsample),
            ("colsample_bytree", p.colsample_bytree),
            ("colsample_bylevel", p.colsample_bylevel),
        ] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(LearnerError::InvalidHyperparameter {
                    key: key.into(),
                    reason: format!("{v} not in (0, 1]"),
                });
            }
        }
        for (key, v) in [
            ("eta", p.eta),
            ("min_child_weight", p.min_child_weight),
            ("alpha", p.alpha),
            ("lambda", p.lambda),
            ("gamma", p.gamma),
        ] {
            if !(v >= 0.0) {
                return Err(LearnerError::InvalidHyperparameter {
                    key: key.into(),
                    reason: format!("{v} is negative"),
                });
            }
        }
        Ok(p)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        /// Missing values go left when set.
        default_left: bool,
        left: usize,
        right: usize,
    },
    Leaf {
        weight: f64,
    },
}

/// Binary tree stored as a node arena; node 0 is the root.
#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    /// Unshrunk leaf weight reached by `row` (`NaN` = missing).
    pub fn evaluate(&self, row: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { weight } => return weight,
                Node::Split {
                    feature,
                    threshold,
                    default_left,
                    left,
                    right,
                } => {
                    let x = row[feature];
                    let go_left = if x.is_nan() { default_left } else { x < threshold };
                    i = if go_left { left } else { right };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GbdtModel {
    /// Initial raw score per output.
    pub base_score: Vec<f64>,
    /// One tree per output per boosting round.
    pub rounds: Vec<Vec<Tree>>,
    pub eta: f64,
    pub link: Link,
    pub n_features: usize,
}

impl GbdtModel {
    /// Raw scores for an ordinal matrix (missing cells as `NaN`).
    pub fn raw_scores(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let k = self.base_score.len();
        let mut out = Array2::zeros((x.nrows(), k));
        for (i, row) in x.rows().into_iter().enumerate() {
            let row = row.to_vec();
            for c in 0..k {
                let sum: f64 = self.rounds.iter().map(|r| r[c].evaluate(&row)).sum();
                out[[i, c]] = self.base_score[c] + self.eta * sum;
            }
        }
        out
    }

    pub fn n_trees(&self) -> usize {
        self.rounds.iter().map(Vec::len).sum()
    }
}

/// Initial scores: the target mean for regression, log-odds / log-priors for
/// classification.
fn base_scores(link: Link, labels: &[Label]) -> Vec<f64> {
    let n = labels.len().max(1) as f64;
    match link {
        Link::Identity => {
            let sum: f64 = labels
                .iter()
                .map(|l| match l {
                    Label::Value(v) => *v,
                    Label::Class(_) => unreachable!(),
                })
                .sum();
            vec![sum / n]
        }
        Link::Sigmoid => {
            let pos = labels.iter().filter(|l| matches!(l, Label::Class(1))).count() as f64;
            let p = (pos / n).clamp(1e-6, 1.0 - 1e-6);
            vec![(p / (1.0 - p)).ln()]
        }
        Link::Softmax(k) => {
            let mut counts = vec![0.0; k];
            for l in labels {
                if let Label::Class(c) = l {
                    counts[*c] += 1.0;
                }
            }
            counts.iter().map(|c| (c / n).clamp(1e-6, 1.0).ln()).collect()
        }
    }
}

struct SplitCandidate {
    gain: f64,
    feature: usize,
    threshold: f64,
    default_left: bool,
}

struct TreeBuilder<'a> {
    x: ArrayView2<'a, f64>,
    grad: &'a [f64],
    hess: &'a [f64],
    params: &'a GbdtParams,
    level_features: Vec<Vec<usize>>,
    nodes: Vec<Node>,
}

impl TreeBuilder<'_> {
    fn build(&mut self, rows: &[usize], depth: usize) -> usize {
        let g: f64 = rows.iter().map(|&i| self.grad[i]).sum();
        let h: f64 = rows.iter().map(|&i| self.hess[i]).sum();
        let slot = self.nodes.len();
        self.nodes.push(Node::Leaf {
            weight: leaf_weight_l1(g, h, self.params.lambda, self.params.alpha),
        });
        if depth >= self.params.max_depth {
            return slot;
        }
        let Some(best) = self.best_split(rows, depth) else {
            return slot;
        };
        let (l_rows, r_rows): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| {
            let v = self.x[[i, best.feature]];
            if v.is_nan() {
                best.default_left
            } else {
                v < best.threshold
            }
        });
        let left = self.build(&l_rows, depth + 1);
        let right = self.build(&r_rows, depth + 1);
        self.nodes[slot] = Node::Split {
            feature: best.feature,
            threshold: best.threshold,
            default_left: best.default_left,
            left,
            right,
        };
        slot
    }

    /// Exhaustive scan over the level's features and every midpoint between
    /// consecutive distinct values. Candidates are visited in (feature,
    /// threshold) order and only a strictly larger gain replaces the incumbent.
    fn best_split(&self, rows: &[usize], depth: usize) -> Option<SplitCandidate> {
        let p = self.params;
        let mut best: Option<SplitCandidate> = None;
        let mut present: Vec<(f64, usize)> = Vec::with_capacity(rows.len());
        for &f in &self.level_features[depth] {
            present.clear();
            let (mut g_miss, mut h_miss) = (0.0, 0.0);
            for &i in rows {
                let v = self.x[[i, f]];
                if v.is_nan() {
                    g_miss += self.grad[i];
                    h_miss += self.hess[i];
                } else {
                    present.push((v, i));
                }
            }
            if present.len() < 2 {
                continue;
            }
            present.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let g_present: f64 = present.iter().map(|&(_, i)| self.grad[i]).sum();
            let h_present: f64 = present.iter().map(|&(_, i)| self.hess[i]).sum();
            let has_missing = present.len() < rows.len();
            let (mut gl, mut hl) = (0.0, 0.0);
            for w in 0..present.len() - 1 {
                let (v, i) = present[w];
                gl += self.grad[i];
                hl += self.hess[i];
                let next = present[w + 1].0;
                if !(v < next) {
                    continue;
                }
                let mut threshold = 0.5 * (v + next);
                if !(v < threshold) {
                    threshold = next;
                }
                let (gr, hr) = (g_present - gl, h_present - hl);
                let directions: &[bool] = if has_missing { &[true, false] } else { &[true] };
                for &default_left in directions {
                    let (gl2, hl2, gr2, hr2) = if default_left {
                        (gl + g_miss, hl + h_miss, gr, hr)
                    } else {
                        (gl, hl, gr + g_miss, hr + h_miss)
                    };
                    if hl2 < p.min_child_weight || hr2 < p.min_child_weight {
                        continue;
                    }
                    let gain = split_gain_l1(gl2, hl2, gr2, hr2, p.lambda, p.gamma, p.alpha);
                    if best.as_ref().is_none_or(|b| gain > b.gain) {
                        best = Some(SplitCandidate {
                            gain,
                            feature: f,
                            threshold,
                            default_left,
                        });
                    }
                }
            }
        }
        best.filter(|b| b.gain > 0.0)
    }
}

/// Boosting state; one [`EpochTrainer`] epoch is one boosting round.
pub struct GbdtTrainer<'a> {
    pub model: GbdtModel,
    params: GbdtParams,
    x: ArrayView2<'a, f64>,
    labels: &'a [Label],
    val_x: ArrayView2<'a, f64>,
    val_labels: &'a [Label],
    scores: Array2<f64>,
    val_scores: Array2<f64>,
    rng: rng::Rng,
}

impl<'a> GbdtTrainer<'a> {
    pub fn new(
        params: GbdtParams,
        link: Link,
        x: ArrayView2<'a, f64>,
        labels: &'a [Label],
        val_x: ArrayView2<'a, f64>,
        val_labels: &'a [Label],
        seed: u64,
    ) -> Self {
        let base = base_scores(link, labels);
        let k = base.len();
        let broadcast = |n: usize| Array2::from_shape_fn((n, k), |(_, c)| base[c]);
        GbdtTrainer {
            model: GbdtModel {
                base_score: base.clone(),
                rounds: Vec::new(),
                eta: params.eta,
                link,
                n_features: x.ncols(),
            },
            scores: broadcast(x.nrows()),
            val_scores: broadcast(val_x.nrows()),
            params,
            x,
            labels,
            val_x,
            val_labels,
            rng: rng::seeded(seed),
        }
    }

    fn sample_features(&mut self, from: &[usize], fraction: f64) -> Vec<usize> {
        if fraction >= 1.0 {
            return from.to_vec();
        }
        let take = ((from.len() as f64 * fraction).round() as usize).clamp(1, from.len());
        let mut picked: Vec<usize> = sample(&mut self.rng, from.len(), take)
            .into_iter()
            .map(|i| from[i])
            .collect();
        picked.sort_unstable();
        picked
    }

    fn grow_round(&mut self) -> Vec<Tree> {
        let n = self.x.nrows();
        let k = self.model.base_score.len();
        let link = self.model.link;
        let mut grad = vec![0.0; n * k];
        let mut hess = vec![0.0; n * k];
        for i in 0..n {
            let s = self.scores.row(i).to_vec();
            link.grad_hess(&s, self.labels[i], &mut grad[i * k..(i + 1) * k], &mut hess[i * k..(i + 1) * k]);
        }
        let mut rows: Vec<usize> = (0..n).collect();
        if self.params.subsample < 1.0 {
            let take = ((n as f64 * self.params.subsample).round() as usize).clamp(1, n);
            rows.shuffle(&mut self.rng);
            rows.truncate(take);
            rows.sort_unstable();
        }
        let all: Vec<usize> = (0..self.x.ncols()).collect();
        let mut trees = Vec::with_capacity(k);
        for c in 0..k {
            let g: Vec<f64> = (0..n).map(|i| grad[i * k + c]).collect();
            let h: Vec<f64> = (0..n).map(|i| hess[i * k + c]).collect();
            let tree_features = self.sample_features(&all, self.params.colsample_bytree);
            let level_features = (0..self.params.max_depth.max(1))
                .map(|_| self.sample_features(&tree_features, self.params.colsample_bylevel))
                .collect();
            let mut builder = TreeBuilder {
                x: self.x,
                grad: &g,
                hess: &h,
                params: &self.params,
                level_features,
                nodes: Vec::new(),
            };
            builder.build(&rows, 0);
            trees.push(Tree { nodes: builder.nodes });
        }
        trees
    }

    fn apply(scores: &mut Array2<f64>, x: ArrayView2<f64>, trees: &[Tree], eta: f64) {
        for (i, row) in x.rows().into_iter().enumerate() {
            let row = row.to_vec();
            for (c, t) in trees.iter().enumerate() {
                scores[[i, c]] += eta * t.evaluate(&row);
            }
        }
    }

    /// Mean training loss at the current scores.
    pub fn train_loss(&self) -> f64 {
        super::training::score_loss(self.model.link, self.scores.view(), self.labels)
    }

    /// Grows one round without touching the validation scores.
    pub fn boost_once(&mut self) -> Result<(), LearnerError> {
        let trees = self.grow_round();
        Self::apply(&mut self.scores, self.x, &trees, self.model.eta);
        self.model.rounds.push(trees);
        if self.scores.iter().any(|s| !s.is_finite()) {
            return Err(LearnerError::NonFiniteLoss {
                epoch: self.model.rounds.len(),
            });
        }
        Ok(())
    }
}

impl EpochTrainer for GbdtTrainer<'_> {
    type State = usize;

    fn run_epoch(&mut self) -> Result<f64, LearnerError> {
        let before = self.model.rounds.len();
        self.boost_once()?;
        let trees = &self.model.rounds[before];
        Self::apply(&mut self.val_scores, self.val_x, trees, self.model.eta);
        Ok(super::training::score_loss(
            self.model.link,
            self.val_scores.view(),
            self.val_labels,
        ))
    }

    fn snapshot(&self) -> usize {
        self.model.rounds.len()
    }

    fn restore(&mut self, rounds: usize) {
        self.model.rounds.truncate(rounds);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    fn values(v: &[f64]) -> Vec<Label> {
        v.iter().map(|&y| Label::Value(y)).collect()
    }

    fn stump(lambda: f64) -> GbdtParams {
        GbdtParams {
            n_estimators: 1,
            eta: 1.0,
            max_depth: 1,
            lambda,
            min_child_weight: 0.0,
            ..GbdtParams::default()
        }
    }

    fn fit_rounds(params: GbdtParams, link: Link, x: &Array2<f64>, y: &[Label]) -> GbdtModel {
        let rounds = params.n_estimators;
        let mut t = GbdtTrainer::new(params, link, x.view(), y, x.view(), y, 0);
        for _ in 0..rounds {
            t.run_epoch().unwrap();
        }
        t.model
    }

    #[test]
    fn gain_examples() {
        assert_eq!(split_gain(-2.0, 1.0, 2.0, 1.0, 1.0, 0.0), 2.0);
        assert!(split_gain(-2.0, 1.0, 2.0, 1.0, 1.0, 2.5) < 0.0);
        assert_eq!(leaf_weight(-3.0, 2.0, 1.0), 1.0);
    }

    #[test]
    fn symmetric_split_has_zero_gain() {
        assert_eq!(split_gain(1.5, 2.0, 1.5, 2.0, 0.0, 0.0), 0.0);
        assert_eq!(split_gain(0.0, 2.0, 0.0, 2.0, 1.0, 0.0), 0.0);
    }

    #[test]
    fn stump_on_four_points() {
        let x = array![[0.0], [1.0], [2.0], [3.0]];
        let y = values(&[0.0, 0.0, 1.0, 1.0]);
        let m = fit_rounds(stump(0.0), Link::Identity, &x, &y);
        let Node::Split { threshold, feature, .. } = m.rounds[0][0].nodes[0] else {
            panic!("expected a split")
        };
        assert_eq!((feature, threshold), (0, 1.5));
        let preds = m.raw_scores(x.view());
        assert_eq!(preds.column(0).to_vec(), vec![0.0, 0.0, 1.0, 1.0]);
    }

    #[test]
    fn constant_target_predicts_the_constant() {
        let x = array![[0.0, 5.0], [1.0, 3.0], [2.0, 1.0]];
        let y = values(&[4.2, 4.2, 4.2]);
        let params = GbdtParams {
            n_estimators: 5,
            ..GbdtParams::default()
        };
        let m = fit_rounds(params, Link::Identity, &x, &y);
        assert!(m.rounds.iter().all(|r| r[0].nodes.len() == 1));
        for p in m.raw_scores(array![[10.0, -3.0]].view()) {
            assert!((p - 4.2).abs() < 1e-12);
        }
    }

    #[test]
    fn missing_values_follow_learned_default() {
        // hand trace: base 0.5, g = [.5, .5, -.5, -.5], h = 1, λ = 0.
        // threshold 1.5 with missing routed right scores 0.5, better than
        // missing-left (1/6) and threshold 0.5 (1/6), so the default is right.
        let x = array![[0.0], [1.0], [2.0], [f64::NAN]];
        let y = values(&[0.0, 0.0, 1.0, 1.0]);
        let m = fit_rounds(stump(0.0), Link::Identity, &x, &y);
        let Node::Split {
            threshold,
            default_left,
            ..
        } = m.rounds[0][0].nodes[0]
        else {
            panic!()
        };
        assert_eq!(threshold, 1.5);
        assert!(!default_left);
        let p = m.raw_scores(array![[f64::NAN], [0.5]].view());
        assert_eq!(p[[0, 0]], 1.0);
        assert_eq!(p[[1, 0]], 0.0);
    }

    #[test]
    fn empty_ensemble_predicts_the_base_score() {
        let x = array![[0.0], [1.0], [2.0], [3.0]];
        let y = vec![Label::Class(1), Label::Class(1), Label::Class(1), Label::Class(0)];
        let t = GbdtTrainer::new(GbdtParams::default(), Link::Sigmoid, x.view(), &y, x.view(), &y, 0);
        let raw = t.model.raw_scores(x.view());
        assert!(raw.iter().all(|&s| (super::super::link::sigmoid(s) - 0.75).abs() < 1e-12));
    }

    #[test]
    fn gamma_blocks_weak_splits() {
        let x = array![[0.0], [1.0], [2.0], [3.0]];
        let y = values(&[0.0, 0.0, 1.0, 1.0]);
        let params = GbdtParams {
            gamma: 10.0,
            ..stump(0.0)
        };
        let m = fit_rounds(params, Link::Identity, &x, &y);
        assert_eq!(m.rounds[0][0].nodes.len(), 1);
    }

    #[test]
    fn multiclass_grows_one_tree_per_class() {
        let x = array![[0.0], [1.0], [2.0], [3.0], [4.0], [5.0]];
        let y: Vec<Label> = [0, 0, 1, 1, 2, 2].iter().map(|&c| Label::Class(c)).collect();
        let params = GbdtParams {
            n_estimators: 3,
            min_child_weight: 0.0,
            ..GbdtParams::default()
        };
        let m = fit_rounds(params, Link::Softmax(3), &x, &y);
        assert_eq!(m.rounds.len(), 3);
        assert!(m.rounds.iter().all(|r| r.len() == 3));
    }

    #[test]
    fn hyperparameter_validation() {
        let hp = Hyperparameters::new().with("subsample", crate::hpo::ParamValue::Float(0.0));
        assert!(GbdtParams::from_hp(&hp).is_err());
        let hp = Hyperparameters::new().with("depth", crate::hpo::ParamValue::Int(3));
        assert!(matches!(
            GbdtParams::from_hp(&hp),
            Err(LearnerError::UnknownHyperparameter(_))
        ));
        let hp = Hyperparameters::new()
            .with("n_estimators", crate::hpo::ParamValue::Float(99.6))
            .with("max_depth", crate::hpo::ParamValue::Int(3));
        let p = GbdtParams::from_hp(&hp).unwrap();
        assert_eq!((p.n_estimators, p.max_depth), (100, 3));
    }

    fn random_problem(n: usize, p: usize, seed: u64) -> (Array2<f64>, Vec<f64>) {
        use rand::Rng;
        let mut r = rng::seeded(seed);
        let x: Array2<f64> = Array2::from_shape_fn((n, p), |_| r.random_range(-2.0..2.0));
        let y = (0..n).map(|i| x[[i, 0]].sin() + 0.5 * x[[i, p - 1]] + r.random_range(-0.3..0.3)).collect();
        (x, y)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn adding_a_tree_never_increases_training_loss(
            n in 10usize..200, p in 1usize..6, seed in any::<u64>(), eta in 0.05f64..1.0,
            depth in 1usize..5, binary in any::<bool>(),
        ) {
            let (x, y) = random_problem(n, p, seed);
            let (link, labels): (Link, Vec<Label>) = if binary {
                (Link::Sigmoid, y.iter().map(|&v| Label::Class(usize::from(v > 0.0))).collect())
            } else {
                (Link::Identity, values(&y))
            };
            let params = GbdtParams { eta, max_depth: depth, gamma: 0.0, ..GbdtParams::default() };
            let mut t = GbdtTrainer::new(params, link, x.view(), &labels, x.view(), &labels, seed);
            let mut prev = t.train_loss();
            for _ in 0..5 {
                t.boost_once().unwrap();
                let now = t.train_loss();
                prop_assert!(now <= prev + 1e-12, "{} -> {}", prev, now);
                prev = now;
            }
        }

        #[test]
        fn seeded_subsampling_is_reproducible(seed in any::<u64>()) {
            let (x, y) = random_problem(80, 5, seed);
            let labels = values(&y);
            let params = GbdtParams {
                n_estimators: 4, subsample: 0.6, colsample_bytree: 0.6, colsample_bylevel: 0.5,
                ..GbdtParams::default()
            };
            let a = fit_rounds(params.clone(), Link::Identity, &x, &labels);
            let b = fit_rounds(params, Link::Identity, &x, &labels);
            prop_assert!(a.rounds.iter().flatten().all(|t| t.depth() <= 6));
            prop_assert_eq!(a.rounds, b.rounds);
        }
    }
}
