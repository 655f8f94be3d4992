//! Differentiable oblivious decision trees, stacked in densely connected
//! layers.
//!
//! Every tree has `depth` levels. Level `l` picks its feature softly with
//! `softmax(A_l / τ)` over the layer input `z`, compares it with a learned
//! threshold `b_l` and routes right with probability
//! `c_l = σ((softmax(A_l/τ)·z − b_l) / τ)`. A leaf's probability is the
//! product of its per-level branch probabilities and the tree emits the
//! probability-weighted sum of its leaf response vectors. As `τ → 0` this
//! becomes the hard oblivious tree that tests `z[argmax A_l] > b_l` at every
//! level.
//!
//! Layer `k` sees the raw input concatenated with the outputs of all earlier
//! layers; a linear head maps the concatenated tree outputs of every layer to
//! the raw scores.

use ndarray::{s, Array2, ArrayView2};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::link::{sigmoid, Label, Link};
use super::training::Differentiable;
use super::{HpReader, LearnerError};
use crate::hpo::Hyperparameters;
use crate::rng;

#[derive(Debug, Clone, PartialEq)]
pub struct SoftOdtParams {
    pub num_layers: usize,
    /// Total trees, divided evenly across layers (at least one per layer).
    pub tree_count: usize,
    pub tree_depth: usize,
    pub tree_output_dim: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
}

impl Default for SoftOdtParams {
    fn default() -> Self {
        SoftOdtParams {
            num_layers: 1,
            tree_count: 16,
            tree_depth: 3,
            tree_output_dim: 2,
            learning_rate: 1e-2,
            batch_size: 128,
        }
    }
}

pub const KEYS: [&str; 6] = [
    "num_layers",
    "tree_count",
    "tree_depth",
    "tree_output_dim",
    "learning_rate",
    "batch_size",
];

impl SoftOdtParams {
    pub fn from_hp(hp: &Hyperparameters) -> Result<Self, LearnerError> {
        let r = HpReader::new(hp, &KEYS)?;
        let d = SoftOdtParams::default();
        let p = SoftOdtParams {
            num_layers: r.count("num_layers", d.num_layers)?,
            tree_count: r.count("tree_count", d.tree_count)?,
            tree_depth: r.count("tree_depth", d.tree_depth)?,
            tree_output_dim: r.count("tree_output_dim", d.tree_output_dim)?,
            learning_rate: r.real("learning_rate", d.learning_rate)?,
            batch_size: r.count("batch_size", d.batch_size)?,
        };
        for (key, v) in [
            ("num_layers", p.num_layers),
            ("tree_count", p.tree_count),
            ("tree_depth", p.tree_depth),
            ("tree_output_dim", p.tree_output_dim),
            ("batch_size", p.batch_size),
        ] {
            if v == 0 {
                return Err(LearnerError::InvalidHyperparameter {
                    key: key.into(),
                    reason: "must be positive".into(),
                });
            }
        }
        if !(p.learning_rate > 0.0) {
            return Err(LearnerError::InvalidHyperparameter {
                key: "learning_rate".into(),
                reason: "must be positive".into(),
            });
        }
        Ok(p)
    }

    pub fn trees_per_layer(&self) -> usize {
        (self.tree_count / self.num_layers).max(1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct TreeSlots {
    logits: usize,
    thresholds: usize,
    responses: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SoftOdtModel {
    n_inputs: usize,
    layers: usize,
    trees: usize,
    depth: usize,
    out_dim: usize,
    pub temperature: f64,
    link: Link,
    slots: Vec<Vec<TreeSlots>>,
    head_w: usize,
    head_b: usize,
    params: Vec<f64>,
    /// Regression targets are trained standardized; `(mean, std)` undoes it.
    pub target_scale: Option<(f64, f64)>,
}

/// Forward intermediates of one batch.
struct Cache {
    /// Layer inputs, `B x in_dim(l)`.
    inputs: Vec<Array2<f64>>,
    /// Feature-selection weights per (layer, tree, level).
    select: Vec<Vec<Vec<Vec<f64>>>>,
    /// Routing probabilities per (layer, tree), `B x depth`.
    route: Vec<Vec<Array2<f64>>>,
    /// Concatenated tree outputs of all layers, `B x (L*T*D)`.
    hidden: Array2<f64>,
}

impl SoftOdtModel {
    /// Zero-initialized model with the given architecture.
    pub fn new(
        n_inputs: usize,
        link: Link,
        layers: usize,
        trees: usize,
        depth: usize,
        out_dim: usize,
    ) -> Self {
        let mut offset = 0;
        let mut slots = Vec::with_capacity(layers);
        for l in 0..layers {
            let in_dim = n_inputs + l * trees * out_dim;
            let mut layer = Vec::with_capacity(trees);
            for _ in 0..trees {
                let t = TreeSlots {
                    logits: offset,
                    thresholds: offset + depth * in_dim,
                    responses: offset + depth * in_dim + depth,
                };
                offset = t.responses + (1 << depth) * out_dim;
                layer.push(t);
            }
            slots.push(layer);
        }
        let n_out = link.n_outputs();
        let head_w = offset;
        let head_b = head_w + n_out * layers * trees * out_dim;
        SoftOdtModel {
            n_inputs,
            layers,
            trees,
            depth,
            out_dim,
            temperature: 1.0,
            link,
            slots,
            head_w,
            head_b,
            params: vec![0.0; head_b + n_out],
            target_scale: None,
        }
    }

    /// Random logits, thresholds at random quantiles of the soft-selected
    /// training feature, zero leaf responses and a Glorot-uniform head.
    pub fn initialize(&mut self, x: ArrayView2<f64>, seed: u64) {
        let mut r = rng::seeded(seed);
        let probe_rows = x.nrows().min(1024);
        for l in 0..self.layers {
            let in_dim = self.in_dim(l);
            for t in 0..self.trees {
                let slot = self.slots[l][t];
                for level in 0..self.depth {
                    let base = slot.logits + level * in_dim;
                    for j in 0..in_dim {
                        self.params[base + j] = StandardNormal.sample(&mut r);
                    }
                    let sel = self.selection(l, t, level);
                    // earlier layers emit zeros while responses are zero, so
                    // only the raw-input part of the selection matters here
                    let mut vals: Vec<f64> = (0..probe_rows)
                        .map(|i| (0..self.n_inputs).map(|j| sel[j] * x[[i, j]]).sum())
                        .collect();
                    vals.sort_by(f64::total_cmp);
                    let q: f64 = r.random();
                    let b = if vals.is_empty() {
                        0.0
                    } else {
                        vals[((q * vals.len() as f64) as usize).min(vals.len() - 1)]
                    };
                    self.params[slot.thresholds + level] = b;
                }
            }
        }
        let fan_in = self.layers * self.trees * self.out_dim;
        let n_out = self.link.n_outputs();
        let a = (6.0 / (fan_in + n_out) as f64).sqrt();
        for w in &mut self.params[self.head_w..self.head_b] {
            *w = r.random_range(-a..a);
        }
    }

    pub fn n_inputs(&self) -> usize {
        self.n_inputs
    }

    fn in_dim(&self, layer: usize) -> usize {
        self.n_inputs + layer * self.trees * self.out_dim
    }

    fn hidden_dim(&self) -> usize {
        self.layers * self.trees * self.out_dim
    }

    fn selection(&self, layer: usize, tree: usize, level: usize) -> Vec<f64> {
        let in_dim = self.in_dim(layer);
        let base = self.slots[layer][tree].logits + level * in_dim;
        let logits = &self.params[base..base + in_dim];
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut w: Vec<f64> = logits
            .iter()
            .map(|a| ((a - max) / self.temperature).exp())
            .collect();
        let sum: f64 = w.iter().sum();
        w.iter_mut().for_each(|v| *v /= sum);
        w
    }

    /// Leaf probabilities from per-level right-branch probabilities; bit `l`
    /// of the leaf index is the branch taken at level `l`.
    fn leaf_probs(route: &[f64], out: &mut [f64]) {
        for (m, p) in out.iter_mut().enumerate() {
            *p = route
                .iter()
                .enumerate()
                .map(|(l, &c)| if (m >> l) & 1 == 1 { c } else { 1.0 - c })
                .product();
        }
    }

    fn forward(&self, x: ArrayView2<f64>) -> Cache {
        let b = x.nrows();
        let d = self.out_dim;
        let leaves = 1 << self.depth;
        let mut hidden = Array2::zeros((b, self.hidden_dim()));
        let mut inputs = Vec::with_capacity(self.layers);
        let mut select = Vec::with_capacity(self.layers);
        let mut route = Vec::with_capacity(self.layers);
        let mut probs = vec![0.0; leaves];
        for l in 0..self.layers {
            let in_dim = self.in_dim(l);
            let mut z = Array2::zeros((b, in_dim));
            z.slice_mut(s![.., ..self.n_inputs]).assign(&x);
            if l > 0 {
                let prev = l * self.trees * d;
                z.slice_mut(s![.., self.n_inputs..]).assign(&hidden.slice(s![.., ..prev]));
            }
            let mut layer_sel = Vec::with_capacity(self.trees);
            let mut layer_route = Vec::with_capacity(self.trees);
            for t in 0..self.trees {
                let slot = self.slots[l][t];
                let sels: Vec<Vec<f64>> = (0..self.depth).map(|lv| self.selection(l, t, lv)).collect();
                let mut c = Array2::zeros((b, self.depth));
                let resp = &self.params[slot.responses..slot.responses + leaves * d];
                let col = (l * self.trees + t) * d;
                for i in 0..b {
                    let zi = z.row(i);
                    for (lv, sel) in sels.iter().enumerate() {
                        let f: f64 = sel.iter().zip(zi.iter()).map(|(s, v)| s * v).sum();
                        let th = self.params[slot.thresholds + lv];
                        c[[i, lv]] = sigmoid((f - th) / self.temperature);
                    }
                    Self::leaf_probs(c.row(i).as_slice().expect("row-major"), &mut probs);
                    for k in 0..d {
                        hidden[[i, col + k]] = (0..leaves).map(|m| probs[m] * resp[m * d + k]).sum();
                    }
                }
                layer_sel.push(sels);
                layer_route.push(c);
            }
            inputs.push(z);
            select.push(layer_sel);
            route.push(layer_route);
        }
        Cache {
            inputs,
            select,
            route,
            hidden,
        }
    }

    fn head(&self, hidden: &Array2<f64>) -> Array2<f64> {
        let n_out = self.link.n_outputs();
        let h = self.hidden_dim();
        let w = &self.params[self.head_w..self.head_b];
        let bias = &self.params[self.head_b..];
        Array2::from_shape_fn((hidden.nrows(), n_out), |(i, o)| {
            bias[o] + (0..h).map(|j| w[o * h + j] * hidden[[i, j]]).sum::<f64>()
        })
    }

    /// Evaluates the equivalent hard oblivious trees (argmax feature per
    /// level, hard threshold test) through the same head.
    pub fn hard_scores(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let b = x.nrows();
        let d = self.out_dim;
        let mut hidden = Array2::zeros((b, self.hidden_dim()));
        for i in 0..b {
            for l in 0..self.layers {
                let in_dim = self.in_dim(l);
                let mut z = x.row(i).to_vec();
                z.extend(hidden.row(i).iter().take(l * self.trees * d));
                for t in 0..self.trees {
                    let slot = self.slots[l][t];
                    let mut leaf = 0;
                    for lv in 0..self.depth {
                        let logits = &self.params[slot.logits + lv * in_dim..slot.logits + (lv + 1) * in_dim];
                        let j = (0..in_dim).fold(0, |best, j| if logits[j] > logits[best] { j } else { best });
                        if z[j] > self.params[slot.thresholds + lv] {
                            leaf |= 1 << lv;
                        }
                    }
                    let col = (l * self.trees + t) * d;
                    for k in 0..d {
                        hidden[[i, col + k]] = self.params[slot.responses + leaf * d + k];
                    }
                }
            }
        }
        self.head(&hidden)
    }

    /// Sets every level's threshold so that routing is exactly 1/2 for
    /// inputs whose soft-selected value is `value`.
    #[cfg(test)]
    fn set_all_thresholds(&mut self, value: f64) {
        for layer in self.slots.clone() {
            for slot in layer {
                for lv in 0..self.depth {
                    self.params[slot.thresholds + lv] = value;
                }
            }
        }
    }
}

impl Differentiable for SoftOdtModel {
    fn params(&self) -> &[f64] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn link(&self) -> Link {
        self.link
    }

    fn scores(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let cache = self.forward(x);
        self.head(&cache.hidden)
    }

    fn loss_grad(&self, x: ArrayView2<f64>, labels: &[Label], grad: &mut [f64]) -> f64 {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let b = x.nrows();
        let n_out = self.link.n_outputs();
        let hd = self.hidden_dim();
        let d = self.out_dim;
        let leaves = 1usize << self.depth;
        let tau = self.temperature;
        let cache = self.forward(x);
        let scores = self.head(&cache.hidden);

        // head
        let mut loss = 0.0;
        let mut dscore = Array2::zeros((b, n_out));
        let mut g = vec![0.0; n_out];
        for i in 0..b {
            loss += self.link.loss_grad(scores.row(i).as_slice().expect("row-major"), labels[i], &mut g);
            for o in 0..n_out {
                dscore[[i, o]] = g[o] / b as f64;
            }
        }
        let w = &self.params[self.head_w..self.head_b];
        let mut dhidden = Array2::zeros((b, hd));
        for i in 0..b {
            for o in 0..n_out {
                let ds = dscore[[i, o]];
                grad[self.head_b + o] += ds;
                for j in 0..hd {
                    grad[self.head_w + o * hd + j] += ds * cache.hidden[[i, j]];
                    dhidden[[i, j]] += ds * w[o * hd + j];
                }
            }
        }

        // layers, last to first; earlier layers receive gradient through the
        // dense connections of later ones
        let mut probs = vec![0.0; leaves];
        let mut dprobs = vec![0.0; leaves];
        let mut prefix = vec![0.0; self.depth + 1];
        let mut suffix = vec![0.0; self.depth + 1];
        for l in (0..self.layers).rev() {
            let in_dim = self.in_dim(l);
            let z = &cache.inputs[l];
            let mut dz = Array2::<f64>::zeros((b, in_dim));
            for t in 0..self.trees {
                let slot = self.slots[l][t];
                let sels = &cache.select[l][t];
                let c = &cache.route[l][t];
                let col = (l * self.trees + t) * d;
                let mut dsel = vec![vec![0.0; in_dim]; self.depth];
                for i in 0..b {
                    let ci = c.row(i);
                    let ci = ci.as_slice().expect("row-major");
                    Self::leaf_probs(ci, &mut probs);
                    let mut dc = vec![0.0; self.depth];
                    for m in 0..leaves {
                        let mut dp = 0.0;
                        for k in 0..d {
                            let dout = dhidden[[i, col + k]];
                            grad[slot.responses + m * d + k] += probs[m] * dout;
                            dp += self.params[slot.responses + m * d + k] * dout;
                        }
                        dprobs[m] = dp;
                        // d P_m / d c_l = ±(product of the other levels' factors)
                        prefix[0] = 1.0;
                        for lv in 0..self.depth {
                            let f = if (m >> lv) & 1 == 1 { ci[lv] } else { 1.0 - ci[lv] };
                            prefix[lv + 1] = prefix[lv] * f;
                        }
                        suffix[self.depth] = 1.0;
                        for lv in (0..self.depth).rev() {
                            let f = if (m >> lv) & 1 == 1 { ci[lv] } else { 1.0 - ci[lv] };
                            suffix[lv] = suffix[lv + 1] * f;
                        }
                        for lv in 0..self.depth {
                            let sign = if (m >> lv) & 1 == 1 { 1.0 } else { -1.0 };
                            dc[lv] += dprobs[m] * sign * prefix[lv] * suffix[lv + 1];
                        }
                    }
                    let zi = z.row(i);
                    for lv in 0..self.depth {
                        let du = dc[lv] * ci[lv] * (1.0 - ci[lv]);
                        let df = du / tau;
                        grad[slot.thresholds + lv] -= df;
                        let sel = &sels[lv];
                        for j in 0..in_dim {
                            dsel[lv][j] += df * zi[j];
                            dz[[i, j]] += df * sel[j];
                        }
                    }
                }
                // softmax(A / τ) backward
                for lv in 0..self.depth {
                    let sel = &sels[lv];
                    let dot: f64 = sel.iter().zip(&dsel[lv]).map(|(s, g)| s * g).sum();
                    let base = slot.logits + lv * in_dim;
                    for j in 0..in_dim {
                        grad[base + j] += sel[j] * (dsel[lv][j] - dot) / tau;
                    }
                }
            }
            if l > 0 {
                let prev = l * self.trees * d;
                let upstream = dz.slice(s![.., self.n_inputs..]);
                let mut target = dhidden.slice_mut(s![.., ..prev]);
                target += &upstream;
            }
        }
        loss / b as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::training::{finite_difference, relative_error};
    use ndarray::Array2;

    fn random_model(seed: u64, n_inputs: usize, link: Link, layers: usize) -> SoftOdtModel {
        let mut m = SoftOdtModel::new(n_inputs, link, layers, 3, 3, 2);
        let mut r = rng::seeded(seed);
        for p in m.params.iter_mut() {
            *p = r.random_range(-1.0..1.0);
        }
        m
    }

    fn random_x(seed: u64, n: usize, p: usize) -> Array2<f64> {
        let mut r = rng::seeded(seed);
        Array2::from_shape_fn((n, p), |_| r.random_range(-2.0..2.0))
    }

    #[test]
    fn gradient_matches_central_differences() {
        for (seed, link, layers) in [
            (1, Link::Softmax(3), 1),
            (2, Link::Sigmoid, 2),
            (3, Link::Identity, 2),
        ] {
            let m = random_model(seed, 4, link, layers);
            let x = random_x(seed + 10, 9, 4);
            let labels: Vec<Label> = (0..9)
                .map(|i| match link {
                    Link::Identity => Label::Value(i as f64 * 0.3 - 1.0),
                    Link::Sigmoid => Label::Class(i % 2),
                    Link::Softmax(k) => Label::Class(i % k),
                })
                .collect();
            let mut analytic = vec![0.0; m.params.len()];
            m.loss_grad(x.view(), &labels, &mut analytic);
            let mut probe = m.clone();
            let mut scratch = vec![0.0; m.params.len()];
            let numeric = finite_difference(&m.params, 1e-5, |p| {
                probe.params.copy_from_slice(p);
                probe.loss_grad(x.view(), &labels, &mut scratch)
            });
            let err = relative_error(&analytic, &numeric);
            assert!(err < 1e-4, "{link:?}/{layers}: relative error {err}");
        }
    }

    #[test]
    fn vanishing_temperature_recovers_the_hard_tree() {
        let mut m = random_model(5, 3, Link::Identity, 2);
        m.temperature = 1e-9;
        let x = random_x(6, 20, 3);
        let soft = m.scores(x.view());
        let hard = m.hard_scores(x.view());
        for (a, b) in soft.iter().zip(hard.iter()) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn uniform_routing_averages_leaf_responses() {
        let mut m = random_model(7, 2, Link::Identity, 1);
        // with a single row z = (v, v) every soft selection equals v
        m.set_all_thresholds(0.25);
        let x = Array2::from_elem((1, 2), 0.25);
        let cache = m.forward(x.view());
        for t in 0..m.trees {
            let slot = m.slots[0][t];
            for k in 0..m.out_dim {
                let leaves = 1 << m.depth;
                let mean: f64 = (0..leaves)
                    .map(|l| m.params[slot.responses + l * m.out_dim + k])
                    .sum::<f64>()
                    / leaves as f64;
                assert!((cache.hidden[[0, t * m.out_dim + k]] - mean).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn initialization_is_seeded() {
        let x = random_x(3, 50, 4);
        let mut a = SoftOdtModel::new(4, Link::Sigmoid, 2, 4, 3, 1);
        let mut b = a.clone();
        a.initialize(x.view(), 9);
        b.initialize(x.view(), 9);
        assert_eq!(a, b);
        let slot = a.slots[0][0];
        let resp = &a.params[slot.responses..slot.responses + 8];
        assert!(resp.iter().all(|&r| r == 0.0));
    }

    #[test]
    fn trees_per_layer_split() {
        let p = SoftOdtParams {
            num_layers: 3,
            tree_count: 8,
            ..SoftOdtParams::default()
        };
        assert_eq!(p.trees_per_layer(), 2);
    }
}
