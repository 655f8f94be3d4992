//! Fully connected network with a linear output layer.

use ndarray::{Array2, ArrayView2};
use rand::Rng;

use super::link::{Label, Link};
use super::training::Differentiable;
use super::{HpReader, LearnerError};
use crate::hpo::Hyperparameters;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative expressed through the activation output `a`.
    fn slope(self, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if a > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - a * a,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    pub hidden_size: usize,
    pub num_layers: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub activation: Activation,
}

impl Default for MlpParams {
    fn default() -> Self {
        MlpParams {
            hidden_size: 32,
            num_layers: 2,
            learning_rate: 1e-3,
            batch_size: 128,
            activation: Activation::Relu,
        }
    }
}

pub const KEYS: [&str; 5] = ["hidden_size", "num_layers", "learning_rate", "batch_size", "activation"];

impl MlpParams {
    pub fn from_hp(hp: &Hyperparameters) -> Result<Self, LearnerError> {
        let r = HpReader::new(hp, &KEYS)?;
        let d = MlpParams::default();
        let activation = match r.text("activation", "relu").as_str() {
            "relu" => Activation::Relu,
            "tanh" => Activation::Tanh,
            other => {
                return Err(LearnerError::InvalidHyperparameter {
                    key: "activation".into(),
                    reason: format!("must be relu or tanh, got `{other}`"),
                })
            }
        };
        let p = MlpParams {
            hidden_size: r.count("hidden_size", d.hidden_size)?,
            num_layers: r.count("num_layers", d.num_layers)?,
            learning_rate: r.real("learning_rate", d.learning_rate)?,
            batch_size: r.count("batch_size", d.batch_size)?,
            activation,
        };
        for (key, v) in [("hidden_size", p.hidden_size), ("batch_size", p.batch_size)] {
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
}

/// Weights are stored row-major per layer (`out x in`) followed by the bias,
/// all in one flat vector.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    sizes: Vec<usize>,
    offsets: Vec<usize>,
    activation: Activation,
    link: Link,
    params: Vec<f64>,
    /// Regression targets are trained standardized; `(mean, std)` undoes it.
    pub target_scale: Option<(f64, f64)>,
}

impl MlpModel {
    pub fn new(n_inputs: usize, hidden: &[usize], link: Link, activation: Activation) -> Self {
        let mut sizes = vec![n_inputs];
        sizes.extend_from_slice(hidden);
        sizes.push(link.n_outputs());
        let mut offsets = vec![0];
        for w in sizes.windows(2) {
            let last = *offsets.last().expect("non-empty");
            offsets.push(last + w[0] * w[1] + w[1]);
        }
        let n = *offsets.last().expect("non-empty");
        MlpModel {
            sizes,
            offsets,
            activation,
            link,
            params: vec![0.0; n],
            target_scale: None,
        }
    }

    /// Glorot-uniform weights, zero biases.
    pub fn initialize(&mut self, seed: u64) {
        let mut r = rng::seeded(seed);
        for l in 0..self.sizes.len() - 1 {
            let (fan_in, fan_out) = (self.sizes[l], self.sizes[l + 1]);
            let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let start = self.offsets[l];
            for w in &mut self.params[start..start + fan_in * fan_out] {
                *w = r.random_range(-a..a);
            }
            for b in &mut self.params[start + fan_in * fan_out..self.offsets[l + 1]] {
                *b = 0.0;
            }
        }
    }

    pub fn n_inputs(&self) -> usize {
        self.sizes[0]
    }

    fn n_layers(&self) -> usize {
        self.sizes.len() - 1
    }

    /// Activations of every layer, input first; the last entry holds the raw
    /// scores.
    fn forward(&self, x: ArrayView2<f64>) -> Vec<Array2<f64>> {
        let mut acts = vec![x.to_owned()];
        for l in 0..self.n_layers() {
            let (fan_in, fan_out) = (self.sizes[l], self.sizes[l + 1]);
            let start = self.offsets[l];
            let w = ArrayView2::from_shape((fan_out, fan_in), &self.params[start..start + fan_in * fan_out])
                .expect("layer slice");
            let b = &self.params[start + fan_in * fan_out..self.offsets[l + 1]];
            let mut z = acts[l].dot(&w.t());
            let last = l + 1 == self.n_layers();
            for mut row in z.rows_mut() {
                for (v, bias) in row.iter_mut().zip(b) {
                    *v += bias;
                    if !last {
                        *v = self.activation.apply(*v);
                    }
                }
            }
            acts.push(z);
        }
        acts
    }
}

impl Differentiable for MlpModel {
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
        self.forward(x).pop().expect("output layer")
    }

    fn loss_grad(&self, x: ArrayView2<f64>, labels: &[Label], grad: &mut [f64]) -> f64 {
        let acts = self.forward(x);
        let b = x.nrows();
        let n_out = self.link.n_outputs();
        let scores = &acts[self.n_layers()];
        let mut delta = Array2::zeros((b, n_out));
        let mut g = vec![0.0; n_out];
        let mut loss = 0.0;
        for i in 0..b {
            loss += self.link.loss_grad(&scores.row(i).to_vec(), labels[i], &mut g);
            for o in 0..n_out {
                delta[[i, o]] = g[o] / b as f64;
            }
        }
        for l in (0..self.n_layers()).rev() {
            let (fan_in, fan_out) = (self.sizes[l], self.sizes[l + 1]);
            let start = self.offsets[l];
            let dw = delta.t().dot(&acts[l]);
            grad[start..start + fan_in * fan_out].copy_from_slice(dw.as_standard_layout().as_slice().expect("contiguous"));
            for (o, gb) in grad[start + fan_in * fan_out..self.offsets[l + 1]].iter_mut().enumerate() {
                *gb = delta.column(o).sum();
            }
            if l > 0 {
                let w = ArrayView2::from_shape((fan_out, fan_in), &self.params[start..start + fan_in * fan_out])
                    .expect("layer slice");
                let mut back = delta.dot(&w);
                let a = &acts[l];
                ndarray::Zip::from(&mut back)
                    .and(a)
                    .for_each(|d, &av| *d *= self.activation.slope(av));
                delta = back;
            }
        }
        loss / b as f64
    }
}
