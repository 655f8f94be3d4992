//! Epoch loop with patience-based early stopping and best-epoch restoration,
//! plus the Adam minibatch trainer shared by the differentiable learners.

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;

use super::link::{Label, Link};
use super::LearnerError;
use crate::rng;

/// When to stop iterating.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StoppingRule {
    /// Stop after this many consecutive epochs without a strict improvement.
    pub patience: usize,
    pub max_epochs: usize,
}

impl Default for StoppingRule {
    fn default() -> Self {
        StoppingRule {
            patience: 100,
            max_epochs: 1000,
        }
    }
}

/// Per-epoch validation losses and where the kept parameters came from.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainTrace {
    pub val_losses: Vec<f64>,
    /// 1-based epoch whose parameters were restored.
    pub best_epoch: usize,
    pub best_loss: f64,
    /// Set when the loop ran out of epochs before patience was exhausted.
    pub hit_max_epochs: bool,
}

impl TrainTrace {
    pub fn epochs_run(&self) -> usize {
        self.val_losses.len()
    }
}

/// Something that can be trained one epoch at a time.
pub trait EpochTrainer {
    type State;

    /// Runs one epoch and returns the validation loss afterwards.
    fn run_epoch(&mut self) -> Result<f64, LearnerError>;
    fn snapshot(&self) -> Self::State;
    fn restore(&mut self, state: Self::State);
}

/// Trains until `rule.patience` consecutive epochs fail to strictly improve
/// the validation loss (or `rule.max_epochs` is reached), then restores the
/// parameters of the best epoch.
pub fn train_iterative<T: EpochTrainer>(
    trainer: &mut T,
    rule: StoppingRule,
) -> Result<TrainTrace, LearnerError> {
    if rule.patience == 0 {
        return Err(LearnerError::InvalidHyperparameter {
            key: "patience".into(),
            reason: "must be at least 1".into(),
        });
    }
    let mut losses = Vec::new();
    let mut best: Option<(usize, f64, T::State)> = None;
    let mut stale = 0;
    let mut stopped_early = false;
    for epoch in 1..=rule.max_epochs {
        let loss = trainer.run_epoch()?;
        if !loss.is_finite() {
            return Err(LearnerError::NonFiniteLoss { epoch });
        }
        losses.push(loss);
        if best.as_ref().is_none_or(|(_, b, _)| loss < *b) {
            best = Some((epoch, loss, trainer.snapshot()));
            stale = 0;
        } else {
            stale += 1;
            if stale >= rule.patience {
                stopped_early = true;
                break;
            }
        }
    }
    let Some((best_epoch, best_loss, state)) = best else {
        return Err(LearnerError::InvalidHyperparameter {
            key: "max_epochs".into(),
            reason: "must be at least 1".into(),
        });
    };
    trainer.restore(state);
    Ok(TrainTrace {
        val_losses: losses,
        best_epoch,
        best_loss,
        hit_max_epochs: !stopped_early,
    })
}

/// Runs exactly `epochs` epochs and keeps the final parameters.
pub fn train_fixed<T: EpochTrainer>(trainer: &mut T, epochs: usize) -> Result<TrainTrace, LearnerError> {
    let mut losses = Vec::with_capacity(epochs);
    for epoch in 1..=epochs {
        let loss = trainer.run_epoch()?;
        if !loss.is_finite() {
            return Err(LearnerError::NonFiniteLoss { epoch });
        }
        losses.push(loss);
    }
    let best_loss = losses.last().copied().unwrap_or(f64::NAN);
    Ok(TrainTrace {
        val_losses: losses,
        best_epoch: epochs,
        best_loss,
        hit_max_epochs: false,
    })
}

/// Adam with a fixed learning rate and no schedule.
#[derive(Debug, Clone)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(n_params: usize, lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for (((p, g), m), v) in params.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            *p -= self.lr * (*m / c1) / ((*v / c2).sqrt() + self.eps);
        }
    }
}

/// A model with a flat parameter vector and an analytic loss gradient.
pub trait Differentiable {
    fn params(&self) -> &[f64];
    fn params_mut(&mut self) -> &mut [f64];
    fn link(&self) -> Link;
    /// Raw scores, one row per input row.
    fn scores(&self, x: ArrayView2<f64>) -> Array2<f64>;
    /// Mean training loss over the rows of `x`; overwrites `grad` with its gradient.
    fn loss_grad(&self, x: ArrayView2<f64>, labels: &[Label], grad: &mut [f64]) -> f64;
}

/// Validation loss of raw scores: cross-entropy for classification, mean
/// squared error for regression.
pub fn score_loss(link: Link, scores: ArrayView2<f64>, labels: &[Label]) -> f64 {
    let mut scratch = vec![0.0; link.n_outputs()];
    let total: f64 = scores
        .rows()
        .into_iter()
        .zip(labels)
        .map(|(s, &y)| {
            let s = s.to_vec();
            let l = link.loss_grad(&s, y, &mut scratch);
            if link == Link::Identity {
                2.0 * l
            } else {
                l
            }
        })
        .sum();
    total / labels.len() as f64
}

/// Minibatch Adam over a [`Differentiable`] model.
pub struct MinibatchTrainer<'a, M> {
    pub model: M,
    adam: Adam,
    x: ArrayView2<'a, f64>,
    labels: &'a [Label],
    val_x: ArrayView2<'a, f64>,
    val_labels: &'a [Label],
    batch_size: usize,
    order: Vec<usize>,
    rng: rng::Rng,
    grad: Vec<f64>,
}

impl<'a, M: Differentiable> MinibatchTrainer<'a, M> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        model: M,
        learning_rate: f64,
        x: ArrayView2<'a, f64>,
        labels: &'a [Label],
        val_x: ArrayView2<'a, f64>,
        val_labels: &'a [Label],
        batch_size: usize,
        seed: u64,
    ) -> Self {
        let n_params = model.params().len();
        MinibatchTrainer {
            adam: Adam::new(n_params, learning_rate),
            model,
            x,
            labels,
            val_x,
            val_labels,
            batch_size: batch_size.clamp(1, x.nrows().max(1)),
            order: (0..x.nrows()).collect(),
            rng: rng::seeded(seed),
            grad: vec![0.0; n_params],
        }
    }
}

impl<M: Differentiable> EpochTrainer for MinibatchTrainer<'_, M> {
    type State = Vec<f64>;

    fn run_epoch(&mut self) -> Result<f64, LearnerError> {
        self.order.shuffle(&mut self.rng);
        for batch in self.order.chunks(self.batch_size) {
            let xb = self.x.select(Axis(0), batch);
            let yb: Vec<Label> = batch.iter().map(|&i| self.labels[i]).collect();
            let loss = self.model.loss_grad(xb.view(), &yb, &mut self.grad);
            if !loss.is_finite() || self.grad.iter().any(|g| !g.is_finite()) {
                return Ok(f64::NAN);
            }
            self.adam.step(self.model.params_mut(), &self.grad);
        }
        let scores = self.model.scores(self.val_x);
        Ok(score_loss(self.model.link(), scores.view(), self.val_labels))
    }

    fn snapshot(&self) -> Vec<f64> {
        self.model.params().to_vec()
    }

    fn restore(&mut self, state: Vec<f64>) {
        self.model.params_mut().copy_from_slice(&state);
    }
}

/// Central-difference gradient of `loss` at `params`; test support for the
/// analytic gradients.
pub fn finite_difference<F: FnMut(&[f64]) -> f64>(params: &[f64], h: f64, mut loss: F) -> Vec<f64> {
    let mut p = params.to_vec();
    (0..p.len())
        .map(|i| {
            let orig = p[i];
            p[i] = orig + h;
            let up = loss(&p);
            p[i] = orig - h;
            let down = loss(&p);
            p[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// `||a - b|| / (||a|| + ||b||)`, zero when both vanish.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let norm = a.iter().map(|x| x * x).sum::<f64>().sqrt() + b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        0.0
    } else {
        diff / norm
    }
}
