//! Output links: raw model scores to predictions, per-sample training loss
//! and its derivatives with respect to the raw scores.

use crate::data::Task;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Link {
    /// Regression; loss `(s - y)^2 / 2`.
    Identity,
    /// Binary classification with a single logit.
    Sigmoid,
    /// `k`-class classification with one score per class.
    Softmax(usize),
}

/// Training target of one sample.
#[derive(Debug, Clone, Copy)]
pub enum Label {
    Class(usize),
    Value(f64),
}

pub(crate) const MIN_HESSIAN: f64 = 1e-16;

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub(crate) fn softmax_into(scores: &[f64], out: &mut [f64]) {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, s) in out.iter_mut().zip(scores) {
        *o = (s - max).exp();
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

impl Link {
    pub fn for_task(task: Task) -> Link {
        match task {
            Task::Regression => Link::Identity,
            Task::Binary => Link::Sigmoid,
            Task::Multiclass(k) => Link::Softmax(k),
        }
    }

    /// Raw scores per sample.
    pub fn n_outputs(self) -> usize {
        match self {
            Link::Identity | Link::Sigmoid => 1,
            Link::Softmax(k) => k,
        }
    }

    /// Width of the prediction row: class probabilities, or one value.
    pub fn prediction_width(self) -> usize {
        match self {
            Link::Identity => 1,
            Link::Sigmoid => 2,
            Link::Softmax(k) => k,
        }
    }

    pub fn predict_into(self, scores: &[f64], out: &mut [f64]) {
        match self {
            Link::Identity => out[0] = scores[0],
            Link::Sigmoid => {
                let p = sigmoid(scores[0]);
                out[0] = 1.0 - p;
                out[1] = p;
            }
            Link::Softmax(_) => softmax_into(scores, out),
        }
    }

    /// Loss of one sample; writes d loss / d score into `grad`.
    pub fn loss_grad(self, scores: &[f64], label: Label, grad: &mut [f64]) -> f64 {
        match (self, label) {
            (Link::Identity, Label::Value(y)) => {
                let r = scores[0] - y;
                grad[0] = r;
                0.5 * r * r
            }
            (Link::Sigmoid, Label::Class(c)) => {
                let y = c as f64;
                let s = scores[0];
                grad[0] = sigmoid(s) - y;
                softplus(s) - y * s
            }
            (Link::Softmax(_), Label::Class(c)) => {
                softmax_into(scores, grad);
                let loss = -grad[c].ln();
                let loss = if loss.is_finite() {
                    loss
                } else {
                    // fall back to log-sum-exp when the probability underflows
                    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    let lse = max + scores.iter().map(|s| (s - max).exp()).sum::<f64>().ln();
                    lse - scores[c]
                };
                grad[c] -= 1.0;
                loss
            }
            _ => panic!("label kind does not match link {self:?}"),
        }
    }

    /// Gradient and (diagonal) hessian of the loss with respect to each score.
    pub fn grad_hess(self, scores: &[f64], label: Label, grad: &mut [f64], hess: &mut [f64]) {
        match (self, label) {
            (Link::Identity, Label::Value(y)) => {
                grad[0] = scores[0] - y;
                hess[0] = 1.0;
            }
            (Link::Sigmoid, Label::Class(c)) => {
                let p = sigmoid(scores[0]);
                grad[0] = p - c as f64;
                hess[0] = (p * (1.0 - p)).max(MIN_HESSIAN);
            }
            (Link::Softmax(_), Label::Class(c)) => {
                softmax_into(scores, grad);
                for (h, p) in hess.iter_mut().zip(grad.iter()) {
                    *h = (p * (1.0 - p)).max(MIN_HESSIAN);
                }
                grad[c] -= 1.0;
            }
            _ => panic!("label kind does not match link {self:?}"),
        }
    }
}
