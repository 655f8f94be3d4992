//! Combining member predictions: uniform mixtures, validation-loss weights
//! and subset selection.

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use thiserror::Error;

use crate::learners::Predictions;
use crate::rng;

#[derive(Debug, Error, PartialEq)]
pub enum EnsembleError {
    #[error("no members to combine")]
    Empty,
    #[error("member {index} has shape {got:?}, expected {expected:?}")]
    ShapeMismatch {
        index: usize,
        expected: (usize, usize),
        got: (usize, usize),
    },
    #[error("{weights} weights for {members} members")]
    WeightCount { weights: usize, members: usize },
    #[error("weights must be non-negative and sum to 1")]
    InvalidWeights,
    #[error("subset size {k} outside 1..={members}")]
    SubsetSize { k: usize, members: usize },
}

pub type Result<T> = std::result::Result<T, EnsembleError>;

/// Validation losses at or below this value are raised to it before
/// inverting.
pub const LOSS_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnsembleMode {
    Uniform,
    Weighted,
}

/// How validation losses turn into weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WeightRule {
    /// `w_k ∝ 1 / l_k`: lower validation loss, larger weight.
    #[default]
    InverseLoss,
    /// `w_k ∝ l_k`, the literal reading of "normalized validation loss".
    Proportional,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleSpec {
    pub members: Vec<String>,
    pub val_losses: Vec<f64>,
    pub weights: Vec<f64>,
    pub mode: EnsembleMode,
}

impl EnsembleSpec {
    pub fn new(members: Vec<String>, val_losses: Vec<f64>, mode: EnsembleMode, rule: WeightRule) -> Result<Self> {
        let weights = match mode {
            EnsembleMode::Uniform => uniform_weights(val_losses.len())?,
            EnsembleMode::Weighted => compute_weights(&val_losses, rule)?,
        };
        Ok(EnsembleSpec {
            members,
            val_losses,
            weights,
            mode,
        })
    }

    pub fn combine(&self, preds: &[Predictions]) -> Result<Predictions> {
        combine_weighted(preds, &self.weights)
    }
}

fn uniform_weights(k: usize) -> Result<Vec<f64>> {
    if k == 0 {
        return Err(EnsembleError::Empty);
    }
    Ok(vec![1.0 / k as f64; k])
}

/// Normalized member weights from validation losses. Equal losses give
/// exactly `1/K` each.
pub fn compute_weights(val_losses: &[f64], rule: WeightRule) -> Result<Vec<f64>> {
    let k = val_losses.len();
    if k == 0 {
        return Err(EnsembleError::Empty);
    }
    let losses: Vec<f64> = val_losses.iter().map(|l| l.max(LOSS_FLOOR)).collect();
    if losses.iter().all(|&l| l == losses[0]) {
        return uniform_weights(k);
    }
    let raw: Vec<f64> = match rule {
        WeightRule::InverseLoss => losses.iter().map(|l| 1.0 / l).collect(),
        WeightRule::Proportional => losses,
    };
    // summing in sorted order makes the result independent of member order
    let mut sorted = raw.clone();
    sorted.sort_by(f64::total_cmp);
    let total: f64 = sorted.iter().sum();
    Ok(raw.into_iter().map(|r| r / total).collect())
}

fn shape(p: &Predictions) -> (usize, usize) {
    (p.len(), p.width())
}

fn check_members(members: &[Predictions]) -> Result<()> {
    let first = members.first().ok_or(EnsembleError::Empty)?;
    let expected = shape(first);
    for (index, m) in members.iter().enumerate() {
        if shape(m) != expected || m.is_classification() != first.is_classification() {
            return Err(EnsembleError::ShapeMismatch {
                index,
                expected,
                got: shape(m),
            });
        }
    }
    Ok(())
}

/// Per-sample convex combination `Σ w_k p_k`.
pub fn combine_weighted(members: &[Predictions], weights: &[f64]) -> Result<Predictions> {
    check_members(members)?;
    if weights.len() != members.len() {
        return Err(EnsembleError::WeightCount {
            weights: weights.len(),
            members: members.len(),
        });
    }
    let total: f64 = weights.iter().sum();
    if weights.iter().any(|w| !(*w >= 0.0)) || (total - 1.0).abs() > 1e-12 {
        return Err(EnsembleError::InvalidWeights);
    }
    Ok(match &members[0] {
        Predictions::Probabilities(first) => {
            let mut out = Array2::zeros(first.dim());
            for (m, &w) in members.iter().zip(weights) {
                if let Predictions::Probabilities(p) = m {
                    out.scaled_add(w, p);
                }
            }
            Predictions::Probabilities(out)
        }
        Predictions::Values(first) => {
            let mut out = Array1::zeros(first.len());
            for (m, &w) in members.iter().zip(weights) {
                if let Predictions::Values(v) = m {
                    out.scaled_add(w, v);
                }
            }
            Predictions::Values(out)
        }
    })
}

/// Equal-weight mixture of the members.
pub fn combine_uniform(members: &[Predictions]) -> Result<Predictions> {
    combine_weighted(members, &uniform_weights(members.len())?)
}

/// Shannon entropy (nats) of a probability vector.
pub fn entropy(p: &[f64]) -> f64 {
    -p.iter().filter(|&&x| x > 0.0).map(|&x| x * x.ln()).sum::<f64>()
}

/// Uncertainty of one member's output for one sample (higher = less
/// confident): entropy for class distributions, distance from the ensemble
/// mean `center` for regression values.
pub fn uncertainty_score(row: &[f64], classification: bool, center: f64) -> f64 {
    if classification {
        entropy(row)
    } else {
        (row[0] - center).abs()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SubsetStrategy {
    /// Lowest validation loss first; ties by member index.
    ValidationLoss,
    /// Per sample, the members with the lowest uncertainty.
    Uncertainty,
    /// A seeded random order.
    Random,
}

/// Chosen members, ascending by index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Subset {
    Global(Vec<usize>),
    PerExample(Vec<Vec<usize>>),
}

fn first_k(mut order: Vec<usize>, k: usize) -> Vec<usize> {
    order.truncate(k);
    order.sort_unstable();
    order
}

/// Member order used by the global strategies.
fn global_order(val_losses: &[f64], strategy: SubsetStrategy, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..val_losses.len()).collect();
    match strategy {
        SubsetStrategy::ValidationLoss => {
            order.sort_by(|&a, &b| val_losses[a].total_cmp(&val_losses[b]).then(a.cmp(&b)));
        }
        SubsetStrategy::Random => order.shuffle(&mut rng::seeded(seed)),
        SubsetStrategy::Uncertainty => {}
    }
    order
}

pub fn select_subset(
    members: &[Predictions],
    val_losses: &[f64],
    strategy: SubsetStrategy,
    k: usize,
    seed: u64,
) -> Result<Subset> {
    check_members(members)?;
    let n_members = members.len();
    if k == 0 || k > n_members {
        return Err(EnsembleError::SubsetSize { k, members: n_members });
    }
    if val_losses.len() != n_members {
        return Err(EnsembleError::WeightCount {
            weights: val_losses.len(),
            members: n_members,
        });
    }
    Ok(match strategy {
        SubsetStrategy::Uncertainty => {
            let classification = members[0].is_classification();
            let n = members[0].len();
            let per_sample = (0..n)
                .map(|i| {
                    let rows: Vec<Vec<f64>> = members.iter().map(|m| m.row(i)).collect();
                    let center = rows.iter().map(|r| r[0]).sum::<f64>() / n_members as f64;
                    let scores: Vec<f64> = rows
                        .iter()
                        .map(|r| uncertainty_score(r, classification, center))
                        .collect();
                    let mut order: Vec<usize> = (0..n_members).collect();
                    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(a.cmp(&b)));
                    first_k(order, k)
                })
                .collect();
            Subset::PerExample(per_sample)
        }
        _ => Subset::Global(first_k(global_order(val_losses, strategy, seed), k)),
    })
}

/// Uniform combination over the chosen members (per sample for
/// [`Subset::PerExample`]).
pub fn combine_subset(members: &[Predictions], subset: &Subset) -> Result<Predictions> {
    match subset {
        Subset::Global(idx) => {
            let chosen: Vec<Predictions> = idx.iter().map(|&i| members[i].clone()).collect();
            combine_uniform(&chosen)
        }
        Subset::PerExample(sets) => {
            check_members(members)?;
            let n = members[0].len();
            if sets.len() != n {
                return Err(EnsembleError::ShapeMismatch {
                    index: 0,
                    expected: (n, members[0].width()),
                    got: (sets.len(), members[0].width()),
                });
            }
            let width = members[0].width();
            let mut out = Array2::zeros((n, width));
            for (i, set) in sets.iter().enumerate() {
                let w = 1.0 / set.len() as f64;
                for &m in set {
                    for (o, v) in out.row_mut(i).iter_mut().zip(members[m].row(i)) {
                        *o += w * v;
                    }
                }
            }
            Ok(match members[0] {
                Predictions::Probabilities(_) => Predictions::Probabilities(out),
                Predictions::Values(_) => Predictions::Values(out.column(0).to_owned()),
            })
        }
    }
}

/// Loss of the combined subset for every size `k = 1..=K`.
pub fn subset_curve<L>(
    members: &[Predictions],
    val_losses: &[f64],
    strategy: SubsetStrategy,
    seed: u64,
    loss: L,
) -> Result<Vec<(usize, f64)>>
where
    L: Fn(&Predictions) -> f64,
{
    (1..=members.len())
        .map(|k| {
            let subset = select_subset(members, val_losses, strategy, k, seed)?;
            Ok((k, loss(&combine_subset(members, &subset)?)))
        })
        .collect()
}
