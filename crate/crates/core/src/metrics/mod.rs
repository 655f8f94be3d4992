//! Evaluation losses, seed aggregation, relative deterioration and the
//! Friedman rank test.

use ndarray::{Array2, ArrayView2};
use statrs::distribution::{ChiSquared, ContinuousCDF};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("{what}: expected length {expected}, got {got}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("empty input")]
    Empty,
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("model `{0}` has no unseen datasets")]
    NoUnseenDatasets(String),
    #[error("non-positive loss {0}")]
    NonPositiveLoss(f64),
    #[error("the Friedman test needs at least 2 models and 2 datasets, got {models} x {datasets}")]
    Degenerate { models: usize, datasets: usize },
    #[error("the exact permutation test supports at most 3 models and 6 datasets")]
    PermutationTooLarge,
}

pub type Result<T> = std::result::Result<T, MetricsError>;

/// Probabilities are clamped to `[CLAMP, 1 - CLAMP]` before taking logs.
pub const CLAMP: f64 = 1e-12;

/// Mean negative log-probability of the true class.
pub fn cross_entropy(probs: ArrayView2<f64>, labels: &[usize]) -> Result<f64> {
    if probs.nrows() != labels.len() {
        return Err(MetricsError::LengthMismatch {
            what: "labels",
            expected: probs.nrows(),
            got: labels.len(),
        });
    }
    if labels.is_empty() {
        return Err(MetricsError::Empty);
    }
    let mut total = 0.0;
    for (row, &y) in probs.rows().into_iter().zip(labels) {
        if y >= row.len() {
            return Err(MetricsError::LabelOutOfRange {
                label: y,
                classes: row.len(),
            });
        }
        total -= row[y].clamp(CLAMP, 1.0 - CLAMP).ln();
    }
    Ok(total / labels.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SquaredError {
    pub mse: f64,
    pub rmse: f64,
}

pub fn squared_error(preds: &[f64], targets: &[f64]) -> Result<SquaredError> {
    if preds.len() != targets.len() {
        return Err(MetricsError::LengthMismatch {
            what: "targets",
            expected: preds.len(),
            got: targets.len(),
        });
    }
    if preds.is_empty() {
        return Err(MetricsError::Empty);
    }
    let mse = preds.iter().zip(targets).map(|(p, y)| (p - y).powi(2)).sum::<f64>() / preds.len() as f64;
    Ok(SquaredError { mse, rmse: mse.sqrt() })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aggregate {
    pub mean: f64,
    /// Sample standard deviation over `sqrt(n)`; zero for a single value.
    pub sem: f64,
}

/// Mean and standard error over per-seed results.
pub fn aggregate_seeds(values: &[f64]) -> Aggregate {
    let n = values.len();
    if n == 0 {
        return Aggregate {
            mean: f64::NAN,
            sem: f64::NAN,
        };
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let sem = if n < 2 {
        0.0
    } else {
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        (var / n as f64).sqrt()
    };
    Aggregate { mean, sem }
}

/// Which loss a table reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    CrossEntropy,
    Mse,
    Rmse,
}

impl Metric {
    /// Display factor: cross-entropy is reported times 100.
    pub fn scale(self) -> f64 {
        match self {
            Metric::CrossEntropy => 100.0,
            Metric::Mse | Metric::Rmse => 1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Metric::CrossEntropy => "cross-entropy x100",
            Metric::Mse => "MSE",
            Metric::Rmse => "RMSE",
        }
    }
}

/// `"<mean> ± <sem>"` with two decimals, after applying `metric`'s scale.
pub fn format_cell(agg: Aggregate, metric: Metric) -> String {
    let s = metric.scale();
    format!("{:.2} ± {:.2}", agg.mean * s, agg.sem * s)
}

/// Models x datasets losses (lower is better) with the datasets each model
/// has not been tuned on in its original publication marked unseen.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonMatrix {
    pub models: Vec<String>,
    pub datasets: Vec<String>,
    pub losses: Array2<f64>,
    pub unseen: Array2<bool>,
}

impl ComparisonMatrix {
    pub fn new(models: Vec<String>, datasets: Vec<String>, losses: Array2<f64>, unseen: Array2<bool>) -> Result<Self> {
        let shape = (models.len(), datasets.len());
        for (what, got) in [("losses", losses.dim()), ("unseen mask", unseen.dim())] {
            if got != shape {
                return Err(MetricsError::LengthMismatch {
                    what,
                    expected: shape.0 * shape.1,
                    got: got.0 * got.1,
                });
            }
        }
        Ok(ComparisonMatrix {
            models,
            datasets,
            losses,
            unseen,
        })
    }
}

/// Geometric mean over `model`'s unseen datasets of its loss relative to the
/// best loss on that dataset, minus one, in percent.
pub fn relative_deterioration(m: &ComparisonMatrix, model: usize) -> Result<f64> {
    let mut log_sum = 0.0;
    let mut count = 0usize;
    for d in 0..m.datasets.len() {
        if !m.unseen[[model, d]] {
            continue;
        }
        let column = m.losses.column(d);
        let best = column.iter().copied().fold(f64::INFINITY, f64::min);
        for &l in &[column[model], best] {
            if !(l > 0.0) {
                return Err(MetricsError::NonPositiveLoss(l));
            }
        }
        log_sum += (column[model] / best).ln();
        count += 1;
    }
    if count == 0 {
        return Err(MetricsError::NoUnseenDatasets(m.models[model].clone()));
    }
    Ok(((log_sum / count as f64).exp() - 1.0) * 100.0)
}

/// Ranks within one dataset, 1 = lowest loss; ties share their average rank.
pub fn rank_row(losses: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..losses.len()).collect();
    order.sort_by(|&a, &b| losses[a].total_cmp(&losses[b]));
    let mut ranks = vec![0.0; losses.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && losses[order[j + 1]] == losses[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &o in &order[i..=j] {
            ranks[o] = avg;
        }
        i = j + 1;
    }
    ranks
}

#[derive(Debug, Clone, PartialEq)]
pub struct FriedmanResult {
    pub rank_sums: Vec<f64>,
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
    /// `p_value < 0.05`.
    pub reject: bool,
}

pub const SIGNIFICANCE: f64 = 0.05;

fn rank_matrix(losses: ArrayView2<f64>) -> Result<Vec<Vec<f64>>> {
    let (k, n) = losses.dim();
    if k < 2 || n < 2 {
        return Err(MetricsError::Degenerate { models: k, datasets: n });
    }
    Ok((0..n).map(|d| rank_row(&losses.column(d).to_vec())).collect())
}

/// `12/(N k (k+1)) Σ R_j² − 3 N (k+1)` over rank sums `R_j`.
fn statistic(rank_sums: &[f64], n: usize) -> f64 {
    let k = rank_sums.len() as f64;
    let n = n as f64;
    let sum_sq: f64 = rank_sums.iter().map(|r| r * r).sum();
    12.0 / (n * k * (k + 1.0)) * sum_sq - 3.0 * n * (k + 1.0)
}

fn rank_sums(ranks: &[Vec<f64>], k: usize) -> Vec<f64> {
    (0..k).map(|j| ranks.iter().map(|r| r[j]).sum()).collect()
}

/// Friedman test on a models x datasets loss matrix with the χ² (k − 1 df)
/// approximation for the p-value.
pub fn friedman_test(losses: ArrayView2<f64>) -> Result<FriedmanResult> {
    let ranks = rank_matrix(losses)?;
    let k = losses.nrows();
    let sums = rank_sums(&ranks, k);
    let stat = statistic(&sums, ranks.len());
    // rounding can leave a tiny negative value for all-tied inputs
    let stat = if stat.abs() < 1e-9 { 0.0 } else { stat };
    let chi = ChiSquared::new((k - 1) as f64).expect("positive degrees of freedom");
    let p_value = chi.sf(stat).clamp(0.0, 1.0);
    Ok(FriedmanResult {
        rank_sums: sums,
        statistic: stat,
        df: k - 1,
        p_value,
        reject: p_value < SIGNIFICANCE,
    })
}

fn permutations(v: &[f64]) -> Vec<Vec<f64>> {
    if v.len() <= 1 {
        return vec![v.to_vec()];
    }
    let mut out = Vec::new();
    for i in 0..v.len() {
        let mut rest = v.to_vec();
        let head = rest.remove(i);
        for mut tail in permutations(&rest) {
            tail.insert(0, head);
            out.push(tail);
        }
    }
    out
}

/// Exact p-value of the Friedman statistic: the share of all `k!^N`
/// within-dataset rank permutations whose statistic is at least the
/// observed one. Limited to `k ≤ 3`, `N ≤ 6`.
pub fn friedman_exact_p(losses: ArrayView2<f64>) -> Result<f64> {
    let ranks = rank_matrix(losses)?;
    let (k, n) = losses.dim();
    if k > 3 || n > 6 {
        return Err(MetricsError::PermutationTooLarge);
    }
    let observed = statistic(&rank_sums(&ranks, k), n);
    let perms: Vec<Vec<Vec<f64>>> = ranks.iter().map(|r| permutations(r)).collect();
    let per = perms[0].len();
    let total = per.pow(n as u32);
    let mut hits = 0usize;
    let mut sums = vec![0.0; k];
    for mut code in 0..total {
        sums.iter_mut().for_each(|s| *s = 0.0);
        for p in &perms {
            let row = &p[code % per];
            code /= per;
            for (s, r) in sums.iter_mut().zip(row) {
                *s += r;
            }
        }
        if statistic(&sums, n) >= observed - 1e-9 {
            hits += 1;
        }
    }
    Ok(hits as f64 / total as f64)
}

/// Friedman p-value of every pair of models on its 2 x N submatrix; the
/// diagonal is 1.
pub fn pairwise_friedman(losses: ArrayView2<f64>) -> Result<Array2<f64>> {
    let k = losses.nrows();
    let mut out = Array2::from_elem((k, k), 1.0);
    for a in 0..k {
        for b in a + 1..k {
            let sub = ndarray::stack(ndarray::Axis(0), &[losses.row(a), losses.row(b)]).expect("equal rows");
            let p = friedman_test(sub.view())?.p_value;
            out[[a, b]] = p;
            out[[b, a]] = p;
        }
    }
    Ok(out)
}
