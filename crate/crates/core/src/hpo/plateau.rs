//! Best-so-far curves of optimization runs and where they flatten out.

use crate::metrics::aggregate_seeds;

/// Running minimum of the losses in trial order. Failed trials (`NaN`) carry
/// the previous best; the curve is `+inf` until the first finite loss.
pub fn best_so_far(losses: &[f64]) -> Vec<f64> {
    let mut best = f64::INFINITY;
    losses
        .iter()
        .map(|&l| {
            if l < best {
                best = l;
            }
            best
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    /// 1-based iteration.
    pub x: usize,
    pub mean: f64,
    pub sem: f64,
}

/// Per-iteration mean and SEM of the best-so-far curves of several runs
/// (one per seed), truncated to the shortest run.
pub fn plateau_curve(runs: &[Vec<f64>]) -> Vec<CurvePoint> {
    let curves: Vec<Vec<f64>> = runs.iter().map(|r| best_so_far(r)).collect();
    let len = curves.iter().map(Vec::len).min().unwrap_or(0);
    (0..len)
        .map(|i| {
            let column: Vec<f64> = curves.iter().map(|c| c[i]).collect();
            let agg = aggregate_seeds(&column);
            CurvePoint {
                x: i + 1,
                mean: agg.mean,
                sem: agg.sem,
            }
        })
        .collect()
}

/// First 1-based iteration `i` whose best-so-far value is within relative
/// tolerance `rho` of the final best, i.e. after which the run improved by
/// less than `rho` of the value reached at `i`.
pub fn plateau_iteration(best: &[f64], rho: f64) -> Option<usize> {
    let last = *best.last()?;
    best.iter()
        .position(|&b| {
            let gain = b - last;
            gain == 0.0 || gain / b.abs() < rho
        })
        .map(|i| i + 1)
}
