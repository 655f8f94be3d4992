//! Tree-structured Parzen estimator.
//!
//! Finished trials are split at the `gamma` quantile of validation loss into
//! a good and a bad set. Each dimension gets a density per set: a truncated
//! Gaussian mixture for continuous dimensions (log space for log-uniform
//! ones), smoothed counts for small discrete ranges and choices. Candidates
//! are drawn from the good densities and the one with the largest
//! `log l(x) - log g(x)`, summed over the dimensions it assigns, wins.
//! Nested choices are handled by conditioning both sets on the chosen arm.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use statrs::function::erf::erf;

use super::optimize::{TrialRecord, TrialStatus};
use super::space::{ChoiceArm, Dimension, Hyperparameters, ParamValue, SearchSpace};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TpeConfig {
    /// Fraction of finished trials forming the good set.
    pub gamma: f64,
    /// Prior samples are returned until this many trials finished ok.
    pub n_startup: usize,
    pub n_candidates: usize,
}

impl Default for TpeConfig {
    fn default() -> Self {
        TpeConfig {
            gamma: 0.25,
            n_startup: 20,
            n_candidates: 24,
        }
    }
}

/// Discrete ranges up to this size use count estimators; wider ones are
/// treated as rounded continuous values.
const MAX_CATEGORICAL_RANGE: i64 = 64;

/// Next configuration to evaluate given `history`. Deterministic in
/// `(history, space, config, seed)`.
pub fn tpe_suggest(history: &[TrialRecord], space: &SearchSpace, config: &TpeConfig, seed: u64) -> Hyperparameters {
    let mut rng = rng::seeded(seed);
    let n_ok = history.iter().filter(|t| t.status == TrialStatus::Ok).count();
    if n_ok < config.n_startup {
        return space.sample(&mut rng);
    }
    let mut finished: Vec<(f64, usize, &Hyperparameters)> = history
        .iter()
        .filter(|t| t.status != TrialStatus::PrunedByBudget)
        .map(|t| {
            let loss = if t.status == TrialStatus::Ok && t.val_loss.is_finite() {
                t.val_loss
            } else {
                f64::INFINITY
            };
            (loss, t.id, &t.params)
        })
        .collect();
    finished.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let n_good = ((config.gamma * finished.len() as f64).ceil() as usize)
        .max(1)
        .min(finished.len());
    let good: Vec<&Hyperparameters> = finished[..n_good].iter().map(|t| t.2).collect();
    let bad: Vec<&Hyperparameters> = finished[n_good..].iter().map(|t| t.2).collect();

    let mut best: Option<(f64, Hyperparameters)> = None;
    for _ in 0..config.n_candidates.max(1) {
        let mut hp = Hyperparameters::new();
        let mut score = 0.0;
        for (key, dim) in &space.dims {
            draw(key, dim, &good, &bad, &mut rng, &mut hp, &mut score);
        }
        if best.as_ref().is_none_or(|(s, _)| score > *s) {
            best = Some((score, hp));
        }
    }
    best.expect("at least one candidate").1
}

fn observed<'a>(set: &[&'a Hyperparameters], key: &str) -> Vec<&'a ParamValue> {
    set.iter().filter_map(|hp| hp.get(key)).collect()
}

fn draw<R: Rng>(
    key: &str,
    dim: &Dimension,
    good: &[&Hyperparameters],
    bad: &[&Hyperparameters],
    rng: &mut R,
    out: &mut Hyperparameters,
    score: &mut f64,
) {
    let good_vals = observed(good, key);
    let bad_vals = observed(bad, key);
    match *dim {
        Dimension::Uniform { lo, hi } | Dimension::LogUniform { lo, hi } => {
            let log = matches!(dim, Dimension::LogUniform { .. });
            let warp = |v: f64| if log { v.ln() } else { v };
            let (a, b) = (warp(lo), warp(hi));
            let points = |vals: &[&ParamValue]| -> Vec<f64> {
                vals.iter()
                    .filter_map(|v| v.as_f64())
                    .filter(|x| (lo..=hi).contains(x))
                    .map(warp)
                    .collect()
            };
            let l = Parzen::new(points(&good_vals), a, b);
            let g = Parzen::new(points(&bad_vals), a, b);
            let x = l.sample(rng);
            *score += l.ln_pdf(x) - g.ln_pdf(x);
            let v = if log { x.exp().clamp(lo, hi) } else { x };
            out.0.insert(key.to_owned(), ParamValue::Float(v));
        }
        Dimension::DiscreteUniform { lo, hi } if hi - lo < MAX_CATEGORICAL_RANGE => {
            let m = (hi - lo + 1) as usize;
            let index = |vals: &[&ParamValue]| -> Vec<usize> {
                vals.iter()
                    .filter_map(|v| match v {
                        ParamValue::Int(i) if (lo..=hi).contains(i) => Some((i - lo) as usize),
                        _ => None,
                    })
                    .collect()
            };
            let l = Counts::new(&index(&good_vals), m);
            let g = Counts::new(&index(&bad_vals), m);
            let k = l.sample(rng);
            *score += l.ln_pmf(k) - g.ln_pmf(k);
            out.0.insert(key.to_owned(), ParamValue::Int(lo + k as i64));
        }
        Dimension::DiscreteUniform { lo, hi } => {
            let (a, b) = (lo as f64 - 0.5, hi as f64 + 0.5);
            let points = |vals: &[&ParamValue]| -> Vec<f64> {
                vals.iter()
                    .filter_map(|v| v.as_f64())
                    .filter(|x| (a..=b).contains(x))
                    .collect()
            };
            let l = Parzen::new(points(&good_vals), a, b);
            let g = Parzen::new(points(&bad_vals), a, b);
            let x = l.sample(rng);
            let v = (x.round() as i64).clamp(lo, hi);
            *score += l.ln_pdf(v as f64) - g.ln_pdf(v as f64);
            out.0.insert(key.to_owned(), ParamValue::Int(v));
        }
        Dimension::Choice { ref options } => {
            let arm_index = |set: &[&Hyperparameters]| -> Vec<Option<usize>> {
                set.iter().map(|hp| hp.get(key).and_then(|v| dim.arm_of(v))).collect()
            };
            let good_arms = arm_index(good);
            let bad_arms = arm_index(bad);
            let m = options.len();
            let l = Counts::new(&good_arms.iter().flatten().copied().collect::<Vec<_>>(), m);
            let g = Counts::new(&bad_arms.iter().flatten().copied().collect::<Vec<_>>(), m);
            let k = l.sample(rng);
            *score += l.ln_pmf(k) - g.ln_pmf(k);
            let sub_good = on_arm(good, &good_arms, k);
            let sub_bad = on_arm(bad, &bad_arms, k);
            match &options[k] {
                ChoiceArm::Value(v) => {
                    out.0.insert(key.to_owned(), v.clone());
                }
                ChoiceArm::Dist(inner) => draw(key, inner, &sub_good, &sub_bad, rng, out, score),
                ChoiceArm::Branch { value, space } => {
                    out.0.insert(key.to_owned(), value.clone());
                    for (sub_key, sub_dim) in space {
                        draw(sub_key, sub_dim, &sub_good, &sub_bad, rng, out, score);
                    }
                }
            }
        }
    }
}

fn on_arm<'a>(set: &[&'a Hyperparameters], arms: &[Option<usize>], k: usize) -> Vec<&'a Hyperparameters> {
    set.iter()
        .zip(arms)
        .filter(|(_, a)| **a == Some(k))
        .map(|(hp, _)| *hp)
        .collect()
}

/// Smoothed categorical estimate with a uniform prior of total weight 1.
struct Counts {
    probs: Vec<f64>,
}

impl Counts {
    fn new(observations: &[usize], m: usize) -> Self {
        let n = observations.len() as f64;
        let mut counts = vec![1.0 / m as f64; m];
        for &o in observations {
            counts[o] += 1.0;
        }
        Counts {
            probs: counts.into_iter().map(|c| c / (n + 1.0)).collect(),
        }
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (i, p) in self.probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return i;
            }
        }
        self.probs.len() - 1
    }

    fn ln_pmf(&self, k: usize) -> f64 {
        self.probs[k].ln()
    }
}

fn std_normal_cdf(z: f64) -> f64 {
    0.5 * (1.0 + erf(z / std::f64::consts::SQRT_2))
}

/// Equal-weight mixture of Gaussians truncated to `[a, b]`: one component
/// per observation plus a broad prior component centred on the interval.
struct Parzen {
    a: f64,
    b: f64,
    /// `(mean, sigma, truncated mass)` per component.
    components: Vec<(f64, f64, f64)>,
}

impl Parzen {
    fn new(mut points: Vec<f64>, a: f64, b: f64) -> Self {
        let range = b - a;
        points.sort_by(f64::total_cmp);
        let n = points.len();
        let floor = if n > 0 { range / (n as f64).sqrt() } else { range };
        let mut components = Vec::with_capacity(n + 1);
        for (i, &mu) in points.iter().enumerate() {
            let left = mu - if i > 0 { points[i - 1] } else { a };
            let right = if i + 1 < n { points[i + 1] } else { b } - mu;
            let sigma = left.max(right).max(floor).min(range);
            components.push((mu, sigma, 0.0));
        }
        components.push(((a + b) / 2.0, range, 0.0));
        for c in &mut components {
            c.2 = std_normal_cdf((b - c.0) / c.1) - std_normal_cdf((a - c.0) / c.1);
        }
        Parzen { a, b, components }
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        let (mu, sigma, _) = self.components[rng.random_range(0..self.components.len())];
        for _ in 0..64 {
            let z: f64 = StandardNormal.sample(rng);
            let x = mu + sigma * z;
            if (self.a..=self.b).contains(&x) {
                return x;
            }
        }
        mu.clamp(self.a, self.b)
    }

    fn ln_pdf(&self, x: f64) -> f64 {
        let norm = (2.0 * std::f64::consts::PI).sqrt();
        let total: f64 = self
            .components
            .iter()
            .map(|&(mu, sigma, mass)| {
                let z = (x - mu) / sigma;
                (-0.5 * z * z).exp() / (sigma * norm * mass)
            })
            .sum();
        (total / self.components.len() as f64).ln()
    }
}
