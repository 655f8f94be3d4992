//! Seeded synthetic tabular tasks for smoke runs and tests.
//!
//! Seven numeric columns (one with ~5% missing cells) and a four-level
//! categorical column feed three nonlinear class scores, so trees, soft trees
//! and MLPs each have something to find and none of them is exact.

use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{Dataset, FeatureKind, FeatureMeta, Target, Task};
use crate::rng;

const N_NUMERIC: usize = 7;
const SITES: [&str; 4] = ["north", "south", "east", "west"];

fn meta() -> Vec<FeatureMeta> {
    let mut m: Vec<FeatureMeta> = (0..N_NUMERIC)
        .map(|j| FeatureMeta {
            name: format!("x{j}"),
            kind: FeatureKind::Numeric,
            categories: vec![],
        })
        .collect();
    m.push(FeatureMeta {
        name: "site".into(),
        kind: FeatureKind::Categorical,
        categories: SITES.iter().map(|s| s.to_string()).collect(),
    });
    m
}

fn scores(x: &[f64], site: usize) -> [f64; 3] {
    [
        1.2 * x[0] * x[1] + (2.0 * x[2]).sin() + if site == 0 { 0.6 } else { 0.0 },
        x[3] * x[3] - 1.0 + 0.8 * x[4] - if site == 1 { 0.5 } else { 0.0 },
        0.9 * x[5] + 0.5 * x[0] - 0.4 * x[6].abs() + if site == 3 { 0.4 } else { 0.0 },
    ]
}

fn features(n: usize, rng: &mut rng::Rng) -> (Array2<f64>, Array2<bool>, Vec<[f64; 3]>) {
    let p = N_NUMERIC + 1;
    let mut feats = Array2::zeros((n, p));
    let mut missing = Array2::from_elem((n, p), false);
    let mut raw_scores = Vec::with_capacity(n);
    for i in 0..n {
        let x: Vec<f64> = (0..N_NUMERIC).map(|_| StandardNormal.sample(rng)).collect();
        let site = rng.random_range(0..SITES.len());
        raw_scores.push(scores(&x, site));
        for (j, v) in x.iter().enumerate() {
            feats[[i, j]] = *v;
        }
        feats[[i, N_NUMERIC]] = site as f64;
        if rng.random::<f64>() < 0.05 {
            missing[[i, N_NUMERIC - 1]] = true;
            feats[[i, N_NUMERIC - 1]] = 0.0;
        }
    }
    (feats, missing, raw_scores)
}

/// Three-class task with Gumbel-noised argmax labels.
pub fn classification(n: usize, seed: u64) -> Dataset {
    let mut rng = rng::seeded(seed);
    let (features, missing, raw) = features(n, &mut rng);
    let labels = raw
        .iter()
        .map(|s| {
            let mut best = 0;
            let mut best_v = f64::NEG_INFINITY;
            for (c, v) in s.iter().enumerate() {
                let u: f64 = rng.random_range(1e-12..1.0);
                let noisy = v - 0.6 * (-u.ln()).ln();
                if noisy > best_v {
                    best_v = noisy;
                    best = c;
                }
            }
            best
        })
        .collect();
    Dataset {
        features,
        target: Target::Classes(labels),
        task: Task::Multiclass(3),
        feature_meta: meta(),
        missing,
        target_name: "label".into(),
        class_labels: vec!["alpha".into(), "beta".into(), "gamma".into()],
    }
}

/// Regression on the first class score plus Gaussian noise.
pub fn regression(n: usize, seed: u64) -> Dataset {
    let mut rng = rng::seeded(seed);
    let (features, missing, raw) = features(n, &mut rng);
    let values = raw
        .iter()
        .map(|s| {
            let e: f64 = StandardNormal.sample(&mut rng);
            10.0 + 3.0 * s[0] + 0.3 * e
        })
        .collect();
    Dataset {
        features,
        target: Target::Values(values),
        task: Task::Regression,
        feature_meta: meta(),
        missing,
        target_name: "target".into(),
        class_labels: vec![],
    }
}
