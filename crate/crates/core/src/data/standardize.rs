use super::{DataError, Dataset, FeatureKind, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ColumnStats {
    pub mean: f64,
    /// Population (1/n) standard deviation.
    pub std: f64,
    pub constant: bool,
}

/// Per-column moments of the training rows. Categorical columns have no entry.
#[derive(Debug, Clone, PartialEq)]
pub struct StandardizationStats {
    pub columns: Vec<Option<ColumnStats>>,
}

/// Computes mean and population standard deviation of every numeric column
/// over `train_idx`. Missing cells are excluded from the moments.
pub fn fit_standardizer(dataset: &Dataset, train_idx: &[usize]) -> Result<StandardizationStats> {
    if train_idx.is_empty() {
        return Err(DataError::EmptyTrainSet);
    }
    let columns = dataset
        .feature_meta
        .iter()
        .enumerate()
        .map(|(j, meta)| {
            if meta.kind == FeatureKind::Categorical {
                return None;
            }
            let vals: Vec<f64> = train_idx
                .iter()
                .filter(|&&i| !dataset.missing[[i, j]])
                .map(|&i| dataset.features[[i, j]])
                .collect();
            if vals.is_empty() {
                return Some(ColumnStats {
                    mean: 0.0,
                    std: 0.0,
                    constant: true,
                });
            }
            let constant = vals.iter().all(|&v| v == vals[0]);
            if constant {
                return Some(ColumnStats {
                    mean: vals[0],
                    std: 0.0,
                    constant,
                });
            }
            let n = vals.len() as f64;
            let mean = vals.iter().sum::<f64>() / n;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            Some(ColumnStats {
                mean,
                std: var.sqrt(),
                constant,
            })
        })
        .collect();
    Ok(StandardizationStats { columns })
}

/// Applies `(x - mean) / std` to every present numeric cell. Constant
/// columns map to zero; missing cells keep their zero placeholder, which
/// after the transform means imputation at the training mean.
pub fn standardize(dataset: &Dataset, stats: &StandardizationStats) -> Result<Dataset> {
    if stats.columns.len() != dataset.n_features() {
        return Err(DataError::ShapeMismatch {
            stats: stats.columns.len(),
            dataset: dataset.n_features(),
        });
    }
    let mut out = dataset.clone();
    for (j, col) in stats.columns.iter().enumerate() {
        let Some(s) = col else { continue };
        for i in 0..out.n_samples() {
            if out.missing[[i, j]] {
                continue;
            }
            let x = &mut out.features[[i, j]];
            *x = if s.constant { 0.0 } else { (*x - s.mean) / s.std };
        }
    }
    Ok(out)
}
