//! Adapter for predictors that run as external processes.
//!
//! The command is invoked as
//!
//! ```text
//! CMD fit <train.csv> <val.csv> <hp-file> <model-out>
//! CMD predict <model> <features.csv> <preds-out.csv>
//! ```
//!
//! Datasets are written in the raw form `load_csv` reads. The hyperparameter
//! file holds one `key=value` line per entry. Predictions come back as a
//! headerless CSV with one row per input row: class probabilities for
//! classification, a single value for regression. The trial seed is exported
//! as `BAKEOFF_TRIAL_SEED`.

use std::fmt;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::atomic::{AtomicUsize, Ordering};

use ndarray::{Array1, Array2};

use super::{LearnerError, Predictions};
use crate::data::{write_csv, write_features_csv, Dataset, Task};
use crate::hpo::Hyperparameters;

/// Rows whose sum is within this distance of 1 are renormalized.
pub const ROW_SUM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExternalCommand {
    pub program: String,
    pub args: Vec<String>,
}

impl ExternalCommand {
    /// Whitespace-separated program and leading arguments.
    pub fn parse(line: &str) -> Self {
        let mut parts = line.split_whitespace().map(str::to_owned);
        ExternalCommand {
            program: parts.next().unwrap_or_default(),
            args: parts.collect(),
        }
    }

    fn run(&self, verb: &str, operands: &[&Path], seed: Option<u64>) -> Result<(), LearnerError> {
        let mut cmd = Command::new(&self.program);
        cmd.args(&self.args).arg(verb).args(operands);
        if let Some(seed) = seed {
            cmd.env("BAKEOFF_TRIAL_SEED", seed.to_string());
        }
        let out = cmd
            .output()
            .map_err(|e| LearnerError::Adapter(format!("cannot start `{self}`: {e}")))?;
        if !out.status.success() {
            return Err(LearnerError::Adapter(format!(
                "`{self} {verb}` exited with {}: {}",
                out.status,
                String::from_utf8_lossy(&out.stderr).trim()
            )));
        }
        Ok(())
    }
}

impl fmt::Display for ExternalCommand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.program)?;
        for a in &self.args {
            write!(f, " {a}")?;
        }
        Ok(())
    }
}

/// Handle to a model file written by an external `fit`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExternalModel {
    pub command: ExternalCommand,
    pub model_path: PathBuf,
    pub task: Task,
    work_dir: PathBuf,
}

fn io_err(what: &str, e: impl fmt::Display) -> LearnerError {
    LearnerError::Adapter(format!("{what}: {e}"))
}

fn work_dir() -> Result<PathBuf, LearnerError> {
    static NEXT: AtomicUsize = AtomicUsize::new(0);
    let dir = std::env::temp_dir().join(format!(
        "bakeoff-adapter-{}-{}",
        std::process::id(),
        NEXT.fetch_add(1, Ordering::Relaxed)
    ));
    std::fs::create_dir_all(&dir).map_err(|e| io_err("cannot create work directory", e))?;
    Ok(dir)
}

pub fn fit(
    command: &ExternalCommand,
    train: &Dataset,
    val: &Dataset,
    hp: &Hyperparameters,
    seed: u64,
) -> Result<ExternalModel, LearnerError> {
    let dir = work_dir()?;
    let train_path = dir.join("train.csv");
    let val_path = dir.join("val.csv");
    let hp_path = dir.join("hp.txt");
    let model_path = dir.join("model");
    write_csv(train, &train_path).map_err(|e| io_err("writing train.csv", e))?;
    write_csv(val, &val_path).map_err(|e| io_err("writing val.csv", e))?;
    std::fs::write(&hp_path, hp.to_flat("\n") + "\n").map_err(|e| io_err("writing hp file", e))?;
    command.run("fit", &[&train_path, &val_path, &hp_path, &model_path], Some(seed))?;
    Ok(ExternalModel {
        command: command.clone(),
        model_path,
        task: train.task,
        work_dir: dir,
    })
}

pub fn predict(model: &ExternalModel, data: &Dataset) -> Result<Predictions, LearnerError> {
    let dir = &model.work_dir;
    let features = dir.join(format!("features-{}.csv", std::process::id()));
    let out = dir.join(format!("preds-{}.csv", std::process::id()));
    write_features_csv(data, &features).map_err(|e| io_err("writing features", e))?;
    model.command.run("predict", &[&model.model_path, &features, &out], None)?;
    let text = std::fs::read_to_string(&out).map_err(|e| io_err("reading predictions", e))?;
    parse_predictions(&text, data.n_samples(), model.task)
}

/// Validates and, within [`ROW_SUM_TOLERANCE`], renormalizes a headerless
/// prediction CSV.
pub fn parse_predictions(text: &str, expected_rows: usize, task: Task) -> Result<Predictions, LearnerError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_reader(text.as_bytes());
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| io_err("malformed prediction file", e))?;
        let row = record
            .iter()
            .map(|t| t.trim().parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| LearnerError::Adapter(format!("prediction row {}: {e}", i + 1)))?;
        rows.push(row);
    }
    if rows.len() != expected_rows {
        return Err(LearnerError::Adapter(format!(
            "expected {expected_rows} prediction rows, got {}",
            rows.len()
        )));
    }
    match task.n_classes() {
        None => {
            let mut values = Vec::with_capacity(rows.len());
            for (i, row) in rows.iter().enumerate() {
                match row.as_slice() {
                    [v] if v.is_finite() => values.push(*v),
                    _ => return Err(LearnerError::Adapter(format!("prediction row {}: expected one value", i + 1))),
                }
            }
            Ok(Predictions::Values(Array1::from(values)))
        }
        Some(k) => {
            let mut out = Array2::zeros((rows.len(), k));
            for (i, row) in rows.iter().enumerate() {
                let malformed = |why: &str| LearnerError::Adapter(format!("prediction row {}: {why}", i + 1));
                if row.len() != k {
                    return Err(malformed(&format!("expected {k} probabilities, got {}", row.len())));
                }
                if row.iter().any(|p| !(0.0..=1.0 + ROW_SUM_TOLERANCE).contains(p)) {
                    return Err(malformed("probability outside [0, 1]"));
                }
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                    return Err(malformed(&format!("probabilities sum to {sum}")));
                }
                for (j, p) in row.iter().enumerate() {
                    out[[i, j]] = p / sum;
                }
            }
            Ok(Predictions::Probabilities(out))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synthetic;
    use crate::learners::{fit as fit_any, predict as predict_any, FitOptions, LearnerKind};
    use std::os::unix::fs::PermissionsExt;

    /// Shell stub: `fit` writes the model file, `predict` prints `row` once per
    /// feature row.
    fn stub(dir: &Path, row: &str) -> ExternalCommand {
        let path = dir.join("stub.sh");
        let script = format!(
            "#!/bin/sh\nif [ \"$1\" = fit ]; then echo ok > \"$5\"; exit 0; fi\n\
             tail -n +2 \"$3\" | while read -r _; do echo '{row}'; done > \"$4\"\n"
        );
        std::fs::write(&path, script).unwrap();
        std::fs::set_permissions(&path, std::fs::Permissions::from_mode(0o755)).unwrap();
        ExternalCommand::parse(path.to_str().unwrap())
    }

    fn binary_data() -> Dataset {
        let mut ds = synthetic::classification(12, 3);
        ds.task = Task::Binary;
        ds.class_labels.truncate(2);
        ds.target = crate::data::Target::Classes((0..12).map(|i| i % 2).collect());
        ds
    }

    #[test]
    fn constant_stub_integrates() {
        let dir = tempfile::tempdir().unwrap();
        let kind = LearnerKind::External(stub(dir.path(), "0.5,0.5"));
        let ds = binary_data();
        let out = fit_any(&kind, &ds, &ds, &Hyperparameters::new(), 0, &FitOptions::default()).unwrap();
        assert!((out.val_loss - std::f64::consts::LN_2).abs() < 1e-12);
        let Predictions::Probabilities(p) = predict_any(&out.model, &ds).unwrap() else { panic!() };
        assert_eq!(p.dim(), (12, 2));
        assert!(p.iter().all(|&v| v == 0.5));
    }

    #[test]
    fn near_normalized_rows_are_rescaled() {
        let p = parse_predictions("0.5000004,0.5\n0.2,0.8\n", 2, Task::Binary).unwrap();
        let Predictions::Probabilities(p) = p else { panic!() };
        assert!((p.row(0).sum() - 1.0).abs() < 1e-15);
        assert!(parse_predictions("0.6,0.5\n", 1, Task::Binary).is_err());
    }

    #[test]
    fn row_count_mismatch_is_an_error() {
        let err = parse_predictions("0.5,0.5\n0.5,0.5\n0.5,0.5\n", 4, Task::Binary).unwrap_err();
        assert!(err.to_string().contains("expected 4 prediction rows, got 3"));
    }

    #[test]
    fn failing_command_is_reported() {
        let cmd = ExternalCommand::parse("false");
        let ds = binary_data();
        let err = fit(&cmd, &ds, &ds, &Hyperparameters::new(), 0).unwrap_err();
        assert!(err.to_string().contains("exited with"));
    }
}
