//! Experiment orchestration: config, the tune → train → ensemble → report
//! pipeline, and everything it persists.
//!
//! Output layout under the run directory:
//!
//! ```text
//! split.csv                      row -> train/val/test
//! <learner>/trials.log           one key=value line per trial
//! <learner>/timings.tsv          wall-clock seconds per trial
//! <learner>/results.tsv          per-seed validation and test loss
//! <learner>/seed_<s>/{val,test}_preds.csv
//! ensemble/weights.csv           seed,member,weight
//! ensemble/results.tsv
//! curves/{hpo,subset}_*.csv      x,mean,sem
//! summary.tsv, report.txt
//! ```

mod config;
mod pipeline;
mod report;

use std::path::{Path, PathBuf};

use thiserror::Error;

pub use config::{
    parse_strategy, strategy_name, DatasetConfig, EnsembleSettings, ExperimentConfig, HpoSettings, LearnerConfig,
    SeedSettings, SplitConfig, TrainingSettings, SEED_ENV,
};
pub use pipeline::{
    curves, ensemble, ingest, prepare, read_predictions, read_results, report, run, train, tune, write_predictions,
    EnsembleOutcome, ExperimentReport, ModelSummary, Prepared, RunOptions, SeedResult, TuneOutcome,
};
pub use report::{
    compare, emit_curves, loss_matrix, parse_report_table, read_curve, read_summary, read_unseen_mask,
    render_comparison, report_table, write_summary, Column, Comparison, CurveKind, ParsedRow, SummaryRow, TableRow,
};

use crate::data::DataError;
use crate::ensemble::EnsembleError;
use crate::hpo::HpoError;
use crate::learners::LearnerError;
use crate::metrics::MetricsError;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("learner `{learner}`: {source}")]
    Hpo { learner: String, source: HpoError },
    #[error("learner `{learner}`: {source}")]
    Learner { learner: String, source: LearnerError },
    #[error(transparent)]
    Ensemble(#[from] EnsembleError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Format(String),
    #[error("unseen mask {0}")]
    MaskShape(String),
    #[error("curve `{0}` has no points")]
    EmptySeries(String),
    #[error("{path} already holds {trials} trials; pass --resume to continue them")]
    ResumeRequired { path: PathBuf, trials: usize },
    #[error("{0}")]
    MissingStage(String),
}

pub(crate) fn write_file(path: &Path, text: &str) -> Result<(), ExperimentError> {
    let io = |source| ExperimentError::Io {
        path: path.to_owned(),
        source,
    };
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(io)?;
    }
    std::fs::write(path, text).map_err(io)
}

pub(crate) fn read_file(path: &Path) -> Result<String, ExperimentError> {
    std::fs::read_to_string(path).map_err(|source| ExperimentError::Io {
        path: path.to_owned(),
        source,
    })
}
