//! Hyperparameter search: spaces, TPE suggestions, the trial loop and
//! best-so-far curves.

mod optimize;
mod plateau;
pub mod presets;
mod space;
mod tpe;

pub use optimize::{
    load_history, optimize, parse_record, HpoError, OptimizeConfig, OptimizeResult, TrialLog, TrialRecord,
    TrialStatus, DEFAULT_BUDGET,
};
pub use plateau::{best_so_far, plateau_curve, plateau_iteration, CurvePoint};
pub use space::{ChoiceArm, Dimension, Hyperparameters, ParamValue, SearchSpace};
pub use tpe::{tpe_suggest, TpeConfig};
