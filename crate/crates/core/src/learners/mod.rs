//! The predictor contract and the native learners.
//!
//! [`fit`] trains a learner on encoded, standardized datasets and keeps the
//! state with the best validation loss; [`predict`] maps a fitted model and a
//! dataset with the same schema to [`Predictions`]. GBDT consumes the ordinal
//! encoding with missing cells as `NaN`; the differentiable learners consume
//! the one-hot encoding with missing cells at zero.

pub mod adapter;
pub mod gbdt;
pub mod link;
pub mod mlp;
pub mod soft_odt;
pub mod training;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use thiserror::Error;

use crate::data::{Dataset, Task};
use crate::hpo::{Hyperparameters, ParamValue};
use crate::metrics;
use crate::rng;

pub use adapter::{ExternalCommand, ExternalModel};
pub use gbdt::{GbdtModel, GbdtParams};
pub use link::{Label, Link};
pub use mlp::{Activation, MlpModel, MlpParams};
pub use soft_odt::{SoftOdtModel, SoftOdtParams};
pub use training::{StoppingRule, TrainTrace};

#[derive(Debug, Error)]
pub enum LearnerError {
    #[error("training set is empty")]
    EmptyTrainSet,
    #[error("non-finite loss at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },
    #[error("unknown hyperparameter `{0}`")]
    UnknownHyperparameter(String),
    #[error("hyperparameter `{key}` {reason}")]
    InvalidHyperparameter { key: String, reason: String },
    #[error("model expects {expected} features, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("dataset task {got:?} does not match the model's {expected:?}")]
    TaskMismatch { expected: Task, got: Task },
    #[error("external learner: {0}")]
    Adapter(String),
}

/// Typed access to a hyperparameter map that rejects keys the learner does
/// not know.
pub struct HpReader<'a> {
    hp: &'a Hyperparameters,
}

impl<'a> HpReader<'a> {
    pub fn new(hp: &'a Hyperparameters, allowed: &[&str]) -> Result<Self, LearnerError> {
        if let Some(key) = hp.keys().find(|k| !allowed.contains(k)) {
            return Err(LearnerError::UnknownHyperparameter(key.to_owned()));
        }
        Ok(HpReader { hp })
    }

    /// A non-negative integer; reals are rounded (uniform dimensions such as
    /// `n_estimators` produce floats).
    pub fn count(&self, key: &str, default: usize) -> Result<usize, LearnerError> {
        match self.hp.get(key) {
            None => Ok(default),
            Some(ParamValue::Int(v)) if *v >= 0 => Ok(*v as usize),
            Some(ParamValue::Float(v)) if v.is_finite() && *v >= 0.0 => Ok(v.round() as usize),
            Some(other) => Err(LearnerError::InvalidHyperparameter {
                key: key.into(),
                reason: format!("must be a non-negative count, got `{other}`"),
            }),
        }
    }

    pub fn real(&self, key: &str, default: f64) -> Result<f64, LearnerError> {
        match self.hp.get(key) {
            None => Ok(default),
            Some(v) => match v.as_f64() {
                Some(x) if x.is_finite() => Ok(x),
                _ => Err(LearnerError::InvalidHyperparameter {
                    key: key.into(),
                    reason: format!("must be a finite number, got `{v}`"),
                }),
            },
        }
    }

    pub fn text(&self, key: &str, default: &str) -> String {
        match self.hp.get(key) {
            None => default.to_owned(),
            Some(v) => v.to_string(),
        }
    }
}

/// Which learner to fit.
#[derive(Debug, Clone, PartialEq)]
pub enum LearnerKind {
    Gbdt,
    SoftOdt,
    Mlp,
    External(ExternalCommand),
}

impl LearnerKind {
    /// `gbdt`, `soft-odt`, `mlp`, or anything else as an external command line.
    pub fn parse(spec: &str) -> LearnerKind {
        match spec {
            "gbdt" => LearnerKind::Gbdt,
            "soft-odt" => LearnerKind::SoftOdt,
            "mlp" => LearnerKind::Mlp,
            cmd => LearnerKind::External(ExternalCommand::parse(cmd)),
        }
    }

    pub fn name(&self) -> String {
        match self {
            LearnerKind::Gbdt => "gbdt".into(),
            LearnerKind::SoftOdt => "soft-odt".into(),
            LearnerKind::Mlp => "mlp".into(),
            LearnerKind::External(cmd) => cmd.to_string(),
        }
    }

    /// Whether the learner trains epoch by epoch (and so can be refit for a
    /// fixed epoch count).
    pub fn is_iterative(&self) -> bool {
        !matches!(self, LearnerKind::External(_))
    }
}

/// Per-sample outputs: class distributions or regression values.
#[derive(Debug, Clone, PartialEq)]
pub enum Predictions {
    Probabilities(Array2<f64>),
    Values(Array1<f64>),
}

impl Predictions {
    pub fn len(&self) -> usize {
        match self {
            Predictions::Probabilities(p) => p.nrows(),
            Predictions::Values(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_classification(&self) -> bool {
        matches!(self, Predictions::Probabilities(_))
    }

    /// Columns per sample: the class count, or 1 for regression.
    pub fn width(&self) -> usize {
        match self {
            Predictions::Probabilities(p) => p.ncols(),
            Predictions::Values(_) => 1,
        }
    }

    /// One sample's output as a slice of length [`Predictions::width`].
    pub fn row(&self, i: usize) -> Vec<f64> {
        match self {
            Predictions::Probabilities(p) => p.row(i).to_vec(),
            Predictions::Values(v) => vec![v[i]],
        }
    }

    /// Rows `idx`, in order.
    pub fn select(&self, idx: &[usize]) -> Predictions {
        match self {
            Predictions::Probabilities(p) => Predictions::Probabilities(p.select(Axis(0), idx)),
            Predictions::Values(v) => Predictions::Values(v.select(Axis(0), idx)),
        }
    }

    fn from_scores(link: Link, scores: ArrayView2<f64>) -> Predictions {
        let n = scores.nrows();
        match link {
            Link::Identity => Predictions::Values(scores.column(0).to_owned()),
            _ => {
                let w = link.prediction_width();
                let mut out = Array2::zeros((n, w));
                let mut buf = vec![0.0; w];
                for (i, s) in scores.rows().into_iter().enumerate() {
                    link.predict_into(&s.to_vec(), &mut buf);
                    out.row_mut(i).assign(&Array1::from(buf.clone()));
                }
                Predictions::Probabilities(out)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelState {
    Gbdt(GbdtModel),
    SoftOdt(SoftOdtModel),
    Mlp(MlpModel),
    External(ExternalModel),
}

/// A trained model together with the schema it accepts.
#[derive(Debug, Clone, PartialEq)]
pub struct FittedModel {
    pub task: Task,
    /// Raw (pre-encoding) feature count.
    pub n_features: usize,
    pub state: ModelState,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FitOptions {
    pub rule: StoppingRule,
    /// Train exactly this many epochs (rounds for GBDT) and keep the final
    /// state, ignoring the validation set for stopping.
    pub fixed_epochs: Option<usize>,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            rule: StoppingRule::default(),
            fixed_epochs: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub model: FittedModel,
    /// Validation loss of the returned model in target units: cross-entropy
    /// for classification, mean squared error for regression.
    pub val_loss: f64,
    /// `None` for external learners.
    pub trace: Option<TrainTrace>,
}

fn labels_of(ds: &Dataset, scale: Option<(f64, f64)>) -> Vec<Label> {
    match (ds.labels(), ds.values()) {
        (Some(c), _) => c.iter().map(|&c| Label::Class(c)).collect(),
        (None, Some(v)) => {
            let (mu, sd) = scale.unwrap_or((0.0, 1.0));
            v.iter().map(|&y| Label::Value((y - mu) / sd)).collect()
        }
        (None, None) => unreachable!("a dataset always has a target"),
    }
}

/// Mean and population std of regression targets, for training the
/// differentiable learners on standardized targets.
fn target_scale(ds: &Dataset) -> Option<(f64, f64)> {
    let v = ds.values()?;
    let n = v.len() as f64;
    let mu = v.iter().sum::<f64>() / n;
    let sd = (v.iter().map(|y| (y - mu).powi(2)).sum::<f64>() / n).sqrt();
    Some((mu, if sd > 0.0 { sd } else { 1.0 }))
}

/// Validation loss of `preds` against `ds`'s targets.
pub fn evaluation_loss(preds: &Predictions, ds: &Dataset) -> f64 {
    match (preds, ds.labels(), ds.values()) {
        (Predictions::Probabilities(p), Some(labels), _) => {
            metrics::cross_entropy(p.view(), labels).unwrap_or(f64::NAN)
        }
        (Predictions::Values(v), _, Some(y)) => metrics::squared_error(v.as_slice().expect("contiguous"), y)
            .map(|e| e.mse)
            .unwrap_or(f64::NAN),
        _ => f64::NAN,
    }
}

fn check_schema(train: &Dataset, val: &Dataset) -> Result<(), LearnerError> {
    if train.n_samples() == 0 {
        return Err(LearnerError::EmptyTrainSet);
    }
    if val.n_features() != train.n_features() {
        return Err(LearnerError::DimensionMismatch {
            expected: train.n_features(),
            got: val.n_features(),
        });
    }
    if val.task != train.task {
        return Err(LearnerError::TaskMismatch {
            expected: train.task,
            got: val.task,
        });
    }
    Ok(())
}

/// Trains `kind` on `train`, early-stopping on `val`, and returns the state
/// with the best validation loss. Deterministic given the inputs and `seed`.
pub fn fit(
    kind: &LearnerKind,
    train: &Dataset,
    val: &Dataset,
    hp: &Hyperparameters,
    seed: u64,
    opts: &FitOptions,
) -> Result<FitOutcome, LearnerError> {
    check_schema(train, val)?;
    let link = Link::for_task(train.task);
    let (state, trace) = match kind {
        LearnerKind::Gbdt => {
            let params = GbdtParams::from_hp(hp)?;
            let x = train.ordinal_matrix();
            let vx = val.ordinal_matrix();
            let y = labels_of(train, None);
            let vy = labels_of(val, None);
            let rule = StoppingRule {
                patience: opts.rule.patience,
                max_epochs: params.n_estimators,
            };
            let mut trainer = gbdt::GbdtTrainer::new(params, link, x.view(), &y, vx.view(), &vy, seed);
            let trace = run_trainer(&mut trainer, rule, opts.fixed_epochs)?;
            (ModelState::Gbdt(trainer.model), Some(trace))
        }
        LearnerKind::SoftOdt => {
            let p = SoftOdtParams::from_hp(hp)?;
            let x = train.dense_matrix();
            let mut model = SoftOdtModel::new(
                x.ncols(),
                link,
                p.num_layers,
                p.trees_per_layer(),
                p.tree_depth,
                p.tree_output_dim,
            );
            model.initialize(x.view(), rng::derive(seed, 1));
            model.target_scale = target_scale(train);
            let (model, trace) = fit_minibatch(model, p.learning_rate, p.batch_size, x, train, val, seed, opts)?;
            (ModelState::SoftOdt(model), Some(trace))
        }
        LearnerKind::Mlp => {
            let p = MlpParams::from_hp(hp)?;
            let x = train.dense_matrix();
            let mut model = MlpModel::new(x.ncols(), &vec![p.hidden_size; p.num_layers], link, p.activation);
            model.initialize(rng::derive(seed, 1));
            model.target_scale = target_scale(train);
            let (model, trace) = fit_minibatch(model, p.learning_rate, p.batch_size, x, train, val, seed, opts)?;
            (ModelState::Mlp(model), Some(trace))
        }
        LearnerKind::External(cmd) => {
            let model = adapter::fit(cmd, train, val, hp, seed)?;
            (ModelState::External(model), None)
        }
    };
    let model = FittedModel {
        task: train.task,
        n_features: train.n_features(),
        state,
    };
    let preds = predict(&model, val)?;
    let val_loss = evaluation_loss(&preds, val);
    if !val_loss.is_finite() {
        let epoch = trace.as_ref().map_or(0, |t| t.best_epoch);
        return Err(LearnerError::NonFiniteLoss { epoch });
    }
    Ok(FitOutcome { model, val_loss, trace })
}

fn run_trainer<T: training::EpochTrainer>(
    trainer: &mut T,
    rule: StoppingRule,
    fixed: Option<usize>,
) -> Result<TrainTrace, LearnerError> {
    match fixed {
        Some(epochs) => training::train_fixed(trainer, epochs),
        None => training::train_iterative(trainer, rule),
    }
}

/// Models whose regression outputs are trained in standardized units.
trait Scaled: training::Differentiable {
    fn target_scale(&self) -> Option<(f64, f64)>;
}

impl Scaled for SoftOdtModel {
    fn target_scale(&self) -> Option<(f64, f64)> {
        self.target_scale
    }
}

impl Scaled for MlpModel {
    fn target_scale(&self) -> Option<(f64, f64)> {
        self.target_scale
    }
}

#[allow(clippy::too_many_arguments)]
fn fit_minibatch<M: Scaled>(
    model: M,
    learning_rate: f64,
    batch_size: usize,
    x: Array2<f64>,
    train: &Dataset,
    val: &Dataset,
    seed: u64,
    opts: &FitOptions,
) -> Result<(M, TrainTrace), LearnerError> {
    let scale = model.target_scale();
    let y = labels_of(train, scale);
    let vx = val.dense_matrix();
    let vy = labels_of(val, scale);
    let mut trainer = training::MinibatchTrainer::new(
        model,
        learning_rate,
        x.view(),
        &y,
        vx.view(),
        &vy,
        batch_size,
        rng::derive(seed, 2),
    );
    let trace = run_trainer(&mut trainer, opts.rule, opts.fixed_epochs)?;
    Ok((trainer.model, trace))
}

fn unscale(preds: Predictions, scale: Option<(f64, f64)>) -> Predictions {
    match (preds, scale) {
        (Predictions::Values(v), Some((mu, sd))) => Predictions::Values(v.mapv(|s| s * sd + mu)),
        (p, _) => p,
    }
}

/// Predictions of `model` for every row of `data`. Pure: repeated calls give
/// identical results.
pub fn predict(model: &FittedModel, data: &Dataset) -> Result<Predictions, LearnerError> {
    if data.n_features() != model.n_features {
        return Err(LearnerError::DimensionMismatch {
            expected: model.n_features,
            got: data.n_features(),
        });
    }
    let link = Link::for_task(model.task);
    Ok(match &model.state {
        ModelState::Gbdt(m) => {
            let scores = m.raw_scores(data.ordinal_matrix().view());
            Predictions::from_scores(link, scores.view())
        }
        ModelState::SoftOdt(m) => {
            let x = dense_checked(data, m.n_inputs())?;
            let scores = training::Differentiable::scores(m, x.view());
            unscale(Predictions::from_scores(link, scores.view()), m.target_scale)
        }
        ModelState::Mlp(m) => {
            let x = dense_checked(data, m.n_inputs())?;
            let scores = training::Differentiable::scores(m, x.view());
            unscale(Predictions::from_scores(link, scores.view()), m.target_scale)
        }
        ModelState::External(m) => adapter::predict(m, data)?,
    })
}

fn dense_checked(data: &Dataset, width: usize) -> Result<Array2<f64>, LearnerError> {
    let x = data.dense_matrix();
    if x.ncols() != width {
        return Err(LearnerError::DimensionMismatch {
            expected: width,
            got: x.ncols(),
        });
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synthetic;

    #[test]
    fn reader_rejects_unknown_keys_and_rounds_counts() {
        let hp = Hyperparameters::new().with("depth", ParamValue::Float(3.6));
        assert!(matches!(
            HpReader::new(&hp, &["width"]),
            Err(LearnerError::UnknownHyperparameter(k)) if k == "depth"
        ));
        let r = HpReader::new(&hp, &["depth"]).unwrap();
        assert_eq!(r.count("depth", 0).unwrap(), 4);
        assert_eq!(r.count("other", 7).unwrap(), 7);
        let neg = Hyperparameters::new().with("depth", ParamValue::Int(-1));
        assert!(HpReader::new(&neg, &["depth"]).unwrap().count("depth", 0).is_err());
    }

    fn quick() -> FitOptions {
        FitOptions {
            rule: StoppingRule {
                patience: 3,
                max_epochs: 8,
            },
            fixed_epochs: None,
        }
    }

    #[test]
    fn every_native_learner_fits_and_predicts_distributions() {
        let ds = synthetic::classification(240, 4);
        let train = ds.subset(&(0..160).collect::<Vec<_>>());
        let val = ds.subset(&(160..240).collect::<Vec<_>>());
        let hp_gbdt = Hyperparameters::new().with("n_estimators", ParamValue::Int(10));
        for (kind, hp) in [
            (LearnerKind::Gbdt, hp_gbdt),
            (LearnerKind::SoftOdt, Hyperparameters::new()),
            (LearnerKind::Mlp, Hyperparameters::new()),
        ] {
            let out = fit(&kind, &train, &val, &hp, 3, &quick()).unwrap();
            assert!(out.val_loss.is_finite());
            let p = predict(&out.model, &val).unwrap();
            let Predictions::Probabilities(p) = &p else { panic!() };
            assert_eq!(p.ncols(), 3);
            for row in p.rows() {
                assert!((row.sum() - 1.0).abs() < 1e-9);
                assert!(row.iter().all(|&v| (0.0..=1.0).contains(&v)));
            }
            assert_eq!(predict(&out.model, &val).unwrap(), predict(&out.model, &val).unwrap());
            let again = fit(&kind, &train, &val, &hp, 3, &quick()).unwrap();
            assert_eq!(again.model, out.model, "{kind:?} is not reproducible");
        }
    }

    #[test]
    fn regression_outputs_are_in_target_units() {
        let ds = synthetic::regression(200, 2);
        let train = ds.subset(&(0..150).collect::<Vec<_>>());
        let val = ds.subset(&(150..200).collect::<Vec<_>>());
        let out = fit(&LearnerKind::Mlp, &train, &val, &Hyperparameters::new(), 1, &quick()).unwrap();
        let Predictions::Values(v) = predict(&out.model, &val).unwrap() else { panic!() };
        let mean = v.mean().unwrap();
        // targets are centred near 10, far from the standardized scale
        assert!((mean - 10.0).abs() < 3.0, "{mean}");
    }

    #[test]
    fn feature_count_mismatch_is_rejected() {
        let ds = synthetic::classification(60, 1);
        let out = fit(
            &LearnerKind::Gbdt,
            &ds,
            &ds,
            &Hyperparameters::new().with("n_estimators", ParamValue::Int(2)),
            0,
            &quick(),
        )
        .unwrap();
        let mut narrow = ds.clone();
        narrow.features = narrow.features.slice(ndarray::s![.., ..3]).to_owned();
        narrow.missing = narrow.missing.slice(ndarray::s![.., ..3]).to_owned();
        narrow.feature_meta.truncate(3);
        assert!(matches!(
            predict(&out.model, &narrow),
            Err(LearnerError::DimensionMismatch { expected: 8, got: 3 })
        ));
    }

    #[test]
    fn empty_training_set_is_an_error() {
        let ds = synthetic::classification(20, 1);
        let empty = ds.subset(&[]);
        assert!(matches!(
            fit(&LearnerKind::Gbdt, &empty, &ds, &Hyperparameters::new(), 0, &quick()),
            Err(LearnerError::EmptyTrainSet)
        ));
    }
}
