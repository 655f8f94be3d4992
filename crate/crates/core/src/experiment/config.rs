//! The experiment file: a TOML document naming the dataset, split, learners
//! and protocol settings.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use super::ExperimentError;
use crate::data::{Schema, SplitPolicy};
use crate::ensemble::{EnsembleMode, SubsetStrategy, WeightRule};
use crate::hpo::{presets, Dimension, Hyperparameters, ParamValue, SearchSpace, TpeConfig};
use crate::learners::{LearnerKind, StoppingRule};
use crate::rng;

/// Name of the environment variable that replaces `seed` when set.
pub const SEED_ENV: &str = "BAKEOFF_SEED";

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Master seed; every other seed is derived from it.
    #[serde(default)]
    pub seed: u64,
    /// Default output directory; `--out` takes precedence.
    #[serde(default)]
    pub output: Option<PathBuf>,
    pub dataset: DatasetConfig,
    pub split: SplitConfig,
    pub learners: Vec<LearnerConfig>,
    #[serde(default)]
    pub hpo: HpoSettings,
    #[serde(default)]
    pub training: TrainingSettings,
    #[serde(default)]
    pub seeds: SeedSettings,
    #[serde(default)]
    pub ensemble: EnsembleSettings,
}

#[derive(Debug, Clone, Deserialize)]
pub struct DatasetConfig {
    /// Column label in reports; defaults to the file stem.
    #[serde(default)]
    pub name: Option<String>,
    pub path: PathBuf,
    #[serde(flatten)]
    pub schema: Schema,
}

#[derive(Debug, Clone, Deserialize)]
pub struct SplitConfig {
    #[serde(flatten)]
    pub policy: SplitPolicy,
    /// Seed of the split itself; derived from the master seed when absent.
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LearnerConfig {
    /// Directory and row label; defaults to the kind.
    #[serde(default)]
    pub name: Option<String>,
    /// `gbdt`, `soft-odt`, `mlp` or `external`.
    pub kind: String,
    /// Command line of an external learner.
    #[serde(default)]
    pub command: Option<String>,
    #[serde(default)]
    pub preset: Option<String>,
    #[serde(default)]
    pub space: Option<BTreeMap<String, Dimension>>,
    #[serde(default)]
    pub warm_start: Option<BTreeMap<String, ParamValue>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HpoSettings {
    pub budget: usize,
    pub workers: usize,
    /// Wall-clock limit per learner; trials left over are recorded as pruned.
    pub time_limit_secs: Option<f64>,
    pub startup_trials: usize,
    pub gamma: f64,
    pub candidates: usize,
}

impl Default for HpoSettings {
    fn default() -> Self {
        let tpe = TpeConfig::default();
        HpoSettings {
            budget: crate::hpo::DEFAULT_BUDGET,
            workers: 1,
            time_limit_secs: None,
            startup_trials: tpe.n_startup,
            gamma: tpe.gamma,
            candidates: tpe.n_candidates,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingSettings {
    pub patience: usize,
    pub max_epochs: usize,
    /// Retrain the final models on train + validation for the epoch count
    /// the early-stopped fit chose.
    pub retrain_full: bool,
}

impl Default for TrainingSettings {
    fn default() -> Self {
        let rule = StoppingRule::default();
        TrainingSettings {
            patience: rule.patience,
            max_epochs: rule.max_epochs,
            retrain_full: false,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SeedSettings {
    pub count: usize,
    /// Explicit seeds; overrides `count`.
    pub list: Option<Vec<u64>>,
}

impl Default for SeedSettings {
    fn default() -> Self {
        SeedSettings { count: 4, list: None }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnsembleSettings {
    /// `weighted` or `uniform`.
    pub mode: String,
    /// `inverse-loss` or `proportional`.
    pub weights: String,
    /// `validation-loss`, `uncertainty` or `random`.
    pub strategy: String,
    /// Also report the ensemble of the `k` members the strategy picks.
    pub k: Option<usize>,
}

impl Default for EnsembleSettings {
    fn default() -> Self {
        EnsembleSettings {
            mode: "weighted".into(),
            weights: "inverse-loss".into(),
            strategy: "validation-loss".into(),
            k: None,
        }
    }
}

impl EnsembleSettings {
    pub fn mode(&self) -> Result<EnsembleMode, ExperimentError> {
        match self.mode.as_str() {
            "weighted" => Ok(EnsembleMode::Weighted),
            "uniform" => Ok(EnsembleMode::Uniform),
            other => Err(invalid(format!("unknown ensemble mode `{other}`"))),
        }
    }

    pub fn rule(&self) -> Result<WeightRule, ExperimentError> {
        match self.weights.as_str() {
            "inverse-loss" => Ok(WeightRule::InverseLoss),
            "proportional" => Ok(WeightRule::Proportional),
            other => Err(invalid(format!("unknown weight rule `{other}`"))),
        }
    }

    pub fn strategy(&self) -> Result<SubsetStrategy, ExperimentError> {
        parse_strategy(&self.strategy)
    }
}

pub fn parse_strategy(s: &str) -> Result<SubsetStrategy, ExperimentError> {
    match s {
        "validation-loss" => Ok(SubsetStrategy::ValidationLoss),
        "uncertainty" => Ok(SubsetStrategy::Uncertainty),
        "random" => Ok(SubsetStrategy::Random),
        other => Err(invalid(format!("unknown subset strategy `{other}`"))),
    }
}

pub fn strategy_name(s: SubsetStrategy) -> &'static str {
    match s {
        SubsetStrategy::ValidationLoss => "validation-loss",
        SubsetStrategy::Uncertainty => "uncertainty",
        SubsetStrategy::Random => "random",
    }
}

fn invalid(msg: String) -> ExperimentError {
    ExperimentError::Config(msg)
}

impl ExperimentConfig {
    /// Reads and validates a config file. Relative paths inside it are
    /// taken relative to the file's directory.
    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        let text = std::fs::read_to_string(path).map_err(|source| ExperimentError::Io {
            path: path.to_owned(),
            source,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base)
    }

    pub fn parse(text: &str, base: &Path) -> Result<Self, ExperimentError> {
        let mut cfg: ExperimentConfig = toml::from_str(text).map_err(|e| invalid(e.to_string()))?;
        let rebase = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        rebase(&mut cfg.dataset.path);
        if let Some(out) = cfg.output.as_mut() {
            rebase(out);
        }
        if let SplitPolicy::Provided { file } = &mut cfg.split.policy {
            rebase(file);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        if self.learners.is_empty() {
            return Err(invalid("at least one learner is required".into()));
        }
        if self.hpo.budget == 0 {
            return Err(invalid("hpo.budget must be at least 1".into()));
        }
        if self.final_seeds().is_empty() {
            return Err(invalid("at least one final seed is required".into()));
        }
        let mut names = std::collections::BTreeSet::new();
        for l in &self.learners {
            l.kind()?;
            l.space()?;
            if !names.insert(l.name()) {
                return Err(invalid(format!("duplicate learner name `{}`", l.name())));
            }
        }
        self.ensemble.mode()?;
        self.ensemble.rule()?;
        self.ensemble.strategy()?;
        if let Some(k) = self.ensemble.k {
            if k == 0 || k > self.learners.len() {
                return Err(invalid(format!("ensemble.k = {k} outside 1..={}", self.learners.len())));
            }
        }
        Ok(())
    }

    /// Applies [`SEED_ENV`] if it is set.
    pub fn apply_seed_override(&mut self) -> Result<(), ExperimentError> {
        if let Ok(v) = std::env::var(SEED_ENV) {
            self.seed = v
                .trim()
                .parse()
                .map_err(|_| invalid(format!("{SEED_ENV}=`{v}` is not an unsigned integer")))?;
        }
        Ok(())
    }

    pub fn dataset_name(&self) -> String {
        self.dataset.name.clone().unwrap_or_else(|| {
            self.dataset
                .path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "dataset".into())
        })
    }

    pub fn split_seed(&self) -> u64 {
        self.split
            .seed
            .unwrap_or_else(|| rng::derive(self.seed, rng::label_stream("split")))
    }

    /// Seed of the optimization run of one learner.
    pub fn hpo_seed(&self, learner: &str) -> u64 {
        rng::derive(self.seed, rng::label_stream(&format!("hpo/{learner}")))
    }

    /// Seeds of the final retrains.
    pub fn final_seeds(&self) -> Vec<u64> {
        match &self.seeds.list {
            Some(list) => list.clone(),
            None => {
                let base = rng::derive(self.seed, rng::label_stream("final"));
                (0..self.seeds.count as u64).map(|i| rng::derive(base, i)).collect()
            }
        }
    }

    pub fn stopping_rule(&self) -> StoppingRule {
        StoppingRule {
            patience: self.training.patience,
            max_epochs: self.training.max_epochs,
        }
    }

    pub fn tpe(&self) -> TpeConfig {
        TpeConfig {
            gamma: self.hpo.gamma,
            n_startup: self.hpo.startup_trials,
            n_candidates: self.hpo.candidates,
        }
    }
}

impl LearnerConfig {
    pub fn name(&self) -> String {
        self.name.clone().unwrap_or_else(|| self.kind.clone())
    }

    pub fn kind(&self) -> Result<LearnerKind, ExperimentError> {
        match (self.kind.as_str(), &self.command) {
            ("external", Some(cmd)) => match LearnerKind::parse(cmd) {
                k @ LearnerKind::External(_) => Ok(k),
                _ => Err(invalid(format!("external learner command `{cmd}` names a native learner"))),
            },
            ("external", None) => Err(invalid(format!("learner `{}` needs a command", self.name()))),
            (k @ ("gbdt" | "soft-odt" | "mlp"), None) => Ok(LearnerKind::parse(k)),
            (k @ ("gbdt" | "soft-odt" | "mlp"), Some(_)) => {
                Err(invalid(format!("native learner `{k}` does not take a command")))
            }
            (other, _) => Err(invalid(format!("unknown learner kind `{other}`"))),
        }
    }

    /// The inline space if given, else the named preset.
    pub fn space(&self) -> Result<SearchSpace, ExperimentError> {
        let space = match (&self.space, &self.preset) {
            (Some(_), Some(_)) => {
                return Err(invalid(format!("learner `{}`: give a preset or a space, not both", self.name())))
            }
            (Some(dims), None) => {
                let mut s = SearchSpace::new();
                for (k, d) in dims {
                    s = s.dim(k, d.clone());
                }
                s
            }
            (None, Some(p)) => presets::by_name(p).ok_or_else(|| {
                invalid(format!("unknown preset `{p}`; known: {}", presets::NAMES.join(", ")))
            })?,
            (None, None) => return Err(invalid(format!("learner `{}` has no search space", self.name()))),
        };
        space
            .validate()
            .map_err(|e| invalid(format!("learner `{}`: {e}", self.name())))?;
        Ok(space)
    }

    pub fn warm_start(&self) -> Option<Hyperparameters> {
        self.warm_start
            .as_ref()
            .map(|m| Hyperparameters(m.clone()))
    }
}
