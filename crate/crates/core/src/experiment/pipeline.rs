//! The stages of a run. Each stage reads what earlier stages persisted, so
//! they can be invoked one at a time or all together through [`run`].

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Duration;

use ndarray::{Array1, Array2};

use super::config::{strategy_name, ExperimentConfig, LearnerConfig};
use super::report::{emit_curves, report_table, write_summary, Column, CurveKind, SummaryRow, TableRow};
use super::{read_file, write_file, ExperimentError};
use crate::data::{self, Dataset, SplitBundle};
use crate::ensemble::{combine_subset, select_subset, subset_curve, EnsembleSpec, SubsetStrategy};
use crate::hpo::{
    load_history, optimize, plateau_curve, plateau_iteration, best_so_far, CurvePoint, OptimizeConfig, TrialLog,
    TrialRecord, TrialStatus,
};
use crate::learners::{self, evaluation_loss, FitOptions, LearnerKind, Predictions};
use crate::metrics::{aggregate_seeds, Aggregate, Metric};
use crate::rng;

type Result<T> = std::result::Result<T, ExperimentError>;

/// Relative tolerance for the plateau iteration quoted in the report.
const PLATEAU_RHO: f64 = 0.01;
const ENSEMBLE: &str = "ensemble";

#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    pub out: PathBuf,
    /// Overrides `hpo.workers`.
    pub workers: Option<usize>,
    /// Continue persisted trial logs instead of refusing to touch them.
    pub resume: bool,
}

impl RunOptions {
    pub fn new(out: impl Into<PathBuf>) -> Self {
        RunOptions {
            out: out.into(),
            workers: None,
            resume: false,
        }
    }

    fn workers(&self, cfg: &ExperimentConfig) -> usize {
        self.workers.unwrap_or(cfg.hpo.workers).max(1)
    }
}

/// Loaded data, split and standardized with training statistics.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub name: String,
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
    pub bundle: SplitBundle,
}

impl Prepared {
    fn metric(&self) -> Metric {
        if self.train.task.is_classification() {
            Metric::CrossEntropy
        } else {
            Metric::Mse
        }
    }
}

pub fn prepare(cfg: &ExperimentConfig) -> Result<Prepared> {
    let raw = data::load_csv(&cfg.dataset.path, &cfg.dataset.schema)?;
    let bundle = data::split(&raw, &cfg.split.policy, cfg.split_seed())?;
    let stats = data::fit_standardizer(&raw, &bundle.train)?;
    let ds = data::standardize(&raw, &stats)?;
    Ok(Prepared {
        name: cfg.dataset_name(),
        train: ds.subset(&bundle.train),
        val: ds.subset(&bundle.val),
        test: ds.subset(&bundle.test),
        bundle,
    })
}

/// Validates the dataset, writes the split assignment and returns a short
/// description.
pub fn ingest(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<(Prepared, String)> {
    let p = prepare(cfg)?;
    let path = opts.out.join("split.csv");
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|source| ExperimentError::Io {
            path: dir.to_owned(),
            source,
        })?;
    }
    data::write_split_file(&p.bundle, &path).map_err(|source| ExperimentError::Io { path, source })?;
    let task = match p.train.task.n_classes() {
        Some(k) => format!("classification, {k} classes"),
        None => "regression".into(),
    };
    let text = format!(
        "{}: {} rows, {} features ({task}); split {} / {} / {}\n",
        p.name,
        p.bundle.train.len() + p.bundle.val.len() + p.bundle.test.len(),
        p.train.n_features(),
        p.train.n_samples(),
        p.val.n_samples(),
        p.test.n_samples()
    );
    Ok((p, text))
}

fn fit_options(cfg: &ExperimentConfig) -> FitOptions {
    FitOptions {
        rule: cfg.stopping_rule(),
        fixed_epochs: None,
    }
}

fn learner_dir(opts: &RunOptions, name: &str) -> PathBuf {
    opts.out.join(name)
}

fn trial_log_path(opts: &RunOptions, name: &str) -> PathBuf {
    learner_dir(opts, name).join("trials.log")
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ExperimentError + '_ {
    move |source| ExperimentError::Io {
        path: path.to_owned(),
        source,
    }
}

#[derive(Debug, Clone)]
pub struct TuneOutcome {
    pub learner: String,
    pub best: TrialRecord,
    pub history: Vec<TrialRecord>,
}

/// Hyperparameter search for every learner on the validation split.
pub fn tune(cfg: &ExperimentConfig, p: &Prepared, opts: &RunOptions) -> Result<Vec<TuneOutcome>> {
    cfg.learners.iter().map(|l| tune_one(cfg, l, p, opts)).collect()
}

fn tune_one(cfg: &ExperimentConfig, l: &LearnerConfig, p: &Prepared, opts: &RunOptions) -> Result<TuneOutcome> {
    let name = l.name();
    let kind = l.kind()?;
    let space = l.space()?;
    let path = trial_log_path(opts, &name);
    let dir = learner_dir(opts, &name);
    std::fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    let hpo_err = |source| ExperimentError::Hpo {
        learner: name.clone(),
        source,
    };
    let history = load_history(&path).map_err(hpo_err)?;
    if !history.is_empty() && !opts.resume {
        return Err(ExperimentError::ResumeRequired {
            path,
            trials: history.len(),
        });
    }
    let mut log = TrialLog::rewrite(&path, &history).map_err(hpo_err)?;
    let config = OptimizeConfig {
        budget: cfg.hpo.budget,
        workers: opts.workers(cfg),
        seed: cfg.hpo_seed(&name),
        tpe: cfg.tpe(),
        warm_start: l.warm_start(),
        time_limit: cfg.hpo.time_limit_secs.map(Duration::from_secs_f64),
        learner: name.clone(),
    };
    let fit_opts = fit_options(cfg);
    let objective = |hp: &crate::hpo::Hyperparameters, seed: u64| {
        learners::fit(&kind, &p.train, &p.val, hp, seed, &fit_opts)
            .map(|o| o.val_loss)
            .map_err(|e| e.to_string())
    };
    let result = optimize(objective, &space, &config, history, |r| log.append(r)).map_err(hpo_err)?;
    Ok(TuneOutcome {
        learner: name,
        best: result.best,
        history: result.history,
    })
}

/// Validation and test loss of one model under one final seed.
#[derive(Debug, Clone, PartialEq)]
pub struct SeedResult {
    pub model: String,
    pub seed: u64,
    pub val_loss: f64,
    /// Cross-entropy or MSE; `NaN` when the test split is empty.
    pub test_loss: f64,
    pub test_rmse: Option<f64>,
}

const RESULTS_HEADER: &str = "model\tseed\tval_loss\ttest_loss\ttest_rmse";

fn write_results(path: &Path, rows: &[SeedResult]) -> Result<()> {
    let mut text = String::from(RESULTS_HEADER) + "\n";
    for r in rows {
        let rmse = r.test_rmse.map(|v| v.to_string()).unwrap_or_default();
        writeln!(text, "{}\t{}\t{}\t{}\t{rmse}", r.model, r.seed, r.val_loss, r.test_loss).unwrap();
    }
    write_file(path, &text)
}

pub fn read_results(path: &Path) -> Result<Vec<SeedResult>> {
    let text = read_file(path)?;
    let bad = |l: &str| ExperimentError::Format(format!("{}: bad results row `{l}`", path.display()));
    text.lines()
        .skip(1)
        .filter(|l| !l.is_empty())
        .map(|l| {
            let f: Vec<&str> = l.split('\t').collect();
            if f.len() != 5 {
                return Err(bad(l));
            }
            let num = |t: &str| t.parse::<f64>().map_err(|_| bad(l));
            Ok(SeedResult {
                model: f[0].into(),
                seed: f[1].parse().map_err(|_| bad(l))?,
                val_loss: num(f[2])?,
                test_loss: num(f[3])?,
                test_rmse: if f[4].is_empty() { None } else { Some(num(f[4])?) },
            })
        })
        .collect()
}

/// Writes predictions with one column per class (`p_<label>`) or a single
/// `prediction` column.
pub fn write_predictions(path: &Path, preds: &Predictions, class_labels: &[String]) -> Result<()> {
    let mut text = match preds {
        Predictions::Probabilities(p) => {
            let names: Vec<String> = (0..p.ncols())
                .map(|c| format!("p_{}", class_labels.get(c).cloned().unwrap_or_else(|| c.to_string())))
                .collect();
            names.join(",") + "\n"
        }
        Predictions::Values(_) => "prediction\n".to_string(),
    };
    for i in 0..preds.len() {
        let row: Vec<String> = preds.row(i).iter().map(|v| v.to_string()).collect();
        text += &row.join(",");
        text.push('\n');
    }
    write_file(path, &text)
}

pub fn read_predictions(path: &Path, classification: bool) -> Result<Predictions> {
    let text = read_file(path)?;
    let bad = |l: &str| ExperimentError::Format(format!("{}: bad prediction row `{l}`", path.display()));
    let mut lines = text.lines();
    let width = lines.next().map(|h| h.split(',').count()).unwrap_or(0);
    let mut values = Vec::new();
    let mut n = 0;
    for l in lines.filter(|l| !l.is_empty()) {
        let row: Vec<f64> = l
            .split(',')
            .map(|t| t.parse::<f64>().map_err(|_| bad(l)))
            .collect::<Result<_>>()?;
        if row.len() != width {
            return Err(bad(l));
        }
        values.extend(row);
        n += 1;
    }
    Ok(if classification {
        Predictions::Probabilities(Array2::from_shape_vec((n, width), values).expect("row widths checked"))
    } else {
        Predictions::Values(Array1::from(values))
    })
}

fn seed_dir(opts: &RunOptions, model: &str, seed: u64) -> PathBuf {
    learner_dir(opts, model).join(format!("seed_{seed}"))
}

fn best_trial(cfg: &ExperimentConfig, opts: &RunOptions, name: &str) -> Result<TrialRecord> {
    let path = trial_log_path(opts, name);
    let history = load_history(&path).map_err(|source| ExperimentError::Hpo {
        learner: name.into(),
        source,
    })?;
    if history.len() < cfg.hpo.budget {
        return Err(ExperimentError::MissingStage(format!(
            "{} holds {} of {} trials; run `tune` first",
            path.display(),
            history.len(),
            cfg.hpo.budget
        )));
    }
    history
        .into_iter()
        .filter(|t| t.status == TrialStatus::Ok)
        .min_by(|a, b| a.val_loss.total_cmp(&b.val_loss).then(a.id.cmp(&b.id)))
        .ok_or_else(|| ExperimentError::Hpo {
            learner: name.into(),
            source: crate::hpo::HpoError::AllTrialsFailed(cfg.hpo.budget),
        })
}

/// Runs `jobs` on up to `workers` threads and returns results in job order.
fn parallel_map<T: Send, R: Send>(jobs: Vec<T>, workers: usize, f: impl Fn(T) -> R + Sync) -> Vec<R> {
    if workers <= 1 || jobs.len() <= 1 {
        return jobs.into_iter().map(f).collect();
    }
    let mut out = Vec::with_capacity(jobs.len());
    let mut jobs = jobs.into_iter().peekable();
    while jobs.peek().is_some() {
        let batch: Vec<T> = jobs.by_ref().take(workers).collect();
        std::thread::scope(|s| {
            let handles: Vec<_> = batch.into_iter().map(|j| s.spawn(|| f(j))).collect();
            out.extend(handles.into_iter().map(|h| h.join().expect("worker panicked")));
        });
    }
    out
}

/// Retrains each learner's best configuration under every final seed and
/// evaluates it on the test split.
pub fn train(cfg: &ExperimentConfig, p: &Prepared, opts: &RunOptions) -> Result<Vec<SeedResult>> {
    let mut all = Vec::new();
    let seeds = cfg.final_seeds();
    for l in &cfg.learners {
        let name = l.name();
        let kind = l.kind()?;
        let best = best_trial(cfg, opts, &name)?;
        let results = parallel_map(seeds.clone(), opts.workers(cfg), |seed| {
            train_seed(cfg, p, opts, &name, &kind, &best, seed)
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
        write_results(&learner_dir(opts, &name).join("results.tsv"), &results)?;
        all.extend(results);
    }
    Ok(all)
}

fn test_losses(preds: &Predictions, test: &Dataset) -> (f64, Option<f64>) {
    if test.n_samples() == 0 {
        return (f64::NAN, None);
    }
    let loss = evaluation_loss(preds, test);
    (loss, (!test.task.is_classification()).then(|| loss.sqrt()))
}

fn train_seed(
    cfg: &ExperimentConfig,
    p: &Prepared,
    opts: &RunOptions,
    name: &str,
    kind: &LearnerKind,
    best: &TrialRecord,
    seed: u64,
) -> Result<SeedResult> {
    let err = |source| ExperimentError::Learner {
        learner: name.into(),
        source,
    };
    let fit_opts = fit_options(cfg);
    let stopped = learners::fit(kind, &p.train, &p.val, &best.params, seed, &fit_opts).map_err(err)?;
    let val_loss = stopped.val_loss;
    let model = match (cfg.training.retrain_full, &stopped.trace) {
        (true, Some(trace)) => {
            let full = p.train.concat(&p.val);
            let fixed = FitOptions {
                fixed_epochs: Some(trace.best_epoch),
                ..fit_opts
            };
            learners::fit(kind, &full, &p.val, &best.params, seed, &fixed).map_err(err)?.model
        }
        _ => stopped.model,
    };
    let val_preds = learners::predict(&model, &p.val).map_err(err)?;
    let test_preds = learners::predict(&model, &p.test).map_err(err)?;
    let dir = seed_dir(opts, name, seed);
    write_predictions(&dir.join("val_preds.csv"), &val_preds, &p.train.class_labels)?;
    write_predictions(&dir.join("test_preds.csv"), &test_preds, &p.train.class_labels)?;
    let (test_loss, test_rmse) = test_losses(&test_preds, &p.test);
    Ok(SeedResult {
        model: name.into(),
        seed,
        val_loss,
        test_loss,
        test_rmse,
    })
}

/// Member predictions and validation losses of one final seed.
struct SeedMembers {
    seed: u64,
    names: Vec<String>,
    val_losses: Vec<f64>,
    val: Vec<Predictions>,
    test: Vec<Predictions>,
}

fn load_members(cfg: &ExperimentConfig, p: &Prepared, opts: &RunOptions) -> Result<Vec<SeedMembers>> {
    let classification = p.train.task.is_classification();
    let names: Vec<String> = cfg.learners.iter().map(LearnerConfig::name).collect();
    let mut per_learner = Vec::new();
    for name in &names {
        let path = learner_dir(opts, name).join("results.tsv");
        if !path.exists() {
            return Err(ExperimentError::MissingStage(format!(
                "{} not found; run `train` first",
                path.display()
            )));
        }
        per_learner.push(read_results(&path)?);
    }
    cfg.final_seeds()
        .into_iter()
        .map(|seed| {
            let mut m = SeedMembers {
                seed,
                names: names.clone(),
                val_losses: vec![],
                val: vec![],
                test: vec![],
            };
            for (name, results) in names.iter().zip(&per_learner) {
                let r = results.iter().find(|r| r.seed == seed).ok_or_else(|| {
                    ExperimentError::MissingStage(format!("learner `{name}` has no result for seed {seed}"))
                })?;
                m.val_losses.push(r.val_loss);
                let dir = seed_dir(opts, name, seed);
                m.val.push(read_predictions(&dir.join("val_preds.csv"), classification)?);
                m.test.push(read_predictions(&dir.join("test_preds.csv"), classification)?);
            }
            Ok(m)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleOutcome {
    /// Rows for the full ensemble and, if configured, the top-k subset.
    pub results: Vec<SeedResult>,
    /// `(seed, member, weight)`.
    pub weights: Vec<(u64, String, f64)>,
}

/// Combines the final models of every seed into an ensemble and evaluates it.
pub fn ensemble(cfg: &ExperimentConfig, p: &Prepared, opts: &RunOptions) -> Result<EnsembleOutcome> {
    if cfg.learners.len() < 2 {
        return Err(ExperimentError::Config("an ensemble needs at least two learners".into()));
    }
    let mode = cfg.ensemble.mode()?;
    let rule = cfg.ensemble.rule()?;
    let strategy = cfg.ensemble.strategy()?;
    let mut out = EnsembleOutcome {
        results: vec![],
        weights: vec![],
    };
    for m in load_members(cfg, p, opts)? {
        let spec = EnsembleSpec::new(m.names.clone(), m.val_losses.clone(), mode, rule)?;
        for (name, w) in m.names.iter().zip(&spec.weights) {
            out.weights.push((m.seed, name.clone(), *w));
        }
        let val = spec.combine(&m.val)?;
        let test = spec.combine(&m.test)?;
        let (test_loss, test_rmse) = test_losses(&test, &p.test);
        out.results.push(SeedResult {
            model: ENSEMBLE.into(),
            seed: m.seed,
            val_loss: evaluation_loss(&val, &p.val),
            test_loss,
            test_rmse,
        });
        if let Some(k) = cfg.ensemble.k {
            let subset_seed = rng::derive(m.seed, rng::label_stream("subset"));
            let pick = |members: &[Predictions]| -> Result<Predictions> {
                let s = select_subset(members, &m.val_losses, strategy, k, subset_seed)?;
                Ok(combine_subset(members, &s)?)
            };
            let val = pick(&m.val)?;
            let test = if p.test.n_samples() == 0 { test.clone() } else { pick(&m.test)? };
            let (test_loss, test_rmse) = test_losses(&test, &p.test);
            out.results.push(SeedResult {
                model: format!("{ENSEMBLE}-top{k}"),
                seed: m.seed,
                val_loss: evaluation_loss(&val, &p.val),
                test_loss,
                test_rmse,
            });
        }
    }
    let mut text = String::from("seed,member,weight\n");
    for (s, m, w) in &out.weights {
        writeln!(text, "{s},{m},{w}").unwrap();
    }
    let dir = opts.out.join(ENSEMBLE);
    write_file(&dir.join("weights.csv"), &text)?;
    write_results(&dir.join("results.tsv"), &out.results)?;
    Ok(out)
}

/// Best-so-far curve of every learner's search and, with two or more
/// learners and a non-empty test split, test loss against ensemble size for
/// each subset strategy.
pub fn curves(cfg: &ExperimentConfig, p: &Prepared, opts: &RunOptions) -> Result<Vec<PathBuf>> {
    let dir = opts.out.join("curves");
    let mut written = Vec::new();
    for l in &cfg.learners {
        let name = l.name();
        let losses = hpo_losses(opts, &name)?;
        written.push(emit_curves(&dir, CurveKind::HpoPlateau, &name, &plateau_curve(&[losses]))?);
    }
    if cfg.learners.len() < 2 || p.test.n_samples() == 0 {
        return Ok(written);
    }
    let members = load_members(cfg, p, opts)?;
    for strategy in [SubsetStrategy::ValidationLoss, SubsetStrategy::Uncertainty, SubsetStrategy::Random] {
        let runs = members
            .iter()
            .map(|m| {
                let seed = rng::derive(m.seed, rng::label_stream("subset"));
                subset_curve(&m.test, &m.val_losses, strategy, seed, |c| evaluation_loss(c, &p.test))
            })
            .collect::<std::result::Result<Vec<_>, _>>()?;
        let series: Vec<CurvePoint> = (0..cfg.learners.len())
            .map(|i| {
                let col: Vec<f64> = runs.iter().map(|r| r[i].1).collect();
                let a = aggregate_seeds(&col);
                CurvePoint {
                    x: i + 1,
                    mean: a.mean,
                    sem: a.sem,
                }
            })
            .collect();
        written.push(emit_curves(&dir, CurveKind::SubsetSize, strategy_name(strategy), &series)?);
    }
    Ok(written)
}

/// Validation losses in trial order, `NaN` for trials that did not finish.
fn hpo_losses(opts: &RunOptions, name: &str) -> Result<Vec<f64>> {
    let history = load_history(&trial_log_path(opts, name)).map_err(|source| ExperimentError::Hpo {
        learner: name.into(),
        source,
    })?;
    Ok(history
        .iter()
        .map(|t| if t.status == TrialStatus::Ok { t.val_loss } else { f64::NAN })
        .collect())
}

/// Aggregated validation and test loss of one model over the final seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSummary {
    pub model: String,
    pub val: Aggregate,
    pub test: Aggregate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub dataset: String,
    pub metric: Metric,
    pub models: Vec<ModelSummary>,
    /// The test-loss table alone.
    pub table: String,
    /// Full `report.txt` contents.
    pub text: String,
}

/// Aggregates the persisted results into `summary.tsv` and `report.txt`.
pub fn report(cfg: &ExperimentConfig, p: &Prepared, opts: &RunOptions) -> Result<ExperimentReport> {
    let metric = p.metric();
    let mut rows: Vec<SeedResult> = Vec::new();
    for l in &cfg.learners {
        let path = learner_dir(opts, &l.name()).join("results.tsv");
        if !path.exists() {
            return Err(ExperimentError::MissingStage(format!("{} not found; run `train` first", path.display())));
        }
        rows.extend(read_results(&path)?);
    }
    let ens = opts.out.join(ENSEMBLE).join("results.tsv");
    if ens.exists() {
        rows.extend(read_results(&ens)?);
    }
    let mut models: Vec<String> = Vec::new();
    for r in &rows {
        if !models.contains(&r.model) {
            models.push(r.model.clone());
        }
    }
    let summaries: Vec<ModelSummary> = models
        .iter()
        .map(|m| {
            let mine: Vec<&SeedResult> = rows.iter().filter(|r| &r.model == m).collect();
            let col = |f: fn(&SeedResult) -> f64| aggregate_seeds(&mine.iter().map(|r| f(r)).collect::<Vec<_>>());
            ModelSummary {
                model: m.clone(),
                val: col(|r| r.val_loss),
                test: col(|r| r.test_loss),
            }
        })
        .collect();

    let test_cols = [Column {
        dataset: format!("{} test", p.name),
        metric,
    }];
    let val_cols = [Column {
        dataset: format!("{} validation", p.name),
        metric,
    }];
    let table_of = |cols: &[Column], pick: fn(&ModelSummary) -> Aggregate| {
        let rows: Vec<TableRow> = summaries
            .iter()
            .map(|s| TableRow {
                model: s.model.clone(),
                cells: vec![Some(pick(s)).filter(|a| a.mean.is_finite())],
            })
            .collect();
        report_table(cols, &rows)
    };
    let table = table_of(&test_cols, |s| s.test);
    let mut text = table.clone();
    text.push('\n');
    text += &table_of(&val_cols, |s| s.val);
    let seeds = cfg.final_seeds().len();
    writeln!(text, "\nmean ± SEM over {seeds} seed(s); * marks the lowest mean").unwrap();
    writeln!(text, "\nhyperparameter search").unwrap();
    for l in &cfg.learners {
        let name = l.name();
        let losses = hpo_losses(opts, &name)?;
        let best = best_so_far(&losses);
        let ok = losses.iter().filter(|v| v.is_finite()).count();
        let plateau = plateau_iteration(&best, PLATEAU_RHO)
            .map(|i| i.to_string())
            .unwrap_or_else(|| "-".into());
        writeln!(
            text,
            "{name}: {} trials ({ok} ok), best validation loss {}, within {:.0}% of it from trial {plateau}",
            losses.len(),
            best.last().map(|b| format!("{b:.6}")).unwrap_or_else(|| "-".into()),
            PLATEAU_RHO * 100.0
        )
        .unwrap();
    }
    write_file(&opts.out.join("report.txt"), &text)?;
    let summary: Vec<SummaryRow> = summaries
        .iter()
        .map(|s| SummaryRow {
            dataset: p.name.clone(),
            model: s.model.clone(),
            metric,
            agg: s.test,
        })
        .collect();
    write_summary(&opts.out.join("summary.tsv"), &summary)?;
    Ok(ExperimentReport {
        dataset: p.name.clone(),
        metric,
        models: summaries,
        table,
        text,
    })
}

/// The whole protocol: split, tune, train, ensemble, curves, report. The
/// ensemble stage is skipped for a single learner.
pub fn run(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<ExperimentReport> {
    let (p, _) = ingest(cfg, opts)?;
    tune(cfg, &p, opts)?;
    train(cfg, &p, opts)?;
    if cfg.learners.len() > 1 {
        ensemble(cfg, &p, opts)?;
    }
    curves(cfg, &p, opts)?;
    report(cfg, &p, opts)
}
