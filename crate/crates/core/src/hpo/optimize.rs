//! The trial loop, trial records and their line-based persistence.

use std::fmt;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use thiserror::Error;

use super::space::{Hyperparameters, ParamValue, SearchSpace};
use super::tpe::{tpe_suggest, TpeConfig};
use crate::rng;

pub const DEFAULT_BUDGET: usize = 1000;

#[derive(Debug, Error)]
pub enum HpoError {
    #[error("budget must be at least 1")]
    ZeroBudget,
    #[error("all {0} trials failed")]
    AllTrialsFailed(usize),
    #[error("invalid search space: {0}")]
    InvalidSpace(String),
    #[error("trial log {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("trial log line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrialStatus {
    Ok,
    Failed,
    /// Not evaluated because the time budget ran out.
    PrunedByBudget,
}

impl TrialStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            TrialStatus::Ok => "ok",
            TrialStatus::Failed => "failed",
            TrialStatus::PrunedByBudget => "pruned-by-budget",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "ok" => TrialStatus::Ok,
            "failed" => TrialStatus::Failed,
            "pruned-by-budget" => TrialStatus::PrunedByBudget,
            _ => return None,
        })
    }
}

impl fmt::Display for TrialStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub id: usize,
    pub learner: String,
    pub params: Hyperparameters,
    pub seed: u64,
    /// `NaN` unless the trial finished ok.
    pub val_loss: f64,
    /// Filled only for the configuration finally selected.
    pub test_loss: Option<f64>,
    pub seconds: f64,
    pub status: TrialStatus,
}

impl TrialRecord {
    pub fn new(id: usize, learner: &str, params: Hyperparameters, seed: u64, val_loss: f64, status: TrialStatus) -> Self {
        TrialRecord {
            id,
            learner: learner.to_owned(),
            params,
            seed,
            val_loss,
            test_loss: None,
            seconds: 0.0,
            status,
        }
    }

    /// One tab-separated `key=value` line; parameters are prefixed with `p.`.
    /// Wall-clock time is left out so that logs of identical runs compare
    /// equal byte for byte.
    pub fn to_line(&self) -> String {
        let mut fields = vec![
            format!("id={}", self.id),
            format!("learner={}", self.learner),
            format!("seed={}", self.seed),
            format!("val_loss={:?}", self.val_loss),
            format!("status={}", self.status),
        ];
        if let Some(t) = self.test_loss {
            fields.push(format!("test_loss={t:?}"));
        }
        fields.extend(self.params.0.iter().map(|(k, v)| format!("p.{k}={v}")));
        fields.join("\t")
    }
}

/// Parses a line written by [`TrialRecord::to_line`].
pub fn parse_record(line: &str) -> Result<TrialRecord, String> {
    let mut id = None;
    let mut learner = None;
    let mut seed = None;
    let mut val_loss = None;
    let mut status = None;
    let mut test_loss = None;
    let mut params = Hyperparameters::new();
    for field in line.split('\t') {
        let (k, v) = field.split_once('=').ok_or_else(|| format!("field `{field}` is not key=value"))?;
        let bad = |what: &str| format!("bad {what} `{v}`");
        match k {
            "id" => id = Some(v.parse::<usize>().map_err(|_| bad("id"))?),
            "learner" => learner = Some(v.to_owned()),
            "seed" => seed = Some(v.parse::<u64>().map_err(|_| bad("seed"))?),
            "val_loss" => val_loss = Some(v.parse::<f64>().map_err(|_| bad("val_loss"))?),
            "test_loss" => test_loss = Some(v.parse::<f64>().map_err(|_| bad("test_loss"))?),
            "status" => status = Some(TrialStatus::parse(v).ok_or_else(|| bad("status"))?),
            _ => match k.strip_prefix("p.") {
                Some(name) => {
                    params.0.insert(name.to_owned(), ParamValue::parse(v));
                }
                None => return Err(format!("unknown field `{k}`")),
            },
        }
    }
    let missing = |f: &str| format!("missing `{f}`");
    Ok(TrialRecord {
        id: id.ok_or_else(|| missing("id"))?,
        learner: learner.ok_or_else(|| missing("learner"))?,
        params,
        seed: seed.ok_or_else(|| missing("seed"))?,
        val_loss: val_loss.ok_or_else(|| missing("val_loss"))?,
        test_loss,
        seconds: 0.0,
        status: status.ok_or_else(|| missing("status"))?,
    })
}

/// Reads a trial log; a missing file is an empty history. Records with ids
/// out of order or a truncated last line (an interrupted write) end the
/// history there.
pub fn load_history(path: &Path) -> Result<Vec<TrialRecord>, HpoError> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(source) => {
            return Err(HpoError::Io {
                path: path.to_owned(),
                source,
            })
        }
    };
    let mut out: Vec<TrialRecord> = Vec::new();
    let lines: Vec<String> = BufReader::new(file)
        .lines()
        .collect::<Result<_, _>>()
        .map_err(|source| HpoError::Io {
            path: path.to_owned(),
            source,
        })?;
    let last = lines.len();
    for (i, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match parse_record(line) {
            Ok(r) if r.id == out.len() => out.push(r),
            Ok(r) => {
                return Err(HpoError::Parse {
                    line: i + 1,
                    reason: format!("expected trial id {}, found {}", out.len(), r.id),
                })
            }
            Err(_) if i + 1 == last => break,
            Err(reason) => return Err(HpoError::Parse { line: i + 1, reason }),
        }
    }
    // wall-clock seconds live in the sidecar file
    if let Some(times) = read_timings(&timings_path(path)) {
        for r in &mut out {
            if let Some(s) = times.get(r.id) {
                r.seconds = *s;
            }
        }
    }
    Ok(out)
}

fn timings_path(log: &Path) -> PathBuf {
    log.with_file_name("timings.tsv")
}

fn read_timings(path: &Path) -> Option<Vec<f64>> {
    let text = std::fs::read_to_string(path).ok()?;
    let mut out = Vec::new();
    for line in text.lines().skip(1) {
        let (id, secs) = line.split_once('\t')?;
        let id: usize = id.parse().ok()?;
        if id != out.len() {
            return None;
        }
        out.push(secs.parse().ok()?);
    }
    Some(out)
}

/// Append-only trial log plus the `timings.tsv` sidecar next to it.
pub struct TrialLog {
    path: PathBuf,
    log: File,
    timings: File,
}

impl TrialLog {
    pub fn open(path: &Path) -> Result<Self, HpoError> {
        let io = |source| HpoError::Io {
            path: path.to_owned(),
            source,
        };
        let log = OpenOptions::new().create(true).append(true).open(path).map_err(io)?;
        let tpath = timings_path(path);
        let fresh = !tpath.exists();
        let mut timings = OpenOptions::new().create(true).append(true).open(&tpath).map_err(io)?;
        if fresh {
            writeln!(timings, "id\tseconds").map_err(io)?;
        }
        Ok(TrialLog {
            path: path.to_owned(),
            log,
            timings,
        })
    }

    /// Replaces whatever is at `path` with `history` and opens it for
    /// appending; used on resume to drop a torn last line.
    pub fn rewrite(path: &Path, history: &[TrialRecord]) -> Result<Self, HpoError> {
        let io = |source| HpoError::Io {
            path: path.to_owned(),
            source,
        };
        for p in [path.to_owned(), timings_path(path)] {
            match std::fs::remove_file(&p) {
                Err(e) if e.kind() != std::io::ErrorKind::NotFound => return Err(io(e)),
                _ => {}
            }
        }
        let mut log = TrialLog::open(path)?;
        for r in history {
            log.append(r)?;
        }
        Ok(log)
    }

    pub fn append(&mut self, record: &TrialRecord) -> Result<(), HpoError> {
        let io = |source| HpoError::Io {
            path: self.path.clone(),
            source,
        };
        writeln!(self.log, "{}", record.to_line()).map_err(io)?;
        self.log.flush().map_err(io)?;
        writeln!(self.timings, "{}\t{:.6}", record.id, record.seconds).map_err(io)?;
        self.timings.flush().map_err(io)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizeConfig {
    pub budget: usize,
    /// Trials evaluated concurrently.
    pub workers: usize,
    pub seed: u64,
    pub tpe: TpeConfig,
    /// Evaluated as trial 0 when the history is empty.
    pub warm_start: Option<Hyperparameters>,
    /// Once exceeded, remaining trials are recorded as pruned without being
    /// evaluated.
    pub time_limit: Option<Duration>,
    pub learner: String,
}

impl Default for OptimizeConfig {
    fn default() -> Self {
        OptimizeConfig {
            budget: DEFAULT_BUDGET,
            workers: 1,
            seed: 0,
            tpe: TpeConfig::default(),
            warm_start: None,
            time_limit: None,
            learner: String::new(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct OptimizeResult {
    pub best: TrialRecord,
    pub history: Vec<TrialRecord>,
}

/// Runs trials until `config.budget` have been attempted, continuing after
/// `resume` (the persisted history, ids `0..resume.len()`).
///
/// The configuration for trial `i` is suggested against the history of all
/// trials before the start of its batch, where batches are aligned to
/// multiples of `workers`; its seed is derived from the master seed and `i`.
/// Results therefore do not depend on thread timing or on where a run was
/// interrupted. `on_trial` sees every new record in id order.
pub fn optimize<F, S>(
    objective: F,
    space: &SearchSpace,
    config: &OptimizeConfig,
    resume: Vec<TrialRecord>,
    mut on_trial: S,
) -> Result<OptimizeResult, HpoError>
where
    F: Fn(&Hyperparameters, u64) -> Result<f64, String> + Sync,
    S: FnMut(&TrialRecord) -> Result<(), HpoError>,
{
    if config.budget == 0 {
        return Err(HpoError::ZeroBudget);
    }
    space.validate().map_err(HpoError::InvalidSpace)?;
    let workers = config.workers.max(1);
    let started = Instant::now();
    let mut history = resume;
    history.truncate(config.budget);

    while history.len() < config.budget {
        let next = history.len();
        let batch_end = ((next / workers + 1) * workers).min(config.budget);
        let base = next / workers * workers;
        let snapshot: Vec<TrialRecord> = history[..base].to_vec();
        let jobs: Vec<(usize, u64, Hyperparameters)> = (next..batch_end)
            .map(|id| {
                let seed = rng::derive(config.seed, id as u64);
                let hp = match (&config.warm_start, id) {
                    (Some(ws), 0) => ws.clone(),
                    _ => tpe_suggest(&snapshot, space, &config.tpe, seed),
                };
                (id, seed, hp)
            })
            .collect();
        let out_of_time = config.time_limit.is_some_and(|t| started.elapsed() >= t);
        let evaluate = |(id, seed, hp): (usize, u64, Hyperparameters)| -> TrialRecord {
            if out_of_time {
                return TrialRecord::new(id, &config.learner, hp, seed, f64::NAN, TrialStatus::PrunedByBudget);
            }
            let t0 = Instant::now();
            let result = objective(&hp, seed);
            let (loss, status) = match result {
                Ok(l) if l.is_finite() => (l, TrialStatus::Ok),
                _ => (f64::NAN, TrialStatus::Failed),
            };
            let mut r = TrialRecord::new(id, &config.learner, hp, seed, loss, status);
            r.seconds = t0.elapsed().as_secs_f64();
            r
        };
        let records: Vec<TrialRecord> = if jobs.len() == 1 {
            jobs.into_iter().map(evaluate).collect()
        } else {
            std::thread::scope(|s| {
                let handles: Vec<_> = jobs.into_iter().map(|job| s.spawn(|| evaluate(job))).collect();
                handles
                    .into_iter()
                    .map(|h| h.join().expect("trial thread panicked"))
                    .collect()
            })
        };
        for r in records {
            on_trial(&r)?;
            history.push(r);
        }
    }

    let best = history
        .iter()
        .filter(|t| t.status == TrialStatus::Ok)
        .min_by(|a, b| a.val_loss.total_cmp(&b.val_loss).then(a.id.cmp(&b.id)))
        .cloned()
        .ok_or(HpoError::AllTrialsFailed(history.len()))?;
    Ok(OptimizeResult { best, history })
}
