//! Result tables, curve files and cross-dataset comparison.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use ndarray::Array2;

use super::ExperimentError;
use crate::hpo::CurvePoint;
use crate::metrics::{self, format_cell, Aggregate, ComparisonMatrix, Metric, MetricsError, SIGNIFICANCE};

/// One column of a results table.
#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    pub dataset: String,
    pub metric: Metric,
}

/// One model's cells, aligned with the table's columns; `None` renders "-".
#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub model: String,
    pub cells: Vec<Option<Aggregate>>,
}

const BEST_MARK: &str = " *";

/// Renders `mean ± sem` cells (cross-entropy times 100) with the lowest mean
/// of every column marked `*`. Ties are all marked; the SEM plays no part.
pub fn report_table(columns: &[Column], rows: &[TableRow]) -> String {
    let best: Vec<f64> = (0..columns.len())
        .map(|c| {
            rows.iter()
                .filter_map(|r| r.cells.get(c).copied().flatten())
                .map(|a| a.mean)
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    let header: Vec<String> = std::iter::once("model".to_string())
        .chain(columns.iter().map(|c| format!("{} ({})", c.dataset, c.metric.name())))
        .collect();
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let mut line = vec![r.model.clone()];
            for (c, col) in columns.iter().enumerate() {
                line.push(match r.cells.get(c).copied().flatten() {
                    Some(a) if a.mean == best[c] => format_cell(a, col.metric) + BEST_MARK,
                    Some(a) => format_cell(a, col.metric),
                    None => "-".into(),
                });
            }
            line
        })
        .collect();
    let widths: Vec<usize> = (0..header.len())
        .map(|j| {
            std::iter::once(&header)
                .chain(&body)
                .map(|l| l[j].chars().count())
                .max()
                .unwrap_or(0)
        })
        .collect();
    let render = |cells: &[String]| -> String {
        let padded: Vec<String> = cells
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!("{c:<w$}"))
            .collect();
        padded.join(" | ").trim_end().to_string()
    };
    let mut out = render(&header) + "\n";
    let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
    out += &rule.join("-+-");
    out.push('\n');
    for line in &body {
        out += &render(line);
        out.push('\n');
    }
    out
}

/// Parsed row of a rendered table: model and `(mean, sem)` per column in
/// display units (cross-entropy still times 100).
pub type ParsedRow = (String, Vec<Option<(f64, f64)>>);

/// Reads back a table written by [`report_table`].
pub fn parse_report_table(text: &str) -> Result<Vec<ParsedRow>, ExperimentError> {
    let bad = |line: usize, what: &str| ExperimentError::Format(format!("report line {line}: {what}"));
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| bad(1, "empty table"))?;
    let n_cols = header.split(" | ").count();
    lines.next();
    let mut rows = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            break;
        }
        let parts: Vec<&str> = line.split(" | ").map(str::trim).collect();
        if parts.len() != n_cols {
            return Err(bad(i + 1, "wrong number of cells"));
        }
        let cells = parts[1..]
            .iter()
            .map(|cell| {
                if *cell == "-" {
                    return Ok(None);
                }
                let cell = cell.strip_suffix(BEST_MARK.trim()).unwrap_or(cell).trim();
                let (m, s) = cell.split_once(" ± ").ok_or_else(|| bad(i + 1, "cell without ±"))?;
                let num = |t: &str| t.parse::<f64>().map_err(|_| bad(i + 1, "non-numeric cell"));
                Ok(Some((num(m)?, num(s)?)))
            })
            .collect::<Result<Vec<_>, ExperimentError>>()?;
        rows.push((parts[0].to_string(), cells));
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CurveKind {
    /// Best-so-far validation loss against the trial index.
    HpoPlateau,
    /// Ensemble test loss against the number of members.
    SubsetSize,
}

impl CurveKind {
    fn prefix(self) -> &'static str {
        match self {
            CurveKind::HpoPlateau => "hpo",
            CurveKind::SubsetSize => "subset",
        }
    }
}

/// Writes `dir/<hpo|subset>_<label>.csv` with header `x,mean,sem`. Numbers
/// use the shortest round-trip form, so identical input gives identical
/// bytes. An empty series is an error and writes nothing.
pub fn emit_curves(
    dir: &Path,
    kind: CurveKind,
    label: &str,
    series: &[CurvePoint],
) -> Result<PathBuf, ExperimentError> {
    if series.is_empty() {
        return Err(ExperimentError::EmptySeries(format!("{}_{label}", kind.prefix())));
    }
    let mut text = String::from("x,mean,sem\n");
    for p in series {
        writeln!(text, "{},{},{}", p.x, p.mean, p.sem).expect("writing to a String");
    }
    let path = dir.join(format!("{}_{label}.csv", kind.prefix()));
    super::write_file(&path, &text)?;
    Ok(path)
}

/// Reads a curve file back.
pub fn read_curve(path: &Path) -> Result<Vec<CurvePoint>, ExperimentError> {
    let text = super::read_file(path)?;
    text.lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            let bad = || ExperimentError::Format(format!("{}: bad curve row `{l}`", path.display()));
            if f.len() != 3 {
                return Err(bad());
            }
            Ok(CurvePoint {
                x: f[0].parse().map_err(|_| bad())?,
                mean: f[1].parse().map_err(|_| bad())?,
                sem: f[2].parse().map_err(|_| bad())?,
            })
        })
        .collect()
}

/// Deterioration rows, omitted models and pairwise p-values.
#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub models: Vec<String>,
    /// `(model, percent)` for models with at least one unseen dataset.
    pub deterioration: Vec<(String, f64)>,
    /// Models without unseen datasets.
    pub omitted: Vec<String>,
    /// Pairwise Friedman p-values, models x models.
    pub p_values: Array2<f64>,
}

/// Relative deterioration over unseen datasets and the pairwise Friedman
/// p-value matrix. Needs at least two models and two datasets.
pub fn compare(m: &ComparisonMatrix) -> Result<Comparison, ExperimentError> {
    let (k, n) = m.losses.dim();
    if k < 2 || n < 2 {
        return Err(MetricsError::Degenerate { models: k, datasets: n }.into());
    }
    let mut deterioration = Vec::new();
    let mut omitted = Vec::new();
    for (i, name) in m.models.iter().enumerate() {
        match metrics::relative_deterioration(m, i) {
            Ok(d) => deterioration.push((name.clone(), d)),
            Err(MetricsError::NoUnseenDatasets(_)) => omitted.push(name.clone()),
            Err(e) => return Err(e.into()),
        }
    }
    Ok(Comparison {
        models: m.models.clone(),
        deterioration,
        omitted,
        p_values: metrics::pairwise_friedman(m.losses.view())?,
    })
}

pub fn render_comparison(c: &Comparison) -> String {
    let w = c.models.iter().map(|m| m.chars().count()).max().unwrap_or(5).max(5);
    let mut out = String::from("relative deterioration on unseen datasets (geometric mean)\n");
    writeln!(out, "{:<w$}  deterioration", "model").unwrap();
    for (m, d) in &c.deterioration {
        writeln!(out, "{m:<w$}  {d:.2}%").unwrap();
    }
    for m in &c.omitted {
        writeln!(out, "notice: `{m}` has no unseen datasets; row omitted").unwrap();
    }
    writeln!(out, "\npairwise Friedman p-values (* = rejected at the {:.0}% level)", 100.0 * (1.0 - SIGNIFICANCE)).unwrap();
    write!(out, "{:<w$}", "").unwrap();
    for m in &c.models {
        write!(out, "  {m:>w$}").unwrap();
    }
    out.push('\n');
    for (a, m) in c.models.iter().enumerate() {
        write!(out, "{m:<w$}").unwrap();
        for b in 0..c.models.len() {
            let cell = if a == b {
                "-".to_string()
            } else {
                let p = c.p_values[[a, b]];
                format!("{p:.4}{}", if p < SIGNIFICANCE { "*" } else { "" })
            };
            write!(out, "  {cell:>w$}").unwrap();
        }
        out.push('\n');
    }
    out
}

/// Reads an unseen mask: header `model,<dataset>...`, one row per model
/// with `1`/`true` for unseen and `0`/`false` otherwise. Rows and columns
/// may come in any order but must cover exactly `models` x `datasets`.
pub fn read_unseen_mask(path: &Path, models: &[String], datasets: &[String]) -> Result<Array2<bool>, ExperimentError> {
    let text = super::read_file(path)?;
    let bad = |msg: String| ExperimentError::MaskShape(format!("{}: {msg}", path.display()));
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header: Vec<&str> = lines.next().ok_or_else(|| bad("empty file".into()))?.split(',').map(str::trim).collect();
    let cols = &header[1..];
    if cols.len() != datasets.len() || datasets.iter().any(|d| !cols.contains(&d.as_str())) {
        return Err(bad(format!("columns {cols:?} do not match datasets {datasets:?}")));
    }
    let mut mask = Array2::from_elem((models.len(), datasets.len()), false);
    let mut seen = vec![false; models.len()];
    for line in lines {
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != header.len() {
            return Err(bad(format!("row `{line}` has {} fields, expected {}", f.len(), header.len())));
        }
        let i = models
            .iter()
            .position(|m| m == f[0])
            .ok_or_else(|| bad(format!("unknown model `{}`", f[0])))?;
        if std::mem::replace(&mut seen[i], true) {
            return Err(bad(format!("model `{}` listed twice", f[0])));
        }
        for (c, v) in cols.iter().zip(&f[1..]) {
            let d = datasets.iter().position(|d| d == c).expect("checked above");
            mask[[i, d]] = match *v {
                "1" | "true" => true,
                "0" | "false" => false,
                other => return Err(bad(format!("mask value `{other}` is not 0/1"))),
            };
        }
    }
    if let Some(i) = seen.iter().position(|s| !s) {
        return Err(bad(format!("no row for model `{}`", models[i])));
    }
    Ok(mask)
}

/// One line of `summary.tsv`: test-loss aggregate of one model on one
/// dataset, in raw (unscaled) units.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub dataset: String,
    pub model: String,
    pub metric: Metric,
    pub agg: Aggregate,
}

const SUMMARY_HEADER: &str = "dataset\tmodel\tmetric\tmean\tsem";

fn metric_key(m: Metric) -> &'static str {
    match m {
        Metric::CrossEntropy => "ce",
        Metric::Mse => "mse",
        Metric::Rmse => "rmse",
    }
}

pub fn write_summary(path: &Path, rows: &[SummaryRow]) -> Result<(), ExperimentError> {
    let mut text = String::from(SUMMARY_HEADER) + "\n";
    for r in rows {
        writeln!(
            text,
            "{}\t{}\t{}\t{}\t{}",
            r.dataset,
            r.model,
            metric_key(r.metric),
            r.agg.mean,
            r.agg.sem
        )
        .unwrap();
    }
    super::write_file(path, &text)
}

pub fn read_summary(path: &Path) -> Result<Vec<SummaryRow>, ExperimentError> {
    let text = super::read_file(path)?;
    let bad = |l: &str| ExperimentError::Format(format!("{}: bad summary row `{l}`", path.display()));
    text.lines()
        .skip(1)
        .filter(|l| !l.is_empty())
        .map(|l| {
            let f: Vec<&str> = l.split('\t').collect();
            if f.len() != 5 {
                return Err(bad(l));
            }
            let metric = match f[2] {
                "ce" => Metric::CrossEntropy,
                "mse" => Metric::Mse,
                "rmse" => Metric::Rmse,
                _ => return Err(bad(l)),
            };
            Ok(SummaryRow {
                dataset: f[0].into(),
                model: f[1].into(),
                metric,
                agg: Aggregate {
                    mean: f[3].parse().map_err(|_| bad(l))?,
                    sem: f[4].parse().map_err(|_| bad(l))?,
                },
            })
        })
        .collect()
}

/// Builds the models x datasets matrix of mean test losses from summary
/// rows. Models and datasets keep first-appearance order; every pair must
/// be present.
pub fn loss_matrix(rows: &[SummaryRow]) -> Result<(Vec<String>, Vec<String>, Array2<f64>), ExperimentError> {
    let mut models: Vec<String> = Vec::new();
    let mut datasets: Vec<String> = Vec::new();
    let mut cells = BTreeMap::new();
    for r in rows {
        if !models.contains(&r.model) {
            models.push(r.model.clone());
        }
        if !datasets.contains(&r.dataset) {
            datasets.push(r.dataset.clone());
        }
        cells.insert((r.model.clone(), r.dataset.clone()), r.agg.mean);
    }
    let mut losses = Array2::zeros((models.len(), datasets.len()));
    for (i, m) in models.iter().enumerate() {
        for (j, d) in datasets.iter().enumerate() {
            losses[[i, j]] = *cells
                .get(&(m.clone(), d.clone()))
                .ok_or_else(|| ExperimentError::Format(format!("no result for model `{m}` on `{d}`")))?;
        }
    }
    Ok((models, datasets, losses))
}
