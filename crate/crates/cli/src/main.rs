use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use bakeoff_core::data::{self, synthetic};
use bakeoff_core::experiment::{self, ExperimentConfig, Prepared, RunOptions};
use bakeoff_core::metrics::ComparisonMatrix;
use clap::{Args, Parser, Subcommand, ValueEnum};

/// Tune, train, ensemble and compare tabular learners under one protocol.
#[derive(Parser)]
#[command(name = "bakeoff", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Experiment file (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Concurrent trials and retrains; overrides `hpo.workers`.
    #[arg(long)]
    workers: Option<usize>,
    /// Continue trial logs already present in the output directory.
    #[arg(long)]
    resume: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Validate the dataset and write the split assignment.
    Ingest(Common),
    /// Hyperparameter search for every learner.
    Tune(Common),
    /// Retrain the best configurations under the final seeds.
    Train(Common),
    /// Combine the final models and evaluate the ensemble.
    Ensemble(Common),
    /// Write results tables to report.txt and summary.tsv.
    Report(Common),
    /// Write the optimization and subset-size curves.
    Curves(Common),
    /// All stages in order.
    Run(Common),
    /// Relative deterioration and pairwise Friedman tests across datasets.
    Compare {
        /// `summary.tsv` files of finished runs, one per dataset.
        #[arg(long = "summary", required = true)]
        summaries: Vec<PathBuf>,
        /// CSV marking each model's unseen datasets.
        #[arg(long)]
        unseen: PathBuf,
        /// Also write the comparison to this file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a seeded synthetic dataset as CSV.
    Synth {
        #[arg(long, value_enum, default_value = "classification")]
        task: SynthTask,
        #[arg(long, default_value_t = 2000)]
        rows: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        output: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SynthTask {
    Classification,
    Regression,
}

fn setup(c: &Common) -> Result<(ExperimentConfig, RunOptions)> {
    let mut cfg = ExperimentConfig::load(&c.config).with_context(|| format!("loading {}", c.config.display()))?;
    cfg.apply_seed_override()?;
    let Some(out) = c.out.clone().or_else(|| cfg.output.clone()) else {
        bail!("no output directory: pass --out or set `output` in the config");
    };
    Ok((
        cfg,
        RunOptions {
            out,
            workers: c.workers,
            resume: c.resume,
        },
    ))
}

fn staged<T>(
    c: &Common,
    stage: impl FnOnce(&ExperimentConfig, &Prepared, &RunOptions) -> Result<T, experiment::ExperimentError>,
) -> Result<T> {
    let (cfg, opts) = setup(c)?;
    let p = experiment::prepare(&cfg)?;
    Ok(stage(&cfg, &p, &opts)?)
}

fn compare(summaries: &[PathBuf], unseen: &Path, out: Option<&Path>) -> Result<()> {
    let mut rows = Vec::new();
    for s in summaries {
        rows.extend(experiment::read_summary(s)?);
    }
    let (models, datasets, losses) = experiment::loss_matrix(&rows)?;
    let mask = experiment::read_unseen_mask(unseen, &models, &datasets)?;
    let m = ComparisonMatrix::new(models, datasets, losses, mask)?;
    let text = experiment::render_comparison(&experiment::compare(&m)?);
    print!("{text}");
    if let Some(path) = out {
        std::fs::write(path, &text).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    match dispatch(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            // causes already quoted by the outer message are not repeated
            let mut msg = e.to_string();
            for cause in e.chain().skip(1) {
                let c = cause.to_string();
                if !msg.contains(&c) {
                    msg = format!("{msg}: {c}");
                }
            }
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Ingest(c) => {
            let (cfg, opts) = setup(&c)?;
            let (_, summary) = experiment::ingest(&cfg, &opts)?;
            print!("{summary}");
        }
        Command::Tune(c) => {
            for t in staged(&c, experiment::tune)? {
                println!(
                    "{}: {} trials, best val loss {} (trial {})",
                    t.learner,
                    t.history.len(),
                    t.best.val_loss,
                    t.best.id
                );
            }
        }
        Command::Train(c) => {
            for r in staged(&c, experiment::train)? {
                println!("{} seed {}: val {} test {}", r.model, r.seed, r.val_loss, r.test_loss);
            }
        }
        Command::Ensemble(c) => {
            for r in staged(&c, experiment::ensemble)?.results {
                println!("{} seed {}: val {} test {}", r.model, r.seed, r.val_loss, r.test_loss);
            }
        }
        Command::Report(c) => print!("{}", staged(&c, experiment::report)?.text),
        Command::Curves(c) => {
            for path in staged(&c, experiment::curves)? {
                println!("{}", path.display());
            }
        }
        Command::Run(c) => {
            let (cfg, opts) = setup(&c)?;
            print!("{}", experiment::run(&cfg, &opts)?.text);
        }
        Command::Compare { summaries, unseen, out } => compare(&summaries, &unseen, out.as_deref())?,
        Command::Synth { task, rows, seed, output } => {
            let ds = match task {
                SynthTask::Classification => synthetic::classification(rows, seed),
                SynthTask::Regression => synthetic::regression(rows, seed),
            };
            data::write_csv(&ds, &output)?;
            println!("wrote {rows} rows to {}", output.display());
        }
    }
    Ok(())
}
