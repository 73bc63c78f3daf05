//! Command-line front end.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use delelstm_core::data::{make_windows, WindowedDataset};
use delelstm_core::train::{evaluate_dataset, explain_dataset, Checkpoint, Grid};
use delelstm_core::Error as CoreError;

use crate::checkpoint;
use crate::config::Settings;
use crate::error::{Error, Result};
use crate::io::{load_csv, write_table, CsvSchema};
use crate::report::{metrics_csv, write_importance, write_text};
use crate::search::{ablate, grid_search, repeat_runs, CellOutcome, RepeatSummary};
use crate::synth::{to_table, SynthKind};

#[derive(Debug, Parser)]
#[command(name = "delelstm", version, about = "Explainable multivariate forecasting with a decomposed LSTM")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train over `repeats` seeds (or a grid) and write a checkpoint plus metrics.
    Train(Common),
    /// Score a checkpoint on the test split of a dataset.
    Evaluate(Common),
    /// Write per-timestep importance tables and the global ranking.
    Explain(Common),
    /// Retrain a plain LSTM on the most important variables.
    Ablate(Common),
    /// Write a synthetic dataset with a known driver variable as CSV.
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct Common {
    /// Flat key = value config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Target column name.
    #[arg(long)]
    pub target: Option<String>,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Search the batch size / learning rate / hidden size grid.
    #[arg(long)]
    pub grid: bool,
    #[arg(long)]
    pub keep_fraction: Option<f64>,
    #[arg(long)]
    pub window: Option<usize>,
    #[arg(long)]
    pub stride: Option<usize>,
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Any config key, as KEY=VALUE; may be repeated.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    /// `instant` or `longmem`.
    #[arg(long, default_value = "instant")]
    pub kind: String,
    #[arg(long, default_value_t = 500)]
    pub samples: usize,
    #[arg(long, default_value_t = 4)]
    pub variables: usize,
    #[arg(long, default_value_t = 24)]
    pub window: usize,
    #[arg(long, default_value_t = 0)]
    pub driver: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Destination CSV file.
    #[arg(long)]
    pub out: PathBuf,
}

fn require_file(path: &Path, what: &str, data: bool) -> Result<()> {
    if path.is_file() {
        return Ok(());
    }
    let msg = format!("{what} '{}' does not exist", path.display());
    Err(if data {
        Error::io(path, std::io::Error::new(std::io::ErrorKind::NotFound, msg))
    } else {
        Error::Config(msg)
    })
}

impl Common {
    /// Config file, then `--set` pairs, then the dedicated flags.
    pub fn settings(&self) -> Result<Settings> {
        let mut s = match &self.config {
            Some(p) => {
                require_file(p, "config file", false)?;
                Settings::load(p)?
            }
            None => Settings::default(),
        };
        for kv in &self.overrides {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, found '{kv}'")))?;
            s.apply(k.trim(), v.trim())?;
        }
        if let Some(d) = &self.data {
            s.data = Some(d.clone());
        }
        if let Some(t) = &self.target {
            s.target = Some(t.clone());
        }
        if let Some(v) = self.seed {
            s.train.seed = v;
        }
        if let Some(v) = self.window {
            s.train.window = v;
        }
        if let Some(v) = self.stride {
            s.train.stride = Some(v);
        }
        if let Some(v) = self.lambda {
            s.train.lambda = v;
        }
        if let Some(v) = self.keep_fraction {
            s.keep_fraction = v;
        }
        if self.grid && s.train.grid.is_none() {
            s.train.grid = Some(Grid::default());
        }
        Ok(s)
    }

    fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("."))
    }

    fn checkpoint_path(&self) -> PathBuf {
        self.checkpoint.clone().unwrap_or_else(|| self.out_dir().join("checkpoint.txt"))
    }
}

fn data_path(s: &Settings) -> Result<PathBuf> {
    let p = s
        .data
        .clone()
        .ok_or_else(|| Error::Config("no dataset given (use --data or 'data =')".into()))?;
    require_file(&p, "dataset", true)?;
    Ok(p)
}

fn load_windows(path: &Path, schema: &CsvSchema, window: usize, stride: usize) -> Result<WindowedDataset> {
    let table = load_csv(path, schema)?;
    if table.dropped_rows > 0 {
        eprintln!("note: dropped {} unparseable rows from {}", table.dropped_rows, path.display());
    }
    Ok(make_windows(&table, window, stride)?)
}

fn summary_line(label: &str, s: &RepeatSummary) -> String {
    let [rmse, mae, mape] = s.mean_std();
    format!(
        "{label}: RMSE {:.4} ± {:.4}  MAE {:.4} ± {:.4}  MAPE {:.2}% ± {:.2}  ({} seeds)\n",
        rmse.0,
        rmse.1,
        mae.0,
        mae.1,
        mape.0,
        mape.1,
        s.runs.len()
    )
}

fn train(c: &Common) -> Result<String> {
    let s = c.settings()?;
    let data = data_path(&s)?;
    let schema = s.schema()?;
    let out = c.out_dir();
    let ds = load_windows(&data, &schema, s.train.window, s.stride())?;
    for w in s.train.validate(ds.variables())? {
        eprintln!("warning: {w}");
    }
    let mut text = String::new();
    let summary = match &s.train.grid {
        Some(grid) => {
            let outcome = grid_search(&ds, &s.train, grid)?;
            let mut table = String::from("batch_size,learning_rate,hidden,val_rmse,val_mae,val_mape,status\n");
            for cell in &outcome.cells {
                let cfg = &cell.config;
                let (metrics, status) = match &cell.outcome {
                    CellOutcome::Trained { val, .. } => (format!("{},{},{}", val.rmse, val.mae, val.mape), "ok".to_owned()),
                    CellOutcome::Diverged { epoch } => (",,".to_owned(), format!("diverged at epoch {epoch}")),
                    CellOutcome::Failed(e) => (",,".to_owned(), format!("failed: {}", e.replace(',', ";"))),
                };
                table.push_str(&format!(
                    "{},{},{},{metrics},{status}\n",
                    cfg.batch_size, cfg.learning_rate, cfg.hidden
                ));
            }
            write_text(&out.join("grid.csv"), &table)?;
            let best = &outcome.cells[outcome.best].config;
            text.push_str(&format!(
                "grid: {} cells, best batch_size={} learning_rate={} hidden={}\n",
                outcome.cells.len(),
                best.batch_size,
                best.learning_rate,
                best.hidden
            ));
            outcome.repeats
        }
        None => repeat_runs(&ds, &s.train)?,
    };
    write_text(&out.join("metrics.csv"), &metrics_csv(&summary.runs))?;
    let ck_path = c.checkpoint_path();
    if let Some(parent) = ck_path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    checkpoint::save(&ck_path, &summary.checkpoint)?;
    text.push_str(&summary_line("test", &summary));
    text.push_str(&format!("checkpoint written to {}\n", ck_path.display()));
    Ok(text)
}

/// Checkpoint plus its dataset, windowed and standardized like the training data.
struct Loaded {
    ck: Checkpoint,
    raw: WindowedDataset,
    scaled: WindowedDataset,
    settings: Settings,
}

fn load_for_checkpoint(c: &Common) -> Result<Loaded> {
    let mut settings = c.settings()?;
    let ck_path = c.checkpoint_path();
    require_file(&ck_path, "checkpoint", true)?;
    let data = data_path(&settings)?;
    let ck = checkpoint::load(&ck_path)?;
    if settings.target.is_none() {
        settings.target = Some(ck.target_name.clone());
    }
    let stride = ck.config.stride.unwrap_or(ck.config.window);
    let raw = load_windows(&data, &settings.schema()?, ck.config.window, stride)?;
    if raw.names != ck.variable_names {
        return Err(CoreError::DimensionMismatch {
            expected: ck.variable_names.len(),
            got: raw.variables(),
        }
        .into());
    }
    let scaled = match &ck.scaler {
        Some(sc) => raw.standardize(sc)?,
        None => raw.clone(),
    };
    Ok(Loaded {
        ck,
        raw,
        scaled,
        settings,
    })
}

fn evaluate(c: &Common) -> Result<String> {
    let l = load_for_checkpoint(c)?;
    let split = l.ck.config.split(l.scaled.len());
    let test = l.scaled.range(split.test);
    if test.is_empty() {
        return Err(Error::Config("the test split is empty".into()));
    }
    let mut cfg = l.ck.config.clone();
    cfg.lambda = c.lambda.unwrap_or(cfg.lambda);
    let m = evaluate_dataset(&l.ck.params, &test, &cfg)?;
    let table = format!("rmse,mae,mape,mape_excluded\n{},{},{},{}\n", m.rmse, m.mae, m.mape, m.mape_excluded);
    write_text(&c.out_dir().join("evaluation.csv"), &table)?;
    Ok(format!("test: RMSE {:.4}  MAE {:.4}  MAPE {:.2}%\n", m.rmse, m.mae, m.mape))
}

fn explain(c: &Common) -> Result<String> {
    let l = load_for_checkpoint(c)?;
    let lambda = c.lambda.unwrap_or(l.ck.config.lambda);
    let report = explain_dataset(&l.ck.params, &l.scaled, lambda)?;
    let files = write_importance(&c.out_dir(), &report)?;
    let mut text = String::new();
    for (pos, v) in report.ranking().into_iter().enumerate() {
        text.push_str(&format!("{:>3}. {} {:.4}\n", pos + 1, report.variable_names[v], report.global[v]));
    }
    text.push_str(&format!("wrote {} files to {}\n", files.len(), c.out_dir().display()));
    Ok(text)
}

fn run_ablation(c: &Common) -> Result<String> {
    let l = load_for_checkpoint(c)?;
    let lambda = c.lambda.unwrap_or(l.ck.config.lambda);
    let report = explain_dataset(&l.ck.params, &l.scaled, lambda)?;
    let mut base = l.ck.config.clone();
    base.seed = c.seed.unwrap_or(l.settings.train.seed);
    let outcome = ablate(&l.raw, &report, l.settings.keep_fraction, &base)?;
    let mut table = format!("# kept: {}\n", outcome.kept_names.join(";"));
    table.push_str(&metrics_csv(&outcome.summary.runs));
    write_text(&c.out_dir().join("ablation.csv"), &table)?;
    Ok(format!(
        "kept {} of {} variables: {}\n{}",
        outcome.kept.len(),
        l.raw.variables(),
        outcome.kept_names.join(", "),
        summary_line("plain LSTM test", &outcome.summary)
    ))
}

fn synth(a: &SynthArgs) -> Result<String> {
    let kind = SynthKind::parse(&a.kind)
        .ok_or_else(|| Error::Config(format!("unknown synthetic kind '{}' (instant or longmem)", a.kind)))?;
    let ds = kind.generate(a.seed, a.samples, a.variables, a.window, a.driver)?;
    let (names, rows) = to_table(&ds);
    if let Some(parent) = a.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    write_table(&a.out, &names, &rows)?;
    Ok(format!("wrote {} rows to {}\n", rows.len(), a.out.display()))
}

/// Runs one command and returns its report for standard output.
pub fn run(cli: &Cli) -> Result<String> {
    match &cli.command {
        Command::Train(c) => train(c),
        Command::Evaluate(c) => evaluate(c),
        Command::Explain(c) => explain(c),
        Command::Ablate(c) => run_ablation(c),
        Command::Synth(a) => synth(a),
    }
}
