//! Grid search, repeated seeds and top-k ablation.
//!
//! Cells and seeds run as independent jobs on the rayon pool; each job is a
//! single-threaded, seeded training run, and results are collected in input
//! order, so the outcome does not depend on the number of threads.

use rayon::prelude::*;

use delelstm_core::data::WindowedDataset;
use delelstm_core::interpretation::ImportanceReport;
use delelstm_core::metrics::{mean_std, Metrics};
use delelstm_core::model::ModelKind;
use delelstm_core::train::{train_and_evaluate, Checkpoint, Grid, RunResult, TrainConfig};
use delelstm_core::Error as CoreError;

use crate::error::{Error, Result};
use crate::report::SeedMetrics;

#[derive(Debug, Clone)]
pub enum CellOutcome {
    Trained { val: Metrics, test: Metrics },
    Diverged { epoch: usize },
    Failed(String),
}

#[derive(Debug, Clone)]
pub struct CellResult {
    pub config: TrainConfig,
    pub outcome: CellOutcome,
}

impl CellResult {
    pub fn val_rmse(&self) -> Option<f64> {
        match &self.outcome {
            CellOutcome::Trained { val, .. } => Some(val.rmse),
            _ => None,
        }
    }
}

/// Metrics of one configuration over `repeats` seeds.
#[derive(Debug, Clone)]
pub struct RepeatSummary {
    pub config: TrainConfig,
    pub runs: Vec<SeedMetrics>,
    /// Checkpoint of the first seed.
    pub checkpoint: Checkpoint,
    pub warnings: Vec<String>,
}

impl RepeatSummary {
    /// `(mean, std)` of RMSE, MAE and MAPE.
    pub fn mean_std(&self) -> [(f64, f64); 3] {
        let col = |f: fn(&Metrics) -> f64| mean_std(&self.runs.iter().map(|r| f(&r.metrics)).collect::<Vec<_>>());
        [col(|m| m.rmse), col(|m| m.mae), col(|m| m.mape)]
    }
}

#[derive(Debug, Clone)]
pub struct GridOutcome {
    pub cells: Vec<CellResult>,
    /// Index into `cells` of the lowest validation RMSE.
    pub best: usize,
    pub repeats: RepeatSummary,
}

fn run_cell(ds: &WindowedDataset, config: TrainConfig) -> CellResult {
    let outcome = match train_and_evaluate(ds, &config) {
        Ok(RunResult { val: Some(val), test, .. }) => CellOutcome::Trained { val, test },
        Ok(_) => CellOutcome::Failed("empty validation split".into()),
        Err(CoreError::NonFiniteLoss { epoch }) => CellOutcome::Diverged { epoch },
        Err(e) => CellOutcome::Failed(e.to_string()),
    };
    CellResult { config, outcome }
}

/// Trains every cell once with the base seed, picks the lowest validation
/// RMSE (ties go to the earlier cell) and reruns it for `repeats` seeds.
pub fn grid_search(ds: &WindowedDataset, base: &TrainConfig, grid: &Grid) -> Result<GridOutcome> {
    if grid.cells() == 0 {
        return Err(Error::Config("grid has no cells".into()));
    }
    let cells: Vec<CellResult> = grid.expand(base).into_par_iter().map(|c| run_cell(ds, c)).collect();
    let best = cells
        .iter()
        .enumerate()
        .filter_map(|(i, c)| c.val_rmse().map(|r| (i, r)))
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
        .map(|(i, _)| i)
        .ok_or_else(|| match cells.iter().find_map(|c| match c.outcome {
            CellOutcome::Diverged { epoch } => Some(epoch),
            _ => None,
        }) {
            Some(epoch) if cells.iter().all(|c| matches!(c.outcome, CellOutcome::Diverged { .. })) => {
                Error::Core(CoreError::NonFiniteLoss { epoch })
            }
            _ => Error::Config("no grid cell trained successfully".into()),
        })?;
    let repeats = repeat_runs(ds, &cells[best].config)?;
    Ok(GridOutcome { cells, best, repeats })
}

/// Trains `config.repeats` times with seeds `seed, seed+1, ...`.
pub fn repeat_runs(ds: &WindowedDataset, config: &TrainConfig) -> Result<RepeatSummary> {
    let n = config.repeats.max(1) as u64;
    let results: Vec<(u64, RunResult)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let cfg = TrainConfig {
                seed: config.seed.wrapping_add(i),
                grid: None,
                ..config.clone()
            };
            train_and_evaluate(ds, &cfg).map(|r| (cfg.seed, r))
        })
        .collect::<std::result::Result<_, _>>()?;
    let runs = results
        .iter()
        .map(|(seed, r)| SeedMetrics {
            seed: *seed,
            metrics: r.test,
        })
        .collect();
    let first = results.into_iter().next().expect("at least one repeat").1;
    Ok(RepeatSummary {
        config: config.clone(),
        runs,
        checkpoint: first.checkpoint,
        warnings: first.warnings,
    })
}

/// `⌈fraction·D⌉`, at least one and at most `D`.
pub fn keep_count(variables: usize, fraction: f64) -> usize {
    ((fraction * variables as f64).ceil() as usize).clamp(1, variables)
}

#[derive(Debug, Clone)]
pub struct AblationOutcome {
    /// Retained variable indices, most important first.
    pub kept: Vec<usize>,
    pub kept_names: Vec<String>,
    pub summary: RepeatSummary,
}

/// Keeps the top `⌈keep_fraction·D⌉` variables of `report` by global
/// importance and retrains a plain LSTM on them over `base.repeats` seeds.
pub fn ablate(ds: &WindowedDataset, report: &ImportanceReport, keep_fraction: f64, base: &TrainConfig) -> Result<AblationOutcome> {
    if !(keep_fraction > 0.0 && keep_fraction <= 1.0) {
        return Err(Error::Config(format!("keep fraction {keep_fraction} must be in (0, 1]")));
    }
    if report.variable_names != ds.names {
        return Err(CoreError::DimensionMismatch {
            expected: report.variable_names.len(),
            got: ds.variables(),
        }
        .into());
    }
    let k = keep_count(ds.variables(), keep_fraction);
    let kept: Vec<usize> = report.ranking().into_iter().take(k).collect();
    let reduced = ds.select_variables(&kept)?;
    let config = TrainConfig {
        model: ModelKind::PlainLstm,
        grid: None,
        ..base.clone()
    };
    let summary = repeat_runs(&reduced, &config)?;
    Ok(AblationOutcome {
        kept_names: kept.iter().map(|&i| ds.names[i].clone()).collect(),
        kept,
        summary,
    })
}
