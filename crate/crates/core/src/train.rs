//! Training loop, inference helpers and the checkpoint record.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{prepare, Scaler, Split, WindowedDataset};
use crate::decomposition::{DecompositionWeights, DEFAULT_LAMBDA};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::interpretation::{aggregate, build_report, ImportanceReport};
use crate::metrics::{evaluate, Metrics};
use crate::model::{forward, sequence_loss, DelelstmParams, ModelKind};
use crate::optim::{Adam, AdamConfig};
use crate::tensor::Tensor;

/// Hyperparameter grid; every combination is one search cell.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub batch_sizes: Vec<usize>,
    pub learning_rates: Vec<f64>,
    pub hidden_sizes: Vec<usize>,
}

impl Default for Grid {
    fn default() -> Self {
        Self {
            batch_sizes: alloc::vec![32, 64, 128],
            learning_rates: alloc::vec![0.05, 0.01, 0.001],
            hidden_sizes: alloc::vec![32, 64, 128],
        }
    }
}

impl Grid {
    pub fn cells(&self) -> usize {
        self.batch_sizes.len() * self.learning_rates.len() * self.hidden_sizes.len()
    }

    /// One config per cell, batch-major then learning rate then hidden size.
    pub fn expand(&self, base: &TrainConfig) -> Vec<TrainConfig> {
        let mut out = Vec::with_capacity(self.cells());
        for &batch_size in &self.batch_sizes {
            for &learning_rate in &self.learning_rates {
                for &hidden in &self.hidden_sizes {
                    out.push(TrainConfig {
                        batch_size,
                        learning_rate,
                        hidden,
                        grid: None,
                        ..base.clone()
                    });
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub model: ModelKind,
    pub hidden: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub lambda: f64,
    pub seed: u64,
    /// Leading timesteps left out of the loss and the metrics.
    pub warmup: usize,
    pub clip_norm: Option<f64>,
    pub repeats: usize,
    pub window: usize,
    pub stride: Option<usize>,
    pub train_fraction: f64,
    pub val_fraction: f64,
    pub grid: Option<Grid>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            model: ModelKind::Delelstm,
            hidden: 32,
            batch_size: 32,
            learning_rate: 0.01,
            epochs: 50,
            lambda: DEFAULT_LAMBDA,
            seed: 0,
            warmup: 1,
            clip_norm: Some(5.0),
            repeats: 5,
            window: 24,
            stride: None,
            train_fraction: 0.75,
            val_fraction: 0.15,
            grid: None,
        }
    }
}

impl TrainConfig {
    /// Checks the config against `inputs` variables; returns warnings for
    /// settings that are legal but questionable.
    pub fn validate(&self, inputs: usize) -> Result<Vec<String>> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.hidden == 0 {
            return bad("hidden size must be at least 1".into());
        }
        if self.batch_size == 0 {
            return bad("batch size must be at least 1".into());
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return bad(format!("learning rate {} must be positive", self.learning_rate));
        }
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return bad(format!("lambda {} must be non-negative", self.lambda));
        }
        if self.window < 2 || self.warmup >= self.window {
            return bad(format!("window {} must exceed warmup {} and be at least 2", self.window, self.warmup));
        }
        let fractions_ok = self.train_fraction > 0.0
            && self.val_fraction >= 0.0
            && self.train_fraction + self.val_fraction <= 1.0 + 1e-12;
        if !fractions_ok {
            return bad(format!(
                "split fractions train={} val={} must be non-negative and sum to at most 1",
                self.train_fraction, self.val_fraction
            ));
        }
        if let Some(c) = self.clip_norm {
            if !(c > 0.0) {
                return bad(format!("clip norm {c} must be positive"));
            }
        }
        let mut warnings = Vec::new();
        if self.model == ModelKind::Delelstm && self.hidden < 2 * inputs {
            if self.lambda == 0.0 {
                return Err(Error::UnderdeterminedWithoutRidge {
                    rows: self.hidden,
                    unknowns: 2 * inputs,
                });
            }
            warnings.push(format!(
                "hidden size {} is below 2×{inputs} variables; decomposition weights are minimum-norm and harder to interpret",
                self.hidden
            ));
        }
        Ok(warnings)
    }

    pub fn split(&self, samples: usize) -> Split {
        Split::with_fractions(samples, self.train_fraction, self.val_fraction)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_mse: f64,
    pub val_rmse: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct History {
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose parameters were kept (`None`: the initialization).
    pub best_epoch: Option<usize>,
}

/// Everything needed to reload a trained model and apply it to new data.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: TrainConfig,
    pub params: DelelstmParams,
    pub history: History,
    pub scaler: Option<Scaler>,
    pub variable_names: Vec<String>,
    pub target_name: String,
}

#[derive(Debug, Clone)]
pub struct FitOutput {
    pub checkpoint: Checkpoint,
    pub warnings: Vec<String>,
}

/// Trains on standardized `train`, keeping the parameters with the best
/// validation RMSE (original units) when `val` is non-empty, else the last.
pub fn fit(train: &WindowedDataset, val: Option<&WindowedDataset>, config: &TrainConfig) -> Result<FitOutput> {
    let warnings = config.validate(train.variables())?;
    if train.is_empty() {
        return Err(Error::EmptyTable);
    }
    if train.window() != config.window {
        return Err(Error::InvalidConfig(format!(
            "dataset window {} differs from configured window {}",
            train.window(),
            config.window
        )));
    }
    let val = val.filter(|v| !v.is_empty());
    if let Some(v) = val {
        if v.variables() != train.variables() {
            return Err(Error::DimensionMismatch {
                expected: train.variables(),
                got: v.variables(),
            });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut params = DelelstmParams::init(config.model, train.variables(), config.hidden, &mut rng);
    let mut best = params.clone();
    let mut history = History::default();
    let mut best_rmse = f64::INFINITY;
    let mut adam = Adam::new(AdamConfig {
        clip_norm: config.clip_norm,
        ..AdamConfig::new(config.learning_rate)
    });
    let mut order: Vec<usize> = (0..train.len()).collect();

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(config.batch_size) {
            let (loss, grads) = match loss_and_gradients(&params, train, batch, config) {
                // A NaN pivot means the states themselves blew up.
                Err(Error::SolveFailure { pivot }) if !pivot.is_finite() => {
                    return Err(Error::NonFiniteLoss { epoch })
                }
                other => other?,
            };
            if !loss.is_finite() || grads.iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFiniteLoss { epoch });
            }
            total += loss * batch.len() as f64;
            let mut blocks = params.blocks_mut();
            adam.step(&mut blocks, &grads);
            if blocks.iter().any(|b| !b.is_finite()) {
                return Err(Error::NonFiniteLoss { epoch });
            }
        }
        let train_mse = total / train.len() as f64;
        let val_rmse = match val {
            Some(v) => Some(evaluate_dataset(&params, v, config)?.rmse),
            None => None,
        };
        if let Some(r) = val_rmse {
            if !r.is_finite() {
                return Err(Error::NonFiniteLoss { epoch });
            }
        }
        history.epochs.push(EpochRecord {
            epoch,
            train_mse,
            val_rmse,
        });
        let keep = match val_rmse {
            Some(r) => r < best_rmse,
            None => true,
        };
        if keep {
            best_rmse = val_rmse.unwrap_or(best_rmse);
            best = params.clone();
            history.best_epoch = Some(epoch);
        }
    }

    Ok(FitOutput {
        checkpoint: Checkpoint {
            config: config.clone(),
            params: best,
            history,
            scaler: train.scaler.clone(),
            variable_names: train.names.clone(),
            target_name: train.target_name.clone(),
        },
        warnings,
    })
}

/// Loss on the samples `batch` and its gradient per parameter block.
pub fn loss_and_gradients(
    params: &DelelstmParams,
    ds: &WindowedDataset,
    batch: &[usize],
    config: &TrainConfig,
) -> Result<(f64, Vec<Tensor>)> {
    let mut g = Graph::new();
    let bound = params.bind(&mut g);
    let pass = forward(&mut g, &bound, &ds.batch_inputs(batch), config.lambda)?;
    let loss = sequence_loss(&mut g, &pass.predictions, &ds.batch_targets(batch), config.warmup)?;
    let value = g.value(loss).data()[0];
    let grads = g.backward(loss)?;
    Ok((value, bound.vars().into_iter().map(|v| grads.wrt(v)).collect()))
}

/// Model outputs for every sample of a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Predictions {
    /// `[sample][timestep]`, in the dataset's (possibly standardized) units.
    pub values: Vec<Vec<f64>>,
    /// `[sample][timestep]`; empty for the plain LSTM.
    pub weights: Vec<Vec<DecompositionWeights>>,
}

pub fn predict_dataset(params: &DelelstmParams, ds: &WindowedDataset, lambda: f64, batch_size: usize) -> Result<Predictions> {
    if ds.variables() != params.inputs() {
        return Err(Error::DimensionMismatch {
            expected: params.inputs(),
            got: ds.variables(),
        });
    }
    let mut out = Predictions {
        values: Vec::with_capacity(ds.len()),
        weights: Vec::new(),
    };
    let idx: Vec<usize> = (0..ds.len()).collect();
    for batch in idx.chunks(batch_size.max(1)) {
        let mut g = Graph::new();
        let bound = params.bind(&mut g);
        let pass = forward(&mut g, &bound, &ds.batch_inputs(batch), lambda)?;
        out.values.extend(pass.prediction_values(&g));
        out.weights.extend(pass.weights(&g));
    }
    Ok(out)
}

/// Flattened `(prediction, target)` pairs over timesteps `warmup..`, mapped
/// back to original units when the dataset carries a scaler.
pub fn forecast_pairs(preds: &Predictions, ds: &WindowedDataset, warmup: usize) -> (Vec<f64>, Vec<f64>) {
    let unscale = |v: f64| ds.scaler.as_ref().map_or(v, |s| s.inverse_target(v));
    let mut p = Vec::new();
    let mut y = Vec::new();
    for (n, row) in preds.values.iter().enumerate() {
        for (t, &v) in row.iter().enumerate().skip(warmup) {
            p.push(unscale(v));
            y.push(unscale(ds.target(n, t)));
        }
    }
    (p, y)
}

/// RMSE/MAE/MAPE over all non-warmup timesteps, in original units.
pub fn evaluate_dataset(params: &DelelstmParams, ds: &WindowedDataset, config: &TrainConfig) -> Result<Metrics> {
    let preds = predict_dataset(params, ds, config.lambda, config.batch_size.max(64))?;
    let (p, y) = forecast_pairs(&preds, ds, config.warmup);
    evaluate(&p, &y)
}

/// Importance report averaged over every sample of `ds`.
pub fn explain_dataset(params: &DelelstmParams, ds: &WindowedDataset, lambda: f64) -> Result<ImportanceReport> {
    if params.kind() != ModelKind::Delelstm {
        return Err(Error::InvalidConfig("only a decomposition model can be explained".into()));
    }
    let preds = predict_dataset(params, ds, lambda, 128)?;
    let reports = preds
        .weights
        .iter()
        .map(|w| build_report(w, &ds.names))
        .collect::<Result<Vec<_>>>()?;
    aggregate(&reports)
}

/// Outcome of [`train_and_evaluate`].
#[derive(Debug, Clone)]
pub struct RunResult {
    pub checkpoint: Checkpoint,
    pub val: Option<Metrics>,
    pub test: Metrics,
    pub warnings: Vec<String>,
}

/// Split, standardize on train, fit, and score the test part.
pub fn train_and_evaluate(ds: &WindowedDataset, config: &TrainConfig) -> Result<RunResult> {
    let data = prepare(ds, &config.split(ds.len()))?;
    let fitted = fit(&data.train, Some(&data.val), config)?;
    let params = &fitted.checkpoint.params;
    let val = if data.val.is_empty() {
        None
    } else {
        Some(evaluate_dataset(params, &data.val, config)?)
    };
    if data.test.is_empty() {
        return Err(Error::InvalidConfig(format!("{} samples leave an empty test split", ds.len())));
    }
    let test = evaluate_dataset(params, &data.test, config)?;
    Ok(RunResult {
        checkpoint: fitted.checkpoint,
        val,
        test,
        warnings: fitted.warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth_instant;

    fn small() -> TrainConfig {
        TrainConfig {
            hidden: 8,
            batch_size: 8,
            epochs: 2,
            window: 6,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn zero_epochs_returns_initialization() {
        let ds = synth_instant(1, 16, 2, 6, 0).unwrap();
        let cfg = TrainConfig { epochs: 0, ..small() };
        let out = fit(&ds, None, &cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let init = DelelstmParams::init(cfg.model, 2, cfg.hidden, &mut rng);
        assert_eq!(out.checkpoint.params, init);
        assert!(out.checkpoint.history.epochs.is_empty());
    }

    #[test]
    fn validation_errors() {
        assert!(TrainConfig { hidden: 0, ..small() }.validate(2).is_err());
        assert!(TrainConfig { warmup: 6, ..small() }.validate(2).is_err());
        assert!(TrainConfig { train_fraction: 0.9, val_fraction: 0.2, ..small() }.validate(2).is_err());
        let w = TrainConfig { hidden: 3, ..small() }.validate(2).unwrap();
        assert_eq!(w.len(), 1);
        assert!(matches!(
            TrainConfig { hidden: 3, lambda: 0.0, ..small() }.validate(2),
            Err(Error::UnderdeterminedWithoutRidge { .. })
        ));
    }

    #[test]
    fn divergent_learning_rate_is_reported() {
        let ds = synth_instant(1, 16, 2, 6, 0).unwrap();
        let cfg = TrainConfig {
            learning_rate: f64::MAX,
            clip_norm: None,
            epochs: 3,
            ..small()
        };
        assert!(matches!(fit(&ds, None, &cfg), Err(Error::NonFiniteLoss { .. })));
    }

    #[test]
    fn grid_expansion_order() {
        let grid = Grid {
            batch_sizes: alloc::vec![1, 2],
            learning_rates: alloc::vec![0.1],
            hidden_sizes: alloc::vec![3, 4],
        };
        let cells = grid.expand(&small());
        let shape: Vec<(usize, usize)> = cells.iter().map(|c| (c.batch_size, c.hidden)).collect();
        assert_eq!(shape, alloc::vec![(1, 3), (1, 4), (2, 3), (2, 4)]);
    }
}
