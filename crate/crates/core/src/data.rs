//! Tables, windowed datasets, scaling, splits and synthetic generators.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// A parsed numeric table. Rows are observations in time order.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTable {
    pub column_names: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    /// Index of the target among `column_names`.
    pub target: usize,
    /// Raw timestamp strings, when the source had a timestamp column.
    pub timestamps: Option<Vec<String>>,
    /// Rows discarded during parsing.
    pub dropped_rows: usize,
}

impl RawTable {
    pub fn new(column_names: Vec<String>, rows: Vec<Vec<f64>>, target: &str) -> Result<Self> {
        let target = column_names
            .iter()
            .position(|c| c == target)
            .ok_or_else(|| Error::MissingTarget(target.into()))?;
        if rows.is_empty() {
            return Err(Error::EmptyTable);
        }
        if let Some(bad) = rows.iter().find(|r| r.len() != column_names.len()) {
            return Err(Error::DimensionMismatch {
                expected: column_names.len(),
                got: bad.len(),
            });
        }
        Ok(Self {
            column_names,
            rows,
            target,
            timestamps: None,
            dropped_rows: 0,
        })
    }

    pub fn columns(&self) -> usize {
        self.column_names.len()
    }

    pub fn target_name(&self) -> &str {
        &self.column_names[self.target]
    }
}

/// Per-variable z-score statistics plus those of the target.
#[derive(Debug, Clone, PartialEq)]
pub struct Scaler {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub target_mean: f64,
    pub target_std: f64,
}

impl Scaler {
    pub fn transform_target(&self, y: f64) -> f64 {
        (y - self.target_mean) / self.target_std
    }

    pub fn inverse_target(&self, z: f64) -> f64 {
        z * self.target_std + self.target_mean
    }
}

/// `N` windows of `D` variables over `T` steps with next-step targets:
/// `target(n, t)` is the target series one step after `input(n, ·, t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowedDataset {
    /// Flattened `[N][D][T]`.
    x: Vec<f64>,
    /// Flattened `[N][T]`.
    y: Vec<f64>,
    samples: usize,
    variables: usize,
    window: usize,
    pub names: Vec<String>,
    pub target_name: String,
    pub stride: usize,
    /// Set once the dataset has been standardized.
    pub scaler: Option<Scaler>,
}

impl WindowedDataset {
    /// Builds a dataset from `[N][D][T]` inputs and `[N][T]` targets.
    pub fn from_arrays(
        x: Vec<f64>,
        y: Vec<f64>,
        samples: usize,
        variables: usize,
        window: usize,
        names: Vec<String>,
        target_name: String,
    ) -> Result<Self> {
        if variables == 0 || window < 2 {
            return Err(Error::InvalidConfig(format!(
                "need at least one variable and a window of 2, got D={variables} T={window}"
            )));
        }
        if x.len() != samples * variables * window || y.len() != samples * window || names.len() != variables {
            return Err(Error::DimensionMismatch {
                expected: samples * variables * window,
                got: x.len(),
            });
        }
        Ok(Self {
            x,
            y,
            samples,
            variables,
            window,
            names,
            target_name,
            stride: window,
            scaler: None,
        })
    }

    pub fn len(&self) -> usize {
        self.samples
    }

    pub fn is_empty(&self) -> bool {
        self.samples == 0
    }

    pub fn variables(&self) -> usize {
        self.variables
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn input(&self, n: usize, d: usize, t: usize) -> f64 {
        self.x[(n * self.variables + d) * self.window + t]
    }

    pub fn target(&self, n: usize, t: usize) -> f64 {
        self.y[n * self.window + t]
    }

    pub fn input_series(&self, n: usize, d: usize) -> &[f64] {
        let start = (n * self.variables + d) * self.window;
        &self.x[start..start + self.window]
    }

    pub fn target_series(&self, n: usize) -> &[f64] {
        &self.y[n * self.window..(n + 1) * self.window]
    }

    pub fn set_input(&mut self, n: usize, d: usize, t: usize, value: f64) {
        self.x[(n * self.variables + d) * self.window + t] = value;
    }

    /// One (B, D) tensor per timestep for the samples in `idx`.
    pub fn batch_inputs(&self, idx: &[usize]) -> Vec<Tensor> {
        (0..self.window)
            .map(|t| {
                let mut data = Vec::with_capacity(idx.len() * self.variables);
                for &n in idx {
                    data.extend((0..self.variables).map(|d| self.input(n, d, t)));
                }
                Tensor::from_parts(vec![idx.len(), self.variables], data)
            })
            .collect()
    }

    /// (B, T) targets for the samples in `idx`.
    pub fn batch_targets(&self, idx: &[usize]) -> Tensor {
        let mut data = Vec::with_capacity(idx.len() * self.window);
        for &n in idx {
            data.extend_from_slice(self.target_series(n));
        }
        Tensor::from_parts(vec![idx.len(), self.window], data)
    }

    pub fn subset(&self, idx: &[usize]) -> Self {
        let mut x = Vec::with_capacity(idx.len() * self.variables * self.window);
        let mut y = Vec::with_capacity(idx.len() * self.window);
        for &n in idx {
            for d in 0..self.variables {
                x.extend_from_slice(self.input_series(n, d));
            }
            y.extend_from_slice(self.target_series(n));
        }
        Self {
            x,
            y,
            samples: idx.len(),
            ..self.clone_meta()
        }
    }

    pub fn range(&self, r: Range<usize>) -> Self {
        let idx: Vec<usize> = r.collect();
        self.subset(&idx)
    }

    fn clone_meta(&self) -> Self {
        Self {
            x: Vec::new(),
            y: Vec::new(),
            samples: 0,
            variables: self.variables,
            window: self.window,
            names: self.names.clone(),
            target_name: self.target_name.clone(),
            stride: self.stride,
            scaler: self.scaler.clone(),
        }
    }

    /// Keeps only the listed variables, in the given order.
    pub fn select_variables(&self, keep: &[usize]) -> Result<Self> {
        if keep.is_empty() {
            return Err(Error::InvalidConfig("no variables selected".into()));
        }
        if let Some(&bad) = keep.iter().find(|&&d| d >= self.variables) {
            return Err(Error::DimensionMismatch {
                expected: self.variables,
                got: bad + 1,
            });
        }
        let mut x = Vec::with_capacity(self.samples * keep.len() * self.window);
        for n in 0..self.samples {
            for &d in keep {
                x.extend_from_slice(self.input_series(n, d));
            }
        }
        let scaler = self.scaler.as_ref().map(|s| Scaler {
            mean: keep.iter().map(|&d| s.mean[d]).collect(),
            std: keep.iter().map(|&d| s.std[d]).collect(),
            ..s.clone()
        });
        Ok(Self {
            x,
            y: self.y.clone(),
            samples: self.samples,
            variables: keep.len(),
            window: self.window,
            names: keep.iter().map(|&d| self.names[d].clone()).collect(),
            target_name: self.target_name.clone(),
            stride: self.stride,
            scaler,
        })
    }

    /// Per-variable statistics over every sample of `self` (population std).
    pub fn fit_scaler(&self) -> Result<Scaler> {
        if self.samples == 0 {
            return Err(Error::EmptyTable);
        }
        let count = (self.samples * self.window) as f64;
        let stats = |values: &mut dyn Iterator<Item = f64>| {
            let (mut s, mut s2) = (0.0, 0.0);
            let vals: Vec<f64> = values.collect();
            for v in &vals {
                s += v;
            }
            let mean = s / count;
            for v in &vals {
                s2 += (v - mean) * (v - mean);
            }
            (mean, crate::math::sqrt(s2 / count))
        };
        let mut mean = Vec::with_capacity(self.variables);
        let mut std = Vec::with_capacity(self.variables);
        for d in 0..self.variables {
            let (m, s) = stats(&mut (0..self.samples).flat_map(|n| self.input_series(n, d).iter().copied()));
            if !(s > 1e-12) {
                return Err(Error::ZeroVariance(self.names[d].clone()));
            }
            mean.push(m);
            std.push(s);
        }
        let (target_mean, target_std) = stats(&mut self.y.iter().copied());
        if !(target_std > 1e-12) {
            return Err(Error::ZeroVariance(self.target_name.clone()));
        }
        Ok(Scaler {
            mean,
            std,
            target_mean,
            target_std,
        })
    }

    /// Z-scores inputs and targets with `scaler`, which is stored on the result.
    pub fn standardize(&self, scaler: &Scaler) -> Result<Self> {
        if scaler.mean.len() != self.variables {
            return Err(Error::DimensionMismatch {
                expected: self.variables,
                got: scaler.mean.len(),
            });
        }
        let mut out = self.clone();
        for (i, v) in out.x.iter_mut().enumerate() {
            let d = (i / self.window) % self.variables;
            *v = (*v - scaler.mean[d]) / scaler.std[d];
        }
        out.y.iter_mut().for_each(|v| *v = scaler.transform_target(*v));
        out.scaler = Some(scaler.clone());
        Ok(out)
    }

    /// Undoes [`WindowedDataset::standardize`].
    pub fn inverse(&self, scaler: &Scaler) -> Result<Self> {
        if scaler.mean.len() != self.variables {
            return Err(Error::DimensionMismatch {
                expected: self.variables,
                got: scaler.mean.len(),
            });
        }
        let mut out = self.clone();
        for (i, v) in out.x.iter_mut().enumerate() {
            let d = (i / self.window) % self.variables;
            *v = *v * scaler.std[d] + scaler.mean[d];
        }
        out.y.iter_mut().for_each(|v| *v = scaler.inverse_target(*v));
        out.scaler = None;
        Ok(out)
    }
}

/// Cuts a table into windows of `window` inputs starting every `stride` rows.
/// Window `n` starting at row `s` has inputs from rows `s..s+window` (all
/// columns, the target included) and targets from rows `s+1..=s+window`.
pub fn make_windows(table: &RawTable, window: usize, stride: usize) -> Result<WindowedDataset> {
    if window < 2 || stride == 0 {
        return Err(Error::InvalidConfig(format!("window {window} and stride {stride} must be >= 2 and >= 1")));
    }
    let rows = table.rows.len();
    if rows < window + 1 {
        return Err(Error::TooShort {
            rows,
            window,
            needed: window + 1,
        });
    }
    let d = table.columns();
    let starts: Vec<usize> = (0..).map(|k| k * stride).take_while(|s| s + window < rows).collect();
    let mut x = Vec::with_capacity(starts.len() * d * window);
    let mut y = Vec::with_capacity(starts.len() * window);
    for &s in &starts {
        for col in 0..d {
            x.extend((0..window).map(|t| table.rows[s + t][col]));
        }
        y.extend((0..window).map(|t| table.rows[s + t + 1][table.target]));
    }
    let mut ds = WindowedDataset::from_arrays(
        x,
        y,
        starts.len(),
        d,
        window,
        table.column_names.clone(),
        table.target_name().into(),
    )?;
    ds.stride = stride;
    Ok(ds)
}

/// Chronological train/validation/test partition of sample indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Range<usize>,
    pub val: Range<usize>,
    pub test: Range<usize>,
}

impl Split {
    /// `⌊0.75 N⌋` / `⌊0.15 N⌋` / remainder.
    pub fn standard(n: usize) -> Self {
        Self::with_fractions(n, 0.75, 0.15)
    }

    pub fn with_fractions(n: usize, train: f64, val: f64) -> Self {
        let n_train = crate::math::floor(train * n as f64) as usize;
        let n_val = (crate::math::floor(val * n as f64) as usize).min(n - n_train);
        Self {
            train: 0..n_train,
            val: n_train..n_train + n_val,
            test: n_train + n_val..n,
        }
    }
}

/// A standardized train/val/test triple sharing a scaler fitted on train.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub train: WindowedDataset,
    pub val: WindowedDataset,
    pub test: WindowedDataset,
    pub scaler: Scaler,
}

/// Splits `ds` chronologically and standardizes every part with statistics
/// from the training windows only.
pub fn prepare(ds: &WindowedDataset, split: &Split) -> Result<PreparedData> {
    let train = ds.range(split.train.clone());
    let scaler = train.fit_scaler()?;
    Ok(PreparedData {
        train: train.standardize(&scaler)?,
        val: ds.range(split.val.clone()).standardize(&scaler)?,
        test: ds.range(split.test.clone()).standardize(&scaler)?,
        scaler,
    })
}

fn synth_names(d: usize) -> Vec<String> {
    (0..d).map(|i| format!("x{i}")).collect()
}

fn synth(
    seed: u64,
    samples: usize,
    variables: usize,
    window: usize,
    driver: usize,
    signal: impl Fn(&[f64], usize) -> f64,
) -> Result<WindowedDataset> {
    if driver >= variables {
        return Err(Error::InvalidConfig(format!("driver {driver} out of range for {variables} variables")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = Vec::with_capacity(samples * variables * window);
    let mut y = Vec::with_capacity(samples * window);
    for n in 0..samples {
        for _ in 0..variables * window {
            x.push(StandardNormal.sample(&mut rng));
        }
        let base = (n * variables + driver) * window;
        let series = &x[base..base + window];
        for t in 0..window {
            let noise: f64 = StandardNormal.sample(&mut rng);
            y.push(0.9 * signal(series, t) + 0.1 * noise);
        }
    }
    WindowedDataset::from_arrays(x, y, samples, variables, window, synth_names(variables), "y".into())
}

/// White-noise inputs; the target at step `t` is `0.9·x_t[driver] + 0.1·ε`.
pub fn synth_instant(seed: u64, samples: usize, variables: usize, window: usize, driver: usize) -> Result<WindowedDataset> {
    synth(seed, samples, variables, window, driver, |s, t| s[t])
}

/// White-noise inputs; the target at step `t` is `0.9` times the running
/// mean of `x[driver]` over the window so far, plus `0.1·ε`.
pub fn synth_longmem(seed: u64, samples: usize, variables: usize, window: usize, driver: usize) -> Result<WindowedDataset> {
    synth(seed, samples, variables, window, driver, |s, t| {
        s[..=t].iter().sum::<f64>() / (t + 1) as f64
    })
}
