//! Flat `key = value` configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Lists are
//! comma-separated. Later assignments win, so command-line overrides are
//! applied after the file.

use std::path::{Path, PathBuf};

use delelstm_core::model::ModelKind;
use delelstm_core::train::{Grid, TrainConfig};

use crate::error::{Error, Result};
use crate::io::CsvSchema;

/// Everything a command needs besides its own flags.
#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub train: TrainConfig,
    pub data: Option<PathBuf>,
    pub target: Option<String>,
    pub timestamp: Option<String>,
    pub drop_cols: Vec<String>,
    pub categorical: Vec<String>,
    pub keep_fraction: f64,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            data: None,
            target: None,
            timestamp: None,
            drop_cols: Vec::new(),
            categorical: Vec::new(),
            keep_fraction: 0.5,
        }
    }
}

/// Splits a config document into `(key, value, line)` triples.
pub fn parse_pairs(text: &str) -> Result<Vec<(String, String, usize)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key = value, found '{line}'", i + 1)))?;
        out.push((k.trim().to_owned(), v.trim().to_owned(), i + 1));
    }
    Ok(out)
}

fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse '{value}'")))
}

fn optional<T: std::str::FromStr>(key: &str, value: &str) -> Result<Option<T>> {
    match value {
        "" | "none" => Ok(None),
        v => num(key, v).map(Some),
    }
}

fn list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    let items: Vec<T> = value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| num(key, s))
        .collect::<Result<_>>()?;
    if items.is_empty() {
        return Err(Error::Config(format!("{key}: empty list")));
    }
    Ok(items)
}

fn names(value: &str) -> Vec<String> {
    value.split(',').map(str::trim).filter(|s| !s.is_empty()).map(str::to_owned).collect()
}

/// Sets one training field. Returns `false` for unknown keys.
pub fn apply_train(cfg: &mut TrainConfig, key: &str, value: &str) -> Result<bool> {
    match key {
        "model" => {
            cfg.model = ModelKind::parse(value)
                .ok_or_else(|| Error::Config(format!("model: expected 'delelstm' or 'lstm', found '{value}'")))?
        }
        "hidden" => cfg.hidden = num(key, value)?,
        "batch_size" => cfg.batch_size = num(key, value)?,
        "learning_rate" => cfg.learning_rate = num(key, value)?,
        "epochs" => cfg.epochs = num(key, value)?,
        "lambda" => cfg.lambda = num(key, value)?,
        "seed" => cfg.seed = num(key, value)?,
        "warmup" => cfg.warmup = num(key, value)?,
        "clip_norm" => cfg.clip_norm = optional(key, value)?,
        "repeats" => cfg.repeats = num(key, value)?,
        "window" => cfg.window = num(key, value)?,
        "stride" => cfg.stride = optional(key, value)?,
        "train_fraction" => cfg.train_fraction = num(key, value)?,
        "val_fraction" => cfg.val_fraction = num(key, value)?,
        "grid" => match value {
            "none" | "" => cfg.grid = None,
            "default" => cfg.grid = Some(Grid::default()),
            _ => return Err(Error::Config(format!("grid: expected 'default' or 'none', found '{value}'"))),
        },
        "grid.batch_sizes" => cfg.grid.get_or_insert_with(Grid::default).batch_sizes = list(key, value)?,
        "grid.learning_rates" => cfg.grid.get_or_insert_with(Grid::default).learning_rates = list(key, value)?,
        "grid.hidden_sizes" => cfg.grid.get_or_insert_with(Grid::default).hidden_sizes = list(key, value)?,
        _ => return Ok(false),
    }
    Ok(true)
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

/// The training config as `(key, value)` pairs accepted by [`apply_train`].
pub fn train_pairs(cfg: &TrainConfig) -> Vec<(String, String)> {
    let opt = |v: Option<String>| v.unwrap_or_else(|| "none".into());
    let mut out = vec![
        ("model", cfg.model.as_str().to_owned()),
        ("hidden", cfg.hidden.to_string()),
        ("batch_size", cfg.batch_size.to_string()),
        ("learning_rate", cfg.learning_rate.to_string()),
        ("epochs", cfg.epochs.to_string()),
        ("lambda", cfg.lambda.to_string()),
        ("seed", cfg.seed.to_string()),
        ("warmup", cfg.warmup.to_string()),
        ("clip_norm", opt(cfg.clip_norm.map(|c| c.to_string()))),
        ("repeats", cfg.repeats.to_string()),
        ("window", cfg.window.to_string()),
        ("stride", opt(cfg.stride.map(|s| s.to_string()))),
        ("train_fraction", cfg.train_fraction.to_string()),
        ("val_fraction", cfg.val_fraction.to_string()),
    ];
    match &cfg.grid {
        None => out.push(("grid", "none".into())),
        Some(g) => {
            out.push(("grid.batch_sizes", join(&g.batch_sizes)));
            out.push(("grid.learning_rates", join(&g.learning_rates)));
            out.push(("grid.hidden_sizes", join(&g.hidden_sizes)));
        }
    }
    out.into_iter().map(|(k, v)| (k.to_owned(), v)).collect()
}

impl Settings {
    pub fn apply(&mut self, key: &str, value: &str) -> Result<()> {
        if apply_train(&mut self.train, key, value)? {
            return Ok(());
        }
        match key {
            "data" => self.data = Some(PathBuf::from(value)),
            "target" => self.target = Some(value.to_owned()),
            "timestamp" => self.timestamp = (!value.is_empty()).then(|| value.to_owned()),
            "drop_cols" => self.drop_cols = names(value),
            "categorical" => self.categorical = names(value),
            "keep_fraction" => self.keep_fraction = num(key, value)?,
            _ => return Err(Error::Config(format!("unknown key '{key}'"))),
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut s = Self::default();
        for (k, v, line) in parse_pairs(text)? {
            s.apply(&k, &v)
                .map_err(|e| Error::Config(format!("line {line}: {e}")))?;
        }
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_text(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Schema for [`crate::io::load_csv`]; needs a target.
    pub fn schema(&self) -> Result<CsvSchema> {
        let target = self
            .target
            .clone()
            .ok_or_else(|| Error::Config("no target column given (use --target or 'target =')".into()))?;
        Ok(CsvSchema {
            target,
            timestamp: self.timestamp.clone(),
            drop_cols: self.drop_cols.clone(),
            categorical: self.categorical.clone(),
        })
    }

    /// Window stride, defaulting to non-overlapping windows.
    pub fn stride(&self) -> usize {
        self.train.stride.unwrap_or(self.train.window)
    }
}
