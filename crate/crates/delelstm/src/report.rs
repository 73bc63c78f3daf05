//! Importance and metric tables.

use std::fs;
use std::path::{Path, PathBuf};

use delelstm_core::interpretation::ImportanceReport;
use delelstm_core::metrics::{mean_std, Metrics};

use crate::error::{Error, Result};

pub const INSTANTANEOUS: &str = "instantaneous.csv";
pub const LONG_TERM: &str = "long_term.csv";
pub const TEMPORAL_WEIGHT: &str = "temporal_weight.csv";
pub const SUMMARY: &str = "summary.csv";

fn cell(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

/// Header `time,<var1>,...,<varD>`, then one row per timestep (1-based).
/// Undefined entries are left empty.
pub fn measure_csv(names: &[String], rows: &[Vec<Option<f64>>]) -> String {
    let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
    let mut header = vec!["time".to_owned()];
    header.extend(names.iter().cloned());
    w.write_record(&header).expect("in-memory write");
    for (t, row) in rows.iter().enumerate() {
        let mut rec = vec![(t + 1).to_string()];
        rec.extend(row.iter().map(|v| cell(*v)));
        w.write_record(&rec).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 input")
}

/// One line per variable, `name,global_importance,rank`, in ranking order.
pub fn summary_csv(report: &ImportanceReport) -> String {
    let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
    let ranks = report.ranks();
    for v in report.ranking() {
        w.write_record([
            report.variable_names[v].clone(),
            report.global[v].to_string(),
            ranks[v].to_string(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 input")
}

fn write(path: PathBuf, text: &str) -> Result<PathBuf> {
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

/// Writes the three per-timestep measures and the summary into `dir`.
pub fn write_importance(dir: &Path, report: &ImportanceReport) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let names = &report.variable_names;
    Ok(vec![
        write(dir.join(INSTANTANEOUS), &measure_csv(names, &report.instantaneous))?,
        write(dir.join(LONG_TERM), &measure_csv(names, &report.long_term))?,
        write(dir.join(TEMPORAL_WEIGHT), &measure_csv(names, &report.temporal_weight))?,
        write(dir.join(SUMMARY), &summary_csv(report))?,
    ])
}

/// Test metrics of one seed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeedMetrics {
    pub seed: u64,
    pub metrics: Metrics,
}

/// `seed,rmse,mae,mape` rows followed by `mean` and `std` rows.
pub fn metrics_csv(runs: &[SeedMetrics]) -> String {
    let mut s = String::from("seed,rmse,mae,mape\n");
    for r in runs {
        s.push_str(&format!("{},{},{},{}\n", r.seed, r.metrics.rmse, r.metrics.mae, r.metrics.mape));
    }
    let col = |f: fn(&Metrics) -> f64| mean_std(&runs.iter().map(|r| f(&r.metrics)).collect::<Vec<_>>());
    let (rmse, mae, mape) = (col(|m| m.rmse), col(|m| m.mae), col(|m| m.mape));
    s.push_str(&format!("mean,{},{},{}\n", rmse.0, mae.0, mape.0));
    s.push_str(&format!("std,{},{},{}\n", rmse.1, mae.1, mape.1));
    s
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}
