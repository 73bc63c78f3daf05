//! Synthetic datasets flattened into CSV tables.

use delelstm_core::data::{synth_instant, synth_longmem, WindowedDataset};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SynthKind {
    Instant,
    LongMemory,
}

impl SynthKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "instant" => Some(SynthKind::Instant),
            "longmem" => Some(SynthKind::LongMemory),
            _ => None,
        }
    }

    pub fn generate(self, seed: u64, samples: usize, variables: usize, window: usize, driver: usize) -> Result<WindowedDataset> {
        let ds = match self {
            SynthKind::Instant => synth_instant(seed, samples, variables, window, driver),
            SynthKind::LongMemory => synth_longmem(seed, samples, variables, window, driver),
        };
        ds.map_err(|e| Error::Config(e.to_string()))
    }
}

/// Lays the windows of `ds` end to end as `N·T + 1` rows with columns
/// `x0..x{D-1}, y`. Row `r = nT + t` holds input `t` of window `n`, and its
/// `y` is the target paired with the preceding input, so windowing the table
/// with length and stride `T` recovers every window's inputs and targets.
/// The `y` column then also appears among the inputs as the lagged target.
pub fn to_table(ds: &WindowedDataset) -> (Vec<String>, Vec<Vec<f64>>) {
    let (n, d, t) = (ds.len(), ds.variables(), ds.window());
    let mut names = ds.names.clone();
    names.push(ds.target_name.clone());
    let rows = (0..=n * t)
        .map(|r| {
            let mut row: Vec<f64> = if r < n * t {
                (0..d).map(|v| ds.input(r / t, v, r % t)).collect()
            } else {
                vec![0.0; d]
            };
            row.push(if r == 0 { 0.0 } else { ds.target((r - 1) / t, (r - 1) % t) });
            row
        })
        .collect();
    (names, rows)
}
