//! Importance measures derived from decomposition weights.
//!
//! Raw weights are made non-negative and L1-normalized jointly over the 2D
//! entries of each timestep. From the normalized pair `(α̃, β̃)` of each
//! variable:
//!
//! * instantaneous importance `In = β̃ / (α̃ + β̃)`, long-term effect `1 − In`;
//! * temporal weight `√(α̃² + β̃²)`;
//! * global importance `Gl`, the temporal weight averaged over timesteps.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::decomposition::DecompositionWeights;
use crate::error::{Error, Result};

/// L1 sums below this are treated as an all-zero decomposition.
pub const DEGENERATE_EPS: f64 = 1e-12;

/// Normalized weights indexed `[timestep][variable]`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedWeights {
    pub alpha: Vec<Vec<f64>>,
    pub beta: Vec<Vec<f64>>,
}

impl NormalizedWeights {
    pub fn timesteps(&self) -> usize {
        self.alpha.len()
    }

    pub fn variables(&self) -> usize {
        self.alpha.first().map_or(0, Vec::len)
    }
}

/// Normalizes one timestep, or `None` when the weights carry no mass.
pub fn normalize_step(w: &DecompositionWeights) -> Option<(Vec<f64>, Vec<f64>)> {
    let total: f64 = w.alpha.iter().chain(&w.beta).map(|v| v.abs()).sum();
    if !(total >= DEGENERATE_EPS) {
        return None;
    }
    let scale = |v: &[f64]| v.iter().map(|x| x.abs() / total).collect();
    Some((scale(&w.alpha), scale(&w.beta)))
}

pub fn normalize_weights(raw: &[DecompositionWeights]) -> Result<NormalizedWeights> {
    let d = raw.first().ok_or(Error::EmptySequence)?.variables();
    let mut out = NormalizedWeights {
        alpha: Vec::with_capacity(raw.len()),
        beta: Vec::with_capacity(raw.len()),
    };
    for (t, w) in raw.iter().enumerate() {
        if w.alpha.len() != d || w.beta.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: w.alpha.len().max(w.beta.len()),
            });
        }
        let (a, b) = normalize_step(w).ok_or(Error::DegenerateWeights { timestep: t })?;
        out.alpha.push(a);
        out.beta.push(b);
    }
    Ok(out)
}

/// `b / (a + b)` for a normalized pair.
pub fn instantaneous_importance(alpha: f64, beta: f64) -> Result<f64> {
    if !(alpha >= 0.0 && beta >= 0.0 && alpha + beta > DEGENERATE_EPS) {
        return Err(Error::DegeneratePair { alpha, beta });
    }
    Ok(beta / (alpha + beta))
}

pub fn temporal_weight(alpha: f64, beta: f64) -> f64 {
    crate::math::sqrt(alpha * alpha + beta * beta)
}

/// Per variable, the mean over timesteps of `√(α̃² + β̃²)`.
pub fn global_importance(norm: &NormalizedWeights) -> Result<Vec<f64>> {
    let t = norm.timesteps();
    if t == 0 {
        return Err(Error::EmptySequence);
    }
    let d = norm.variables();
    let mut gl = vec![0.0; d];
    for (a, b) in norm.alpha.iter().zip(&norm.beta) {
        if a.len() != d || b.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: a.len() });
        }
        for k in 0..d {
            gl[k] += temporal_weight(a[k], b[k]);
        }
    }
    gl.iter_mut().for_each(|g| *g /= t as f64);
    Ok(gl)
}

/// All measures for one sequence (or, after [`aggregate`], a dataset).
/// Matrices are indexed `[timestep][variable]`; `None` marks a timestep or
/// pair whose weights carried no mass.
#[derive(Debug, Clone, PartialEq)]
pub struct ImportanceReport {
    pub variable_names: Vec<String>,
    pub instantaneous: Vec<Vec<Option<f64>>>,
    pub long_term: Vec<Vec<Option<f64>>>,
    pub temporal_weight: Vec<Vec<Option<f64>>>,
    pub global: Vec<f64>,
    /// Timesteps left out of `global` because their weights were all zero.
    pub degenerate_steps: usize,
}

pub fn build_report(raw: &[DecompositionWeights], variable_names: &[String]) -> Result<ImportanceReport> {
    let d = variable_names.len();
    if raw.is_empty() {
        return Err(Error::EmptySequence);
    }
    let mut report = ImportanceReport {
        variable_names: variable_names.to_vec(),
        instantaneous: Vec::with_capacity(raw.len()),
        long_term: Vec::with_capacity(raw.len()),
        temporal_weight: Vec::with_capacity(raw.len()),
        global: vec![0.0; d],
        degenerate_steps: 0,
    };
    let mut kept = NormalizedWeights {
        alpha: Vec::new(),
        beta: Vec::new(),
    };
    for w in raw {
        if w.alpha.len() != d || w.beta.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: w.alpha.len(),
            });
        }
        match normalize_step(w) {
            Some((a, b)) => {
                let inst: Vec<Option<f64>> = a
                    .iter()
                    .zip(&b)
                    .map(|(&x, &y)| instantaneous_importance(x, y).ok())
                    .collect();
                report.long_term.push(inst.iter().map(|v| v.map(|i| 1.0 - i)).collect());
                report.instantaneous.push(inst);
                report
                    .temporal_weight
                    .push(a.iter().zip(&b).map(|(&x, &y)| Some(temporal_weight(x, y))).collect());
                kept.alpha.push(a);
                kept.beta.push(b);
            }
            None => {
                report.degenerate_steps += 1;
                report.instantaneous.push(vec![None; d]);
                report.long_term.push(vec![None; d]);
                report.temporal_weight.push(vec![None; d]);
            }
        }
    }
    if kept.timesteps() == 0 {
        return Err(Error::DegenerateWeights { timestep: 0 });
    }
    report.global = global_importance(&kept)?;
    Ok(report)
}

fn mean_matrix(reports: &[ImportanceReport], pick: impl Fn(&ImportanceReport) -> &Vec<Vec<Option<f64>>>) -> Vec<Vec<Option<f64>>> {
    let base = pick(&reports[0]);
    (0..base.len())
        .map(|t| {
            (0..base[t].len())
                .map(|k| {
                    let (sum, n) = reports
                        .iter()
                        .filter_map(|r| pick(r).get(t).and_then(|row| row[k]))
                        .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
                    (n > 0).then(|| sum / n as f64)
                })
                .collect()
        })
        .collect()
}

/// Averages per-sequence reports of identical layout: every matrix entry is
/// the mean of its defined values, `global` the mean of per-sequence `Gl`.
pub fn aggregate(reports: &[ImportanceReport]) -> Result<ImportanceReport> {
    let first = reports.first().ok_or(Error::EmptySequence)?;
    let d = first.variable_names.len();
    for r in reports {
        if r.global.len() != d || r.instantaneous.len() != first.instantaneous.len() {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: r.global.len(),
            });
        }
    }
    let mut global = vec![0.0; d];
    for r in reports {
        for (g, v) in global.iter_mut().zip(&r.global) {
            *g += v;
        }
    }
    global.iter_mut().for_each(|g| *g /= reports.len() as f64);
    Ok(ImportanceReport {
        variable_names: first.variable_names.clone(),
        instantaneous: mean_matrix(reports, |r| &r.instantaneous),
        long_term: mean_matrix(reports, |r| &r.long_term),
        temporal_weight: mean_matrix(reports, |r| &r.temporal_weight),
        global,
        degenerate_steps: reports.iter().map(|r| r.degenerate_steps).sum(),
    })
}

impl ImportanceReport {
    /// Variable indices by descending global importance; ties keep the
    /// original order.
    pub fn ranking(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.global.len()).collect();
        idx.sort_by(|&a, &b| self.global[b].total_cmp(&self.global[a]).then(a.cmp(&b)));
        idx
    }

    /// 1-based rank of every variable.
    pub fn ranks(&self) -> Vec<usize> {
        let mut ranks = vec![0; self.global.len()];
        for (pos, &v) in self.ranking().iter().enumerate() {
            ranks[v] = pos + 1;
        }
        ranks
    }

    /// Mean defined instantaneous importance of `variable` over timesteps
    /// `from..` (0-based).
    pub fn mean_instantaneous(&self, variable: usize, from: usize) -> Option<f64> {
        let (sum, n) = self
            .instantaneous
            .iter()
            .skip(from)
            .filter_map(|row| row.get(variable).copied().flatten())
            .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
        (n > 0).then(|| sum / n as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::format;

    fn w(alpha: &[f64], beta: &[f64]) -> DecompositionWeights {
        DecompositionWeights {
            alpha: alpha.to_vec(),
            beta: beta.to_vec(),
            residual_norm: 0.0,
        }
    }

    fn names(d: usize) -> Vec<String> {
        (0..d).map(|i| format!("v{i}")).collect()
    }

    #[test]
    fn l1_normalization() {
        let n = normalize_weights(&[w(&[2.0, -2.0], &[1.0, 1.0])]).unwrap();
        let close = |a: &[f64], b: &[f64]| a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-15);
        assert!(close(&n.alpha[0], &[1.0 / 3.0, 1.0 / 3.0]));
        assert!(close(&n.beta[0], &[1.0 / 6.0, 1.0 / 6.0]));

        let n = normalize_weights(&[w(&[0.0], &[5.0])]).unwrap();
        assert_eq!((n.alpha[0][0], n.beta[0][0]), (0.0, 1.0));
    }

    #[test]
    fn normalization_is_scale_invariant() {
        let raw = w(&[0.3, -1.7, 2.2], &[0.05, 4.0, -0.9]);
        let base = normalize_weights(core::slice::from_ref(&raw)).unwrap();
        for k in [1e-3, 0.5, 7.0, 1e4] {
            let scaled = w(
                &raw.alpha.iter().map(|v| v * k).collect::<Vec<_>>(),
                &raw.beta.iter().map(|v| v * k).collect::<Vec<_>>(),
            );
            let n = normalize_weights(&[scaled]).unwrap();
            for (a, b) in n.alpha[0].iter().chain(&n.beta[0]).zip(base.alpha[0].iter().chain(&base.beta[0])) {
                assert!((a - b).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn degenerate_timestep_is_an_error() {
        assert_eq!(
            normalize_weights(&[w(&[1.0], &[0.0]), w(&[0.0], &[0.0])]),
            Err(Error::DegenerateWeights { timestep: 1 })
        );
    }

    #[test]
    fn instantaneous_examples() {
        assert!((instantaneous_importance(0.3, 0.7).unwrap() - 0.7).abs() < 1e-15);
        for x in [1e-6, 0.2, 3.0] {
            assert_eq!(instantaneous_importance(x, x).unwrap(), 0.5);
        }
        assert_eq!(instantaneous_importance(0.5, 0.0).unwrap(), 0.0);
        assert!(matches!(instantaneous_importance(0.0, 0.0), Err(Error::DegeneratePair { .. })));
    }

    #[test]
    fn global_examples() {
        let n = NormalizedWeights {
            alpha: vec![vec![0.6]],
            beta: vec![vec![0.8]],
        };
        assert!((global_importance(&n).unwrap()[0] - 1.0).abs() < 1e-15);
        let n = NormalizedWeights {
            alpha: vec![vec![0.3], vec![0.0]],
            beta: vec![vec![0.4], vec![0.0]],
        };
        assert!((global_importance(&n).unwrap()[0] - 0.25).abs() < 1e-15);

        let n = normalize_weights(&[w(&[4.0 / 3.0], &[7.0 / 3.0])]).unwrap();
        assert!((n.alpha[0][0] - 4.0 / 11.0).abs() < 1e-15);
        let gl = global_importance(&n).unwrap()[0];
        assert!((gl - crate::math::sqrt(65.0) / 11.0).abs() < 1e-12);
        assert!((gl - 0.73300).abs() < 1e-4);
    }

    #[test]
    fn report_single_variable() {
        let raw = [w(&[1.0], &[1.0]), w(&[0.0], &[2.0])];
        let r = build_report(&raw, &names(1)).unwrap();
        assert_eq!(r.ranking(), vec![0]);
        assert_eq!(r.instantaneous[1][0], Some(1.0));
        assert_eq!(r.long_term[0][0], Some(0.5));
    }

    #[test]
    fn report_skips_degenerate_steps() {
        let raw = [w(&[0.0, 0.0], &[0.0, 0.0]), w(&[0.6, 0.0], &[0.0, 0.0]), w(&[0.0, 0.0], &[0.0, 1.0])];
        let r = build_report(&raw, &names(2)).unwrap();
        assert_eq!(r.degenerate_steps, 1);
        assert_eq!(r.instantaneous[0], vec![None, None]);
        assert_eq!(r.instantaneous[1], vec![Some(0.0), None]);
        assert!((r.global[0] - 0.5).abs() < 1e-15 && (r.global[1] - 0.5).abs() < 1e-15);
        assert_eq!(r.ranks(), vec![1, 2]);
    }

    #[test]
    fn report_all_degenerate_fails() {
        let raw = [w(&[0.0], &[0.0])];
        assert!(build_report(&raw, &names(1)).is_err());
    }

    #[test]
    fn aggregate_means() {
        let a = build_report(&[w(&[1.0, 0.0], &[1.0, 0.0])], &names(2)).unwrap();
        let b = build_report(&[w(&[0.0, 1.0], &[0.0, 3.0])], &names(2)).unwrap();
        let m = aggregate(&[a.clone(), b]).unwrap();
        assert_eq!(m.instantaneous[0], vec![Some(0.5), Some(0.75)]);
        assert!((m.global[0] - a.global[0] / 2.0).abs() < 1e-15);
    }
}
