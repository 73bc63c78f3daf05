//! Least-squares decomposition of the shared hidden state.
//!
//! At each step the standard LSTM's hidden state `H_t` is approximated by
//! `h_{t-1}ᵀ α_t + Δh_tᵀ β_t`, where `h` is the tensorized state and
//! `Δh_t = h_t − h_{t-1}`. The ridge solution `[α; β]` gives the
//! approximation `Ĥ_t`, which drives the prediction head and replaces `H_t`
//! in the next standard-LSTM step. The cell state is carried unchanged.

use alloc::vec::Vec;

use crate::cells::{step_standard, step_tensorized, CellState, GateWeights, Gates};
use crate::error::{Error, Result};
use crate::graph::{Graph, Var};

pub const DEFAULT_LAMBDA: f64 = 1e-6;

/// Decomposition coefficients for one timestep of one sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct DecompositionWeights {
    /// Long-term coefficients, one per variable.
    pub alpha: Vec<f64>,
    /// Instantaneous coefficients, one per variable.
    pub beta: Vec<f64>,
    /// `‖Ĥ_t − H_t‖₂`.
    pub residual_norm: f64,
}

impl DecompositionWeights {
    pub fn variables(&self) -> usize {
        self.alpha.len()
    }
}

/// Builds the (..., M, 2D) design matrix and the innovation `h_cur − h_prev`.
/// Columns `0..D` come from the rows of `h_prev`, columns `D..2D` from the
/// rows of the innovation.
pub fn build_design(g: &mut Graph, h_prev: Var, h_cur: Var) -> Result<(Var, Var)> {
    let delta = g.sub(h_cur, h_prev)?;
    let a = g.design(h_prev, delta)?;
    Ok((a, delta))
}

/// Solves for `[α; β]` (shape (..., 2D)) approximating `hidden` (..., M) in
/// the column span of `design` (..., M, 2D).
pub fn decompose(g: &mut Graph, hidden: Var, design: Var, lambda: f64) -> Result<Var> {
    let s = g.shape(design);
    if s.len() >= 2 {
        let (rows, unknowns) = (s[s.len() - 2], s[s.len() - 1]);
        if rows < unknowns && lambda == 0.0 {
            return Err(Error::UnderdeterminedWithoutRidge { rows, unknowns });
        }
    }
    g.ridge_solve(design, hidden, lambda)
}

/// Reads back per-sequence weights from graph values. `coeffs` is
/// (..., 2D), `design` (..., M, 2D) and `hidden` (..., M).
pub fn extract_weights(g: &Graph, coeffs: Var, design: Var, hidden: Var) -> Vec<DecompositionWeights> {
    let c = g.value(coeffs);
    let a = g.value(design).data();
    let h = g.value(hidden).data();
    let p = c.last_dim();
    let d = p / 2;
    let m = h.len() / c.leading();
    c.data()
        .chunks(p)
        .enumerate()
        .map(|(b, cb)| {
            let mut sq = 0.0;
            for r in 0..m {
                let row = &a[(b * m + r) * p..(b * m + r + 1) * p];
                let approx: f64 = row.iter().zip(cb).map(|(x, y)| x * y).sum();
                let e = approx - h[b * m + r];
                sq += e * e;
            }
            DecompositionWeights {
                alpha: cb[..d].to_vec(),
                beta: cb[d..].to_vec(),
                residual_norm: crate::math::sqrt(sq),
            }
        })
        .collect()
}

/// Affine prediction head `ŷ = w·Ĥ + b`, as graph handles.
#[derive(Debug, Clone, Copy)]
pub struct HeadVars {
    /// (1 x M)
    pub weight: Var,
    /// (1)
    pub bias: Var,
}

pub fn predict(g: &mut Graph, hidden: Var, head: &HeadVars) -> Result<Var> {
    let z = g.matmul_t(hidden, head.weight)?;
    g.add_bias(z, head.bias)
}

/// Graph handles produced by one [`delelstm_step`].
#[derive(Debug, Clone, Copy)]
pub struct StepOutput {
    /// `Ĥ_t`, (..., M).
    pub approx_hidden: Var,
    /// The standard LSTM's raw `H_t` before approximation.
    pub raw_hidden: Var,
    /// `[α; β]`, (..., 2D).
    pub coeffs: Var,
    /// (..., M, 2D).
    pub design: Var,
    /// `ŷ_{t+1}`, (..., 1).
    pub prediction: Var,
}

impl StepOutput {
    pub fn weights(&self, g: &Graph) -> Vec<DecompositionWeights> {
        extract_weights(g, self.coeffs, self.design, self.raw_hidden)
    }
}

/// One full step: standard and tensorized cells, decomposition, prediction.
/// The returned standard state carries `Ĥ_t` as its hidden state and the
/// cell's own `C_t`.
pub fn delelstm_step(
    g: &mut Graph,
    x: Var,
    standard_state: CellState,
    tensor_state: CellState,
    standard: &Gates<GateWeights<Var>>,
    tensorized: &Gates<GateWeights<Var>>,
    head: &HeadVars,
    lambda: f64,
) -> Result<(StepOutput, CellState, CellState)> {
    let raw = step_standard(g, x, standard_state, standard)?;
    let tens = step_tensorized(g, x, tensor_state, tensorized)?;
    let (design, _) = build_design(g, tensor_state.hidden, tens.hidden)?;
    let coeffs = decompose(g, raw.hidden, design, lambda)?;
    let approx_hidden = g.batch_matvec(design, coeffs)?;
    let prediction = predict(g, approx_hidden, head)?;
    let out = StepOutput {
        approx_hidden,
        raw_hidden: raw.hidden,
        coeffs,
        design,
        prediction,
    };
    let next_standard = CellState {
        hidden: approx_hidden,
        cell: raw.cell,
    };
    Ok((out, next_standard, tens))
}
