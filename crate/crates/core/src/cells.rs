//! The two recurrent encoders: a standard LSTM over the joint input vector
//! and a tensorized LSTM whose hidden state keeps one row per input variable.
//!
//! Both cells operate on graph handles and accept a leading batch axis:
//! the standard cell takes `x` as (B, D) and states as (B, M); the tensorized
//! cell takes `x` as (B, D) and states as (B, D, M). Unbatched inputs work the
//! same with the batch axis dropped.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{shape_err, Result};
use crate::graph::{Graph, Var};
use crate::tensor::Tensor;

/// One value per LSTM gate.
#[derive(Debug, Clone, PartialEq)]
pub struct Gates<T> {
    pub input: T,
    pub forget: T,
    pub output: T,
    pub candidate: T,
}

impl<T> Gates<T> {
    pub const NAMES: [&'static str; 4] = ["input", "forget", "output", "candidate"];

    pub fn from_fn(mut f: impl FnMut(&'static str) -> T) -> Self {
        Self {
            input: f("input"),
            forget: f("forget"),
            output: f("output"),
            candidate: f("candidate"),
        }
    }

    pub fn map<U>(&self, mut f: impl FnMut(&T) -> U) -> Gates<U> {
        Gates {
            input: f(&self.input),
            forget: f(&self.forget),
            output: f(&self.output),
            candidate: f(&self.candidate),
        }
    }

    pub fn try_map<U, E>(&self, mut f: impl FnMut(&T) -> core::result::Result<U, E>) -> core::result::Result<Gates<U>, E> {
        Ok(Gates {
            input: f(&self.input)?,
            forget: f(&self.forget)?,
            output: f(&self.output)?,
            candidate: f(&self.candidate)?,
        })
    }

    pub fn iter(&self) -> impl Iterator<Item = (&'static str, &T)> {
        Self::NAMES.into_iter().zip([&self.input, &self.forget, &self.output, &self.candidate])
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&'static str, &mut T)> {
        Self::NAMES
            .into_iter()
            .zip([&mut self.input, &mut self.forget, &mut self.output, &mut self.candidate])
    }
}

/// Weights feeding one gate: hidden-to-hidden, input-to-hidden and bias.
#[derive(Debug, Clone, PartialEq)]
pub struct GateWeights<T = Tensor> {
    pub recurrent: T,
    pub input: T,
    pub bias: T,
}

impl GateWeights {
    fn bind(&self, g: &mut Graph) -> GateWeights<Var> {
        GateWeights {
            recurrent: g.param(self.recurrent.clone()),
            input: g.param(self.input.clone()),
            bias: g.param(self.bias.clone()),
        }
    }

    fn blocks<'a>(&'a self, prefix: &str, gate: &str, out: &mut Vec<(String, &'a Tensor)>) {
        out.push((format!("{prefix}.{gate}.recurrent"), &self.recurrent));
        out.push((format!("{prefix}.{gate}.input"), &self.input));
        out.push((format!("{prefix}.{gate}.bias"), &self.bias));
    }

    fn blocks_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Tensor>) {
        out.push(&mut self.recurrent);
        out.push(&mut self.input);
        out.push(&mut self.bias);
    }
}

impl GateWeights<Var> {
    fn vars(&self, out: &mut Vec<Var>) {
        out.extend([self.recurrent, self.input, self.bias]);
    }
}

macro_rules! lstm_params {
    ($name:ident, $prefix:literal) => {
        #[derive(Debug, Clone, PartialEq)]
        pub struct $name {
            pub gates: Gates<GateWeights>,
        }

        impl $name {
            pub const PREFIX: &'static str = $prefix;

            /// Registers every tensor as a trainable leaf on `g`.
            pub fn bind(&self, g: &mut Graph) -> Gates<GateWeights<Var>> {
                self.gates.map(|w| w.bind(g))
            }

            /// Named parameter blocks in a fixed order.
            pub fn blocks(&self) -> Vec<(String, &Tensor)> {
                let mut out = Vec::new();
                for (gate, w) in self.gates.iter() {
                    w.blocks($prefix, gate, &mut out);
                }
                out
            }

            pub fn blocks_mut(&mut self) -> Vec<&mut Tensor> {
                let mut out = Vec::new();
                for (_, w) in self.gates.iter_mut() {
                    w.blocks_mut(&mut out);
                }
                out
            }
        }
    };
}

lstm_params!(StandardLstmParams, "standard");
lstm_params!(TensorLstmParams, "tensorized");

/// Handles of a bound cell, in the same order as `blocks()`.
pub fn gate_vars(gates: &Gates<GateWeights<Var>>) -> Vec<Var> {
    let mut out = Vec::new();
    for (_, w) in gates.iter() {
        w.vars(&mut out);
    }
    out
}

impl StandardLstmParams {
    /// `recurrent` is (M x M), `input` is (M x D), `bias` is (M); weights
    /// uniform in ±1/√M, biases zero.
    pub fn init<R: Rng + ?Sized>(inputs: usize, hidden: usize, rng: &mut R) -> Self {
        let bound = 1.0 / crate::math::sqrt(hidden as f64);
        Self {
            gates: Gates::from_fn(|_| GateWeights {
                recurrent: Tensor::uniform(&[hidden, hidden], bound, rng),
                input: Tensor::uniform(&[hidden, inputs], bound, rng),
                bias: Tensor::zeros(&[hidden]),
            }),
        }
    }

    pub fn zeros(inputs: usize, hidden: usize) -> Self {
        Self {
            gates: Gates::from_fn(|_| GateWeights {
                recurrent: Tensor::zeros(&[hidden, hidden]),
                input: Tensor::zeros(&[hidden, inputs]),
                bias: Tensor::zeros(&[hidden]),
            }),
        }
    }

    pub fn hidden(&self) -> usize {
        self.gates.input.recurrent.shape()[0]
    }

    pub fn inputs(&self) -> usize {
        self.gates.input.input.shape()[1]
    }
}

impl TensorLstmParams {
    /// `recurrent` is (D x M x M), `input` is (D x M), `bias` is (D x M).
    pub fn init<R: Rng + ?Sized>(inputs: usize, hidden: usize, rng: &mut R) -> Self {
        let bound = 1.0 / crate::math::sqrt(hidden as f64);
        Self {
            gates: Gates::from_fn(|_| GateWeights {
                recurrent: Tensor::uniform(&[inputs, hidden, hidden], bound, rng),
                input: Tensor::uniform(&[inputs, hidden], bound, rng),
                bias: Tensor::zeros(&[inputs, hidden]),
            }),
        }
    }

    pub fn zeros(inputs: usize, hidden: usize) -> Self {
        Self {
            gates: Gates::from_fn(|_| GateWeights {
                recurrent: Tensor::zeros(&[inputs, hidden, hidden]),
                input: Tensor::zeros(&[inputs, hidden]),
                bias: Tensor::zeros(&[inputs, hidden]),
            }),
        }
    }

    pub fn hidden(&self) -> usize {
        self.gates.input.recurrent.shape()[1]
    }

    pub fn inputs(&self) -> usize {
        self.gates.input.recurrent.shape()[0]
    }
}

/// Hidden and cell state of a cell, as graph handles.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellState {
    pub hidden: Var,
    pub cell: Var,
}

impl CellState {
    pub fn zeros(g: &mut Graph, shape: &[usize]) -> Self {
        Self {
            hidden: g.constant(Tensor::zeros(shape)),
            cell: g.constant(Tensor::zeros(shape)),
        }
    }
}

fn lstm_update(g: &mut Graph, pre: Gates<Var>, prev_cell: Var) -> Result<CellState> {
    let i = g.sigmoid(pre.input);
    let f = g.sigmoid(pre.forget);
    let o = g.sigmoid(pre.output);
    let cand = g.tanh(pre.candidate);
    let keep = g.hadamard(f, prev_cell)?;
    let write = g.hadamard(i, cand)?;
    let cell = g.add(keep, write)?;
    let squashed = g.tanh(cell);
    let hidden = g.hadamard(o, squashed)?;
    Ok(CellState { hidden, cell })
}

/// One step of the shared-state LSTM:
/// gates `σ(U H + W x + B)`, candidate `tanh(U_c H + W_c x + B_c)`,
/// `C' = F⊙C + I⊙C̃`, `H' = O⊙tanh(C')`.
pub fn step_standard(g: &mut Graph, x: Var, state: CellState, p: &Gates<GateWeights<Var>>) -> Result<CellState> {
    let (sx, sh) = (g.shape(x).to_vec(), g.shape(state.hidden).to_vec());
    let m = g.shape(p.input.recurrent)[0];
    if sx.is_empty() || sh.is_empty() || sx[..sx.len() - 1] != sh[..sh.len() - 1] || sh[sh.len() - 1] != m {
        return shape_err("step_standard", &sx, &sh);
    }
    let pre = p.try_map(|w| -> Result<Var> {
        let rec = g.matmul_t(state.hidden, w.recurrent)?;
        let inp = g.matmul_t(x, w.input)?;
        let sum = g.add(rec, inp)?;
        g.add_bias(sum, w.bias)
    })?;
    lstm_update(g, pre, state.cell)
}

/// One step of the tensorized LSTM. Every gate and state is a (D x M)
/// matrix whose row `d` sees only `x[d]`, the previous row `d` and the
/// `d`-th parameter slices.
pub fn step_tensorized(g: &mut Graph, x: Var, state: CellState, p: &Gates<GateWeights<Var>>) -> Result<CellState> {
    let (sx, sh) = (g.shape(x).to_vec(), g.shape(state.hidden).to_vec());
    if sh.len() != sx.len() + 1 || sh[..sx.len()] != *sx {
        return shape_err("step_tensorized", &sx, &sh);
    }
    let pre = p.try_map(|w| -> Result<Var> {
        let rec = g.tensor_dot(w.recurrent, state.hidden)?;
        let inp = g.tensor_dot_input(w.input, x)?;
        let sum = g.add(rec, inp)?;
        g.add_bias(sum, w.bias)
    })?;
    lstm_update(g, pre, state.cell)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn tensor_dot_scalar_rows() {
        let mut g = Graph::new();
        let u = g.constant(Tensor::new(&[2, 1, 1], alloc::vec![2.0, 3.0]).unwrap());
        let h = g.constant(Tensor::matrix(&[[4.0], [5.0]]).unwrap());
        let out = g.tensor_dot(u, h).unwrap();
        assert_eq!(g.value(out).data(), &[8.0, 15.0]);
    }

    #[test]
    fn tensor_dot_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (d, m) = (3, 4);
        let mut ids = Vec::new();
        for _ in 0..d {
            ids.extend_from_slice(Tensor::identity(m).data());
        }
        let mut g = Graph::new();
        let u = g.constant(Tensor::new(&[d, m, m], ids).unwrap());
        let hv = Tensor::uniform(&[d, m], 1.0, &mut rng);
        let h = g.constant(hv.clone());
        let out = g.tensor_dot(u, h).unwrap();
        assert_eq!(g.value(out), &hv);
    }

    #[test]
    fn tensor_dot_single_variable_is_matmul() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let m = 5;
        let uv = Tensor::uniform(&[1, m, m], 1.0, &mut rng);
        let hv = Tensor::uniform(&[1, m], 1.0, &mut rng);
        let mut g = Graph::new();
        let u = g.constant(uv.clone());
        let h = g.constant(hv.clone());
        let td = g.tensor_dot(u, h).unwrap();
        let u2 = g.constant(uv.reshape(&[m, m]).unwrap());
        let h2 = g.constant(hv.reshape(&[m]).unwrap());
        let mm = g.matmul(u2, h2).unwrap();
        assert_eq!(g.value(td).data(), g.value(mm).data());
    }

    #[test]
    fn tensor_dot_shape_mismatch() {
        let mut g = Graph::new();
        let u = g.constant(Tensor::zeros(&[2, 3, 3]));
        let h = g.constant(Tensor::zeros(&[3, 3]));
        assert!(g.tensor_dot(u, h).is_err());
        let w = g.constant(Tensor::zeros(&[2, 3]));
        let x = g.constant(Tensor::zeros(&[3]));
        assert!(g.tensor_dot_input(w, x).is_err());
    }

    #[test]
    fn zero_params_zero_state_is_fixpoint() {
        let mut g = Graph::new();
        let p = StandardLstmParams::zeros(3, 4).bind(&mut g);
        let x = g.constant(Tensor::vector(&[1.0, -2.0, 0.5]));
        let s = CellState::zeros(&mut g, &[4]);
        let next = step_standard(&mut g, x, s, &p).unwrap();
        assert!(g.value(next.hidden).data().iter().all(|&v| v == 0.0));
        assert!(g.value(next.cell).data().iter().all(|&v| v == 0.0));

        let p = TensorLstmParams::zeros(3, 4).bind(&mut g);
        let s = CellState::zeros(&mut g, &[3, 4]);
        let next = step_tensorized(&mut g, x, s, &p).unwrap();
        assert!(g.value(next.hidden).data().iter().all(|&v| v == 0.0));
        assert!(g.value(next.cell).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn candidate_bias_hand_evaluation() {
        let mut params = StandardLstmParams::zeros(1, 1);
        params.gates.candidate.bias = Tensor::vector(&[1.0]);
        let mut g = Graph::new();
        let p = params.bind(&mut g);
        let x = g.constant(Tensor::vector(&[0.0]));
        let s = CellState::zeros(&mut g, &[1]);
        let next = step_standard(&mut g, x, s, &p).unwrap();
        let c = g.value(next.cell).data()[0];
        let h = g.value(next.hidden).data()[0];
        assert!((c - 0.38080).abs() < 1e-4, "{c}");
        assert!((h - 0.18162).abs() < 1e-4, "{h}");
    }

    #[test]
    fn saturated_forget_gate_carries_memory() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut params = StandardLstmParams::init(2, 3, &mut rng);
        params.gates.forget.bias = Tensor::full(&[3], 50.0);
        params.gates.input.bias = Tensor::full(&[3], -50.0);
        for w in [&mut params.gates.forget, &mut params.gates.input] {
            w.recurrent = Tensor::zeros(&[3, 3]);
            w.input = Tensor::zeros(&[3, 2]);
        }
        let mut g = Graph::new();
        let p = params.bind(&mut g);
        let x = g.constant(Tensor::vector(&[0.3, -0.7]));
        let c0 = Tensor::vector(&[0.2, -0.4, 0.9]);
        let s = CellState {
            hidden: g.constant(Tensor::vector(&[0.1, 0.0, -0.1])),
            cell: g.constant(c0.clone()),
        };
        let next = step_standard(&mut g, x, s, &p).unwrap();
        for (a, b) in g.value(next.cell).data().iter().zip(c0.data()) {
            assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn step_shape_mismatch() {
        let mut g = Graph::new();
        let p = StandardLstmParams::zeros(3, 4).bind(&mut g);
        let x = g.constant(Tensor::vector(&[1.0, 2.0, 3.0]));
        let s = CellState::zeros(&mut g, &[5]);
        assert!(step_standard(&mut g, x, s, &p).is_err());
        let p = TensorLstmParams::zeros(3, 4).bind(&mut g);
        let s = CellState::zeros(&mut g, &[2, 4]);
        assert!(step_tensorized(&mut g, x, s, &p).is_err());
    }
}
