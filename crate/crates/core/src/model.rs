//! Full forecaster: parameters, unrolled forward pass and sequence loss.

use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;

use crate::cells::{gate_vars, step_standard, CellState, GateWeights, Gates, StandardLstmParams, TensorLstmParams};
use crate::decomposition::{delelstm_step, predict, DecompositionWeights, HeadVars, StepOutput};
use crate::error::{shape_err, Error, Result};
use crate::graph::{Graph, Var};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    /// Shared-state LSTM + tensorized LSTM + decomposition.
    Delelstm,
    /// Shared-state LSTM feeding the head directly.
    PlainLstm,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Delelstm => "delelstm",
            ModelKind::PlainLstm => "lstm",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "delelstm" => Some(ModelKind::Delelstm),
            "lstm" => Some(ModelKind::PlainLstm),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeadParams {
    /// (1 x M)
    pub weight: Tensor,
    /// (1)
    pub bias: Tensor,
}

impl HeadParams {
    pub fn init<R: Rng + ?Sized>(hidden: usize, rng: &mut R) -> Self {
        let bound = 1.0 / crate::math::sqrt(hidden as f64);
        Self {
            weight: Tensor::uniform(&[1, hidden], bound, rng),
            bias: Tensor::zeros(&[1]),
        }
    }
}

/// Every trainable tensor of the model.
#[derive(Debug, Clone, PartialEq)]
pub struct DelelstmParams {
    pub standard: StandardLstmParams,
    /// Absent for [`ModelKind::PlainLstm`].
    pub tensorized: Option<TensorLstmParams>,
    pub head: HeadParams,
}

/// Parameters registered on a graph.
#[derive(Debug, Clone)]
pub struct BoundParams {
    pub standard: Gates<GateWeights<Var>>,
    pub tensorized: Option<Gates<GateWeights<Var>>>,
    pub head: HeadVars,
}

impl BoundParams {
    /// Handles in the order of [`DelelstmParams::blocks`].
    pub fn vars(&self) -> Vec<Var> {
        let mut out = gate_vars(&self.standard);
        if let Some(t) = &self.tensorized {
            out.extend(gate_vars(t));
        }
        out.extend([self.head.weight, self.head.bias]);
        out
    }
}

impl DelelstmParams {
    pub fn init<R: Rng + ?Sized>(kind: ModelKind, inputs: usize, hidden: usize, rng: &mut R) -> Self {
        let standard = StandardLstmParams::init(inputs, hidden, rng);
        let tensorized = match kind {
            ModelKind::Delelstm => Some(TensorLstmParams::init(inputs, hidden, rng)),
            ModelKind::PlainLstm => None,
        };
        let head = HeadParams::init(hidden, rng);
        Self {
            standard,
            tensorized,
            head,
        }
    }

    pub fn kind(&self) -> ModelKind {
        if self.tensorized.is_some() {
            ModelKind::Delelstm
        } else {
            ModelKind::PlainLstm
        }
    }

    pub fn inputs(&self) -> usize {
        self.standard.inputs()
    }

    pub fn hidden(&self) -> usize {
        self.standard.hidden()
    }

    /// Named blocks in a stable order.
    pub fn blocks(&self) -> Vec<(String, &Tensor)> {
        let mut out = self.standard.blocks();
        if let Some(t) = &self.tensorized {
            out.extend(t.blocks());
        }
        out.push((String::from("head.weight"), &self.head.weight));
        out.push((String::from("head.bias"), &self.head.bias));
        out
    }

    pub fn blocks_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = self.standard.blocks_mut();
        if let Some(t) = &mut self.tensorized {
            out.extend(t.blocks_mut());
        }
        out.push(&mut self.head.weight);
        out.push(&mut self.head.bias);
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.blocks().iter().map(|(_, t)| t.len()).sum()
    }

    /// Rebuilds parameters of the given layout from named blocks, checking
    /// every name and shape.
    pub fn from_blocks(kind: ModelKind, inputs: usize, hidden: usize, blocks: &[(String, Tensor)]) -> Result<Self> {
        let mut out = match kind {
            ModelKind::Delelstm => Self {
                standard: StandardLstmParams::zeros(inputs, hidden),
                tensorized: Some(TensorLstmParams::zeros(inputs, hidden)),
                head: HeadParams {
                    weight: Tensor::zeros(&[1, hidden]),
                    bias: Tensor::zeros(&[1]),
                },
            },
            ModelKind::PlainLstm => Self {
                standard: StandardLstmParams::zeros(inputs, hidden),
                tensorized: None,
                head: HeadParams {
                    weight: Tensor::zeros(&[1, hidden]),
                    bias: Tensor::zeros(&[1]),
                },
            },
        };
        let names: Vec<String> = out.blocks().into_iter().map(|(n, _)| n).collect();
        if names.len() != blocks.len() {
            return Err(Error::InvalidConfig(alloc::format!(
                "expected {} parameter blocks, found {}",
                names.len(),
                blocks.len()
            )));
        }
        for ((slot, name), (bname, value)) in out.blocks_mut().into_iter().zip(&names).zip(blocks) {
            if name != bname {
                return Err(Error::InvalidConfig(alloc::format!("expected block '{name}', found '{bname}'")));
            }
            if slot.shape() != value.shape() {
                return shape_err("parameter block", slot.shape(), value.shape());
            }
            *slot = value.clone();
        }
        Ok(out)
    }

    pub fn bind(&self, g: &mut Graph) -> BoundParams {
        BoundParams {
            standard: self.standard.bind(g),
            tensorized: self.tensorized.as_ref().map(|t| t.bind(g)),
            head: HeadVars {
                weight: g.param(self.head.weight.clone()),
                bias: g.param(self.head.bias.clone()),
            },
        }
    }
}

/// Graph handles from an unrolled forward pass.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    /// One (B, 1) prediction per timestep; entry `t` forecasts the target
    /// one step after input `t`.
    pub predictions: Vec<Var>,
    /// Decomposition outputs per timestep; empty for the plain LSTM.
    pub steps: Vec<StepOutput>,
}

impl ForwardPass {
    /// Decomposition weights indexed `[sample][timestep]`.
    pub fn weights(&self, g: &Graph) -> Vec<Vec<DecompositionWeights>> {
        let per_step: Vec<Vec<DecompositionWeights>> = self.steps.iter().map(|s| s.weights(g)).collect();
        let batch = per_step.first().map_or(0, Vec::len);
        (0..batch)
            .map(|b| per_step.iter().map(|w| w[b].clone()).collect())
            .collect()
    }

    /// Prediction values indexed `[sample][timestep]`.
    pub fn prediction_values(&self, g: &Graph) -> Vec<Vec<f64>> {
        let batch = self.predictions.first().map_or(0, |&p| g.value(p).len());
        (0..batch)
            .map(|b| self.predictions.iter().map(|&p| g.value(p).data()[b]).collect())
            .collect()
    }
}

/// Unrolls the model over `inputs`, one (B, D) tensor per timestep, from zero
/// initial states.
pub fn forward(g: &mut Graph, params: &BoundParams, inputs: &[Tensor], lambda: f64) -> Result<ForwardPass> {
    let first = inputs.first().ok_or(Error::EmptySequence)?;
    let sx = first.shape().to_vec();
    let hidden = g.shape(params.standard.input.recurrent)[0];
    let lead = &sx[..sx.len().saturating_sub(1)];
    let mut hshape = lead.to_vec();
    hshape.push(hidden);
    let mut standard_state = CellState::zeros(g, &hshape);
    let mut tensor_state = if params.tensorized.is_some() {
        let mut tshape = sx.clone();
        tshape.push(hidden);
        Some(CellState::zeros(g, &tshape))
    } else {
        None
    };
    let mut predictions = Vec::with_capacity(inputs.len());
    let mut steps = Vec::new();
    for xt in inputs {
        if xt.shape() != sx.as_slice() {
            return shape_err("forward", &sx, xt.shape());
        }
        let x = g.constant(xt.clone());
        match (&params.tensorized, tensor_state) {
            (Some(tp), Some(ts)) => {
                let (out, next_std, next_tens) =
                    delelstm_step(g, x, standard_state, ts, &params.standard, tp, &params.head, lambda)?;
                standard_state = next_std;
                tensor_state = Some(next_tens);
                predictions.push(out.prediction);
                steps.push(out);
            }
            _ => {
                standard_state = step_standard(g, x, standard_state, &params.standard)?;
                predictions.push(predict(g, standard_state.hidden, &params.head)?);
            }
        }
    }
    Ok(ForwardPass { predictions, steps })
}

/// Mean squared error over timesteps `warmup..T`. `targets` is (B, T).
pub fn sequence_loss(g: &mut Graph, predictions: &[Var], targets: &Tensor, warmup: usize) -> Result<Var> {
    let t = predictions.len();
    if targets.rank() != 2 || targets.shape()[1] != t {
        return shape_err("sequence_loss", targets.shape(), &[t]);
    }
    if warmup >= t {
        return Err(Error::EmptySequence);
    }
    let pred = g.concat(&predictions[warmup..])?;
    let target = g.constant(targets.clone());
    let target = g.slice(target, warmup, t - warmup)?;
    let err = g.sub(pred, target)?;
    let sq = g.hadamard(err, err)?;
    g.mean(sq)
}
