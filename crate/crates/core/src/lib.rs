//! Explainable multivariate forecasting with a decomposed LSTM.
//!
//! A shared-state LSTM encodes all input variables jointly while a tensorized
//! LSTM keeps one hidden row per variable. At every step the shared hidden
//! state is re-expressed, by ridge least squares, as a combination of each
//! variable's previous tensorized state (long-term effect) and its latest
//! change (instantaneous effect). The reconstruction drives the forecast and
//! the next recurrence step, and the coefficients become per-variable
//! importance measures.
//!
//! Without the default `std` feature the crate is `no_std` (it needs `alloc`)
//! and takes its scalar math from `libm`, which must then be enabled. File
//! formats, CSV loading and the command line live in the `delelstm` crate.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;
#[cfg(all(test, not(feature = "std")))]
extern crate std;

pub mod cells;
pub mod data;
pub mod decomposition;
pub mod error;
pub mod graph;
pub mod interpretation;
mod linalg;
mod math;
pub mod metrics;
pub mod model;
pub mod optim;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use graph::{Graph, Var};
pub use tensor::Tensor;
