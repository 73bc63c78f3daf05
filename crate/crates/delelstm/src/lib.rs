//! Files, command line and experiment drivers for the `delelstm-core`
//! forecaster: CSV loading, checkpoints, importance reports, grid search and
//! top-k ablation.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod error;
pub mod io;
pub mod report;
pub mod search;
pub mod synth;

pub use error::{Error, Result};

// Training allocates and frees a whole autodiff tape per batch. Under glibc's
// adaptive trimming that can turn into a page-fault storm once the heap has
// been shaped by other work, so the allocator is fixed here instead.
#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;
