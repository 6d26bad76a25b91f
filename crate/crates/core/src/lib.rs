//! Multi-target differentiable rule learning over knowledge graphs.
//!
//! - [`kg`]: triples, vocabularies and dataset loading.
//! - [`ops`]: sparse relation operators and path counting.
//! - [`indicators`]: saturation and bifurcation statistics.
//! - [`model`]: recurrent attention, the corrected score, rules and checkpoints.
//! - [`train`]: Adam training with early stopping and ranking evaluation.
//! - [`cli`]: the `mplr` command line.

pub mod cli;
pub mod error;
pub mod indicators;
pub mod kg;
pub mod model;
pub mod ops;
pub mod train;

pub use error::{Error, Result};
