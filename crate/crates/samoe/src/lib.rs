//! SaMoE: a self-adaptive mixture-of-experts network for table-based fact
//! verification, built from scratch on a minimal f64 autodiff engine.
//!
//! The crate covers the full pipeline: synthetic statement/table generation
//! with an exact labeling oracle, table pruning + serialization +
//! tokenization, trigger-word prior assumptions, the expert/manager/supervisor
//! network, two-stage training (supervised multi-expert, then self-adaptive
//! supervisor), and the analysis metrics (per-expert accuracy, management
//! top-k, coverage-at-k).
//!
//! Start with the runnable programs under `examples/`, or the `samoe` binary
//! for the end-to-end command-line pipeline.

pub mod checkpoint;
pub mod cli;
pub mod data;
pub mod error;
pub mod evaluation;
pub mod gradcheck;
pub mod graph;
pub mod model;
pub mod optim;
pub mod params;
pub mod preprocess;
pub mod prior;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};

