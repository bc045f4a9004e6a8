//! Quasi-Bayesian estimation of sparse Gaussian graphical models.
//!
//! Each column of the precision matrix is estimated by an independent MCMC
//! chain over a spike-and-slab posterior built from the node-wise regression
//! pseudo-likelihood. The per-column summaries are then combined into a
//! symmetric graph estimate with credible intervals.

pub mod aggregate;
pub mod diagnostics;
pub mod error;
pub mod matrix;
pub mod model;
pub mod oracle;
pub mod orchestrator;
pub mod samplers;
pub mod sigma;
pub mod simulate;
pub mod special;

pub use aggregate::{estimate_graph, GraphEstimate, Interval};
pub use error::{Error, Result};
pub use matrix::{DataMatrix, PrecisionMatrix};
pub use model::{ColumnState, Hyperparameters};
pub use orchestrator::{fit_all, FitResult};
pub use samplers::{run_chain, ChainConfig, ChainSummary, KernelKind};
pub use sigma::{SigmaMode, SigmaSpec};
pub use simulate::{GeneratorKind, GeneratorSpec};
