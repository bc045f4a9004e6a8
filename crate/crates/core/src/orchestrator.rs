//! Parallel fitting of all column chains.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::DataMatrix;
use crate::model::Hyperparameters;
use crate::samplers::{run_chain_with_gram, ChainConfig, ChainSummary};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub summaries: Vec<ChainSummary>,
    pub sigma2_used: Vec<f64>,
    pub wall_time: f64,
    pub config_echo: serde_json::Value,
}

/// Fit every column on a pool of `workers` threads.
///
/// Column `j` draws from stream `j` of a ChaCha generator seeded with
/// `config.seed`, so the output does not depend on the worker count.
pub fn fit_all(
    data: &DataMatrix,
    hyper: &Hyperparameters,
    config: &ChainConfig,
    workers: usize,
) -> Result<FitResult> {
    fit_all_with_progress(data, hyper, config, workers, &AtomicUsize::new(0))
}

/// [`fit_all`], incrementing `completed` as each column finishes.
pub fn fit_all_with_progress(
    data: &DataMatrix,
    hyper: &Hyperparameters,
    config: &ChainConfig,
    workers: usize,
    completed: &AtomicUsize,
) -> Result<FitResult> {
    if workers == 0 {
        return Err(Error::invalid("workers must be positive"));
    }
    config.validate()?;
    hyper.validate(data.p())?;
    let start = Instant::now();
    let gram = data.gram();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::invalid(format!("cannot build worker pool: {e}")))?;
    let summaries = pool.install(|| {
        (0..data.p())
            .into_par_iter()
            .map(|j| {
                let s = run_chain_with_gram(j, &gram, hyper, config).map_err(|e| Error::Column {
                    column: j,
                    source: Box::new(e),
                });
                completed.fetch_add(1, Ordering::Relaxed);
                s
            })
            .collect::<Result<Vec<_>>>()
    })?;
    Ok(FitResult {
        summaries,
        sigma2_used: hyper.sigma2.clone(),
        wall_time: start.elapsed().as_secs_f64(),
        config_echo: serde_json::json!({ "hyperparameters": hyper, "chain": config }),
    })
}
