#![allow(dead_code)]

use nalgebra::DMatrix;
use qbgraph::model::Hyperparameters;
use qbgraph::simulate::sample_gaussian;
use qbgraph::{DataMatrix, PrecisionMatrix};

/// Four-node instance with one strong, one weak and one absent neighbor of node 0.
pub fn tiny_truth() -> PrecisionMatrix {
    #[rustfmt::skip]
    let m = DMatrix::from_row_slice(4, 4, &[
        1.0, -0.45, 0.2, 0.0,
        -0.45, 1.0, 0.0, 0.1,
        0.2, 0.0, 1.0, 0.0,
        0.0, 0.1, 0.0, 1.0,
    ]);
    PrecisionMatrix::new_positive_definite(m).unwrap()
}

pub fn tiny_instance(seed: u64) -> (DataMatrix, Hyperparameters) {
    let truth = tiny_truth();
    let data = sample_gaussian(&truth, 30, 1000 + seed).unwrap();
    let sigma2: Vec<f64> = truth.diagonal().iter().map(|d| 1.0 / d).collect();
    let hyper = Hyperparameters {
        alpha: 0.9,
        u: 1.5,
        a1: 1e-5,
        a2: 10.0,
        sigma2,
        gamma: 0.2,
    };
    (data, hyper)
}

/// Slab scales used when the hyperprior is held fixed.
pub const TINY_RHO: (f64, f64) = (4.0, 4.0);

/// Instance with `p` nodes (`p - 1 <= 3` predictors of node 0) and `n = 30` rows.
pub fn small_instance(p: usize, seed: u64) -> (DataMatrix, Hyperparameters) {
    let full = tiny_truth();
    let idx: Vec<usize> = (0..p).collect();
    let m = DMatrix::from_fn(p, p, |i, j| full.get(idx[i], idx[j]));
    let truth = PrecisionMatrix::new_positive_definite(m).unwrap();
    let data = sample_gaussian(&truth, 30, 2000 + seed).unwrap();
    let sigma2: Vec<f64> = truth.diagonal().iter().map(|d| 1.0 / d).collect();
    let hyper = Hyperparameters {
        alpha: 0.9,
        u: 1.5,
        a1: 1e-5,
        a2: 10.0,
        sigma2,
        gamma: 0.2,
    };
    (data, hyper)
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

pub fn sample_sd(xs: &[f64]) -> f64 {
    let m = mean(xs);
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}
