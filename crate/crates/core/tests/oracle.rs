mod common;

use common::*;
use nalgebra::{DMatrix, DVector};
use qbgraph::model::{elastic_net_log_normalizer, Hyperparameters};
use qbgraph::oracle::{exact_marginals_small, GridSpec, RhoSpec};
use qbgraph::samplers::column_rng;
use qbgraph::{DataMatrix, Error};
use rand::Rng;
use rand_distr::StandardNormal;
use statrs::function::beta::ln_beta;

const RHO: RhoSpec = RhoSpec::Fixed {
    rho1: 4.0,
    rho2: 4.0,
};

fn noise_data(n: usize, p: usize, seed: u64) -> DataMatrix {
    let mut rng = column_rng(seed, 0);
    DataMatrix::new(DMatrix::from_fn(n, p, |_, _| rng.sample(StandardNormal))).unwrap()
}

fn unit_hyper(p: usize) -> Hyperparameters {
    Hyperparameters {
        alpha: 0.9,
        u: 1.5,
        a1: 1e-5,
        a2: 10.0,
        sigma2: vec![1.0; p],
        gamma: 0.2,
    }
}

#[test]
fn duplicated_predictors_share_inclusion_probability() {
    let base = noise_data(30, 3, 4);
    let mut x = base.matrix().clone().insert_column(3, 0.0);
    let dup = x.column(1).clone_owned();
    x.set_column(3, &dup);
    // make node 0 depend on the duplicated predictor
    let signal = x.column(1) * 0.8 + x.column(0);
    x.set_column(0, &signal);
    let data = DataMatrix::new(x).unwrap();
    let o = exact_marginals_small(0, &data, &unit_hyper(4), &GridSpec::default(), RHO).unwrap();
    assert!(
        (o.inclusion_prob[0] - o.inclusion_prob[2]).abs() < 1e-7,
        "{:?}",
        o.inclusion_prob
    );
    assert!((o.theta_mean[0] - o.theta_mean[2]).abs() < 1e-7);
}

#[test]
fn grid_refinement_is_stable() {
    for seed in 0..3 {
        let (data, hyper) = tiny_instance(seed);
        let coarse = exact_marginals_small(0, &data, &hyper, &GridSpec::default(), RHO).unwrap();
        let fine =
            exact_marginals_small(0, &data, &hyper, &GridSpec::default().refined(), RHO).unwrap();
        for k in 0..3 {
            assert!((coarse.inclusion_prob[k] - fine.inclusion_prob[k]).abs() < 1e-4);
        }
        assert!(coarse.tolerance > 0.0);
    }
}

#[test]
fn weights_normalize() {
    let (data, hyper) = tiny_instance(1);
    let o = exact_marginals_small(2, &data, &hyper, &GridSpec::default(), RHO).unwrap();
    let total: f64 = o
        .support_log_evidence
        .iter()
        .map(|l| (l - o.log_evidence).exp())
        .sum();
    assert!((total - 1.0).abs() < 1e-10);
    assert!(o.inclusion_prob.iter().all(|p| (0.0..=1.0).contains(p)));
}

#[test]
fn strong_predictor_raises_evidence() {
    let mut x = noise_data(40, 4, 9).matrix().clone();
    let y = x.column(1) * 1.5 + x.column(0) * 0.5;
    x.set_column(0, &y);
    let data = DataMatrix::new(x).unwrap();
    let o = exact_marginals_small(0, &data, &unit_hyper(4), &GridSpec::default(), RHO).unwrap();
    // local coordinate 0 is node 1
    for mask in 0..8usize {
        if mask & 1 == 0 {
            assert!(
                o.support_log_evidence[mask | 1] >= o.support_log_evidence[mask],
                "support {mask:03b}"
            );
        }
    }
}

#[test]
fn rejects_large_instances() {
    let data = noise_data(30, 5, 1);
    let r = exact_marginals_small(0, &data, &unit_hyper(5), &GridSpec::default(), RHO);
    assert!(matches!(r, Err(Error::UnsupportedSize(_))));
}

/// Independent estimate: per-support importance sampling from a widened Gaussian
/// centered at the least-squares fit, combined with the Beta-binomial prior mass.
fn importance_inclusion(
    data: &DataMatrix,
    hyper: &Hyperparameters,
    rho: f64,
    draws: usize,
    seed: u64,
) -> Vec<f64> {
    let p = data.p();
    let d = p - 1;
    let y = DVector::from_column_slice(data.column(0));
    let x = data.without_column(0);
    let s2 = hyper.sigma2[0];
    let (l1, l2) = (hyper.alpha * rho / s2, (1.0 - hyper.alpha) * rho / s2);
    let log_c = elastic_net_log_normalizer(hyper.alpha, rho / s2, rho / s2).unwrap();
    let pu = (p as f64).powf(hyper.u);
    let mut rng = column_rng(seed, 1);
    let mut log_w = Vec::new();
    for mask in 0..1usize << d {
        let sup: Vec<usize> = (0..d).filter(|k| mask >> k & 1 == 1).collect();
        let s = sup.len();
        let prior =
            ln_beta(s as f64 + 1.0, d as f64 + pu - s as f64) - ln_beta(1.0, pu) - s as f64 * log_c;
        if s == 0 {
            log_w.push(prior - y.norm_squared() / (2.0 * s2));
            continue;
        }
        let xs = DMatrix::from_fn(x.nrows(), s, |i, c| x[(i, sup[c])]);
        let prec = xs.tr_mul(&xs) / s2 + DMatrix::identity(s, s) * l2;
        let chol = prec.clone().cholesky().unwrap();
        let center = chol.solve(&(xs.tr_mul(&y) / s2));
        // proposal covariance: twice the Gaussian part's covariance
        let l_inv_t = chol.l().transpose().try_inverse().unwrap() * 2f64.sqrt();
        let log_det =
            2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>() - s as f64 * 2f64.ln();
        let mut acc = Vec::with_capacity(draws);
        for _ in 0..draws {
            let z = DVector::from_fn(s, |_, _| rng.sample::<f64, _>(StandardNormal));
            let th = &center + &l_inv_t * &z;
            let r = &y - &xs * &th;
            let log_target =
                -r.norm_squared() / (2.0 * s2) - l1 * th.lp_norm(1) - 0.5 * l2 * th.norm_squared();
            let log_q = -0.5 * z.norm_squared()
                - 0.5 * s as f64 * (2.0 * std::f64::consts::PI).ln()
                + 0.5 * log_det;
            acc.push(log_target - log_q);
        }
        let m = acc.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let est = m + (acc.iter().map(|v| (v - m).exp()).sum::<f64>() / draws as f64).ln();
        log_w.push(prior + est);
    }
    let m = log_w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = log_w.iter().map(|l| (l - m).exp()).collect();
    let total: f64 = w.iter().sum();
    (0..d)
        .map(|k| {
            w.iter()
                .enumerate()
                .filter(|(mask, _)| mask >> k & 1 == 1)
                .map(|(_, v)| v)
                .sum::<f64>()
                / total
        })
        .collect()
}

#[test]
fn importance_sampling_agrees_on_pure_noise() {
    let data = noise_data(30, 4, 21);
    let hyper = unit_hyper(4);
    let o = exact_marginals_small(0, &data, &hyper, &GridSpec::default(), RHO).unwrap();
    let batches: Vec<Vec<f64>> = (0..20)
        .map(|b| importance_inclusion(&data, &hyper, 4.0, 20_000, b))
        .collect();
    for k in 0..3 {
        let est: Vec<f64> = batches.iter().map(|v| v[k]).collect();
        let se = sample_sd(&est) / (est.len() as f64).sqrt();
        assert!(
            (mean(&est) - o.inclusion_prob[k]).abs() < 3.0 * se + 1e-12,
            "k {k}: {} vs {} (se {se})",
            mean(&est),
            o.inclusion_prob[k]
        );
    }
}
