mod common;

use common::*;
use nalgebra::DMatrix;
use proptest::prelude::*;
use qbgraph::model::{
    elastic_net_log_normalizer, log_prior_col, log_quasi_likelihood_col, log_target_col,
    ColumnState, Hyperparameters,
};
use qbgraph::DataMatrix;
use statrs::function::erf::erfc;

/// Direct evaluation of the unnormalized log quasi-posterior, written out term by term.
fn reference_target(state: &ColumnState, j: usize, data: &DataMatrix, h: &Hyperparameters) -> f64 {
    let p = data.p();
    let x = data.matrix();
    let s2 = h.sigma2[j];
    let mut rss = 0.0;
    for i in 0..data.n() {
        let mut fit = 0.0;
        let mut k = 0;
        for c in 0..p {
            if c != j {
                fit += x[(i, c)] * state.theta[k];
                k += 1;
            }
        }
        rss += (x[(i, j)] - fit).powi(2);
    }
    let (l1, l2) = (h.alpha * state.rho1 / s2, (1.0 - h.alpha) * state.rho2 / s2);
    let z = l1 / (2.0 * l2).sqrt();
    let c = (2.0 * std::f64::consts::PI / l2).sqrt() * (z * z).exp() * erfc(z);
    let s = state.delta.iter().filter(|d| **d).count() as f64;
    let q = state.q;
    let pu = (p as f64).powf(h.u);
    let mut lp = s * q.ln() + ((p - 1) as f64 - s + pu - 1.0) * (1.0 - q).ln() - s * c.ln();
    for t in &state.theta {
        lp -= l1 * t.abs() + 0.5 * l2 * t * t;
    }
    lp - 2.0 * (h.a2 - h.a1).ln() - rss / (2.0 * s2)
}

fn random_state(d: usize, mask: u32, vals: &[f64], q: f64, rho: (f64, f64)) -> ColumnState {
    let delta: Vec<bool> = (0..d).map(|k| mask >> k & 1 == 1).collect();
    let theta = (0..d)
        .map(|k| if delta[k] { vals[k] } else { 0.0 })
        .collect();
    ColumnState {
        delta,
        theta,
        q,
        rho1: rho.0,
        rho2: rho.1,
    }
}

#[test]
fn target_matches_direct_evaluation_on_tiny_instances() {
    for seed in 0..5 {
        let (data, hyper) = tiny_instance(seed);
        for mask in 0..8 {
            let st = random_state(3, mask, &[0.3, -1.2, 0.05], 0.2, (2.5, 7.0));
            for j in 0..4 {
                let a = log_target_col(&st, j, &data, &hyper).unwrap();
                let b = reference_target(&st, j, &data, &hyper);
                assert!((a - b).abs() <= 1e-10 * (1.0 + b.abs()), "{a} vs {b}");
            }
        }
    }
}

#[test]
fn empty_state_is_sum_of_trivial_terms() {
    let (data, hyper) = tiny_instance(0);
    let st = ColumnState::empty(3, 0.3, 1.0, 1.0);
    let lik = -data.column(1).iter().map(|v| v * v).sum::<f64>() / 2.0;
    let prior = (3.0 + 4f64.powf(1.5) - 1.0) * 0.7f64.ln() + 2.0 * (1.0f64 / (10.0 - 1e-5)).ln();
    let got = log_target_col(&st, 1, &data, &hyper).unwrap();
    assert!((got - lik - prior).abs() < 1e-10);
    assert!((log_prior_col(&st, 4, &hyper, 1.0).unwrap() - prior).abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig { failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn quasi_likelihood_is_nonpositive(
        vals in proptest::collection::vec(-3.0f64..3.0, 12),
        theta in proptest::collection::vec(-2.0f64..2.0, 2),
        s2 in 0.1f64..5.0,
    ) {
        let data = DataMatrix::new(DMatrix::from_vec(4, 3, vals)).unwrap();
        let v = log_quasi_likelihood_col(0, &theta, &data, s2).unwrap();
        prop_assert!(v <= 0.0);
    }

    #[test]
    fn quasi_likelihood_is_zero_on_exact_fit(a in -2.0f64..2.0, b in -2.0f64..2.0, seed in 0u64..50) {
        let (base, _) = tiny_instance(seed);
        let mut x = base.matrix().clone();
        let y = x.column(1) * a + x.column(2) * b;
        x.set_column(0, &y);
        let data = DataMatrix::new(x).unwrap();
        let v = log_quasi_likelihood_col(0, &[a, b, 0.0], &data, 1.0).unwrap();
        prop_assert!(v.abs() < 1e-20);
    }

    #[test]
    fn normalizer_decreases_in_lambda1(alpha in 0.05f64..=1.0, l1 in 0.01f64..50.0, l2 in 0.01f64..50.0, step in 0.01f64..5.0) {
        let a = elastic_net_log_normalizer(alpha, l1, l2).unwrap();
        let b = elastic_net_log_normalizer(alpha, l1 + step, l2).unwrap();
        prop_assert!(b < a);
    }

    #[test]
    fn target_is_finite_inside_support(
        mask in 0u32..8,
        vals in proptest::collection::vec(-5.0f64..5.0, 3),
        q in 0.001f64..0.999,
        r1 in 1e-5f64..10.0,
        r2 in 1e-5f64..10.0,
        alpha in 0.01f64..=1.0,
        seed in 0u64..5,
    ) {
        let (data, mut hyper) = tiny_instance(seed);
        hyper.alpha = alpha;
        let st = random_state(3, mask, &vals, q, (r1, r2));
        prop_assert!(log_target_col(&st, 0, &data, &hyper).unwrap().is_finite());
    }
}
