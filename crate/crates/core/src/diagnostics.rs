//! Convergence diagnostics, recovery metrics and the theory quantities
//! (sparse and restricted eigenvalues, slab scale, sparsity bound, rate).

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::PrecisionMatrix;

/// Spectral density at frequency zero of a stationary sequence, estimated with a
/// Bartlett lag window. The bandwidth follows the AR(1) plug-in rule
/// `b = 1.1447 (a T)^(1/3)`, `a = 4 r^2 / ((1 - r)^2 (1 + r)^2)`.
pub fn spectral_variance_at_zero(x: &[f64]) -> f64 {
    let n = x.len();
    let nf = n as f64;
    let mean = x.iter().sum::<f64>() / nf;
    let autocov = |lag: usize| -> f64 {
        x[..n - lag]
            .iter()
            .zip(&x[lag..])
            .map(|(a, b)| (a - mean) * (b - mean))
            .sum::<f64>()
            / nf
    };
    let g0 = autocov(0);
    if g0 == 0.0 {
        return 0.0;
    }
    let r = (autocov(1) / g0).clamp(-0.99, 0.99);
    let a = 4.0 * r * r / ((1.0 - r).powi(2) * (1.0 + r).powi(2));
    let bandwidth = (1.1447 * (a * nf).cbrt()).clamp(1.0, nf / 2.0);
    let mut s = g0;
    let mut lag = 1;
    while (lag as f64) < bandwidth {
        s += 2.0 * (1.0 - lag as f64 / bandwidth) * autocov(lag);
        lag += 1;
    }
    s.max(0.0)
}

/// Geweke's two-window z-score: first 10% against last 50% of the trace.
pub fn geweke_z(trace: &[f64]) -> Result<f64> {
    let n = trace.len();
    if n < 100 {
        return Err(Error::invalid(format!(
            "trace of length {n} is shorter than 100"
        )));
    }
    let na = n / 10;
    let nb = n / 2;
    let (a, b) = (&trace[..na], &trace[n - nb..]);
    let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    let var_a = spectral_variance_at_zero(a) / na as f64;
    let var_b = spectral_variance_at_zero(b) / nb as f64;
    let denom = (var_a + var_b).sqrt();
    if !(denom > 0.0) {
        return Err(Error::DegenerateTrace(
            "zero variance in a Geweke window".into(),
        ));
    }
    Ok((mean(a) - mean(b)) / denom)
}

/// Recovery metrics. `None` marks an undefined ratio (empty denominator).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub rel_error: f64,
    pub sensitivity: Option<f64>,
    pub precision: Option<f64>,
}

fn sign(x: f64) -> i8 {
    if x > 0.0 {
        1
    } else if x < 0.0 {
        -1
    } else {
        0
    }
}

/// Relative Frobenius error, sign-aware sensitivity and precision over `i < j`.
pub fn metrics(estimate: &PrecisionMatrix, truth: &PrecisionMatrix) -> Result<Metrics> {
    let p = truth.p();
    if estimate.p() != p {
        return Err(Error::invalid(format!(
            "dimension mismatch: {} vs {p}",
            estimate.p()
        )));
    }
    let rel_error = (estimate.entries() - truth.entries()).norm() / truth.entries().norm();
    let (mut true_nz, mut true_hit, mut est_nz, mut est_hit) = (0usize, 0usize, 0usize, 0usize);
    for j in 0..p {
        for i in 0..j {
            let (e, t) = (estimate.get(i, j), truth.get(i, j));
            let same = sign(e) == sign(t);
            if t != 0.0 {
                true_nz += 1;
                true_hit += same as usize;
            }
            if e != 0.0 {
                est_nz += 1;
                est_hit += same as usize;
            }
        }
    }
    Ok(Metrics {
        rel_error,
        sensitivity: (true_nz > 0).then(|| true_hit as f64 / true_nz as f64),
        precision: (est_nz > 0).then(|| est_hit as f64 / est_nz as f64),
    })
}

/// Upper limit on the number of supports enumerated by the eigenvalue routines.
pub const SUPPORT_BUDGET: f64 = 1e6;

fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Visit every `k`-subset of `0..n` in lexicographic order.
fn for_each_subset(n: usize, k: usize, mut f: impl FnMut(&[usize])) {
    if k == 0 || k > n {
        return;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        f(&idx);
        let mut i = k;
        while i > 0 && idx[i - 1] == n - k + i - 1 {
            i -= 1;
        }
        if i == 0 {
            return;
        }
        idx[i - 1] += 1;
        for t in i..k {
            idx[t] = idx[t - 1] + 1;
        }
    }
}

fn principal(m: &DMatrix<f64>, support: &[usize]) -> DMatrix<f64> {
    let s = support.len();
    DMatrix::from_fn(s, s, |a, b| m[(support[a], support[b])])
}

fn check_square(m: &DMatrix<f64>) -> Result<usize> {
    if m.nrows() != m.ncols() || m.nrows() == 0 {
        return Err(Error::invalid("matrix must be square and non-empty"));
    }
    Ok(m.nrows())
}

/// Extreme Rayleigh quotients over `s`-sparse vectors: `(min, max)` of the
/// extreme eigenvalues of all `s x s` principal submatrices.
pub fn sparse_eigen_bounds(m: &DMatrix<f64>, s: usize) -> Result<(f64, f64)> {
    let p = check_square(m)?;
    if s == 0 {
        return Err(Error::invalid("sparsity level must be at least 1"));
    }
    let s = s.min(p);
    if s == 1 {
        let d = m.diagonal();
        return Ok((d.min(), d.max()));
    }
    if s == p {
        let ev = m.clone().symmetric_eigenvalues();
        return Ok((ev.min(), ev.max()));
    }
    let count = binomial(p, s);
    if count > SUPPORT_BUDGET {
        return Err(Error::BudgetExceeded(format!(
            "C({p},{s}) = {count:.3e} supports"
        )));
    }
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for_each_subset(p, s, |sup| {
        let ev = principal(m, sup).symmetric_eigenvalues();
        lo = lo.min(ev.min());
        hi = hi.max(ev.max());
    });
    Ok((lo, hi))
}

/// Cone used by the restricted eigenvalue: `sum_{k not in S} |u_k| <= 7 sum_{k in S} |u_k|`.
const CONE_FACTOR: f64 = 7.0;
const RESTARTS: usize = 20;
const PG_ITERS: usize = 200;
const RESTRICTED_COST_BUDGET: f64 = 2e10;

fn in_cone(u: &DVector<f64>, mask: &[bool]) -> bool {
    let (mut on, mut off) = (0.0, 0.0);
    for (v, &m) in u.iter().zip(mask) {
        if m {
            on += v.abs();
        } else {
            off += v.abs();
        }
    }
    off <= CONE_FACTOR * on * (1.0 + 1e-12)
}

/// Shrink the off-support part until the cone constraint holds, then normalize.
fn retract(u: &mut DVector<f64>, mask: &[bool]) {
    let (mut on, mut off) = (0.0, 0.0);
    for (v, &m) in u.iter().zip(mask) {
        if m {
            on += v.abs();
        } else {
            off += v.abs();
        }
    }
    if off > CONE_FACTOR * on {
        let f = CONE_FACTOR * on / off;
        for (v, &m) in u.iter_mut().zip(mask) {
            if !m {
                *v *= f;
            }
        }
    }
    let n = u.norm();
    if n > 0.0 {
        *u /= n;
    }
}

fn rayleigh(m: &DMatrix<f64>, u: &DVector<f64>) -> f64 {
    (u.transpose() * m * u)[(0, 0)] / u.norm_squared()
}

/// Minimum Rayleigh quotient over the cone by exhaustive angular grid, for p <= 3.
fn grid_restricted(m: &DMatrix<f64>, s_star: usize) -> f64 {
    let p = m.nrows();
    let s = s_star.min(p);
    let mut masks = Vec::new();
    for_each_subset(p, s, |sup| {
        let mut mask = vec![false; p];
        for &i in sup {
            mask[i] = true;
        }
        masks.push(mask);
    });
    let feasible = |u: &DVector<f64>| masks.iter().any(|mask| in_cone(u, mask));
    let mut best = f64::INFINITY;
    match p {
        1 => best = m[(0, 0)],
        2 => {
            let steps = 200_000;
            for i in 0..steps {
                let a = std::f64::consts::PI * i as f64 / steps as f64;
                let u = DVector::from_vec(vec![a.cos(), a.sin()]);
                if feasible(&u) {
                    best = best.min(rayleigh(m, &u));
                }
            }
        }
        _ => {
            let steps = 600;
            for i in 0..=steps {
                let th = std::f64::consts::PI * i as f64 / steps as f64;
                for k in 0..2 * steps {
                    let ph = std::f64::consts::PI * k as f64 / steps as f64;
                    let u =
                        DVector::from_vec(vec![th.sin() * ph.cos(), th.sin() * ph.sin(), th.cos()]);
                    if feasible(&u) {
                        best = best.min(rayleigh(m, &u));
                    }
                }
            }
        }
    }
    best
}

/// Restricted eigenvalue over supports of size `s_star`.
///
/// For every support the minimum is sought by projected gradient descent on the
/// Rayleigh quotient from the support's own minimal eigenvector plus
/// [`RESTARTS`] random starts, so the result never exceeds the `s_star`-sparse
/// lower eigenvalue. Returns `(value, exact)`; `exact` is true only for `p <= 3`,
/// where a dense angular grid is also searched.
pub fn restricted_eigen(m: &DMatrix<f64>, s_star: usize, seed: u64) -> Result<(f64, bool)> {
    let p = check_square(m)?;
    if s_star == 0 {
        return Err(Error::invalid("s_star must be at least 1"));
    }
    let s = s_star.min(p);
    let count = binomial(p, s);
    if count > SUPPORT_BUDGET
        || count * (RESTARTS * PG_ITERS) as f64 * (p * p) as f64 > RESTRICTED_COST_BUDGET
    {
        return Err(Error::BudgetExceeded(format!(
            "restricted eigenvalue over C({p},{s}) = {count:.3e} supports"
        )));
    }
    let lmax = m
        .clone()
        .symmetric_eigenvalues()
        .max()
        .max(f64::MIN_POSITIVE);
    let step = 0.5 / lmax;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best = f64::INFINITY;
    for_each_subset(p, s, |sup| {
        let mut mask = vec![false; p];
        for &i in sup {
            mask[i] = true;
        }
        let eig = principal(m, sup).symmetric_eigen();
        let imin = eig.eigenvalues.imin();
        best = best.min(eig.eigenvalues[imin]);
        let mut starts = Vec::with_capacity(RESTARTS + 1);
        let mut u0 = DVector::zeros(p);
        for (a, &i) in sup.iter().enumerate() {
            u0[i] = eig.eigenvectors[(a, imin)];
        }
        starts.push(u0);
        for _ in 0..RESTARTS {
            let mut u = DVector::from_fn(p, |i, _| {
                let z: f64 = rng.sample(StandardNormal);
                if mask[i] {
                    z
                } else {
                    0.3 * z
                }
            });
            retract(&mut u, &mask);
            starts.push(u);
        }
        for mut u in starts {
            retract(&mut u, &mask);
            for _ in 0..PG_ITERS {
                let r = rayleigh(m, &u);
                best = best.min(r);
                let grad = m * &u - &u * r;
                u -= grad * step;
                retract(&mut u, &mask);
            }
            best = best.min(rayleigh(m, &u));
        }
    });
    if p <= 3 {
        Ok((best.min(grid_restricted(m, s)), true))
    } else {
        Ok((best, false))
    }
}

/// Prior constants `c1..c4` of the Beta-Bernoulli sparsity prior.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorConstants {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
}

impl PriorConstants {
    pub fn for_u(u: f64) -> Self {
        PriorConstants {
            c1: 0.5,
            c2: 1.0,
            c3: u,
            c4: u - 1.0,
        }
    }
}

/// Theoretical slab scale `sqrt(54 kappa_tilde(1) / theta_jj * n * ln p)`.
pub fn theory_rho(kappa_tilde_1: f64, theta_jj: f64, n: usize, log_p: f64) -> f64 {
    (54.0 * kappa_tilde_1 / theta_jj * n as f64 * log_p).sqrt()
}

/// Sparsity bound for column `j`.
#[allow(clippy::too_many_arguments)]
pub fn zeta_j(
    s_star_j: usize,
    sigma2_theta_jj: f64,
    p: usize,
    kappa_tilde_1: f64,
    kappa_restricted: f64,
    kappa_tilde_s_star: f64,
    c4: f64,
) -> f64 {
    let lp = (p as f64).ln();
    let s = s_star_j as f64;
    let inner = (4.0 * std::f64::consts::E * p as f64).ln() / lp
        + 6912.0 / sigma2_theta_jj * kappa_tilde_1 / kappa_restricted
        + sigma2_theta_jj / (24.0 * lp * lp) * kappa_tilde_s_star / kappa_tilde_1;
    4.0 / c4 + s + 2.0 / c4 * inner * s
}

/// Sample-size and dimension conditions, with the unnamed universal constants set to 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSizeChecks {
    pub universal_constants_assumed: f64,
    pub sparsity_bound_sample_size: bool,
    pub rate_sample_size_condition_number: bool,
    pub rate_sample_size_sparsity: bool,
    pub dimension_large_enough: bool,
    pub prior_dimension_condition: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoryReport {
    pub p: usize,
    pub n: usize,
    pub kappa_underline: f64,
    pub kappa_lower: BTreeMap<usize, f64>,
    pub kappa_upper: BTreeMap<usize, f64>,
    pub rho: Vec<f64>,
    pub zeta: Vec<f64>,
    pub s_star_j: Vec<usize>,
    pub s_star: usize,
    pub s_bar: usize,
    pub epsilon: f64,
    #[serde(rename = "M0")]
    pub m0: f64,
    pub constants: PriorConstants,
    pub conditions: SampleSizeChecks,
    /// `true` where the reported value is exact, `false` where it is heuristic.
    pub exact_flags: BTreeMap<String, bool>,
}

/// Evaluate the computable parts of the contraction theory at a true precision matrix.
pub fn theory_quantities(
    truth: &PrecisionMatrix,
    sigma2: &[f64],
    n: usize,
    u: f64,
) -> Result<TheoryReport> {
    let p = truth.p();
    if sigma2.len() != p {
        return Err(Error::invalid(format!(
            "sigma2 has {} entries, expected {p}",
            sigma2.len()
        )));
    }
    if p < 2 || n == 0 {
        return Err(Error::invalid("need p >= 2 and n >= 1"));
    }
    let m = truth.entries();
    let s_star_j: Vec<usize> = (0..p)
        .map(|j| (0..p).filter(|&k| k != j && m[(k, j)] != 0.0).count())
        .collect();
    let s_star = s_star_j.iter().copied().max().unwrap_or(0);
    let consts = PriorConstants::for_u(u);
    let mut exact = BTreeMap::new();

    let mut kappa_lower = BTreeMap::new();
    let mut kappa_upper = BTreeMap::new();
    for s in 1..=s_star.max(1).min(p) {
        let (lo, hi) = sparse_eigen_bounds(m, s)?;
        kappa_lower.insert(s, lo);
        kappa_upper.insert(s, hi);
    }
    let kt1 = kappa_upper[&1];
    let kts = kappa_upper[&s_star.max(1).min(p)];
    let (kappa_underline, re_exact) = restricted_eigen(m, s_star.max(1), 0x5eed)?;
    exact.insert("kappa_underline".to_string(), re_exact);
    exact.insert("kappa_lower".to_string(), true);
    exact.insert("kappa_upper".to_string(), true);

    let log_p = (p as f64).ln();
    let rho: Vec<f64> = (0..p)
        .map(|j| theory_rho(kt1, m[(j, j)], n, log_p))
        .collect();
    let zeta: Vec<f64> = (0..p)
        .map(|j| {
            zeta_j(
                s_star_j[j],
                sigma2[j] * m[(j, j)],
                p,
                kt1,
                kappa_underline,
                kts,
                consts.c4,
            )
        })
        .collect();
    let s_bar_real = (0..p)
        .map(|j| {
            if s_star_j[j] > 0 {
                s_star_j[j] as f64 + zeta[j]
            } else {
                1.0
            }
        })
        .fold(0.0, f64::max);
    let s_bar = s_bar_real.ceil() as usize;
    let s_eval = s_bar.min(p);
    let k_sbar = match kappa_lower.get(&s_eval) {
        Some(v) => *v,
        None => {
            let (lo, hi) = sparse_eigen_bounds(m, s_eval)?;
            kappa_lower.insert(s_eval, lo);
            kappa_upper.insert(s_eval, hi);
            lo
        }
    };
    let epsilon =
        12.0 * 6f64.sqrt() * kt1.sqrt() / k_sbar * (s_bar as f64 * log_p / n as f64).sqrt();
    let max_ratio = (0..p).map(|j| sigma2[j] * m[(j, j)]).fold(0.0, f64::max);
    let m0 = f64::max(
        96.0,
        (4.0 + consts.c4 * (2.0 + consts.c3) / 2.0) * max_ratio,
    );
    exact.insert("rho".to_string(), true);
    exact.insert("zeta".to_string(), re_exact);
    exact.insert("epsilon".to_string(), true);
    exact.insert("M0".to_string(), true);
    exact.insert("sample_size_conditions".to_string(), false);

    let nf = n as f64;
    let ss = s_star as f64;
    let cond = kt1 / kappa_underline;
    let conditions = SampleSizeChecks {
        universal_constants_assumed: 1.0,
        sparsity_bound_sample_size: nf >= ss * (1.0 + cond) * log_p,
        rate_sample_size_condition_number: nf >= ss * cond * log_p,
        rate_sample_size_sparsity: nf >= s_bar as f64 * log_p,
        dimension_large_enough: p as f64 >= f64::max(24.0 * std::f64::consts::E, 2.0 / consts.c1),
        prior_dimension_condition: (p as f64).powf(consts.c4)
            >= 8.0 * consts.c2 * f64::max(1.0, 2.0 * consts.c2),
    };

    Ok(TheoryReport {
        p,
        n,
        kappa_underline,
        kappa_lower,
        kappa_upper,
        rho,
        zeta,
        s_star_j,
        s_star,
        s_bar,
        epsilon,
        m0,
        constants: consts,
        conditions,
        exact_flags: exact,
    })
}
