//! Per-column quasi-likelihood, spike-and-slab prior and full log-target.
//!
//! Column indices are 0-based. For column `j` the regression has `p - 1`
//! predictors, indexed locally; local index `k` refers to global column
//! [`global_index`](crate::matrix::global_index)`(j, k)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::DataMatrix;
use crate::special::{ln_erfcx, soft_threshold};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparameters {
    /// Elastic-net mixing weight in (0, 1].
    pub alpha: f64,
    /// Sparsity exponent of the `Beta(1, p^u)` prior on the inclusion probability.
    pub u: f64,
    /// Support of the uniform hyperprior on the slab scales.
    pub a1: f64,
    pub a2: f64,
    /// Per-column variance proxies.
    pub sigma2: Vec<f64>,
    /// Moreau-Yosida smoothing parameter in (0, 1/4].
    pub gamma: f64,
}

impl Hyperparameters {
    pub const DEFAULT_ALPHA: f64 = 0.9;
    pub const DEFAULT_U: f64 = 1.5;
    pub const DEFAULT_A1: f64 = 1e-5;
    pub const DEFAULT_GAMMA: f64 = 0.2;

    /// Defaults with `a2` derived from the data scale, see [`default_a2`].
    pub fn for_data(data: &DataMatrix, sigma2: Vec<f64>) -> Result<Self> {
        let a2 = default_a2(data, &sigma2)?;
        let h = Hyperparameters {
            alpha: Self::DEFAULT_ALPHA,
            u: Self::DEFAULT_U,
            a1: Self::DEFAULT_A1,
            a2,
            sigma2,
            gamma: Self::DEFAULT_GAMMA,
        };
        h.validate(data.p())?;
        Ok(h)
    }

    pub fn validate(&self, p: usize) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::invalid(format!(
                "alpha must lie in (0,1], got {}",
                self.alpha
            )));
        }
        if !(self.u > 1.0) {
            return Err(Error::invalid(format!("u must exceed 1, got {}", self.u)));
        }
        if !(self.a1 > 0.0 && self.a2 > self.a1 && self.a2.is_finite()) {
            return Err(Error::invalid(format!(
                "need 0 < a1 < a2, got a1={} a2={}",
                self.a1, self.a2
            )));
        }
        if !(self.gamma > 0.0 && self.gamma <= 0.25) {
            return Err(Error::invalid(format!(
                "gamma must lie in (0, 0.25], got {}",
                self.gamma
            )));
        }
        if self.sigma2.len() != p {
            return Err(Error::invalid(format!(
                "sigma2 has {} entries, expected {p}",
                self.sigma2.len()
            )));
        }
        if let Some((j, s)) = self
            .sigma2
            .iter()
            .enumerate()
            .find(|(_, s)| !(**s > 0.0 && s.is_finite()))
        {
            return Err(Error::invalid(format!("sigma2[{j}] = {s} is not positive")));
        }
        Ok(())
    }

    /// Exponent of `(1 - q)` in the target: `(p - 1) + p^u - 1`.
    pub fn beta_exponent(&self, p: usize) -> f64 {
        (p as f64 - 1.0) + (p as f64).powf(self.u) - 1.0
    }

    /// Log density of the uniform hyperprior on one slab scale.
    pub fn log_rho_density(&self, rho: f64) -> f64 {
        if rho < self.a1 || rho > self.a2 {
            f64::NEG_INFINITY
        } else {
            -(self.a2 - self.a1).ln()
        }
    }
}

/// Upper end of the slab-scale hyperprior: `4 sqrt(kappa_hat n ln p) max_j sigma2_j`
/// with `kappa_hat = max_j ||x_j||^2 / n`.
pub fn default_a2(data: &DataMatrix, sigma2: &[f64]) -> Result<f64> {
    let max_s2 = sigma2.iter().copied().fold(0.0, f64::max);
    let a2 = 4.0 * (data.kappa_hat() * data.n() as f64 * (data.p() as f64).ln()).sqrt() * max_s2;
    if !(a2 > Hyperparameters::DEFAULT_A1) {
        return Err(Error::invalid(format!("derived a2 = {a2} is not above a1")));
    }
    Ok(a2)
}

/// Per-column state of the chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnState {
    pub delta: Vec<bool>,
    pub theta: Vec<f64>,
    pub q: f64,
    pub rho1: f64,
    pub rho2: f64,
}

impl ColumnState {
    /// Empty model: no active coordinates.
    pub fn empty(dim: usize, q: f64, rho1: f64, rho2: f64) -> Self {
        ColumnState {
            delta: vec![false; dim],
            theta: vec![0.0; dim],
            q,
            rho1,
            rho2,
        }
    }

    pub fn active_count(&self) -> usize {
        self.delta.iter().filter(|d| **d).count()
    }

    /// Checks the structural invariants. The slab scales are not checked here;
    /// out-of-range values give zero prior density instead.
    pub fn check(&self) -> Result<()> {
        if self.delta.len() != self.theta.len() {
            return Err(Error::invalid("delta and theta lengths differ"));
        }
        for (k, (&d, &t)) in self.delta.iter().zip(&self.theta).enumerate() {
            if !t.is_finite() {
                return Err(Error::invalid(format!("theta[{k}] is not finite")));
            }
            if !d && t != 0.0 {
                return Err(Error::invalid(format!(
                    "theta[{k}] = {t} but delta[{k}] = 0"
                )));
            }
        }
        if !(self.q > 0.0 && self.q < 1.0) {
            return Err(Error::invalid(format!("q = {} outside (0,1)", self.q)));
        }
        Ok(())
    }
}

/// How the non-smooth l1 part of the slab enters the target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Penalty {
    Exact,
    /// Replace `lambda |t|` by its Moreau-Yosida envelope with parameter `gamma`.
    Smoothed {
        gamma: f64,
    },
}

/// Moreau-Yosida envelope of `t -> lambda |t|`:
/// `min_z lambda |z| + (z - t)^2 / (2 gamma)`.
pub fn l1_envelope(t: f64, lambda: f64, gamma: f64) -> f64 {
    let z = soft_threshold(t, lambda * gamma);
    lambda * z.abs() + (z - t) * (z - t) / (2.0 * gamma)
}

/// Derivative of [`l1_envelope`] in `t`.
pub fn l1_envelope_grad(t: f64, lambda: f64, gamma: f64) -> f64 {
    (t - soft_threshold(t, lambda * gamma)) / gamma
}

impl Penalty {
    #[inline]
    pub fn l1(&self, t: f64, lambda: f64) -> f64 {
        match *self {
            Penalty::Exact => lambda * t.abs(),
            Penalty::Smoothed { gamma } => l1_envelope(t, lambda, gamma),
        }
    }
}

/// `log C_alpha(lambda1, lambda2)`, the log normalizer of the elastic-net density
/// `exp(-alpha lambda1 |z| - (1 - alpha) lambda2 z^2 / 2)`.
pub fn elastic_net_log_normalizer(alpha: f64, lambda1: f64, lambda2: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::invalid(format!("alpha = {alpha} outside [0,1]")));
    }
    if !(lambda1 > 0.0) {
        return Err(Error::invalid(format!(
            "lambda1 = {lambda1} must be positive"
        )));
    }
    if alpha == 1.0 {
        return Ok(std::f64::consts::LN_2 - lambda1.ln());
    }
    if !(lambda2 > 0.0) {
        return Err(Error::invalid(format!(
            "lambda2 = {lambda2} must be positive when alpha < 1"
        )));
    }
    let a = (1.0 - alpha) * lambda2;
    Ok(0.5 * (LN_2PI - a.ln()) + ln_erfcx(alpha * lambda1 / (2.0 * a).sqrt()))
}

/// Log normalizer of the smoothed slab `exp(-e(t) - l2 t^2 / 2)`, where `e` is the
/// Moreau-Yosida envelope of `t -> l1 |t|` with parameter `gamma`.
pub fn smoothed_slab_log_normalizer(l1: f64, l2: f64, gamma: f64) -> Result<f64> {
    if !(l1 >= 0.0 && l2 >= 0.0 && gamma > 0.0) || (l1 == 0.0 && l2 == 0.0) {
        return Err(Error::invalid(
            "smoothed slab needs l1, l2 >= 0 (not both zero) and gamma > 0",
        ));
    }
    // quadratic piece on |t| <= l1 gamma
    let c = l1 * gamma;
    let a = 1.0 / gamma + l2;
    let inner = if c > 0.0 {
        0.5 * (std::f64::consts::PI / (2.0 * a)).ln()
            + statrs::function::erf::erf(c * (a / 2.0).sqrt()).ln()
    } else {
        f64::NEG_INFINITY
    };
    // linear piece l1 |t| - l1^2 gamma / 2 beyond it
    let outer = if l2 > 0.0 {
        -0.5 * l1 * l1 * gamma - 0.5 * l2 * c * c
            + 0.5 * (std::f64::consts::PI / (2.0 * l2)).ln()
            + ln_erfcx((l1 + l2 * c) / (2.0 * l2).sqrt())
    } else {
        -0.5 * l1 * l1 * gamma - l1.ln()
    };
    Ok(std::f64::consts::LN_2 + crate::special::log_add_exp(inner, outer))
}

/// Slab parameters at fixed `(rho1, rho2, sigma2)`.
#[derive(Debug, Clone, Copy)]
pub struct Slab {
    /// Weight on `|t|`: `alpha rho1 / sigma2`.
    pub l1: f64,
    /// Weight on `t^2 / 2`: `(1 - alpha) rho2 / sigma2`.
    pub l2: f64,
    /// Log normalizer of the slab under the penalty it was built for.
    pub log_norm: f64,
}

impl Slab {
    pub fn new(alpha: f64, rho1: f64, rho2: f64, sigma2: f64) -> Result<Self> {
        let (lam1, lam2) = (rho1 / sigma2, rho2 / sigma2);
        Ok(Slab {
            l1: alpha * lam1,
            l2: (1.0 - alpha) * lam2,
            log_norm: elastic_net_log_normalizer(alpha, lam1, lam2)?,
        })
    }

    /// As [`Slab::new`], normalized under `penalty` so that the smoothed slab is
    /// itself a probability density.
    pub fn with_penalty(
        alpha: f64,
        rho1: f64,
        rho2: f64,
        sigma2: f64,
        penalty: Penalty,
    ) -> Result<Self> {
        let mut slab = Slab::new(alpha, rho1, rho2, sigma2)?;
        if let Penalty::Smoothed { gamma } = penalty {
            slab.log_norm = smoothed_slab_log_normalizer(slab.l1, slab.l2, gamma)?;
        }
        Ok(slab)
    }

    /// Unnormalized log slab density at `t`.
    #[inline]
    pub fn log_kernel(&self, t: f64, penalty: Penalty) -> f64 {
        -penalty.l1(t, self.l1) - 0.5 * self.l2 * t * t
    }
}

/// `-||x_j - x^(j) theta||^2 / (2 sigma2_j)`.
pub fn log_quasi_likelihood_col(
    j: usize,
    theta: &[f64],
    data: &DataMatrix,
    sigma2_j: f64,
) -> Result<f64> {
    let p = data.p();
    if j >= p {
        return Err(Error::invalid(format!(
            "column {j} out of range for p = {p}"
        )));
    }
    if theta.len() != p - 1 {
        return Err(Error::invalid(format!(
            "theta has length {}, expected {}",
            theta.len(),
            p - 1
        )));
    }
    if !(sigma2_j > 0.0) {
        return Err(Error::invalid("sigma2 must be positive"));
    }
    let mut r: Vec<f64> = data.column(j).to_vec();
    for (k, &t) in theta.iter().enumerate() {
        if t != 0.0 {
            let col = data.column(crate::matrix::global_index(j, k));
            for (ri, xi) in r.iter_mut().zip(col) {
                *ri -= xi * t;
            }
        }
    }
    Ok(-r.iter().map(|v| v * v).sum::<f64>() / (2.0 * sigma2_j))
}

/// Log prior of the column state under the chosen penalty, up to constants
/// that do not depend on the state.
pub fn log_prior_with(
    state: &ColumnState,
    p: usize,
    hyper: &Hyperparameters,
    sigma2_j: f64,
    penalty: Penalty,
) -> Result<f64> {
    let log_hyper = hyper.log_rho_density(state.rho1) + hyper.log_rho_density(state.rho2);
    if log_hyper == f64::NEG_INFINITY {
        return Ok(f64::NEG_INFINITY);
    }
    let slab = Slab::with_penalty(hyper.alpha, state.rho1, state.rho2, sigma2_j, penalty)?;
    let s = state.active_count() as f64;
    let q = state.q;
    let mut lp =
        s * (q / (1.0 - q)).ln() + hyper.beta_exponent(p) * (1.0 - q).ln() - s * slab.log_norm;
    for (&d, &t) in state.delta.iter().zip(&state.theta) {
        if d {
            lp += slab.log_kernel(t, penalty);
        }
    }
    Ok(lp + log_hyper)
}

/// Log prior under the exact (non-smoothed) slab.
pub fn log_prior_col(
    state: &ColumnState,
    p: usize,
    hyper: &Hyperparameters,
    sigma2_j: f64,
) -> Result<f64> {
    log_prior_with(state, p, hyper, sigma2_j, Penalty::Exact)
}

/// Unnormalized log quasi-posterior of one column.
pub fn log_target_col(
    state: &ColumnState,
    j: usize,
    data: &DataMatrix,
    hyper: &Hyperparameters,
) -> Result<f64> {
    log_target_with(state, j, data, hyper, Penalty::Exact)
}

pub fn log_target_with(
    state: &ColumnState,
    j: usize,
    data: &DataMatrix,
    hyper: &Hyperparameters,
    penalty: Penalty,
) -> Result<f64> {
    state.check()?;
    let p = data.p();
    let sigma2_j = *hyper
        .sigma2
        .get(j)
        .ok_or_else(|| Error::invalid(format!("no sigma2 for column {j}")))?;
    Ok(log_quasi_likelihood_col(j, &state.theta, data, sigma2_j)?
        + log_prior_with(state, p, hyper, sigma2_j, penalty)?)
}
