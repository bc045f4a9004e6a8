//! MCMC kernels for the per-column quasi-posterior and the chain driver.
//!
//! Two kernels are provided:
//!
//! * [`KernelKind::ExactRJ`] targets the exact spike-and-slab posterior. Inclusion
//!   indicators move by birth/death proposals whose birth density is a Gaussian
//!   centred at the coordinatewise least-squares value; active coefficients move
//!   by componentwise random-walk Metropolis.
//! * [`KernelKind::MoreauYosida`] targets the density in which the `l1` part of
//!   the slab is replaced by its Moreau-Yosida envelope with parameter `gamma`.
//!   Active coefficients then move by componentwise MALA on the smooth envelope
//!   density; indicators move by the same birth/death proposals, accepted against
//!   the smoothed density. As `gamma -> 0` the target converges to the exact one.
//!
//! Both kernels maintain `c = X^(j)' r` and `||r||^2` for the current residual
//! `r`, computed from the shared Gram matrix, so evaluating a single-coordinate
//! move is O(1) and applying it is O(p).

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::diagnostics::geweke_z;
use crate::error::{Error, Result};
use crate::matrix::{global_index, DataMatrix, Gram};
use crate::model::{l1_envelope_grad, ColumnState, Hyperparameters, Penalty, Slab};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_7;
const ADAPT_BATCH: usize = 50;
const TARGET_RW: f64 = 0.44;
const TARGET_MALA: f64 = 0.574;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum KernelKind {
    ExactRJ,
    MoreauYosida,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub n_iterations: usize,
    pub burn_in: usize,
    pub seed: u64,
    pub kernel: KernelKind,
    pub thin: usize,
    /// Multiplier of the per-coordinate random-walk scale `sigma_j / ||x_k||`.
    pub rw_scale: f64,
    /// Tune proposal scales during burn-in; scales are frozen afterwards.
    pub adapt: bool,
    /// Hold `(rho1, rho2)` fixed instead of sampling them.
    pub fixed_rho: Option<(f64, f64)>,
}

impl Default for ChainConfig {
    fn default() -> Self {
        ChainConfig {
            n_iterations: 50_000,
            burn_in: 10_000,
            seed: 0,
            kernel: KernelKind::ExactRJ,
            thin: 1,
            rw_scale: 2.4,
            adapt: true,
            fixed_rho: None,
        }
    }
}

impl ChainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_iterations == 0 || self.thin == 0 {
            return Err(Error::invalid("n_iterations and thin must be positive"));
        }
        if self.burn_in >= self.n_iterations {
            return Err(Error::invalid(format!(
                "burn_in ({}) must be below n_iterations ({})",
                self.burn_in, self.n_iterations
            )));
        }
        if !(self.rw_scale > 0.0 && self.rw_scale.is_finite()) {
            return Err(Error::invalid("rw_scale must be positive"));
        }
        Ok(())
    }
}

/// Posterior summaries of one column chain over the retained samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainSummary {
    pub column: usize,
    pub n_retained: usize,
    pub inclusion_freq: Vec<f64>,
    /// Unconditional means: samples with the coordinate excluded count as zero.
    pub theta_mean: Vec<f64>,
    pub theta_median: Vec<f64>,
    pub theta_q025: Vec<f64>,
    pub theta_q975: Vec<f64>,
    /// Mean and variance of the negative pseudo-log-likelihood trace.
    pub pseudo_loglik_trace_stats: (f64, f64),
    /// `None` when the trace is constant or too short for the test.
    pub geweke_z: Option<f64>,
    pub acceptance_rates: BTreeMap<String, f64>,
}

/// Result of one Metropolis-Hastings move.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MoveOutcome {
    pub accept_prob: f64,
    pub accepted: bool,
}

impl MoveOutcome {
    fn decide<R: Rng + ?Sized>(log_ratio: f64, rng: &mut R) -> Self {
        let accept_prob = if log_ratio >= 0.0 {
            1.0
        } else {
            log_ratio.exp()
        };
        let u: f64 = rng.random();
        MoveOutcome {
            accept_prob,
            accepted: u < accept_prob,
        }
    }

    fn rejected() -> Self {
        MoveOutcome {
            accept_prob: 0.0,
            accepted: false,
        }
    }
}

/// Draw `q ~ Beta(1 + |delta|, p^u + (p - 1) - |delta|)`.
pub fn gibbs_update_q<R: Rng + ?Sized>(delta: &[bool], p: usize, u: f64, rng: &mut R) -> f64 {
    let s = delta.iter().filter(|d| **d).count() as f64;
    let a = 1.0 + s;
    let b = (p as f64).powf(u) + (p as f64 - 1.0) - s;
    let q: f64 = Beta::new(a, b)
        .expect("beta parameters are positive")
        .sample(rng);
    q.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON)
}

#[inline]
fn log_normal_pdf(x: f64, mean: f64, var: f64) -> f64 {
    let d = x - mean;
    -LN_SQRT_2PI - 0.5 * var.ln() - d * d / (2.0 * var)
}

/// Reflect `x` into `[lo, hi]`.
pub fn reflect(mut x: f64, lo: f64, hi: f64) -> f64 {
    let width = hi - lo;
    if width <= 0.0 {
        return lo;
    }
    // fold into one period of length 2 * width
    let period = 2.0 * width;
    x = (x - lo).rem_euclid(period);
    if x > width {
        x = period - x;
    }
    lo + x
}

#[derive(Debug, Clone, Copy, Default)]
struct Counter {
    proposed: u64,
    accepted: u64,
}

impl Counter {
    fn record(&mut self, accepted: bool) {
        self.proposed += 1;
        self.accepted += accepted as u64;
    }

    fn rate(&self) -> Option<f64> {
        (self.proposed > 0).then(|| self.accepted as f64 / self.proposed as f64)
    }
}

#[derive(Debug, Clone, Default)]
struct MoveStats {
    birth: Counter,
    death: Counter,
    within: Counter,
    rho: Counter,
}

/// One column's sampler: state plus the sufficient statistics of its residual.
#[derive(Debug, Clone)]
pub struct ColumnChain<'a> {
    j: usize,
    p: usize,
    gram: &'a Gram,
    hyper: &'a Hyperparameters,
    sigma2: f64,
    penalty: Penalty,
    state: ColumnState,
    slab: Slab,
    /// `c[k] = x_k' r` for local predictor `k`.
    c: Vec<f64>,
    rss: f64,
    rw_scale: Vec<f64>,
    rw_batch: Vec<Counter>,
    mala_eps: f64,
    mala_batch: Counter,
    rho_step: [f64; 2],
    rho_batch: [Counter; 2],
    fixed_rho: bool,
    stats: MoveStats,
}

impl<'a> ColumnChain<'a> {
    pub fn new(
        j: usize,
        gram: &'a Gram,
        hyper: &'a Hyperparameters,
        penalty: Penalty,
        state: ColumnState,
        rw_multiplier: f64,
    ) -> Result<Self> {
        let p = gram.p();
        if j >= p {
            return Err(Error::invalid(format!(
                "column {j} out of range for p = {p}"
            )));
        }
        hyper.validate(p)?;
        if let Penalty::Smoothed { gamma } = penalty {
            if !(gamma > 0.0 && gamma <= 0.25) {
                return Err(Error::invalid(format!(
                    "gamma must lie in (0, 0.25], got {gamma}"
                )));
            }
        }
        state.check()?;
        if state.delta.len() != p - 1 {
            return Err(Error::invalid(format!(
                "state has dimension {}, expected {}",
                state.delta.len(),
                p - 1
            )));
        }
        let sigma2 = hyper.sigma2[j];
        let slab = Slab::with_penalty(hyper.alpha, state.rho1, state.rho2, sigma2, penalty)?;
        let rw_scale = (0..p - 1)
            .map(|k| {
                let g = global_index(j, k);
                let norm2 = gram.get(g, g);
                if norm2 > 0.0 {
                    rw_multiplier * (sigma2 / norm2).sqrt()
                } else {
                    rw_multiplier * sigma2.sqrt()
                }
            })
            .collect();
        let span = hyper.a2 - hyper.a1;
        let mut chain = ColumnChain {
            j,
            p,
            gram,
            hyper,
            sigma2,
            penalty,
            state,
            slab,
            c: vec![0.0; p - 1],
            rss: 0.0,
            rw_scale,
            rw_batch: vec![Counter::default(); p - 1],
            mala_eps: 1.0,
            mala_batch: Counter::default(),
            rho_step: [0.25 * span; 2],
            rho_batch: [Counter::default(); 2],
            fixed_rho: false,
            stats: MoveStats::default(),
        };
        chain.refresh_residual();
        Ok(chain)
    }

    pub fn state(&self) -> &ColumnState {
        &self.state
    }

    pub fn into_state(self) -> ColumnState {
        self.state
    }

    /// Negative pseudo-log-likelihood `||r||^2 / (2 sigma2)` of the current state.
    pub fn neg_pseudo_loglik(&self) -> f64 {
        self.rss / (2.0 * self.sigma2)
    }

    /// Recompute `c` and `||r||^2` from scratch to shed accumulated rounding.
    pub fn refresh_residual(&mut self) {
        let j = self.j;
        let yy = self.gram.get(j, j);
        let gj = self.gram.column(j);
        for k in 0..self.p - 1 {
            self.c[k] = gj[global_index(j, k)];
        }
        let mut rss = yy;
        for k in 0..self.p - 1 {
            if self.state.delta[k] {
                let t = self.state.theta[k];
                let g = global_index(j, k);
                rss -= 2.0 * t * gj[g];
                let col = self.gram.column(g);
                for l in 0..self.p - 1 {
                    self.c[l] -= col[global_index(j, l)] * t;
                }
            }
        }
        // rss = yy - 2 theta'xy + theta'G theta, and theta'G theta = theta'(xy - c)
        for k in 0..self.p - 1 {
            if self.state.delta[k] {
                rss += self.state.theta[k] * (gj[global_index(j, k)] - self.c[k]);
            }
        }
        self.rss = rss.max(0.0);
    }

    /// Move coordinate `k` by `step`, updating the residual statistics.
    fn shift(&mut self, k: usize, step: f64) {
        let g = global_index(self.j, k);
        let gkk = self.gram.get(g, g);
        self.rss = (self.rss - 2.0 * step * self.c[k] + step * step * gkk).max(0.0);
        let col = self.gram.column(g);
        let j = self.j;
        for (i, &gi) in col.iter().enumerate() {
            if i == j {
                continue;
            }
            let l = if i < j { i } else { i - 1 };
            self.c[l] -= gi * step;
        }
        self.state.theta[k] += step;
    }

    pub fn update_q<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        self.state.q = gibbs_update_q(&self.state.delta, self.p, self.hyper.u, rng);
    }

    /// Log of the slab-scale full conditional at `(rho1, rho2)`, up to a constant.
    pub fn rho_log_target(&self, rho1: f64, rho2: f64) -> f64 {
        let h = self.hyper;
        if !(h.a1..=h.a2).contains(&rho1) || !(h.a1..=h.a2).contains(&rho2) {
            return f64::NEG_INFINITY;
        }
        let slab = match Slab::with_penalty(h.alpha, rho1, rho2, self.sigma2, self.penalty) {
            Ok(s) => s,
            Err(_) => return f64::NEG_INFINITY,
        };
        let mut lp = 0.0;
        for (&d, &t) in self.state.delta.iter().zip(&self.state.theta) {
            if d {
                lp += slab.log_kernel(t, self.penalty) - slab.log_norm;
            }
        }
        lp
    }

    fn set_rho(&mut self, rho1: f64, rho2: f64) {
        self.state.rho1 = rho1;
        self.state.rho2 = rho2;
        self.slab = Slab::with_penalty(self.hyper.alpha, rho1, rho2, self.sigma2, self.penalty)
            .expect("rho inside hyperprior support");
    }

    /// Acceptance of a proposed `(rho1, rho2)` against the current one, without
    /// reflection: proposals outside `[a1, a2]` get probability zero.
    pub fn rho_accept_prob(&self, rho1: f64, rho2: f64) -> f64 {
        let cur = self.rho_log_target(self.state.rho1, self.state.rho2);
        let new = self.rho_log_target(rho1, rho2);
        if new == f64::NEG_INFINITY {
            return 0.0;
        }
        (new - cur).min(0.0).exp()
    }

    /// Random-walk Metropolis on each slab scale in turn, reflected into `[a1, a2]`.
    pub fn update_rho<R: Rng + ?Sized>(&mut self, rng: &mut R) -> [MoveOutcome; 2] {
        let mut out = [MoveOutcome::rejected(); 2];
        if self.fixed_rho {
            return out;
        }
        let (lo, hi) = (self.hyper.a1, self.hyper.a2);
        let current = self.rho_log_target(self.state.rho1, self.state.rho2);
        let mut current = current;
        for (i, slot) in out.iter_mut().enumerate() {
            let z: f64 = rng.sample(StandardNormal);
            let (mut r1, mut r2) = (self.state.rho1, self.state.rho2);
            if i == 0 {
                r1 = reflect(r1 + self.rho_step[0] * z, lo, hi);
            } else {
                r2 = reflect(r2 + self.rho_step[1] * z, lo, hi);
            }
            let proposed = self.rho_log_target(r1, r2);
            let m = MoveOutcome::decide(proposed - current, rng);
            if m.accepted {
                self.set_rho(r1, r2);
                current = proposed;
            }
            self.rho_batch[i].record(m.accepted);
            self.stats.rho.record(m.accepted);
            *slot = m;
        }
        out
    }

    /// Birth/death proposal flipping the indicator of local coordinate `k`.
    pub fn rj_update<R: Rng + ?Sized>(&mut self, k: usize, rng: &mut R) -> MoveOutcome {
        let g = global_index(self.j, k);
        let gkk = self.gram.get(g, g);
        if gkk <= 0.0 {
            return MoveOutcome::rejected();
        }
        let s2 = self.sigma2;
        let var = s2 / gkk;
        let q = self.state.q;
        let log_odds = (q / (1.0 - q)).ln() - self.slab.log_norm;
        if !self.state.delta[k] {
            let center = self.c[k] / gkk;
            let z: f64 = rng.sample(StandardNormal);
            let t = center + var.sqrt() * z;
            let drss = -2.0 * t * self.c[k] + t * t * gkk;
            let log_ratio = -drss / (2.0 * s2) + log_odds + self.slab.log_kernel(t, self.penalty)
                - log_normal_pdf(t, center, var);
            let m = MoveOutcome::decide(log_ratio, rng);
            if m.accepted {
                self.state.delta[k] = true;
                self.shift(k, t);
            }
            self.stats.birth.record(m.accepted);
            m
        } else {
            let t = self.state.theta[k];
            let center = (self.c[k] + gkk * t) / gkk;
            let drss = 2.0 * t * self.c[k] + t * t * gkk;
            let log_ratio = -drss / (2.0 * s2) - log_odds - self.slab.log_kernel(t, self.penalty)
                + log_normal_pdf(t, center, var);
            let m = MoveOutcome::decide(log_ratio, rng);
            if m.accepted {
                self.shift(k, -t);
                self.state.theta[k] = 0.0;
                self.state.delta[k] = false;
            }
            self.stats.death.record(m.accepted);
            m
        }
    }

    /// Componentwise random-walk Metropolis on the active coefficients.
    pub fn update_theta_within<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let s2 = self.sigma2;
        for k in 0..self.p - 1 {
            if !self.state.delta[k] {
                continue;
            }
            let g = global_index(self.j, k);
            let gkk = self.gram.get(g, g);
            let t = self.state.theta[k];
            let z: f64 = rng.sample(StandardNormal);
            let step = self.rw_scale[k] * z;
            let t_new = t + step;
            let drss = -2.0 * step * self.c[k] + step * step * gkk;
            let log_ratio = -drss / (2.0 * s2) + self.slab.log_kernel(t_new, self.penalty)
                - self.slab.log_kernel(t, self.penalty);
            let m = MoveOutcome::decide(log_ratio, rng);
            if m.accepted {
                self.shift(k, step);
            }
            self.rw_batch[k].record(m.accepted);
            self.stats.within.record(m.accepted);
        }
    }

    fn envelope_gradient(&self, t: f64, ck: f64, gamma: f64) -> f64 {
        ck / self.sigma2 - self.slab.l2 * t - l1_envelope_grad(t, self.slab.l1, gamma)
    }

    /// Componentwise MALA on the active coefficients under the Moreau-Yosida
    /// smoothed slab. Requires a smoothed penalty.
    pub fn update_theta_mala<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<()> {
        let gamma = match self.penalty {
            Penalty::Smoothed { gamma } => gamma,
            Penalty::Exact => return Err(Error::invalid("MALA step needs a smoothed penalty")),
        };
        let s2 = self.sigma2;
        for k in 0..self.p - 1 {
            if !self.state.delta[k] {
                continue;
            }
            let g = global_index(self.j, k);
            let gkk = self.gram.get(g, g);
            let h = self.mala_eps / (gkk / s2 + self.slab.l2 + 1.0 / gamma);
            let t = self.state.theta[k];
            let ck = self.c[k];
            let fwd_mean = t + 0.5 * h * self.envelope_gradient(t, ck, gamma);
            let z: f64 = rng.sample(StandardNormal);
            let t_new = fwd_mean + h.sqrt() * z;
            let step = t_new - t;
            let ck_new = ck - gkk * step;
            let bwd_mean = t_new + 0.5 * h * self.envelope_gradient(t_new, ck_new, gamma);
            let drss = -2.0 * step * ck + step * step * gkk;
            let log_ratio = -drss / (2.0 * s2) + self.slab.log_kernel(t_new, self.penalty)
                - self.slab.log_kernel(t, self.penalty)
                + log_normal_pdf(t, bwd_mean, h)
                - log_normal_pdf(t_new, fwd_mean, h);
            let m = MoveOutcome::decide(log_ratio, rng);
            if m.accepted {
                self.shift(k, step);
            }
            self.mala_batch.record(m.accepted);
            self.stats.within.record(m.accepted);
        }
        Ok(())
    }

    /// Robbins-Monro update of the proposal scales from the last batch of moves.
    pub fn adapt(&mut self, batch_index: usize) {
        let rate = (1.0 / (batch_index as f64).sqrt()).min(0.5);
        for (scale, counter) in self.rw_scale.iter_mut().zip(self.rw_batch.iter_mut()) {
            if let Some(r) = counter.rate() {
                *scale *= (rate * (r - TARGET_RW)).exp();
            }
            *counter = Counter::default();
        }
        if let Some(r) = self.mala_batch.rate() {
            self.mala_eps = (self.mala_eps * (rate * (r - TARGET_MALA)).exp()).min(4.0);
        }
        self.mala_batch = Counter::default();
        let span = self.hyper.a2 - self.hyper.a1;
        for i in 0..2 {
            if let Some(r) = self.rho_batch[i].rate() {
                self.rho_step[i] = (self.rho_step[i] * (rate * (r - TARGET_RW)).exp()).min(span);
            }
            self.rho_batch[i] = Counter::default();
        }
    }

    fn reset_stats(&mut self) {
        self.stats = MoveStats::default();
    }

    fn acceptance_rates(&self) -> BTreeMap<String, f64> {
        let mut out = BTreeMap::new();
        for (name, c) in [
            ("birth", self.stats.birth),
            ("death", self.stats.death),
            ("within", self.stats.within),
            ("rho", self.stats.rho),
        ] {
            if let Some(r) = c.rate() {
                out.insert(name.to_string(), r);
            }
        }
        out
    }

    /// One full sweep: `q`, slab scales, indicators in random-scan order, then
    /// the within-model move of the kernel.
    pub fn sweep<R: Rng + ?Sized>(
        &mut self,
        kernel: KernelKind,
        order: &mut [usize],
        rng: &mut R,
    ) -> Result<()> {
        self.refresh_residual();
        self.update_q(rng);
        self.update_rho(rng);
        order.shuffle(rng);
        for &k in order.iter() {
            self.rj_update(k, rng);
        }
        match kernel {
            KernelKind::ExactRJ => self.update_theta_within(rng),
            KernelKind::MoreauYosida => self.update_theta_mala(rng)?,
        }
        Ok(())
    }
}

fn penalty_for(kernel: KernelKind, hyper: &Hyperparameters) -> Penalty {
    match kernel {
        KernelKind::ExactRJ => Penalty::Exact,
        KernelKind::MoreauYosida => Penalty::Smoothed { gamma: hyper.gamma },
    }
}

/// Chain RNG for column `j`: one ChaCha stream per column under a shared seed.
pub fn column_rng(seed: u64, j: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(j as u64);
    rng
}

/// Birth/death update of one indicator; see [`ColumnChain::rj_update`].
pub fn rj_update_pair<R: Rng + ?Sized>(
    state: ColumnState,
    k: usize,
    j: usize,
    data: &DataMatrix,
    hyper: &Hyperparameters,
    rng: &mut R,
) -> Result<(ColumnState, MoveOutcome)> {
    if k >= data.p() - 1 {
        return Err(Error::invalid(format!("coordinate {k} out of range")));
    }
    let gram = data.gram();
    let mut chain = ColumnChain::new(j, &gram, hyper, Penalty::Exact, state, 2.4)?;
    let m = chain.rj_update(k, rng);
    Ok((chain.into_state(), m))
}

/// Random-walk update of the active coefficients with scale `rw_scale * sigma_j / ||x_k||`.
pub fn within_model_update_theta<R: Rng + ?Sized>(
    state: ColumnState,
    j: usize,
    data: &DataMatrix,
    hyper: &Hyperparameters,
    rw_scale: f64,
    rng: &mut R,
) -> Result<ColumnState> {
    let gram = data.gram();
    let mut chain = ColumnChain::new(j, &gram, hyper, Penalty::Exact, state, rw_scale)?;
    chain.update_theta_within(rng);
    Ok(chain.into_state())
}

/// Slab-scale update; see [`ColumnChain::update_rho`].
pub fn mh_update_rho<R: Rng + ?Sized>(
    state: ColumnState,
    j: usize,
    data: &DataMatrix,
    hyper: &Hyperparameters,
    rng: &mut R,
) -> Result<ColumnState> {
    let gram = data.gram();
    let mut chain = ColumnChain::new(j, &gram, hyper, Penalty::Exact, state, 2.4)?;
    chain.update_rho(rng);
    Ok(chain.into_state())
}

/// One proximal MALA pass over the active coefficients on the Moreau-Yosida
/// smoothed target, followed by a birth/death refresh of every indicator.
pub fn my_envelope_step<R: Rng + ?Sized>(
    state: ColumnState,
    j: usize,
    data: &DataMatrix,
    hyper: &Hyperparameters,
    rng: &mut R,
) -> Result<ColumnState> {
    let gram = data.gram();
    let mut chain = ColumnChain::new(
        j,
        &gram,
        hyper,
        Penalty::Smoothed { gamma: hyper.gamma },
        state,
        2.4,
    )?;
    chain.update_theta_mala(rng)?;
    let mut order: Vec<usize> = (0..data.p() - 1).collect();
    order.shuffle(rng);
    for k in order {
        chain.rj_update(k, rng);
    }
    Ok(chain.into_state())
}

/// Empirical quantile with linear interpolation between order statistics, for a
/// sample made of `zeros` zeros plus the sorted nonzero `values`.
fn quantile_with_zeros(sorted: &[f64], zeros: usize, prob: f64) -> f64 {
    let n = sorted.len() + zeros;
    let neg = sorted.partition_point(|v| *v < 0.0);
    let at = |i: usize| -> f64 {
        if i < neg {
            sorted[i]
        } else if i < neg + zeros {
            0.0
        } else {
            sorted[i - zeros]
        }
    };
    let h = (n - 1) as f64 * prob;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    let w = h - lo as f64;
    let (a, b) = (at(lo), at(hi));
    if w == 0.0 {
        a
    } else {
        a + w * (b - a)
    }
}

/// Run the chain for column `j` and summarize the retained samples.
///
/// Deterministic given `(config.seed, j)` and the inputs.
pub fn run_chain(
    j: usize,
    data: &DataMatrix,
    hyper: &Hyperparameters,
    config: &ChainConfig,
) -> Result<ChainSummary> {
    let gram = data.gram();
    run_chain_with_gram(j, &gram, hyper, config)
}

/// [`run_chain`] with a precomputed Gram matrix shared across columns.
pub fn run_chain_with_gram(
    j: usize,
    gram: &Gram,
    hyper: &Hyperparameters,
    config: &ChainConfig,
) -> Result<ChainSummary> {
    config.validate()?;
    let p = gram.p();
    hyper.validate(p)?;
    let dim = p - 1;
    let mut rng = column_rng(config.seed, j);
    let (rho1, rho2) = match config.fixed_rho {
        Some((r1, r2)) => {
            if !(hyper.a1..=hyper.a2).contains(&r1) || !(hyper.a1..=hyper.a2).contains(&r2) {
                return Err(Error::invalid("fixed rho outside [a1, a2]"));
            }
            (r1, r2)
        }
        None => {
            let mid = 0.5 * (hyper.a1 + hyper.a2);
            (mid, mid)
        }
    };
    let q0 = 1.0 / (1.0 + (p as f64).powf(hyper.u));
    let state = ColumnState::empty(dim, q0, rho1, rho2);
    let penalty = penalty_for(config.kernel, hyper);
    let mut chain = ColumnChain::new(j, gram, hyper, penalty, state, config.rw_scale)?;
    chain.fixed_rho = config.fixed_rho.is_some();

    let mut order: Vec<usize> = (0..dim).collect();
    let mut incl = vec![0u64; dim];
    let mut sums = vec![0.0; dim];
    let mut nonzero: Vec<Vec<f64>> = vec![Vec::new(); dim];
    let mut trace = Vec::with_capacity((config.n_iterations - config.burn_in) / config.thin + 1);

    for it in 0..config.n_iterations {
        if it == config.burn_in {
            chain.reset_stats();
        }
        chain.sweep(config.kernel, &mut order, &mut rng)?;
        if config.adapt && it < config.burn_in && (it + 1) % ADAPT_BATCH == 0 {
            chain.adapt((it + 1) / ADAPT_BATCH);
        }
        if it >= config.burn_in && (it - config.burn_in) % config.thin == 0 {
            let st = chain.state();
            for k in 0..dim {
                if st.delta[k] {
                    incl[k] += 1;
                    sums[k] += st.theta[k];
                    nonzero[k].push(st.theta[k]);
                }
            }
            trace.push(chain.neg_pseudo_loglik());
        }
    }

    let n = trace.len();
    let nf = n as f64;
    let mut median = vec![0.0; dim];
    let mut q025 = vec![0.0; dim];
    let mut q975 = vec![0.0; dim];
    for k in 0..dim {
        let vals = &mut nonzero[k];
        vals.sort_by(|a, b| a.total_cmp(b));
        let zeros = n - vals.len();
        median[k] = quantile_with_zeros(vals, zeros, 0.5);
        q025[k] = quantile_with_zeros(vals, zeros, 0.025);
        q975[k] = quantile_with_zeros(vals, zeros, 0.975);
    }
    let mean = trace.iter().sum::<f64>() / nf;
    let var = if n > 1 {
        trace.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (nf - 1.0)
    } else {
        0.0
    };
    Ok(ChainSummary {
        column: j,
        n_retained: n,
        inclusion_freq: incl.iter().map(|&c| c as f64 / nf).collect(),
        theta_mean: sums.iter().map(|s| s / nf).collect(),
        theta_median: median,
        theta_q025: q025,
        theta_q975: q975,
        pseudo_loglik_trace_stats: (mean, var),
        geweke_z: geweke_z(&trace).ok(),
        acceptance_rates: chain.acceptance_rates(),
    })
}
