//! Exact per-column posterior on tiny instances, by enumeration of the
//! inclusion indicators and adaptive quadrature over the active coefficients.
//!
//! The inclusion probability is integrated out analytically:
//! `int q^s (1-q)^((p-1) + p^u - 1 - s) dq = B(s + 1, (p-1) + p^u - s)`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::function::beta::ln_beta;

use crate::error::{Error, Result};
use crate::matrix::{global_index, DataMatrix};
use crate::model::{Hyperparameters, Slab};
use crate::special::{integrate, ln_erfcx, log_sum_exp, soft_threshold, QuadTolerance};

/// Largest regression dimension the oracle accepts.
pub const MAX_ORACLE_DIM: usize = 3;

/// Quadrature resolution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    /// Initial equal-width panels between consecutive breakpoints.
    pub panels: usize,
    pub rel_tol: f64,
    pub max_segments: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            panels: 4,
            rel_tol: 1e-10,
            max_segments: 300,
        }
    }
}

impl GridSpec {
    /// Same tolerances with every initial panel halved.
    pub fn refined(&self) -> Self {
        GridSpec {
            panels: self.panels * 2,
            max_segments: self.max_segments * 2,
            ..*self
        }
    }
}

/// Treatment of the slab scales.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum RhoSpec {
    Fixed {
        rho1: f64,
        rho2: f64,
    },
    /// Integrate `rho1` over its uniform hyperprior (requires `alpha = 1`, where
    /// `rho2` drops out of the target).
    IntegrateRho1,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    pub inclusion_prob: Vec<f64>,
    pub theta_mean: Vec<f64>,
    pub log_evidence: f64,
    /// Estimated relative quadrature error.
    pub tolerance: f64,
    /// Log marginal weight of every support, in enumeration order (bit `k` of the
    /// index is `delta_k`). Only filled for fixed slab scales.
    pub support_log_evidence: Vec<f64>,
}

struct Context {
    dim: usize,
    /// `X^(j)' X^(j)`, local indexing.
    a: DMatrix<f64>,
    /// `X^(j)' x_j`.
    b: DVector<f64>,
    yy: f64,
    sigma2: f64,
    radius: f64,
    p: usize,
    hyper: Hyperparameters,
}

struct FixedRho {
    log_total: f64,
    incl: Vec<f64>,
    mean: Vec<f64>,
    rel_err: f64,
    support_log: Vec<f64>,
}

impl Context {
    fn new(j: usize, data: &DataMatrix, hyper: &Hyperparameters) -> Result<Self> {
        let p = data.p();
        if j >= p {
            return Err(Error::invalid(format!("column {j} out of range")));
        }
        let dim = p - 1;
        if dim > MAX_ORACLE_DIM {
            return Err(Error::UnsupportedSize(format!(
                "oracle supports p - 1 <= {MAX_ORACLE_DIM}, got {dim}"
            )));
        }
        hyper.validate(p)?;
        let g = data.gram();
        let a = DMatrix::from_fn(dim, dim, |k, l| {
            g.get(global_index(j, k), global_index(j, l))
        });
        let b = DVector::from_fn(dim, |k, _| g.get(global_index(j, k), j));
        let sigma2 = hyper.sigma2[j];
        let ols = a
            .clone()
            .svd(true, true)
            .solve(&b, 1e-12)
            .map_err(Error::invalid)?;
        let radius = 10.0 * (ols.amax() + sigma2.sqrt());
        Ok(Context {
            dim,
            a,
            b,
            yy: g.get(j, j),
            sigma2,
            radius,
            p,
            hyper: hyper.clone(),
        })
    }

    /// `F(theta) = (theta'A theta - 2 theta'b) / (2 sigma2) + l1 |theta|_1 + l2 |theta|^2 / 2`
    /// over the support `sup`.
    fn objective(&self, sup: &[usize], th: &[f64], slab: &Slab) -> f64 {
        let mut quad = 0.0;
        let mut pen = 0.0;
        for (x, &k) in sup.iter().enumerate() {
            quad -= 2.0 * th[x] * self.b[k];
            for (y, &l) in sup.iter().enumerate() {
                quad += th[x] * self.a[(k, l)] * th[y];
            }
            pen += slab.l1 * th[x].abs() + 0.5 * slab.l2 * th[x] * th[x];
        }
        quad / (2.0 * self.sigma2) + pen
    }

    fn mode(&self, sup: &[usize], slab: &Slab) -> Vec<f64> {
        let mut th = vec![0.0; sup.len()];
        for _ in 0..10_000 {
            let mut change = 0.0f64;
            for (x, &k) in sup.iter().enumerate() {
                let akk = self.a[(k, k)];
                if akk <= 0.0 {
                    continue;
                }
                let mut r = self.b[k];
                for (y, &l) in sup.iter().enumerate() {
                    if y != x {
                        r -= self.a[(k, l)] * th[y];
                    }
                }
                let new = soft_threshold(r, self.sigma2 * slab.l1) / (akk + self.sigma2 * slab.l2);
                change = change.max((new - th[x]).abs());
                th[x] = new;
            }
            if change < 1e-14 {
                break;
            }
        }
        th
    }

    /// Integral of `exp(-(F - F_min)) * [1, theta_1, .., theta_d]` over the support.
    fn integrate_support(
        &self,
        sup: &[usize],
        slab: &Slab,
        grid: &GridSpec,
    ) -> (f64, Vec<f64>, f64) {
        let d = sup.len();
        let mode = self.mode(sup, slab);
        let f_min = self.objective(sup, &mode, slab);
        let mut th = vec![0.0; d];
        if d == 1 {
            let mut out = vec![0.0; 2];
            self.last_coordinate(sup, slab, f_min, &mut th, &mut out);
            return (f_min, out, 0.0);
        }
        let tol = QuadTolerance {
            rel: grid.rel_tol,
            abs: 1e-15,
            max_segments: grid.max_segments,
        };
        let out = self.nested(sup, slab, grid, tol, &mode, f_min, 0, &mut th);
        let mass = out.value[0];
        (f_min, out.value, out.error / mass)
    }

    /// Closed-form integral over the last support coordinate with the others
    /// held at `th[..d-1]`: writes `[mass, mass-weighted theta_1..theta_d]`.
    fn last_coordinate(
        &self,
        sup: &[usize],
        slab: &Slab,
        f_min: f64,
        th: &mut [f64],
        out: &mut [f64],
    ) {
        let d = sup.len();
        let t = sup[d - 1];
        let rest = &sup[..d - 1];
        let f_rest = self.objective(rest, &th[..d - 1], slab);
        // exponent in the last coordinate: -a z^2 / 2 + beta z - l1 |z|
        let a = self.a[(t, t)] / self.sigma2 + slab.l2;
        let mut beta = self.b[t];
        for (x, &k) in rest.iter().enumerate() {
            beta -= self.a[(t, k)] * th[x];
        }
        let beta = beta / self.sigma2;
        let shift = f_min - f_rest;
        let (mass, first) = gauss_laplace_moments(a, beta, slab.l1, shift);
        out[0] = mass;
        for x in 0..d - 1 {
            out[x + 1] = mass * th[x];
        }
        out[d] = first;
        th[d - 1] = 0.0;
    }

    #[allow(clippy::too_many_arguments)]
    fn nested(
        &self,
        sup: &[usize],
        slab: &Slab,
        grid: &GridSpec,
        tol: QuadTolerance,
        mode: &[f64],
        f_min: f64,
        level: usize,
        th: &mut Vec<f64>,
    ) -> crate::special::QuadResult {
        let d = sup.len();
        let r = self.radius;
        let mut breaks = vec![-r, 0.0, mode[level].clamp(-r, r), r];
        breaks.sort_by(|a, b| a.total_cmp(b));
        breaks.dedup();
        integrate(
            |x, out: &mut [f64]| {
                th[level] = x;
                if level + 2 == d {
                    self.last_coordinate(sup, slab, f_min, th, out);
                } else {
                    let inner = self.nested(
                        sup,
                        slab,
                        grid,
                        tol,
                        mode,
                        f_min,
                        level + 1,
                        &mut th.clone(),
                    );
                    out.copy_from_slice(&inner.value);
                }
            },
            &breaks,
            grid.panels,
            d + 1,
            tol,
        )
    }

    fn fixed(&self, rho1: f64, rho2: f64, grid: &GridSpec) -> Result<FixedRho> {
        let h = &self.hyper;
        let slab = Slab::new(h.alpha, rho1, rho2, self.sigma2)?;
        let pu = (self.p as f64).powf(h.u);
        let n_sup = 1usize << self.dim;
        let mut support_log = Vec::with_capacity(n_sup);
        let mut numer_mean = vec![Vec::new(); self.dim];
        let mut rel_err = 0.0f64;
        for mask in 0..n_sup {
            let sup: Vec<usize> = (0..self.dim).filter(|k| mask >> k & 1 == 1).collect();
            let s = sup.len() as f64;
            let prior =
                ln_beta(s + 1.0, self.dim as f64 + pu - s) - ln_beta(1.0, pu) - s * slab.log_norm;
            let base = -self.yy / (2.0 * self.sigma2);
            if sup.is_empty() {
                support_log.push(prior + base);
                for v in numer_mean.iter_mut() {
                    v.push(0.0);
                }
                continue;
            }
            let (f_min, vals, err) = self.integrate_support(&sup, &slab, grid);
            rel_err = rel_err.max(err);
            support_log.push(prior + base - f_min + vals[0].ln());
            for k in 0..self.dim {
                let m = match sup.iter().position(|&x| x == k) {
                    Some(pos) => vals[pos + 1] / vals[0],
                    None => 0.0,
                };
                numer_mean[k].push(m);
            }
        }
        let log_total = log_sum_exp(&support_log);
        let post: Vec<f64> = support_log.iter().map(|l| (l - log_total).exp()).collect();
        let incl = (0..self.dim)
            .map(|k| {
                post.iter()
                    .enumerate()
                    .filter(|(m, _)| m >> k & 1 == 1)
                    .map(|(_, w)| w)
                    .sum()
            })
            .collect();
        let mean = (0..self.dim)
            .map(|k| post.iter().zip(&numer_mean[k]).map(|(w, m)| w * m).sum())
            .collect();
        Ok(FixedRho {
            log_total,
            incl,
            mean,
            rel_err,
            support_log,
        })
    }

    /// `[1, incl_1..incl_d, mean_1..mean_d]` weighted by the profile evidence at `rho1`.
    fn rho1_integrand(&self, rho1: f64, shift: f64, grid: &GridSpec, out: &mut [f64]) -> f64 {
        let fr = self
            .fixed(rho1, self.hyper.a1, grid)
            .expect("rho inside support");
        let w = (fr.log_total - shift).exp();
        out[0] = w;
        for k in 0..self.dim {
            out[1 + k] = w * fr.incl[k];
            out[1 + self.dim + k] = w * fr.mean[k];
        }
        fr.rel_err
    }

    fn rho1_shift(&self, grid: &GridSpec) -> Result<f64> {
        let h = &self.hyper;
        let mut best = f64::NEG_INFINITY;
        for i in 0..=64 {
            let r = h.a1 + (h.a2 - h.a1) * i as f64 / 64.0;
            best = best.max(self.fixed(r, h.a1, grid)?.log_total);
        }
        Ok(best)
    }
}

/// `e^shift * [∫ g, ∫ z g]` with `g(z) = exp(-a z^2 / 2 + beta z - lambda |z|)`
/// over the real line, evaluated through the scaled complementary error function.
fn gauss_laplace_moments(a: f64, beta: f64, lambda: f64, shift: f64) -> (f64, f64) {
    let c = 0.5 * (std::f64::consts::PI / (2.0 * a)).ln();
    let root = (2.0 * a).sqrt();
    // positive half-line: drift beta - lambda; negative half-line after z -> -z: drift -(beta + lambda)
    let (m_pos, m_neg) = (beta - lambda, -(beta + lambda));
    let i_pos = (shift + c + ln_erfcx(-m_pos / root)).exp();
    let i_neg = (shift + c + ln_erfcx(-m_neg / root)).exp();
    let scale = shift.exp();
    // ∫_0^∞ z e^{-a z^2/2 + m z} dz = (1 + m J(m)) / a
    let first_pos = (scale + m_pos * i_pos) / a;
    let first_neg = (scale + m_neg * i_neg) / a;
    (i_pos + i_neg, first_pos - first_neg)
}

/// Exact posterior inclusion probabilities and coefficient means for column `j`.
pub fn exact_marginals_small(
    j: usize,
    data: &DataMatrix,
    hyper: &Hyperparameters,
    grid: &GridSpec,
    rho: RhoSpec,
) -> Result<OracleResult> {
    let ctx = Context::new(j, data, hyper)?;
    match rho {
        RhoSpec::Fixed { rho1, rho2 } => {
            if !(hyper.a1..=hyper.a2).contains(&rho1) || !(hyper.a1..=hyper.a2).contains(&rho2) {
                return Err(Error::invalid("fixed rho outside [a1, a2]"));
            }
            let fr = ctx.fixed(rho1, rho2, grid)?;
            Ok(OracleResult {
                inclusion_prob: fr.incl,
                theta_mean: fr.mean,
                log_evidence: fr.log_total,
                tolerance: fr.rel_err.max(f64::EPSILON),
                support_log_evidence: fr.support_log,
            })
        }
        RhoSpec::IntegrateRho1 => {
            if hyper.alpha != 1.0 {
                return Err(Error::invalid("rho integration needs alpha = 1"));
            }
            let shift = ctx.rho1_shift(grid)?;
            let d = ctx.dim;
            let mut inner_err = 0.0f64;
            let res = integrate(
                |r, out: &mut [f64]| {
                    inner_err = inner_err.max(ctx.rho1_integrand(r, shift, grid, out))
                },
                &[hyper.a1, hyper.a2],
                16,
                1 + 2 * d,
                QuadTolerance {
                    rel: 1e-9,
                    abs: 1e-300,
                    max_segments: 200,
                },
            );
            let z = res.value[0];
            Ok(OracleResult {
                inclusion_prob: (0..d).map(|k| res.value[1 + k] / z).collect(),
                theta_mean: (0..d).map(|k| res.value[1 + d + k] / z).collect(),
                log_evidence: shift + z.ln() - (hyper.a2 - hyper.a1).ln(),
                tolerance: (res.error / z).max(inner_err).max(f64::EPSILON),
                support_log_evidence: Vec::new(),
            })
        }
    }
}

/// Posterior probability of `rho1` falling in each bin delimited by `edges`
/// (requires `alpha = 1`). Probabilities are normalized over `[a1, a2]`.
pub fn rho1_marginal_bins(
    j: usize,
    data: &DataMatrix,
    hyper: &Hyperparameters,
    grid: &GridSpec,
    edges: &[f64],
) -> Result<Vec<f64>> {
    if hyper.alpha != 1.0 {
        return Err(Error::invalid("rho integration needs alpha = 1"));
    }
    let ctx = Context::new(j, data, hyper)?;
    let shift = ctx.rho1_shift(grid)?;
    let d = ctx.dim;
    let mut masses = Vec::with_capacity(edges.len().saturating_sub(1));
    for w in edges.windows(2) {
        let res = integrate(
            |r, out: &mut [f64]| {
                ctx.rho1_integrand(r, shift, grid, out);
            },
            &[w[0], w[1]],
            2,
            1 + 2 * d,
            QuadTolerance {
                rel: 1e-8,
                abs: 1e-300,
                max_segments: 100,
            },
        );
        masses.push(res.value[0]);
    }
    let total: f64 = masses.iter().sum();
    Ok(masses.iter().map(|m| m / total).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_form_last_coordinate_matches_quadrature() {
        for &(a, beta, lambda) in &[
            (2.0, 0.5, 1.0),
            (30.0, 12.0, 3.6),
            (5.0, -4.0, 0.0),
            (1.0, 0.0, 2.0),
        ] {
            let r = integrate(
                |z, out| {
                    let g = (-a * z * z / 2.0 + beta * z - lambda * z.abs()).exp();
                    out[0] = g;
                    out[1] = z * g;
                },
                &[-40.0, 0.0, 40.0],
                8,
                2,
                QuadTolerance::default(),
            );
            let (m0, m1) = gauss_laplace_moments(a, beta, lambda, 0.0);
            assert!(
                (m0 - r.value[0]).abs() < 1e-10 * r.value[0],
                "mass {m0} vs {}",
                r.value[0]
            );
            assert!(
                (m1 - r.value[1]).abs() < 1e-10 * r.value[0],
                "first {m1} vs {}",
                r.value[1]
            );
        }
    }

    #[test]
    fn rejects_large_dimension() {
        let d =
            DataMatrix::from_rows(&[vec![1.0, 2.0, 3.0, 4.0, 5.0], vec![0.5, 0.1, 0.2, 0.3, 0.4]])
                .unwrap();
        let h = Hyperparameters {
            alpha: 0.9,
            u: 1.5,
            a1: 1e-5,
            a2: 5.0,
            sigma2: vec![1.0; 5],
            gamma: 0.2,
        };
        let r = exact_marginals_small(
            0,
            &d,
            &h,
            &GridSpec::default(),
            RhoSpec::Fixed {
                rho1: 1.0,
                rho2: 1.0,
            },
        );
        assert!(matches!(r, Err(Error::UnsupportedSize(_))));
    }
}
