//! Per-column variance proxies: known values or cross-validated lasso.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::DataMatrix;
use crate::samplers::column_rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SigmaMode {
    Known,
    EmpiricalCV,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SigmaSpec {
    pub mode: SigmaMode,
    pub known_values: Option<Vec<f64>>,
    pub folds: usize,
    /// Explicit descending grid. When absent, a per-column log grid from
    /// `lambda_max` down to `lambda_ratio * lambda_max` is used.
    pub lambda_grid: Option<Vec<f64>>,
    pub n_lambda: usize,
    pub lambda_ratio: f64,
    pub seed: u64,
}

impl SigmaSpec {
    pub fn known(values: Vec<f64>) -> Self {
        SigmaSpec {
            mode: SigmaMode::Known,
            known_values: Some(values),
            ..Self::cv(0)
        }
    }

    pub fn cv(seed: u64) -> Self {
        SigmaSpec {
            mode: SigmaMode::EmpiricalCV,
            known_values: None,
            folds: 10,
            lambda_grid: None,
            n_lambda: 50,
            lambda_ratio: 1e-3,
            seed,
        }
    }

    pub fn validate(&self, p: usize) -> Result<()> {
        match self.mode {
            SigmaMode::Known => match &self.known_values {
                Some(v) if v.len() == p && v.iter().all(|&s| s.is_finite() && s > 0.0) => Ok(()),
                Some(_) => Err(Error::invalid(format!(
                    "known variances must be {p} positive reals"
                ))),
                None => Err(Error::invalid("known mode requires known values")),
            },
            SigmaMode::EmpiricalCV => {
                if self.folds < 2 {
                    return Err(Error::invalid("at least two folds are required"));
                }
                if let Some(g) = &self.lambda_grid {
                    if g.is_empty()
                        || g.iter().any(|&l| !(l.is_finite() && l > 0.0))
                        || g.windows(2).any(|w| w[1] > w[0])
                    {
                        return Err(Error::invalid(
                            "lambda grid must be descending positive reals",
                        ));
                    }
                } else if self.n_lambda == 0
                    || !(self.lambda_ratio > 0.0 && self.lambda_ratio < 1.0)
                {
                    return Err(Error::invalid("invalid lambda grid settings"));
                }
                Ok(())
            }
        }
    }
}

const LASSO_TOL: f64 = 1e-10;
const MAX_SWEEPS: usize = 200_000;

/// Coordinate descent on the sufficient statistics `X'X`, `X'y` and `y'y`.
struct Lasso {
    n: f64,
    gram: DMatrix<f64>,
    xty: DVector<f64>,
    yy: f64,
}

impl Lasso {
    fn new(x: &DMatrix<f64>, y: &DVector<f64>) -> Self {
        Lasso {
            n: x.nrows() as f64,
            gram: x.tr_mul(x),
            xty: x.tr_mul(y),
            yy: y.norm_squared(),
        }
    }

    /// `X'(y - X beta)`.
    fn correlation(&self, beta: &DVector<f64>) -> DVector<f64> {
        &self.xty - &self.gram * beta
    }

    fn rss(&self, beta: &DVector<f64>, corr: &DVector<f64>) -> f64 {
        (self.yy - beta.dot(&(&self.xty + corr))).max(0.0)
    }

    fn objective(&self, beta: &DVector<f64>, corr: &DVector<f64>, lambda: f64) -> f64 {
        self.rss(beta, corr) / (2.0 * self.n) + lambda * beta.lp_norm(1)
    }

    /// Largest subgradient violation and the duality gap at `beta`.
    fn optimality(&self, beta: &DVector<f64>, corr: &DVector<f64>, lambda: f64) -> (f64, f64) {
        let n = self.n;
        let mut kkt = 0.0f64;
        for k in 0..beta.len() {
            let g = corr[k] / n;
            let v = if beta[k] != 0.0 {
                (g - lambda * beta[k].signum()).abs()
            } else if self.gram[(k, k)] == 0.0 {
                0.0
            } else {
                (g.abs() - lambda).max(0.0)
            };
            kkt = kkt.max(v);
        }
        if lambda == 0.0 {
            return (kkt, 0.0);
        }
        // dual point: the residual scaled into the feasible set
        let gmax = corr.amax() / n;
        let scale = if gmax > lambda { lambda / gmax } else { 1.0 };
        let rss = self.rss(beta, corr);
        let yr = self.yy - beta.dot(&self.xty);
        let y_minus_u = self.yy - 2.0 * scale * yr + scale * scale * rss;
        let primal = rss / (2.0 * n) + lambda * beta.lp_norm(1);
        let dual = (self.yy - y_minus_u) / (2.0 * n);
        (kkt, (primal - dual).max(0.0))
    }

    /// Cyclic coordinate descent from `beta`. `trace` receives the objective
    /// after every sweep.
    fn solve(&self, lambda: f64, beta: &mut DVector<f64>, mut trace: Option<&mut Vec<f64>>) {
        let n = self.n;
        let mut corr = self.correlation(beta);
        for _ in 0..MAX_SWEEPS {
            for k in 0..beta.len() {
                let gkk = self.gram[(k, k)];
                if gkk == 0.0 {
                    continue;
                }
                let old = beta[k];
                let rho = corr[k] + gkk * old;
                let new = crate::special::soft_threshold(rho / n, lambda) / (gkk / n);
                if new != old {
                    corr.axpy(old - new, &self.gram.column(k), 1.0);
                    beta[k] = new;
                }
            }
            // refresh to keep rounding from accumulating
            corr = self.correlation(beta);
            if let Some(t) = trace.as_deref_mut() {
                t.push(self.objective(beta, &corr, lambda));
            }
            let (kkt, gap) = self.optimality(beta, &corr, lambda);
            if kkt <= LASSO_TOL && gap <= 1e-8 {
                return;
            }
        }
    }
}

fn check_inputs(y: &DVector<f64>, x: &DMatrix<f64>, lambda: f64) -> Result<()> {
    if x.nrows() != y.len() || x.nrows() == 0 {
        return Err(Error::invalid("design and response sizes differ"));
    }
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Error::invalid("lambda must be a non-negative real"));
    }
    if y.iter().chain(x.iter()).any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite input"));
    }
    if x.ncols() > 0 && x.column_iter().all(|c| c.norm_squared() == 0.0) {
        return Err(Error::invalid("all design columns are zero"));
    }
    Ok(())
}

/// Minimizer of `(1/(2n)) |y - X beta|^2 + lambda |beta|_1` by cyclic coordinate
/// descent.
pub fn lasso_cd(y: &DVector<f64>, x: &DMatrix<f64>, lambda: f64) -> Result<DVector<f64>> {
    check_inputs(y, x, lambda)?;
    let mut beta = DVector::zeros(x.ncols());
    Lasso::new(x, y).solve(lambda, &mut beta, None);
    Ok(beta)
}

/// As [`lasso_cd`], also returning the objective after each sweep.
pub fn lasso_cd_traced(
    y: &DVector<f64>,
    x: &DMatrix<f64>,
    lambda: f64,
) -> Result<(DVector<f64>, Vec<f64>)> {
    check_inputs(y, x, lambda)?;
    let mut beta = DVector::zeros(x.ncols());
    let lasso = Lasso::new(x, y);
    let mut trace = vec![lasso.objective(&beta, &lasso.correlation(&beta), lambda)];
    lasso.solve(lambda, &mut beta, Some(&mut trace));
    Ok((beta, trace))
}

/// Smallest penalty with an all-zero solution.
pub fn lambda_max(y: &DVector<f64>, x: &DMatrix<f64>) -> f64 {
    x.tr_mul(y).amax() / x.nrows() as f64
}

pub fn log_grid(max: f64, ratio: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![max];
    }
    (0..count)
        .map(|i| max * ratio.powf(i as f64 / (count - 1) as f64))
        .collect()
}

fn rows(m: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), m.ncols(), |i, k| m[(idx[i], k)])
}

/// Cross-validated lasso residual variance for column `j`.
pub fn estimate_sigma2_cv(data: &DataMatrix, j: usize, spec: &SigmaSpec) -> Result<f64> {
    if j >= data.p() {
        return Err(Error::invalid(format!("column {j} out of range")));
    }
    if spec.mode == SigmaMode::Known {
        spec.validate(data.p())?;
        return Ok(spec.known_values.as_ref().expect("validated")[j]);
    }
    spec.validate(data.p())?;
    let n = data.n();
    if n < spec.folds {
        return Err(Error::invalid(format!(
            "{} folds need at least as many rows, got {n}",
            spec.folds
        )));
    }
    let x = data.without_column(j);
    let y = DVector::from_column_slice(data.column(j));
    check_inputs(&y, &x, 0.0)?;
    let grid = match &spec.lambda_grid {
        Some(g) => g.clone(),
        None => {
            let lmax = lambda_max(&y, &x);
            if lmax == 0.0 {
                vec![1.0]
            } else {
                log_grid(lmax, spec.lambda_ratio, spec.n_lambda)
            }
        }
    };

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut column_rng(spec.seed, j));
    let mut cv_error = vec![0.0; grid.len()];
    for fold in 0..spec.folds {
        let test: Vec<usize> = order
            .iter()
            .enumerate()
            .filter(|(i, _)| i % spec.folds == fold)
            .map(|(_, &r)| r)
            .collect();
        let train: Vec<usize> = order
            .iter()
            .enumerate()
            .filter(|(i, _)| i % spec.folds != fold)
            .map(|(_, &r)| r)
            .collect();
        let (xt, yt) = (
            rows(&x, &train),
            DVector::from_iterator(train.len(), train.iter().map(|&r| y[r])),
        );
        let (xv, yv) = (
            rows(&x, &test),
            DVector::from_iterator(test.len(), test.iter().map(|&r| y[r])),
        );
        let lasso = Lasso::new(&xt, &yt);
        let mut beta = DVector::zeros(x.ncols());
        for (g, &lambda) in grid.iter().enumerate() {
            lasso.solve(lambda, &mut beta, None);
            cv_error[g] += (&yv - &xv * &beta).norm_squared();
        }
    }
    let best = cv_error
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(g, _)| g)
        .expect("non-empty grid");

    // refit along the path down to the selected penalty for a warm start
    let lasso = Lasso::new(&x, &y);
    let mut beta = DVector::zeros(x.ncols());
    for &lambda in &grid[..=best] {
        lasso.solve(lambda, &mut beta, None);
    }
    let s_hat = beta.iter().filter(|&&b| b != 0.0).count();
    if s_hat >= n {
        return Err(Error::DegenerateFit(format!(
            "{s_hat} active predictors with {n} rows"
        )));
    }
    let rss = (&y - &x * &beta).norm_squared();
    Ok((rss / (n - s_hat) as f64).max(1e-8))
}

/// Variance proxy for every column, computed on a pool of `workers` threads.
pub fn resolve_sigma2(data: &DataMatrix, spec: &SigmaSpec, workers: usize) -> Result<Vec<f64>> {
    spec.validate(data.p())?;
    if spec.mode == SigmaMode::Known {
        return Ok(spec.known_values.clone().expect("validated"));
    }
    if workers == 0 {
        return Err(Error::invalid("workers must be positive"));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::invalid(format!("cannot build worker pool: {e}")))?;
    pool.install(|| {
        (0..data.p())
            .into_par_iter()
            .map(|j| {
                estimate_sigma2_cv(data, j, spec).map_err(|e| Error::Column {
                    column: j,
                    source: Box::new(e),
                })
            })
            .collect()
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn design() -> (DMatrix<f64>, DVector<f64>) {
        let x =
            DMatrix::from_row_slice(5, 2, &[1.0, 0.5, -0.3, 1.0, 0.8, -0.2, 0.1, 0.4, -1.0, 0.3]);
        let y = DVector::from_column_slice(&[1.0, 0.2, 0.9, 0.3, -0.8]);
        (x, y)
    }

    #[test]
    fn zero_above_lambda_max() {
        let (x, y) = design();
        let b = lasso_cd(&y, &x, lambda_max(&y, &x) * 1.0001).unwrap();
        assert!(b.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn least_squares_limit() {
        let (x, y) = design();
        let b = lasso_cd(&y, &x, 0.0).unwrap();
        let ols = (x.transpose() * &x).try_inverse().unwrap() * x.transpose() * &y;
        assert!((b - ols).amax() < 1e-6);
    }

    #[test]
    fn objective_never_increases() {
        let (x, y) = design();
        let (_, trace) = lasso_cd_traced(&y, &x, 0.05).unwrap();
        assert!(trace.windows(2).all(|w| w[1] <= w[0] + 1e-15));
    }

    #[test]
    fn rejects_bad_input() {
        let (x, mut y) = design();
        y[0] = f64::NAN;
        assert!(lasso_cd(&y, &x, 0.1).is_err());
        let (x, y) = design();
        assert!(lasso_cd(&y, &(x * 0.0), 0.1).is_err());
    }

    #[test]
    fn grid_is_descending() {
        let g = log_grid(2.0, 1e-3, 50);
        assert_eq!(g.len(), 50);
        assert!((g[49] - 2e-3).abs() < 1e-15);
        assert!(g.windows(2).all(|w| w[1] < w[0]));
    }
}
