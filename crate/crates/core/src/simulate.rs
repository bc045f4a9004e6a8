//! Ground-truth precision matrices and Gaussian data.

use nalgebra::DMatrix;
use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{DataMatrix, PrecisionMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorKind {
    SettingC,
    HubNetwork,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HubLayout {
    pub modules: usize,
    pub module_size: usize,
    pub hubs_per_module: usize,
    pub hub_degree: usize,
    pub max_nonhub_degree: usize,
    /// Edges among non-hub nodes added to each module after the hub edges.
    pub extra_edges_per_module: usize,
}

impl Default for HubLayout {
    fn default() -> Self {
        HubLayout {
            modules: 5,
            module_size: 100,
            hubs_per_module: 3,
            hub_degree: 15,
            max_nonhub_degree: 4,
            extra_edges_per_module: 72,
        }
    }
}

impl HubLayout {
    pub fn p(&self) -> usize {
        self.modules * self.module_size
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub kind: GeneratorKind,
    pub p: usize,
    pub seed: u64,
    pub signal: f64,
    pub eps: f64,
    pub hub: HubLayout,
}

impl GeneratorSpec {
    pub fn setting_c(p: usize, seed: u64) -> Self {
        GeneratorSpec {
            kind: GeneratorKind::SettingC,
            p,
            seed,
            signal: 3.0,
            eps: 1.0,
            hub: HubLayout::default(),
        }
    }

    pub fn hub(seed: u64) -> Self {
        let hub = HubLayout::default();
        GeneratorSpec {
            kind: GeneratorKind::HubNetwork,
            p: hub.p(),
            seed,
            signal: 3.0,
            eps: 1.0,
            hub,
        }
    }

    pub fn generate(&self) -> Result<PrecisionMatrix> {
        match self.kind {
            GeneratorKind::SettingC => gen_setting_c(self.p, self.seed, self.signal, self.eps),
            GeneratorKind::HubNetwork => gen_hub(self),
        }
    }
}

/// Sparse matrix with `p` random off-diagonal pairs (so `2p` nonzero entries),
/// values `U(-1, 1)` pushed away from zero by `signal`, then shifted so that the
/// smallest eigenvalue equals `eps`.
pub fn gen_setting_c(p: usize, seed: u64, signal: f64, eps: f64) -> Result<PrecisionMatrix> {
    if p < 4 {
        return Err(Error::invalid(format!("setting c needs p >= 4, got {p}")));
    }
    if !(signal.is_finite() && signal >= 0.0 && eps.is_finite() && eps > 0.0) {
        return Err(Error::invalid(
            "signal must be non-negative and eps positive",
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_pairs = p * (p - 1) / 2;
    let mut b = DMatrix::zeros(p, p);
    for idx in sample(&mut rng, n_pairs, p).into_vec() {
        let (i, j) = pair_from_index(idx, p);
        let v: f64 = rng.random_range(-1.0..1.0);
        let v = if v < 0.0 { v - signal } else { v + signal };
        b[(i, j)] = v;
        b[(j, i)] = v;
    }
    let lambda_min = b.clone().symmetric_eigenvalues().min();
    for i in 0..p {
        b[(i, i)] += eps - lambda_min;
    }
    PrecisionMatrix::new(b)
}

/// Inverse of the row-major enumeration of pairs `i < j`.
fn pair_from_index(mut idx: usize, p: usize) -> (usize, usize) {
    for i in 0..p {
        let row = p - 1 - i;
        if idx < row {
            return (i, i + 1 + idx);
        }
        idx -= row;
    }
    unreachable!("pair index out of range")
}

const PCOR_MIN: f64 = 0.10;
const PCOR_MAX: f64 = 0.67;
const HUB_MIN_EIGEN: f64 = 0.1;

/// Modular hub network with unit diagonal. Off-diagonal entries are the negated
/// partial correlations, with magnitudes in `[0.10, 0.67]`.
pub fn gen_hub(spec: &GeneratorSpec) -> Result<PrecisionMatrix> {
    let l = &spec.hub;
    if l.modules == 0 || l.module_size < 2 || spec.p != l.p() {
        return Err(Error::invalid(format!(
            "p = {} does not match {} modules of {} nodes",
            spec.p, l.modules, l.module_size
        )));
    }
    let non_hubs = l.module_size.checked_sub(l.hubs_per_module).unwrap_or(0);
    if l.hub_degree > non_hubs
        || l.hubs_per_module * l.hub_degree > non_hubs * l.max_nonhub_degree
        || 2 * l.extra_edges_per_module + l.hubs_per_module * l.hub_degree
            > non_hubs * l.max_nonhub_degree
    {
        return Err(Error::invalid(
            "hub layout cannot satisfy the degree limits",
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut edges: Vec<(usize, usize)> = Vec::new();
    for m in 0..l.modules {
        let base = m * l.module_size;
        let module_edges = hub_module_edges(l, &mut rng).ok_or_else(|| {
            Error::invalid("hub layout: could not place edges within the degree limits")
        })?;
        edges.extend(module_edges.into_iter().map(|(a, b)| (base + a, base + b)));
    }

    let raw: Vec<f64> = edges
        .iter()
        .map(|_| {
            let mag = rng.random_range(PCOR_MIN..PCOR_MAX);
            if rng.random::<bool>() {
                mag
            } else {
                -mag
            }
        })
        .collect();

    // shrink magnitudes toward the lower bound until the spectrum is far enough from zero
    let mut shrink = 1.0;
    for _ in 0..60 {
        let mut m = DMatrix::identity(spec.p, spec.p);
        for (&(a, b), &v) in edges.iter().zip(&raw) {
            let mag = PCOR_MIN + shrink * (v.abs() - PCOR_MIN);
            m[(a, b)] = -v.signum() * mag;
            m[(b, a)] = m[(a, b)];
        }
        if m.clone().symmetric_eigenvalues().min() >= HUB_MIN_EIGEN {
            return PrecisionMatrix::new(m);
        }
        if shrink == 0.0 {
            break;
        }
        shrink = if shrink < 1e-3 { 0.0 } else { shrink * 0.8 };
    }
    Err(Error::invalid(
        "hub layout too dense to be made positive definite",
    ))
}

/// Edge list of one module in local indices. Hubs are nodes `0..hubs_per_module`.
fn hub_module_edges(l: &HubLayout, rng: &mut ChaCha8Rng) -> Option<Vec<(usize, usize)>> {
    let size = l.module_size;
    let h = l.hubs_per_module;
    let mut degree = vec![0usize; size];
    let mut adjacent = vec![vec![false; size]; size];
    let mut edges = Vec::new();
    let add = |a: usize,
               b: usize,
               adjacent: &mut Vec<Vec<bool>>,
               degree: &mut Vec<usize>,
               edges: &mut Vec<(usize, usize)>| {
        adjacent[a][b] = true;
        adjacent[b][a] = true;
        degree[a] += 1;
        degree[b] += 1;
        edges.push((a.min(b), a.max(b)));
    };
    let mut candidates: Vec<usize> = (h..size).collect();
    for hub in 0..h {
        candidates.shuffle(rng);
        let mut placed = 0;
        for &c in candidates.iter() {
            if placed == l.hub_degree {
                break;
            }
            if degree[c] < l.max_nonhub_degree {
                add(hub, c, &mut adjacent, &mut degree, &mut edges);
                placed += 1;
            }
        }
        if placed < l.hub_degree {
            return None;
        }
    }
    let mut added = 0;
    let mut attempts = 0;
    while added < l.extra_edges_per_module {
        attempts += 1;
        if attempts > 1000 * (l.extra_edges_per_module + 1) {
            return None;
        }
        let a = rng.random_range(h..size);
        let b = rng.random_range(h..size);
        if a == b
            || adjacent[a][b]
            || degree[a] >= l.max_nonhub_degree
            || degree[b] >= l.max_nonhub_degree
        {
            continue;
        }
        add(a, b, &mut adjacent, &mut degree, &mut edges);
        added += 1;
    }
    Some(edges)
}

/// Partial correlations `-theta_ij / sqrt(theta_ii theta_jj)` with unit diagonal.
pub fn partial_correlations(theta: &PrecisionMatrix) -> DMatrix<f64> {
    let t = theta.entries();
    let p = theta.p();
    DMatrix::from_fn(p, p, |i, j| {
        if i == j {
            1.0
        } else {
            -t[(i, j)] / (t[(i, i)] * t[(j, j)]).sqrt()
        }
    })
}

/// `n` rows drawn i.i.d. from `N(0, theta^{-1})`.
pub fn sample_gaussian(theta: &PrecisionMatrix, n: usize, seed: u64) -> Result<DataMatrix> {
    if n == 0 {
        return Err(Error::invalid("n must be positive"));
    }
    let p = theta.p();
    let chol = theta
        .entries()
        .clone()
        .cholesky()
        .ok_or(Error::NotPositiveDefinite)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // column i of z is observation i
    let z = DMatrix::from_fn(p, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let lt = chol.l().transpose();
    let y = lt
        .solve_upper_triangular(&z)
        .ok_or(Error::NotPositiveDefinite)?;
    DataMatrix::new(y.transpose())
}
