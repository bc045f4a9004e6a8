//! Symmetrized graph estimate, point estimate and credible intervals from the
//! per-column chain summaries.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::PrecisionMatrix;
use crate::samplers::ChainSummary;

/// Closed interval `[lower, upper]`, serialized as a two-element array.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
}

impl From<[f64; 2]> for Interval {
    fn from(v: [f64; 2]) -> Self {
        Interval {
            lower: v[0],
            upper: v[1],
        }
    }
}

impl From<Interval> for [f64; 2] {
    fn from(i: Interval) -> Self {
        [i.lower, i.upper]
    }
}

impl Interval {
    pub fn point(x: f64) -> Self {
        Interval { lower: x, upper: x }
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lower <= x && x <= self.upper
    }

    pub fn hull(&self, other: &Interval) -> Interval {
        Interval {
            lower: self.lower.min(other.lower),
            upper: self.upper.max(other.upper),
        }
    }

    pub fn overlaps(&self, other: &Interval) -> bool {
        self.lower <= other.upper && other.lower <= self.upper
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphEstimate {
    pub delta_hat: Vec<Vec<u8>>,
    pub theta_hat: PrecisionMatrix,
    pub intervals: Vec<Vec<Interval>>,
    /// Pairs `(i, j)`, `i < j`, whose two per-chain intervals did not overlap.
    pub disjoint_pairs: Vec<(usize, usize)>,
}

/// Position of node `i` among the predictors of the regression for column `j`.
#[inline]
pub fn local_index(j: usize, i: usize) -> usize {
    debug_assert!(i != j);
    if i < j {
        i
    } else {
        i - 1
    }
}

fn check(summaries: &[ChainSummary], sigma2: &[f64]) -> Result<usize> {
    let p = summaries.len();
    if sigma2.len() != p {
        return Err(Error::invalid(format!(
            "{} summaries but {} variances",
            p,
            sigma2.len()
        )));
    }
    if let Some(s) = summaries.iter().find(|s| s.inclusion_freq.len() + 1 != p) {
        return Err(Error::invalid(format!(
            "summary for column {} has the wrong length",
            s.column
        )));
    }
    Ok(p)
}

/// AND-rule: edge `(i, j)` is kept when both chains include the other node with
/// frequency strictly above 0.5. The diagonal is set to one.
pub fn symmetrize_structure(summaries: &[ChainSummary]) -> Vec<Vec<bool>> {
    let p = summaries.len();
    let mut delta = vec![vec![false; p]; p];
    for j in 0..p {
        delta[j][j] = true;
        for i in 0..j {
            let ij = summaries[j].inclusion_freq[local_index(j, i)];
            let ji = summaries[i].inclusion_freq[local_index(i, j)];
            let edge = ij > 0.5 && ji > 0.5;
            delta[i][j] = edge;
            delta[j][i] = edge;
        }
    }
    delta
}

/// Diagonal `1 / sigma2_j`; selected off-diagonal entries average the two chains'
/// rescaled coefficient means `-theta_bar / sigma2`.
pub fn point_estimate(
    summaries: &[ChainSummary],
    sigma2: &[f64],
    delta_hat: &[Vec<bool>],
) -> Result<PrecisionMatrix> {
    let p = check(summaries, sigma2)?;
    let mut m = DMatrix::zeros(p, p);
    for j in 0..p {
        m[(j, j)] = 1.0 / sigma2[j];
        for i in 0..j {
            if delta_hat[i][j] {
                let from_j = -summaries[j].theta_mean[local_index(j, i)] / sigma2[j];
                let from_i = -summaries[i].theta_mean[local_index(i, j)] / sigma2[i];
                let v = 0.5 * from_j + 0.5 * from_i;
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
    }
    PrecisionMatrix::new(m)
}

fn chain_interval(s: &ChainSummary, k: usize, sigma2: f64) -> Interval {
    // z -> -z / sigma2 reverses the order
    Interval {
        lower: -s.theta_q975[k] / sigma2,
        upper: -s.theta_q025[k] / sigma2,
    }
}

/// 95% intervals: hull of the two per-chain intervals for selected edges, `{0}`
/// for excluded edges and `{1 / sigma2_j}` on the diagonal. Also returns the
/// pairs whose per-chain intervals are disjoint.
pub fn credible_intervals(
    summaries: &[ChainSummary],
    sigma2: &[f64],
    delta_hat: &[Vec<bool>],
) -> Result<(Vec<Vec<Interval>>, Vec<(usize, usize)>)> {
    let p = check(summaries, sigma2)?;
    let mut out = vec![vec![Interval::point(0.0); p]; p];
    let mut disjoint = Vec::new();
    for j in 0..p {
        out[j][j] = Interval::point(1.0 / sigma2[j]);
        for i in 0..j {
            if delta_hat[i][j] {
                let a = chain_interval(&summaries[j], local_index(j, i), sigma2[j]);
                let b = chain_interval(&summaries[i], local_index(i, j), sigma2[i]);
                if !a.overlaps(&b) {
                    disjoint.push((i, j));
                }
                let h = a.hull(&b);
                out[i][j] = h;
                out[j][i] = h;
            }
        }
    }
    Ok((out, disjoint))
}

/// Point estimate evaluated at the chains' medians instead of means.
pub fn median_estimate(
    summaries: &[ChainSummary],
    sigma2: &[f64],
    delta_hat: &[Vec<bool>],
) -> Result<DMatrix<f64>> {
    let p = check(summaries, sigma2)?;
    let mut m = DMatrix::zeros(p, p);
    for j in 0..p {
        m[(j, j)] = 1.0 / sigma2[j];
        for i in 0..j {
            if delta_hat[i][j] {
                let v = 0.5 * (-summaries[j].theta_median[local_index(j, i)] / sigma2[j])
                    + 0.5 * (-summaries[i].theta_median[local_index(i, j)] / sigma2[i]);
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
    }
    Ok(m)
}

pub fn estimate_graph(summaries: &[ChainSummary], sigma2: &[f64]) -> Result<GraphEstimate> {
    check(summaries, sigma2)?;
    let delta = symmetrize_structure(summaries);
    let theta_hat = point_estimate(summaries, sigma2, &delta)?;
    let (intervals, disjoint_pairs) = credible_intervals(summaries, sigma2, &delta)?;
    Ok(GraphEstimate {
        delta_hat: delta
            .iter()
            .map(|r| r.iter().map(|&b| b as u8).collect())
            .collect(),
        theta_hat,
        intervals,
        disjoint_pairs,
    })
}
