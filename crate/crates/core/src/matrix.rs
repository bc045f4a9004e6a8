//! Precision and data matrix types.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-major nested representation used for serialization.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Rows(pub Vec<Vec<f64>>);

pub(crate) fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| m.row(i).iter().copied().collect())
        .collect()
}

pub(crate) fn from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::invalid("ragged rows"));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

/// Symmetric `p x p` matrix with strictly positive diagonal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Rows", into = "Rows")]
pub struct PrecisionMatrix {
    entries: DMatrix<f64>,
}

impl TryFrom<Rows> for PrecisionMatrix {
    type Error = Error;
    fn try_from(rows: Rows) -> Result<Self> {
        PrecisionMatrix::new(from_rows(&rows.0)?)
    }
}

impl From<PrecisionMatrix> for Rows {
    fn from(m: PrecisionMatrix) -> Rows {
        Rows(to_rows(&m.entries))
    }
}

impl PrecisionMatrix {
    pub fn new(entries: DMatrix<f64>) -> Result<Self> {
        let p = entries.nrows();
        if p == 0 || entries.ncols() != p {
            return Err(Error::invalid(format!(
                "precision matrix must be square and non-empty, got {}x{}",
                entries.nrows(),
                entries.ncols()
            )));
        }
        let scale = entries.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for i in 0..p {
            if !(entries[(i, i)] > 0.0) || !entries[(i, i)].is_finite() {
                return Err(Error::invalid(format!(
                    "diagonal entry {i} is not positive"
                )));
            }
            for j in 0..i {
                let (a, b) = (entries[(i, j)], entries[(j, i)]);
                if !a.is_finite() || (a - b).abs() > 1e-12 * scale {
                    return Err(Error::invalid(format!(
                        "entries ({i},{j}) and ({j},{i}) differ"
                    )));
                }
            }
        }
        Ok(PrecisionMatrix { entries })
    }

    /// Like [`PrecisionMatrix::new`] but also requires positive definiteness.
    pub fn new_positive_definite(entries: DMatrix<f64>) -> Result<Self> {
        let m = Self::new(entries)?;
        if !m.is_positive_definite() {
            return Err(Error::NotPositiveDefinite);
        }
        Ok(m)
    }

    pub fn p(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[(i, j)]
    }

    pub fn diagonal(&self) -> Vec<f64> {
        self.entries.diagonal().iter().copied().collect()
    }

    pub fn is_positive_definite(&self) -> bool {
        self.entries.clone().cholesky().is_some()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.entries
            .clone()
            .symmetric_eigenvalues()
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    /// Simultaneously relabel rows and columns: entry `(i, j)` of the result is
    /// entry `(perm[i], perm[j])` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let p = self.p();
        PrecisionMatrix {
            entries: DMatrix::from_fn(p, p, |i, j| self.entries[(perm[i], perm[j])]),
        }
    }
}

/// `n x p` observation matrix, stored column-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    x: DMatrix<f64>,
}

impl DataMatrix {
    pub fn new(x: DMatrix<f64>) -> Result<Self> {
        if x.nrows() < 1 || x.ncols() < 2 {
            return Err(Error::invalid(format!(
                "data matrix needs n >= 1 and p >= 2, got {}x{}",
                x.nrows(),
                x.ncols()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("data matrix has non-finite entries"));
        }
        Ok(DataMatrix { x })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Self::new(from_rows(rows)?)
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn column(&self, j: usize) -> &[f64] {
        let n = self.n();
        &self.x.as_slice()[j * n..(j + 1) * n]
    }

    /// Data matrix with column `j` removed.
    pub fn without_column(&self, j: usize) -> DMatrix<f64> {
        self.x.clone().remove_column(j)
    }

    pub fn permuted_columns(&self, perm: &[usize]) -> Self {
        DataMatrix {
            x: DMatrix::from_fn(self.n(), self.p(), |i, j| self.x[(i, perm[j])]),
        }
    }

    /// Largest squared column norm divided by `n`.
    pub fn kappa_hat(&self) -> f64 {
        let n = self.n() as f64;
        (0..self.p())
            .map(|j| self.column(j).iter().map(|v| v * v).sum::<f64>() / n)
            .fold(0.0, f64::max)
    }

    pub fn gram(&self) -> Gram {
        Gram {
            g: self.x.tr_mul(&self.x),
        }
    }
}

/// Cross-product matrix `X'X`, shared read-only by every column chain.
#[derive(Debug, Clone)]
pub struct Gram {
    g: DMatrix<f64>,
}

impl Gram {
    pub fn p(&self) -> usize {
        self.g.nrows()
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.g[(i, j)]
    }

    #[inline]
    pub fn column(&self, j: usize) -> &[f64] {
        let p = self.p();
        &self.g.as_slice()[j * p..(j + 1) * p]
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.g
    }
}

/// Map a local predictor index of the regression for column `j` to its global column.
#[inline]
pub fn global_index(j: usize, local: usize) -> usize {
    if local < j {
        local
    } else {
        local + 1
    }
}
