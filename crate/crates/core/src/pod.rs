//! Snapshot matrices and proper orthogonal decomposition.
//!
//! The basis comes from a one-sided Jacobi SVD of the snapshot matrix itself
//! rather than an eigen-decomposition of its Gram matrix, so small singular
//! values keep their relative accuracy.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::thin_svd;

#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotMatrix {
    /// `N x n_s`, one column per parameter.
    pub s: DMatrix<f64>,
    pub params: Vec<Vec<f64>>,
}

impl SnapshotMatrix {
    pub fn new(s: DMatrix<f64>, params: Vec<Vec<f64>>) -> Result<Self> {
        if s.ncols() != params.len() {
            return Err(Error::Dimension(format!("{} snapshot columns for {} parameters", s.ncols(), params.len())));
        }
        if s.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("snapshot matrix".into()));
        }
        Ok(Self { s, params })
    }

    pub fn n_snapshots(&self) -> usize {
        self.s.ncols()
    }
}

/// Solves for every parameter (concurrently) and stacks the solutions as columns in input order.
pub fn build_snapshot_matrix<F>(params: &[Vec<f64>], solver: F) -> Result<SnapshotMatrix>
where
    F: Fn(&[f64]) -> Result<Vec<f64>> + Sync,
{
    if params.is_empty() {
        return Err(Error::InvalidInput("no snapshot parameters".into()));
    }
    let cols: Vec<Vec<f64>> = params
        .par_iter()
        .enumerate()
        .map(|(index, mu)| solver(mu).map_err(|e| Error::Parameter { index, source: Box::new(e) }))
        .collect::<Result<_>>()?;
    let n = cols[0].len();
    if cols.iter().any(|c| c.len() != n) {
        return Err(Error::Dimension("snapshots have differing lengths".into()));
    }
    let s = DMatrix::from_fn(n, cols.len(), |i, j| cols[j][i]);
    SnapshotMatrix::new(s, params.to_vec())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PodBasis {
    /// `N x n_pod`, orthonormal columns.
    #[serde(skip)]
    pub v: DMatrix<f64>,
    /// All strictly positive singular values of the snapshot matrix, non-increasing.
    pub singular_values: Vec<f64>,
    pub n_pod: usize,
    pub eps_pod: f64,
}

impl PodBasis {
    pub fn n_rows(&self) -> usize {
        self.v.nrows()
    }

    /// `sum_{i > n_pod} sigma_i^2`.
    pub fn tail_energy(&self) -> f64 {
        self.singular_values[self.n_pod..].iter().map(|s| s * s).sum()
    }
}

/// Smallest `n` whose leading energy fraction reaches `1 - eps^2`.
pub fn truncation_level(sigma: &[f64], eps_pod: f64) -> usize {
    let total: f64 = sigma.iter().map(|s| s * s).sum();
    if total == 0.0 {
        return 0;
    }
    let target = 1.0 - eps_pod * eps_pod;
    let mut acc = 0.0;
    for (i, s) in sigma.iter().enumerate() {
        acc += s * s;
        if acc / total >= target {
            return i + 1;
        }
    }
    sigma.len()
}

fn positive_spectrum(s: &DMatrix<f64>) -> Result<(DMatrix<f64>, Vec<f64>)> {
    if s.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("snapshot matrix".into()));
    }
    let svd = thin_svd(s);
    let r = svd.numerical_rank();
    Ok((svd.u.columns(0, r).into_owned(), svd.singular_values[..r].to_vec()))
}

/// POD basis for tolerance `eps_pod` (truncation by discarded energy).
pub fn compute_pod(s: &DMatrix<f64>, eps_pod: f64) -> Result<PodBasis> {
    if !(eps_pod > 0.0 && eps_pod < 1.0) {
        return Err(Error::InvalidInput(format!("POD tolerance must lie in (0, 1), got {eps_pod}")));
    }
    let (u, sigma) = positive_spectrum(s)?;
    let n_pod = truncation_level(&sigma, eps_pod);
    Ok(PodBasis { v: u.columns(0, n_pod).into_owned(), singular_values: sigma, n_pod, eps_pod })
}

/// POD basis with a prescribed number of modes (capped at the numerical rank).
pub fn pod_with_modes(s: &DMatrix<f64>, n_modes: usize) -> Result<PodBasis> {
    let (u, sigma) = positive_spectrum(s)?;
    let n_pod = n_modes.min(sigma.len());
    let total: f64 = sigma.iter().map(|x| x * x).sum();
    let kept: f64 = sigma[..n_pod].iter().map(|x| x * x).sum();
    let eps_pod = if total > 0.0 { ((total - kept).max(0.0) / total).sqrt() } else { 0.0 };
    Ok(PodBasis { v: u.columns(0, n_pod).into_owned(), singular_values: sigma, n_pod, eps_pod })
}

/// `sum_j |S_j - V V^T S_j|^2`.
pub fn projection_error_sq(s: &DMatrix<f64>, v: &DMatrix<f64>) -> f64 {
    let coeffs = v.transpose() * s;
    let resid = s - v * coeffs;
    resid.norm_squared()
}

pub fn project(v: &DMatrix<f64>, u: &DVector<f64>) -> Result<DVector<f64>> {
    if u.len() != v.nrows() {
        return Err(Error::Dimension(format!("vector of length {} against basis with {} rows", u.len(), v.nrows())));
    }
    Ok(v.tr_mul(u))
}

pub fn reconstruct(v: &DMatrix<f64>, c: &DVector<f64>) -> Result<DVector<f64>> {
    if c.len() != v.ncols() {
        return Err(Error::Dimension(format!("{} coefficients for {} basis vectors", c.len(), v.ncols())));
    }
    Ok(v * c)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayRow {
    pub n_s: usize,
    /// 1-based.
    pub index: usize,
    pub sigma_ratio: f64,
    /// Fraction of the total energy in the modes after `index`.
    pub tail_energy: f64,
}

/// Normalized singular values and discarded-energy fractions, one block per scenario.
pub fn singular_decay_report(scenarios: &[(usize, &[f64])]) -> Vec<DecayRow> {
    let mut rows = Vec::new();
    for &(n_s, sigma) in scenarios {
        let Some(&s1) = sigma.first() else { continue };
        let total: f64 = sigma.iter().map(|s| s * s).sum();
        for (i, &s) in sigma.iter().enumerate() {
            let tail: f64 = sigma[i + 1..].iter().map(|x| x * x).sum();
            rows.push(DecayRow {
                n_s,
                index: i + 1,
                sigma_ratio: if s1 > 0.0 { s / s1 } else { 0.0 },
                tail_energy: if total > 0.0 { tail / total } else { 0.0 },
            });
        }
    }
    rows
}

/// Singular values of `s` including zeros, for decay reporting.
pub fn singular_values(s: &DMatrix<f64>) -> Vec<f64> {
    thin_svd(s).singular_values
}

pub fn write_decay_csv<W: Write>(rows: &[DecayRow], mut w: W) -> std::io::Result<()> {
    writeln!(w, "index,sigma_ratio,tail_energy,n_s")?;
    for r in rows {
        writeln!(w, "{},{:e},{:e},{}", r.index, r.sigma_ratio, r.tail_energy, r.n_s)?;
    }
    Ok(())
}
