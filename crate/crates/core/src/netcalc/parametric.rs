//! Networks for `mu -> (B^T B)^-1` and `mu -> c(mu) = (B^T B)^-1 B^T (f; g)`.
//!
//! Inputs are networks for `mu -> vec(B_mu)`, `mu -> vec(B_mu^T)` and
//! `mu -> (f; g)(mu)`. For operators that are affine in `mu` these are single
//! affine layers and exact; see [`affine_network`].

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::approx::{inverse_net, mult_net, InverseNetConfig};
use super::{concat, parallel_shared, sparse_concat, ReluNetwork};
use crate::error::{Error, Result};
use crate::linalg::{spectral_norm, CsrMatrix};

/// Largest tolerance handed to the inverse network, which requires `eps < 1/4`.
pub const MAX_INVERSE_EPS: f64 = 0.24;

/// Bounds with `spec(B^T B) in [beta^2, alpha^2]` and `|(f; g)| <= gamma` over the parameter domain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParametricNetConfig {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

/// Tolerances used inside [`btb_inverse_net`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BtbTolerances {
    pub eps1: f64,
    pub eps2: f64,
    pub eps3: f64,
}

/// Tolerances and multiplication bounds used inside [`parametric_map_net`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MapTolerances {
    pub eps1: f64,
    pub eps2: f64,
    pub eps3: f64,
    pub eps4: f64,
    pub eps5: f64,
    pub z1: f64,
    pub z2: f64,
}

impl ParametricNetConfig {
    pub fn new(alpha: f64, beta: f64, gamma: f64) -> Result<Self> {
        if !(0.0 < beta && beta < alpha) || !(gamma > 0.0) || !alpha.is_finite() || !gamma.is_finite() {
            return Err(Error::InvalidInput(format!("need 0 < beta < alpha and gamma > 0, got {alpha}, {beta}, {gamma}")));
        }
        Ok(Self { alpha, beta, gamma })
    }

    pub fn lambda(&self) -> f64 {
        1.0 / (self.alpha * self.alpha + self.beta * self.beta)
    }

    /// `|I - lambda B^T B|_2 <= 1 - delta`.
    pub fn delta(&self) -> f64 {
        self.lambda() * self.beta * self.beta
    }

    pub fn btb_tolerances(&self, eps: f64) -> BtbTolerances {
        let (a, b) = (self.alpha, self.beta);
        let b2 = b * b;
        let eps1 = (eps * b2 * b2 / (24.0 * a)).min(b2 * eps.sqrt() / 4.0).min(b2 / (12.0 * a)).min(b / 3.0);
        let eps2 = (b2 * b2 * eps / 12.0).min(b2 / 6.0);
        let eps3 = (eps / (2.0 * self.lambda())).min(MAX_INVERSE_EPS);
        BtbTolerances { eps1, eps2, eps3 }
    }

    pub fn map_tolerances(&self, eps: f64) -> MapTolerances {
        let (a, b, g) = (self.alpha, self.beta, self.gamma);
        let b2 = b * b;
        let ag = a * g;
        let eps1 = (eps * b2 / (12.0 * g)).min(b * eps.sqrt() / 4.0).min(a / 4.0).min(ag.sqrt() / 2.0);
        let eps2 = (eps * b2 / (12.0 * a)).min(b * eps.sqrt() / 4.0).min(g / 4.0).min(ag.sqrt() / 2.0);
        let eps3 = (eps * b2 / 12.0).min(ag / 4.0);
        let eps4 = (eps / (6.0 * ag)).min(MAX_INVERSE_EPS);
        let eps5 = eps / 3.0;
        let z1 = a + g + eps1 + eps2;
        let z2 = eps4 + 1.0 / b2 + a * eps2 + (g + eps2) * eps1 + eps3 + ag;
        MapTolerances { eps1, eps2, eps3, eps4, eps5, z1, z2 }
    }

    /// Bounds on the three error terms of [`parametric_map_net`]: the `B^T (f; g)`
    /// product, the inverse, and the final product.
    pub fn map_error_terms(&self, eps: f64) -> [f64; 3] {
        let t = self.map_tolerances(eps);
        let (a, g) = (self.alpha, self.gamma);
        let inner = a * t.eps2 + (g + t.eps2) * t.eps1 + t.eps3;
        [inner / (self.beta * self.beta), t.eps4 * (inner + a * g), t.eps5]
    }
}

/// Single affine layer `mu -> vec(C + sum_k mu_k M_k)`, optionally transposed.
pub fn affine_network(constant: &DMatrix<f64>, linear: &[DMatrix<f64>], transpose: bool) -> Result<ReluNetwork> {
    if linear.iter().any(|m| m.shape() != constant.shape()) {
        return Err(Error::Dimension("affine terms must share the constant's shape".into()));
    }
    let pick = |m: &DMatrix<f64>| if transpose { m.transpose() } else { m.clone() };
    let c = pick(constant);
    let ls: Vec<DMatrix<f64>> = linear.iter().map(pick).collect();
    let p = ls.len();
    let rows = (0..c.len())
        .map(|r| ls.iter().enumerate().filter(|(_, m)| m.as_slice()[r] != 0.0).map(|(k, m)| (k as u32, m.as_slice()[r])).collect())
        .collect();
    ReluNetwork::affine(CsrMatrix::from_rows(p, rows), c.as_slice().to_vec())
}

/// Network for `mu -> vec((B_mu^T B_mu)^-1)` (`n_pod^2` outputs).
///
/// `phi_b` maps `mu` to `vec(B)` (`N x n_pod`), `phi_bt` to `vec(B^T)`.
pub fn btb_inverse_net(phi_b: &ReluNetwork, phi_bt: &ReluNetwork, n_pod: usize, cfg: &ParametricNetConfig, eps: f64) -> Result<ReluNetwork> {
    if !(eps > 0.0 && eps < 0.25) {
        return Err(Error::InvalidInput(format!("eps must lie in (0, 1/4), got {eps}")));
    }
    let n_rows = check_b_networks(phi_b, phi_bt, n_pod)?;
    let tol = cfg.btb_tolerances(eps);
    let (lambda, delta) = (cfg.lambda(), cfg.delta());
    let perturbation = 2.0 * cfg.alpha * tol.eps1 + tol.eps1 * tol.eps1 + tol.eps2;
    if !(cfg.beta * cfg.beta > perturbation) || lambda * perturbation + 1.0 - delta > 1.0 - delta / 2.0 {
        return Err(Error::InvalidInput("tolerance schedule leaves no contraction margin".into()));
    }

    let both = parallel_shared(&[phi_bt, phi_b])?;
    let btb = sparse_concat(&mult_net(cfg.alpha + tol.eps1, n_pod, n_rows, n_pod, tol.eps2)?, &both)?;
    let identity = DMatrix::<f64>::identity(n_pod, n_pod);
    let residual = btb.with_scaled_output(-lambda, identity.as_slice())?;
    let inv = inverse_net(&InverseNetConfig::new(tol.eps3, delta / 2.0)?, n_pod)?;
    let scaled = ReluNetwork::affine(CsrMatrix::identity(n_pod * n_pod).scale(lambda), vec![0.0; n_pod * n_pod])?;
    concat(&scaled, &sparse_concat(&inv, &residual)?)
}

fn check_b_networks(phi_b: &ReluNetwork, phi_bt: &ReluNetwork, n_pod: usize) -> Result<usize> {
    if n_pod == 0 || phi_b.output_dim() % n_pod != 0 || phi_bt.output_dim() != phi_b.output_dim() {
        return Err(Error::Dimension(format!(
            "B networks with {} and {} outputs do not describe n_pod = {n_pod} columns",
            phi_b.output_dim(),
            phi_bt.output_dim()
        )));
    }
    if phi_b.input_dim() != phi_bt.input_dim() {
        return Err(Error::Dimension("B networks must share their input".into()));
    }
    Ok(phi_b.output_dim() / n_pod)
}

/// Network for `mu -> c(mu)` (`n_pod` outputs), accurate to `eps` in the
/// Euclidean norm when the input networks are accurate to the tolerances of
/// [`ParametricNetConfig::map_tolerances`].
pub fn parametric_map_net(
    phi_b: &ReluNetwork,
    phi_bt: &ReluNetwork,
    phi_fg: &ReluNetwork,
    n_pod: usize,
    cfg: &ParametricNetConfig,
    eps: f64,
) -> Result<ReluNetwork> {
    if !(eps > 0.0 && eps < 0.25) {
        return Err(Error::InvalidInput(format!("eps must lie in (0, 1/4), got {eps}")));
    }
    let n_rows = check_b_networks(phi_b, phi_bt, n_pod)?;
    if phi_fg.output_dim() != n_rows || phi_fg.input_dim() != phi_b.input_dim() {
        return Err(Error::Dimension(format!("right-hand side network has {} outputs, expected {n_rows}", phi_fg.output_dim())));
    }
    let t = cfg.map_tolerances(eps);
    let bt_fg_inputs = parallel_shared(&[phi_bt, phi_fg])?;
    let bt_fg = sparse_concat(&mult_net(t.z1, n_pod, n_rows, 1, t.eps3)?, &bt_fg_inputs)?;
    let inv = btb_inverse_net(phi_b, phi_bt, n_pod, cfg, t.eps4)?;
    let both = parallel_shared(&[&inv, &bt_fg])?;
    sparse_concat(&mult_net(t.z2, n_pod, n_pod, 1, t.eps5)?, &both)
}

/// `alpha`, `beta`, `gamma` for an affine family `B(mu) = B_c + sum_k mu_k B_k`
/// with right-hand side `fg(mu)` affine as well.
///
/// Both norms are convex in `mu`, so their maxima sit at the box corners.
/// `beta` is the smallest singular value over `grid` samples per axis,
/// shrunk by `beta_margin`.
pub fn estimate_bounds(
    b_of: &dyn Fn(&[f64]) -> DMatrix<f64>,
    fg_of: &dyn Fn(&[f64]) -> DVector<f64>,
    bounds: &[(f64, f64)],
    grid: usize,
    beta_margin: f64,
) -> Result<ParametricNetConfig> {
    let p = bounds.len();
    let corners: Vec<Vec<f64>> =
        (0..1usize << p).map(|mask| (0..p).map(|k| if mask >> k & 1 == 1 { bounds[k].1 } else { bounds[k].0 }).collect()).collect();
    let alpha = corners.iter().map(|c| spectral_norm(&b_of(c))).fold(0.0, f64::max);
    let gamma = corners.iter().map(|c| fg_of(c).norm()).fold(0.0, f64::max);
    let mut beta = f64::INFINITY;
    let steps = grid.max(2);
    let mut idx = vec![0usize; p];
    loop {
        let mu: Vec<f64> = (0..p).map(|k| bounds[k].0 + (bounds[k].1 - bounds[k].0) * idx[k] as f64 / (steps - 1) as f64).collect();
        beta = beta.min(b_of(&mu).singular_values().min());
        let mut k = 0;
        while k < p {
            idx[k] += 1;
            if idx[k] < steps {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
        if k == p {
            break;
        }
    }
    ParametricNetConfig::new(alpha, beta * beta_margin, gamma)
}
