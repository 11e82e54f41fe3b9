//! Approximate matrix multiplication, powering and inversion by ReLU networks.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{duplication_net, parallel_shared, sparse_concat, Layer, ReluNetwork};
use crate::error::{Error, Result};
use crate::linalg::CsrMatrix;

/// Number of sawtooth stages so that one scalar product of entries bounded
/// by `z` is accurate to `tau`.
pub fn sawtooth_stages(z: f64, tau: f64) -> usize {
    let m = ((z * z / tau).log2() - 1.0) / 2.0;
    (m.ceil().max(1.0)) as usize
}

/// Network for `(vec A, vec B) -> vec(AB)` with `A` `m x n`, `B` `n x k`, accurate
/// to `eps` in the spectral norm whenever `|A|_2, |B|_2 <= z`.
///
/// Each scalar product uses `xy = ((x+y)^2 - (x-y)^2) / 4`, with the square of
/// `s = |t| / 2z` in `[0, 1]` approximated by `s - sum_j g_j(s) / 4^j`, `g_j`
/// the j-fold hat function. Paired `+` and `-` channels sit next to each other,
/// so a zero factor gives an exactly zero product.
pub fn mult_net(z: f64, m: usize, n: usize, k: usize, eps: f64) -> Result<ReluNetwork> {
    if !(z > 0.0) || !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidInput(format!("mult_net needs z > 0 and eps in (0, 1), got {z}, {eps}")));
    }
    if m == 0 || n == 0 || k == 0 {
        return Err(Error::InvalidInput("mult_net dimensions must be positive".into()));
    }
    let tau = eps / (n as f64 * ((m * k) as f64).sqrt());
    let stages = sawtooth_stages(z, tau);
    let n_in = n * (m + k);
    // Squares in output order: (i, j) column-major, then l, then sign.
    let n_sq = 2 * m * n * k;
    let a_idx = |i: usize, l: usize| (i + l * m) as u32;
    let b_idx = |l: usize, j: usize| (m * n + l + j * n) as u32;

    // Layer 1: relu(t), relu(-t) for t = x + y and t = x - y.
    let mut rows = Vec::with_capacity(2 * n_sq);
    for j in 0..k {
        for i in 0..m {
            for l in 0..n {
                let (xa, yb) = (a_idx(i, l), b_idx(l, j));
                let (lo, hi, sw) = if xa < yb { (xa, yb, false) } else { (yb, xa, true) };
                for sign in [1.0, -1.0] {
                    // t = x + sign * y, then its negation.
                    for outer in [1.0, -1.0] {
                        let (cx, cy) = (outer, outer * sign);
                        let (clo, chi) = if sw { (cy, cx) } else { (cx, cy) };
                        rows.push(vec![(lo, clo), (hi, chi)]);
                    }
                }
            }
        }
    }
    let mut layers = vec![Layer { weight: CsrMatrix::from_rows(n_in, rows), bias: vec![0.0; 2 * n_sq] }];

    // Stage layers. Unit order within a product: a+, a-, b+, b-, c+, c-, acc+, acc-.
    let scale = 1.0 / (2.0 * z);
    let n_prod = m * n * k;
    let unit = |p: usize, kind: usize, sign: usize| (8 * p + 2 * kind + sign) as u32;
    let first_rows: Vec<Vec<(u32, f64)>> = (0..n_prod)
        .flat_map(|p| {
            (0..4).flat_map(move |_kind| {
                (0..2).map(move |sign| {
                    let h = (4 * p + 2 * sign) as u32;
                    vec![(h, scale), (h + 1, scale)]
                })
            })
        })
        .collect();
    let hat_bias: Vec<f64> = (0..n_prod).flat_map(|_| [0.0, 0.0, -0.5, -0.5, -1.0, -1.0, 0.0, 0.0]).collect();
    layers.push(Layer { weight: CsrMatrix::from_rows(2 * n_sq, first_rows), bias: hat_bias.clone() });

    let hat = |p: usize, sign: usize, w: f64| -> Vec<(u32, f64)> {
        vec![(unit(p, 0, sign), 2.0 * w), (unit(p, 1, sign), -4.0 * w), (unit(p, 2, sign), 2.0 * w)]
    };
    for stage in 1..stages {
        let w4 = 0.25f64.powi(stage as i32);
        let mut rows = Vec::with_capacity(8 * n_prod);
        for p in 0..n_prod {
            for kind in 0..4 {
                for sign in 0..2 {
                    if kind < 3 {
                        rows.push(hat(p, sign, 1.0));
                    } else {
                        let mut r = hat(p, sign, -w4);
                        r.push((unit(p, 3, sign), 1.0));
                        rows.push(r);
                    }
                }
            }
        }
        layers.push(Layer { weight: CsrMatrix::from_rows(8 * n_prod, rows), bias: hat_bias.clone() });
    }

    // Output: z^2 (acc+ - acc-) summed over l, with the last hat folded in.
    let w4 = 0.25f64.powi(stages as i32);
    let z2 = z * z;
    let out_rows = (0..m * k)
        .map(|out| {
            let mut row = Vec::with_capacity(8 * n);
            for l in 0..n {
                let p = out * n + l;
                for kind in 0..4 {
                    let c = match kind {
                        0 => -2.0 * w4,
                        1 => 4.0 * w4,
                        2 => -2.0 * w4,
                        _ => 1.0,
                    };
                    row.push((unit(p, kind, 0), z2 * c));
                    row.push((unit(p, kind, 1), -z2 * c));
                }
            }
            row
        })
        .collect();
    layers.push(Layer { weight: CsrMatrix::from_rows(8 * n_prod, out_rows), bias: vec![0.0; m * k] });
    ReluNetwork::new(layers)
}

/// `vec A -> vec(A^2)` for `n x n` inputs with `|A|_2 <= z`.
fn square_net(z: f64, n: usize, eps: f64) -> Result<ReluNetwork> {
    super::concat(&mult_net(z, n, n, n, eps)?, &duplication_net(n * n, 2)?)
}

/// Spectral error bound after `i` approximate squarings of a matrix with
/// `|A|_2 <= 1 - delta`, given the per-stage tolerances.
pub fn power_error_bound(delta: f64, tolerances: &[f64]) -> f64 {
    let mut err = 0.0f64;
    let mut exact = 1.0 - delta;
    for &tau in tolerances {
        err = tau + (2.0 * exact + err) * err;
        exact *= exact;
    }
    err
}

fn power_tolerances(i: usize, eps: f64) -> Vec<f64> {
    (1..=i).map(|j| eps * 3f64.powi(-((i - j) as i32)) / 12.0).collect()
}

/// `vec A -> vec(A^(2^i))` accurate to `eps` for `|A|_2 <= 1 - delta`.
pub fn power_net(i: usize, eps: f64, delta: f64, n: usize) -> Result<ReluNetwork> {
    if i == 0 || !(eps > 0.0 && eps < 0.25) || !(delta > 0.0 && delta < 1.0) || n == 0 {
        return Err(Error::InvalidInput(format!("power_net needs i >= 1, eps in (0, 1/4), delta in (0, 1); got {i}, {eps}, {delta}")));
    }
    let tolerances = power_tolerances(i, eps);
    let bound = power_error_bound(delta, &tolerances);
    if bound > eps {
        return Err(Error::InvalidInput(format!("power_net error budget {bound:.3e} exceeds {eps:.3e}")));
    }
    let mut exact = 1.0 - delta;
    let mut err = 0.0;
    let mut net: Option<ReluNetwork> = None;
    for &tau in &tolerances {
        let stage = square_net(exact + err, n, tau)?;
        net = Some(match net {
            None => stage,
            Some(prev) => sparse_concat(&stage, &prev)?,
        });
        err = tau + (2.0 * exact + err) * err;
        exact *= exact;
    }
    Ok(net.expect("i >= 1"))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InverseNetConfig {
    pub eps: f64,
    pub delta: f64,
}

impl InverseNetConfig {
    pub fn new(eps: f64, delta: f64) -> Result<Self> {
        if !(eps > 0.0 && eps < 0.25) || !(delta > 0.0 && delta < 1.0) {
            return Err(Error::InvalidInput(format!("need eps in (0, 1/4) and delta in (0, 1), got {eps}, {delta}")));
        }
        Ok(Self { eps, delta })
    }

    /// Number of product factors `l`, so the partial sum has `2^l` terms.
    pub fn stages(&self) -> usize {
        let terms = (self.delta * self.eps / 2.0).ln() / (1.0 - self.delta).ln() + 1.0;
        (terms.log2().ceil() as usize).max(1)
    }

    /// Multiplication tolerance at stage `i` (2..=l).
    pub fn mult_tolerance(&self, i: usize) -> f64 {
        5f64.powi(i as i32 - self.stages() as i32 - 1) * self.eps / 2.0
    }

    pub fn power_tolerance(&self, i: usize) -> f64 {
        self.mult_tolerance(i) * self.delta
    }

    pub fn z1(&self) -> f64 {
        1.0 - self.delta
    }

    pub fn z2(&self) -> f64 {
        3.0 + self.eps + 1.0 / self.delta
    }
}

fn shift_by_identity(n: usize) -> Result<ReluNetwork> {
    let shift = nalgebra::DMatrix::<f64>::identity(n, n);
    ReluNetwork::affine(CsrMatrix::identity(n * n), shift.as_slice().to_vec())
}

/// `vec A -> vec((I - A)^-1)` for `|A|_2 <= 1 - delta`, through the product
/// `prod_{i<l} (A^(2^i) + I)` of the truncated Neumann series.
///
/// Stage `i` multiplies the previous partial product by `A^(2^(i-1)) + I`;
/// both factors read the same input through a duplication layer.
pub fn inverse_net(cfg: &InverseNetConfig, n: usize) -> Result<ReluNetwork> {
    if n == 0 {
        return Err(Error::InvalidInput("inverse_net dimension must be positive".into()));
    }
    let l = cfg.stages();
    let shift = shift_by_identity(n)?;
    let mut pi = shift.clone();
    for i in 2..=l {
        let power = power_net(i - 1, cfg.power_tolerance(i), cfg.delta, n)?;
        let factor = sparse_concat(&shift, &power)?;
        let both = parallel_shared(&[&pi, &factor])?;
        pi = sparse_concat(&mult_net(cfg.z2(), n, n, n, cfg.mult_tolerance(i))?, &both)?;
    }
    Ok(pi)
}

/// Both sides of `sum_{i < 2^l} A^i = prod_{i < l} (A^(2^i) + I)`, evaluated directly.
pub fn neumann_product_check(a: &DMatrix<f64>, l: usize) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    if !a.is_square() {
        return Err(Error::Dimension(format!("matrix is {}x{}", a.nrows(), a.ncols())));
    }
    let n = a.nrows();
    let id = DMatrix::<f64>::identity(n, n);
    let mut sum = DMatrix::zeros(n, n);
    let mut term = id.clone();
    for _ in 0..(1usize << l) {
        sum += &term;
        term = &term * a;
    }
    let mut prod = id.clone();
    let mut power = a.clone();
    for _ in 0..l {
        prod = &prod * (&power + &id);
        power = &power * &power;
    }
    Ok((sum, prod))
}
