//! Monte-Carlo checks of the approximation networks and a size sweep.

use std::io::Write;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::approx::{inverse_net, mult_net, power_net, InverseNetConfig};
use super::{identity_net, matr, vec_of, ReluNetwork};
use crate::error::Result;
use crate::linalg::spectral_norm;

/// Random `m x n` matrix with spectral norm `norm`.
pub fn matrix_with_norm(rng: &mut ChaCha8Rng, m: usize, n: usize, norm: f64) -> DMatrix<f64> {
    loop {
        let a = DMatrix::from_fn(m, n, |_, _| rng.random_range(-1.0..1.0));
        let s = spectral_norm(&a);
        if s > 1e-3 {
            return a * (norm / s);
        }
    }
}

/// Half the draws sit on the norm bound, the rest are spread inside it.
fn draw_radius(rng: &mut ChaCha8Rng, draw: usize, bound: f64) -> f64 {
    if draw % 2 == 0 {
        bound
    } else {
        bound * rng.random_range(0.0..1.0)
    }
}

fn sup_error<F>(draws: usize, seed: u64, f: F) -> f64
where
    F: Fn(&mut ChaCha8Rng, usize) -> f64 + Sync,
{
    (0..draws)
        .into_par_iter()
        .map(|d| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (d as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
            f(&mut rng, d)
        })
        .reduce(|| 0.0, f64::max)
}

/// Largest spectral error of a multiplication network over random pairs with norms `<= z`.
pub fn mult_sup_error(net: &ReluNetwork, z: f64, m: usize, n: usize, k: usize, draws: usize, seed: u64) -> Result<f64> {
    Ok(sup_error(draws, seed, |rng, d| {
        let ra = draw_radius(rng, d, z);
        let a = matrix_with_norm(rng, m, n, ra);
        let rb = draw_radius(rng, d + 1, z);
        let b = matrix_with_norm(rng, n, k, rb);
        let x: Vec<f64> = vec_of(&a).into_iter().chain(vec_of(&b)).collect();
        let out = matr(&net.realize(&x).expect("input length"), m, k).expect("output length");
        spectral_norm(&(out - a * b))
    }))
}

/// Largest spectral error of `vec A -> vec(A^(2^i))` over `|A|_2 <= 1 - delta`.
pub fn power_sup_error(net: &ReluNetwork, i: usize, delta: f64, n: usize, draws: usize, seed: u64) -> Result<f64> {
    Ok(sup_error(draws, seed, |rng, d| {
        let ra = draw_radius(rng, d, 1.0 - delta);
        let a = matrix_with_norm(rng, n, n, ra);
        let mut exact = a.clone();
        for _ in 0..i {
            exact = &exact * &exact;
        }
        let out = matr(&net.realize(&vec_of(&a)).expect("input length"), n, n).expect("output length");
        spectral_norm(&(out - exact))
    }))
}

/// Largest spectral error of `vec A -> vec((I - A)^-1)` over `|A|_2 <= 1 - delta`.
pub fn inverse_sup_error(net: &ReluNetwork, delta: f64, n: usize, draws: usize, seed: u64) -> Result<f64> {
    Ok(sup_error(draws, seed, |rng, d| {
        let ra = draw_radius(rng, d, 1.0 - delta);
        let a = matrix_with_norm(rng, n, n, ra);
        let exact = (DMatrix::identity(n, n) - &a).try_inverse().expect("contraction");
        let out = matr(&net.realize(&vec_of(&a)).expect("input length"), n, n).expect("output length");
        spectral_norm(&(out - exact))
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyRow {
    pub construct: String,
    pub eps: f64,
    pub delta: f64,
    pub n: usize,
    pub measured_error: f64,
    pub bound_satisfied: bool,
    pub depth: usize,
    pub params: usize,
}

impl VerifyRow {
    fn new(construct: &str, eps: f64, delta: f64, n: usize, err: f64, net: &ReluNetwork) -> Self {
        Self {
            construct: construct.into(),
            eps,
            delta,
            n,
            measured_error: err,
            bound_satisfied: err <= eps,
            depth: net.depth(),
            params: net.n_params(),
        }
    }
}

/// Identity, multiplication, power and inverse checks with `draws` samples each.
pub fn contract_suite(draws: usize, seed: u64) -> Result<Vec<VerifyRow>> {
    let mut rows = Vec::new();
    for n in 1..=3 {
        for depth in 1..=4 {
            let net = identity_net(n, depth)?;
            let err = sup_error(draws, seed, |rng, _| {
                let x: Vec<f64> = (0..n).map(|_| rng.random_range(-10.0..10.0)).collect();
                let y = net.realize(&x).expect("input length");
                x.iter().zip(&y).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
            });
            let mut row = VerifyRow::new(&format!("identity_L{depth}"), 0.0, 0.0, n, err, &net);
            row.bound_satisfied = err == 0.0;
            rows.push(row);
        }
    }
    for eps in [1e-1, 1e-2] {
        for n in 1..=3 {
            let z = 2.0;
            let net = mult_net(z, n, n, n, eps)?;
            let err = mult_sup_error(&net, z, n, n, n, draws, seed)?;
            rows.push(VerifyRow::new("mult", eps, 0.0, n, err, &net));
        }
    }
    for i in 1..=3 {
        for n in [1, 3] {
            let (eps, delta) = (0.05, 0.1);
            let net = power_net(i, eps, delta, n)?;
            let err = power_sup_error(&net, i, delta, n, draws, seed)?;
            rows.push(VerifyRow::new(&format!("power_i{i}"), eps, delta, n, err, &net));
        }
    }
    for delta in [0.3, 0.5] {
        for n in [1, 2, 4] {
            let cfg = InverseNetConfig::new(0.1, delta)?;
            let net = inverse_net(&cfg, n)?;
            let err = inverse_sup_error(&net, delta, n, draws, seed)?;
            rows.push(VerifyRow::new(&format!("inverse_l{}", cfg.stages()), 0.1, delta, n, err, &net));
        }
    }
    Ok(rows)
}

pub fn write_verify_csv<W: Write>(rows: &[VerifyRow], mut w: W) -> std::io::Result<()> {
    writeln!(w, "construct,eps,delta,n,measured_error,bound_satisfied,depth,params")?;
    for r in rows {
        writeln!(
            w,
            "{},{:e},{},{},{:e},{},{},{}",
            r.construct, r.eps, r.delta, r.n, r.measured_error, r.bound_satisfied, r.depth, r.params
        )?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub eps: f64,
    pub delta: f64,
    pub n: usize,
    pub stages: usize,
    pub depth: usize,
    pub params: usize,
    /// `l (log2(1/eps) + log2(1/delta) + log2 n + l)`.
    pub depth_factor: f64,
    /// `2^l n^2 (n + l)` times the bracket above.
    pub size_factor: f64,
}

/// Builds inverse networks over a grid and records their sizes next to the
/// reference growth factors.
pub fn inverse_scaling_sweep(eps_list: &[f64], n_list: &[usize], delta: f64) -> Result<Vec<ScalingRow>> {
    let mut rows = Vec::new();
    for &eps in eps_list {
        for &n in n_list {
            let cfg = InverseNetConfig::new(eps, delta)?;
            let net = inverse_net(&cfg, n)?;
            let l = cfg.stages() as f64;
            let bracket = (1.0 / eps).log2() + (1.0 / delta).log2() + (n as f64).log2() + l;
            rows.push(ScalingRow {
                eps,
                delta,
                n,
                stages: cfg.stages(),
                depth: net.depth(),
                params: net.n_params(),
                depth_factor: l * bracket,
                size_factor: 2f64.powf(l) * (n * n) as f64 * (n as f64 + l) * bracket,
            });
        }
    }
    Ok(rows)
}

/// Least-squares slope through the origin of `y` against `x`, and the largest ratio `y / x`.
pub fn fit_through_origin(points: &[(f64, f64)]) -> (f64, f64) {
    let sxy: f64 = points.iter().map(|(x, y)| x * y).sum();
    let sxx: f64 = points.iter().map(|(x, _)| x * x).sum();
    let max_ratio = points.iter().map(|(x, y)| y / x).fold(0.0, f64::max);
    (sxy / sxx, max_ratio)
}

pub fn write_scaling_csv<W: Write>(rows: &[ScalingRow], mut w: W) -> std::io::Result<()> {
    writeln!(w, "eps,delta,n,stages,depth,params,depth_factor,size_factor")?;
    for r in rows {
        writeln!(w, "{:e},{},{},{},{},{},{},{}", r.eps, r.delta, r.n, r.stages, r.depth, r.params, r.depth_factor, r.size_factor)?;
    }
    Ok(())
}
