//! Parametric linear differential operators with Dirichlet data.
//!
//! An operator is written as `L(mu) = sum_q theta_q(mu) L_q` where each `L_q`
//! is a constant-coefficient combination of partial derivatives. Because the
//! local interpolation matrix does not depend on `mu`, stencil weights
//! inherit the same decomposition.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::kernel::{monomial_derivative, Derivative, RbfKernel};
use crate::error::{Error, Result};
use crate::geometry::Point;

/// Constant-coefficient combination `sum c_k D_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffOperator(pub Vec<(f64, Derivative)>);

impl DiffOperator {
    pub fn apply_kernel(&self, kernel: &RbfKernel, center: Point, x: Point) -> f64 {
        self.0.iter().map(|&(c, d)| c * kernel.derivative(d, center, x)).sum()
    }

    pub fn apply_monomial(&self, exp: (u32, u32), origin: Point, scale: f64, x: Point) -> f64 {
        self.0.iter().map(|&(c, d)| c * monomial_derivative(exp, origin, scale, d, x)).sum()
    }
}

pub trait ParametricOperator: Send + Sync {
    fn param_dim(&self) -> usize;

    /// The `mu`-independent pieces `L_q`.
    fn terms(&self) -> &[DiffOperator];

    /// Coefficients `theta_q(mu)`, one per term.
    fn theta(&self, mu: &[f64]) -> Vec<f64>;

    /// `(offset, slope)` with `theta(mu) = offset + slope * mu` when the
    /// dependence is affine.
    fn affine_theta(&self) -> Option<(Vec<f64>, DMatrix<f64>)> {
        None
    }

    fn forcing(&self, x: Point, mu: &[f64]) -> f64;

    fn boundary_value(&self, x: Point, mu: &[f64]) -> f64;

    fn description(&self) -> String;

    /// `L(mu)` applied to the kernel centred at `center`, evaluated at `x`.
    fn apply_to_kernel(&self, kernel: &RbfKernel, center: Point, x: Point, mu: &[f64]) -> f64 {
        self.terms().iter().zip(self.theta(mu)).map(|(t, th)| th * t.apply_kernel(kernel, center, x)).sum()
    }

    /// `L(mu)` applied to a scaled monomial, evaluated at `x`.
    fn apply_to_poly(&self, exp: (u32, u32), origin: Point, scale: f64, x: Point, mu: &[f64]) -> f64 {
        self.terms().iter().zip(self.theta(mu)).map(|(t, th)| th * t.apply_monomial(exp, origin, scale, x)).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HelmholtzSource {
    /// `f = -10 sin(8x(y-1))`, `g = 0`.
    Benchmark,
    /// Data generated from `u* = sin x cos y`.
    Manufactured,
}

/// `-u_xx - mu_1 u_yy - mu_2 u = f` with `u = g` on the boundary.
#[derive(Debug, Clone)]
pub struct Helmholtz {
    source: HelmholtzSource,
    terms: Vec<DiffOperator>,
}

impl Helmholtz {
    pub fn new(source: HelmholtzSource) -> Self {
        let terms = vec![
            DiffOperator(vec![(-1.0, Derivative::Dxx)]),
            DiffOperator(vec![(-1.0, Derivative::Dyy)]),
            DiffOperator(vec![(-1.0, Derivative::Value)]),
        ];
        Self { source, terms }
    }

    pub fn benchmark() -> Self {
        Self::new(HelmholtzSource::Benchmark)
    }

    pub fn manufactured() -> Self {
        Self::new(HelmholtzSource::Manufactured)
    }

    pub fn source(&self) -> HelmholtzSource {
        self.source
    }

    /// `sin x cos y`.
    pub fn manufactured_solution(x: Point) -> f64 {
        x[0].sin() * x[1].cos()
    }
}

impl ParametricOperator for Helmholtz {
    fn param_dim(&self) -> usize {
        2
    }

    fn terms(&self) -> &[DiffOperator] {
        &self.terms
    }

    fn theta(&self, mu: &[f64]) -> Vec<f64> {
        vec![1.0, mu[0], mu[1]]
    }

    fn affine_theta(&self) -> Option<(Vec<f64>, DMatrix<f64>)> {
        Some((vec![1.0, 0.0, 0.0], DMatrix::from_row_slice(3, 2, &[0.0, 0.0, 1.0, 0.0, 0.0, 1.0])))
    }

    fn forcing(&self, x: Point, mu: &[f64]) -> f64 {
        match self.source {
            HelmholtzSource::Benchmark => -10.0 * (8.0 * x[0] * (x[1] - 1.0)).sin(),
            // u_xx = u_yy = -u, so L u = (1 + mu_1 - mu_2) u.
            HelmholtzSource::Manufactured => (1.0 + mu[0] - mu[1]) * Self::manufactured_solution(x),
        }
    }

    fn boundary_value(&self, x: Point, _mu: &[f64]) -> f64 {
        match self.source {
            HelmholtzSource::Benchmark => 0.0,
            HelmholtzSource::Manufactured => Self::manufactured_solution(x),
        }
    }

    fn description(&self) -> String {
        match self.source {
            HelmholtzSource::Benchmark => "helmholtz -u_xx - mu1 u_yy - mu2 u = -10 sin(8x(y-1)), u=0 on boundary".into(),
            HelmholtzSource::Manufactured => "helmholtz with manufactured solution sin(x)cos(y)".into(),
        }
    }
}

/// `(-d_xx - mu_1 d_yy - mu_2) phi` for the IMQ kernel, written out directly.
pub fn helmholtz_apply_imq(mu: [f64; 2], center: Point, x: Point, eps: f64) -> f64 {
    let e2 = eps * eps;
    let d1 = x[0] - center[0];
    let d2 = x[1] - center[1];
    let s = 1.0 + e2 * (d1 * d1 + d2 * d2);
    let phi = 1.0 / s.sqrt();
    let phi_xx = -e2 * s.powf(-1.5) + 3.0 * e2 * e2 * d1 * d1 * s.powf(-2.5);
    let phi_yy = -e2 * s.powf(-1.5) + 3.0 * e2 * e2 * d2 * d2 * s.powf(-2.5);
    -phi_xx - mu[0] * phi_yy - mu[1] * phi
}

/// Second-order central difference of `D` applied to `f` at `x`.
pub fn central_difference<F: Fn(Point) -> f64>(f: F, d: Derivative, x: Point, h: f64) -> f64 {
    let at = |dx: f64, dy: f64| f([x[0] + dx, x[1] + dy]);
    match d {
        Derivative::Value => f(x),
        Derivative::Dx => (at(h, 0.0) - at(-h, 0.0)) / (2.0 * h),
        Derivative::Dy => (at(0.0, h) - at(0.0, -h)) / (2.0 * h),
        Derivative::Dxx => (at(h, 0.0) - 2.0 * f(x) + at(-h, 0.0)) / (h * h),
        Derivative::Dyy => (at(0.0, h) - 2.0 * f(x) + at(0.0, -h)) / (h * h),
        Derivative::Dxy => (at(h, h) - at(h, -h) - at(-h, h) + at(-h, -h)) / (4.0 * h * h),
    }
}

/// Compares `apply_to_kernel` against central differences of the kernel at
/// random probes (centres in `[-1,1]^2`, offsets up to `radius`, parameters in
/// `param_box`). Returns the worst relative discrepancy, or an error when it
/// exceeds `tol`.
pub fn finite_difference_check(
    op: &dyn ParametricOperator,
    kernel: &RbfKernel,
    param_box: &[(f64, f64)],
    probes: usize,
    radius: f64,
    step: f64,
    tol: f64,
    seed: u64,
) -> Result<f64> {
    if param_box.len() != op.param_dim() {
        return Err(Error::Dimension(format!("parameter box has {} entries, operator expects {}", param_box.len(), op.param_dim())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..probes {
        let c = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        let x = [c[0] + rng.random_range(-radius..radius), c[1] + rng.random_range(-radius..radius)];
        let mu: Vec<f64> = param_box.iter().map(|&(lo, hi)| rng.random_range(lo..=hi)).collect();
        let exact = op.apply_to_kernel(kernel, c, x, &mu);
        let phi = |p: Point| kernel.derivative(Derivative::Value, c, p);
        let mut approx = 0.0;
        let mut scale = 0.0;
        for (term, th) in op.terms().iter().zip(op.theta(&mu)) {
            for &(coef, d) in &term.0 {
                let v = th * coef * central_difference(phi, d, x, step);
                approx += v;
                scale += v.abs();
            }
        }
        let rel = (exact - approx).abs() / exact.abs().max(scale).max(f64::MIN_POSITIVE);
        worst = worst.max(rel);
    }
    if worst > tol {
        return Err(Error::InvalidInput(format!(
            "{}: closed-form kernel derivatives disagree with finite differences (relative {worst:.2e})",
            op.description()
        )));
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn helmholtz_at_center() {
        let eps = 3.0;
        let c = [0.3, -0.1];
        assert!((helmholtz_apply_imq([1.0, 0.0], c, c, eps) - 2.0 * eps * eps).abs() < 1e-12);
        assert!((helmholtz_apply_imq([0.0, 1.0], c, c, eps) - (eps * eps - 1.0)).abs() < 1e-12);
    }

    #[test]
    fn helmholtz_matches_differences_off_center() {
        let eps = 3.0;
        let c = [0.0, 0.0];
        let x = [0.1, 0.0];
        let k = RbfKernel::imq(eps).unwrap();
        let phi = |p: Point| k.derivative(Derivative::Value, c, p);
        let h = 1e-4;
        let fd = -central_difference(phi, Derivative::Dxx, x, h) - central_difference(phi, Derivative::Dyy, x, h) - phi(x);
        let exact = helmholtz_apply_imq([1.0, 1.0], c, x, eps);
        assert!((fd - exact).abs() <= 1e-6 * exact.abs());
    }

    #[test]
    fn trait_route_equals_closed_form() {
        let k = RbfKernel::imq(3.0).unwrap();
        let op = Helmholtz::benchmark();
        let (c, x, mu) = ([0.2, 0.1], [0.27, -0.03], [2.5, 1.3]);
        let a = op.apply_to_kernel(&k, c, x, &mu);
        let b = helmholtz_apply_imq(mu, c, x, 3.0);
        assert!((a - b).abs() < 1e-12 * b.abs().max(1.0));
    }

    #[test]
    fn operator_self_check_passes() {
        let k = RbfKernel::imq(3.0).unwrap();
        let op = Helmholtz::benchmark();
        let worst = finite_difference_check(&op, &k, &[(0.1, 4.0), (0.0, 2.0)], 100, 0.3, 1e-4, 1e-6, 7).unwrap();
        assert!(worst < 1e-6);
    }

    #[test]
    fn manufactured_forcing_is_consistent() {
        let op = Helmholtz::manufactured();
        let x = [0.3, 0.4];
        let mu = [1.7, 0.6];
        let u = |p: Point| Helmholtz::manufactured_solution(p);
        let h = 1e-4;
        let lu = -central_difference(u, Derivative::Dxx, x, h) - mu[0] * central_difference(u, Derivative::Dyy, x, h) - mu[1] * u(x);
        assert!((op.forcing(x, &mu) - lu).abs() < 1e-7);
    }
}
