//! Local interpolation systems and RBF-FD stencil weights.

use nalgebra::{DMatrix, DVector};

use super::kernel::{monomial_derivative, Derivative, PolyAugmentation, RbfKernel};
use super::operator::{DiffOperator, ParametricOperator};
use crate::error::{Error, Result};
use crate::geometry::{dist2, Point};
use crate::linalg::ColPivQr;

/// Local systems with a smaller pivot ratio are rejected as singular.
pub const SINGULAR_PIVOT_RATIO: f64 = 1e-12;

/// Centre and length scale of the polynomial basis on a stencil.
fn poly_frame(points: &[Point]) -> (Point, f64) {
    let origin = points[0];
    let scale = points.iter().map(|&p| dist2(p, origin)).fold(0.0, f64::max).sqrt();
    (origin, if scale > 0.0 { scale } else { 1.0 })
}

/// `[[A, P], [P^T, 0]]` with `A_jk = phi(|x_j - x_k|)` and `P_jk = p_k(x_j)`.
pub fn local_interp_matrix(points: &[Point], kernel: &RbfKernel, aug: &PolyAugmentation) -> DMatrix<f64> {
    let n = points.len();
    let q = aug.dim();
    let mut m = DMatrix::zeros(n + q, n + q);
    for j in 0..n {
        m[(j, j)] = kernel.eval_radius(0.0);
        for k in j + 1..n {
            let v = kernel.eval_radius(dist2(points[j], points[k]).sqrt());
            m[(j, k)] = v;
            m[(k, j)] = v;
        }
    }
    if q > 0 {
        let (origin, scale) = poly_frame(points);
        for (k, &exp) in aug.exponents().iter().enumerate() {
            for j in 0..n {
                let v = monomial_derivative(exp, origin, scale, Derivative::Value, points[j]);
                m[(j, n + k)] = v;
                m[(n + k, j)] = v;
            }
        }
    }
    m
}

/// Factored local system for one stencil, reusable across operators and parameters.
#[derive(Debug, Clone)]
pub struct StencilSystem {
    points: Vec<Point>,
    kernel: RbfKernel,
    aug: PolyAugmentation,
    qr: ColPivQr,
}

impl StencilSystem {
    /// Factors the local matrix. The stencil centre is `points[0]`.
    pub fn new(points: Vec<Point>, kernel: RbfKernel, aug: PolyAugmentation) -> std::result::Result<Self, f64> {
        let qr = ColPivQr::new(local_interp_matrix(&points, &kernel, &aug));
        let ratio = qr.pivot_ratio();
        if !(ratio >= SINGULAR_PIVOT_RATIO) {
            return Err(ratio);
        }
        Ok(Self { points, kernel, aug, qr })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn pivot_ratio(&self) -> f64 {
        self.qr.pivot_ratio()
    }

    /// Weights for a right-hand side given per kernel centre and per monomial.
    fn solve_rhs<K, P>(&self, on_kernel: K, on_poly: P) -> Vec<f64>
    where
        K: Fn(Point) -> f64,
        P: Fn((u32, u32), Point, f64) -> f64,
    {
        let n = self.points.len();
        let q = self.aug.dim();
        let mut rhs = DVector::zeros(n + q);
        for (j, &p) in self.points.iter().enumerate() {
            rhs[j] = on_kernel(p);
        }
        if q > 0 {
            let (origin, scale) = poly_frame(&self.points);
            for (k, &exp) in self.aug.exponents().iter().enumerate() {
                rhs[n + k] = on_poly(exp, origin, scale);
            }
        }
        let sol = self.qr.solve(&rhs);
        sol.as_slice()[..n].to_vec()
    }

    /// Weights of a constant-coefficient operator at the stencil centre.
    pub fn weights_for(&self, op: &DiffOperator) -> Vec<f64> {
        let c = self.points[0];
        self.solve_rhs(|p| op.apply_kernel(&self.kernel, p, c), |e, o, s| op.apply_monomial(e, o, s, c))
    }

    /// Weights of `L(mu)` at the stencil centre, from a single local solve.
    pub fn weights(&self, op: &dyn ParametricOperator, mu: &[f64]) -> Vec<f64> {
        let c = self.points[0];
        self.solve_rhs(|p| op.apply_to_kernel(&self.kernel, p, c, mu), |e, o, s| op.apply_to_poly(e, o, s, c, mu))
    }

    /// Coefficients `lambda` of the interpolant `sum lambda_j phi(|x - x_j|) (+ poly)`.
    pub fn interpolate(&self, values: &[f64]) -> Vec<f64> {
        let n = self.points.len();
        let mut rhs = DVector::zeros(n + self.aug.dim());
        rhs.as_mut_slice()[..n].copy_from_slice(values);
        self.qr.solve(&rhs).as_slice().to_vec()
    }
}

/// Weights of `L(mu)` at `points[center]` (the point is moved to the front).
pub fn stencil_weights(
    points: &[Point],
    kernel: &RbfKernel,
    aug: &PolyAugmentation,
    op: &dyn ParametricOperator,
    mu: &[f64],
    center: usize,
) -> Result<Vec<f64>> {
    let mut ordered = Vec::with_capacity(points.len());
    ordered.push(points[center]);
    ordered.extend(points.iter().enumerate().filter(|&(j, _)| j != center).map(|(_, &p)| p));
    let sys = StencilSystem::new(ordered, *kernel, *aug).map_err(|ratio| Error::SingularStencil { node: center, ratio })?;
    let w = sys.weights(op, mu);
    // Back to the caller's ordering.
    let mut out = vec![0.0; points.len()];
    out[center] = w[0];
    let mut k = 1;
    for (j, slot) in out.iter_mut().enumerate() {
        if j != center {
            *slot = w[k];
            k += 1;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rbf_fd::operator::Helmholtz;
    use nalgebra::DMatrix;

    struct Scaled(Vec<DiffOperator>, f64);

    impl ParametricOperator for Scaled {
        fn param_dim(&self) -> usize {
            1
        }
        fn terms(&self) -> &[DiffOperator] {
            &self.0
        }
        fn theta(&self, mu: &[f64]) -> Vec<f64> {
            vec![mu[0] * self.1]
        }
        fn forcing(&self, _: Point, _: &[f64]) -> f64 {
            0.0
        }
        fn boundary_value(&self, _: Point, _: &[f64]) -> f64 {
            0.0
        }
        fn description(&self) -> String {
            "test".into()
        }
    }

    #[test]
    fn small_interp_matrices() {
        let k = RbfKernel::imq(1.0).unwrap();
        let one = local_interp_matrix(&[[0.3, 0.3]], &k, &PolyAugmentation::NONE);
        assert_eq!(one, DMatrix::from_element(1, 1, 1.0));
        let two = local_interp_matrix(&[[0.0, 0.0], [1.0, 0.0]], &k, &PolyAugmentation::NONE);
        let s = 1.0 / 2f64.sqrt();
        assert!((two - DMatrix::from_row_slice(2, 2, &[1.0, s, s, 1.0])).amax() < 1e-16);
    }

    #[test]
    fn augmented_matrix_structure() {
        let k = RbfKernel::imq(2.0).unwrap();
        let pts = [[0.0, 0.0], [1.0, 0.2], [0.3, 0.9]];
        let m = local_interp_matrix(&pts, &k, &PolyAugmentation::degree(1));
        assert_eq!(m.shape(), (6, 6));
        assert_eq!(m, m.transpose());
        assert!(m.view((3, 3), (3, 3)).iter().all(|&v| v == 0.0));
        // Oracle: direct assembly with unscaled monomials, then the column scaling.
        let scale = pts.iter().map(|p| (p[0] * p[0] + p[1] * p[1]).sqrt()).fold(0.0, f64::max);
        for (j, p) in pts.iter().enumerate() {
            assert_eq!(m[(j, 3)], 1.0);
            assert!((m[(j, 4)] - p[0] / scale).abs() < 1e-15);
            assert!((m[(j, 5)] - p[1] / scale).abs() < 1e-15);
            for (l, q) in pts.iter().enumerate() {
                let r = ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt();
                assert!((m[(j, l)] - 1.0 / (1.0 + 4.0 * r * r).sqrt()).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn single_point_mass_term() {
        let k = RbfKernel::imq(3.0).unwrap();
        let op = Scaled(vec![DiffOperator(vec![(-1.0, Derivative::Value)])], 1.0);
        let w = stencil_weights(&[[0.1, 0.2]], &k, &PolyAugmentation::NONE, &op, &[0.7], 0).unwrap();
        assert!((w[0] + 0.7).abs() < 1e-15);
    }

    #[test]
    fn one_dimensional_second_difference() {
        // Collinear points are not unisolvent for bivariate polynomials; in the
        // flat-kernel limit the weights tend to the unique rule exact on quadratics.
        let h = 0.1;
        let k = RbfKernel::imq(0.1).unwrap();
        let pts = vec![[0.0, 0.0], [-h, 0.0], [h, 0.0]];
        let op = Scaled(vec![DiffOperator(vec![(-1.0, Derivative::Dxx)])], 1.0);
        let w = StencilSystem::new(pts, k, PolyAugmentation::NONE).unwrap().weights(&op, &[1.0]);
        let expected = [2.0 / (h * h), -1.0 / (h * h), -1.0 / (h * h)];
        for (a, b) in w.iter().zip(expected) {
            assert!((a - b).abs() < 1e-3 * b.abs(), "{w:?}");
        }
    }

    #[test]
    fn polynomial_reproduction_with_augmentation() {
        let k = RbfKernel::imq(3.0).unwrap();
        let op = Helmholtz::benchmark();
        let pts: Vec<Point> = (0..13)
            .map(|i| {
                let t = i as f64 * 2.399963;
                let r = 0.05 * (i as f64).sqrt();
                [0.1 + r * t.cos(), -0.2 + r * t.sin()]
            })
            .collect();
        let aug = PolyAugmentation::degree(2);
        let sys = StencilSystem::new(pts.clone(), k, aug).unwrap();
        let mu = [1.3, 0.4];
        let w = sys.weights(&op, &mu);
        let (origin, scale) = (pts[0], pts.iter().map(|&p| dist2(p, pts[0])).fold(0.0, f64::max).sqrt());
        for exp in aug.exponents() {
            let sampled: f64 = w
                .iter()
                .zip(&pts)
                .map(|(wj, &p)| wj * monomial_derivative(exp, origin, scale, Derivative::Value, p))
                .sum();
            let exact = op.apply_to_poly(exp, origin, scale, pts[0], &mu);
            assert!((sampled - exact).abs() <= 1e-9 * exact.abs().max(1.0), "{exp:?}: {sampled} vs {exact}");
        }
    }

    #[test]
    fn weights_equal_operator_on_interpolant() {
        let k = RbfKernel::imq(3.0).unwrap();
        let op = Helmholtz::benchmark();
        let pts: Vec<Point> = (0..13)
            .map(|i| {
                let t = i as f64 * 2.399963;
                let r = 0.15 * (i as f64).sqrt();
                [r * t.cos(), r * t.sin()]
            })
            .collect();
        let sys = StencilSystem::new(pts.clone(), k, PolyAugmentation::NONE).unwrap();
        let mu = [1.0, 1.0];
        let w = sys.weights(&op, &mu);
        let f: Vec<f64> = pts.iter().map(|p| (p[0] + 2.0 * p[1]).sin()).collect();
        let lambda = sys.interpolate(&f);
        let on_interpolant: f64 = lambda.iter().zip(&pts).map(|(l, &p)| l * op.apply_to_kernel(&k, p, pts[0], &mu)).sum();
        let by_weights: f64 = w.iter().zip(&f).map(|(a, b)| a * b).sum();
        assert!((on_interpolant - by_weights).abs() <= 1e-8 * on_interpolant.abs());
    }

    #[test]
    fn duplicate_points_are_singular() {
        let k = RbfKernel::imq(3.0).unwrap();
        let op = Helmholtz::benchmark();
        let pts = [[0.0, 0.0], [0.1, 0.0], [0.1, 0.0]];
        let err = stencil_weights(&pts, &k, &PolyAugmentation::NONE, &op, &[1.0, 1.0], 0).unwrap_err();
        assert!(matches!(err, Error::SingularStencil { node: 0, .. }));
    }

    #[test]
    fn center_reordering_is_transparent() {
        let k = RbfKernel::imq(3.0).unwrap();
        let op = Helmholtz::benchmark();
        let pts = [[0.1, 0.0], [0.0, 0.0], [0.0, 0.12], [-0.1, 0.03], [0.02, -0.09]];
        let mu = [2.0, 1.0];
        let w = stencil_weights(&pts, &k, &PolyAugmentation::NONE, &op, &mu, 1).unwrap();
        let front = vec![pts[1], pts[0], pts[2], pts[3], pts[4]];
        let w2 = StencilSystem::new(front, k, PolyAugmentation::NONE).unwrap().weights(&op, &mu);
        assert_eq!(w[1], w2[0]);
        assert_eq!(w[0], w2[1]);
        assert_eq!(w[4], w2[4]);
    }
}
