//! Reduced least-squares systems `B_mu c = (f; g)` on a POD basis.

use log::warn;
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::ColPivQr;
use crate::rbf_fd::{AffineDiscretization, HighFidelitySystem};

/// Columns with relative singular value at or below this are rank deficient.
pub const RANK_TOLERANCE: f64 = 1e-10;
/// Condition numbers above this are reported.
pub const CONDITION_WARNING: f64 = 1e8;

#[derive(Debug, Clone, PartialEq)]
pub struct ReducedSystem {
    /// `N x n_pod`: interior rows `L(mu) V`, boundary rows `V_B`.
    pub b: DMatrix<f64>,
    pub rhs: DVector<f64>,
}

/// Applies the compact operator of `system` to every basis column.
pub fn assemble_reduced(system: &HighFidelitySystem, v: &DMatrix<f64>) -> Result<ReducedSystem> {
    let n = system.len();
    if v.nrows() != n {
        return Err(Error::Dimension(format!("basis has {} rows, system has {n}", v.nrows())));
    }
    let ni = system.n_interior;
    let lv = system.operator.mul_dense(v);
    let mut b = DMatrix::zeros(n, v.ncols());
    b.rows_mut(0, ni).copy_from(&lv);
    b.rows_mut(ni, n - ni).copy_from(&v.rows(ni, n - ni));
    Ok(ReducedSystem { b, rhs: DVector::from_column_slice(&system.rhs) })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LsSolution {
    pub c: DVector<f64>,
    /// `sigma_max / sigma_min` of `B`.
    pub condition: f64,
}

/// `argmin |B c - rhs|` by column-pivoted Householder QR.
pub fn solve_reduced_ls(rs: &ReducedSystem) -> Result<LsSolution> {
    let (m, n) = rs.b.shape();
    if rs.rhs.len() != m {
        return Err(Error::Dimension(format!("rhs length {} for {m} rows", rs.rhs.len())));
    }
    if m < n {
        return Err(Error::Dimension(format!("underdetermined reduced system {m}x{n}")));
    }
    if n == 0 {
        return Ok(LsSolution { c: DVector::zeros(0), condition: 1.0 });
    }
    let qr = ColPivQr::new(rs.b.clone());
    // R carries the singular values of B.
    let sv = qr.r().singular_values();
    let sigma_max = sv.max();
    let sigma_min = sv.min();
    if !(sigma_min > RANK_TOLERANCE * sigma_max) {
        return Err(Error::RankDeficient { sigma_min, sigma_max });
    }
    let condition = sigma_max / sigma_min;
    if condition > CONDITION_WARNING {
        warn!("reduced system condition number {condition:.3e} exceeds {CONDITION_WARNING:.0e}");
    }
    let c = qr.solve(&rs.rhs);
    if c.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("reduced least-squares solution".into()));
    }
    Ok(LsSolution { c, condition })
}

pub fn reduced_solution(v: &DMatrix<f64>, c: &DVector<f64>) -> DVector<f64> {
    v * c
}

/// `B(mu)` from precomputed products `L_q V`, so a new parameter costs a few
/// dense axpys instead of a sparse assembly.
#[derive(Debug, Clone)]
pub struct AffineReducedOperator {
    disc: AffineDiscretization,
    /// `L_q V`, each `N_I x n_pod`.
    pub interior_terms: Vec<DMatrix<f64>>,
    /// Boundary rows of `V`.
    pub boundary: DMatrix<f64>,
}

impl AffineReducedOperator {
    pub fn new(disc: &AffineDiscretization, v: &DMatrix<f64>) -> Result<Self> {
        let n = disc.len();
        if v.nrows() != n {
            return Err(Error::Dimension(format!("basis has {} rows, discretization has {n}", v.nrows())));
        }
        let ni = disc.n_interior();
        let interior_terms = disc.terms.iter().map(|t| t.mul_dense(v)).collect();
        Ok(Self { disc: disc.clone(), interior_terms, boundary: v.rows(ni, n - ni).into_owned() })
    }

    pub fn n_pod(&self) -> usize {
        self.boundary.ncols()
    }

    pub fn b_matrix(&self, mu: &[f64]) -> DMatrix<f64> {
        let theta = self.disc.operator().theta(mu);
        let ni = self.disc.n_interior();
        let mut b = DMatrix::zeros(self.disc.len(), self.n_pod());
        {
            let mut top = b.rows_mut(0, ni);
            for (t, &th) in self.interior_terms.iter().zip(&theta) {
                top.zip_apply(t, |a, b| *a += th * b);
            }
        }
        b.rows_mut(ni, self.boundary.nrows()).copy_from(&self.boundary);
        b
    }

    pub fn assemble(&self, mu: &[f64]) -> ReducedSystem {
        ReducedSystem { b: self.b_matrix(mu), rhs: DVector::from_vec(self.disc.rhs(mu)) }
    }

    pub fn solve(&self, mu: &[f64]) -> Result<LsSolution> {
        solve_reduced_ls(&self.assemble(mu))
    }

    /// `(B_c, [B_1, ..., B_p])` with `B(mu) = B_c + sum_k mu_k B_k`, when the
    /// operator coefficients are affine in `mu`.
    pub fn affine_parts(&self) -> Option<(DMatrix<f64>, Vec<DMatrix<f64>>)> {
        let (offset, slope) = self.disc.operator().affine_theta()?;
        let ni = self.disc.n_interior();
        let (n, k) = (self.disc.len(), self.n_pod());
        let mut constant = DMatrix::zeros(n, k);
        {
            let mut top = constant.rows_mut(0, ni);
            for (t, &a) in self.interior_terms.iter().zip(&offset) {
                top.zip_apply(t, |x, b| *x += a * b);
            }
        }
        constant.rows_mut(ni, n - ni).copy_from(&self.boundary);
        let linear = (0..slope.ncols())
            .map(|p| {
                let mut m = DMatrix::zeros(n, k);
                let mut top = m.rows_mut(0, ni);
                for (q, t) in self.interior_terms.iter().enumerate() {
                    let s = slope[(q, p)];
                    top.zip_apply(t, |x, b| *x += s * b);
                }
                m
            })
            .collect();
        Some((constant, linear))
    }

    pub fn discretization(&self) -> &AffineDiscretization {
        &self.disc
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::CsrMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(m: usize, n: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(m, n, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn identity_operator_maps_basis_to_itself() {
        let n = 6;
        let ni = 4;
        let op = CsrMatrix::from_triplets(ni, n, &(0..ni).map(|i| (i, i, 1.0)).collect::<Vec<_>>());
        let sys = HighFidelitySystem { n_interior: ni, operator: op, rhs: vec![0.0; n] };
        let v = random(n, 2, 1).qr().q();
        let rs = assemble_reduced(&sys, &v).unwrap();
        assert_eq!(rs.b, v);
    }

    #[test]
    fn identity_block_and_orthonormal_columns() {
        let mut b = DMatrix::zeros(5, 2);
        b[(0, 0)] = 1.0;
        b[(1, 1)] = 1.0;
        let mut rhs = DVector::zeros(5);
        rhs[0] = 1.0;
        let c = solve_reduced_ls(&ReducedSystem { b, rhs }).unwrap().c;
        assert!((c - DVector::from_vec(vec![1.0, 0.0])).amax() < 1e-15);

        let q = random(8, 3, 2).qr().q();
        let rhs = random(8, 1, 3).column(0).into_owned();
        let c = solve_reduced_ls(&ReducedSystem { b: q.clone(), rhs: rhs.clone() }).unwrap().c;
        assert!((c - q.tr_mul(&rhs)).amax() < 1e-14);
    }

    #[test]
    fn matches_normal_equations() {
        let b = random(50, 5, 4);
        let rhs = random(50, 1, 5).column(0).into_owned();
        let c = solve_reduced_ls(&ReducedSystem { b: b.clone(), rhs: rhs.clone() }).unwrap().c;
        let expected = (b.transpose() * &b).lu().solve(&(b.transpose() * &rhs)).unwrap();
        assert!((&c - &expected).norm() <= 1e-8 * expected.norm());
    }

    #[test]
    fn rank_deficiency_is_reported() {
        let mut b = random(10, 3, 6);
        let col = b.column(0) * 2.0;
        b.set_column(2, &col);
        let err = solve_reduced_ls(&ReducedSystem { b, rhs: DVector::zeros(10) }).unwrap_err();
        assert!(matches!(err, Error::RankDeficient { .. }));
    }

    #[test]
    fn zero_and_unit_coefficients() {
        let v = random(7, 3, 7).qr().q();
        assert_eq!(reduced_solution(&v, &DVector::zeros(3)), DVector::zeros(7));
        let e1 = DVector::from_vec(vec![0.0, 1.0, 0.0]);
        assert_eq!(reduced_solution(&v, &e1), v.column(1).into_owned());
    }
}
