//! Thin SVD by one-sided Jacobi rotations.
//!
//! Columns of a working copy of `A` are rotated pairwise until they are
//! mutually orthogonal; the column norms are then the singular values. The
//! sweep order is fixed (cyclic by column pairs), so the result is
//! bit-for-bit reproducible. Tall matrices are processed directly, wide ones
//! through their transpose.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone)]
pub struct ThinSvd {
    /// `m x k` left singular vectors, `k = min(m, n)`.
    pub u: DMatrix<f64>,
    /// Non-increasing, length `k`.
    pub singular_values: Vec<f64>,
    /// `n x k` right singular vectors.
    pub v: DMatrix<f64>,
    pub sweeps: usize,
}

impl ThinSvd {
    /// Singular values above `max(m, n) * eps * sigma_1`; exact zeros and
    /// round-off level values are treated as zero.
    pub fn numerical_rank(&self) -> usize {
        let (m, n) = (self.u.nrows(), self.v.nrows());
        let Some(&s1) = self.singular_values.first() else { return 0 };
        if s1 == 0.0 {
            return 0;
        }
        let cutoff = s1 * m.max(n) as f64 * f64::EPSILON;
        self.singular_values.iter().take_while(|&&s| s > cutoff).count()
    }
}

const MAX_SWEEPS: usize = 80;

pub fn thin_svd(a: &DMatrix<f64>) -> ThinSvd {
    if a.nrows() < a.ncols() {
        let t = thin_svd(&a.transpose());
        return ThinSvd { u: t.v, singular_values: t.singular_values, v: t.u, sweeps: t.sweeps };
    }
    let (m, n) = a.shape();
    let mut w = a.clone();
    let mut v = DMatrix::<f64>::identity(n, n);
    let tol = f64::EPSILON * (m as f64).sqrt();

    let mut sweeps = 0;
    for sweep in 0..MAX_SWEEPS {
        sweeps = sweep + 1;
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let (alpha, beta, gamma) = {
                    let cp = w.column(p);
                    let cq = w.column(q);
                    (cp.norm_squared(), cq.norm_squared(), cp.dot(&cq))
                };
                if gamma == 0.0 || gamma.abs() <= tol * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(&mut w, p, q, c, s);
                rotate(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            break;
        }
    }

    let mut sigma: Vec<f64> = (0..n).map(|j| w.column(j).norm()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    // Stable sort keeps equal singular values in column order.
    order.sort_by(|&i, &j| sigma[j].partial_cmp(&sigma[i]).unwrap_or(std::cmp::Ordering::Equal));

    let mut u = DMatrix::zeros(m, n);
    let mut vs = DMatrix::zeros(n, n);
    let sorted: Vec<f64> = order.iter().map(|&j| sigma[j]).collect();
    for (k, &j) in order.iter().enumerate() {
        let s = sigma[j];
        let mut uj: DVector<f64> = if s > 0.0 { w.column(j) / s } else { DVector::zeros(m) };
        let mut vj: DVector<f64> = v.column(j).into_owned();
        // Largest-magnitude entry (first on ties) made positive.
        let flip = if s > 0.0 { dominant(uj.as_slice()) < 0.0 } else { dominant(vj.as_slice()) < 0.0 };
        if flip {
            uj = -uj;
            vj = -vj;
        }
        u.set_column(k, &uj);
        vs.set_column(k, &vj);
    }
    sigma = sorted;

    ThinSvd { u, singular_values: sigma, v: vs, sweeps }
}

/// Entry of largest magnitude, first on ties.
fn dominant(x: &[f64]) -> f64 {
    let mut best = 0.0f64;
    for &v in x {
        if v.abs() > best.abs() {
            best = v;
        }
    }
    best
}

fn rotate(m: &mut DMatrix<f64>, p: usize, q: usize, c: f64, s: f64) {
    let rows = m.nrows();
    for i in 0..rows {
        let x = m[(i, p)];
        let y = m[(i, q)];
        m[(i, p)] = c * x - s * y;
        m[(i, q)] = s * x + c * y;
    }
}
