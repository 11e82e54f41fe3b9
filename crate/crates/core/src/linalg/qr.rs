//! Householder QR with column-norm pivoting.
//!
//! Used for the small dense stencil systems and for the reduced least-squares
//! solve. Pivot columns are chosen by largest remaining column norm, so the
//! diagonal of `R` is non-increasing in magnitude and doubles as a cheap rank
//! indicator.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone)]
pub struct ColPivQr {
    /// Householder vectors below the diagonal, `R` on and above it.
    packed: DMatrix<f64>,
    /// Householder scalars `tau_k` with `H_k = I - tau_k v_k v_k^T`, `v_k[k] = 1`.
    tau: Vec<f64>,
    /// `perm[k]` is the original column placed at position `k`.
    perm: Vec<usize>,
}

impl ColPivQr {
    pub fn new(mut a: DMatrix<f64>) -> Self {
        let (m, n) = a.shape();
        let steps = m.min(n);
        let mut perm: Vec<usize> = (0..n).collect();
        let mut tau = vec![0.0; steps];

        let mut norms: Vec<f64> = (0..n).map(|j| a.column(j).norm()).collect();
        let mut reference = norms.clone();

        for k in 0..steps {
            // Pivot: largest remaining column norm, lowest index on ties.
            let mut p = k;
            for j in k + 1..n {
                if norms[j] > norms[p] {
                    p = j;
                }
            }
            if p != k {
                a.swap_columns(k, p);
                perm.swap(k, p);
                norms.swap(k, p);
                reference.swap(k, p);
            }

            // Householder reflector for a[k.., k].
            let alpha = a[(k, k)];
            let tail_sq: f64 = (k + 1..m).map(|i| a[(i, k)] * a[(i, k)]).sum();
            if tail_sq == 0.0 {
                tau[k] = 0.0;
            } else {
                let norm = (alpha * alpha + tail_sq).sqrt();
                let beta = if alpha >= 0.0 { -norm } else { norm };
                let scale = 1.0 / (alpha - beta);
                for i in k + 1..m {
                    a[(i, k)] *= scale;
                }
                tau[k] = (beta - alpha) / beta;
                a[(k, k)] = beta;

                for j in k + 1..n {
                    let mut dot = a[(k, j)];
                    for i in k + 1..m {
                        dot += a[(i, k)] * a[(i, j)];
                    }
                    let f = tau[k] * dot;
                    a[(k, j)] -= f;
                    for i in k + 1..m {
                        let v = a[(i, k)];
                        a[(i, j)] -= f * v;
                    }
                }
            }

            // Downdate remaining norms; recompute when cancellation sets in.
            for j in k + 1..n {
                if norms[j] == 0.0 {
                    continue;
                }
                let ratio = a[(k, j)].abs() / norms[j];
                let factor = (1.0 - ratio * ratio).max(0.0);
                let ratio_ref = norms[j] / reference[j];
                if factor * ratio_ref * ratio_ref <= 1e-8 {
                    let fresh: f64 = (k + 1..m).map(|i| a[(i, j)] * a[(i, j)]).sum::<f64>().sqrt();
                    norms[j] = fresh;
                    reference[j] = fresh;
                } else {
                    norms[j] *= factor.sqrt();
                }
            }
        }

        Self { packed: a, tau, perm }
    }

    pub fn nrows(&self) -> usize {
        self.packed.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.packed.ncols()
    }

    pub fn permutation(&self) -> &[usize] {
        &self.perm
    }

    /// Magnitudes of the diagonal of `R`, non-increasing.
    pub fn pivots(&self) -> Vec<f64> {
        (0..self.tau.len()).map(|k| self.packed[(k, k)].abs()).collect()
    }

    /// Ratio of the smallest to the largest pivot magnitude (0 for an empty or zero matrix).
    pub fn pivot_ratio(&self) -> f64 {
        let p = self.pivots();
        match (p.first(), p.last()) {
            (Some(&first), Some(&last)) if first > 0.0 => last / first,
            _ => 0.0,
        }
    }

    /// The leading `min(m, n) x n` upper-trapezoidal factor (in permuted column order).
    pub fn r(&self) -> DMatrix<f64> {
        let k = self.tau.len();
        DMatrix::from_fn(k, self.ncols(), |i, j| if j >= i { self.packed[(i, j)] } else { 0.0 })
    }

    /// Applies `Q^T` to `b` in place.
    pub fn apply_qt(&self, b: &mut DVector<f64>) {
        let m = self.nrows();
        for k in 0..self.tau.len() {
            if self.tau[k] == 0.0 {
                continue;
            }
            let mut dot = b[k];
            for i in k + 1..m {
                dot += self.packed[(i, k)] * b[i];
            }
            let f = self.tau[k] * dot;
            b[k] -= f;
            for i in k + 1..m {
                b[i] -= f * self.packed[(i, k)];
            }
        }
    }

    /// Minimizes `||A x - b||_2` for `m >= n`, full column rank assumed
    /// (check [`pivot_ratio`](Self::pivot_ratio) first). Square systems are the `m == n` case.
    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let n = self.ncols();
        assert!(self.nrows() >= n, "least-squares solve needs rows >= cols");
        assert_eq!(b.len(), self.nrows(), "rhs length mismatch");
        let mut y = b.clone();
        self.apply_qt(&mut y);
        let mut z = vec![0.0; n];
        for i in (0..n).rev() {
            let mut s = y[i];
            for j in i + 1..n {
                s -= self.packed[(i, j)] * z[j];
            }
            z[i] = s / self.packed[(i, i)];
        }
        let mut x = DVector::zeros(n);
        for (k, &col) in self.perm.iter().enumerate() {
            x[col] = z[k];
        }
        x
    }

    /// Column-by-column [`solve`](Self::solve).
    pub fn solve_matrix(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.ncols(), b.ncols());
        for j in 0..b.ncols() {
            let x = self.solve(&b.column(j).into_owned());
            out.set_column(j, &x);
        }
        out
    }
}
