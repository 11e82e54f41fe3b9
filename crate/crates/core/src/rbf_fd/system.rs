//! Global RBF-FD system assembly and the high-fidelity solve.
//!
//! Interior rows carry stencil weights, boundary rows are the identity. The
//! solve eliminates the boundary unknowns (`L_II u_I = f - L_IB g`), so the
//! boundary part of the solution is `g` with no round-off.

use std::io::Write;
use std::sync::Arc;

use log::warn;
use rayon::prelude::*;

use super::kernel::{PolyAugmentation, RbfKernel};
use super::operator::ParametricOperator;
use super::weights::StencilSystem;
use crate::error::{Error, Result};
use crate::geometry::{NodeSet, Point, StencilSet};
use crate::linalg::{CsrMatrix, SparseLu};

#[derive(Debug, Clone, PartialEq)]
pub struct HighFidelitySystem {
    pub n_interior: usize,
    /// `N_I x N` interior rows.
    pub operator: CsrMatrix,
    /// Forcing on interior nodes followed by boundary data.
    pub rhs: Vec<f64>,
}

impl HighFidelitySystem {
    pub fn len(&self) -> usize {
        self.rhs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rhs.is_empty()
    }

    pub fn n_boundary(&self) -> usize {
        self.len() - self.n_interior
    }

    /// The square compact matrix with identity boundary rows.
    pub fn full_matrix(&self) -> CsrMatrix {
        let n = self.len();
        let mut rows: Vec<Vec<(u32, f64)>> = (0..self.n_interior)
            .map(|i| self.operator.row(i).map(|(j, v)| (j as u32, v)).collect())
            .collect();
        rows.extend((self.n_interior..n).map(|j| vec![(j as u32, 1.0)]));
        CsrMatrix::from_rows(n, rows)
    }

    /// Compact operator applied to `u`: `(L u, u_B)`.
    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        let mut out = self.operator.mul_vec(u);
        out.extend_from_slice(&u[self.n_interior..]);
        out
    }

    pub fn write_triplets_csv<W: Write>(&self, w: W) -> std::io::Result<()> {
        self.full_matrix().write_triplets_csv(w)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    /// Estimate the 1-norm condition number and warn above this value.
    pub condition_warning: Option<f64>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self { condition_warning: Some(1e12) }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HighFidelitySolution {
    pub u: Vec<f64>,
    pub condition_estimate: Option<f64>,
}

pub fn solve_high_fidelity(system: &HighFidelitySystem, opts: &SolveOptions) -> Result<HighFidelitySolution> {
    let n = system.len();
    let ni = system.n_interior;
    if system.operator.shape() != (ni, n) {
        return Err(Error::Dimension(format!("operator is {:?}, expected ({ni}, {n})", system.operator.shape())));
    }
    if ni == 0 {
        return Ok(HighFidelitySolution { u: system.rhs.clone(), condition_estimate: Some(1.0) });
    }
    let interior: Vec<usize> = (0..ni).collect();
    let boundary: Vec<usize> = (ni..n).collect();
    let l_ii = system.operator.submatrix(&interior, &interior);
    let l_ib = system.operator.submatrix(&interior, &boundary);
    let g = &system.rhs[ni..];
    let lifted = l_ib.mul_vec(g);
    let b: Vec<f64> = system.rhs[..ni].iter().zip(&lifted).map(|(f, l)| f - l).collect();

    let lu = SparseLu::factor(&l_ii).map_err(|e| Error::Singular(e.to_string()))?;
    let u_i = lu.solve(&b).map_err(|e| Error::Singular(e.to_string()))?;

    let condition_estimate = match opts.condition_warning {
        Some(limit) => {
            let est = l_ii.norm_one() * lu.inverse_norm_one_estimate()?;
            if est > limit {
                warn!("high-fidelity system condition estimate {est:.3e} exceeds {limit:.1e}");
            }
            Some(est)
        }
        None => None,
    };

    let mut u = u_i;
    u.extend_from_slice(g);
    Ok(HighFidelitySolution { u, condition_estimate })
}

fn factor_stencils(nodes: &NodeSet, stencils: &StencilSet, kernel: &RbfKernel, aug: &PolyAugmentation) -> Result<Vec<StencilSystem>> {
    if stencils.len() != nodes.n_interior() {
        return Err(Error::Dimension(format!(
            "{} stencils for {} interior nodes",
            stencils.len(),
            nodes.n_interior()
        )));
    }
    (0..stencils.len())
        .into_par_iter()
        .map(|i| {
            let pts: Vec<Point> = stencils.get(i).iter().map(|&j| nodes.point(j)).collect();
            StencilSystem::new(pts, *kernel, *aug).map_err(|ratio| Error::SingularStencil { node: i, ratio })
        })
        .collect()
}

fn scatter_rows(n: usize, stencils: &StencilSet, weights: Vec<Vec<f64>>) -> CsrMatrix {
    let rows = weights
        .into_iter()
        .enumerate()
        .map(|(i, w)| {
            let mut row: Vec<(u32, f64)> = stencils.get(i).iter().map(|&j| j as u32).zip(w).collect();
            row.sort_by_key(|&(j, _)| j);
            row
        })
        .collect();
    CsrMatrix::from_rows(n, rows)
}

fn rhs_for(nodes: &NodeSet, op: &dyn ParametricOperator, mu: &[f64]) -> Vec<f64> {
    let mut rhs: Vec<f64> = nodes.interior.iter().map(|&p| op.forcing(p, mu)).collect();
    rhs.extend(nodes.boundary.iter().map(|&p| op.boundary_value(p, mu)));
    rhs
}

/// Computes every stencil's weights for `L(mu)` and scatters them into the
/// interior rows. Rows are independent and filled concurrently.
pub fn assemble_system(
    nodes: &NodeSet,
    stencils: &StencilSet,
    kernel: &RbfKernel,
    aug: &PolyAugmentation,
    op: &dyn ParametricOperator,
    mu: &[f64],
) -> Result<HighFidelitySystem> {
    if mu.len() != op.param_dim() {
        return Err(Error::Dimension(format!("parameter has {} entries, operator expects {}", mu.len(), op.param_dim())));
    }
    let systems = factor_stencils(nodes, stencils, kernel, aug)?;
    let weights: Vec<Vec<f64>> = systems.par_iter().map(|s| s.weights(op, mu)).collect();
    Ok(HighFidelitySystem {
        n_interior: nodes.n_interior(),
        operator: scatter_rows(nodes.len(), stencils, weights),
        rhs: rhs_for(nodes, op, mu),
    })
}

/// Parameter-independent term matrices `L_q` with `L(mu) = sum_q theta_q(mu) L_q`.
///
/// Built once; per-parameter systems then cost one pass over the nonzeros.
#[derive(Clone)]
pub struct AffineDiscretization {
    pub nodes: NodeSet,
    pub terms: Vec<CsrMatrix>,
    op: Arc<dyn ParametricOperator>,
}

impl std::fmt::Debug for AffineDiscretization {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AffineDiscretization")
            .field("n", &self.nodes.len())
            .field("n_interior", &self.nodes.n_interior())
            .field("terms", &self.terms.len())
            .field("op", &self.op.description())
            .finish()
    }
}

impl AffineDiscretization {
    pub fn new(
        nodes: NodeSet,
        stencils: &StencilSet,
        kernel: &RbfKernel,
        aug: &PolyAugmentation,
        op: Arc<dyn ParametricOperator>,
    ) -> Result<Self> {
        let systems = factor_stencils(&nodes, stencils, kernel, aug)?;
        let terms = op
            .terms()
            .iter()
            .map(|t| {
                let w: Vec<Vec<f64>> = systems.par_iter().map(|s| s.weights_for(t)).collect();
                scatter_rows(nodes.len(), stencils, w)
            })
            .collect();
        Ok(Self { nodes, terms, op })
    }

    pub fn operator(&self) -> &dyn ParametricOperator {
        self.op.as_ref()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn n_interior(&self) -> usize {
        self.nodes.n_interior()
    }

    /// `sum_q theta_q(mu) L_q`; all terms share one sparsity pattern.
    pub fn interior_operator(&self, mu: &[f64]) -> CsrMatrix {
        let theta = self.op.theta(mu);
        let mut out = self.terms[0].scale(theta[0]);
        for (t, &th) in self.terms.iter().zip(&theta).skip(1) {
            debug_assert!(t.same_pattern(&out));
            for (o, v) in out.values_mut().iter_mut().zip(t.values()) {
                *o += th * v;
            }
        }
        out
    }

    pub fn rhs(&self, mu: &[f64]) -> Vec<f64> {
        rhs_for(&self.nodes, self.op.as_ref(), mu)
    }

    pub fn system(&self, mu: &[f64]) -> HighFidelitySystem {
        HighFidelitySystem { n_interior: self.n_interior(), operator: self.interior_operator(mu), rhs: self.rhs(mu) }
    }

    pub fn solve(&self, mu: &[f64], opts: &SolveOptions) -> Result<Vec<f64>> {
        Ok(solve_high_fidelity(&self.system(mu), opts)?.u)
    }
}
