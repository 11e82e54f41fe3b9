//! ReLU network calculus.
//!
//! A [`ReluNetwork`] is a list of affine layers with ReLU between them. The
//! structural operations (composition, identity blocks, parallel stacking)
//! are exact, and the approximation builders in [`approx`] and
//! [`parametric`] assemble multiplication, powering, Neumann-series inverse
//! and least-squares coefficient networks from them.
//!
//! Layers are stored sparse. A row is evaluated as a sequential sum over its
//! stored entries in column order, followed by the bias, so a layer with at
//! most one nonzero per row reproduces its input bit for bit. Identity blocks
//! interleave the `+x_j` and `-x_j` channels for the same reason.

pub mod approx;
pub mod parametric;
pub mod verify;

pub use approx::{inverse_net, mult_net, neumann_product_check, power_net, InverseNetConfig};
pub use parametric::{affine_network, btb_inverse_net, parametric_map_net, ParametricNetConfig};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::CsrMatrix;

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weight: CsrMatrix,
    pub bias: Vec<f64>,
}

impl Layer {
    pub fn new(weight: CsrMatrix, bias: Vec<f64>) -> Result<Self> {
        if bias.len() != weight.nrows() {
            return Err(Error::Dimension(format!("bias of length {} for {} rows", bias.len(), weight.nrows())));
        }
        Ok(Self { weight, bias })
    }

    pub fn dense(weight: &DMatrix<f64>, bias: &DVector<f64>) -> Result<Self> {
        Self::new(CsrMatrix::from_dense(weight), bias.as_slice().to_vec())
    }

    /// Nonzero weights plus nonzero biases.
    pub fn n_params(&self) -> usize {
        self.weight.count_nonzero() + self.bias.iter().filter(|b| **b != 0.0).count()
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = self.weight.mul_vec(x);
        for (v, b) in y.iter_mut().zip(&self.bias) {
            *v += b;
        }
        y
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReluNetwork {
    layers: Vec<Layer>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SizeReport {
    pub depth: usize,
    pub params: usize,
    pub layer_params: Vec<usize>,
    /// `(n_0, n_1, ..., n_L)`.
    pub widths: Vec<usize>,
}

fn relu(v: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        0.0
    }
}

impl ReluNetwork {
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidInput("a network needs at least one layer".into()));
        }
        for (k, pair) in layers.windows(2).enumerate() {
            if pair[1].weight.ncols() != pair[0].weight.nrows() {
                return Err(Error::Dimension(format!(
                    "layer {} expects {} inputs, layer {k} produces {}",
                    k + 1,
                    pair[1].weight.ncols(),
                    pair[0].weight.nrows()
                )));
            }
        }
        Ok(Self { layers })
    }

    /// One affine layer `x -> W x + b`.
    pub fn affine(weight: CsrMatrix, bias: Vec<f64>) -> Result<Self> {
        Self::new(vec![Layer::new(weight, bias)?])
    }

    pub fn from_dense(layers: &[(DMatrix<f64>, DVector<f64>)]) -> Result<Self> {
        Self::new(layers.iter().map(|(w, b)| Layer::dense(w, b)).collect::<Result<_>>()?)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn into_layers(self) -> Vec<Layer> {
        self.layers
    }

    /// Number of affine layers `L`.
    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    /// Total nonzero parameter count `M`.
    pub fn n_params(&self) -> usize {
        self.layers.iter().map(Layer::n_params).sum()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weight.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("non-empty").weight.nrows()
    }

    pub fn widths(&self) -> Vec<usize> {
        std::iter::once(self.input_dim()).chain(self.layers.iter().map(|l| l.weight.nrows())).collect()
    }

    pub fn size_report(&self) -> SizeReport {
        SizeReport {
            depth: self.depth(),
            params: self.n_params(),
            layer_params: self.layers.iter().map(Layer::n_params).collect(),
            widths: self.widths(),
        }
    }

    pub fn realize(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim() {
            return Err(Error::Dimension(format!("input of length {}, network expects {}", x.len(), self.input_dim())));
        }
        let last = self.layers.len() - 1;
        let mut a = x.to_vec();
        for (k, layer) in self.layers.iter().enumerate() {
            a = layer.apply(&a);
            if k < last {
                a.iter_mut().for_each(|v| *v = relu(*v));
            }
        }
        Ok(a)
    }

    /// Realizes every column of `xs` (`n_0 x m`).
    pub fn realize_columns(&self, xs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let cols: Vec<Vec<f64>> =
            (0..xs.ncols()).into_par_iter().map(|j| self.realize(xs.column(j).as_slice())).collect::<Result<_>>()?;
        Ok(DMatrix::from_fn(self.output_dim(), xs.ncols(), |i, j| cols[j][i]))
    }

    /// Dense copies of every layer, for persistence.
    pub fn to_dense(&self) -> Vec<(DMatrix<f64>, DVector<f64>)> {
        self.layers.iter().map(|l| (l.weight.to_dense(), DVector::from_column_slice(&l.bias))).collect()
    }

    /// Replaces the last layer by `(s W_L, s b_L + shift)`.
    pub fn with_scaled_output(mut self, s: f64, shift: &[f64]) -> Result<Self> {
        let last = self.layers.last_mut().expect("non-empty");
        if shift.len() != last.bias.len() {
            return Err(Error::Dimension(format!("shift of length {} for {} outputs", shift.len(), last.bias.len())));
        }
        last.weight = last.weight.scale(s);
        for (b, t) in last.bias.iter_mut().zip(shift) {
            *b = s * *b + t;
        }
        Ok(self)
    }
}

/// Column-major flattening of a matrix.
pub fn vec_of(a: &DMatrix<f64>) -> Vec<f64> {
    a.as_slice().to_vec()
}

/// Inverse of [`vec_of`] for an `n x k` matrix.
pub fn matr(v: &[f64], n: usize, k: usize) -> Result<DMatrix<f64>> {
    if v.len() != n * k {
        return Err(Error::Dimension(format!("vector of length {} cannot hold a {n}x{k} matrix", v.len())));
    }
    Ok(DMatrix::from_column_slice(n, k, v))
}

/// `Phi1 o Phi2`: the last layer of `phi2` is fused with the first layer of `phi1`.
pub fn concat(phi1: &ReluNetwork, phi2: &ReluNetwork) -> Result<ReluNetwork> {
    if phi1.input_dim() != phi2.output_dim() {
        return Err(Error::Dimension(format!(
            "outer network takes {} inputs, inner produces {}",
            phi1.input_dim(),
            phi2.output_dim()
        )));
    }
    let inner_last = phi2.layers.last().expect("non-empty");
    let outer_first = &phi1.layers[0];
    let weight = outer_first.weight.mul_sparse(&inner_last.weight);
    let mut bias = outer_first.weight.mul_vec(&inner_last.bias);
    for (b, c) in bias.iter_mut().zip(&outer_first.bias) {
        *b += c;
    }
    let mut layers = phi2.layers[..phi2.layers.len() - 1].to_vec();
    layers.push(Layer { weight, bias });
    layers.extend_from_slice(&phi1.layers[1..]);
    ReluNetwork::new(layers)
}

/// Exact identity on `R^n` with `depth` layers. Nonzero weights are `+-1`.
pub fn identity_net(n: usize, depth: usize) -> Result<ReluNetwork> {
    match depth {
        0 => Err(Error::InvalidInput("identity network needs at least one layer".into())),
        1 => ReluNetwork::affine(CsrMatrix::identity(n), vec![0.0; n]),
        _ => {
            // Rows 2j and 2j+1 carry relu(x_j) and relu(-x_j).
            let split = (0..2 * n).map(|r| vec![((r / 2) as u32, if r % 2 == 0 { 1.0 } else { -1.0 })]).collect();
            let merge = (0..n).map(|j| vec![(2 * j as u32, 1.0), (2 * j as u32 + 1, -1.0)]).collect();
            let mut layers = vec![Layer { weight: CsrMatrix::from_rows(n, split), bias: vec![0.0; 2 * n] }];
            for _ in 0..depth - 2 {
                layers.push(Layer { weight: CsrMatrix::identity(2 * n), bias: vec![0.0; 2 * n] });
            }
            layers.push(Layer { weight: CsrMatrix::from_rows(2 * n, merge), bias: vec![0.0; n] });
            ReluNetwork::new(layers)
        }
    }
}

/// `Phi1 (.) Phi2 = Phi1 o Id_2 o Phi2`, with depth `L1 + L2`.
pub fn sparse_concat(phi1: &ReluNetwork, phi2: &ReluNetwork) -> Result<ReluNetwork> {
    if phi1.input_dim() != phi2.output_dim() {
        return Err(Error::Dimension(format!(
            "outer network takes {} inputs, inner produces {}",
            phi1.input_dim(),
            phi2.output_dim()
        )));
    }
    let id = identity_net(phi2.output_dim(), 2)?;
    concat(phi1, &concat(&id, phi2)?)
}

/// Pads `phi` with an identity block on its output until it has `depth` layers.
pub fn extend_to_depth(phi: &ReluNetwork, depth: usize) -> Result<ReluNetwork> {
    match depth.cmp(&phi.depth()) {
        std::cmp::Ordering::Less => {
            Err(Error::InvalidInput(format!("cannot shrink a depth-{} network to depth {depth}", phi.depth())))
        }
        std::cmp::Ordering::Equal => Ok(phi.clone()),
        std::cmp::Ordering::Greater => sparse_concat(&identity_net(phi.output_dim(), depth - phi.depth())?, phi),
    }
}

fn block_diagonal(blocks: &[&CsrMatrix]) -> CsrMatrix {
    let ncols = blocks.iter().map(|b| b.ncols()).sum();
    let mut rows = Vec::with_capacity(blocks.iter().map(|b| b.nrows()).sum());
    let mut offset = 0u32;
    for b in blocks {
        for i in 0..b.nrows() {
            rows.push(b.row(i).map(|(j, v)| (j as u32 + offset, v)).collect());
        }
        offset += b.ncols() as u32;
    }
    CsrMatrix::from_rows(ncols, rows)
}

/// Block-diagonal stacking acting on concatenated inputs. Shallower networks
/// are first padded with [`extend_to_depth`].
pub fn parallelize(nets: &[&ReluNetwork]) -> Result<ReluNetwork> {
    let first = nets.first().ok_or_else(|| Error::InvalidInput("nothing to parallelize".into()))?;
    if nets.iter().any(|n| n.input_dim() != first.input_dim()) {
        return Err(Error::Dimension("parallelized networks must share their input dimension".into()));
    }
    if nets.len() == 1 {
        return Ok((*first).clone());
    }
    let depth = nets.iter().map(|n| n.depth()).max().expect("non-empty");
    let padded: Vec<ReluNetwork> = nets.iter().map(|n| extend_to_depth(n, depth)).collect::<Result<_>>()?;
    let layers = (0..depth)
        .map(|k| {
            let weights: Vec<&CsrMatrix> = padded.iter().map(|n| &n.layers[k].weight).collect();
            let bias = padded.iter().flat_map(|n| n.layers[k].bias.iter().copied()).collect();
            Layer { weight: block_diagonal(&weights), bias }
        })
        .collect();
    ReluNetwork::new(layers)
}

/// `x -> (x, ..., x)` with `copies` blocks.
pub fn duplication_net(n: usize, copies: usize) -> Result<ReluNetwork> {
    let rows = (0..n * copies).map(|r| vec![((r % n) as u32, 1.0)]).collect();
    ReluNetwork::affine(CsrMatrix::from_rows(n, rows), vec![0.0; n * copies])
}

/// `P(nets) o duplication`: every network reads the same input.
pub fn parallel_shared(nets: &[&ReluNetwork]) -> Result<ReluNetwork> {
    let p = parallelize(nets)?;
    concat(&p, &duplication_net(nets[0].input_dim(), nets.len())?)
}
