//! Star-shaped domains, scattered collocation nodes and nearest-neighbour stencils.
//!
//! Nodes are stored interior first, then boundary, and every index used by
//! the discretization refers to this ordering.

use std::f64::consts::TAU;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Point = [f64; 2];

/// Star-shaped domain `{ (r cos t, r sin t) : 0 <= r < radius(t) }`.
#[derive(Clone)]
pub struct PolarDomain {
    radius: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    description: String,
    max_radius: f64,
}

impl fmt::Debug for PolarDomain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PolarDomain").field("description", &self.description).finish()
    }
}

const SHAPE_SAMPLES: usize = 4096;

impl PolarDomain {
    /// Validates positivity and periodicity of `radius` on a fine angular sample.
    pub fn new<F>(description: impl Into<String>, radius: F) -> Result<Self>
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        let r0 = radius(0.0);
        let r_tau = radius(TAU);
        if (r0 - r_tau).abs() > 1e-12 {
            return Err(Error::InvalidInput(format!("radius is not 2pi-periodic: r(0)={r0}, r(2pi)={r_tau}")));
        }
        let mut max_radius = 0.0f64;
        for k in 0..SHAPE_SAMPLES {
            let r = radius(TAU * k as f64 / SHAPE_SAMPLES as f64);
            if !(r > 0.0) || !r.is_finite() {
                return Err(Error::InvalidInput(format!("radius must be positive, got {r}")));
            }
            max_radius = max_radius.max(r);
        }
        Ok(Self { radius: Arc::new(radius), description: description.into(), max_radius })
    }

    /// `r(t) = 0.8 + 0.1 (sin 6t + sin 3t)`.
    pub fn flower() -> Self {
        Self::new("flower r=0.8+0.1(sin6t+sin3t)", |t: f64| 0.8 + 0.1 * ((6.0 * t).sin() + (3.0 * t).sin()))
            .expect("flower radius is positive")
    }

    pub fn circle(radius: f64) -> Result<Self> {
        Self::new(format!("circle r={radius}"), move |_| radius)
    }

    pub fn description(&self) -> &str {
        &self.description
    }

    pub fn radius(&self, theta: f64) -> f64 {
        (self.radius)(theta)
    }

    /// Sampled maximum of the radius function.
    pub fn max_radius(&self) -> f64 {
        self.max_radius
    }

    pub fn boundary_curve(&self, theta: f64) -> Point {
        let r = self.radius(theta);
        [r * theta.cos(), r * theta.sin()]
    }

    pub fn contains(&self, p: Point) -> bool {
        self.contains_with_margin(p, 0.0)
    }

    /// `|p| < r(atan2(p)) - margin`.
    pub fn contains_with_margin(&self, p: Point, margin: f64) -> bool {
        let theta = p[1].atan2(p[0]);
        let theta = if theta < 0.0 { theta + TAU } else { theta };
        p[0].hypot(p[1]) < self.radius(theta) - margin
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeSet {
    pub interior: Vec<Point>,
    pub boundary: Vec<Point>,
}

impl NodeSet {
    pub fn len(&self) -> usize {
        self.interior.len() + self.boundary.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn n_interior(&self) -> usize {
        self.interior.len()
    }

    pub fn n_boundary(&self) -> usize {
        self.boundary.len()
    }

    /// Node `i` in the global ordering (interior first).
    pub fn point(&self, i: usize) -> Point {
        if i < self.interior.len() {
            self.interior[i]
        } else {
            self.boundary[i - self.interior.len()]
        }
    }

    pub fn points(&self) -> Vec<Point> {
        self.interior.iter().chain(&self.boundary).copied().collect()
    }

    pub fn is_boundary(&self, i: usize) -> bool {
        i >= self.interior.len()
    }

    /// Smallest distance between any two nodes.
    pub fn min_separation(&self) -> f64 {
        let pts = self.points();
        let mut best = f64::INFINITY;
        for i in 0..pts.len() {
            for j in i + 1..pts.len() {
                best = best.min(dist2(pts[i], pts[j]));
            }
        }
        best.sqrt()
    }
}

/// Radical inverse of `index` in `base`.
pub fn radical_inverse(mut index: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut out = 0.0;
    while index > 0 {
        out += f * (index % base) as f64;
        index /= base;
        f *= inv;
    }
    out
}

/// Halton points in `[0,1)^2` (bases 2 and 3) for indices `start..start+count`.
pub fn halton_2d(start: u64, count: usize) -> Vec<Point> {
    (0..count as u64).map(|k| [radical_inverse(start + k, 2), radical_inverse(start + k, 3)]).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NodeConfig {
    pub n_boundary: usize,
    pub candidate_count: usize,
    pub target_interior: usize,
    pub seed: u64,
    /// Candidates closer than this to the boundary curve are discarded.
    pub margin: f64,
}

/// Boundary nodes equispaced in angle, interior nodes picked from a Halton
/// pool by greedy farthest-point selection seeded with the boundary nodes.
///
/// The seed offsets the Halton index, so different seeds give different pools.
pub fn generate_nodes(domain: &PolarDomain, cfg: &NodeConfig) -> Result<NodeSet> {
    if cfg.n_boundary < 3 {
        return Err(Error::InvalidInput(format!("need at least 3 boundary nodes, got {}", cfg.n_boundary)));
    }
    if cfg.candidate_count < cfg.target_interior {
        return Err(Error::InvalidInput(format!(
            "candidate_count {} is smaller than target_interior {}",
            cfg.candidate_count, cfg.target_interior
        )));
    }
    let boundary: Vec<Point> = (0..cfg.n_boundary)
        .map(|k| domain.boundary_curve(TAU * k as f64 / cfg.n_boundary as f64))
        .collect();

    let rmax = domain.max_radius() * 1.05;
    let pool: Vec<Point> = halton_2d(1 + cfg.seed, cfg.candidate_count)
        .into_iter()
        .map(|[u, v]| [rmax * (2.0 * u - 1.0), rmax * (2.0 * v - 1.0)])
        .filter(|&p| domain.contains_with_margin(p, cfg.margin))
        .collect();
    if pool.len() < cfg.target_interior {
        return Err(Error::InsufficientCandidates { found: pool.len(), needed: cfg.target_interior });
    }

    let chosen = farthest_point_selection(&pool, &boundary, cfg.target_interior);
    let interior = chosen.into_iter().map(|i| pool[i]).collect();
    Ok(NodeSet { interior, boundary })
}

/// Greedy farthest-point selection of `count` pool indices, measuring
/// distance to `fixed` plus everything picked so far.
///
/// Ties go to the lexicographically smallest point, which makes the selected
/// set independent of the pool ordering.
pub fn farthest_point_selection(pool: &[Point], fixed: &[Point], count: usize) -> Vec<usize> {
    let mut nearest: Vec<f64> = pool
        .iter()
        .map(|&p| fixed.iter().map(|&q| dist2(p, q)).fold(f64::INFINITY, f64::min))
        .collect();
    let mut taken = vec![false; pool.len()];
    let mut chosen = Vec::with_capacity(count);
    for _ in 0..count.min(pool.len()) {
        let mut best: Option<usize> = None;
        for (i, &d) in nearest.iter().enumerate() {
            if taken[i] {
                continue;
            }
            best = match best {
                None => Some(i),
                Some(b) if d > nearest[b] || (d == nearest[b] && lex_less(pool[i], pool[b])) => Some(i),
                keep => keep,
            };
        }
        let Some(b) = best else { break };
        taken[b] = true;
        chosen.push(b);
        let pb = pool[b];
        for (i, d) in nearest.iter_mut().enumerate() {
            if !taken[i] {
                *d = d.min(dist2(pool[i], pb));
            }
        }
    }
    chosen
}

fn lex_less(a: Point, b: Point) -> bool {
    a[0] < b[0] || (a[0] == b[0] && a[1] < b[1])
}

pub fn dist2(a: Point, b: Point) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    dx * dx + dy * dy
}

/// Per-interior-node neighbour lists, each starting with the node itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StencilSet {
    pub n_loc: usize,
    pub stencils: Vec<Vec<usize>>,
}

impl StencilSet {
    pub fn len(&self) -> usize {
        self.stencils.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stencils.is_empty()
    }

    pub fn get(&self, i: usize) -> &[usize] {
        &self.stencils[i]
    }
}

/// `n_loc` nearest nodes of every interior node, ordered by (distance, index).
pub fn build_stencils(nodes: &NodeSet, n_loc: usize) -> Result<StencilSet> {
    let n = nodes.len();
    if n_loc == 0 || n_loc > n {
        return Err(Error::InvalidInput(format!("stencil size {n_loc} must lie in 1..={n}")));
    }
    let pts = nodes.points();
    let stencils = (0..nodes.n_interior()).map(|i| nearest_neighbours(&pts, i, n_loc)).collect();
    Ok(StencilSet { n_loc, stencils })
}

fn nearest_neighbours(pts: &[Point], center: usize, k: usize) -> Vec<usize> {
    let c = pts[center];
    let mut keyed: Vec<(f64, usize)> = pts.iter().enumerate().map(|(j, &p)| (dist2(c, p), j)).collect();
    let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if k < keyed.len() {
        keyed.select_nth_unstable_by(k - 1, cmp);
        keyed.truncate(k);
    }
    keyed.sort_by(cmp);
    // Self sits at distance zero; a duplicate point with a lower index would
    // otherwise precede it.
    let mut out: Vec<usize> = Vec::with_capacity(k);
    out.push(center);
    out.extend(keyed.into_iter().map(|(_, j)| j).filter(|&j| j != center));
    out.truncate(k);
    out
}
