use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dnn::TrainConfig;
use crate::error::{Error, Result};
use crate::geometry::{NodeConfig, PolarDomain};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DomainSpec {
    /// `r(theta) = 0.8 + 0.1 (sin 6 theta + sin 3 theta)`.
    Flower,
    Circle { radius: f64 },
}

impl DomainSpec {
    pub fn build(&self) -> Result<PolarDomain> {
        match self {
            DomainSpec::Flower => Ok(PolarDomain::flower()),
            DomainSpec::Circle { radius } => PolarDomain::circle(*radius),
        }
    }
}

/// Placement of the snapshot parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingScheme {
    /// Equispaced tensor grid including the box corners; `n_s` must be a perfect power.
    Tensor,
    /// Halton points (bases 2, 3) mapped into the box.
    Halton,
    /// Independent uniform draws from the run seed.
    Uniform,
}

/// What the network is trained to reproduce.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelSource {
    /// `V^T u` from a full RBF-FD solve.
    Projection,
    /// Reduced least-squares coefficients.
    ReducedLs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub domain: DomainSpec,
    pub n_interior: usize,
    pub n_boundary: usize,
    /// Halton candidates drawn per requested interior node.
    pub candidate_factor: usize,
    pub node_margin: f64,
    /// IMQ shape parameter.
    pub kernel_shape: f64,
    pub n_loc: usize,
    /// Parameter box, one `(lo, hi)` per component.
    pub bounds: Vec<(f64, f64)>,
    pub n_snapshots: usize,
    pub sampling: SamplingScheme,
    pub eps_pod: f64,
    pub n_data: usize,
    /// Train, validation and test fractions.
    pub split: [f64; 3],
    pub labels: LabelSource,
    /// Hidden-layer widths.
    pub hidden: Vec<usize>,
    pub train: TrainConfig,
    pub seed: u64,
    #[serde(default)]
    pub output_dir: PathBuf,
}

impl RunConfig {
    /// About 1200 nodes, 100 snapshots, 2000 samples: runs in minutes on one core.
    pub fn desk() -> Self {
        Self {
            domain: DomainSpec::Flower,
            n_interior: 1100,
            n_boundary: 110,
            candidate_factor: 4,
            node_margin: 0.0,
            kernel_shape: 3.0,
            n_loc: 13,
            bounds: vec![(0.1, 4.0), (0.0, 2.0)],
            n_snapshots: 100,
            sampling: SamplingScheme::Tensor,
            eps_pod: 1e-6,
            n_data: 2000,
            split: [0.6, 0.2, 0.2],
            labels: LabelSource::Projection,
            hidden: vec![500, 500],
            train: TrainConfig::default(),
            seed: 0,
            output_dir: PathBuf::from("run"),
        }
    }

    /// About 200 nodes and a handful of samples, for smoke tests.
    pub fn toy() -> Self {
        Self {
            n_interior: 160,
            n_boundary: 40,
            n_snapshots: 9,
            n_data: 50,
            hidden: vec![20, 20],
            train: TrainConfig { batch_size: 10, n_epochs: 20, patience: 20, lr: 1e-3, ..TrainConfig::default() },
            ..Self::desk()
        }
    }

    /// The full-size configuration: 5731 nodes and 10000 samples.
    pub fn full() -> Self {
        Self { n_interior: 5442, n_boundary: 289, n_data: 10000, ..Self::desk() }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "desk" => Ok(Self::desk()),
            "toy" => Ok(Self::toy()),
            "full" => Ok(Self::full()),
            other => Err(Error::Config(format!("unknown preset `{other}` (expected desk, toy or full)"))),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn node_config(&self) -> NodeConfig {
        NodeConfig {
            n_boundary: self.n_boundary,
            candidate_count: self.candidate_factor * self.n_interior,
            target_interior: self.n_interior,
            seed: self.seed,
            margin: self.node_margin,
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.n_interior + self.n_boundary
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.n_interior == 0 || self.n_boundary < 3 {
            return bad(format!("need interior nodes and at least 3 boundary nodes, got {} and {}", self.n_interior, self.n_boundary));
        }
        if self.candidate_factor == 0 {
            return bad("candidate_factor must be positive".into());
        }
        if self.n_loc == 0 || self.n_loc > self.n_nodes() {
            return bad(format!("n_loc {} must lie in 1..={}", self.n_loc, self.n_nodes()));
        }
        if !(self.kernel_shape > 0.0) {
            return bad(format!("kernel shape must be positive, got {}", self.kernel_shape));
        }
        if self.bounds.is_empty() || self.bounds.iter().any(|&(lo, hi)| !(hi > lo) || !lo.is_finite() || !hi.is_finite()) {
            return bad(format!("parameter bounds {:?} must be non-empty with lo < hi", self.bounds));
        }
        if self.n_snapshots == 0 || self.n_data == 0 {
            return bad("n_snapshots and n_data must be positive".into());
        }
        if self.sampling == SamplingScheme::Tensor {
            tensor_side(self.n_snapshots, self.bounds.len())?;
        }
        if !(self.eps_pod > 0.0 && self.eps_pod < 1.0) {
            return bad(format!("eps_pod must lie in (0, 1), got {}", self.eps_pod));
        }
        if self.split.iter().any(|&f| !(f >= 0.0)) || (self.split.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return bad(format!("split fractions {:?} must be non-negative and sum to 1", self.split));
        }
        let n_train = (self.split[0] * self.n_data as f64).round() as usize;
        let n_valid = (self.split[1] * self.n_data as f64).round() as usize;
        if n_train == 0 || n_valid == 0 {
            return bad("train and validation splits must be non-empty".into());
        }
        if self.hidden.iter().any(|&w| w == 0) {
            return bad("hidden widths must be positive".into());
        }
        self.train.validate(n_train)
    }
}

/// Points per axis of a tensor grid with `n` points in `dim` dimensions.
pub fn tensor_side(n: usize, dim: usize) -> Result<usize> {
    let side = (n as f64).powf(1.0 / dim as f64).round() as usize;
    if side < 2 || side.pow(dim as u32) != n {
        return Err(Error::Config(format!("{n} snapshots do not form a tensor grid in {dim} dimensions")));
    }
    Ok(side)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_are_valid() {
        for name in ["desk", "toy", "full"] {
            RunConfig::preset(name).unwrap().validate().unwrap();
        }
        assert_eq!(RunConfig::full().n_nodes(), 5731);
        assert!(RunConfig::preset("huge").unwrap_err().is_config());
    }

    #[test]
    fn invalid_configs() {
        let mut c = RunConfig::toy();
        c.split = [0.5, 0.2, 0.2];
        assert!(c.validate().unwrap_err().is_config());
        let mut c = RunConfig::toy();
        c.n_snapshots = 10;
        assert!(c.validate().is_err());
        c.sampling = SamplingScheme::Halton;
        c.validate().unwrap();
        let mut c = RunConfig::toy();
        c.bounds = vec![(1.0, 1.0)];
        assert!(c.validate().is_err());
    }

    #[test]
    fn json_round_trip() {
        let c = RunConfig::desk();
        let text = serde_json::to_string(&c).unwrap();
        assert!(text.contains("\"kind\":\"flower\""));
        let back: RunConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn tensor_sides() {
        assert_eq!(tensor_side(100, 2).unwrap(), 10);
        assert_eq!(tensor_side(27, 3).unwrap(), 3);
        assert!(tensor_side(50, 2).is_err());
    }
}
