//! The offline stages: nodes, snapshots, POD basis, labelled dataset, trained model.

use std::sync::Arc;

use log::info;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{tensor_side, LabelSource, RunConfig, SamplingScheme};
use super::store::{stage_key, ArtifactStore, StageFiles};
use crate::dnn::{self, Dataset, MlpModel};
use crate::error::{Error, Result};
use crate::geometry::{build_stencils, generate_nodes, halton_2d, radical_inverse, NodeSet};
use crate::pod::{self, PodBasis, SnapshotMatrix};
use crate::rbf_fd::{AffineDiscretization, Helmholtz, PolyAugmentation, RbfKernel, SolveOptions};
use crate::rom::AffineReducedOperator;

pub const STAGES: [&str; 5] = ["nodes", "snapshots", "pod", "dataset", "train"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StageStatus {
    Ran,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct NodesMeta {
    n_interior: usize,
    n_boundary: usize,
    domain: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub best_epoch: usize,
    pub best_valid_loss: f64,
    pub epochs_run: usize,
    pub stopped_early: bool,
    pub train_error: f64,
    pub test_error: f64,
}

const CONFIG_FILE: &str = "config.json";

/// The config as stored with the artifacts; the output directory is left out
/// so runs in different directories produce identical files.
fn stored_config(cfg: &RunConfig) -> RunConfig {
    RunConfig { output_dir: Default::default(), ..cfg.clone() }
}

pub fn load_config(store: &ArtifactStore) -> Result<RunConfig> {
    let mut cfg: RunConfig = store.read_json(CONFIG_FILE)?;
    cfg.output_dir = store.dir().to_path_buf();
    Ok(cfg)
}

/// RBF-FD discretization of the benchmark Helmholtz problem on `nodes`.
pub fn discretize(cfg: &RunConfig, nodes: NodeSet) -> Result<AffineDiscretization> {
    let stencils = build_stencils(&nodes, cfg.n_loc)?;
    let kernel = RbfKernel::imq(cfg.kernel_shape)?;
    AffineDiscretization::new(nodes, &stencils, &kernel, &PolyAugmentation::NONE, Arc::new(Helmholtz::benchmark()))
}

fn to_box(bounds: &[(f64, f64)], unit: &[f64]) -> Vec<f64> {
    bounds.iter().zip(unit).map(|(&(lo, hi), &u)| lo + (hi - lo) * u).collect()
}

/// Snapshot parameters for `n_s` samples under the configured scheme.
pub fn snapshot_params(cfg: &RunConfig, n_s: usize) -> Result<Vec<Vec<f64>>> {
    let p = cfg.bounds.len();
    match cfg.sampling {
        SamplingScheme::Tensor => {
            let side = tensor_side(n_s, p)?;
            Ok((0..n_s)
                .map(|k| {
                    // First component varies slowest.
                    let unit: Vec<f64> = (0..p)
                        .map(|d| ((k / side.pow((p - 1 - d) as u32)) % side) as f64 / (side - 1) as f64)
                        .collect();
                    to_box(&cfg.bounds, &unit)
                })
                .collect())
        }
        SamplingScheme::Halton => {
            const PRIMES: [u64; 6] = [2, 3, 5, 7, 11, 13];
            if p > PRIMES.len() {
                return Err(Error::Config(format!("Halton sampling supports up to {} parameters", PRIMES.len())));
            }
            if p == 2 {
                return Ok(halton_2d(1, n_s).iter().map(|u| to_box(&cfg.bounds, u)).collect());
            }
            Ok((1..=n_s as u64)
                .map(|k| to_box(&cfg.bounds, &PRIMES[..p].iter().map(|&b| radical_inverse(k, b)).collect::<Vec<_>>()))
                .collect())
        }
        SamplingScheme::Uniform => Ok(uniform_params(&cfg.bounds, n_s, cfg.seed ^ 0x5EED_0001)),
    }
}

fn uniform_params(bounds: &[(f64, f64)], n: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| bounds.iter().map(|&(lo, hi)| rng.random_range(lo..=hi)).collect()).collect()
}

/// The `n_data x p` dataset parameters, drawn uniformly from the box.
pub fn dataset_params(cfg: &RunConfig) -> DMatrix<f64> {
    let rows = uniform_params(&cfg.bounds, cfg.n_data, cfg.seed ^ 0x5EED_0002);
    DMatrix::from_fn(cfg.n_data, cfg.bounds.len(), |i, j| rows[i][j])
}

fn quiet() -> SolveOptions {
    SolveOptions { condition_warning: None }
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

pub fn load_nodes(store: &ArtifactStore) -> Result<NodeSet> {
    let meta: NodesMeta = store.read_json("nodes.json")?;
    let m = store.read_matrix("nodes.pdnn")?;
    if m.shape() != (meta.n_interior + meta.n_boundary, 2) {
        return Err(Error::Format(format!("node matrix is {:?}", m.shape())));
    }
    let pts: Vec<[f64; 2]> = (0..m.nrows()).map(|i| [m[(i, 0)], m[(i, 1)]]).collect();
    let nodes = NodeSet { interior: pts[..meta.n_interior].to_vec(), boundary: pts[meta.n_interior..].to_vec() };
    if nodes.len() > 1 && !(nodes.min_separation() > 1e-12) {
        return Err(Error::Format("stored nodes contain duplicates".into()));
    }
    Ok(nodes)
}

pub fn load_snapshots(store: &ArtifactStore) -> Result<SnapshotMatrix> {
    let s = store.read_matrix("snapshots.pdnn")?;
    let params = rows_of(&store.read_matrix("snapshot_params.pdnn")?);
    SnapshotMatrix::new(s, params)
}

pub fn load_pod(store: &ArtifactStore) -> Result<PodBasis> {
    let mut pod: PodBasis = store.read_json("pod.json")?;
    pod.v = store.read_matrix("pod_basis.pdnn")?;
    if pod.v.ncols() != pod.n_pod {
        return Err(Error::Format(format!("basis has {} columns, metadata says {}", pod.v.ncols(), pod.n_pod)));
    }
    let gram = pod.v.tr_mul(&pod.v) - DMatrix::identity(pod.n_pod, pod.n_pod);
    if gram.amax() > 1e-10 {
        return Err(Error::Format("stored basis is not orthonormal".into()));
    }
    Ok(pod)
}

pub fn load_dataset(store: &ArtifactStore) -> Result<Dataset> {
    let split: Dataset = store.read_json("dataset_split.json")?;
    Dataset::new(
        store.read_matrix("dataset_inputs.pdnn")?,
        store.read_matrix("dataset_targets.pdnn")?,
        split.train,
        split.valid,
        split.test,
    )
}

pub fn load_model(store: &ArtifactStore) -> Result<MlpModel> {
    let mut model: MlpModel = store.read_json("model.json")?;
    let n = model.widths.len() - 1;
    model.weights = (0..n).map(|k| store.read_matrix(&format!("model_w{k}.pdnn"))).collect::<Result<_>>()?;
    model.biases = (0..n)
        .map(|k| store.read_matrix(&format!("model_b{k}.pdnn")).map(|b| DVector::from_column_slice(b.as_slice())))
        .collect::<Result<_>>()?;
    model.validate()?;
    Ok(model)
}

fn upstream_files(store: &ArtifactStore, stage: &str) -> Result<Vec<(String, String)>> {
    let rec = store.stage(stage).ok_or_else(|| Error::Format(format!("stage `{stage}` has not run")))?;
    Ok(rec.files.iter().map(|(a, b)| (a.clone(), b.clone())).collect())
}

fn stage_key_for(cfg: &RunConfig, store: &ArtifactStore, stage: &str) -> Result<String> {
    let c = cfg;
    match stage {
        "nodes" => stage_key(&(stage, &c.domain, c.n_interior, c.n_boundary, c.candidate_factor, c.node_margin, c.seed)),
        "snapshots" => stage_key(&(
            stage,
            upstream_files(store, "nodes")?,
            c.kernel_shape,
            c.n_loc,
            &c.bounds,
            c.n_snapshots,
            c.sampling,
            c.seed,
        )),
        "pod" => stage_key(&(stage, upstream_files(store, "snapshots")?, c.eps_pod)),
        "dataset" => stage_key(&(stage, upstream_files(store, "pod")?, c.n_data, c.split, c.labels, c.seed)),
        "train" => stage_key(&(stage, upstream_files(store, "dataset")?, &c.hidden, &c.train)),
        other => Err(Error::Config(format!("unknown stage `{other}`"))),
    }
}

fn run_nodes(cfg: &RunConfig, store: &ArtifactStore) -> Result<StageFiles> {
    let domain = cfg.domain.build()?;
    let nodes = generate_nodes(&domain, &cfg.node_config())?;
    let pts = nodes.points();
    let m = DMatrix::from_fn(pts.len(), 2, |i, j| pts[i][j]);
    let mut files = StageFiles::new();
    files.matrix(store, "nodes.pdnn", &m)?;
    let meta = NodesMeta { n_interior: nodes.n_interior(), n_boundary: nodes.n_boundary(), domain: domain.description().into() };
    files.json(store, "nodes.json", &meta)?;
    info!("nodes: N = {} ({} interior, {} boundary)", nodes.len(), nodes.n_interior(), nodes.n_boundary());
    Ok(files)
}

fn run_snapshots(cfg: &RunConfig, store: &ArtifactStore) -> Result<StageFiles> {
    let disc = discretize(cfg, load_nodes(store)?)?;
    let params = snapshot_params(cfg, cfg.n_snapshots)?;
    let snaps = pod::build_snapshot_matrix(&params, |mu| disc.solve(mu, &quiet()))?;
    let pm = DMatrix::from_fn(params.len(), cfg.bounds.len(), |i, j| params[i][j]);
    let mut files = StageFiles::new();
    files.matrix(store, "snapshots.pdnn", &snaps.s)?;
    files.matrix(store, "snapshot_params.pdnn", &pm)?;
    info!("snapshots: {} x {}", snaps.s.nrows(), snaps.s.ncols());
    Ok(files)
}

fn run_pod(cfg: &RunConfig, store: &ArtifactStore) -> Result<StageFiles> {
    let snaps = load_snapshots(store)?;
    let basis = pod::compute_pod(&snaps.s, cfg.eps_pod)?;
    let mut files = StageFiles::new();
    files.matrix(store, "pod_basis.pdnn", &basis.v)?;
    files.json(store, "pod.json", &basis)?;
    let mut csv = Vec::new();
    let sigma = pod::singular_values(&snaps.s);
    pod::write_decay_csv(&pod::singular_decay_report(&[(snaps.n_snapshots(), &sigma)]), &mut csv)?;
    files.bytes(store, "decay.csv", &csv)?;
    info!("pod: n_pod = {} at eps_pod = {:e}", basis.n_pod, cfg.eps_pod);
    Ok(files)
}

/// Reduced coefficients for every row of `params` (`n x p`).
pub fn label_parameters(
    disc: &AffineDiscretization,
    basis: &DMatrix<f64>,
    params: &DMatrix<f64>,
    labels: LabelSource,
) -> Result<DMatrix<f64>> {
    let rows = rows_of(params);
    let coeffs: Vec<DVector<f64>> = match labels {
        LabelSource::Projection => rows
            .par_iter()
            .enumerate()
            .map(|(index, mu)| {
                let u = disc.solve(mu, &quiet()).map_err(|e| Error::Parameter { index, source: Box::new(e) })?;
                pod::project(basis, &DVector::from_vec(u))
            })
            .collect::<Result<_>>()?,
        LabelSource::ReducedLs => {
            let op = AffineReducedOperator::new(disc, basis)?;
            rows.par_iter()
                .enumerate()
                .map(|(index, mu)| op.solve(mu).map(|s| s.c).map_err(|e| Error::Parameter { index, source: Box::new(e) }))
                .collect::<Result<_>>()?
        }
    };
    Ok(DMatrix::from_fn(rows.len(), basis.ncols(), |i, j| coeffs[i][j]))
}

fn run_dataset(cfg: &RunConfig, store: &ArtifactStore) -> Result<StageFiles> {
    let disc = discretize(cfg, load_nodes(store)?)?;
    let basis = load_pod(store)?;
    let inputs = dataset_params(cfg);
    let targets = label_parameters(&disc, &basis.v, &inputs, cfg.labels)?;
    let data = Dataset::with_random_split(inputs, targets, cfg.split, cfg.seed ^ 0x5EED_0003)?;
    let mut files = StageFiles::new();
    files.matrix(store, "dataset_inputs.pdnn", &data.inputs)?;
    files.matrix(store, "dataset_targets.pdnn", &data.targets)?;
    files.json(store, "dataset_split.json", &data)?;
    info!("dataset: {} samples ({} / {} / {})", data.len(), data.train.len(), data.valid.len(), data.test.len());
    Ok(files)
}

fn run_train(cfg: &RunConfig, store: &ArtifactStore) -> Result<StageFiles> {
    let data = load_dataset(store)?;
    let out = dnn::train(&data, &cfg.hidden, &cfg.bounds, &cfg.train)?;
    let mut files = StageFiles::new();
    files.json(store, "model.json", &out.model)?;
    for (k, (w, b)) in out.model.weights.iter().zip(&out.model.biases).enumerate() {
        files.matrix(store, &format!("model_w{k}.pdnn"), w)?;
        files.matrix(store, &format!("model_b{k}.pdnn"), &DMatrix::from_column_slice(b.len(), 1, b.as_slice()))?;
    }
    let mut csv = Vec::new();
    dnn::write_history_csv(&out.history, &mut csv)?;
    files.bytes(store, "history.csv", &csv)?;
    let summary = TrainSummary {
        best_epoch: out.best_epoch,
        best_valid_loss: out.best_valid_loss,
        epochs_run: out.history.len(),
        stopped_early: out.stopped_early,
        train_error: dnn::evaluate(&out.model, &data, &data.train)?,
        test_error: if data.test.is_empty() { f64::NAN } else { dnn::evaluate(&out.model, &data, &data.test)? },
    };
    files.json(store, "train_summary.json", &summary)?;
    info!("train: best epoch {} of {}, test error {:.3e}", summary.best_epoch, summary.epochs_run, summary.test_error);
    Ok(files)
}

/// Runs `stage` unless its recorded outputs are current.
pub fn run_stage(cfg: &RunConfig, store: &mut ArtifactStore, stage: &str) -> Result<StageStatus> {
    let mut go = || -> Result<StageStatus> {
        let key = stage_key_for(cfg, store, stage)?;
        if store.is_current(stage, &key) {
            info!("{stage}: up to date");
            return Ok(StageStatus::Skipped);
        }
        let files = match stage {
            "nodes" => run_nodes(cfg, store)?,
            "snapshots" => run_snapshots(cfg, store)?,
            "pod" => run_pod(cfg, store)?,
            "dataset" => run_dataset(cfg, store)?,
            "train" => run_train(cfg, store)?,
            _ => unreachable!("stage names are checked by stage_key_for"),
        };
        store.commit(stage, key, files.into_map())?;
        Ok(StageStatus::Ran)
    };
    go().map_err(|e| if e.is_config() { e } else { e.in_stage(stage) })
}

/// Opens the configured output directory and records the config there.
pub fn open_store(cfg: &RunConfig) -> Result<ArtifactStore> {
    cfg.validate()?;
    let mut store = ArtifactStore::create(&cfg.output_dir)?;
    let stored = stored_config(cfg);
    let key = stage_key(&stored)?;
    if !store.is_current("config", &key) {
        let mut files = StageFiles::new();
        files.json(&store, CONFIG_FILE, &stored)?;
        store.commit("config", key, files.into_map())?;
    }
    Ok(store)
}

/// Runs every stage up to and including `last`, skipping current ones.
pub fn run_through(cfg: &RunConfig, last: &str) -> Result<(ArtifactStore, Vec<(String, StageStatus)>)> {
    let end = STAGES
        .iter()
        .position(|s| *s == last)
        .ok_or_else(|| Error::Config(format!("unknown stage `{last}`")))?;
    let mut store = open_store(cfg)?;
    let mut report = Vec::new();
    for stage in &STAGES[..=end] {
        report.push((stage.to_string(), run_stage(cfg, &mut store, stage)?));
    }
    Ok((store, report))
}

/// The whole offline phase.
pub fn offline(cfg: &RunConfig) -> Result<ArtifactStore> {
    Ok(run_through(cfg, "train")?.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tensor_grid_covers_corners() {
        let cfg = RunConfig::desk();
        let p = snapshot_params(&cfg, 100).unwrap();
        assert_eq!(p.len(), 100);
        assert_eq!(p[0], vec![0.1, 0.0]);
        assert_eq!(p[99], vec![4.0, 2.0]);
        assert_eq!(p[1], vec![0.1, 2.0 / 9.0]);
        assert!(snapshot_params(&cfg, 99).is_err());
    }

    #[test]
    fn other_samplings_stay_in_box() {
        for scheme in [SamplingScheme::Halton, SamplingScheme::Uniform] {
            let cfg = RunConfig { sampling: scheme, ..RunConfig::desk() };
            let p = snapshot_params(&cfg, 37).unwrap();
            assert_eq!(p.len(), 37);
            assert!(p.iter().all(|m| (0.1..=4.0).contains(&m[0]) && (0.0..=2.0).contains(&m[1])));
        }
        let m = dataset_params(&RunConfig::toy());
        assert_eq!(m.shape(), (50, 2));
        assert_eq!(m, dataset_params(&RunConfig::toy()));
    }
}
