//! Online evaluation, the three-way benchmark and the hyperparameter grid.

use std::io::Write;
use std::time::{Duration, Instant};

use log::warn;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::offline::{discretize, load_config, load_dataset, load_model, load_nodes, load_pod};
use super::store::ArtifactStore;
use crate::dnn::{self, Dataset, MlpModel, TrainConfig};
use crate::error::{Error, Result};
use crate::rbf_fd::{AffineDiscretization, SolveOptions};
use crate::rom::AffineReducedOperator;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DomainPolicy {
    Reject,
    Warn,
}

/// Everything the online phase needs: the basis and the trained network.
#[derive(Debug, Clone)]
pub struct Surrogate {
    pub basis: DMatrix<f64>,
    pub model: MlpModel,
    pub bounds: Vec<(f64, f64)>,
}

#[derive(Debug, Clone)]
pub struct OnlineResult {
    /// `m x N`, one row per parameter.
    pub solutions: DMatrix<f64>,
    /// Forward pass plus basis expansion.
    pub elapsed: Duration,
}

impl Surrogate {
    pub fn load(store: &ArtifactStore) -> Result<Self> {
        let cfg = load_config(store)?;
        Ok(Self { basis: load_pod(store)?.v, model: load_model(store)?, bounds: cfg.bounds })
    }

    pub fn check_domain(&self, mu: &DMatrix<f64>, policy: DomainPolicy) -> Result<()> {
        if mu.ncols() != self.bounds.len() {
            return Err(Error::Dimension(format!("{} parameter columns, expected {}", mu.ncols(), self.bounds.len())));
        }
        for i in 0..mu.nrows() {
            let inside = self.bounds.iter().enumerate().all(|(j, &(lo, hi))| (lo..=hi).contains(&mu[(i, j)]));
            if !inside {
                let (a, b) = (mu[(i, 0)], if mu.ncols() > 1 { mu[(i, 1)] } else { f64::NAN });
                match policy {
                    DomainPolicy::Reject => return Err(Error::OutOfDomain(a, b)),
                    DomainPolicy::Warn => warn!("parameter row {i} lies outside the training box"),
                }
            }
        }
        Ok(())
    }

    /// `V NN(mu)` as `N x m` columns, untimed.
    pub fn evaluate_columns(&self, mu: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        Ok(&self.basis * self.model.forward_columns(&mu.transpose())?)
    }

    /// One forward pass for the whole `m x p` batch, then one product with `V`.
    pub fn online(&self, mu: &DMatrix<f64>, policy: DomainPolicy) -> Result<OnlineResult> {
        self.check_domain(mu, policy)?;
        if mu.nrows() == 0 {
            return Ok(OnlineResult { solutions: DMatrix::zeros(0, self.basis.nrows()), elapsed: Duration::ZERO });
        }
        let mu_t = mu.transpose();
        let start = Instant::now();
        let coeffs = self.model.forward_columns(&mu_t)?;
        let cols = &self.basis * coeffs;
        let elapsed = start.elapsed();
        Ok(OnlineResult { solutions: cols.transpose(), elapsed })
    }
}

pub fn relative_error(approx: &[f64], exact: &[f64]) -> f64 {
    let num: f64 = approx.iter().zip(exact).map(|(a, b)| (a - b) * (a - b)).sum();
    let den: f64 = exact.iter().map(|b| b * b).sum();
    (num / den).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRow {
    pub method: String,
    pub n_params: usize,
    pub mean_rel_error: f64,
    pub max_rel_error: f64,
    pub total_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    /// RBF-FD, reduced least squares, POD-DNN.
    pub rows: Vec<BenchmarkRow>,
    /// POD-DNN time < reduced-LS time < RBF-FD time.
    pub ordering_holds: bool,
}

impl BenchmarkReport {
    pub fn row(&self, method: &str) -> Option<&BenchmarkRow> {
        self.rows.iter().find(|r| r.method == method)
    }
}

fn summarize(method: &str, errors: &[f64], elapsed: Duration) -> BenchmarkRow {
    BenchmarkRow {
        method: method.into(),
        n_params: errors.len(),
        mean_rel_error: if errors.is_empty() { 0.0 } else { errors.iter().sum::<f64>() / errors.len() as f64 },
        max_rel_error: errors.iter().copied().fold(0.0, f64::max),
        total_seconds: elapsed.as_secs_f64(),
    }
}

/// Times the three online solvers on the rows of `params` (`m x p`) and
/// measures the two reduced ones against the RBF-FD solutions. Every solve
/// runs sequentially on the calling thread; artifact I/O is not timed.
pub fn benchmark_with(disc: &AffineDiscretization, surrogate: &Surrogate, params: &DMatrix<f64>) -> Result<BenchmarkReport> {
    let rows: Vec<Vec<f64>> = (0..params.nrows()).map(|i| params.row(i).iter().copied().collect()).collect();
    let opts = SolveOptions { condition_warning: None };

    let start = Instant::now();
    let mut truth = Vec::with_capacity(rows.len());
    for mu in &rows {
        truth.push(disc.solve(mu, &opts)?);
    }
    let t_fd = start.elapsed();

    let reduced = AffineReducedOperator::new(disc, &surrogate.basis)?;
    let start = Instant::now();
    let mut ls = Vec::with_capacity(rows.len());
    for mu in &rows {
        let c = reduced.solve(mu)?.c;
        ls.push(&surrogate.basis * c);
    }
    let t_ls = start.elapsed();

    let net = surrogate.online(params, DomainPolicy::Warn)?;

    let fd_row = summarize("rbf_fd", &vec![0.0; rows.len()], t_fd);
    let ls_errors: Vec<f64> = ls.iter().zip(&truth).map(|(a, u)| relative_error(a.as_slice(), u)).collect();
    let nn_errors: Vec<f64> = (0..rows.len())
        .map(|i| relative_error(&net.solutions.row(i).iter().copied().collect::<Vec<_>>(), &truth[i]))
        .collect();
    let ls_row = summarize("reduced_ls", &ls_errors, t_ls);
    let nn_row = summarize("pod_dnn", &nn_errors, net.elapsed);
    let ordering_holds = nn_row.total_seconds < ls_row.total_seconds && ls_row.total_seconds < fd_row.total_seconds;
    if !ordering_holds {
        warn!(
            "timing ordering violated: pod_dnn {:.3e} s, reduced_ls {:.3e} s, rbf_fd {:.3e} s",
            nn_row.total_seconds, ls_row.total_seconds, fd_row.total_seconds
        );
    }
    Ok(BenchmarkReport { rows: vec![fd_row, ls_row, nn_row], ordering_holds })
}

/// Benchmark on the held-out test split of a finished store.
pub fn benchmark(store: &ArtifactStore) -> Result<BenchmarkReport> {
    let cfg = load_config(store)?;
    let disc = discretize(&cfg, load_nodes(store)?)?;
    let surrogate = Surrogate::load(store)?;
    let data = load_dataset(store)?;
    let params = DMatrix::from_fn(data.test.len(), data.inputs.ncols(), |i, j| data.inputs[(data.test[i], j)]);
    benchmark_with(&disc, &surrogate, &params)
}

pub fn write_benchmark_csv<W: Write>(report: &BenchmarkReport, mut w: W) -> std::io::Result<()> {
    writeln!(w, "method,n_params,mean_rel_error,max_rel_error,total_seconds")?;
    for r in &report.rows {
        writeln!(w, "{},{},{:e},{:e},{:e}", r.method, r.n_params, r.mean_rel_error, r.max_rel_error, r.total_seconds)?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub layers: Vec<usize>,
    pub widths: Vec<usize>,
    pub epochs: Vec<usize>,
    pub batch_sizes: Vec<usize>,
    pub lrs: Vec<f64>,
}

impl GridSpec {
    /// The search grid: 2, 4 or 6 hidden layers of width 20, 100 or 500.
    pub fn standard() -> Self {
        Self { layers: vec![2, 4, 6], widths: vec![20, 100, 500], epochs: vec![1000], batch_sizes: vec![100], lrs: vec![1e-4] }
    }

    pub fn len(&self) -> usize {
        self.layers.len() * self.widths.len() * self.epochs.len() * self.batch_sizes.len() * self.lrs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub layers: usize,
    pub width: usize,
    pub n_epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub test_error: f64,
    pub train_seconds: f64,
    pub best_epoch: usize,
    /// `ok` or the error message.
    pub status: String,
}

/// Trains one network per grid cell on the shared dataset and seed. Failed
/// cells are recorded with a NaN error and the grid continues.
pub fn hyperparameter_grid(
    data: &Dataset,
    bounds: &[(f64, f64)],
    base: &TrainConfig,
    grid: &GridSpec,
) -> Result<Vec<GridRow>> {
    if grid.is_empty() {
        return Err(Error::Config("hyperparameter grid is empty".into()));
    }
    let mut rows = Vec::with_capacity(grid.len());
    for &layers in &grid.layers {
        for &width in &grid.widths {
            for &n_epochs in &grid.epochs {
                for &batch_size in &grid.batch_sizes {
                    for &lr in &grid.lrs {
                        let cfg = TrainConfig { n_epochs, batch_size, lr, ..*base };
                        let start = Instant::now();
                        let outcome = dnn::train(data, &vec![width; layers], bounds, &cfg)
                            .and_then(|o| Ok((dnn::evaluate(&o.model, data, &data.test)?, o.best_epoch)));
                        let train_seconds = start.elapsed().as_secs_f64();
                        let (test_error, best_epoch, status) = match outcome {
                            Ok((e, b)) => (e, b, "ok".to_string()),
                            Err(e) => (f64::NAN, 0, e.to_string()),
                        };
                        rows.push(GridRow { layers, width, n_epochs, batch_size, lr, test_error, train_seconds, best_epoch, status });
                    }
                }
            }
        }
    }
    Ok(rows)
}

/// Grid search over the dataset of a store.
pub fn grid_for_store(store: &ArtifactStore, grid: &GridSpec) -> Result<Vec<GridRow>> {
    let cfg: RunConfig = load_config(store)?;
    hyperparameter_grid(&load_dataset(store)?, &cfg.bounds, &cfg.train, grid)
}

pub fn write_grid_csv<W: Write>(rows: &[GridRow], mut w: W) -> std::io::Result<()> {
    writeln!(w, "layers,n_neurons,n_epochs,batch_size,lr,test_error,train_seconds,best_epoch,status")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{:e},{:e},{:.3},{},\"{}\"",
            r.layers,
            r.width,
            r.n_epochs,
            r.batch_size,
            r.lr,
            r.test_error,
            r.train_seconds,
            r.best_epoch,
            r.status.replace('"', "'")
        )?;
    }
    Ok(())
}

/// Writes an `m x N` solution block as CSV, one row per parameter.
pub fn write_solutions_csv<W: Write>(mu: &DMatrix<f64>, u: &DMatrix<f64>, mut w: W) -> std::io::Result<()> {
    let p = mu.ncols();
    let header: Vec<String> = (0..p).map(|j| format!("mu{}", j + 1)).chain((0..u.ncols()).map(|i| format!("u{i}"))).collect();
    writeln!(w, "{}", header.join(","))?;
    for i in 0..u.nrows() {
        let vals: Vec<String> = mu.row(i).iter().chain(u.row(i).iter()).map(|v| format!("{v:e}")).collect();
        writeln!(w, "{}", vals.join(","))?;
    }
    Ok(())
}

/// Reads parameters from CSV: one row per parameter, an optional header line.
pub fn read_params_csv(text: &str, p: usize) -> Result<DMatrix<f64>> {
    let mut rows: Vec<f64> = Vec::new();
    let mut m = 0;
    for (k, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let parsed: std::result::Result<Vec<f64>, _> = line.split(',').map(|s| s.trim().parse::<f64>()).collect();
        match parsed {
            Ok(v) if v.len() == p => {
                rows.extend(v);
                m += 1;
            }
            Ok(v) => return Err(Error::InvalidInput(format!("line {}: {} values, expected {p}", k + 1, v.len()))),
            Err(_) if k == 0 => continue,
            Err(e) => return Err(Error::InvalidInput(format!("line {}: {e}", k + 1))),
        }
    }
    Ok(DMatrix::from_row_slice(m, p, &rows))
}

/// Relative error of `V c` for a batch, used when only coefficients are known.
pub fn coefficient_error(basis: &DMatrix<f64>, c: &DVector<f64>, exact: &[f64]) -> f64 {
    relative_error((basis * c).as_slice(), exact)
}
