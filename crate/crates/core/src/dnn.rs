//! Fully connected ReLU networks trained with Adam on the relative error.
//!
//! Activations are stored features x batch so every layer is one matrix
//! product. Inputs are mapped affinely from the parameter box to `[-1, 1]^p`
//! before the first layer; the map is part of the model.

use std::io::Write;

use log::debug;
use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    /// `(p, hidden..., n_out)`.
    pub widths: Vec<usize>,
    #[serde(skip)]
    pub weights: Vec<DMatrix<f64>>,
    #[serde(skip)]
    pub biases: Vec<DVector<f64>>,
    /// Parameter box mapped onto `[-1, 1]^p`.
    pub input_lo: Vec<f64>,
    pub input_hi: Vec<f64>,
}

impl MlpModel {
    pub fn zeros(widths: &[usize], input_box: &[(f64, f64)]) -> Result<Self> {
        if widths.len() < 2 {
            return Err(Error::InvalidInput("a network needs input and output widths".into()));
        }
        if input_box.len() != widths[0] {
            return Err(Error::Dimension(format!("input box has {} entries, input width is {}", input_box.len(), widths[0])));
        }
        if input_box.iter().any(|&(lo, hi)| !(hi > lo)) {
            return Err(Error::InvalidInput("input box must have positive extent".into()));
        }
        let weights = widths.windows(2).map(|w| DMatrix::zeros(w[1], w[0])).collect();
        let biases = widths[1..].iter().map(|&w| DVector::zeros(w)).collect();
        Ok(Self {
            widths: widths.to_vec(),
            weights,
            biases,
            input_lo: input_box.iter().map(|b| b.0).collect(),
            input_hi: input_box.iter().map(|b| b.1).collect(),
        })
    }

    /// He-uniform weights `U(-sqrt(6/fan_in), sqrt(6/fan_in))`, zero biases.
    pub fn he_uniform(widths: &[usize], input_box: &[(f64, f64)], seed: u64) -> Result<Self> {
        let mut model = Self::zeros(widths, input_box)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for w in &mut model.weights {
            let bound = (6.0 / w.ncols() as f64).sqrt();
            // Row-major fill so the draw order is independent of storage layout.
            for i in 0..w.nrows() {
                for j in 0..w.ncols() {
                    w[(i, j)] = rng.random_range(-bound..bound);
                }
            }
        }
        Ok(model)
    }

    pub fn n_layers(&self) -> usize {
        self.weights.len()
    }

    pub fn n_inputs(&self) -> usize {
        self.widths[0]
    }

    pub fn n_outputs(&self) -> usize {
        *self.widths.last().expect("at least two widths")
    }

    pub fn n_params(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum::<usize>() + self.biases.iter().map(|b| b.len()).sum::<usize>()
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(|w| w.iter().all(|v| v.is_finite())) && self.biases.iter().all(|b| b.iter().all(|v| v.is_finite()))
    }

    /// Checks that layer shapes chain and match `widths`.
    pub fn validate(&self) -> Result<()> {
        if self.weights.len() + 1 != self.widths.len() || self.biases.len() != self.weights.len() {
            return Err(Error::Dimension("layer count does not match widths".into()));
        }
        for (k, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            if w.shape() != (self.widths[k + 1], self.widths[k]) || b.len() != self.widths[k + 1] {
                return Err(Error::Dimension(format!("layer {k} has shape {:?}", w.shape())));
            }
        }
        if !self.is_finite() {
            return Err(Error::NonFinite("model parameters".into()));
        }
        Ok(())
    }

    /// Columns of `mu_t` (`p x m`) mapped to `[-1, 1]^p`.
    pub fn normalize_columns(&self, mu_t: &DMatrix<f64>) -> DMatrix<f64> {
        let mut x = mu_t.clone();
        for i in 0..x.nrows() {
            let (lo, hi) = (self.input_lo[i], self.input_hi[i]);
            for j in 0..x.ncols() {
                x[(i, j)] = 2.0 * (x[(i, j)] - lo) / (hi - lo) - 1.0;
            }
        }
        x
    }

    /// Forward pass on normalized inputs (`p x m`), returning every layer's
    /// pre-activation. The last entry is the output.
    pub fn preactivations(&self, x: &DMatrix<f64>) -> Vec<DMatrix<f64>> {
        let mut out: Vec<DMatrix<f64>> = Vec::with_capacity(self.n_layers());
        let last = self.n_layers() - 1;
        let mut a = x.clone();
        for (k, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut z = w * &a;
            for mut col in z.column_iter_mut() {
                col += b;
            }
            if k < last {
                a = z.map(relu);
            }
            out.push(z);
        }
        out
    }

    /// Outputs (`n_out x m`) for parameters given as columns (`p x m`).
    pub fn forward_columns(&self, mu_t: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if mu_t.nrows() != self.n_inputs() {
            return Err(Error::Dimension(format!("input has {} rows, network expects {}", mu_t.nrows(), self.n_inputs())));
        }
        let x = self.normalize_columns(mu_t);
        Ok(self.preactivations(&x).pop().expect("non-empty network"))
    }

    /// Outputs (`m x n_out`) for a batch of parameters (`m x p`).
    pub fn forward(&self, mu: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if mu.ncols() != self.n_inputs() {
            return Err(Error::Dimension(format!("input has {} columns, network expects {}", mu.ncols(), self.n_inputs())));
        }
        Ok(self.forward_columns(&mu.transpose())?.transpose())
    }
}

fn relu(v: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        0.0
    }
}

/// Mean over rows of `|pred_i - target_i| / |target_i|`.
pub fn relative_error_loss(pred: &DMatrix<f64>, target: &DMatrix<f64>) -> Result<f64> {
    if pred.shape() != target.shape() {
        return Err(Error::Dimension(format!("prediction {:?} vs target {:?}", pred.shape(), target.shape())));
    }
    per_sample_errors(&pred.transpose(), &target.transpose()).map(|e| mean(&e))
}

/// Relative errors of columns (`k x m` layout).
fn per_sample_errors(pred_t: &DMatrix<f64>, target_t: &DMatrix<f64>) -> Result<Vec<f64>> {
    (0..target_t.ncols())
        .map(|j| {
            let tn = target_t.column(j).norm();
            if tn == 0.0 {
                return Err(Error::ZeroTarget(j));
            }
            Ok((pred_t.column(j) - target_t.column(j)).norm() / tn)
        })
        .collect()
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<DMatrix<f64>>,
    pub biases: Vec<DVector<f64>>,
}

impl Gradients {
    pub fn zeros_like(model: &MlpModel) -> Self {
        Self {
            weights: model.weights.iter().map(|w| DMatrix::zeros(w.nrows(), w.ncols())).collect(),
            biases: model.biases.iter().map(|b| DVector::zeros(b.len())).collect(),
        }
    }
}

/// Loss and its exact gradient on a batch given as columns
/// (`mu_t`: `p x m`, `target_t`: `n_out x m`). The ReLU derivative at 0 is 0,
/// as is the loss derivative at a sample predicted exactly.
pub fn gradient_columns(model: &MlpModel, mu_t: &DMatrix<f64>, target_t: &DMatrix<f64>) -> Result<(f64, Gradients)> {
    let m = mu_t.ncols();
    if target_t.ncols() != m || target_t.nrows() != model.n_outputs() || mu_t.nrows() != model.n_inputs() {
        return Err(Error::Dimension("batch shapes do not match the network".into()));
    }
    let x = model.normalize_columns(mu_t);
    let zs = model.preactivations(&x);
    let y = zs.last().expect("non-empty network");

    let mut delta = DMatrix::zeros(y.nrows(), m);
    let mut loss = 0.0;
    for j in 0..m {
        let tn = target_t.column(j).norm();
        if tn == 0.0 {
            return Err(Error::ZeroTarget(j));
        }
        let r = y.column(j) - target_t.column(j);
        let rn = r.norm();
        loss += rn / tn;
        if rn > 0.0 {
            delta.set_column(j, &(r / (rn * tn * m as f64)));
        }
    }
    loss /= m as f64;

    let n_layers = model.n_layers();
    let mut grads = Gradients::zeros_like(model);
    for k in (0..n_layers).rev() {
        let input = if k == 0 { x.clone() } else { zs[k - 1].map(relu) };
        grads.weights[k] = &delta * input.transpose();
        grads.biases[k] = delta.column_sum();
        if k > 0 {
            let mut back = model.weights[k].tr_mul(&delta);
            let z = &zs[k - 1];
            for (b, &zv) in back.iter_mut().zip(z.iter()) {
                if zv <= 0.0 {
                    *b = 0.0;
                }
            }
            delta = back;
        }
    }
    Ok((loss, grads))
}

/// [`gradient_columns`] for row-wise batches (`m x p`, `m x n_out`).
pub fn gradient(model: &MlpModel, mu: &DMatrix<f64>, target: &DMatrix<f64>) -> Result<(f64, Gradients)> {
    gradient_columns(model, &mu.transpose(), &target.transpose())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps_adam: f64,
    pub batch_size: usize,
    pub n_epochs: usize,
    pub patience: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { lr: 1e-4, beta1: 0.9, beta2: 0.999, eps_adam: 1e-8, batch_size: 100, n_epochs: 2000, patience: 500, seed: 0 }
    }
}

impl TrainConfig {
    pub fn validate(&self, n_train: usize) -> Result<()> {
        if !(self.lr > 0.0) {
            return Err(Error::Config(format!("learning rate must be positive, got {}", self.lr)));
        }
        if !(0.0 < self.beta1 && self.beta1 < self.beta2 && self.beta2 < 1.0) {
            return Err(Error::Config(format!("need 0 < beta1 < beta2 < 1, got {} and {}", self.beta1, self.beta2)));
        }
        if !(self.eps_adam > 0.0) {
            return Err(Error::Config("Adam epsilon must be positive".into()));
        }
        if self.batch_size == 0 || self.batch_size > n_train {
            return Err(Error::Config(format!("batch size {} must lie in 1..={n_train}", self.batch_size)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step: u64,
    m: Gradients,
    v: Gradients,
}

impl AdamState {
    pub fn new(model: &MlpModel) -> Self {
        Self { step: 0, m: Gradients::zeros_like(model), v: Gradients::zeros_like(model) }
    }
}

fn adam_slice(p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64], cfg: &TrainConfig, c1: f64, c2: f64) {
    for i in 0..p.len() {
        m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
        v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
        let mhat = m[i] / c1;
        let vhat = v[i] / c2;
        p[i] -= cfg.lr * mhat / (vhat.sqrt() + cfg.eps_adam);
    }
}

/// One bias-corrected Adam step.
pub fn adam_update(model: &mut MlpModel, state: &mut AdamState, grads: &Gradients, cfg: &TrainConfig) {
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    for k in 0..model.n_layers() {
        adam_slice(
            model.weights[k].as_mut_slice(),
            grads.weights[k].as_slice(),
            state.m.weights[k].as_mut_slice(),
            state.v.weights[k].as_mut_slice(),
            cfg,
            c1,
            c2,
        );
        adam_slice(
            model.biases[k].as_mut_slice(),
            grads.biases[k].as_slice(),
            state.m.biases[k].as_mut_slice(),
            state.v.biases[k].as_mut_slice(),
            cfg,
            c1,
            c2,
        );
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    /// `n_data x p`.
    #[serde(skip)]
    pub inputs: DMatrix<f64>,
    /// `n_data x n_out`.
    #[serde(skip)]
    pub targets: DMatrix<f64>,
    pub train: Vec<usize>,
    pub valid: Vec<usize>,
    pub test: Vec<usize>,
}

impl Dataset {
    /// Shuffles `0..n` with `seed` and cuts it by `fractions` (train, valid; test takes the rest).
    pub fn with_random_split(inputs: DMatrix<f64>, targets: DMatrix<f64>, fractions: [f64; 3], seed: u64) -> Result<Self> {
        let n = inputs.nrows();
        let total: f64 = fractions.iter().sum();
        if (total - 1.0).abs() > 1e-9 || fractions.iter().any(|&f| f < 0.0) {
            return Err(Error::Config(format!("split fractions {fractions:?} must be non-negative and sum to 1")));
        }
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let n_train = (fractions[0] * n as f64).round() as usize;
        let n_valid = ((fractions[1] * n as f64).round() as usize).min(n - n_train);
        let test = idx.split_off(n_train + n_valid);
        let valid = idx.split_off(n_train);
        Self::new(inputs, targets, idx, valid, test)
    }

    pub fn new(inputs: DMatrix<f64>, targets: DMatrix<f64>, train: Vec<usize>, valid: Vec<usize>, test: Vec<usize>) -> Result<Self> {
        let n = inputs.nrows();
        if targets.nrows() != n {
            return Err(Error::Dimension(format!("{n} inputs for {} targets", targets.nrows())));
        }
        let mut seen = vec![false; n];
        for &i in train.iter().chain(&valid).chain(&test) {
            if i >= n || seen[i] {
                return Err(Error::InvalidInput(format!("split index {i} is out of range or repeated")));
            }
            seen[i] = true;
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::InvalidInput("splits do not cover every sample".into()));
        }
        for i in 0..n {
            if targets.row(i).norm() == 0.0 {
                return Err(Error::ZeroTarget(i));
            }
        }
        Ok(Self { inputs, targets, train, valid, test })
    }

    pub fn len(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `(p x |idx|, n_out x |idx|)` column blocks.
    pub fn columns(&self, idx: &[usize]) -> (DMatrix<f64>, DMatrix<f64>) {
        let x = DMatrix::from_fn(self.inputs.ncols(), idx.len(), |r, c| self.inputs[(idx[c], r)]);
        let y = DMatrix::from_fn(self.targets.ncols(), idx.len(), |r, c| self.targets[(idx[c], r)]);
        (x, y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub valid_loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the lowest validation loss.
    pub model: MlpModel,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_valid_loss: f64,
    pub stopped_early: bool,
}

fn select_columns(m: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), idx.len(), |r, c| m[(r, idx[c])])
}

/// Mini-batch Adam with a seeded reshuffle of the training split every epoch.
///
/// `hidden` lists the hidden-layer widths; the network is initialized from
/// `cfg.seed`. Training stops once the validation loss has not improved for
/// more than `cfg.patience` consecutive epochs.
pub fn train(dataset: &Dataset, hidden: &[usize], input_box: &[(f64, f64)], cfg: &TrainConfig) -> Result<TrainOutcome> {
    let mut widths = vec![dataset.inputs.ncols()];
    widths.extend_from_slice(hidden);
    widths.push(dataset.targets.ncols());
    let model = MlpModel::he_uniform(&widths, input_box, cfg.seed)?;
    train_from(model, dataset, cfg)
}

pub fn train_from(mut model: MlpModel, dataset: &Dataset, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate(dataset.train.len())?;
    if dataset.valid.is_empty() {
        return Err(Error::Config("validation split is empty".into()));
    }
    let (train_x, train_y) = dataset.columns(&dataset.train);
    let (valid_x, valid_y) = dataset.columns(&dataset.valid);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0x9E37_79B9_7F4A_7C15));
    let mut order: Vec<usize> = (0..dataset.train.len()).collect();
    let mut state = AdamState::new(&model);

    let mut history = Vec::new();
    let mut best = (model.clone(), 0usize, f64::INFINITY);
    let mut since_best = 0usize;
    let mut stopped_early = false;

    for epoch in 1..=cfg.n_epochs {
        order.shuffle(&mut rng);
        let mut weighted = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let bx = select_columns(&train_x, chunk);
            let by = select_columns(&train_y, chunk);
            let (loss, grads) = gradient_columns(&model, &bx, &by)?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch });
            }
            weighted += loss * chunk.len() as f64;
            adam_update(&mut model, &mut state, &grads, cfg);
        }
        let train_loss = weighted / order.len() as f64;
        let valid_loss = mean(&per_sample_errors(&model.forward_columns(&valid_x)?, &valid_y)?);
        if !valid_loss.is_finite() {
            return Err(Error::NonFiniteLoss { epoch });
        }
        history.push(EpochRecord { epoch, train_loss, valid_loss });
        if epoch % 100 == 0 {
            debug!("epoch {epoch}: train {train_loss:.3e}, valid {valid_loss:.3e}");
        }
        if valid_loss < best.2 {
            best = (model.clone(), epoch, valid_loss);
            since_best = 0;
        } else {
            since_best += 1;
            if since_best > cfg.patience {
                stopped_early = true;
                break;
            }
        }
    }
    let (model, best_epoch, best_valid_loss) = best;
    Ok(TrainOutcome { model, history, best_epoch, best_valid_loss, stopped_early })
}

/// Per-sample relative errors on the rows `idx`.
pub fn sample_errors(model: &MlpModel, dataset: &Dataset, idx: &[usize]) -> Result<Vec<f64>> {
    let (x, y) = dataset.columns(idx);
    per_sample_errors(&model.forward_columns(&x)?, &y)
}

/// Mean relative error on the rows `idx`.
pub fn evaluate(model: &MlpModel, dataset: &Dataset, idx: &[usize]) -> Result<f64> {
    Ok(mean(&sample_errors(model, dataset, idx)?))
}

pub fn write_history_csv<W: Write>(history: &[EpochRecord], mut w: W) -> std::io::Result<()> {
    writeln!(w, "epoch,train_loss,valid_loss")?;
    for r in history {
        writeln!(w, "{},{:e},{:e}", r.epoch, r.train_loss, r.valid_loss)?;
    }
    Ok(())
}
