//! Fixed-architecture toy classifier trained only through an adapter.
//!
//! `logits = W_out · relu((W_hidden + ΔW) · relu(W_in · x))`, where all three
//! matrices are frozen and `ΔW` comes from the adapter under test. Gradients
//! are derived by hand; the ReLU subgradient at 0 is taken as 0.

use std::fmt;
use std::str::FromStr;

use crate::adapter::{self, init_adapter, AdapterConfig, AdapterState, InitMode};
use crate::baselines::{lowrank_delta, lowrank_grads, lowrank_init, random_spectral_init_with, LowRankState};
use crate::error::{MacpError, Result};
use crate::matrix::{matmul_into, DenseMatrix};
use crate::rng::{kaiming_uniform, stream, Stream};
use crate::synth::Dataset;

pub const INPUT_DIM: usize = 2;
pub const HIDDEN_DIM: usize = 64;
pub const NUM_CLASSES: usize = 8;

/// Frozen weights of the toy network.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyModel {
    w_in: DenseMatrix,
    hidden_base: DenseMatrix,
    w_out: DenseMatrix,
}

impl ToyModel {
    /// Default 2 → 64 → 64 → 8 network, Kaiming-uniform from `seed`.
    pub fn new(seed: u64) -> Self {
        Self::with_dims(INPUT_DIM, HIDDEN_DIM, NUM_CLASSES, seed).expect("static dims are non-zero")
    }

    pub fn with_dims(input: usize, hidden: usize, classes: usize, seed: u64) -> Result<Self> {
        let mut rng = stream(seed, Stream::FrozenModel);
        let w_in = DenseMatrix::new(hidden, input, kaiming_uniform(input, hidden * input, &mut rng))?;
        let hidden_base = DenseMatrix::new(hidden, hidden, kaiming_uniform(hidden, hidden * hidden, &mut rng))?;
        let w_out = DenseMatrix::new(classes, hidden, kaiming_uniform(hidden, classes * hidden, &mut rng))?;
        Ok(Self {
            w_in,
            hidden_base,
            w_out,
        })
    }

    pub fn from_parts(w_in: DenseMatrix, hidden_base: DenseMatrix, w_out: DenseMatrix) -> Result<Self> {
        let hidden = w_in.rows();
        hidden_base.ensure_shape(hidden, hidden)?;
        if w_out.cols() != hidden {
            return Err(MacpError::ShapeMismatch {
                expected: (w_out.rows(), hidden),
                actual: w_out.shape(),
            });
        }
        Ok(Self {
            w_in,
            hidden_base,
            w_out,
        })
    }

    pub fn w_in(&self) -> &DenseMatrix {
        &self.w_in
    }

    pub fn hidden_base(&self) -> &DenseMatrix {
        &self.hidden_base
    }

    pub fn w_out(&self) -> &DenseMatrix {
        &self.w_out
    }

    pub fn input_dim(&self) -> usize {
        self.w_in.cols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w_in.rows()
    }

    pub fn num_classes(&self) -> usize {
        self.w_out.rows()
    }

    /// First-layer features `relu(W_in · x)` for every sample, `N × hidden`.
    fn input_features(&self, inputs: &[[f64; 2]]) -> Result<Vec<f64>> {
        if self.input_dim() != 2 {
            return Err(MacpError::LengthMismatch {
                expected: self.input_dim(),
                actual: 2,
            });
        }
        let h = self.hidden_dim();
        let mut out = Vec::with_capacity(inputs.len() * h);
        for x in inputs {
            for k in 0..h {
                out.push((self.w_in.get(k, 0) * x[0] + self.w_in.get(k, 1) * x[1]).max(0.0));
            }
        }
        Ok(out)
    }
}

/// Logits for a single input under the adapter update `adapter_delta`.
pub fn forward_model(model: &ToyModel, adapter_delta: &DenseMatrix, x: &[f64]) -> Result<Vec<f64>> {
    let h = model.hidden_dim();
    adapter_delta.ensure_shape(h, h)?;
    let h1: Vec<f64> = model.w_in.matvec(x)?.into_iter().map(|v| v.max(0.0)).collect();
    let weight = model.hidden_base.add(adapter_delta)?;
    let h2: Vec<f64> = weight.matvec(&h1)?.into_iter().map(|v| v.max(0.0)).collect();
    model.w_out.matvec(&h2)
}

/// Logits for a batch of inputs, `N × classes`.
pub fn forward_batch(model: &ToyModel, adapter_delta: &DenseMatrix, inputs: &[[f64; 2]]) -> Result<DenseMatrix> {
    let h = model.hidden_dim();
    adapter_delta.ensure_shape(h, h)?;
    let features = model.input_features(inputs)?;
    let pass = BatchPass::run(model, adapter_delta, &features, inputs.len());
    DenseMatrix::new(inputs.len(), model.num_classes(), pass.logits)
}

/// Mean cross-entropy, accuracy and `∂loss/∂ΔW` over a batch.
#[derive(Debug, Clone)]
pub struct BatchOutcome {
    pub loss: f64,
    pub accuracy: f64,
    pub grad: DenseMatrix,
}

/// Mean softmax cross-entropy gradient with respect to the adapter update.
pub fn backward_model(model: &ToyModel, adapter_delta: &DenseMatrix, batch: &Dataset) -> Result<BatchOutcome> {
    let features = model.input_features(batch.inputs())?;
    loss_and_grad(model, adapter_delta, &features, batch.labels())
}

fn loss_and_grad(
    model: &ToyModel,
    adapter_delta: &DenseMatrix,
    features: &[f64],
    labels: &[usize],
) -> Result<BatchOutcome> {
    let n = labels.len();
    if n == 0 {
        return Err(MacpError::InvalidConfig("batch is empty".into()));
    }
    let h = model.hidden_dim();
    let c = model.num_classes();
    adapter_delta.ensure_shape(h, h)?;
    if let Some(&bad) = labels.iter().find(|&&l| l >= c) {
        return Err(MacpError::InvalidConfig(format!(
            "label {bad} out of range for {c} classes"
        )));
    }

    let pass = BatchPass::run(model, adapter_delta, features, n);

    let mut loss = 0.0;
    let mut correct = 0usize;
    let mut d_logits = vec![0.0; n * c];
    let inv_n = 1.0 / n as f64;
    for (s, &label) in labels.iter().enumerate() {
        let row = &pass.logits[s * c..(s + 1) * c];
        let (argmax, &max) = row
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
            .expect("at least one class");
        if argmax == label {
            correct += 1;
        }
        let sum: f64 = row.iter().map(|z| (z - max).exp()).sum();
        loss += max + sum.ln() - row[label];
        let d = &mut d_logits[s * c..(s + 1) * c];
        for (k, (dk, z)) in d.iter_mut().zip(row).enumerate() {
            let p = (z - max).exp() / sum;
            *dk = (p - if k == label { 1.0 } else { 0.0 }) * inv_n;
        }
    }

    // dH2 = dLogits · W_out, masked by the hidden ReLU.
    let mut d_pre = vec![0.0; n * h];
    matmul_into(&d_logits, model.w_out.as_slice(), &mut d_pre, n, c, h);
    for (d, &z) in d_pre.iter_mut().zip(&pass.pre_activation) {
        if z <= 0.0 {
            *d = 0.0;
        }
    }
    // dW = dPreᵀ · H1
    let d_pre_t = DenseMatrix::from_raw(n, h, d_pre).transpose();
    let mut grad = vec![0.0; h * h];
    matmul_into(d_pre_t.as_slice(), features, &mut grad, h, n, h);

    Ok(BatchOutcome {
        loss: loss * inv_n,
        accuracy: correct as f64 * inv_n,
        grad: DenseMatrix::from_raw(h, h, grad),
    })
}

struct BatchPass {
    pre_activation: Vec<f64>,
    logits: Vec<f64>,
}

impl BatchPass {
    fn run(model: &ToyModel, adapter_delta: &DenseMatrix, features: &[f64], n: usize) -> Self {
        let h = model.hidden_dim();
        let c = model.num_classes();
        let weight_t = model
            .hidden_base
            .add(adapter_delta)
            .expect("shape checked by caller")
            .transpose();
        let mut pre_activation = vec![0.0; n * h];
        matmul_into(features, weight_t.as_slice(), &mut pre_activation, n, h, h);
        let hidden: Vec<f64> = pre_activation.iter().map(|v| v.max(0.0)).collect();
        let w_out_t = model.w_out.transpose();
        let mut logits = vec![0.0; n * c];
        matmul_into(&hidden, w_out_t.as_slice(), &mut logits, n, h, c);
        Self { pre_activation, logits }
    }
}

/// Adapter family trained on the hidden layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Macp,
    LowRank,
    RandomSpectral,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Macp, Method::LowRank, Method::RandomSpectral];

    pub fn name(self) -> &'static str {
        match self {
            Method::Macp => "macp",
            Method::LowRank => "lowrank",
            Method::RandomSpectral => "random_spectral",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = MacpError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "macp" => Ok(Method::Macp),
            "lowrank" => Ok(Method::LowRank),
            "random_spectral" => Ok(Method::RandomSpectral),
            other => Err(MacpError::UnknownMethod(other.to_string())),
        }
    }
}

/// Per-method adapter hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MethodConfig {
    Macp(AdapterConfig),
    LowRank { rank: usize },
    RandomSpectral { n: usize, alpha: f64, init: InitMode },
}

impl MethodConfig {
    pub fn method(&self) -> Method {
        match self {
            MethodConfig::Macp(_) => Method::Macp,
            MethodConfig::LowRank { .. } => Method::LowRank,
            MethodConfig::RandomSpectral { .. } => Method::RandomSpectral,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Seeds adapter selection and initialisation.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 2000,
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(MacpError::InvalidConfig("epochs must be at least 1".into()));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(MacpError::InvalidConfig(format!(
                "learning rate {} is invalid",
                self.lr
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub loss: f64,
    pub train_acc: f64,
    /// Running maximum of `train_acc` up to and including this epoch.
    pub best_acc: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunStatus {
    Completed,
    /// The loss became non-finite at this epoch; training stopped there.
    Diverged {
        epoch: usize,
    },
}

/// Per-epoch training log of one run. Metrics at epoch `e` are those of the
/// parameters after `e - 1` optimiser steps.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub method: Method,
    pub seed: u64,
    pub trainable: usize,
    pub epochs: Vec<EpochLog>,
    pub status: RunStatus,
}

impl RunRecord {
    pub fn final_accuracy(&self) -> Option<f64> {
        self.epochs.last().map(|e| e.train_acc)
    }

    /// First epoch whose training accuracy reaches `threshold`.
    pub fn epochs_to_reach(&self, threshold: f64) -> Option<usize> {
        self.epochs.iter().find(|e| e.train_acc >= threshold).map(|e| e.epoch)
    }

    pub fn succeeded(&self) -> bool {
        self.status == RunStatus::Completed
    }
}

/// Adapter under training, flattened for the optimiser.
enum Trainee {
    Spectral(AdapterState),
    LowRank(LowRankState),
}

impl Trainee {
    fn build(model: &ToyModel, config: &MethodConfig, seed: u64) -> Result<Self> {
        let h = model.hidden_dim();
        Ok(match *config {
            MethodConfig::Macp(cfg) => Trainee::Spectral(init_adapter(&model.hidden_base, &cfg, seed)?),
            MethodConfig::LowRank { rank } => Trainee::LowRank(lowrank_init(h, h, rank, seed)?),
            MethodConfig::RandomSpectral { n, alpha, init } => {
                Trainee::Spectral(random_spectral_init_with(h, h, n, alpha, init, seed)?)
            }
        })
    }

    fn delta(&self) -> DenseMatrix {
        match self {
            Trainee::Spectral(s) => adapter::delta_weight(s),
            Trainee::LowRank(s) => lowrank_delta(s),
        }
    }

    fn num_params(&self) -> usize {
        match self {
            Trainee::Spectral(s) => s.num_trainable(),
            Trainee::LowRank(s) => s.num_trainable(),
        }
    }

    fn grads(&self, grad_delta: &DenseMatrix) -> Result<Vec<f64>> {
        match self {
            Trainee::Spectral(s) => adapter::grad_coeffs(s, grad_delta),
            Trainee::LowRank(s) => {
                let (ga, gb) = lowrank_grads(s, grad_delta)?;
                let mut flat = ga.into_vec();
                flat.extend(gb.into_vec());
                Ok(flat)
            }
        }
    }

    fn for_each_param(&mut self, mut f: impl FnMut(usize, &mut f64)) {
        match self {
            Trainee::Spectral(s) => s.coeffs_mut().iter_mut().enumerate().for_each(|(i, p)| f(i, p)),
            Trainee::LowRank(s) => {
                let offset = s.a().len();
                s.a_mut()
                    .as_mut_slice()
                    .iter_mut()
                    .enumerate()
                    .for_each(|(i, p)| f(i, p));
                s.b_mut()
                    .as_mut_slice()
                    .iter_mut()
                    .enumerate()
                    .for_each(|(i, p)| f(offset + i, p));
            }
        }
    }
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    step: i32,
}

impl Adam {
    fn new(len: usize) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            step: 0,
        }
    }

    fn update(&mut self, trainee: &mut Trainee, grads: &[f64], cfg: &TrainConfig) {
        self.step += 1;
        let bias1 = 1.0 - cfg.beta1.powi(self.step);
        let bias2 = 1.0 - cfg.beta2.powi(self.step);
        let (m, v) = (&mut self.m, &mut self.v);
        trainee.for_each_param(|i, p| {
            let g = grads[i];
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
            let m_hat = m[i] / bias1;
            let v_hat = v[i] / bias2;
            *p -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
        });
    }
}

/// Full-batch Adam on the adapter parameters only.
pub fn train(model: &ToyModel, method: &MethodConfig, config: &TrainConfig, data: &Dataset) -> Result<RunRecord> {
    config.validate()?;
    if data.is_empty() {
        return Err(MacpError::InvalidConfig("dataset is empty".into()));
    }
    let features = model.input_features(data.inputs())?;
    let mut trainee = Trainee::build(model, method, config.seed)?;
    let mut adam = Adam::new(trainee.num_params());
    let mut record = RunRecord {
        method: method.method(),
        seed: config.seed,
        trainable: trainee.num_params(),
        epochs: Vec::with_capacity(config.epochs),
        status: RunStatus::Completed,
    };
    let mut best = 0.0f64;

    for epoch in 1..=config.epochs {
        let outcome = loss_and_grad(model, &trainee.delta(), &features, data.labels())?;
        if !outcome.loss.is_finite() {
            record.status = RunStatus::Diverged { epoch };
            break;
        }
        best = best.max(outcome.accuracy);
        record.epochs.push(EpochLog {
            epoch,
            loss: outcome.loss,
            train_acc: outcome.accuracy,
            best_acc: best,
        });
        let grads = trainee.grads(&outcome.grad)?;
        adam.update(&mut trainee, &grads, config);
    }
    Ok(record)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{make_dataset, SyntheticDatasetConfig};

    fn small_data(seed: u64) -> Dataset {
        make_dataset(&SyntheticDatasetConfig {
            samples_per_class: 5,
            seed,
            ..Default::default()
        })
        .unwrap()
    }

    #[test]
    fn zero_input_gives_zero_logits() {
        let model = ToyModel::new(1);
        let delta = DenseMatrix::zeros(64, 64).unwrap();
        assert!(forward_model(&model, &delta, &[0.0, 0.0])
            .unwrap()
            .iter()
            .all(|&v| v == 0.0));
    }

    #[test]
    fn batch_matches_per_sample() {
        let model = ToyModel::new(2);
        let delta = DenseMatrix::from_fn(64, 64, |i, j| ((i * 7 + j) as f64).sin() * 0.01).unwrap();
        let data = small_data(3);
        let batch = forward_batch(&model, &delta, data.inputs()).unwrap();
        for (s, x) in data.inputs().iter().enumerate() {
            let single = forward_model(&model, &delta, x).unwrap();
            for (k, v) in single.iter().enumerate() {
                assert!((batch.get(s, k) - v).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn duplicate_samples_match_single() {
        let model = ToyModel::new(4);
        let delta = DenseMatrix::zeros(64, 64).unwrap();
        let one = Dataset::new(vec![[1.0, -2.0]], vec![3]).unwrap();
        let two = Dataset::new(vec![[1.0, -2.0]; 2], vec![3, 3]).unwrap();
        let a = backward_model(&model, &delta, &one).unwrap();
        let b = backward_model(&model, &delta, &two).unwrap();
        assert!((a.loss - b.loss).abs() < 1e-14);
        assert!(a.grad.max_abs_diff(&b.grad).unwrap() < 1e-14);
    }

    #[test]
    fn saturated_softmax_has_vanishing_gradient() {
        // Identity-like network where class 0 wins by a huge margin.
        let w_in = DenseMatrix::from_fn(4, 2, |i, j| if i == 0 && j == 0 { 1.0 } else { 0.0 }).unwrap();
        let hidden = DenseMatrix::from_fn(4, 4, |i, j| if i == j { 1.0 } else { 0.0 }).unwrap();
        let w_out = DenseMatrix::from_fn(3, 4, |k, j| if k == 0 && j == 0 { 100.0 } else { 0.0 }).unwrap();
        let model = ToyModel::from_parts(w_in, hidden, w_out).unwrap();
        let data = Dataset::new(vec![[1.0, 0.0]], vec![0]).unwrap();
        let out = backward_model(&model, &DenseMatrix::zeros(4, 4).unwrap(), &data).unwrap();
        let norm = out.grad.sum_of_squares().sqrt();
        assert!(norm < 1e-6, "{norm}");
        assert_eq!(out.accuracy, 1.0);
    }

    #[test]
    fn one_epoch_and_zero_lr() {
        let model = ToyModel::new(5);
        let data = small_data(5);
        let method = MethodConfig::Macp(AdapterConfig::default());
        let rec = train(
            &model,
            &method,
            &TrainConfig {
                epochs: 1,
                ..Default::default()
            },
            &data,
        )
        .unwrap();
        assert_eq!(rec.epochs.len(), 1);
        let rec = train(
            &model,
            &method,
            &TrainConfig {
                epochs: 20,
                lr: 0.0,
                ..Default::default()
            },
            &data,
        )
        .unwrap();
        assert!(rec.epochs.iter().all(|e| e.train_acc == rec.epochs[0].train_acc));
        assert!(rec.epochs.iter().all(|e| e.loss == rec.epochs[0].loss));
    }

    #[test]
    fn training_is_deterministic_and_tracks_best() {
        let model = ToyModel::new(6);
        let data = small_data(6);
        let cfg = TrainConfig {
            epochs: 30,
            lr: 1e-2,
            seed: 9,
            ..Default::default()
        };
        for method in [
            MethodConfig::Macp(AdapterConfig::default()),
            MethodConfig::LowRank { rank: 1 },
            MethodConfig::RandomSpectral {
                n: 128,
                alpha: 1.0,
                init: InitMode::Kaiming,
            },
        ] {
            let a = train(&model, &method, &cfg, &data).unwrap();
            let b = train(&model, &method, &cfg, &data).unwrap();
            assert_eq!(a, b);
            assert!(a.epochs.windows(2).all(|w| w[1].best_acc >= w[0].best_acc));
        }
    }

    #[test]
    fn trainable_counts() {
        let model = ToyModel::new(7);
        let data = small_data(7);
        let cfg = TrainConfig {
            epochs: 1,
            ..Default::default()
        };
        let count = |m: MethodConfig| train(&model, &m, &cfg, &data).unwrap().trainable;
        assert_eq!(count(MethodConfig::Macp(AdapterConfig::default())), 90);
        assert_eq!(count(MethodConfig::LowRank { rank: 1 }), 128);
        assert_eq!(
            count(MethodConfig::RandomSpectral {
                n: 128,
                alpha: 1.0,
                init: InitMode::Kaiming
            }),
            128
        );
    }

    #[test]
    fn divergence_is_reported_not_raised() {
        let model = ToyModel::new(8);
        let data = small_data(8);
        let cfg = TrainConfig {
            epochs: 50,
            lr: f64::MAX,
            ..Default::default()
        };
        let rec = train(&model, &MethodConfig::LowRank { rank: 1 }, &cfg, &data).unwrap();
        assert!(matches!(rec.status, RunStatus::Diverged { .. }));
        assert!(rec.epochs.iter().all(|e| e.loss.is_finite()));
    }

    #[test]
    fn rejects_bad_config() {
        let model = ToyModel::new(9);
        let data = small_data(9);
        let m = MethodConfig::LowRank { rank: 1 };
        assert!(train(
            &model,
            &m,
            &TrainConfig {
                epochs: 0,
                ..Default::default()
            },
            &data
        )
        .is_err());
        assert!(train(
            &model,
            &m,
            &TrainConfig {
                lr: -1.0,
                ..Default::default()
            },
            &data
        )
        .is_err());
    }
}
