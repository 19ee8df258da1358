//! Optimisation, the training loop and evaluation.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::analysis;
use crate::autodiff::{Graph, NodeId};
use crate::checkpoint::Checkpoint;
use crate::error::{Error, Result};
use crate::frontends::{argmax, FrontEndKind, GateMode, Model, ModelConfig};
use crate::params::{ParamGrads, ParamSet};
use crate::synth::{derive_seed, Dataset, Task};
use crate::tensor::Tensor;

/// Frequency below which neurons count as low-frequency in the metrics.
pub const LOW_FREQ_SPLIT_HZ: f64 = 1600.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LossKind {
    CrossEntropy,
    /// Huber loss between the softmax output and the one-hot target.
    Huber { delta: f64 },
}

impl Default for LossKind {
    fn default() -> Self {
        LossKind::CrossEntropy
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates, one tensor per parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
    /// Number of steps taken so far.
    pub t: u64,
}

impl AdamState {
    pub fn new(params: &ParamSet) -> Self {
        let zeros = || params.iter().map(|p| Tensor::zeros(p.tensor.shape())).collect();
        Self {
            m: zeros(),
            v: zeros(),
            t: 0,
        }
    }
}

/// One bias-corrected Adam update of every trainable parameter.
pub fn adam_step(params: &mut ParamSet, grads: &ParamGrads, state: &mut AdamState, cfg: &AdamConfig) -> Result<()> {
    if grads.len() != params.len() || state.m.len() != params.len() {
        return Err(Error::dim("adam_step", &[params.len()], &[grads.len(), state.m.len()]));
    }
    for ((p, g), m) in params.iter().zip(grads.iter()).zip(&state.m) {
        if p.tensor.shape() != g.shape() || g.shape() != m.shape() {
            return Err(Error::dim("adam_step", p.tensor.shape(), g.shape()));
        }
    }
    state.t += 1;
    let t = state.t as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    for (((p, g), m), v) in params
        .iter_mut()
        .zip(grads.iter())
        .zip(state.m.iter_mut())
        .zip(state.v.iter_mut())
    {
        if !p.trainable {
            continue;
        }
        let w = p.tensor.data_mut();
        for i in 0..w.len() {
            let gi = g.data()[i];
            let mi = &mut m.data_mut()[i];
            *mi = cfg.beta1 * *mi + (1.0 - cfg.beta1) * gi;
            let vi = &mut v.data_mut()[i];
            *vi = cfg.beta2 * *vi + (1.0 - cfg.beta2) * gi * gi;
            let m_hat = *mi / c1;
            let v_hat = *vi / c2;
            w[i] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub task: Task,
    pub loss: LossKind,
    pub optimizer: AdamConfig,
    pub batch_size: usize,
    pub epochs: usize,
    /// Seed for the per-epoch shuffles.
    pub seed: u64,
    pub model: ModelConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            task: Task::Pitch,
            loss: LossKind::CrossEntropy,
            optimizer: AdamConfig::default(),
            batch_size: 32,
            epochs: 10,
            seed: 0,
            model: ModelConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let o = &self.optimizer;
        // lr = 0 is accepted so a run can be checked for leaving parameters alone.
        if !(o.lr >= 0.0 && o.lr.is_finite()) {
            return Err(Error::Config(format!("lr must be finite and non-negative, got {}", o.lr)));
        }
        if !(0.0..1.0).contains(&o.beta1) || !(0.0..1.0).contains(&o.beta2) || !(o.eps > 0.0) {
            return Err(Error::Config("adam betas must lie in [0, 1) and eps be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if let LossKind::Huber { delta } = self.loss {
            if !(delta > 0.0) {
                return Err(Error::Config(format!("huber delta must be positive, got {delta}")));
            }
        }
        self.model.validate()
    }
}

/// Builds the scalar training loss of one example.
pub fn loss_node(model: &Model, g: &mut Graph, x: NodeId, label: usize, loss: LossKind) -> Result<NodeId> {
    let logits = model.arch.logits(g, x, &GateMode::Soft)?;
    match loss {
        LossKind::CrossEntropy => g.cross_entropy(logits, label),
        LossKind::Huber { delta } => {
            let classes = g.value(logits).len();
            if label >= classes {
                return Err(Error::Index { index: label, len: classes });
            }
            let mut onehot = Tensor::zeros(&[classes]);
            onehot.data_mut()[label] = 1.0;
            let probs = g.softmax(logits);
            g.huber(probs, onehot, delta)
        }
    }
}

fn example_loss(logits: &[f64], label: usize, loss: LossKind) -> Result<f64> {
    match loss {
        LossKind::CrossEntropy => crate::ops::cross_entropy(logits, label),
        LossKind::Huber { delta } => {
            let mut onehot = vec![0.0; logits.len()];
            *onehot
                .get_mut(label)
                .ok_or(Error::Index { index: label, len: logits.len() })? = 1.0;
            crate::ops::huber(&crate::ops::softmax(logits), &onehot, delta)
        }
    }
}

/// Per-epoch training record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
    /// Validation examples routed to each expert (adaptive models).
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub router_usage: Option<Vec<usize>>,
}

/// Result of a training run as written to `metrics.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub epochs: Vec<EpochMetrics>,
    pub best_epoch: usize,
    pub final_val_accuracy: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub router_mi_bits: Option<f64>,
    /// Share of first-layer neurons whose spectral peak lies below 1.6 kHz.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub fraction_below_1600_hz: Option<f64>,
}

/// Outcome of evaluating a model on a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub count: usize,
    pub loss: f64,
    pub accuracy: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub router_usage: Option<Vec<usize>>,
    /// Share of inputs whose largest gate weight is at least 0.999.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub one_hot_fraction: Option<f64>,
    /// Share of inputs where hard routing predicts the same class as soft routing.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub hard_agreement: Option<f64>,
}

fn check_compat(model: &Model, ds: &Dataset) -> Result<()> {
    let cfg = model.config();
    if ds.label_arity != cfg.classes {
        return Err(Error::format(
            format!("dataset with {} classes", cfg.classes),
            format!("{} classes", ds.label_arity),
        ));
    }
    if !ds.is_empty() && ds.waveform_len() != cfg.input_len {
        return Err(Error::format(
            format!("waveforms of length {}", cfg.input_len),
            format!("length {}", ds.waveform_len()),
        ));
    }
    Ok(())
}

/// Loss and accuracy of `model` on `ds`; parameters are not touched.
pub fn evaluate_model(model: &Model, ds: &Dataset, loss: LossKind) -> Result<EvalMetrics> {
    check_compat(model, ds)?;
    if ds.is_empty() {
        return Err(Error::Size("cannot evaluate on an empty dataset".into()));
    }
    let adaptive = model.config().frontend == FrontEndKind::Adaptive;
    let k = model.config().experts;
    let mut usage = vec![0usize; if adaptive { k } else { 0 }];
    let (mut total, mut correct, mut one_hot, mut agree) = (0.0, 0usize, 0usize, 0usize);
    for e in &ds.examples {
        let (logits, routed) = match model.adaptive_outputs(&e.waveform)? {
            Some(out) => (out.soft_logits, Some((out.gates, out.hard_logits))),
            None => (model.logits(&e.waveform)?, None),
        };
        total += example_loss(&logits, e.label, loss)?;
        let pred = argmax(&logits);
        if pred == e.label {
            correct += 1;
        }
        if let Some((gates, hard)) = routed {
            usage[argmax(&gates)] += 1;
            if gates.iter().cloned().fold(f64::MIN, f64::max) >= 0.999 {
                one_hot += 1;
            }
            if argmax(&hard) == pred {
                agree += 1;
            }
        }
    }
    let n = ds.len() as f64;
    Ok(EvalMetrics {
        count: ds.len(),
        loss: total / n,
        accuracy: correct as f64 / n,
        router_usage: adaptive.then_some(usage),
        one_hot_fraction: adaptive.then_some(one_hot as f64 / n),
        hard_agreement: adaptive.then_some(agree as f64 / n),
    })
}

pub fn evaluate(ckpt: &Checkpoint, ds: &Dataset) -> Result<EvalMetrics> {
    evaluate_model(&ckpt.model, ds, ckpt.config.loss)
}

/// Mean loss over one batch and the gradient of that mean.
fn batch_gradient(model: &Model, ds: &Dataset, batch: &[usize], loss: LossKind, grads: &mut ParamGrads) -> Result<f64> {
    grads.zero();
    let mut total = 0.0;
    for &i in batch {
        let e = &ds.examples[i];
        let mut g = Graph::new(&model.params);
        let x = g.input(Tensor::vector(&e.waveform), false);
        let l = loss_node(model, &mut g, x, e.label, loss)?;
        total += g.value(l).item().expect("scalar loss");
        g.backward_into(l, grads)?;
    }
    let scale = 1.0 / batch.len() as f64;
    grads.scale(scale);
    Ok(total * scale)
}

/// Trains a fresh model and returns the checkpoint with the best validation
/// accuracy (lower validation loss breaks ties).
pub fn train(cfg: &TrainConfig, train_set: &Dataset, val_set: &Dataset) -> Result<(Checkpoint, Metrics)> {
    cfg.validate()?;
    let mut model = Model::new(&cfg.model)?;
    for (name, ds) in [("train", train_set), ("validation", val_set)] {
        if ds.is_empty() {
            return Err(Error::Config(format!("{name} set is empty")));
        }
        if ds.label_arity != cfg.model.classes {
            return Err(Error::Config(format!(
                "{name} set has {} classes but the model has {}",
                ds.label_arity, cfg.model.classes
            )));
        }
        if ds.waveform_len() != cfg.model.input_len {
            return Err(Error::Config(format!(
                "{name} waveforms have length {} but the model expects {}",
                ds.waveform_len(),
                cfg.model.input_len
            )));
        }
    }
    let mut state = AdamState::new(&model.params);
    let mut grads = ParamGrads::zeros_like(&model.params);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, f64, usize, ParamSet)> = None;

    for epoch in 0..cfg.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, epoch as u64));
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let batch_loss = batch_gradient(&model, train_set, batch, cfg.loss, &mut grads)?;
            if !batch_loss.is_finite() {
                return Err(Error::Contract(format!("non-finite training loss in epoch {}", epoch + 1)));
            }
            loss_sum += batch_loss * batch.len() as f64;
            adam_step(&mut model.params, &grads, &mut state, &cfg.optimizer)?;
        }
        let val = evaluate_model(&model, val_set, cfg.loss)?;
        history.push(EpochMetrics {
            epoch: epoch + 1,
            train_loss: loss_sum / train_set.len() as f64,
            val_loss: val.loss,
            val_accuracy: val.accuracy,
            router_usage: val.router_usage,
        });
        let better = match &best {
            None => true,
            Some((acc, loss, _, _)) => val.accuracy > *acc || (val.accuracy == *acc && val.loss < *loss),
        };
        if better {
            best = Some((val.accuracy, val.loss, epoch + 1, model.params.clone()));
        }
    }

    let (best_acc, best_epoch) = match best {
        Some((acc, _, epoch, params)) => {
            model.params = params;
            (acc, epoch)
        }
        None => (evaluate_model(&model, val_set, cfg.loss)?.accuracy, 0),
    };
    let metrics = Metrics {
        epochs: history.clone(),
        best_epoch,
        final_val_accuracy: best_acc,
        router_mi_bits: if cfg.model.frontend == FrontEndKind::Adaptive {
            Some(analysis::router_usage(&model, val_set)?.mi_bits)
        } else {
            None
        },
        fraction_below_1600_hz: match model.kernel_banks().as_slice() {
            [bank] => Some(analysis::bank_fraction_below(bank, val_set.sample_rate, LOW_FREQ_SPLIT_HZ)?),
            _ => None,
        },
    };
    let ckpt = Checkpoint::new(cfg.clone(), model, history);
    Ok((ckpt, metrics))
}
