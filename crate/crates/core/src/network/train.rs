use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::TrainConfig;
use super::model::{mix_seed, HpcNetwork};
use super::sample::Sample;
use crate::geometry::IGNORE_LABEL;
use crate::{Error, Result};

/// Step-decayed learning rate for `epoch` (0-based) out of `total_epochs`.
pub fn learning_rate(cfg: &TrainConfig, epoch: usize, total_epochs: usize) -> f64 {
    let period = libm::round(cfg.decay_every * total_epochs as f64).max(1.0) as usize;
    let steps = (epoch / period) as i32;
    cfg.learning_rate * libm::pow(cfg.lr_decay, steps as f64)
}

/// Heavy-ball SGD: `v = mu v + g; w -= lr v`.
#[derive(Debug, Clone, PartialEq)]
pub struct Sgd {
    pub momentum_coef: f64,
    pub velocity: Vec<Vec<f64>>,
}

impl Sgd {
    pub fn new(network: &HpcNetwork) -> Self {
        Self {
            momentum_coef: network.config().train.momentum,
            velocity: network.tensors().iter().map(|t| vec![0.0; t.len()]).collect(),
        }
    }

    pub fn step(&mut self, network: &mut HpcNetwork, grads: &[Vec<f64>], lr: f64) -> Result<()> {
        if grads.len() != self.velocity.len() {
            return Err(Error::DimensionMismatch {
                what: "gradient tensors",
                expected: self.velocity.len(),
                found: grads.len(),
            });
        }
        let mu = self.momentum_coef;
        for ((w, v), g) in network.tensors_mut().into_iter().zip(&mut self.velocity).zip(grads) {
            for ((w, v), g) in w.iter_mut().zip(v.iter_mut()).zip(g) {
                *v = mu * *v + g;
                *w -= lr * *v;
            }
        }
        Ok(())
    }
}

/// A network together with its optimizer state, enough to resume training.
#[derive(Debug, Clone)]
pub struct TrainState {
    pub network: HpcNetwork,
    pub optimizer: Sgd,
    /// Epochs completed so far.
    pub epoch: usize,
    pub seed: u64,
}

impl TrainState {
    pub fn new(network: HpcNetwork, seed: u64) -> Self {
        let optimizer = Sgd::new(&network);
        Self {
            network,
            optimizer,
            epoch: 0,
            seed,
        }
    }
}

/// Row-major `classes x classes` counts, `counts[truth * classes + predicted]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        Self {
            classes,
            counts: vec![0; classes * classes],
        }
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn count(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth * self.classes + predicted]
    }

    /// Records one prediction; ignored labels are skipped.
    pub fn add(&mut self, truth: i32, predicted: usize) {
        if truth == IGNORE_LABEL || truth < 0 || truth as usize >= self.classes || predicted >= self.classes {
            return;
        }
        self.counts[truth as usize * self.classes + predicted] += 1;
    }

    pub fn merge(&mut self, other: &Self) {
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn accuracy(&self) -> f64 {
        let total = self.total();
        if total == 0 {
            return 0.0;
        }
        let correct: u64 = (0..self.classes).map(|c| self.count(c, c)).sum();
        correct as f64 / total as f64
    }

    /// IoU per class, `None` where the class never occurs in truth or prediction.
    pub fn class_iou(&self) -> Vec<Option<f64>> {
        (0..self.classes)
            .map(|c| {
                let tp = self.count(c, c);
                let fn_: u64 = (0..self.classes).map(|p| self.count(c, p)).sum::<u64>() - tp;
                let fp: u64 = (0..self.classes).map(|t| self.count(t, c)).sum::<u64>() - tp;
                let denom = tp + fp + fn_;
                (denom > 0).then(|| tp as f64 / denom as f64)
            })
            .collect()
    }

    /// Mean IoU over classes that occur.
    pub fn miou(&self) -> f64 {
        let present: Vec<f64> = self.class_iou().into_iter().flatten().collect();
        if present.is_empty() {
            0.0
        } else {
            present.iter().sum::<f64>() / present.len() as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    pub loss: f64,
    pub accuracy: f64,
    pub miou: f64,
    pub confusion: ConfusionMatrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochMetrics {
    /// 1-based epoch number.
    pub epoch: usize,
    pub learning_rate: f64,
    /// Mean of the per-step losses.
    pub loss: f64,
    pub accuracy: f64,
    pub miou: f64,
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Scales all gradients together so their joint L2 norm is at most `max_norm`.
pub fn clip_gradients(grads: &mut [Vec<f64>], max_norm: f64) {
    if max_norm <= 0.0 {
        return;
    }
    let norm = libm::sqrt(grads.iter().flatten().map(|g| g * g).sum::<f64>());
    if norm > max_norm {
        let s = max_norm / norm;
        grads.iter_mut().flatten().for_each(|g| *g *= s);
    }
}

/// Most likely class per point.
pub fn predict(network: &HpcNetwork, sample: &Sample) -> Result<Vec<usize>> {
    let fwd = network.forward(sample)?;
    Ok((0..fwd.logits.rows()).map(|i| argmax(fwd.logits.row(i))).collect())
}

/// Loss and segmentation metrics over `samples`; the loss is averaged over
/// labeled points of all samples.
pub fn evaluate(network: &HpcNetwork, samples: &[Sample]) -> Result<Metrics> {
    let classes = network.config().num_classes;
    let mut confusion = ConfusionMatrix::new(classes);
    let mut loss_sum = 0.0;
    let mut labeled = 0usize;
    for s in samples {
        let fwd = network.forward(s)?;
        let (loss, _) = super::loss::cross_entropy(&fwd.logits, &s.labels, classes)?;
        let n = s.labels.iter().filter(|&&l| l != IGNORE_LABEL).count();
        loss_sum += loss * n as f64;
        labeled += n;
        for (i, &label) in s.labels.iter().enumerate() {
            confusion.add(label, argmax(fwd.logits.row(i)));
        }
    }
    Ok(Metrics {
        loss: if labeled == 0 { 0.0 } else { loss_sum / labeled as f64 },
        accuracy: confusion.accuracy(),
        miou: confusion.miou(),
        confusion,
    })
}

/// Trains until `state.epoch == total_epochs`, one SGD step per sample, with
/// the sample order reshuffled every epoch from the state seed. A fresh state
/// is first calibrated on the largest sample when `train.calibrate` is set.
/// Metrics come from the training forward passes. `on_epoch` runs after every
/// epoch.
pub fn train_with(
    state: &mut TrainState,
    samples: &[Sample],
    total_epochs: usize,
    mut on_epoch: impl FnMut(&EpochMetrics),
) -> Result<Vec<EpochMetrics>> {
    if samples.is_empty() {
        return Err(Error::invalid("no training samples"));
    }
    let classes = state.network.config().num_classes;
    let cfg = state.network.config().train.clone();
    let mut history = Vec::new();
    if cfg.calibrate && state.epoch == 0 && total_epochs > 0 {
        let largest = samples
            .iter()
            .enumerate()
            .fold(0, |best, (i, s)| if s.len() > samples[best].len() { i } else { best });
        state.network.calibrate(&samples[largest])?;
    }
    while state.epoch < total_epochs {
        let lr = learning_rate(&cfg, state.epoch, total_epochs);
        let mut order: Vec<usize> = (0..samples.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(mix_seed(state.seed, state.epoch as u64)));
        let mut confusion = ConfusionMatrix::new(classes);
        let mut loss_sum = 0.0;
        for &i in &order {
            let s = &samples[i];
            let (loss, grads, fwd) = state.network.loss_and_gradients(s)?;
            if !loss.is_finite() {
                return Err(Error::Internal(alloc::format!(
                    "loss diverged at epoch {}",
                    state.epoch + 1
                )));
            }
            for (p, &label) in s.labels.iter().enumerate() {
                confusion.add(label, argmax(fwd.logits.row(p)));
            }
            loss_sum += loss;
            let mut grads = grads;
            clip_gradients(&mut grads, cfg.clip_norm);
            state.optimizer.step(&mut state.network, &grads, lr)?;
        }
        state.epoch += 1;
        let m = EpochMetrics {
            epoch: state.epoch,
            learning_rate: lr,
            loss: loss_sum / samples.len() as f64,
            accuracy: confusion.accuracy(),
            miou: confusion.miou(),
        };
        on_epoch(&m);
        history.push(m);
    }
    Ok(history)
}

/// [`train_with`] without a callback.
pub fn train(state: &mut TrainState, samples: &[Sample], total_epochs: usize) -> Result<Vec<EpochMetrics>> {
    train_with(state, samples, total_epochs, |_| {})
}
