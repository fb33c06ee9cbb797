use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;

use super::spec::{EpochRecord, History, Patience, TrainSpec};
use crate::datasets::{WindowMeta, WindowSet};
use crate::kernel::{softmax_cross_entropy, AdamConfig, AdamState, DomainKey, Real, Tensor};
use crate::model::{predict_logits, Network, TcnModel};
use crate::rng::{rng_for, tag};
use crate::{Error, Result};

/// Inference chunk size for validation and testing.
pub const EVAL_CHUNK: usize = 256;

/// One ADANN optimizer step as seen by an observer.
#[derive(Debug, Clone, PartialEq)]
pub struct AdannStep {
    pub step: u64,
    pub source: DomainKey,
    pub target: DomainKey,
    pub source_domain_labels: Vec<usize>,
    pub target_domain_labels: Vec<usize>,
    pub classification_loss: f64,
    pub domain_loss: f64,
}

/// Hooks into the training loops; every method defaults to a no-op.
pub trait TrainObserver<T: Real> {
    /// A batch is about to enter a training step.
    fn on_batch(&mut self, _key: DomainKey, _batch: &[WindowMeta]) {}
    /// An optimizer step finished; `coefficients` holds the fusion
    /// coefficients when the network has any.
    fn on_step(&mut self, _step: u64, _coefficients: &[f64]) {}
    /// An ADANN step finished; `model` is the post-step state.
    fn on_adann_step(&mut self, _step: &AdannStep, _model: &TcnModel<T>) {}
    fn on_epoch(&mut self, _record: &EpochRecord) {}
}

pub struct NoObserver;

impl<T: Real> TrainObserver<T> for NoObserver {}

/// Stratified split: each class contributes `round(fraction * n_c)` windows
/// (at least one when it has two or more) to validation. Errors when any of
/// `classes` is absent from the training part.
pub fn stratified_split(
    labels: &[usize],
    classes: usize,
    fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    let mut by_class = vec![Vec::new(); classes];
    for (i, &l) in labels.iter().enumerate() {
        by_class
            .get_mut(l)
            .ok_or(Error::LabelOutOfRange { label: l, classes })?
            .push(i);
    }
    let mut rng = rng_for(seed, &[tag("validation-split")]);
    let (mut train, mut val) = (Vec::new(), Vec::new());
    for (c, mut idx) in by_class.into_iter().enumerate() {
        idx.shuffle(&mut rng);
        let n = idx.len();
        let mut k = (fraction * n as f64).round() as usize;
        if n >= 2 {
            k = k.clamp(1, n - 1);
        } else {
            k = 0;
        }
        if n - k == 0 {
            return Err(Error::Insufficient(format!("class {c} has no training windows")));
        }
        val.extend_from_slice(&idx[..k]);
        train.extend_from_slice(&idx[k..]);
    }
    train.sort_unstable();
    val.sort_unstable();
    Ok((train, val))
}

/// Mean cross-entropy of inference-mode logits over `indices`.
pub fn mean_loss<T: Real, N: Network<T>>(model: &N, set: &WindowSet, indices: &[usize], key: DomainKey) -> Result<f64> {
    if indices.is_empty() {
        return Err(Error::Insufficient("empty validation set".into()));
    }
    let mut total = 0.0;
    for chunk in indices.chunks(EVAL_CHUNK) {
        let x: Tensor<T> = set.batch(chunk);
        let labels: Vec<usize> = chunk.iter().map(|&i| set.meta[i].label).collect();
        let (loss, _) = softmax_cross_entropy(&model.logits(&x, key)?, &labels)?;
        total += loss.as_f64() * chunk.len() as f64;
    }
    Ok(total / indices.len() as f64)
}

/// Inference-mode predictions for every window of `set`.
pub fn predict_set<T: Real, N: Network<T>>(model: &N, set: &WindowSet, key: DomainKey) -> Result<Vec<usize>> {
    let mut out = Vec::with_capacity(set.count());
    let idx: Vec<usize> = (0..set.count()).collect();
    for chunk in idx.chunks(EVAL_CHUNK) {
        let x: Tensor<T> = set.batch(chunk);
        out.extend(predict_logits(&model.logits(&x, key)?));
    }
    Ok(out)
}

pub(crate) fn batch_labels(set: &WindowSet, idx: &[usize]) -> Vec<usize> {
    idx.iter().map(|&i| set.meta[i].label).collect()
}

pub(crate) fn batch_meta(set: &WindowSet, idx: &[usize]) -> Vec<WindowMeta> {
    idx.iter().map(|&i| set.meta[i]).collect()
}

/// Mini-batch Adam training on one domain with validation-driven annealing,
/// early stopping and restoration of the best-validation weights.
/// A fresh optimizer state is created for every call.
pub fn train_supervised<T, N, O>(
    model: &mut N,
    data: &WindowSet,
    key: DomainKey,
    spec: &TrainSpec,
    observer: &mut O,
) -> Result<History>
where
    T: Real,
    N: Network<T>,
    O: TrainObserver<T> + ?Sized,
{
    spec.validate()?;
    let labels = data.labels();
    let (train, val) = stratified_split(&labels, model.num_classes(), spec.validation_fraction, spec.seed)?;
    model.prepare_domain(key);
    let mut adam = AdamState::new(AdamConfig {
        lr: spec.lr,
        ..AdamConfig::default()
    });
    let mut rng: ChaCha8Rng = rng_for(spec.seed, &[tag("supervised")]);
    let mut patience = Patience::new(spec);
    let mut history = History::default();
    let mut best = model.clone();
    let mut order = train.clone();
    for epoch in 1..=spec.max_epochs {
        adam.set_lr(patience.lr);
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for batch in order.chunks(spec.batch_size) {
            observer.on_batch(key, &batch_meta(data, batch));
            let x: Tensor<T> = data.batch(batch);
            model.zero_grad();
            let loss = model.accumulate_gradients(&x, &batch_labels(data, batch), key, &mut rng)?;
            if !loss.is_finite() {
                return Err(Error::NumericalFault { op: "training loss" });
            }
            loss_sum += loss * batch.len() as f64;
            adam.step(&mut model.params_mut());
            model.after_step();
            observer.on_step(adam.step, &model.fusion_coefficients());
        }
        let val_loss = mean_loss(model, data, &val, key)?;
        let lr = patience.lr;
        let verdict = patience.observe(epoch, val_loss);
        if verdict.improved {
            best = model.clone();
        }
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / order.len() as f64,
            val_loss,
            lr,
            improved: verdict.improved,
            annealed: verdict.annealed,
        };
        observer.on_epoch(&record);
        history.epochs.push(record);
        if verdict.stop {
            history.stopped_early = true;
            break;
        }
    }
    *model = best;
    history.best_epoch = patience.best_epoch;
    history.best_val_loss = patience.best;
    Ok(history)
}
