use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::spec::{AdannSpec, EpochRecord, History, Patience, TrainSpec};
use super::supervised::{batch_labels, batch_meta, mean_loss, stratified_split, AdannStep, TrainObserver};
use crate::datasets::WindowSet;
use crate::kernel::{softmax_cross_entropy, AdamConfig, AdamState, DomainKey, Real, Tensor};
use crate::model::TcnModel;
use crate::rng::{derive_seed, rng_for, tag};
use crate::{Error, Result};

/// Labeled windows of one session and the bank they normalize with.
#[derive(Debug, Clone, Copy)]
pub struct DomainSet<'a> {
    pub key: DomainKey,
    pub windows: &'a WindowSet,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdannLosses {
    pub classification: f64,
    pub domain: f64,
}

pub const SOURCE_DOMAIN: usize = 0;
pub const TARGET_DOMAIN: usize = 1;

/// Accumulates the gradients of one ADANN step (caller zeroes them first).
///
/// The source batch feeds the classification loss and, with domain label 0,
/// the domain loss; its bank's running statistics are updated. The target
/// batch only feeds the domain loss with label 1 and leaves every bank
/// untouched. The domain loss is the mean over both batches, weighted by
/// `domain_loss_weight`, and reaches the features through gradient reversal.
#[allow(clippy::too_many_arguments)]
pub fn adann_gradients<T: Real>(
    model: &mut TcnModel<T>,
    source_x: &Tensor<T>,
    source_labels: &[usize],
    source: DomainKey,
    target_x: &Tensor<T>,
    target: DomainKey,
    spec: &AdannSpec,
    rng: &mut ChaCha8Rng,
) -> Result<AdannLosses> {
    let (ns, nt) = (source_x.dim(0), target_x.dim(0));
    let total = (ns + nt) as f64;

    let trace = model.features_train(source_x, source, true, rng, None)?;
    let logits = model.classify_pooled(&trace.pooled)?;
    let (cls, grad_cls) = softmax_cross_entropy(&logits, source_labels)?;
    let mut grad_pooled = model.classify_backward(&trace.pooled, &grad_cls)?;
    let dom = model.domain_pooled(&trace.pooled)?;
    let (dom_s, grad_dom) = softmax_cross_entropy(&dom, &vec![SOURCE_DOMAIN; ns])?;
    let scale = T::lit(spec.domain_loss_weight * ns as f64 / total);
    let reversed = model.domain_backward(&trace.pooled, &grad_dom.map(|v| v * scale), spec.lambda)?;
    grad_pooled.add_assign(&reversed)?;
    model.backward_features(&trace, Some(&grad_pooled), None)?;
    drop(trace);

    let trace = model.features_train(target_x, target, false, rng, None)?;
    let dom = model.domain_pooled(&trace.pooled)?;
    let (dom_t, grad_dom) = softmax_cross_entropy(&dom, &vec![TARGET_DOMAIN; nt])?;
    let scale = T::lit(spec.domain_loss_weight * nt as f64 / total);
    let reversed = model.domain_backward(&trace.pooled, &grad_dom.map(|v| v * scale), spec.lambda)?;
    model.backward_features(&trace, Some(&reversed), None)?;

    Ok(AdannLosses {
        classification: cls.as_f64(),
        domain: (ns as f64 * dom_s.as_f64() + nt as f64 * dom_t.as_f64()) / total,
    })
}

/// Multi-domain adversarial pre-training over two or more sessions.
///
/// Each step draws a source session uniformly and a different target session
/// uniformly. Source batches walk a per-session shuffled queue; target
/// batches (same size) are drawn with replacement. An epoch is
/// `ceil(total training windows / batch_size)` steps. Validation uses a
/// stratified split of every session, each evaluated with its own bank.
pub fn adann_pretrain<T, O>(
    model: &mut TcnModel<T>,
    sessions: &[DomainSet<'_>],
    spec: &TrainSpec,
    adann: &AdannSpec,
    observer: &mut O,
) -> Result<History>
where
    T: Real,
    O: TrainObserver<T> + ?Sized,
{
    spec.validate()?;
    if sessions.len() < 2 {
        return Err(Error::Insufficient(format!(
            "adversarial pre-training needs at least two sessions, got {}",
            sessions.len()
        )));
    }
    let classes = model.config().num_gestures;
    let mut splits = Vec::with_capacity(sessions.len());
    for d in sessions {
        let seed = derive_seed(spec.seed, &[tag("adann-split"), d.key.0 as u64]);
        splits.push(stratified_split(
            &d.windows.labels(),
            classes,
            spec.validation_fraction,
            seed,
        )?);
        model.ensure_domain(d.key);
    }
    let total: usize = splits.iter().map(|(t, _)| t.len()).sum();
    let steps = total.div_ceil(spec.batch_size);
    let mut adam = AdamState::new(AdamConfig {
        lr: spec.lr,
        ..AdamConfig::default()
    });
    let mut rng: ChaCha8Rng = rng_for(spec.seed, &[tag("adann")]);
    let mut queues: Vec<(Vec<usize>, usize)> = splits
        .iter()
        .map(|(t, _)| {
            let mut q = t.clone();
            q.shuffle(&mut rng);
            (q, 0)
        })
        .collect();
    let mut patience = Patience::new(spec);
    let mut history = History::default();
    let mut best = model.clone();
    let n = sessions.len();
    for epoch in 1..=spec.max_epochs {
        adam.set_lr(patience.lr);
        let (mut loss_sum, mut seen) = (0.0, 0usize);
        for _ in 0..steps {
            let s = rng.random_range(0..n);
            let t = (s + 1 + rng.random_range(0..n - 1)) % n;
            let (queue, pos) = &mut queues[s];
            let size = spec.batch_size.min(queue.len());
            if *pos + size > queue.len() {
                queue.shuffle(&mut rng);
                *pos = 0;
            }
            let src_idx: Vec<usize> = queue[*pos..*pos + size].to_vec();
            *pos += size;
            let pool = &splits[t].0;
            let tgt_idx: Vec<usize> = (0..size).map(|_| pool[rng.random_range(0..pool.len())]).collect();

            let (src, tgt) = (&sessions[s], &sessions[t]);
            observer.on_batch(src.key, &batch_meta(src.windows, &src_idx));
            observer.on_batch(tgt.key, &batch_meta(tgt.windows, &tgt_idx));
            let xs: Tensor<T> = src.windows.batch(&src_idx);
            let xt: Tensor<T> = tgt.windows.batch(&tgt_idx);
            model.zero_grad();
            let losses = adann_gradients(
                model,
                &xs,
                &batch_labels(src.windows, &src_idx),
                src.key,
                &xt,
                tgt.key,
                adann,
                &mut rng,
            )?;
            if !(losses.classification.is_finite() && losses.domain.is_finite()) {
                return Err(Error::NumericalFault { op: "adversarial loss" });
            }
            loss_sum += losses.classification * size as f64;
            seen += size;
            adam.step(&mut model.parameters_mut());
            observer.on_adann_step(
                &AdannStep {
                    step: adam.step,
                    source: src.key,
                    target: tgt.key,
                    source_domain_labels: vec![SOURCE_DOMAIN; size],
                    target_domain_labels: vec![TARGET_DOMAIN; size],
                    classification_loss: losses.classification,
                    domain_loss: losses.domain,
                },
                model,
            );
            observer.on_step(adam.step, &[]);
        }
        let mut val_sum = 0.0;
        let mut val_n = 0;
        for (d, (_, val)) in sessions.iter().zip(&splits) {
            val_sum += mean_loss(model, d.windows, val, d.key)? * val.len() as f64;
            val_n += val.len();
        }
        let val_loss = val_sum / val_n as f64;
        let lr = patience.lr;
        let verdict = patience.observe(epoch, val_loss);
        if verdict.improved {
            best = model.clone();
        }
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / seen.max(1) as f64,
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
