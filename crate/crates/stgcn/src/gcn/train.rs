//! SGD training, the learning-rate schedule, and evaluation.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::adjacency::{stacks_for_sequence, Normalization, SequenceStacks};
use crate::data::LabeledSample;
use crate::error::{Error, Result};
use crate::gcn::model::{ModelGrads, ModelParams, ParamKind, TrainConfig};
use crate::gcn::ops::{
    backward_sample, cross_entropy, features_from_sequence, forward_eval, forward_train,
    FeatureMap, FeatureMode,
};
use crate::partition::{DistanceProfile, Strategy, TieRule};
use crate::skeleton::SkeletonLayout;

/// A sample with its feature map and partition stacks precomputed, ready
/// for repeated epochs.
#[derive(Debug, Clone)]
pub struct PreparedSample {
    pub sample_id: String,
    pub label: usize,
    pub features: FeatureMap,
    pub stacks: SequenceStacks,
}

/// Fit every sequence to `fixed_frames` (padding by repeating the last
/// frame, or truncating), then precompute its features and row-normalized
/// partition stacks. The spatial strategy needs `profile`; `tie_rule` only
/// affects the connection split.
pub fn prepare_samples(
    layout: &SkeletonLayout,
    strategy: Strategy,
    samples: &[LabeledSample],
    profile: Option<&DistanceProfile>,
    tie_rule: TieRule,
    fixed_frames: usize,
    mode: FeatureMode,
) -> Result<Vec<PreparedSample>> {
    samples
        .iter()
        .map(|sample| {
            let fitted = sample.sequence.fit_frames(fixed_frames);
            let stacks = stacks_for_sequence(
                layout,
                strategy,
                &fitted,
                profile,
                tie_rule,
                Normalization::Row,
            )?;
            Ok(PreparedSample {
                sample_id: sample.sample_id.clone(),
                label: sample.label,
                features: features_from_sequence(&fitted, mode),
                stacks,
            })
        })
        .collect()
}

/// The stepped decay schedule: the initial rate multiplied by the decay
/// factor once for every decay epoch already passed (epoch ≥ entry).
pub fn learning_rate(config: &TrainConfig, epoch: usize) -> f64 {
    let passed = config.decay_epochs.iter().filter(|&&d| epoch >= d).count();
    config.initial_lr * config.decay_factor.powi(passed as i32)
}

fn update_tensor(values: &mut [f64], grads: &[f64], lr: f64, weight_decay: f64, kind: ParamKind) {
    for (x, &g) in values.iter_mut().zip(grads) {
        let mut v = *x - lr * (g + weight_decay * *x);
        if kind == ParamKind::Mask && v < 0.0 {
            v = 0.0;
        }
        // Round through f32 so parameters stay exactly checkpointable.
        *x = v as f32 as f64;
    }
}

/// One SGD step with L2 weight decay on every parameter tensor. Mask
/// entries are clamped nonnegative; all updated values are rounded through
/// f32 to preserve the checkpoint-exactness invariant.
pub fn sgd_step(model: &mut ModelParams, grads: &ModelGrads, lr: f64, weight_decay: f64) {
    for (layer, lg) in model.layers.iter_mut().zip(&grads.layers) {
        for (w, dw) in layer.weights.iter_mut().zip(&lg.weights) {
            update_tensor(&mut w.data, &dw.data, lr, weight_decay, ParamKind::Weight);
        }
        update_tensor(&mut layer.bias, &lg.bias, lr, weight_decay, ParamKind::Bias);
        if let (Some(mask), Some(dm)) = (&mut layer.mask, &lg.mask) {
            update_tensor(mask, dm, lr, weight_decay, ParamKind::Mask);
        }
        update_tensor(
            &mut layer.temporal_kernel,
            &lg.temporal_kernel,
            lr,
            weight_decay,
            ParamKind::Temporal,
        );
    }
    update_tensor(
        &mut model.classifier_weight.data,
        &grads.classifier_weight.data,
        lr,
        weight_decay,
        ParamKind::Weight,
    );
    update_tensor(
        &mut model.classifier_bias,
        &grads.classifier_bias,
        lr,
        weight_decay,
        ParamKind::Bias,
    );
}

/// Per-epoch bookkeeping returned by [`train`].
#[derive(Debug, Clone, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub learning_rate: f64,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_loss: Option<f64>,
    pub val_accuracy: Option<f64>,
}

impl EpochMetrics {
    /// Stable single-line rendering used by the CLI and determinism checks.
    pub fn to_line(&self) -> String {
        let val = match (self.val_loss, self.val_accuracy) {
            (Some(l), Some(a)) => format!("val_loss {l:.6} val_acc {a:.6}"),
            _ => "val_loss - val_acc -".to_string(),
        };
        format!(
            "epoch {} lr {:.6} train_loss {:.6} train_acc {:.6} {}",
            self.epoch, self.learning_rate, self.train_loss, self.train_accuracy, val
        )
    }
}

fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Mean cross-entropy and top-1 accuracy of `samples` in inference mode.
fn eval_loss_accuracy(model: &ModelParams, samples: &[PreparedSample]) -> Result<(f64, f64)> {
    let mut loss = 0.0;
    let mut correct = 0usize;
    for sample in samples {
        let probs = forward_eval(model, &sample.features, &sample.stacks)?;
        loss += cross_entropy(&probs, sample.label);
        if argmax(&probs) == sample.label {
            correct += 1;
        }
    }
    let n = samples.len() as f64;
    Ok((loss / n, correct as f64 / n))
}

/// Train `model` in place with mini-batch SGD. Returns one metrics entry
/// per epoch; validation fields are present when `val_set` is non-empty.
/// Aborts with a divergence error when the training loss stops being
/// finite.
pub fn train(
    model: &mut ModelParams,
    train_set: &[PreparedSample],
    val_set: &[PreparedSample],
    config: &TrainConfig,
) -> Result<Vec<EpochMetrics>> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(Error::EmptyDataset);
    }
    for sample in train_set.iter().chain(val_set) {
        if sample.label >= model.meta.num_classes {
            return Err(Error::InvalidValue(format!(
                "sample {} has label {} but the model has {} classes",
                sample.sample_id, sample.label, model.meta.num_classes
            )));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut metrics = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        let lr = learning_rate(config, epoch);
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut correct = 0usize;
        for batch in order.chunks(config.batch_size) {
            let mut grads = ModelGrads::zeros_like(model);
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                let sample = &train_set[i];
                let cache = forward_train(
                    model,
                    &sample.features,
                    &sample.stacks,
                    config.dropout,
                    &mut rng,
                )?;
                epoch_loss += cross_entropy(&cache.probs, sample.label);
                if argmax(&cache.probs) == sample.label {
                    correct += 1;
                }
                backward_sample(model, &cache, &sample.stacks, sample.label, scale, &mut grads);
            }
            sgd_step(model, &grads, lr, config.weight_decay);
        }
        let train_loss = epoch_loss / train_set.len() as f64;
        if !train_loss.is_finite() {
            return Err(Error::Diverged {
                epoch,
                loss: train_loss,
            });
        }
        let (val_loss, val_accuracy) = if val_set.is_empty() {
            (None, None)
        } else {
            let (l, a) = eval_loss_accuracy(model, val_set)?;
            (Some(l), Some(a))
        };
        metrics.push(EpochMetrics {
            epoch,
            learning_rate: lr,
            train_loss,
            train_accuracy: correct as f64 / train_set.len() as f64,
            val_loss,
            val_accuracy,
        });
    }
    Ok(metrics)
}

/// Top-n accuracy over a sample set. Classes are ranked by descending
/// probability with ties broken by ascending class index; a sample counts
/// as correct when its label appears among the first `top_n` classes.
pub fn evaluate(model: &ModelParams, samples: &[PreparedSample], top_n: usize) -> Result<f64> {
    if top_n == 0 {
        return Err(Error::InvalidValue("top_n must be at least 1".into()));
    }
    if top_n > model.meta.num_classes {
        return Err(Error::TopNOutOfRange {
            top_n,
            num_classes: model.meta.num_classes,
        });
    }
    if samples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut hits = 0usize;
    for sample in samples {
        let probs = forward_eval(model, &sample.features, &sample.stacks)?;
        let mut ranked: Vec<usize> = (0..probs.len()).collect();
        // total_cmp keeps the ranking total even for NaN probabilities (a
        // diverged checkpoint should report garbage accuracy, not panic).
        ranked.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]).then(a.cmp(&b)));
        if ranked[..top_n].contains(&sample.label) {
            hits += 1;
        }
    }
    Ok(hits as f64 / samples.len() as f64)
}
