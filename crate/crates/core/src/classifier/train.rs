use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::autodiff::Graph;
use crate::classifier::dataset::{Dataset, Split};
use crate::classifier::model::ClassifierModel;
use crate::error::{Error, Result};
use crate::seed;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 12,
            lr: 0.01,
            momentum: 0.9,
            batch_size: 32,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_accuracy: f64,
}

/// Accuracy history. `initial` is measured before the first update.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainHistory {
    pub initial: EpochStats,
    pub epochs: Vec<EpochStats>,
}

impl TrainHistory {
    pub fn last(&self) -> &EpochStats {
        self.epochs.last().unwrap_or(&self.initial)
    }
}

/// Fraction of the given split that `model` classifies correctly.
/// `None` when the split is empty.
pub fn accuracy(model: &ClassifierModel, dataset: &Dataset, split: Split) -> Result<Option<f64>> {
    let samples: Vec<_> = dataset.split(split).collect();
    if samples.is_empty() {
        return Ok(None);
    }
    let correct: Vec<bool> = samples
        .par_iter()
        .map(|(_, s)| model.predict_class(&s.image).map(|p| p == s.label))
        .collect::<Result<_>>()?;
    Ok(Some(correct.iter().filter(|&&c| c).count() as f64 / samples.len() as f64))
}

fn sample_gradient(model: &ClassifierModel, image: &Tensor, label: usize) -> Result<(f64, Vec<Tensor>)> {
    let mut g = Graph::new();
    let bound = model.bind(&mut g, true);
    let x = g.constant(image.clone());
    let logits = bound.forward(&mut g, x)?;
    let loss = g.softmax_cross_entropy(logits, label)?;
    let mut grads = g.backward(loss)?;
    let pg = bound
        .params()
        .iter()
        .map(|&p| grads.take(p).expect("every parameter reaches the loss"))
        .collect();
    Ok((g.value(loss).item()?, pg))
}

/// Minibatch SGD with momentum on cross-entropy over the training split.
///
/// Per-sample gradients are computed in parallel and reduced in sample order,
/// so the result is independent of thread scheduling.
pub fn train(model: &ClassifierModel, dataset: &Dataset, cfg: &TrainConfig) -> Result<(ClassifierModel, TrainHistory)> {
    if dataset.is_empty() {
        return Err(Error::Config("cannot train on an empty dataset".into()));
    }
    if dataset.shape != model.input_shape() || dataset.classes != model.classes() {
        return Err(Error::dim(
            "train",
            format!(
                "dataset {:?}/{} vs model {:?}/{}",
                dataset.shape,
                dataset.classes,
                model.input_shape(),
                model.classes()
            ),
        ));
    }
    if cfg.batch_size == 0 {
        return Err(Error::Config("batch size must be positive".into()));
    }

    let mut model = model.clone();
    let train_idx: Vec<usize> = {
        let t: Vec<usize> = dataset.split(Split::Train).map(|(i, _)| i).collect();
        // A dataset with no training split trains on everything.
        if t.is_empty() {
            (0..dataset.len()).collect()
        } else {
            t
        }
    };
    let eval = |m: &ClassifierModel, epoch: usize, loss: f64| -> Result<EpochStats> {
        Ok(EpochStats {
            epoch,
            train_loss: loss,
            train_accuracy: accuracy(m, dataset, Split::Train)?.unwrap_or(f64::NAN),
            val_accuracy: accuracy(m, dataset, Split::Val)?.unwrap_or(f64::NAN),
        })
    };
    let initial = eval(&model, 0, f64::NAN)?;

    let mut velocity: Vec<Tensor> = model.params().map(|p| Tensor::zeros(p.shape())).collect();
    let mut shuffle_rng = seed::stream(cfg.seed, seed::purpose::TRAIN_SHUFFLE, 0);
    let mut epochs = Vec::with_capacity(cfg.epochs);

    for epoch in 1..=cfg.epochs {
        let mut order = train_idx.clone();
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let per_sample: Vec<(f64, Vec<Tensor>)> = batch
                .par_iter()
                .map(|&i| {
                    let s = &dataset.samples[i];
                    sample_gradient(&model, &s.image, s.label)
                })
                .collect::<Result<_>>()?;
            let mut sum: Vec<Tensor> = velocity.iter().map(|v| Tensor::zeros(v.shape())).collect();
            for (loss, grads) in &per_sample {
                if !loss.is_finite() {
                    return Err(Error::Training {
                        epoch,
                        detail: format!("loss {loss}"),
                    });
                }
                loss_sum += loss;
                for (s, g) in sum.iter_mut().zip(grads) {
                    s.add_assign(g);
                }
            }
            let scale = 1.0 / batch.len() as f64;
            let params = model.layers_mut().iter_mut().flat_map(|l| l.params_mut());
            for ((p, v), g) in params.zip(&mut velocity).zip(&sum) {
                for ((pv, vv), gv) in p.data_mut().iter_mut().zip(v.data_mut()).zip(g.data()) {
                    *vv = cfg.momentum * *vv + gv * scale;
                    *pv -= cfg.lr * *vv;
                }
            }
        }
        if model.params().any(|p| !p.is_finite()) {
            return Err(Error::Training {
                epoch,
                detail: "non-finite parameters".into(),
            });
        }
        epochs.push(eval(&model, epoch, loss_sum / order.len() as f64)?);
    }
    Ok((model, TrainHistory { initial, epochs }))
}
