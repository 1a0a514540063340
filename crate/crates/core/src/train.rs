//! Multi-label training loop: stable BCE over logits, Adam, deterministic
//! shuffling, per-epoch logging.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::ModelGraph;
use crate::labels::LabelSet;
use crate::loss::{bce_with_logits, bce_with_logits_grad};
use crate::metrics::{accumulate, micro_metrics, MetricReport};
use crate::optim::Adam;
use crate::rng::SplitMix64;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Sigmoid-probability decision threshold.
    pub threshold: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 0.001,
            weight_decay: 0.0001,
            epochs: 30,
            batch_size: 16,
            seed: 0,
            threshold: 0.5,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lr.is_nan() || self.lr <= 0.0 {
            return Err(Error::Config(format!("lr must be > 0, got {}", self.lr)));
        }
        if self.weight_decay < 0.0 {
            return Err(Error::Config(format!(
                "weight_decay must be >= 0, got {}",
                self.weight_decay
            )));
        }
        if self.epochs < 1 {
            return Err(Error::Config("epochs must be >= 1".into()));
        }
        if self.batch_size < 1 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::Config(format!(
                "threshold must be in (0, 1), got {}",
                self.threshold
            )));
        }
        Ok(())
    }
}

/// One preprocessed training example: model input plus multi-hot target.
#[derive(Debug, Clone)]
pub struct TrainSample<T> {
    pub input: Tensor<T>,
    pub target: Tensor<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_micro_f1: Option<f64>,
}

/// Per-epoch log as CSV.
pub fn epoch_log_to_csv(log: &[EpochLog]) -> String {
    let mut out = String::from("epoch,train_loss,val_micro_f1\n");
    for e in log {
        match e.val_micro_f1 {
            Some(f1) => out.push_str(&format!("{},{},{}\n", e.epoch, e.train_loss, f1)),
            None => out.push_str(&format!("{},{},\n", e.epoch, e.train_loss)),
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    pub graph: ModelGraph<T>,
    pub log: Vec<EpochLog>,
}

/// Trains `graph` in place over `train_set`, returning the trained graph and
/// the per-epoch loss curve (plus validation micro-F1 when a validation set
/// is supplied).
///
/// Deterministic for a fixed config: batch order comes from the config seed,
/// and all arithmetic is sequential. Aborts with a diagnostic if the loss
/// stops being finite.
pub fn train<T: Scalar>(
    mut graph: ModelGraph<T>,
    train_set: &[TrainSample<T>],
    val_set: Option<&[TrainSample<T>]>,
    cfg: &TrainConfig,
) -> Result<TrainOutcome<T>> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::Config("empty training set".into()));
    }
    for (i, s) in train_set.iter().enumerate() {
        if s.target.shape() != [graph.num_classes()] {
            return Err(Error::ShapeMismatch(format!(
                "sample {i}: target {:?} does not match {} classes",
                s.target.shape(),
                graph.num_classes()
            )));
        }
    }

    let mut rng = SplitMix64::new(cfg.seed);
    let mut adam = Adam::new(cfg.lr, cfg.weight_decay);
    let mut indices: Vec<usize> = (0..train_set.len()).collect();
    let mut log = Vec::with_capacity(cfg.epochs);

    for epoch in 1..=cfg.epochs {
        rng.shuffle(&mut indices);
        let mut epoch_loss = 0.0;

        for batch in indices.chunks(cfg.batch_size) {
            let mut batch_grads: Option<Vec<Tensor<T>>> = None;
            for &idx in batch {
                let sample = &train_set[idx];
                let record = graph.forward(&sample.input)?;
                let loss = bce_with_logits(record.logits(), &sample.target)?.to_f64_lossy();
                if !loss.is_finite() {
                    return Err(Error::Divergence(format!(
                        "epoch {epoch}, sample {idx}: loss = {loss}"
                    )));
                }
                epoch_loss += loss;
                let logit_grad = bce_with_logits_grad(record.logits(), &sample.target)?;
                let result = graph.backward(
                    &record,
                    &logit_grad,
                    crate::autodiff::BackwardMode::Vanilla,
                    true,
                )?;
                let grads = result.param_grads.expect("requested param grads");
                match &mut batch_grads {
                    None => batch_grads = Some(grads),
                    Some(acc) => {
                        for (a, g) in acc.iter_mut().zip(&grads) {
                            a.add_assign(g)?;
                        }
                    }
                }
            }
            let scale = T::one() / T::from_f64_lossy(batch.len() as f64);
            let grads: Vec<Tensor<T>> = batch_grads
                .expect("non-empty batch")
                .into_iter()
                .map(|g| g.scale(scale))
                .collect();
            adam.step(&mut graph.params_mut(), &grads)?;
        }

        let train_loss = epoch_loss / train_set.len() as f64;
        let val_micro_f1 = match val_set {
            Some(val) if !val.is_empty() => {
                let report = evaluate_samples(&graph, val, cfg.threshold)?;
                Some(report.micro.f1)
            }
            _ => None,
        };
        log.push(EpochLog {
            epoch,
            train_loss,
            val_micro_f1,
        });
    }

    Ok(TrainOutcome { graph, log })
}

/// Thresholded predictions for a list of inputs.
pub fn predict_sets<T: Scalar>(
    graph: &ModelGraph<T>,
    inputs: &[Tensor<T>],
    threshold: f64,
) -> Result<Vec<LabelSet>> {
    inputs
        .iter()
        .map(|x| Ok(LabelSet::from_probs(&graph.predict_probs(x)?, threshold)))
        .collect()
}

/// Confusion-count evaluation of a model over labelled samples.
pub fn evaluate_samples<T: Scalar>(
    graph: &ModelGraph<T>,
    samples: &[TrainSample<T>],
    threshold: f64,
) -> Result<MetricReport> {
    let mut preds = Vec::with_capacity(samples.len());
    let mut targets = Vec::with_capacity(samples.len());
    for s in samples {
        preds.push(LabelSet::from_probs(
            &graph.predict_probs(&s.input)?,
            threshold,
        ));
        targets.push(LabelSet::from_probs(&s.target, 0.5));
    }
    let counts = accumulate(&preds, &targets, graph.num_classes())?;
    Ok(MetricReport::from_counts(&counts))
}

/// Micro-F1 shortcut used in fold summaries.
pub fn micro_f1_of_counts(counts: &crate::metrics::ConfusionCounts) -> f64 {
    micro_metrics(counts).0.f1
}
