//! Mini-batch Adam training with validation-based model selection.

mod adam;

use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::EncodedExample;
use crate::metrics::{score_task, MetricsReport};
use crate::model::{ForwardOptions, Model};
use crate::params::BoundParams;
use crate::tensor::{Tape, TensorError, Var};
use crate::{Error, Result};

pub use adam::{clip_grad_norm, AdamConfig, AdamState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without a strict validation improvement before stopping.
    pub patience: usize,
    pub seed: u64,
    pub shuffle: bool,
    pub adam: AdamConfig,
    /// Global gradient-norm limit; `None` disables clipping.
    pub clip_norm: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 128,
            max_epochs: 50,
            patience: 5,
            seed: 0,
            shuffle: true,
            adam: AdamConfig::default(),
            clip_norm: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be >= 1".into()));
        }
        if self.patience == 0 {
            return Err(Error::Config("patience must be >= 1".into()));
        }
        self.adam.validate()?;
        if let Some(c) = self.clip_norm {
            if !(c > 0.0 && c.is_finite()) {
                return Err(Error::Config(format!("clip norm {c} must be positive")));
            }
        }
        Ok(())
    }
}

/// A recorded forward pass with its loss.
pub struct LossPass {
    pub tape: Tape,
    pub bound: BoundParams,
    pub loss: Var,
}

impl LossPass {
    pub fn value(&self) -> f64 {
        self.tape.value(self.loss)[0]
    }
}

/// Summed cross-entropy of `batch`. Dropout is active only when an rng is
/// supplied.
pub fn batch_loss(model: &Model, batch: &[&EncodedExample], dropout_rng: Option<&mut dyn RngCore>) -> Result<LossPass> {
    let mut tape = Tape::new();
    let bound = model.params.bind(&mut tape);
    let trace = model.forward(&mut tape, &bound, batch, dropout_rng, ForwardOptions::default())?;
    let loss = model.loss(&mut tape, &trace, batch)?;
    Ok(LossPass { tape, bound, loss })
}

/// Runs backward on `pass` and adds the gradients into the model.
pub fn accumulate_gradients(model: &mut Model, pass: &mut LossPass) -> Result<()> {
    pass.tape.backward(pass.loss)?;
    model.params.accumulate_grads(&pass.tape, &pass.bound);
    Ok(())
}

/// Inference-mode predictions in chunks of `chunk` examples.
pub fn predict_all(model: &Model, examples: &[EncodedExample], chunk: usize) -> Result<Vec<Vec<usize>>> {
    let mut out = Vec::with_capacity(examples.len());
    for part in examples.chunks(chunk.max(1)) {
        let refs: Vec<&EncodedExample> = part.iter().collect();
        out.extend(model.predict(&refs)?);
    }
    Ok(out)
}

/// Scores the model's predictions against gold labels.
pub fn evaluate(model: &Model, examples: &[EncodedExample], chunk: usize) -> Result<MetricsReport> {
    let preds = predict_all(model, examples, chunk)?;
    let pairs: Vec<(Vec<usize>, Vec<usize>)> = preds
        .into_iter()
        .zip(examples)
        .map(|(p, e)| {
            let gold = e
                .labels
                .clone()
                .ok_or_else(|| Error::Contract(format!("example `{}` has no gold labels", e.id)))?;
            Ok((p, gold))
        })
        .collect::<Result<_>>()?;
    score_task(model.config.task, &pairs)
}

/// Fraction of real question tokens whose predicted label equals the gold one.
pub fn token_accuracy(model: &Model, examples: &[EncodedExample], chunk: usize) -> Result<f64> {
    let preds = predict_all(model, examples, chunk)?;
    let (mut right, mut total) = (0usize, 0usize);
    for (p, e) in preds.iter().zip(examples) {
        let gold = e.labels.as_ref().ok_or_else(|| Error::Contract("missing gold labels".into()))?;
        for t in 0..p.len() {
            if e.question_mask[t] {
                total += 1;
                right += usize::from(p[t] == gold[t]);
            }
        }
    }
    Ok(if total == 0 { 1.0 } else { right as f64 / total as f64 })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub valid_avg_f1: f64,
    pub valid_extraction_f1: f64,
    pub valid_polarity_acc: f64,
    pub improved: bool,
}

#[derive(Debug, Clone)]
pub struct FitResult {
    /// Parameters from the epoch with the best validation score.
    pub model: Model,
    pub history: Vec<EpochRecord>,
    /// 0 when no epoch ran.
    pub best_epoch: usize,
    pub best_score: Option<f64>,
    pub stopped_early: bool,
}

/// Order of training examples in `epoch`.
pub fn epoch_order(n: usize, seed: u64, epoch: usize, shuffle: bool) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    if shuffle {
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ epoch as u64));
    }
    order
}

/// Trains `model` and returns the best validation-scoring parameters.
///
/// `on_epoch` sees every record together with the current (not best) model.
pub fn fit(
    mut model: Model,
    train: &[EncodedExample],
    valid: &[EncodedExample],
    tcfg: &TrainConfig,
    on_epoch: &mut dyn FnMut(&EpochRecord, &Model) -> Result<()>,
) -> Result<FitResult> {
    tcfg.validate()?;
    let mut result = FitResult {
        model: model.clone(),
        history: Vec::new(),
        best_epoch: 0,
        best_score: None,
        stopped_early: false,
    };
    if tcfg.max_epochs == 0 {
        return Ok(result);
    }
    if train.is_empty() {
        return Err(Error::Config("training set is empty".into()));
    }
    let mut adam = AdamState::new(&model.params, tcfg.adam.clone());
    model.params.zero_grads();

    for epoch in 1..=tcfg.max_epochs {
        let order = epoch_order(train.len(), tcfg.seed, epoch, tcfg.shuffle);
        let mut dropout_rng = ChaCha8Rng::seed_from_u64(tcfg.seed.rotate_left(32) ^ epoch as u64);
        let mut total = 0.0;
        for (b, chunk) in order.chunks(tcfg.batch_size).enumerate() {
            let batch: Vec<&EncodedExample> = chunk.iter().map(|&i| &train[i]).collect();
            let non_finite = |model: &Model| Error::NonFiniteLoss {
                epoch,
                batch: b,
                param_norms: model.params.norms(),
            };
            let mut pass = match batch_loss(&model, &batch, Some(&mut dropout_rng)) {
                Err(Error::Tensor(TensorError::Domain { .. })) => return Err(non_finite(&model)),
                other => other?,
            };
            let loss = pass.value();
            if !loss.is_finite() {
                return Err(non_finite(&model));
            }
            total += loss;
            accumulate_gradients(&mut model, &mut pass)?;
            if let Some(limit) = tcfg.clip_norm {
                clip_grad_norm(&mut model.params, limit);
            }
            adam.step(&mut model.params)?;
        }

        let report = if valid.is_empty() {
            None
        } else {
            Some(evaluate(&model, valid, tcfg.batch_size)?)
        };
        // Without validation data the training loss drives selection.
        let score = report.as_ref().map_or(-total, |r| r.avg_f1);
        let improved = result.best_score.is_none_or(|best| score > best);
        let record = EpochRecord {
            epoch,
            train_loss: total,
            valid_avg_f1: report.as_ref().map_or(f64::NAN, |r| r.avg_f1),
            valid_extraction_f1: report.as_ref().map_or(f64::NAN, |r| r.extraction_f1),
            valid_polarity_acc: report.as_ref().map_or(f64::NAN, |r| r.polarity_acc),
            improved,
        };
        log::info!(
            "epoch {epoch}: train loss {:.4}, valid avg F1 {:.4}{}",
            record.train_loss,
            record.valid_avg_f1,
            if improved { " *" } else { "" }
        );
        if improved {
            result.best_score = Some(score);
            result.best_epoch = epoch;
            result.model = model.clone();
        }
        on_epoch(&record, &model)?;
        result.history.push(record);
        if epoch - result.best_epoch >= tcfg.patience {
            result.stopped_early = epoch < tcfg.max_epochs;
            break;
        }
    }
    Ok(result)
}
