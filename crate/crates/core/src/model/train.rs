use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{
    apply_ablation, metrics_from_predictions, MetricsReport, Model, PreparedExample, Stochastic,
    TrainConfig,
};
use crate::error::{Error, Result};
use crate::numkit::rng::keyed_rng;
use crate::numkit::{AdamState, Bound, DropoutKey, NumError, Tape, Var};
use crate::Mode;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub id: String,
    pub prob: f64,
    /// `prob ≥ 0.5` → 1 (fake).
    pub predicted: u8,
    pub label: u8,
}

impl Prediction {
    pub fn new(id: &str, prob: f64, label: u8) -> Self {
        Self {
            id: id.to_string(),
            prob,
            predicted: u8::from(prob >= 0.5),
            label,
        }
    }
}

/// One line of the training log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub test_acc: Option<f64>,
}

/// Mean BCE over `batch`. Example `i` draws its dropout masks from step
/// `st.key.step + i`. Also returns each example's probability.
pub fn batch_loss(
    model: &Model,
    tape: &mut Tape,
    bound: &Bound,
    batch: &[&PreparedExample],
    st: Stochastic,
) -> Result<(Var, Vec<f64>)> {
    if batch.is_empty() {
        return Err(Error::Num(NumError::EmptyInput("empty batch".into())));
    }
    let mut losses = Vec::with_capacity(batch.len());
    let mut probs = Vec::with_capacity(batch.len());
    for (i, ex) in batch.iter().enumerate() {
        let key = DropoutKey::new(st.key.seed, 0, st.key.step + i as u64);
        let out = model.forward(tape, bound, ex, Stochastic { key, ..st })?;
        probs.push(tape.value(out.prob).item()?);
        losses.push(tape.bce(out.prob, f64::from(ex.label))?);
    }
    let mut total = losses[0];
    for &l in &losses[1..] {
        total = tape.add(total, l)?;
    }
    Ok((tape.scale(total, 1.0 / batch.len() as f64), probs))
}

/// Eval-mode probability for one example.
pub fn predict(model: &Model, ex: &PreparedExample) -> Result<Prediction> {
    let mut tape = Tape::new();
    let bound = model.params.bind(&mut tape, false);
    let out = model.forward(&mut tape, &bound, ex, Stochastic::eval())?;
    let p = tape.value(out.prob).item()?;
    Ok(Prediction::new(&ex.id, p, ex.label))
}

pub fn evaluate(model: &Model, examples: &[PreparedExample]) -> Result<MetricsReport> {
    if examples.is_empty() {
        return Err(Error::Evaluation("empty evaluation set".into()));
    }
    let preds = examples
        .iter()
        .map(|ex| predict(model, ex))
        .collect::<Result<Vec<_>>>()?;
    metrics_from_predictions(&preds)
}

/// Fixed-epoch mini-batch Adam over mean BCE.
///
/// `cfg.ablation` is applied to both sets first. Batch order is a shuffle
/// keyed by `(seed, epoch)` and dropout masks are keyed by a running
/// example counter, so a given seed reproduces the run bit for bit.
pub fn train(
    model: &mut Model,
    train_set: &[PreparedExample],
    test_set: &[PreparedExample],
    cfg: &TrainConfig,
) -> Result<Vec<EpochLog>> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::Config("training split is empty".into()));
    }
    let ablate = |set: &[PreparedExample]| {
        set.iter()
            .map(|ex| apply_ablation(ex, cfg.ablation))
            .collect::<Result<Vec<_>>>()
    };
    let train_set = ablate(train_set)?;
    let test_set = ablate(test_set)?;

    let mut adam = AdamState::new(cfg.adam(), &model.params);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut step = 0u64;
    let mut log = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        order.sort_unstable();
        order.shuffle(&mut keyed_rng(cfg.seed, "shuffle", epoch as u64));
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&PreparedExample> = chunk.iter().map(|&i| &train_set[i]).collect();
            let mut tape = Tape::new();
            let bound = model.params.bind(&mut tape, true);
            let st = Stochastic {
                mode: Mode::Train,
                p: cfg.dropout,
                head: cfg.head_dropout,
                key: DropoutKey::new(cfg.seed, 0, step),
            };
            let (loss, probs) = batch_loss(model, &mut tape, &bound, &batch, st)?;
            let value = tape.value(loss).item()?;
            if !value.is_finite() {
                return Err(Error::Num(NumError::Numeric(format!(
                    "non-finite loss at epoch {epoch}"
                ))));
            }
            tape.backward(loss)?;
            adam.step(&mut model.params, &bound.grads(&tape))?;
            loss_sum += value * batch.len() as f64;
            correct += batch
                .iter()
                .zip(&probs)
                .filter(|(ex, &p)| u8::from(p >= 0.5) == ex.label)
                .count();
            step += batch.len() as u64;
        }
        let test_acc = if test_set.is_empty() {
            None
        } else {
            Some(evaluate(model, &test_set)?.accuracy)
        };
        log.push(EpochLog {
            epoch,
            train_loss: loss_sum / train_set.len() as f64,
            train_acc: correct as f64 / train_set.len() as f64,
            test_acc,
        });
    }
    Ok(log)
}
