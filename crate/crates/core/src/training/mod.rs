//! Mini-batch Adam training with gradient clipping, plateau halving, and
//! best-on-dev checkpoint selection.

mod optim;
mod schedule;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use log::{info, warn};
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::corpus::TrainingExample;
use crate::error::{Error, Result};
use crate::model::{checkpoint, Batch, Graph, Model};
use crate::numcore::{grad_check_with, GradCheckReport, Tensor};
use crate::rng::component_rng;

pub use optim::{clip_global_norm, global_norm, GradMap, OptimizerState};
pub use schedule::{Decision, ScheduleState, StopReason};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub max_epochs: usize,
    pub lr: f64,
    pub clip: f64,
    pub dropout: f64,
    pub seed: u64,
    pub patience: usize,
    pub max_halvings: usize,
    pub lr_floor: f64,
    /// Length grouping happens inside windows of `batch_size * group_window` examples.
    pub group_window: usize,
    /// When set, the best-so-far model is written here after every improvement.
    pub checkpoint: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 64,
            max_epochs: 100,
            lr: 1e-3,
            clip: 1.0,
            dropout: 0.1,
            seed: 0,
            patience: 1,
            max_halvings: 3,
            lr_floor: 1e-6,
            group_window: 20,
            checkpoint: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub dev_loss: f64,
    pub lr: f64,
}

#[derive(Debug, Clone)]
pub struct FitOutcome {
    /// Lowest-dev-loss snapshot, or the initial model if no epoch finished.
    pub best: Model,
    pub best_epoch: Option<usize>,
    pub best_dev_loss: f64,
    pub history: Vec<EpochRecord>,
    pub stop: StopReason,
}

impl FitOutcome {
    pub fn diverged(&self) -> bool {
        self.stop == StopReason::Diverged
    }

    pub fn metrics_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,dev_loss,lr\n");
        for r in &self.history {
            writeln!(out, "{},{},{},{}", r.epoch, r.train_loss, r.dev_loss, r.lr).unwrap();
        }
        out
    }

    pub fn write_metrics_csv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.metrics_csv()).map_err(|e| Error::io(path, e))
    }
}

fn example_len(ex: &TrainingExample) -> usize {
    ex.post_ids.len() + ex.conv_ids.len() + ex.target_ids.len()
}

/// Seeded shuffle, then length-sorted grouping inside fixed windows, then a
/// shuffle of the resulting batch order.
pub fn plan_batches(
    examples: &[TrainingExample],
    batch_size: usize,
    group_window: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..examples.len()).collect();
    order.shuffle(rng);
    let window = (batch_size * group_window.max(1)).max(1);
    let mut batches = Vec::new();
    for chunk in order.chunks_mut(window) {
        chunk.sort_by_key(|&i| example_len(&examples[i]));
        batches.extend(chunk.chunks(batch_size).map(<[usize]>::to_vec));
    }
    batches.shuffle(rng);
    batches
}

fn batch_of<'a>(examples: &'a [TrainingExample], idx: &[usize]) -> Result<Batch> {
    let refs: Vec<&'a TrainingExample> = idx.iter().map(|&i| &examples[i]).collect();
    Batch::from_examples(&refs)
}

/// Mean per-token NLL over `examples` in evaluation mode.
pub fn evaluate_loss(model: &Model, examples: &[TrainingExample], batch_size: usize) -> Result<f64> {
    if examples.is_empty() {
        return Err(Error::Contract("cannot evaluate loss on an empty set".into()));
    }
    let chunks: Vec<&[TrainingExample]> = examples.chunks(batch_size.max(1)).collect();
    let parts = chunks
        .par_iter()
        .map(|chunk| {
            let refs: Vec<&TrainingExample> = chunk.iter().collect();
            let batch = Batch::from_examples(&refs)?;
            let mut g = Graph::new(model);
            let nll = g.forward_nll(&batch)?;
            Ok((g.tape.value(nll.sum).data()[0], nll.tokens))
        })
        .collect::<Result<Vec<(f64, usize)>>>()?;
    let (sum, tokens) = parts
        .into_iter()
        .fold((0.0, 0), |(s, t), (ps, pt)| (s + ps, t + pt));
    Ok(sum / tokens as f64)
}

/// Mean loss and named gradients for one batch.
pub fn loss_and_grads(model: &Model, batch: &Batch, dropout: Option<(f64, ChaCha8Rng)>) -> Result<(f64, GradMap)> {
    let mut g = match dropout {
        Some((rate, rng)) => Graph::training(model, rate, rng),
        None => Graph::new(model),
    };
    let nll = g.forward_nll(batch)?;
    let loss = g.tape.value(nll.mean).data()[0];
    let grads = g.tape.backward(nll.mean)?.by_name();
    Ok((loss, grads))
}

/// Central-difference check of the summed batch NLL with respect to every parameter.
pub fn model_grad_check(model: &Model, batch: &Batch, eps: f64) -> Result<GradCheckReport> {
    let params: BTreeMap<String, Tensor> = model
        .params
        .iter()
        .map(|(k, v)| (k.clone(), (**v).clone()))
        .collect();
    grad_check_with(&params, eps, |ps, with_grad| {
        let store = ps.iter().map(|(k, t)| (k.clone(), Arc::new(t.clone()))).collect();
        let m = Model::from_params(model.config.clone(), store)?;
        let mut g = Graph::new(&m);
        let nll = g.forward_nll(batch)?;
        let value = g.tape.value(nll.sum).data()[0];
        let grads = if with_grad {
            Some(g.tape.backward(nll.sum)?.by_name())
        } else {
            None
        };
        Ok((value, grads))
    })
}

/// Trains `model` and returns the snapshot with the lowest dev loss.
pub fn fit(
    mut model: Model,
    train: &[TrainingExample],
    dev: &[TrainingExample],
    cfg: &TrainConfig,
) -> Result<FitOutcome> {
    if train.is_empty() || dev.is_empty() {
        return Err(Error::Contract("training and dev splits must be nonempty".into()));
    }
    if cfg.batch_size == 0 {
        return Err(Error::Config("batch_size must be >= 1".into()));
    }
    if !(cfg.dropout >= 0.0 && cfg.dropout < 1.0) {
        return Err(Error::Config(format!("dropout must be in [0, 1), got {}", cfg.dropout)));
    }
    let mut opt = OptimizerState::adam(cfg.lr);
    let mut schedule = ScheduleState::new(cfg.lr);
    schedule.patience = cfg.patience.max(1);
    schedule.max_halvings = cfg.max_halvings.max(1);
    schedule.floor = cfg.lr_floor;
    let mut shuffle_rng = component_rng(cfg.seed, "shuffle");

    let mut out = FitOutcome {
        best: model.clone(),
        best_epoch: None,
        best_dev_loss: f64::INFINITY,
        history: Vec::new(),
        stop: StopReason::MaxEpochs,
    };

    'epochs: for epoch in 1..=cfg.max_epochs {
        opt.lr = schedule.lr;
        let batches = plan_batches(train, cfg.batch_size, cfg.group_window, &mut shuffle_rng);
        let (mut loss_sum, mut tokens) = (0.0, 0usize);
        for (b, idx) in batches.iter().enumerate() {
            let batch = batch_of(train, idx)?;
            let drop_rng = component_rng(cfg.seed, &format!("dropout/{epoch}/{b}"));
            let (loss, mut grads) = loss_and_grads(&model, &batch, Some((cfg.dropout, drop_rng)))?;
            if !loss.is_finite() {
                warn!("epoch {epoch} batch {b}: loss is {loss}; keeping last good checkpoint");
                out.stop = StopReason::Diverged;
                break 'epochs;
            }
            if let Err(e) = clip_global_norm(&mut grads, cfg.clip) {
                warn!("epoch {epoch} batch {b}: {e}; keeping last good checkpoint");
                out.stop = StopReason::Diverged;
                break 'epochs;
            }
            opt.adam_step(&mut model.params, &grads)?;
            loss_sum += loss * batch.target_tokens() as f64;
            tokens += batch.target_tokens();
        }

        let dev_loss = evaluate_loss(&model, dev, cfg.batch_size)?;
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / tokens as f64,
            dev_loss,
            lr: schedule.lr,
        };
        info!(
            "epoch {epoch}: train {:.4} dev {:.4} lr {:.2e}",
            record.train_loss, record.dev_loss, record.lr
        );
        out.history.push(record);
        if !dev_loss.is_finite() {
            warn!("epoch {epoch}: dev loss is {dev_loss}; keeping last good checkpoint");
            out.stop = StopReason::Diverged;
            break;
        }
        let decision = schedule.observe(dev_loss);
        if decision == Decision::Improved {
            out.best = model.clone();
            out.best_epoch = Some(epoch);
            out.best_dev_loss = dev_loss;
            if let Some(path) = &cfg.checkpoint {
                checkpoint::save(&model, path)?;
            }
        }
        if let Decision::Stop(reason) = decision {
            out.stop = reason;
            break;
        }
    }
    Ok(out)
}
