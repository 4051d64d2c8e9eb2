use serde::{Deserialize, Serialize};

use super::evaluate::{evaluate, EvalOptions};
use super::metrics::Metric;
use crate::autodiff::{AdamConfig, AdamState, Graph, ParamStore};
use crate::data::{mix, BatchIter, Instance, Schema};
use crate::error::{Error, Result};
use crate::model::{loss, Mode, Model, ModelConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    /// Decoupled L2 coefficient γ.
    pub weight_decay: f64,
    /// Recorded with the run; no schedule consumes it.
    pub decay_rate: f64,
    pub epochs: usize,
    pub seed: u64,
    /// Validation cadence in epochs; 0 disables.
    pub eval_every: usize,
    pub early_stopping: bool,
    pub patience: usize,
    /// Fraction of the training data held out when validating.
    pub validation_fraction: f64,
    pub workers: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.05,
            batch_size: 512,
            weight_decay: 1e-6,
            decay_rate: 1e-2,
            epochs: 3,
            seed: 0,
            eval_every: 0,
            early_stopping: false,
            patience: 3,
            validation_fraction: 0.1,
            workers: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::config("learning_rate", "must be > 0"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size", "must be at least 1"));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::config("weight_decay", "must be >= 0"));
        }
        if !(self.decay_rate >= 0.0) {
            return Err(Error::config("decay_rate", "must be >= 0"));
        }
        if self.early_stopping && self.patience == 0 {
            return Err(Error::config("patience", "must be at least 1"));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(Error::config("validation_fraction", "must be in (0, 1)"));
        }
        if self.workers == 0 {
            return Err(Error::config("workers", "must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub mean_loss: f64,
    pub clamp_events: usize,
    pub validation_auc: Option<Metric>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainOutcome {
    /// Mean per-instance cross-entropy of every optimizer step.
    pub step_losses: Vec<f64>,
    pub epochs: Vec<EpochLog>,
    pub clamp_events: usize,
    pub stopped_early: bool,
}

/// Rejects data whose schema differs from the model's.
pub fn check_schema(config: &ModelConfig, data: &Schema) -> Result<()> {
    if &config.schema != data {
        return Err(Error::config(
            "schema",
            format!(
                "dataset schema does not match the model config (data: {}, model: {})",
                serde_json::to_string(data)?,
                serde_json::to_string(&config.schema)?
            ),
        ));
    }
    Ok(())
}

/// Mini-batch Adam on the summed cross-entropy. Deterministic given
/// `cfg.seed`: batch order and Gumbel noise derive from it.
pub fn train(model: &mut Model, data: &[Instance], cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let validating = cfg.early_stopping || cfg.eval_every > 0;
    let (fit, held) = if validating && data.len() >= 2 {
        let n_val = ((data.len() as f64 * cfg.validation_fraction).round() as usize).clamp(1, data.len() - 1);
        data.split_at(data.len() - n_val)
    } else {
        (data, &data[..0])
    };
    let mut adam = AdamState::new(
        &model.store,
        AdamConfig {
            learning_rate: cfg.learning_rate,
            weight_decay: cfg.weight_decay,
            ..AdamConfig::default()
        },
    );
    let mut out = TrainOutcome {
        step_losses: Vec::new(),
        epochs: Vec::new(),
        clamp_events: 0,
        stopped_early: false,
    };
    let mut best: Option<(f64, ParamStore)> = None;
    let mut since_best = 0;
    let mut step = 0usize;
    for epoch in 0..cfg.epochs {
        let mut total = 0.0;
        let mut seen = 0usize;
        let mut clamps = 0;
        for idx in BatchIter::new(fit.len(), cfg.batch_size, Some((cfg.seed, epoch as u64))) {
            let batch: Vec<&Instance> = idx.iter().map(|&i| &fit[i]).collect();
            let labels: Vec<f64> = batch.iter().map(|i| f64::from(i.label)).collect();
            let mut g = Graph::new(mix(cfg.seed ^ 0x6772_6164, step as u64));
            let trace = model.forward(&mut g, &batch, Mode::Train)?;
            let l = loss(&mut g, trace.pred, &labels)?;
            let value = g.scalar(l);
            if !value.is_finite() {
                return Err(Error::Diverged { step, loss: value });
            }
            g.backward(l)?;
            g.accumulate_param_grads(&mut model.store);
            clamps += g.clamp_events();
            drop(g);
            if model.store.iter().any(|(_, p)| p.grad.iter().any(|v| !v.is_finite())) {
                return Err(Error::Diverged { step, loss: f64::NAN });
            }
            adam.step(&mut model.store);
            model.store.zero_grads();
            out.step_losses.push(value / batch.len() as f64);
            total += value;
            seen += batch.len();
            step += 1;
        }
        let validation_auc = if !held.is_empty() && (cfg.early_stopping || (epoch + 1) % cfg.eval_every.max(1) == 0) {
            let report = evaluate(
                model,
                held,
                &EvalOptions {
                    batch_size: cfg.batch_size,
                    workers: cfg.workers,
                },
            )?;
            Some(report.mean_scenario_auc)
        } else {
            None
        };
        out.clamp_events += clamps;
        out.epochs.push(EpochLog {
            epoch,
            mean_loss: if seen > 0 { total / seen as f64 } else { 0.0 },
            clamp_events: clamps,
            validation_auc,
        });
        if cfg.early_stopping {
            let score = validation_auc.and_then(Metric::value).unwrap_or(f64::NEG_INFINITY);
            if best.as_ref().is_none_or(|(b, _)| score > *b) {
                best = Some((score, model.store.clone()));
                since_best = 0;
            } else {
                since_best += 1;
                if since_best >= cfg.patience {
                    out.stopped_early = true;
                    break;
                }
            }
        }
    }
    if let Some((_, store)) = best {
        model.store = store;
    }
    Ok(out)
}
