//! Single training run with early stopping on validation accuracy.

use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Graph, Split, SplitTag};
use crate::model::{record_forward, model_forward, AggregationPlan, ModelConfig, ModelParams, Variant};
use crate::neighborhood::StructuralNeighborhood;
use crate::optim::{adam_step, AdamConfig, AdamState, Param};
use crate::scalar::Scalar;
use crate::tape::{softmax_xent, GradTape};
use crate::tensor::Tensor2;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub dropout: f64,
    pub patience: usize,
    pub max_epochs: usize,
    /// Width of the hidden layer (already scaled by the number of virtual
    /// nodes where that applies).
    pub hidden_units: usize,
    pub variant: Variant,
    pub norm_exponent: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 0.05,
            weight_decay: 5e-5,
            dropout: 0.5,
            patience: 100,
            max_epochs: 1000,
            hidden_units: 16,
            variant: Variant::Geom,
            norm_exponent: -0.5,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.patience >= self.max_epochs {
            return Err(Error::InvalidArgument(format!(
                "patience ({}) must be below max_epochs ({})",
                self.patience, self.max_epochs
            )));
        }
        if !(self.lr > 0.0) || !(self.weight_decay >= 0.0) {
            return Err(Error::InvalidArgument(
                "lr must be positive and weight_decay nonnegative".into(),
            ));
        }
        self.model_config().validate()
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            hidden_units: self.hidden_units,
            dropout: self.dropout,
            variant: self.variant,
            norm_exponent: self.norm_exponent,
        }
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            weight_decay: self.weight_decay,
            ..AdamConfig::default()
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome<T: Scalar = f64> {
    /// Accuracy on the test nodes with the best-validation weights.
    pub test_accuracy: f64,
    pub best_val_accuracy: f64,
    /// Zero-based epoch whose weights were kept.
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub params: ModelParams<T>,
    /// Mean wall-clock seconds per training step (forward, backward, update).
    pub seconds_per_epoch: f64,
}

/// Fraction of masked rows whose arg-max logit equals the label.
pub fn accuracy<T: Scalar>(logits: &Tensor2<T>, labels: &[usize], mask: &[bool]) -> f64 {
    let pred = logits.argmax_rows();
    let (hit, total) = pred
        .iter()
        .zip(labels)
        .zip(mask)
        .filter(|(_, &m)| m)
        .fold((0usize, 0usize), |(h, t), ((p, l), _)| (h + usize::from(p == l), t + 1));
    if total == 0 {
        0.0
    } else {
        hit as f64 / total as f64
    }
}

fn rows_of(mask: &[bool]) -> Vec<usize> {
    (0..mask.len()).filter(|&i| mask[i]).collect()
}

/// One optimization step; returns the training loss.
fn train_step<T: Scalar>(
    g: &Graph<T>,
    params: &mut [Param<T>],
    state: &mut AdamState<T>,
    plan: &Arc<AggregationPlan<T>>,
    cfg: &TrainConfig,
    train_mask: &[bool],
    seed: u64,
    epoch: usize,
) -> Result<f64> {
    let mcfg = cfg.model_config();
    let current = ModelParams {
        w1: params[0].value.clone(),
        w2: params[1].value.clone(),
    };
    let mut tape = GradTape::new();
    let x = tape.constant(g.features().clone());
    let vars = record_forward(&mut tape, x, &current, plan, &mcfg, true, seed, epoch as u64)?;
    let loss = tape.masked_softmax_xent(vars.logits, g.labels(), train_mask)?;
    let loss_value = tape.value(loss)[(0, 0)].as_f64();
    if !loss_value.is_finite() {
        return Err(Error::Diverged {
            epoch,
            loss: loss_value,
        });
    }
    let mut grads = tape.backward(loss)?;
    let gs = [grads.take(vars.w1), grads.take(vars.w2)];
    adam_step(params, &gs, state, &cfg.adam())?;
    Ok(loss_value)
}

/// Trains on the split's training nodes and keeps the weights from the
/// epoch with the best validation accuracy (ties go to the lower
/// validation loss). Training stops once more than `patience` consecutive
/// epochs fail to improve. Test nodes are only read after that selection.
pub fn train_once<T: Scalar>(
    g: &Graph<T>,
    nb: &StructuralNeighborhood,
    cfg: &TrainConfig,
    split: &Split,
    seed: u64,
) -> Result<TrainOutcome<T>> {
    cfg.validate()?;
    if nb.num_nodes() != g.num_nodes() || split.assignment.len() != g.num_nodes() {
        return Err(Error::Validation(format!(
            "graph has {} nodes, neighborhood {}, split {}",
            g.num_nodes(),
            nb.num_nodes(),
            split.assignment.len()
        )));
    }
    let mcfg = cfg.model_config();
    let plan = Arc::new(AggregationPlan::new(nb, cfg.variant, cfg.norm_exponent));
    let init = ModelParams::<T>::init(&mcfg, g.feature_dim(), g.num_classes(), seed);
    let mut params = vec![Param::new("w1", init.w1), Param::new("w2", init.w2)];
    let mut state = AdamState::new();

    let train_mask = split.mask(SplitTag::Train);
    let val_mask = split.mask(SplitTag::Val);
    let val_rows = rows_of(&val_mask);
    if val_rows.is_empty() {
        return Err(Error::InvalidArgument("split has no validation nodes".into()));
    }

    let mut best = (f64::NEG_INFINITY, f64::INFINITY);
    let mut best_params = ModelParams {
        w1: params[0].value.clone(),
        w2: params[1].value.clone(),
    };
    let mut best_epoch = 0;
    let mut stale = 0;
    let mut epochs_run = 0;
    let mut train_seconds = 0.0;

    for epoch in 0..cfg.max_epochs {
        let t0 = Instant::now();
        train_step(g, &mut params, &mut state, &plan, cfg, &train_mask, seed, epoch)?;
        train_seconds += t0.elapsed().as_secs_f64();
        epochs_run = epoch + 1;

        let current = ModelParams {
            w1: params[0].value.clone(),
            w2: params[1].value.clone(),
        };
        let (_, logits) = model_forward(g.features(), &current, &plan, &mcfg, false, seed, epoch as u64)?;
        let (_, val_loss) = softmax_xent(&logits, g.labels(), &val_rows)?;
        let val_loss = val_loss.as_f64();
        let val_acc = accuracy(&logits, g.labels(), &val_mask);
        if val_acc > best.0 || (val_acc == best.0 && val_loss < best.1) {
            best = (val_acc, val_loss);
            best_params = current;
            best_epoch = epoch;
            stale = 0;
        } else {
            stale += 1;
            if stale > cfg.patience {
                break;
            }
        }
    }

    let (_, logits) = model_forward(g.features(), &best_params, &plan, &mcfg, false, seed, 0)?;
    let test_accuracy = accuracy(&logits, g.labels(), &split.mask(SplitTag::Test));
    Ok(TrainOutcome {
        test_accuracy,
        best_val_accuracy: best.0,
        best_epoch,
        epochs_run,
        params: best_params,
        seconds_per_epoch: train_seconds / epochs_run.max(1) as f64,
    })
}

/// Mean seconds per training step over `epochs` steps, without early
/// stopping or evaluation.
pub fn time_epochs<T: Scalar>(
    g: &Graph<T>,
    nb: &StructuralNeighborhood,
    cfg: &TrainConfig,
    split: &Split,
    epochs: usize,
) -> Result<f64> {
    let mcfg = cfg.model_config();
    let plan = Arc::new(AggregationPlan::new(nb, cfg.variant, cfg.norm_exponent));
    let init = ModelParams::<T>::init(&mcfg, g.feature_dim(), g.num_classes(), 0);
    let mut params = vec![Param::new("w1", init.w1), Param::new("w2", init.w2)];
    let mut state = AdamState::new();
    let train_mask = split.mask(SplitTag::Train);
    let t0 = Instant::now();
    for epoch in 0..epochs {
        train_step(g, &mut params, &mut state, &plan, cfg, &train_mask, 0, epoch)?;
    }
    Ok(t0.elapsed().as_secs_f64() / epochs.max(1) as f64)
}
