use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{metrics_from_predictions, EvalReport};
use super::seed::{derive_seed, Stream};
use crate::dataset::Sample;
use crate::error::{Error, Result};
use crate::model::{input_tensor, FcnModel};
use crate::nn::{AdamConfig, AdamState, Tape, Tensor};

/// Which held-out data drives early stopping.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Monitor {
    /// A slice carved from each fold's training split.
    Validation,
    /// The fold's test split itself.
    Test,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs_max: usize,
    pub batch_size: usize,
    pub patience: usize,
    /// Smallest validation-loss drop that counts as an improvement.
    pub min_delta: f64,
    pub adam: AdamConfig,
    /// Fraction of each training split held out for early stopping.
    pub validation_fraction: f64,
    pub monitor: Monitor,
    /// Add the adaptive-slope recovery term to the loss.
    pub slope_recovery: bool,
    /// Per-band standardization fitted on the training split.
    pub standardize: bool,
    pub train_fraction: f64,
    /// Worker threads for folds and grid cells; results do not depend on it.
    pub jobs: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs_max: 500,
            batch_size: 80,
            patience: 20,
            min_delta: 1e-4,
            adam: AdamConfig::default(),
            validation_fraction: 0.1,
            monitor: Monitor::Validation,
            slope_recovery: false,
            standardize: true,
            train_fraction: 0.8,
            jobs: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        if self.patience == 0 {
            return Err(Error::Config("patience must be at least 1".into()));
        }
        if self.epochs_max == 0 {
            return Err(Error::Config("at least one epoch is required".into()));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::Config(format!("train fraction {} outside (0, 1)", self.train_fraction)));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(Error::Config(format!(
                "validation fraction {} outside [0, 1)",
                self.validation_fraction
            )));
        }
        if self.jobs == 0 {
            return Err(Error::Config("jobs must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainOutcome {
    pub history: Vec<EpochRecord>,
    /// Epoch whose weights were kept (1-based).
    pub best_epoch: usize,
    /// Last epoch run (1-based).
    pub stopped_epoch: usize,
    pub steps: u64,
}

/// Early-stopping bookkeeping on a monitored loss.
#[derive(Clone, Debug)]
pub struct EarlyStopping {
    patience: usize,
    min_delta: f64,
    best: f64,
    best_epoch: usize,
    wait: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    Improved,
    Continue,
    Stop,
}

impl EarlyStopping {
    pub fn new(patience: usize, min_delta: f64) -> Self {
        Self {
            patience,
            min_delta,
            best: f64::INFINITY,
            best_epoch: 0,
            wait: 0,
        }
    }

    pub fn best(&self) -> (usize, f64) {
        (self.best_epoch, self.best)
    }

    pub fn observe(&mut self, epoch: usize, loss: f64) -> Verdict {
        if loss < self.best - self.min_delta {
            self.best = loss;
            self.best_epoch = epoch;
            self.wait = 0;
            Verdict::Improved
        } else {
            self.wait += 1;
            if self.wait >= self.patience {
                Verdict::Stop
            } else {
                Verdict::Continue
            }
        }
    }
}

fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in p.iter().enumerate() {
        if v > p[best] {
            best = i;
        }
    }
    best
}

struct SampleGrad {
    loss: f64,
    correct: bool,
    grads: Vec<Vec<f32>>,
}

fn sample_gradient(model: &FcnModel, sample: &Sample, dropout_seed: u64) -> Result<SampleGrad> {
    let mut tape = Tape::<f32>::new();
    let params = model.load_params(&mut tape);
    let x = tape.constant(input_tensor(&sample.features)?);
    let mut rng = ChaCha8Rng::seed_from_u64(dropout_seed);
    let p = model.graph(&mut tape, &params, x, true, &mut rng)?;
    let probs: Vec<f64> = tape.value(p)?.data().iter().map(|&v| v as f64).collect();
    let loss = tape.cross_entropy(p, sample.label)?;
    let loss_value = tape.value(loss)?.data()[0] as f64;
    tape.backward(loss)?;
    let grads = params
        .iter()
        .map(|&v| Ok(tape.grad(v)?.expect("parameters are trainable").to_vec()))
        .collect::<Result<Vec<_>>>()?;
    Ok(SampleGrad {
        loss: loss_value,
        correct: argmax(&probs) == sample.label,
        grads,
    })
}

/// Gradient of the slope-recovery term with respect to each slope, keyed
/// by parameter position.
fn slope_recovery_gradient(model: &FcnModel) -> Result<(f64, Vec<(usize, f32)>)> {
    let positions: Vec<usize> = model
        .params()
        .iter()
        .enumerate()
        .filter(|(_, (n, _))| n.ends_with(".slope"))
        .map(|(i, _)| i)
        .collect();
    if positions.is_empty() {
        return Ok((0.0, Vec::new()));
    }
    let mut tape = Tape::<f64>::new();
    let vars: Vec<_> = positions.iter().map(|&i| tape.param(model.params()[i].1.cast())).collect();
    let s = tape.slope_recovery(&vars)?;
    let value = tape.value(s)?.data()[0];
    tape.backward(s)?;
    let mut out = Vec::new();
    for (&i, &v) in positions.iter().zip(&vars) {
        out.push((i, tape.grad(v)?.expect("trainable")[0] as f32));
    }
    Ok((value, out))
}

/// Mean cross-entropy and accuracy in evaluation mode.
pub fn loss_and_accuracy(model: &FcnModel, samples: &[&Sample]) -> Result<(f64, f64)> {
    if samples.is_empty() {
        return Ok((f64::NAN, f64::NAN));
    }
    let per: Vec<(f64, bool)> = samples
        .par_iter()
        .map(|s| {
            let p = model.predict(&s.features)?;
            let loss = -p[s.label].max(crate::nn::CE_CLAMP).ln();
            Ok((loss, argmax(&p) == s.label))
        })
        .collect::<Result<_>>()?;
    let n = per.len() as f64;
    let loss = per.iter().map(|(l, _)| l).sum::<f64>() / n;
    let acc = per.iter().filter(|(_, c)| *c).count() as f64 / n;
    Ok((loss, acc))
}

/// Minibatch Adam on mean cross-entropy with early stopping.
///
/// Each epoch visits the training samples in a fresh shuffled order. The
/// monitored loss is the mean evaluation-mode loss on `val`, or the epoch's
/// training loss when `val` is empty. On return the model holds the
/// weights of the best monitored epoch.
///
/// Per-sample gradients are computed in parallel and summed in sample
/// order, so results are identical for any thread count.
pub fn train_one(model: &mut FcnModel, train: &[&Sample], val: &[&Sample], tc: &TrainConfig, seed: u64) -> Result<TrainOutcome> {
    tc.validate()?;
    if train.is_empty() {
        return Err(Error::Parameter("cannot train on an empty set".into()));
    }
    for s in train.iter().chain(val) {
        model.check_input(s.features.bands, s.features.frames)?;
    }
    let mut adam = AdamState::<f32>::new(tc.adam);
    let mut stopper = EarlyStopping::new(tc.patience, tc.min_delta);
    let mut best_params: Vec<Tensor<f32>> = model.params().iter().map(|(_, t)| t.clone()).collect();
    let mut history = Vec::new();
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, Stream::Shuffle, &[]));
    let n_params = model.params().len();

    for epoch in 1..=tc.epochs_max {
        order.shuffle(&mut shuffle_rng);
        let (mut loss_sum, mut correct) = (0.0, 0usize);
        for (b, batch) in order.chunks(tc.batch_size).enumerate() {
            let results: Vec<SampleGrad> = batch
                .par_iter()
                .enumerate()
                .map(|(j, &i)| {
                    let ds = derive_seed(seed, Stream::Dropout, &[epoch as u64, b as u64, j as u64]);
                    sample_gradient(model, train[i], ds)
                })
                .collect::<Result<_>>()
                .map_err(|e| match e {
                    Error::Numeric(_) => Error::Divergence {
                        epoch,
                        batch: b + 1,
                        loss: f64::NAN,
                    },
                    e => e,
                })?;
            let scale = 1.0 / batch.len() as f64;
            let mut acc: Vec<Vec<f64>> = model.params().iter().map(|(_, t)| vec![0.0; t.len()]).collect();
            let mut batch_loss = 0.0;
            for r in &results {
                batch_loss += r.loss;
                correct += r.correct as usize;
                for (a, g) in acc.iter_mut().zip(&r.grads) {
                    a.iter_mut().zip(g).for_each(|(a, &g)| *a += g as f64);
                }
            }
            let mut mean_loss = batch_loss * scale;
            let mut grads: Vec<Vec<f32>> =
                acc.into_iter().map(|a| a.into_iter().map(|v| (v * scale) as f32).collect()).collect();
            if tc.slope_recovery {
                let (term, sg) = slope_recovery_gradient(model)?;
                mean_loss += term;
                for (i, g) in sg {
                    grads[i][0] += g;
                }
            }
            if !mean_loss.is_finite() || grads.iter().flatten().any(|g| !g.is_finite()) {
                return Err(Error::Divergence {
                    epoch,
                    batch: b + 1,
                    loss: mean_loss,
                });
            }
            loss_sum += batch_loss;
            let grad_refs: Vec<&[f32]> = grads.iter().map(|g| g.as_slice()).collect();
            let mut params: Vec<&mut Tensor<f32>> = model.params_mut().collect();
            debug_assert_eq!(params.len(), n_params);
            adam.step(&mut params, &grad_refs)?;
        }
        let train_loss = loss_sum / train.len() as f64;
        let train_accuracy = correct as f64 / train.len() as f64;
        let (val_loss, val_accuracy) = if val.is_empty() {
            (f64::NAN, f64::NAN)
        } else {
            loss_and_accuracy(model, val)?
        };
        history.push(EpochRecord {
            epoch,
            train_loss,
            train_accuracy,
            val_loss,
            val_accuracy,
        });
        let monitored = if val.is_empty() { train_loss } else { val_loss };
        match stopper.observe(epoch, monitored) {
            Verdict::Improved => {
                best_params = model.params().iter().map(|(_, t)| t.clone()).collect();
            }
            Verdict::Continue => {}
            Verdict::Stop => break,
        }
    }
    let stopped_epoch = history.len();
    for (p, best) in model.params_mut().zip(best_params) {
        *p = best;
    }
    Ok(TrainOutcome {
        history,
        best_epoch: stopper.best().0,
        stopped_epoch,
        steps: adam.steps(),
    })
}

/// Predicted class per sample, evaluation mode, no padding.
pub fn predict_all(model: &FcnModel, samples: &[&Sample]) -> Result<Vec<usize>> {
    samples.par_iter().map(|s| Ok(argmax(&model.predict(&s.features)?))).collect()
}

pub fn evaluate(model: &FcnModel, samples: &[&Sample]) -> Result<EvalReport> {
    if samples.is_empty() {
        return Err(Error::Parameter("cannot evaluate on an empty set".into()));
    }
    let predicted = predict_all(model, samples)?;
    let truth: Vec<usize> = samples.iter().map(|s| s.label).collect();
    metrics_from_predictions(model.label_set(), &truth, &predicted)
}
