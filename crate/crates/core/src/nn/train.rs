use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{smooth_labels, stack, CnnModel, Params};
use crate::dataset::DatasetBundle;
use crate::error::{Error, Result};
use crate::NUM_CLASSES;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Optimizer {
    /// Gradient descent with heavy-ball momentum.
    Momentum,
    /// Adam with beta1 = 0.9, beta2 = 0.999, eps = 1e-8.
    Adam,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub optimizer: Optimizer,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    /// Label-smoothing parameter in `[0, 1]`.
    pub ls_alpha: f64,
    /// Variance of the zero-mean Gaussian noise added to every training input.
    pub gna_variance: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            optimizer: Optimizer::Momentum,
            epochs: 30,
            batch_size: 128,
            learning_rate: 1e-3,
            momentum: 0.9,
            ls_alpha: 0.1,
            gna_variance: 0.003,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Same optimiser settings with smoothing and noise augmentation off.
    pub fn without_augmentation(&self) -> Self {
        TrainConfig {
            ls_alpha: 0.0,
            gna_variance: 0.0,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.ls_alpha) {
            return Err(Error::InvalidArgument(format!(
                "ls_alpha {} outside [0, 1]",
                self.ls_alpha
            )));
        }
        if !(self.gna_variance >= 0.0 && self.gna_variance.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "gna_variance {} must be non-negative",
                self.gna_variance
            )));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidArgument("epochs and batch size must be positive".into()));
        }
        if !(self.learning_rate > 0.0) || !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidArgument(
                "learning rate must be positive and momentum in [0, 1)".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean batch loss per epoch.
    pub epoch_losses: Vec<f64>,
}

pub fn train(model: &CnnModel, data: &DatasetBundle, config: &TrainConfig) -> Result<(CnnModel, TrainReport)> {
    train_with_hook(model, data, config, |_, _, _| {})
}

/// Mini-batch gradient descent with momentum. Each batch is augmented with
/// fresh Gaussian noise and trained against smoothed labels. `hook` sees
/// every augmented batch as `(epoch, batch, inputs)`.
///
/// Shuffling and noise draw from separate streams, so switching the
/// augmentation off leaves the batch order unchanged.
pub fn train_with_hook<H>(
    model: &CnnModel,
    data: &DatasetBundle,
    config: &TrainConfig,
    mut hook: H,
) -> Result<(CnnModel, TrainReport)>
where
    H: FnMut(usize, usize, &Array2<f64>),
{
    config.validate()?;
    if data.is_empty() {
        return Err(Error::InsufficientData("empty training set".into()));
    }
    let targets: Vec<Vec<f64>> = (0..NUM_CLASSES)
        .map(|k| {
            let mut one_hot = vec![0.0; NUM_CLASSES];
            one_hot[k] = 1.0;
            smooth_labels(&one_hot, config.ls_alpha)
        })
        .collect::<Result<_>>()?;

    let mut model = model.clone();
    let mut velocity = Params::zeros(model.arch());
    let mut second = Params::zeros(model.arch());
    let mut step = 0i32;
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut noise_rng = ChaCha8Rng::seed_from_u64(config.seed);
    noise_rng.set_stream(1);
    let noise_std = config.gna_variance.sqrt();
    let mut report = TrainReport::default();

    for epoch in 0..config.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut total = 0.0;
        let mut batches = 0;
        for (bi, chunk) in order.chunks(config.batch_size).enumerate() {
            let frames: Vec<_> = chunk.iter().map(|&i| &data.examples[i].frame).collect();
            let mut inputs = stack(&frames);
            if noise_std > 0.0 {
                inputs.mapv_inplace(|v| v + noise_std * noise_rng.sample::<f64, _>(StandardNormal));
            }
            hook(epoch, bi, &inputs);
            let mut y = Array2::zeros((chunk.len(), NUM_CLASSES));
            for (r, &i) in chunk.iter().enumerate() {
                let t = &targets[data.examples[i].label as usize];
                for k in 0..NUM_CLASSES {
                    y[[r, k]] = t[k];
                }
            }
            let (loss, grads) = model.loss_and_grads(inputs, &y).map_err(|e| match e {
                Error::Divergence(msg) => Error::Divergence(format!("epoch {epoch}, batch {bi}: {msg}")),
                other => other,
            })?;
            step += 1;
            apply_update(config, step, &mut model, &mut velocity, &mut second, &grads);
            total += loss;
            batches += 1;
        }
        report.epoch_losses.push(total / batches as f64);
    }
    if !model.params().all_finite() {
        return Err(Error::Divergence("non-finite parameters after training".into()));
    }
    Ok((model, report))
}

fn apply_update(
    config: &TrainConfig,
    step: i32,
    model: &mut CnnModel,
    first: &mut Params,
    second: &mut Params,
    grads: &Params,
) {
    let lr = config.learning_rate;
    let blocks = model
        .params_mut()
        .blocks_mut()
        .into_iter()
        .zip(first.blocks_mut())
        .zip(second.blocks_mut())
        .zip(grads.blocks());
    match config.optimizer {
        Optimizer::Momentum => {
            for (((p, v), _), g) in blocks {
                for ((pi, vi), gi) in p.iter_mut().zip(v.iter_mut()).zip(g) {
                    *vi = config.momentum * *vi - lr * gi;
                    *pi += *vi;
                }
            }
        }
        Optimizer::Adam => {
            let (b1, b2) = (0.9f64, 0.999f64);
            let c1 = 1.0 - b1.powi(step);
            let c2 = 1.0 - b2.powi(step);
            for (((p, m), v), g) in blocks {
                for (((pi, mi), vi), gi) in p.iter_mut().zip(m.iter_mut()).zip(v.iter_mut()).zip(g) {
                    *mi = b1 * *mi + (1.0 - b1) * gi;
                    *vi = b2 * *vi + (1.0 - b2) * gi * gi;
                    *pi -= lr * (*mi / c1) / ((*vi / c2).sqrt() + 1e-8);
                }
            }
        }
    }
}

/// Fraction of examples whose argmax logit equals the label.
pub fn accuracy(model: &CnnModel, data: &DatasetBundle) -> Result<f64> {
    if data.is_empty() {
        return Ok(0.0);
    }
    let frames: Vec<_> = data.examples.iter().map(|e| &e.frame).collect();
    let pred = model.predict_many(&frames)?;
    let hits = pred
        .iter()
        .zip(&data.examples)
        .filter(|(p, e)| **p == e.label as usize)
        .count();
    Ok(hits as f64 / data.len() as f64)
}
