use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;

use super::{Model, ParamGrads, Tensor};
use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerKind {
    /// β1 = 0.9, β2 = 0.999, ε = 1e-8.
    Adam,
    Sgd,
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OptimizerKind::Adam => "adam",
            OptimizerKind::Sgd => "sgd",
        })
    }
}

impl FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "adam" => Ok(OptimizerKind::Adam),
            "sgd" => Ok(OptimizerKind::Sgd),
            _ => Err(Error::invalid(format!("unknown optimizer '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 4,
            epochs: 30,
            learning_rate: 1e-3,
            optimizer: OptimizerKind::Adam,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    /// Mean cross-entropy over the training set, evaluated without dropout.
    pub loss: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub initial: EpochStats,
    pub epochs: Vec<EpochStats>,
}

impl TrainReport {
    pub fn final_stats(&self) -> EpochStats {
        self.epochs.last().copied().unwrap_or(self.initial)
    }
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

struct AdamState {
    step: i32,
    moments: Vec<Option<[(Vec<f64>, Vec<f64>); 2]>>,
}

fn dataset_stats(model: &Model, inputs: &[Tensor], labels: &[usize]) -> Result<EpochStats> {
    let mut loss = 0.0;
    let mut correct = 0;
    for (x, &y) in inputs.iter().zip(labels) {
        let p = model.forward(x, false)?;
        loss -= p.data()[y].max(f64::MIN_POSITIVE).ln();
        if super::argmax(p.data()) == y {
            correct += 1;
        }
    }
    let n = inputs.len() as f64;
    Ok(EpochStats {
        loss: loss / n,
        accuracy: correct as f64 / n,
    })
}

/// Mini-batch training on mean softmax cross-entropy. Shuffling and dropout
/// masks draw from one stream seeded by `cfg.seed`.
pub fn train(
    model: &Model,
    inputs: &[Tensor],
    labels: &[usize],
    cfg: &TrainConfig,
) -> Result<(Model, TrainReport)> {
    if inputs.is_empty() {
        return Err(Error::invalid("cannot train on an empty dataset"));
    }
    if inputs.len() != labels.len() {
        return Err(Error::invalid(format!(
            "{} inputs but {} labels",
            inputs.len(),
            labels.len()
        )));
    }
    if cfg.batch_size == 0 || cfg.epochs == 0 {
        return Err(Error::invalid("batch_size and epochs must be >= 1"));
    }
    let classes = model.num_classes();
    if let Some(&bad) = labels.iter().find(|&&y| y >= classes) {
        return Err(Error::invalid(format!("label {bad} outside 0..{classes}")));
    }

    let mut model = model.clone();
    let mut rng = seed::rng(cfg.seed);
    let mut order: Vec<usize> = (0..inputs.len()).collect();
    let mut adam = AdamState {
        step: 0,
        moments: vec![None; model.layers().len()],
    };
    let initial = dataset_stats(&model, inputs, labels)?;
    let mut epochs = Vec::with_capacity(cfg.epochs);

    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            let mut sum: ParamGrads = vec![None; model.layers().len()];
            for &idx in batch {
                let (_, _, grads) = model.loss_and_grads(&inputs[idx], labels[idx], Some(&mut rng))?;
                for (acc, g) in sum.iter_mut().zip(grads) {
                    match (acc.as_mut(), g) {
                        (None, g) => *acc = g,
                        (Some((aw, ab)), Some((gw, gb))) => {
                            aw.iter_mut().zip(&gw).for_each(|(a, v)| *a += v);
                            ab.iter_mut().zip(&gb).for_each(|(a, v)| *a += v);
                        }
                        (Some(_), None) => {}
                    }
                }
            }
            let scale = 1.0 / batch.len() as f64;
            for (w, b) in sum.iter_mut().flatten() {
                w.iter_mut().for_each(|v| *v *= scale);
                b.iter_mut().for_each(|v| *v *= scale);
            }
            step(&mut model, &sum, cfg, &mut adam);
        }
        epochs.push(dataset_stats(&model, inputs, labels)?);
    }
    Ok((model, TrainReport { initial, epochs }))
}

fn step(model: &mut Model, grads: &ParamGrads, cfg: &TrainConfig, adam: &mut AdamState) {
    let lr = cfg.learning_rate;
    match cfg.optimizer {
        OptimizerKind::Sgd => model.apply_update(|i, w, b| {
            if let Some((gw, gb)) = &grads[i] {
                w.iter_mut().zip(gw).for_each(|(p, g)| *p -= lr * g);
                b.iter_mut().zip(gb).for_each(|(p, g)| *p -= lr * g);
            }
        }),
        OptimizerKind::Adam => {
            adam.step += 1;
            let c1 = 1.0 - BETA1.powi(adam.step);
            let c2 = 1.0 - BETA2.powi(adam.step);
            let moments = &mut adam.moments;
            model.apply_update(|i, w, b| {
                let Some((gw, gb)) = &grads[i] else { return };
                let state = moments[i].get_or_insert_with(|| {
                    [
                        (vec![0.0; w.len()], vec![0.0; w.len()]),
                        (vec![0.0; b.len()], vec![0.0; b.len()]),
                    ]
                });
                for ((params, g), (m, v)) in [(&mut *w, gw), (&mut *b, gb)].into_iter().zip(state.iter_mut()) {
                    for j in 0..params.len() {
                        m[j] = BETA1 * m[j] + (1.0 - BETA1) * g[j];
                        v[j] = BETA2 * v[j] + (1.0 - BETA2) * g[j] * g[j];
                        params[j] -= lr * (m[j] / c1) / ((v[j] / c2).sqrt() + ADAM_EPS);
                    }
                }
            });
        }
    }
}

/// Fraction of argmax predictions equal to the labels.
pub fn evaluate(model: &Model, inputs: &[Tensor], labels: &[usize]) -> Result<f64> {
    if inputs.is_empty() {
        return Err(Error::invalid("cannot evaluate on an empty dataset"));
    }
    if inputs.len() != labels.len() {
        return Err(Error::invalid(format!(
            "{} inputs but {} labels",
            inputs.len(),
            labels.len()
        )));
    }
    let mut correct = 0usize;
    for (x, &y) in inputs.iter().zip(labels) {
        if model.predict(x)? == y {
            correct += 1;
        }
    }
    Ok(correct as f64 / inputs.len() as f64)
}
