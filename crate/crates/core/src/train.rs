//! Minibatch training and prediction shared by the encoder and ESIM models.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::{AutodiffError, Graph, Real, Tensor, Var};
use crate::harness::{HeadType, Label};
use crate::optim::{Adam, AdamConfig};
use crate::params::{CheckpointError, ParamSet};

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("guided mode needs a similarity matrix for every input")]
    GuidedWithoutSim,
    #[error("similarity matrix for input {index} is {found:?}, expected {expected:?}")]
    SimShape {
        index: usize,
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error("{0}")]
    Data(String),
    #[error("non-finite loss at epoch {epoch}, step {step}")]
    NonFinite { epoch: usize, step: usize },
}

/// Inverted dropout with its own seeded stream.
pub struct Dropout {
    rate: f64,
    rng: ChaCha8Rng,
}

impl Dropout {
    pub fn new(rate: f64, seed: u64) -> Dropout {
        Dropout {
            rate,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Zero each entry with probability `rate` and rescale survivors.
    pub fn apply<T: Real>(&mut self, g: &mut Graph<T>, x: Var) -> Result<Var, AutodiffError> {
        if self.rate <= 0.0 {
            return Ok(x);
        }
        let keep = 1.0 - self.rate;
        let (m, n) = (g.value(x).rows(), g.value(x).cols());
        let scale = T::of(1.0 / keep);
        let mask = Tensor::from_fn(m, n, |_, _| {
            if self.rng.random::<f64>() < keep {
                scale
            } else {
                T::zero()
            }
        });
        let mask = g.constant(mask);
        g.hadamard(x, mask)
    }
}

/// A sentence-pair model whose forward pass can be recorded in either precision.
pub trait PairModel: Sync {
    type Input: Sync;

    fn head(&self) -> HeadType;
    fn params(&self) -> &ParamSet<f32>;
    fn params_mut(&mut self) -> &mut ParamSet<f32>;
    fn dropout_rate(&self) -> f64;

    /// Record the forward pass for a batch; returns a `batch × outputs`
    /// node holding logits (classifier) or scores in [0, 5] (regressor).
    fn forward<T: Real>(
        &self,
        g: &mut Graph<T>,
        params: &[Var],
        batch: &[&Self::Input],
        dropout: Option<&mut Dropout>,
    ) -> Result<Var, ModelError>;

    /// Forward values without recording gradients.
    fn outputs<T: Real>(
        &self,
        params: &ParamSet<T>,
        batch: &[&Self::Input],
    ) -> Result<Tensor<T>, ModelError> {
        let mut g = Graph::new();
        let vars = params.register(&mut g, false);
        let out = self.forward(&mut g, &vars, batch, None)?;
        Ok(g.value(out).clone())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainOptions {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Fraction of the training set used, sampled with `seed`.
    pub fraction: f64,
    pub seed: u64,
    /// Share of all steps spent in linear learning-rate warmup.
    pub warmup_fraction: f64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            epochs: 10,
            batch_size: 16,
            learning_rate: 1e-3,
            fraction: 1.0,
            seed: 0,
            warmup_fraction: 0.1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub train_pairs: usize,
    pub steps: usize,
    /// Mean training loss per epoch.
    pub epoch_loss: Vec<f64>,
}

/// `⌈fraction · n⌉` distinct indices drawn with a seeded shuffle.
pub fn subsample(n: usize, fraction: f64, seed: u64) -> Result<Vec<usize>, ModelError> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(ModelError::Data(format!(
            "fraction {fraction} outside (0, 1]"
        )));
    }
    let k = (fraction * n as f64).ceil() as usize;
    if k == 0 {
        return Err(ModelError::Data("training subsample is empty".to_string()));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    idx.truncate(k);
    idx.sort_unstable();
    Ok(idx)
}

/// Loss node for a batch of outputs against labels.
pub fn loss<T: Real>(
    g: &mut Graph<T>,
    head: HeadType,
    out: Var,
    labels: &[Label],
) -> Result<Var, ModelError> {
    match head {
        HeadType::BinaryClassifier => {
            let targets = labels
                .iter()
                .map(|l| {
                    l.class()
                        .ok_or_else(|| ModelError::Data("score label for a classifier".into()))
                })
                .collect::<Result<Vec<_>, _>>()?;
            Ok(g.cross_entropy(out, &targets)?)
        }
        HeadType::Regressor => {
            let target = Tensor::from_fn(labels.len(), 1, |i, _| T::of(labels[i].as_f64()));
            Ok(g.mse_loss(out, &target)?)
        }
    }
}

/// Minibatch Adam. Deterministic for a fixed `opts.seed`.
pub fn fit<M: PairModel>(
    model: &mut M,
    inputs: &[M::Input],
    labels: &[Label],
    opts: &TrainOptions,
) -> Result<History, ModelError> {
    if inputs.len() != labels.len() {
        return Err(ModelError::Data(format!(
            "{} inputs but {} labels",
            inputs.len(),
            labels.len()
        )));
    }
    if inputs.is_empty() {
        return Err(ModelError::Data("empty training set".to_string()));
    }
    if opts.batch_size == 0 {
        return Err(ModelError::Config(
            "batch_size must be positive".to_string(),
        ));
    }
    let mut order = subsample(inputs.len(), opts.fraction, opts.seed)?;
    let batches_per_epoch = order.len().div_ceil(opts.batch_size);
    let total_steps = batches_per_epoch * opts.epochs;
    let warmup_steps = (opts.warmup_fraction * total_steps as f64).ceil() as usize;
    let mut adam = Adam::new(
        AdamConfig {
            learning_rate: opts.learning_rate,
            warmup_steps,
            ..AdamConfig::default()
        },
        model.params(),
    );
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed.wrapping_mul(0x9e37_79b9_7f4a_7c15));
    let mut dropout = Dropout::new(model.dropout_rate(), opts.seed.wrapping_add(1));
    let head = model.head();
    let mut history = History {
        train_pairs: order.len(),
        steps: 0,
        epoch_loss: Vec::with_capacity(opts.epochs),
    };
    for epoch in 0..opts.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(opts.batch_size) {
            let batch: Vec<&M::Input> = chunk.iter().map(|&i| &inputs[i]).collect();
            let batch_labels: Vec<Label> = chunk.iter().map(|&i| labels[i]).collect();
            let mut g = Graph::<f32>::new();
            let vars = model.params().register(&mut g, true);
            let out = model.forward(&mut g, &vars, &batch, Some(&mut dropout))?;
            let l = loss(&mut g, head, out, &batch_labels)?;
            let value = f64::from(g.value(l).item());
            if !value.is_finite() {
                return Err(ModelError::NonFinite {
                    epoch,
                    step: history.steps,
                });
            }
            g.backward(l)?;
            let grads: Vec<Option<&Tensor<f32>>> = vars.iter().map(|&v| g.grad(v)).collect();
            adam.step(model.params_mut(), &grads);
            history.steps += 1;
            total += value * chunk.len() as f64;
        }
        history.epoch_loss.push(total / order.len() as f64);
    }
    Ok(history)
}

/// Raw outputs (logits or scores) per input, computed in parallel batches.
pub fn raw_outputs<M: PairModel>(
    model: &M,
    inputs: &[M::Input],
    batch_size: usize,
) -> Result<Vec<Vec<f32>>, ModelError> {
    let chunks: Vec<&[M::Input]> = inputs.chunks(batch_size.max(1)).collect();
    let per_chunk = chunks
        .par_iter()
        .map(|chunk| {
            let batch: Vec<&M::Input> = chunk.iter().collect();
            let out = model.outputs(model.params(), &batch)?;
            Ok((0..out.rows())
                .map(|i| out.row(i).to_vec())
                .collect::<Vec<_>>())
        })
        .collect::<Result<Vec<_>, ModelError>>()?;
    Ok(per_chunk.into_iter().flatten().collect())
}

/// Predicted labels: argmax of logits (first index on ties) or the score.
pub fn predict<M: PairModel>(model: &M, inputs: &[M::Input]) -> Result<Vec<Label>, ModelError> {
    let head = model.head();
    Ok(raw_outputs(model, inputs, 32)?
        .into_iter()
        .map(|row| match head {
            HeadType::BinaryClassifier => Label::Class(u8::from(row[1] > row[0])),
            HeadType::Regressor => Label::Score(f64::from(row[0])),
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn subsample_sizes_are_ceilings() {
        assert_eq!(subsample(10, 0.5, 1).unwrap().len(), 5);
        assert_eq!(subsample(40, 0.1, 1).unwrap().len(), 4);
        assert_eq!(subsample(7, 0.3, 1).unwrap().len(), 3);
        assert_eq!(subsample(7, 1.0, 1).unwrap(), (0..7).collect::<Vec<_>>());
        assert!(subsample(0, 1.0, 1).is_err());
        assert!(subsample(5, 0.0, 1).is_err());
        assert_eq!(
            subsample(30, 0.4, 9).unwrap(),
            subsample(30, 0.4, 9).unwrap()
        );
    }
}
