use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Real, Tensor, Var};
use crate::encoder::Encoder;
use crate::params::{truncated_normal, ParamSet};
use crate::train::{fit, predict, Dropout, ModelError, PairModel, TrainOptions};
use crate::wordnet::WordNetGraph;

use super::{metrics, HeadType, Label, MetricsReport, SentencePair};

/// Datasets smaller than this are probed on their training split.
pub const MIN_HOLDOUT_PAIRS: usize = 5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProbeOptions {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Share of pairs held out for evaluation.
    pub holdout_fraction: f64,
    pub seed: u64,
}

impl Default for ProbeOptions {
    fn default() -> Self {
        ProbeOptions {
            epochs: 20,
            batch_size: 16,
            learning_rate: 1e-2,
            holdout_fraction: 0.2,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerReport {
    /// 1-based layer index.
    pub layer: usize,
    pub metrics: MetricsReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub train_pairs: usize,
    pub eval_pairs: usize,
    /// Accuracy of always predicting the most frequent training class.
    pub majority_baseline: Option<f64>,
    /// Parameter fingerprints of the frozen encoder before and after probing.
    pub fingerprint_before: String,
    pub fingerprint_after: String,
    pub layers: Vec<LayerReport>,
}

/// Softmax-regression (or bounded linear regression) head over fixed features.
struct LinearProbe {
    head: HeadType,
    params: ParamSet<f32>,
}

impl LinearProbe {
    fn new(dim: usize, head: HeadType, seed: u64) -> LinearProbe {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        params.push(
            "probe.weight",
            truncated_normal::<f32>(&mut rng, dim, head.outputs()),
        );
        params.push("probe.bias", Tensor::zeros(1, head.outputs()));
        LinearProbe { head, params }
    }
}

impl PairModel for LinearProbe {
    type Input = Vec<f32>;

    fn head(&self) -> HeadType {
        self.head
    }

    fn params(&self) -> &ParamSet<f32> {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamSet<f32> {
        &mut self.params
    }

    fn dropout_rate(&self) -> f64 {
        0.0
    }

    fn forward<T: Real>(
        &self,
        g: &mut Graph<T>,
        p: &[Var],
        batch: &[&Vec<f32>],
        _: Option<&mut Dropout>,
    ) -> Result<Var, ModelError> {
        let dim = batch.first().map_or(0, |f| f.len());
        let x = g.constant(Tensor::from_fn(batch.len(), dim, |i, j| {
            T::of(f64::from(batch[i][j]))
        }));
        let out = g.matmul(x, p[0])?;
        let out = g.add_row(out, p[1])?;
        Ok(match self.head {
            HeadType::BinaryClassifier => out,
            HeadType::Regressor => {
                let s = g.sigmoid(out);
                g.scale(s, T::of(5.0))
            }
        })
    }
}

/// Seeded train/eval index split; tiny datasets evaluate on the training split.
fn split(n: usize, holdout: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    if n < MIN_HOLDOUT_PAIRS {
        return (idx.clone(), idx);
    }
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let k = ((holdout * n as f64).ceil() as usize).clamp(1, n - 1);
    let eval = idx.split_off(n - k);
    (idx, eval)
}

fn majority(labels: &[Label]) -> Option<f64> {
    let ones = labels.iter().filter(|l| l.class() == Some(1)).count();
    let zeros = labels.iter().filter(|l| l.class() == Some(0)).count();
    if ones + zeros != labels.len() || labels.is_empty() {
        return None;
    }
    Some(ones.max(zeros) as f64 / labels.len() as f64)
}

/// Train and evaluate a fresh linear head on each layer's `[CLS]` vector
/// of a frozen encoder. `graph` supplies similarity matrices to guided models.
pub fn probe_layers(
    model: &Encoder,
    pairs: &[SentencePair],
    graph: Option<&WordNetGraph>,
    opts: &ProbeOptions,
) -> Result<ProbeReport, ModelError> {
    if pairs.is_empty() {
        return Err(ModelError::Data("empty probing set".into()));
    }
    if model.guided() && graph.is_none() {
        return Err(ModelError::GuidedWithoutSim);
    }
    let fingerprint_before = model.params().fingerprint();
    let inputs = model.prepare(pairs, graph.filter(|_| model.guided()));
    let features = model.layer_features(&inputs)?;
    let head = model.config().head_type;
    let (train_idx, eval_idx) = split(pairs.len(), opts.holdout_fraction, opts.seed);
    let labels = |idx: &[usize]| idx.iter().map(|&i| pairs[i].label).collect::<Vec<_>>();
    let (train_labels, eval_labels) = (labels(&train_idx), labels(&eval_idx));
    let train_opts = TrainOptions {
        epochs: opts.epochs,
        batch_size: opts.batch_size,
        learning_rate: opts.learning_rate,
        fraction: 1.0,
        seed: opts.seed,
        warmup_fraction: 0.0,
    };
    let mut layers = Vec::with_capacity(features.len());
    for (l, rows) in features.iter().enumerate() {
        let pick = |idx: &[usize]| idx.iter().map(|&i| rows[i].clone()).collect::<Vec<_>>();
        let (train_x, eval_x) = (pick(&train_idx), pick(&eval_idx));
        let mut probe = LinearProbe::new(
            model.config().d_model,
            head,
            opts.seed.wrapping_add(l as u64),
        );
        fit(&mut probe, &train_x, &train_labels, &train_opts)?;
        let preds = predict(&probe, &eval_x)?;
        layers.push(LayerReport {
            layer: l + 1,
            metrics: metrics(&preds, &eval_labels, head),
        });
    }
    Ok(ProbeReport {
        train_pairs: train_idx.len(),
        eval_pairs: eval_idx.len(),
        majority_baseline: majority(&train_labels),
        fingerprint_before,
        fingerprint_after: model.params().fingerprint(),
        layers,
    })
}
