use std::path::Path;

use kgat::encoder::{Encoder, EncoderInput, ENCODER_MAGIC};
use kgat::esim::{Esim, EsimInput, ESIM_MAGIC};
use kgat::harness::{HeadType, Label, SentencePair};
use kgat::params::{decode_checkpoint, read_bytes};
use kgat::simmatrix::{DenseMatrix, FullAttentionMatrix};
use kgat::text::{build_vocab, tokenize, Token, Vocab};
use kgat::train::{fit, predict, History, ModelError, TrainOptions};
use kgat::wordnet::WordNetGraph;

use crate::config::{ModelKind, RunConfig};
use crate::failure::{data, usage, Failure};

/// Either trainable model behind one interface.
pub enum Model {
    Encoder(Encoder),
    Esim(Esim),
}

pub enum Inputs {
    Encoder(Vec<EncoderInput>),
    Esim(Vec<EsimInput>),
}

impl Inputs {
    pub fn len(&self) -> usize {
        match self {
            Inputs::Encoder(v) => v.len(),
            Inputs::Esim(v) => v.len(),
        }
    }
}

pub fn vocab_of(pairs: &[SentencePair], min_freq: usize) -> Vocab {
    let corpus: Vec<Vec<Token>> = pairs
        .iter()
        .flat_map(|p| [tokenize(&p.text_a), tokenize(&p.text_b)])
        .collect();
    build_vocab(corpus.iter().map(Vec::as_slice), min_freq)
}

impl Model {
    /// A fresh model from the config section of `kind`; `seed` overrides the config seed.
    pub fn build(
        run: &RunConfig,
        kind: ModelKind,
        vocab: Vocab,
        guided: bool,
        seed: Option<u64>,
    ) -> Result<Model, Failure> {
        match kind {
            ModelKind::Encoder => {
                let mut cfg = run.encoder_config(vocab.len())?;
                cfg.seed = seed.unwrap_or(cfg.seed);
                Ok(Model::Encoder(Encoder::new(cfg, vocab, guided)?))
            }
            ModelKind::Esim => {
                let mut cfg = run.esim_config(vocab.len())?;
                cfg.seed = seed.unwrap_or(cfg.seed);
                cfg.guided |= guided;
                Ok(Model::Esim(Esim::new(cfg, vocab)?))
            }
        }
    }

    /// Load a checkpoint, telling the two formats apart by magic.
    pub fn load(path: &Path) -> Result<Model, Failure> {
        let bytes = read_bytes(path)?;
        match bytes.get(..4) {
            Some(m) if m == ESIM_MAGIC => Ok(Model::Esim(Esim::from_bytes(&bytes)?)),
            _ => Ok(Model::Encoder(Encoder::from_bytes(&bytes)?)),
        }
    }

    /// Load a checkpoint's tensors into a model built from `run` instead of
    /// the checkpoint's own config. Shape disagreements name the tensor.
    pub fn load_into(path: &Path, run: &RunConfig) -> Result<Model, Failure> {
        let bytes = read_bytes(path)?;
        let kind = if bytes.get(..4) == Some(ESIM_MAGIC.as_slice()) {
            ModelKind::Esim
        } else {
            ModelKind::Encoder
        };
        let magic = match kind {
            ModelKind::Encoder => ENCODER_MAGIC,
            ModelKind::Esim => ESIM_MAGIC,
        };
        let (json, params) = decode_checkpoint(&bytes, magic)?;
        let meta: serde_json::Value =
            serde_json::from_str(&json).map_err(|e| data(format!("{}: {e}", path.display())))?;
        let words: Vec<String> = serde_json::from_value(meta["vocab"].clone())
            .map_err(|e| data(format!("{}: vocab: {e}", path.display())))?;
        let guided = meta["guided"]
            .as_bool()
            .or_else(|| meta["config"]["guided"].as_bool())
            .unwrap_or(false);
        let mut model = Model::build(
            run,
            run.kind(Some(kind))?,
            Vocab::from_tokens(words),
            guided,
            None,
        )?;
        match &mut model {
            Model::Encoder(m) => m.set_params(params)?,
            Model::Esim(m) => m.set_params(params)?,
        }
        Ok(model)
    }

    pub fn guided(&self) -> bool {
        match self {
            Model::Encoder(m) => m.guided(),
            Model::Esim(m) => m.guided(),
        }
    }

    pub fn head(&self) -> HeadType {
        match self {
            Model::Encoder(m) => m.config().head_type,
            Model::Esim(m) => m.config().head_type,
        }
    }

    pub fn prepare(&self, pairs: &[SentencePair], graph: Option<&WordNetGraph>) -> Inputs {
        let graph = graph.filter(|_| self.guided());
        match self {
            Model::Encoder(m) => Inputs::Encoder(m.prepare(pairs, graph)),
            Model::Esim(m) => Inputs::Esim(m.prepare(pairs, graph)),
        }
    }

    /// Inputs whose similarity matrices come from a cache built on the same file.
    pub fn prepare_cached(
        &self,
        pairs: &[SentencePair],
        cache: Vec<DenseMatrix>,
    ) -> Result<Inputs, Failure> {
        if cache.len() != pairs.len() {
            return Err(data(format!(
                "similarity cache holds {} matrices for {} pairs",
                cache.len(),
                pairs.len()
            )));
        }
        Ok(match self.prepare(pairs, None) {
            Inputs::Encoder(mut v) => {
                for (input, m) in v.iter_mut().zip(cache) {
                    input.sim = Some(FullAttentionMatrix(m));
                }
                Inputs::Encoder(v)
            }
            Inputs::Esim(mut v) => {
                for (input, m) in v.iter_mut().zip(cache) {
                    input.sim = Some(m);
                }
                Inputs::Esim(v)
            }
        })
    }

    pub fn fit(
        &mut self,
        inputs: &Inputs,
        labels: &[Label],
        opts: &TrainOptions,
    ) -> Result<History, ModelError> {
        match (self, inputs) {
            (Model::Encoder(m), Inputs::Encoder(x)) => fit(m, x, labels, opts),
            (Model::Esim(m), Inputs::Esim(x)) => fit(m, x, labels, opts),
            _ => unreachable!("inputs prepared by another model kind"),
        }
    }

    pub fn predict(&self, inputs: &Inputs) -> Result<Vec<Label>, ModelError> {
        match (self, inputs) {
            (Model::Encoder(m), Inputs::Encoder(x)) => predict(m, x),
            (Model::Esim(m), Inputs::Esim(x)) => predict(m, x),
            _ => unreachable!("inputs prepared by another model kind"),
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), Failure> {
        match self {
            Model::Encoder(m) => m.save(path)?,
            Model::Esim(m) => m.save(path)?,
        }
        Ok(())
    }

    pub fn encoder(&self) -> Result<&Encoder, Failure> {
        match self {
            Model::Encoder(m) => Ok(m),
            Model::Esim(_) => Err(usage("layer probing needs an encoder checkpoint")),
        }
    }
}
