//! BERT-style Transformer encoder whose attention scores can be multiplied
//! element-wise by a word-similarity matrix at chosen layers.

use std::collections::BTreeSet;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Axis, Graph, Real, Tensor, Var, MASK_VALUE};
use crate::harness::{HeadType, SentencePair};
use crate::params::{self, check_layout, truncated_normal, CheckpointError, ParamSet};
use crate::simmatrix::{build_full_matrix, FullAttentionMatrix};
use crate::text::{encode_pair, tokenize, EncodedPair, Vocab};
use crate::train::{Dropout, ModelError, PairModel};
use crate::wordnet::WordNetGraph;

pub const ENCODER_MAGIC: &[u8; 4] = b"KGAT";

fn default_knowledge_layers() -> BTreeSet<usize> {
    BTreeSet::from([1])
}

fn default_dropout() -> f64 {
    0.1
}

fn default_ln_eps() -> f64 {
    1e-12
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncoderConfig {
    pub num_layers: usize,
    pub num_heads: usize,
    pub d_model: usize,
    /// Per-head query/key width; `d_model / num_heads` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d_k: Option<usize>,
    /// Per-head value width; `d_model / num_heads` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d_v: Option<usize>,
    pub d_ff: usize,
    pub max_len: usize,
    pub vocab_size: usize,
    /// 1-based layers whose attention scores are multiplied by S.
    #[serde(default = "default_knowledge_layers")]
    pub knowledge_layers: BTreeSet<usize>,
    pub head_type: HeadType,
    #[serde(default = "default_dropout")]
    pub dropout_rate: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_ln_eps")]
    pub layer_norm_eps: f64,
}

impl EncoderConfig {
    /// Config with `d_k = d_v = d_model / num_heads`, knowledge at layer 1,
    /// dropout 0.1 and seed 0.
    pub fn new(
        num_layers: usize,
        num_heads: usize,
        d_model: usize,
        d_ff: usize,
        max_len: usize,
        vocab_size: usize,
        head_type: HeadType,
    ) -> EncoderConfig {
        EncoderConfig {
            num_layers,
            num_heads,
            d_model,
            d_k: None,
            d_v: None,
            d_ff,
            max_len,
            vocab_size,
            knowledge_layers: default_knowledge_layers(),
            head_type,
            dropout_rate: default_dropout(),
            seed: 0,
            layer_norm_eps: default_ln_eps(),
        }
    }

    pub fn d_k(&self) -> usize {
        self.d_k.unwrap_or(self.d_model / self.num_heads.max(1))
    }

    pub fn d_v(&self) -> usize {
        self.d_v.unwrap_or(self.d_model / self.num_heads.max(1))
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: String| Err(ModelError::Config(m));
        if self.num_layers == 0 || self.num_heads == 0 || self.d_model == 0 || self.d_ff == 0 {
            return bad("num_layers, num_heads, d_model and d_ff must be positive".into());
        }
        if self.d_k() == 0 || self.d_v() == 0 {
            return bad(format!(
                "d_model {} too small for {} heads",
                self.d_model, self.num_heads
            ));
        }
        if self.max_len < 4 {
            return bad(format!("max_len must be at least 4, got {}", self.max_len));
        }
        if self.vocab_size < 4 {
            return bad("vocab_size must cover the four reserved tokens".into());
        }
        if let Some(&l) = self
            .knowledge_layers
            .iter()
            .find(|&&l| l == 0 || l > self.num_layers)
        {
            return bad(format!(
                "knowledge layer {l} outside 1..={}",
                self.num_layers
            ));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return bad(format!("dropout_rate {} outside [0, 1)", self.dropout_rate));
        }
        Ok(())
    }

    /// Number of scalar parameters, including the pooler and the output head.
    pub fn param_count(&self) -> usize {
        let (d, h, dk, dv, ff) = (
            self.d_model,
            self.num_heads,
            self.d_k(),
            self.d_v(),
            self.d_ff,
        );
        let embeddings = (self.vocab_size + self.max_len + 2) * d + 2 * d;
        let attention = 2 * (d * h * dk + h * dk) + (d * h * dv + h * dv) + (h * dv * d + d);
        let feedforward = d * ff + ff + ff * d + d;
        let layer = attention + 2 * d + feedforward + 2 * d;
        let pooler = d * d + d;
        let out = self.head_type.outputs();
        embeddings + self.num_layers * layer + pooler + d * out + out
    }
}

#[derive(Clone, Debug, PartialEq)]
struct LayerIdx {
    wq: usize,
    bq: usize,
    wk: usize,
    bk: usize,
    wv: usize,
    bv: usize,
    wo: usize,
    bo: usize,
    ln1_g: usize,
    ln1_b: usize,
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
    ln2_g: usize,
    ln2_b: usize,
}

#[derive(Clone, Debug, PartialEq)]
struct Layout {
    tok: usize,
    pos: usize,
    seg: usize,
    emb_g: usize,
    emb_b: usize,
    layers: Vec<LayerIdx>,
    pool_w: usize,
    pool_b: usize,
    head_w: usize,
    head_b: usize,
}

enum Init {
    Weight,
    Zeros,
    Ones,
}

fn allocate<T: Real>(
    cfg: &EncoderConfig,
    mut make: impl FnMut(Init, usize, usize) -> Tensor<T>,
) -> (ParamSet<T>, Layout) {
    let mut p = ParamSet::new();
    let (d, h, dk, dv, ff) = (cfg.d_model, cfg.num_heads, cfg.d_k(), cfg.d_v(), cfg.d_ff);
    let mut add = |p: &mut ParamSet<T>, name: String, init: Init, r: usize, c: usize| {
        p.push(name, make(init, r, c))
    };
    let tok = add(
        &mut p,
        "embeddings.token".into(),
        Init::Weight,
        cfg.vocab_size,
        d,
    );
    let pos = add(
        &mut p,
        "embeddings.position".into(),
        Init::Weight,
        cfg.max_len,
        d,
    );
    let seg = add(&mut p, "embeddings.segment".into(), Init::Weight, 2, d);
    let emb_g = add(&mut p, "embeddings.norm.gamma".into(), Init::Ones, 1, d);
    let emb_b = add(&mut p, "embeddings.norm.beta".into(), Init::Zeros, 1, d);
    let mut layers = Vec::with_capacity(cfg.num_layers);
    for l in 1..=cfg.num_layers {
        let n = |s: &str| format!("layer{l}.{s}");
        layers.push(LayerIdx {
            wq: add(&mut p, n("attention.query.weight"), Init::Weight, d, h * dk),
            bq: add(&mut p, n("attention.query.bias"), Init::Zeros, 1, h * dk),
            wk: add(&mut p, n("attention.key.weight"), Init::Weight, d, h * dk),
            bk: add(&mut p, n("attention.key.bias"), Init::Zeros, 1, h * dk),
            wv: add(&mut p, n("attention.value.weight"), Init::Weight, d, h * dv),
            bv: add(&mut p, n("attention.value.bias"), Init::Zeros, 1, h * dv),
            wo: add(
                &mut p,
                n("attention.output.weight"),
                Init::Weight,
                h * dv,
                d,
            ),
            bo: add(&mut p, n("attention.output.bias"), Init::Zeros, 1, d),
            ln1_g: add(&mut p, n("attention.norm.gamma"), Init::Ones, 1, d),
            ln1_b: add(&mut p, n("attention.norm.beta"), Init::Zeros, 1, d),
            w1: add(&mut p, n("ffn.inner.weight"), Init::Weight, d, ff),
            b1: add(&mut p, n("ffn.inner.bias"), Init::Zeros, 1, ff),
            w2: add(&mut p, n("ffn.outer.weight"), Init::Weight, ff, d),
            b2: add(&mut p, n("ffn.outer.bias"), Init::Zeros, 1, d),
            ln2_g: add(&mut p, n("ffn.norm.gamma"), Init::Ones, 1, d),
            ln2_b: add(&mut p, n("ffn.norm.beta"), Init::Zeros, 1, d),
        });
    }
    let pool_w = add(&mut p, "pooler.weight".into(), Init::Weight, d, d);
    let pool_b = add(&mut p, "pooler.bias".into(), Init::Zeros, 1, d);
    let out = cfg.head_type.outputs();
    let head_w = add(&mut p, "head.weight".into(), Init::Weight, d, out);
    let head_b = add(&mut p, "head.bias".into(), Init::Zeros, 1, out);
    let layout = Layout {
        tok,
        pos,
        seg,
        emb_g,
        emb_b,
        layers,
        pool_w,
        pool_b,
        head_w,
        head_b,
    };
    (p, layout)
}

/// Seeded initial parameters: truncated normal weights, zero biases, unit
/// layer-norm gains. The `f32` and `f64` sets agree up to rounding.
pub fn init_params<T: Real>(cfg: &EncoderConfig) -> ParamSet<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    allocate(cfg, |init, r, c| match init {
        Init::Weight => truncated_normal::<f64>(&mut rng, r, c).cast(),
        Init::Zeros => Tensor::zeros(r, c),
        Init::Ones => Tensor::ones(r, c),
    })
    .0
}

/// One encoded pair plus its full attention-sized similarity matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderInput {
    pub encoded: EncodedPair,
    pub sim: Option<FullAttentionMatrix>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Encoder {
    config: EncoderConfig,
    vocab: Vocab,
    guided: bool,
    params: ParamSet<f32>,
    layout: Layout,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointMeta {
    model: String,
    guided: bool,
    config: EncoderConfig,
    vocab: Vec<String>,
}

impl Encoder {
    /// Fresh model. `config.vocab_size` must equal `vocab.len()`.
    pub fn new(config: EncoderConfig, vocab: Vocab, guided: bool) -> Result<Encoder, ModelError> {
        config.validate()?;
        if config.vocab_size != vocab.len() {
            return Err(ModelError::Config(format!(
                "vocab_size {} but vocabulary has {} entries",
                config.vocab_size,
                vocab.len()
            )));
        }
        let params = init_params(&config);
        let layout = allocate(&config, |_, r, c| Tensor::<f32>::zeros(r, c)).1;
        Ok(Encoder {
            config,
            vocab,
            guided,
            params,
            layout,
        })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    pub fn guided(&self) -> bool {
        self.guided
    }

    /// Replace all parameters; names and shapes must match this model.
    pub fn set_params(&mut self, params: ParamSet<f32>) -> Result<(), CheckpointError> {
        check_layout(&self.params, &params)?;
        self.params = params;
        Ok(())
    }

    pub fn encode(&self, text_a: &str, text_b: &str) -> EncodedPair {
        encode_pair(
            &self.vocab,
            &tokenize(text_a),
            &tokenize(text_b),
            self.config.max_len,
        )
        .expect("max_len validated")
    }

    /// Encode pairs, computing similarity matrices from `graph` when given.
    pub fn prepare(
        &self,
        pairs: &[SentencePair],
        graph: Option<&WordNetGraph>,
    ) -> Vec<EncoderInput> {
        use rayon::prelude::*;
        pairs
            .par_iter()
            .map(|p| {
                let encoded = self.encode(&p.text_a, &p.text_b);
                let sim = graph.map(|g| build_full_matrix(g, &encoded));
                EncoderInput { encoded, sim }
            })
            .collect()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let meta = CheckpointMeta {
            model: "encoder".into(),
            guided: self.guided,
            config: self.config.clone(),
            vocab: self.vocab.words().to_vec(),
        };
        let json = serde_json::to_string(&meta).expect("config serializes");
        params::encode_checkpoint(ENCODER_MAGIC, &json, &self.params)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Encoder, ModelError> {
        let (json, loaded) = params::decode_checkpoint(bytes, ENCODER_MAGIC)?;
        let meta: CheckpointMeta =
            serde_json::from_str(&json).map_err(|e| CheckpointError::Config(e.to_string()))?;
        if meta.model != "encoder" {
            return Err(CheckpointError::Config(format!("model kind {:?}", meta.model)).into());
        }
        let mut model = Encoder::new(meta.config, Vocab::from_tokens(meta.vocab), meta.guided)?;
        model.set_params(loaded)?;
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ModelError> {
        Ok(params::write_bytes(path.as_ref(), &self.to_bytes())?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Encoder, ModelError> {
        Encoder::from_bytes(&params::read_bytes(path.as_ref())?)
    }

    fn check_inputs(&self, batch: &[&EncoderInput]) -> Result<(), ModelError> {
        let t = self.config.max_len;
        for (index, input) in batch.iter().enumerate() {
            if input.encoded.max_len() != t {
                return Err(ModelError::Data(format!(
                    "input {index} has length {}, model expects {t}",
                    input.encoded.max_len()
                )));
            }
            if self.uses_sim() {
                let sim = input.sim.as_ref().ok_or(ModelError::GuidedWithoutSim)?;
                if sim.size() != t {
                    return Err(ModelError::SimShape {
                        index,
                        expected: (t, t),
                        found: (sim.size(), sim.size()),
                    });
                }
            }
        }
        Ok(())
    }

    fn uses_sim(&self) -> bool {
        self.guided && !self.config.knowledge_layers.is_empty()
    }

    /// Embeddings and every layer; returns the final hidden states
    /// (`batch·T × d_model`) and each layer's `[CLS]` rows (`batch × d_model`).
    pub fn encode_layers<T: Real>(
        &self,
        g: &mut Graph<T>,
        p: &[Var],
        batch: &[&EncoderInput],
        mut dropout: Option<&mut Dropout>,
    ) -> Result<(Var, Vec<Var>), ModelError> {
        self.check_inputs(batch)?;
        let cfg = &self.config;
        let lay = &self.layout;
        let t = cfg.max_len;
        let (h, dk, dv) = (cfg.num_heads, cfg.d_k(), cfg.d_v());
        let eps = cfg.layer_norm_eps;

        let ids: Vec<usize> = batch
            .iter()
            .flat_map(|b| b.encoded.ids.iter().map(|&i| i as usize))
            .collect();
        let positions: Vec<usize> = (0..batch.len()).flat_map(|_| 0..t).collect();
        let segments: Vec<usize> = batch
            .iter()
            .flat_map(|b| b.encoded.segment_ids.iter().map(|&s| s as usize))
            .collect();
        let tok = g.embedding(p[lay.tok], &ids)?;
        let pos = g.embedding(p[lay.pos], &positions)?;
        let seg = g.embedding(p[lay.seg], &segments)?;
        let x = g.add(tok, pos)?;
        let x = g.add(x, seg)?;
        let mut x = g.layer_norm(x, Some(p[lay.emb_g]), Some(p[lay.emb_b]), eps)?;

        let masks: Vec<Tensor<T>> = batch
            .iter()
            .map(|b| {
                let pad = &b.encoded.pad_mask;
                Tensor::from_fn(t, t, |_, j| {
                    if pad[j] == 1 {
                        T::zero()
                    } else {
                        T::of(MASK_VALUE)
                    }
                })
            })
            .collect();
        let sims: Vec<Option<Var>> = batch
            .iter()
            .map(|b| match (&b.sim, self.uses_sim()) {
                (Some(s), true) => {
                    let m = s.matrix();
                    Some(g.constant(Tensor::from_fn(t, t, |i, j| T::of(f64::from(m.get(i, j))))))
                }
                _ => None,
            })
            .collect();
        let scale = T::of(1.0 / (dk as f64).sqrt());

        let mut cls = Vec::with_capacity(cfg.num_layers);
        for (li, layer) in lay.layers.iter().enumerate() {
            let guided_here = self.uses_sim() && cfg.knowledge_layers.contains(&(li + 1));
            let q = g.matmul(x, p[layer.wq])?;
            let q = g.add_row(q, p[layer.bq])?;
            let k = g.matmul(x, p[layer.wk])?;
            let k = g.add_row(k, p[layer.bk])?;
            let v = g.matmul(x, p[layer.wv])?;
            let v = g.add_row(v, p[layer.bv])?;
            let mut contexts = Vec::with_capacity(batch.len());
            for (b, mask) in masks.iter().enumerate() {
                let qb = g.slice(q, Axis::Rows, b * t, t)?;
                let kb = g.slice(k, Axis::Rows, b * t, t)?;
                let vb = g.slice(v, Axis::Rows, b * t, t)?;
                let mut heads = Vec::with_capacity(h);
                for head in 0..h {
                    let qh = g.slice(qb, Axis::Cols, head * dk, dk)?;
                    let kh = g.slice(kb, Axis::Cols, head * dk, dk)?;
                    let vh = g.slice(vb, Axis::Cols, head * dv, dv)?;
                    let kt = g.transpose(kh);
                    let mut scores = g.matmul(qh, kt)?;
                    if guided_here {
                        let s = sims[b].expect("checked by check_inputs");
                        scores = g.hadamard(scores, s)?;
                    }
                    let scores = g.scale(scores, scale);
                    let mut weights = g.softmax_rows(scores, Some(mask))?;
                    if let Some(d) = dropout.as_deref_mut() {
                        weights = d.apply(g, weights)?;
                    }
                    heads.push(g.matmul(weights, vh)?);
                }
                contexts.push(g.concat(&heads, Axis::Cols)?);
            }
            let ctx = g.concat(&contexts, Axis::Rows)?;
            let attn = g.matmul(ctx, p[layer.wo])?;
            let attn = g.add_row(attn, p[layer.bo])?;
            let res = g.add(x, attn)?;
            x = g.layer_norm(res, Some(p[layer.ln1_g]), Some(p[layer.ln1_b]), eps)?;

            let inner = g.matmul(x, p[layer.w1])?;
            let inner = g.add_row(inner, p[layer.b1])?;
            let mut inner = g.relu(inner);
            if let Some(d) = dropout.as_deref_mut() {
                inner = d.apply(g, inner)?;
            }
            let outer = g.matmul(inner, p[layer.w2])?;
            let outer = g.add_row(outer, p[layer.b2])?;
            let res = g.add(x, outer)?;
            x = g.layer_norm(res, Some(p[layer.ln2_g]), Some(p[layer.ln2_b]), eps)?;

            let cls_rows: Vec<usize> = (0..batch.len()).map(|b| b * t).collect();
            cls.push(g.embedding(x, &cls_rows)?);
        }
        Ok((x, cls))
    }

    /// Per-layer `[CLS]` vectors for each input, without gradients.
    pub fn layer_features(
        &self,
        inputs: &[EncoderInput],
    ) -> Result<Vec<Vec<Vec<f32>>>, ModelError> {
        use rayon::prelude::*;
        let chunks: Vec<&[EncoderInput]> = inputs.chunks(32).collect();
        let per_chunk = chunks
            .par_iter()
            .map(|chunk| {
                let batch: Vec<&EncoderInput> = chunk.iter().collect();
                let mut g = Graph::<f32>::new();
                let vars = self.params.register(&mut g, false);
                let (_, cls) = self.encode_layers(&mut g, &vars, &batch, None)?;
                // layers × batch × d
                Ok(cls
                    .iter()
                    .map(|&c| {
                        (0..batch.len())
                            .map(|i| g.value(c).row(i).to_vec())
                            .collect::<Vec<_>>()
                    })
                    .collect::<Vec<_>>())
            })
            .collect::<Result<Vec<_>, ModelError>>()?;
        let mut out = vec![Vec::with_capacity(inputs.len()); self.config.num_layers];
        for chunk in per_chunk {
            for (layer, rows) in chunk.into_iter().enumerate() {
                out[layer].extend(rows);
            }
        }
        Ok(out)
    }
}

impl PairModel for Encoder {
    type Input = EncoderInput;

    fn head(&self) -> HeadType {
        self.config.head_type
    }

    fn params(&self) -> &ParamSet<f32> {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamSet<f32> {
        &mut self.params
    }

    fn dropout_rate(&self) -> f64 {
        self.config.dropout_rate
    }

    fn forward<T: Real>(
        &self,
        g: &mut Graph<T>,
        p: &[Var],
        batch: &[&EncoderInput],
        dropout: Option<&mut Dropout>,
    ) -> Result<Var, ModelError> {
        let lay = &self.layout;
        let (_, cls) = self.encode_layers(g, p, batch, dropout)?;
        let last = *cls.last().expect("at least one layer");
        let pooled = g.matmul(last, p[lay.pool_w])?;
        let pooled = g.add_row(pooled, p[lay.pool_b])?;
        let pooled = g.tanh(pooled);
        let out = g.matmul(pooled, p[lay.head_w])?;
        let out = g.add_row(out, p[lay.head_b])?;
        Ok(match self.config.head_type {
            HeadType::BinaryClassifier => out,
            HeadType::Regressor => {
                let s = g.sigmoid(out);
                g.scale(s, T::of(5.0))
            }
        })
    }
}

#[cfg(test)]
mod tests;
