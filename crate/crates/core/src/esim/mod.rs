//! BiLSTM soft-alignment model (ESIM) whose cross-sentence alignment
//! scores can be multiplied element-wise by a word-similarity matrix.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Axis, Graph, Real, Tensor, Var};
use crate::harness::{HeadType, SentencePair};
use crate::params::{self, check_layout, CheckpointError, ParamSet};
use crate::simmatrix::{build_pair_matrix, DenseMatrix};
use crate::text::{tokenize, Vocab};
use crate::train::{Dropout, ModelError, PairModel};
use crate::wordnet::WordNetGraph;

pub const ESIM_MAGIC: &[u8; 4] = b"KGES";

fn default_dropout() -> f64 {
    0.1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EsimConfig {
    pub vocab_size: usize,
    pub embedding_dim: usize,
    /// Hidden width per direction of the input encoder.
    pub hidden_dim: usize,
    /// Hidden width per direction of the composition BiLSTM.
    pub composition_dim: usize,
    pub mlp_dim: usize,
    pub head_type: HeadType,
    #[serde(default = "default_dropout")]
    pub dropout_rate: f64,
    #[serde(default)]
    pub seed: u64,
    /// Multiply alignment scores by the cross-sentence similarity matrix.
    #[serde(default)]
    pub guided: bool,
}

impl EsimConfig {
    /// Config with dropout 0.1, seed 0 and no guidance.
    pub fn new(
        vocab_size: usize,
        embedding_dim: usize,
        hidden_dim: usize,
        composition_dim: usize,
        mlp_dim: usize,
        head_type: HeadType,
    ) -> EsimConfig {
        EsimConfig {
            vocab_size,
            embedding_dim,
            hidden_dim,
            composition_dim,
            mlp_dim,
            head_type,
            dropout_rate: default_dropout(),
            seed: 0,
            guided: false,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if [
            self.embedding_dim,
            self.hidden_dim,
            self.composition_dim,
            self.mlp_dim,
        ]
        .contains(&0)
        {
            return Err(ModelError::Config(
                "all ESIM dimensions must be positive".into(),
            ));
        }
        if self.vocab_size < 4 {
            return Err(ModelError::Config(
                "vocab_size must cover the four reserved tokens".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(ModelError::Config(format!(
                "dropout_rate {} outside [0, 1)",
                self.dropout_rate
            )));
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        let lstm = |input: usize, h: usize| 2 * (input * 4 * h + h * 4 * h + 4 * h);
        let (e, h, c, m) = (
            self.embedding_dim,
            self.hidden_dim,
            self.composition_dim,
            self.mlp_dim,
        );
        let out = self.head_type.outputs();
        self.vocab_size * e + lstm(e, h) + lstm(8 * h, c) + 8 * c * m + m + m * out + out
    }
}

/// Parameter handles of one LSTM direction; gates are packed `i, f, g, o`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LstmParams {
    /// `input × 4h`
    pub input: Var,
    /// `h × 4h`
    pub hidden: Var,
    /// `1 × 4h`
    pub bias: Var,
}

fn lstm_pass<T: Real>(
    g: &mut Graph<T>,
    x: Var,
    p: LstmParams,
    reverse: bool,
) -> Result<Var, ModelError> {
    let len = g.value(x).rows();
    let h_dim = g.value(p.hidden).rows();
    let projected = g.matmul(x, p.input)?;
    let projected = g.add_row(projected, p.bias)?;
    let mut h = g.constant(Tensor::zeros(1, h_dim));
    let mut c = g.constant(Tensor::zeros(1, h_dim));
    let mut states = Vec::with_capacity(len);
    let steps: Vec<usize> = if reverse {
        (0..len).rev().collect()
    } else {
        (0..len).collect()
    };
    for t in steps {
        let xt = g.slice(projected, Axis::Rows, t, 1)?;
        let recur = g.matmul(h, p.hidden)?;
        let z = g.add(xt, recur)?;
        let gates = g.split(z, Axis::Cols, &[h_dim; 4])?;
        let i = g.sigmoid(gates[0]);
        let f = g.sigmoid(gates[1]);
        let cand = g.tanh(gates[2]);
        let o = g.sigmoid(gates[3]);
        let keep = g.hadamard(f, c)?;
        let write = g.hadamard(i, cand)?;
        c = g.add(keep, write)?;
        let squashed = g.tanh(c);
        h = g.hadamard(o, squashed)?;
        states.push(h);
    }
    if reverse {
        states.reverse();
    }
    Ok(g.concat(&states, Axis::Rows)?)
}

/// Forward and backward LSTM states concatenated per position (`len × 2h`).
pub fn bilstm<T: Real>(
    g: &mut Graph<T>,
    x: Var,
    forward: LstmParams,
    backward: LstmParams,
) -> Result<Var, ModelError> {
    if g.value(x).rows() == 0 {
        return Err(ModelError::Data("BiLSTM input has no positions".into()));
    }
    let f = lstm_pass(g, x, forward, false)?;
    let b = lstm_pass(g, x, backward, true)?;
    Ok(g.concat(&[f, b], Axis::Cols)?)
}

/// Soft alignment between encoded sentences `ā` (`l_a × n`) and `b̄` (`l_b × n`).
#[derive(Clone, Copy, Debug)]
pub struct Alignment {
    /// Raw scores `e = ā b̄ᵀ`.
    pub e: Var,
    /// `e ⊙ S` when a similarity matrix was given.
    pub p: Option<Var>,
    /// Softmax over `j` of each row of the scores (`l_a × l_b`).
    pub weights_a: Var,
    /// Softmax over `i` of each column, stored transposed (`l_b × l_a`).
    pub weights_b: Var,
    /// `β̄_i`: `b̄` mixed for each position of `a`.
    pub aligned_a: Var,
    /// `ᾱ_j`: `ā` mixed for each position of `b`.
    pub aligned_b: Var,
}

/// Align two encoded sentences; `sim` is a constant `l_a × l_b` matrix.
pub fn align<T: Real>(
    g: &mut Graph<T>,
    a: Var,
    b: Var,
    sim: Option<Var>,
) -> Result<Alignment, ModelError> {
    let bt = g.transpose(b);
    let e = g.matmul(a, bt)?;
    let p = match sim {
        Some(s) => Some(g.hadamard(e, s)?),
        None => None,
    };
    let scores = p.unwrap_or(e);
    let weights_a = g.softmax_rows(scores, None)?;
    let scores_t = g.transpose(scores);
    let weights_b = g.softmax_rows(scores_t, None)?;
    let aligned_a = g.matmul(weights_a, b)?;
    let aligned_b = g.matmul(weights_b, a)?;
    Ok(Alignment {
        e,
        p,
        weights_a,
        weights_b,
        aligned_a,
        aligned_b,
    })
}

/// `[x; x̃; x − x̃; x ⊙ x̃]` per position.
fn enhance<T: Real>(g: &mut Graph<T>, x: Var, aligned: Var) -> Result<Var, ModelError> {
    let diff = g.sub(x, aligned)?;
    let prod = g.hadamard(x, aligned)?;
    Ok(g.concat(&[x, aligned, diff, prod], Axis::Cols)?)
}

/// `[mean; max]` over positions, as one row.
fn pool<T: Real>(g: &mut Graph<T>, x: Var) -> Result<Var, ModelError> {
    let mean = g.mean(x, Axis::Rows)?;
    let max = g.max(x, Axis::Rows)?;
    Ok(g.concat(&[mean, max], Axis::Cols)?)
}

#[derive(Clone, Debug, PartialEq)]
struct Layout {
    embeddings: usize,
    encoder: [[usize; 3]; 2],
    composition: [[usize; 3]; 2],
    mlp_w: usize,
    mlp_b: usize,
    head_w: usize,
    head_b: usize,
}

fn allocate<T: Real>(
    cfg: &EsimConfig,
    mut make: impl FnMut(bool, usize, usize) -> Tensor<T>,
) -> (ParamSet<T>, Layout) {
    // `make(is_weight, rows, cols)`
    let mut p = ParamSet::new();
    let embeddings = p.push(
        "embeddings.token",
        make(true, cfg.vocab_size, cfg.embedding_dim),
    );
    let mut lstm = |p: &mut ParamSet<T>, prefix: &str, input: usize, h: usize| {
        ["forward", "backward"].map(|dir| {
            [
                p.push(format!("{prefix}.{dir}.input"), make(true, input, 4 * h)),
                p.push(format!("{prefix}.{dir}.hidden"), make(true, h, 4 * h)),
                p.push(format!("{prefix}.{dir}.bias"), make(false, 1, 4 * h)),
            ]
        })
    };
    let encoder = lstm(&mut p, "encoder", cfg.embedding_dim, cfg.hidden_dim);
    let composition = lstm(
        &mut p,
        "composition",
        8 * cfg.hidden_dim,
        cfg.composition_dim,
    );
    let out = cfg.head_type.outputs();
    let mlp_w = p.push(
        "mlp.hidden.weight",
        make(true, 8 * cfg.composition_dim, cfg.mlp_dim),
    );
    let mlp_b = p.push("mlp.hidden.bias", make(false, 1, cfg.mlp_dim));
    let head_w = p.push("head.weight", make(true, cfg.mlp_dim, out));
    let head_b = p.push("head.bias", make(false, 1, out));
    let layout = Layout {
        embeddings,
        encoder,
        composition,
        mlp_w,
        mlp_b,
        head_w,
        head_b,
    };
    (p, layout)
}

/// Seeded Glorot-uniform weights and zero biases.
pub fn init_params<T: Real>(cfg: &EsimConfig) -> ParamSet<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    allocate(cfg, |weight, r, c| {
        if weight {
            let limit = (6.0 / (r + c) as f64).sqrt();
            Tensor::from_fn(r, c, |_, _| T::of(rng.random_range(-limit..limit)))
        } else {
            Tensor::zeros(r, c)
        }
    })
    .0
}

/// Token ids of both sentences plus the optional `l_a × l_b` similarity matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct EsimInput {
    pub a: Vec<u32>,
    pub b: Vec<u32>,
    pub sim: Option<DenseMatrix>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Esim {
    config: EsimConfig,
    vocab: Vocab,
    params: ParamSet<f32>,
    layout: Layout,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointMeta {
    model: String,
    config: EsimConfig,
    vocab: Vec<String>,
}

impl Esim {
    /// Fresh model. `config.vocab_size` must equal `vocab.len()`.
    pub fn new(config: EsimConfig, vocab: Vocab) -> Result<Esim, ModelError> {
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
        Ok(Esim {
            config,
            vocab,
            params,
            layout,
        })
    }

    pub fn config(&self) -> &EsimConfig {
        &self.config
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    pub fn guided(&self) -> bool {
        self.config.guided
    }

    pub fn set_params(&mut self, params: ParamSet<f32>) -> Result<(), CheckpointError> {
        check_layout(&self.params, &params)?;
        self.params = params;
        Ok(())
    }

    fn ids(&self, text: &str) -> Vec<u32> {
        tokenize(text)
            .iter()
            .map(|t| self.vocab.id(&t.normalized))
            .collect()
    }

    /// Map pairs to ids, computing cross-sentence matrices from `graph` when given.
    pub fn prepare(&self, pairs: &[SentencePair], graph: Option<&WordNetGraph>) -> Vec<EsimInput> {
        use rayon::prelude::*;
        pairs
            .par_iter()
            .map(|p| EsimInput {
                a: self.ids(&p.text_a),
                b: self.ids(&p.text_b),
                sim: graph.map(|g| {
                    build_pair_matrix(g, &tokenize(&p.text_a), &tokenize(&p.text_b)).matrix
                }),
            })
            .collect()
    }

    /// Overwrite embedding rows from a text file of `word v1 v2 …` lines.
    /// Returns how many vocabulary words were found; other words are skipped.
    pub fn load_embeddings(&mut self, path: impl AsRef<Path>) -> Result<usize, ModelError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)
            .map_err(|e| ModelError::Data(format!("{}: {e}", path.display())))?;
        let dim = self.config.embedding_dim;
        let table = &mut self.params.tensors_mut()[self.layout.embeddings];
        let mut found = 0;
        for (n, line) in text.lines().enumerate() {
            let mut fields = line.split_whitespace();
            let Some(word) = fields.next() else { continue };
            let values = fields
                .map(str::parse::<f32>)
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| ModelError::Data(format!("{}:{}: {e}", path.display(), n + 1)))?;
            if values.len() != dim {
                return Err(ModelError::Data(format!(
                    "{}:{}: {} values, embedding_dim is {dim}",
                    path.display(),
                    n + 1,
                    values.len()
                )));
            }
            let key = word.to_lowercase();
            if !self.vocab.contains(&key) {
                continue;
            }
            let row = self.vocab.id(&key) as usize;
            for (j, v) in values.into_iter().enumerate() {
                table.set(row, j, v);
            }
            found += 1;
        }
        Ok(found)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let meta = CheckpointMeta {
            model: "esim".into(),
            config: self.config.clone(),
            vocab: self.vocab.words().to_vec(),
        };
        let json = serde_json::to_string(&meta).expect("config serializes");
        params::encode_checkpoint(ESIM_MAGIC, &json, &self.params)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Esim, ModelError> {
        let (json, loaded) = params::decode_checkpoint(bytes, ESIM_MAGIC)?;
        let meta: CheckpointMeta =
            serde_json::from_str(&json).map_err(|e| CheckpointError::Config(e.to_string()))?;
        if meta.model != "esim" {
            return Err(CheckpointError::Config(format!("model kind {:?}", meta.model)).into());
        }
        let mut model = Esim::new(meta.config, Vocab::from_tokens(meta.vocab))?;
        model.set_params(loaded)?;
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ModelError> {
        Ok(params::write_bytes(path.as_ref(), &self.to_bytes())?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Esim, ModelError> {
        Esim::from_bytes(&params::read_bytes(path.as_ref())?)
    }

    fn lstm(p: &[Var], idx: [usize; 3]) -> LstmParams {
        LstmParams {
            input: p[idx[0]],
            hidden: p[idx[1]],
            bias: p[idx[2]],
        }
    }

    /// Pooled `[mean_a; max_a; mean_b; max_b]` row for one pair.
    fn pair_features<T: Real>(
        &self,
        g: &mut Graph<T>,
        p: &[Var],
        index: usize,
        input: &EsimInput,
        mut dropout: Option<&mut Dropout>,
    ) -> Result<Var, ModelError> {
        let lay = &self.layout;
        if input.a.is_empty() || input.b.is_empty() {
            return Err(ModelError::Data(format!(
                "input {index} has an empty sentence"
            )));
        }
        let sim = if self.config.guided {
            let s = input.sim.as_ref().ok_or(ModelError::GuidedWithoutSim)?;
            let expected = (input.a.len(), input.b.len());
            if (s.rows, s.cols) != expected {
                return Err(ModelError::SimShape {
                    index,
                    expected,
                    found: (s.rows, s.cols),
                });
            }
            Some(g.constant(Tensor::from_fn(s.rows, s.cols, |i, j| {
                T::of(f64::from(s.get(i, j)))
            })))
        } else {
            None
        };
        let mut embed = |g: &mut Graph<T>, ids: &[u32]| -> Result<Var, ModelError> {
            let ids: Vec<usize> = ids.iter().map(|&i| i as usize).collect();
            let x = g.embedding(p[lay.embeddings], &ids)?;
            Ok(match dropout.as_deref_mut() {
                Some(d) => d.apply(g, x)?,
                None => x,
            })
        };
        let xa = embed(g, &input.a)?;
        let xb = embed(g, &input.b)?;
        let (fw, bw) = (Self::lstm(p, lay.encoder[0]), Self::lstm(p, lay.encoder[1]));
        let a = bilstm(g, xa, fw, bw)?;
        let b = bilstm(g, xb, fw, bw)?;
        let al = align(g, a, b, sim)?;
        let ma = enhance(g, a, al.aligned_a)?;
        let mb = enhance(g, b, al.aligned_b)?;
        let (fw, bw) = (
            Self::lstm(p, lay.composition[0]),
            Self::lstm(p, lay.composition[1]),
        );
        let va = bilstm(g, ma, fw, bw)?;
        let vb = bilstm(g, mb, fw, bw)?;
        let pa = pool(g, va)?;
        let pb = pool(g, vb)?;
        Ok(g.concat(&[pa, pb], Axis::Cols)?)
    }
}

impl PairModel for Esim {
    type Input = EsimInput;

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
        batch: &[&EsimInput],
        mut dropout: Option<&mut Dropout>,
    ) -> Result<Var, ModelError> {
        let lay = &self.layout;
        let rows = batch
            .iter()
            .enumerate()
            .map(|(i, input)| self.pair_features(g, p, i, input, dropout.as_deref_mut()))
            .collect::<Result<Vec<_>, _>>()?;
        let v = g.concat(&rows, Axis::Rows)?;
        let hidden = g.matmul(v, p[lay.mlp_w])?;
        let hidden = g.add_row(hidden, p[lay.mlp_b])?;
        let mut hidden = g.tanh(hidden);
        if let Some(d) = dropout {
            hidden = d.apply(g, hidden)?;
        }
        let out = g.matmul(hidden, p[lay.head_w])?;
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
