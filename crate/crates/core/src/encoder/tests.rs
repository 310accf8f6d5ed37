use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::autodiff::grad_check;
use crate::harness::Label;
use crate::simmatrix::DenseMatrix;
use crate::text::Token;
use crate::train::{fit, predict, TrainOptions};

fn words(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("w{i}")).collect()
}

fn sentence(rng: &mut impl Rng, vocab_words: usize, len: usize) -> Vec<Token> {
    let text: Vec<String> = (0..len)
        .map(|_| format!("w{}", rng.random_range(0..vocab_words + 2)))
        .collect();
    tokenize(&text.join(" "))
}

fn random_input(rng: &mut impl Rng, vocab: &Vocab, max_len: usize) -> EncoderInput {
    let la = rng.random_range(0..max_len - 2);
    let lb = rng.random_range(0..max_len - 2);
    let n = vocab.words().len();
    let encoded =
        encode_pair(vocab, &sentence(rng, n, la), &sentence(rng, n, lb), max_len).unwrap();
    let mut m = DenseMatrix::filled(max_len, max_len, 1.0);
    for i in 0..max_len {
        for j in 0..max_len {
            if encoded.pad_mask[i] == 1 && encoded.pad_mask[j] == 1 && !encoded.tokens[i].is_special
            {
                m.set(i, j, rng.random_range(0.0..1.0));
            }
        }
    }
    EncoderInput {
        encoded,
        sim: Some(FullAttentionMatrix(m)),
    }
}

fn with_ones(input: &EncoderInput) -> EncoderInput {
    EncoderInput {
        encoded: input.encoded.clone(),
        sim: Some(FullAttentionMatrix::ones(input.encoded.max_len())),
    }
}

fn small_config(rng: &mut impl Rng, vocab: usize) -> EncoderConfig {
    let heads = rng.random_range(1..4);
    let mut cfg = EncoderConfig::new(
        rng.random_range(1..4),
        heads,
        heads * rng.random_range(1..4),
        rng.random_range(2..9),
        rng.random_range(4..9),
        vocab,
        if rng.random_bool(0.5) {
            HeadType::BinaryClassifier
        } else {
            HeadType::Regressor
        },
    );
    cfg.seed = rng.random();
    cfg.knowledge_layers = (1..=cfg.num_layers)
        .filter(|_| rng.random_bool(0.6))
        .collect();
    cfg
}

#[test]
fn bert_base_parameter_count() {
    // 23,837,184 embedding + 12 × 7,087,872 layer + 590,592 pooler
    // + 1,538 classifier parameters, counted independently by hand.
    let cfg = EncoderConfig::new(12, 12, 768, 3072, 512, 30522, HeadType::BinaryClassifier);
    assert_eq!(cfg.param_count(), 109_483_778);
}

#[test]
fn parameter_count_matches_allocation() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..20 {
        let cfg = small_config(&mut rng, 9);
        assert_eq!(init_params::<f32>(&cfg).count(), cfg.param_count());
    }
}

#[test]
fn config_validation() {
    let mut cfg = EncoderConfig::new(2, 2, 8, 16, 8, 10, HeadType::BinaryClassifier);
    cfg.validate().unwrap();
    cfg.knowledge_layers = BTreeSet::from([3]);
    assert!(cfg.validate().is_err());
    let cfg = EncoderConfig::new(1, 4, 2, 4, 8, 10, HeadType::BinaryClassifier);
    assert!(cfg.validate().is_err());
}

#[test]
fn ones_similarity_matches_unguided_exactly() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let vocab = Vocab::from_tokens(words(6));
    for _ in 0..20 {
        let mut cfg = small_config(&mut rng, vocab.len());
        cfg.knowledge_layers = (1..=cfg.num_layers).collect();
        let guided = Encoder::new(cfg.clone(), vocab.clone(), true).unwrap();
        let plain = Encoder::new(cfg.clone(), vocab.clone(), false).unwrap();
        let inputs: Vec<EncoderInput> = (0..3)
            .map(|_| with_ones(&random_input(&mut rng, &vocab, cfg.max_len)))
            .collect();
        let batch: Vec<&EncoderInput> = inputs.iter().collect();
        let p64 = guided.params().cast::<f64>();
        let a = guided.outputs(&p64, &batch).unwrap();
        let b = plain.outputs(&p64, &batch).unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn empty_knowledge_layers_equal_layer_one_with_ones() {
    let vocab = Vocab::from_tokens(words(5));
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut cfg = EncoderConfig::new(2, 2, 4, 8, 7, vocab.len(), HeadType::BinaryClassifier);
    let input = with_ones(&random_input(&mut rng, &vocab, 7));
    let one = Encoder::new(cfg.clone(), vocab.clone(), true).unwrap();
    cfg.knowledge_layers.clear();
    let none = Encoder::new(cfg, vocab, true).unwrap();
    let p = one.params().cast::<f64>();
    assert_eq!(
        one.outputs(&p, &[&input]).unwrap(),
        none.outputs(&p, &[&input]).unwrap()
    );
}

#[test]
fn guided_without_similarity_is_an_error() {
    let vocab = Vocab::from_tokens(words(3));
    let cfg = EncoderConfig::new(1, 1, 2, 2, 6, vocab.len(), HeadType::BinaryClassifier);
    let model = Encoder::new(cfg, vocab.clone(), true).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut input = random_input(&mut rng, &vocab, 6);
    input.sim = None;
    assert!(matches!(
        model.outputs(model.params(), &[&input]),
        Err(ModelError::GuidedWithoutSim)
    ));
}

#[test]
fn similarity_modulates_scores_before_softmax() {
    let mut g = Graph::<f64>::new();
    let scores = g.constant(Tensor::row_vector(&[2.0, 4.0]));
    let s = g.constant(Tensor::row_vector(&[1.0, 0.5]));
    let modulated = g.hadamard(scores, s).unwrap();
    assert_eq!(g.value(modulated).data(), &[2.0, 2.0]);
    let scaled = g.scale(modulated, 1.0 / 2f64.sqrt());
    let w = g.softmax_rows(scaled, Some(&Tensor::zeros(1, 2))).unwrap();
    assert_eq!(g.value(w).data(), &[0.5, 0.5]);

    let scores = g.constant(Tensor::row_vector(&[3.0, 250.0]));
    let w = g
        .softmax_rows(scores, Some(&Tensor::row_vector(&[0.0, MASK_VALUE])))
        .unwrap();
    assert!(g.value(w).data()[1] <= 1e-30);
}

#[test]
fn padding_content_never_reaches_real_positions() {
    let vocab = Vocab::from_tokens(words(5));
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let cfg = EncoderConfig::new(2, 2, 6, 8, 9, vocab.len(), HeadType::BinaryClassifier);
    let model = Encoder::new(cfg, vocab.clone(), false).unwrap();
    let p = model.params().cast::<f64>();
    for _ in 0..10 {
        let input = random_input(&mut rng, &vocab, 9);
        let mut tampered = input.clone();
        for (i, id) in tampered.encoded.ids.iter_mut().enumerate() {
            if tampered.encoded.pad_mask[i] == 0 {
                *id = 4;
                tampered.encoded.segment_ids[i] = 1;
            }
        }
        assert_eq!(
            model.outputs(&p, &[&input]).unwrap(),
            model.outputs(&p, &[&tampered]).unwrap()
        );
    }
}

#[test]
fn regressor_scores_stay_in_range() {
    let vocab = Vocab::from_tokens(words(5));
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let cfg = EncoderConfig::new(1, 2, 4, 4, 8, vocab.len(), HeadType::Regressor);
    let mut model = Encoder::new(cfg, vocab.clone(), false).unwrap();
    // exaggerate the head so the sigmoid saturates
    for t in model.params_mut().tensors_mut() {
        for v in t.data_mut() {
            *v *= 400.0;
        }
    }
    let inputs: Vec<EncoderInput> = (0..20).map(|_| random_input(&mut rng, &vocab, 8)).collect();
    for row in crate::train::raw_outputs(&model, &inputs, 4).unwrap() {
        assert!((0.0..=5.0).contains(&row[0]), "{row:?}");
    }
}

/// Plain-loop forward pass over named parameters, written without the graph.
fn reference_forward(model: &Encoder, p: &ParamSet<f64>, input: &EncoderInput) -> Vec<f64> {
    let cfg = model.config();
    let (t, d, h, dk, dv) = (
        cfg.max_len,
        cfg.d_model,
        cfg.num_heads,
        cfg.d_k(),
        cfg.d_v(),
    );
    let get = |name: &str| p.get(name).unwrap_or_else(|| panic!("{name}"));
    let mat = |name: &str| {
        let w = get(name);
        (0..w.rows()).map(|i| w.row(i).to_vec()).collect::<Vec<_>>()
    };
    let vecp = |name: &str| get(name).data().to_vec();
    let linear = |x: &[Vec<f64>], w: &[Vec<f64>], b: &[f64]| -> Vec<Vec<f64>> {
        x.iter()
            .map(|row| {
                (0..b.len())
                    .map(|j| b[j] + row.iter().zip(w).map(|(xi, wr)| xi * wr[j]).sum::<f64>())
                    .collect()
            })
            .collect()
    };
    let norm = |x: &[Vec<f64>], gname: &str, bname: &str| -> Vec<Vec<f64>> {
        let (gm, bt) = (vecp(gname), vecp(bname));
        x.iter()
            .map(|row| {
                let mean = row.iter().sum::<f64>() / d as f64;
                let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / d as f64;
                let sd = (var + cfg.layer_norm_eps).sqrt();
                row.iter()
                    .enumerate()
                    .map(|(j, v)| (v - mean) / sd * gm[j] + bt[j])
                    .collect()
            })
            .collect()
    };
    let (tok, pos, seg) = (
        mat("embeddings.token"),
        mat("embeddings.position"),
        mat("embeddings.segment"),
    );
    let e = &input.encoded;
    let x: Vec<Vec<f64>> = (0..t)
        .map(|i| {
            (0..d)
                .map(|j| tok[e.ids[i] as usize][j] + pos[i][j] + seg[e.segment_ids[i] as usize][j])
                .collect()
        })
        .collect();
    let mut x = norm(&x, "embeddings.norm.gamma", "embeddings.norm.beta");
    for l in 1..=cfg.num_layers {
        let n = |s: &str| format!("layer{l}.{s}");
        let q = linear(
            &x,
            &mat(&n("attention.query.weight")),
            &vecp(&n("attention.query.bias")),
        );
        let k = linear(
            &x,
            &mat(&n("attention.key.weight")),
            &vecp(&n("attention.key.bias")),
        );
        let v = linear(
            &x,
            &mat(&n("attention.value.weight")),
            &vecp(&n("attention.value.bias")),
        );
        let guided = model.guided() && cfg.knowledge_layers.contains(&l);
        let mut ctx = vec![vec![0.0; h * dv]; t];
        for head in 0..h {
            for i in 0..t {
                let mut logits: Vec<f64> = (0..t)
                    .map(|j| {
                        let mut s: f64 = (0..dk)
                            .map(|c| q[i][head * dk + c] * k[j][head * dk + c])
                            .sum();
                        if guided {
                            s *= f64::from(input.sim.as_ref().unwrap().get(i, j));
                        }
                        s / (dk as f64).sqrt()
                    })
                    .collect();
                for (j, lg) in logits.iter_mut().enumerate() {
                    if e.pad_mask[j] == 0 {
                        *lg += MASK_VALUE;
                    }
                }
                let mx = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let ex: Vec<f64> = logits.iter().map(|v| (v - mx).exp()).collect();
                let z: f64 = ex.iter().sum();
                for c in 0..dv {
                    ctx[i][head * dv + c] = (0..t).map(|j| ex[j] / z * v[j][head * dv + c]).sum();
                }
            }
        }
        let attn = linear(
            &ctx,
            &mat(&n("attention.output.weight")),
            &vecp(&n("attention.output.bias")),
        );
        let res: Vec<Vec<f64>> = x
            .iter()
            .zip(&attn)
            .map(|(a, b)| a.iter().zip(b).map(|(p, q)| p + q).collect())
            .collect();
        x = norm(&res, &n("attention.norm.gamma"), &n("attention.norm.beta"));
        let inner = linear(
            &x,
            &mat(&n("ffn.inner.weight")),
            &vecp(&n("ffn.inner.bias")),
        );
        let inner: Vec<Vec<f64>> = inner
            .iter()
            .map(|r| r.iter().map(|v| v.max(0.0)).collect())
            .collect();
        let outer = linear(
            &inner,
            &mat(&n("ffn.outer.weight")),
            &vecp(&n("ffn.outer.bias")),
        );
        let res: Vec<Vec<f64>> = x
            .iter()
            .zip(&outer)
            .map(|(a, b)| a.iter().zip(b).map(|(p, q)| p + q).collect())
            .collect();
        x = norm(&res, &n("ffn.norm.gamma"), &n("ffn.norm.beta"));
    }
    let pooled = linear(&x[..1], &mat("pooler.weight"), &vecp("pooler.bias"));
    let pooled: Vec<Vec<f64>> = vec![pooled[0].iter().map(|v| v.tanh()).collect()];
    let out = linear(&pooled, &mat("head.weight"), &vecp("head.bias")).remove(0);
    match cfg.head_type {
        HeadType::BinaryClassifier => out,
        HeadType::Regressor => out.iter().map(|v| 5.0 / (1.0 + (-v).exp())).collect(),
    }
}

fn perturbed(p: &ParamSet<f64>, seed: u64) -> ParamSet<f64> {
    // larger weights than the 0.02 init so every term matters numerically
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut q = p.clone();
    for t in q.tensors_mut() {
        for v in t.data_mut() {
            *v += rng.random_range(-0.5..0.5);
        }
    }
    q
}

#[test]
fn tiny_forward_matches_reference_recomputation() {
    let vocab = Vocab::from_tokens(words(3));
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let cfg = EncoderConfig::new(1, 1, 2, 3, 6, vocab.len(), HeadType::BinaryClassifier);
    for guided in [false, true] {
        let model = Encoder::new(cfg.clone(), vocab.clone(), guided).unwrap();
        let p = perturbed(&model.params().cast(), 5);
        let input = random_input(&mut rng, &vocab, 6);
        let got = model.outputs(&p, &[&input]).unwrap();
        let want = reference_forward(&model, &p, &input);
        for (a, b) in got.data().iter().zip(&want) {
            assert!(
                (a - b).abs() <= 1e-12 * (1.0 + b.abs()),
                "{got:?} vs {want:?}"
            );
        }
    }
}

#[test]
fn random_forward_matches_reference_recomputation() {
    let vocab = Vocab::from_tokens(words(6));
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..10 {
        let cfg = small_config(&mut rng, vocab.len());
        let model = Encoder::new(cfg.clone(), vocab.clone(), true).unwrap();
        let p = perturbed(&model.params().cast(), rng.random());
        let input = random_input(&mut rng, &vocab, cfg.max_len);
        let got = model.outputs(&p, &[&input]).unwrap();
        let want = reference_forward(&model, &p, &input);
        for (a, b) in got.data().iter().zip(&want) {
            assert!(
                (a - b).abs() <= 1e-10 * (1.0 + b.abs()),
                "{got:?} vs {want:?}"
            );
        }
    }
}

#[test]
fn batched_outputs_equal_single_outputs() {
    let vocab = Vocab::from_tokens(words(6));
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let cfg = EncoderConfig::new(2, 2, 4, 6, 8, vocab.len(), HeadType::BinaryClassifier);
    let model = Encoder::new(cfg, vocab.clone(), true).unwrap();
    let inputs: Vec<EncoderInput> = (0..4).map(|_| random_input(&mut rng, &vocab, 8)).collect();
    let batch: Vec<&EncoderInput> = inputs.iter().collect();
    let all = model.outputs(model.params(), &batch).unwrap();
    for (i, input) in inputs.iter().enumerate() {
        let one = model.outputs(model.params(), &[input]).unwrap();
        assert_eq!(one.row(0), all.row(i));
    }
}

pub(crate) fn gradient_check_config() -> (EncoderConfig, Vocab) {
    let vocab = Vocab::from_tokens(words(4));
    let mut cfg = EncoderConfig::new(2, 2, 8, 8, 6, vocab.len(), HeadType::BinaryClassifier);
    cfg.dropout_rate = 0.0;
    cfg.seed = 2;
    (cfg, vocab)
}

#[test]
fn full_model_gradient_check() {
    let (cfg, vocab) = gradient_check_config();
    let model = Encoder::new(cfg, vocab.clone(), true).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let inputs: Vec<EncoderInput> = (0..2).map(|_| random_input(&mut rng, &vocab, 6)).collect();
    let labels = [Label::Class(0), Label::Class(1)];
    let params = perturbed(&model.params().cast(), 9);
    let report = grad_check(
        |g, vars| {
            let batch: Vec<&EncoderInput> = inputs.iter().collect();
            let out = model.forward(g, vars, &batch, None).map_err(|e| match e {
                ModelError::Autodiff(a) => a,
                other => panic!("{other}"),
            })?;
            Ok(crate::train::loss(g, HeadType::BinaryClassifier, out, &labels).unwrap())
        },
        params.tensors(),
        1e-5,
    )
    .unwrap();
    assert!(report.checked > 0);
    assert!(report.max_rel_error <= 1e-3, "{report:?}");
}

fn toy_data(n: usize, vocab: &Vocab, max_len: usize) -> (Vec<EncoderInput>, Vec<Label>) {
    // positives draw words from {w0, w1}, negatives from {w2, w3}
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut inputs = Vec::new();
    let mut labels = Vec::new();
    for i in 0..n {
        let base = if i % 2 == 0 { 0 } else { 2 };
        let mut text = || {
            let words: Vec<String> = (0..2)
                .map(|_| format!("w{}", base + rng.random_range(0..2)))
                .collect();
            tokenize(&words.join(" "))
        };
        let (a, b) = (text(), text());
        inputs.push(EncoderInput {
            encoded: encode_pair(vocab, &a, &b, max_len).unwrap(),
            sim: None,
        });
        labels.push(Label::Class(u8::from(i % 2 == 0)));
    }
    (inputs, labels)
}

#[test]
fn training_reduces_loss_and_is_deterministic() {
    let vocab = Vocab::from_tokens(words(6));
    let mut cfg = EncoderConfig::new(1, 2, 8, 16, 8, vocab.len(), HeadType::BinaryClassifier);
    cfg.dropout_rate = 0.0;
    let (inputs, labels) = toy_data(20, &vocab, 8);
    let opts = TrainOptions {
        epochs: 6,
        batch_size: 2,
        learning_rate: 1e-2,
        ..TrainOptions::default()
    };
    let run = || {
        let mut model = Encoder::new(cfg.clone(), vocab.clone(), false).unwrap();
        let history = fit(&mut model, &inputs, &labels, &opts).unwrap();
        (model, history)
    };
    let (m1, h1) = run();
    let (m2, h2) = run();
    assert_eq!(m1.to_bytes(), m2.to_bytes());
    assert_eq!(h1, h2);
    assert_eq!(h1.train_pairs, 20);
    assert!(
        h1.epoch_loss.windows(2).take(5).all(|w| w[1] < w[0]),
        "{:?}",
        h1.epoch_loss
    );

    let half = fit(
        &mut Encoder::new(cfg.clone(), vocab.clone(), false).unwrap(),
        &inputs[..10],
        &labels[..10],
        &TrainOptions {
            fraction: 0.5,
            ..opts.clone()
        },
    )
    .unwrap();
    assert_eq!(half.train_pairs, 5);
}

#[test]
fn checkpoint_round_trip_preserves_predictions() {
    let vocab = Vocab::from_tokens(words(6));
    let cfg = EncoderConfig::new(2, 2, 4, 6, 8, vocab.len(), HeadType::BinaryClassifier);
    let model = Encoder::new(cfg.clone(), vocab.clone(), true).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let inputs: Vec<EncoderInput> = (0..6).map(|_| random_input(&mut rng, &vocab, 8)).collect();
    let back = Encoder::from_bytes(&model.to_bytes()).unwrap();
    assert_eq!(back, model);
    assert_eq!(
        predict(&back, &inputs).unwrap(),
        predict(&model, &inputs).unwrap()
    );

    let mut bytes = model.to_bytes();
    bytes[1] = b'X';
    assert!(matches!(
        Encoder::from_bytes(&bytes),
        Err(ModelError::Checkpoint(CheckpointError::Format(_)))
    ));

    let mut other = Encoder::new(
        EncoderConfig::new(2, 2, 6, 6, 8, vocab.len(), HeadType::BinaryClassifier),
        vocab,
        true,
    )
    .unwrap();
    let err = other.set_params(model.params().clone()).unwrap_err();
    assert!(err.to_string().contains("embeddings.token"), "{err}");
}
