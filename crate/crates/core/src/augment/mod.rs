//! Six label-preserving augmentation strategies that each double a
//! sentence-pair training set.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;
use std::time::Duration;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::harness::SentencePair;
use crate::text::{tokenize, IdfTable, Token};
use crate::wordnet::{Pos, WordNetGraph};

pub const DEFAULT_K: usize = 5;
pub const DEFAULT_P: f64 = 0.5;
pub const DEFAULT_PIVOT: &str = "zh";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    SplitSwap,
    AddRandomWord,
    BackTranslation,
    AddHighTfidf,
    DeleteLowTfidf,
    ReplaceSynonyms,
}

impl Strategy {
    pub const ALL: [Strategy; 6] = [
        Strategy::SplitSwap,
        Strategy::AddRandomWord,
        Strategy::BackTranslation,
        Strategy::AddHighTfidf,
        Strategy::DeleteLowTfidf,
        Strategy::ReplaceSynonyms,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::SplitSwap => "split_swap",
            Strategy::AddRandomWord => "add_random_word",
            Strategy::BackTranslation => "back_translation",
            Strategy::AddHighTfidf => "add_high_tfidf",
            Strategy::DeleteLowTfidf => "delete_low_tfidf",
            Strategy::ReplaceSynonyms => "replace_synonyms",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = AugmentError;

    fn from_str(s: &str) -> Result<Strategy, AugmentError> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| AugmentError::UnknownStrategy(s.to_string()))
    }
}

fn default_k() -> usize {
    DEFAULT_K
}

fn default_p() -> f64 {
    DEFAULT_P
}

fn default_pivot() -> String {
    DEFAULT_PIVOT.to_string()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AugmentationSpec {
    pub strategy: Strategy,
    /// Words considered by `delete_low_tfidf`.
    #[serde(default = "default_k")]
    pub k: usize,
    /// Deletion probability of `delete_low_tfidf`.
    #[serde(default = "default_p")]
    pub p: f64,
    #[serde(default)]
    pub seed: u64,
    /// Pivot language of back translation.
    #[serde(default = "default_pivot")]
    pub pivot: String,
}

impl AugmentationSpec {
    /// Spec with `k = 5`, `p = 0.5`, seed 0 and pivot `zh`.
    pub fn new(strategy: Strategy) -> AugmentationSpec {
        AugmentationSpec {
            strategy,
            k: DEFAULT_K,
            p: DEFAULT_P,
            seed: 0,
            pivot: default_pivot(),
        }
    }

    pub fn validate(&self) -> Result<(), AugmentError> {
        if self.k == 0 {
            return Err(AugmentError::Spec("k must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.p) {
            return Err(AugmentError::Spec(format!("p = {} outside [0, 1]", self.p)));
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum AugmentError {
    #[error("unknown strategy {0:?}; expected one of split_swap, add_random_word, back_translation, add_high_tfidf, delete_low_tfidf, replace_synonyms")]
    UnknownStrategy(String),
    #[error("invalid augmentation spec: {0}")]
    Spec(String),
    #[error("cannot augment an empty dataset")]
    EmptyDataset,
    #[error("{0} needs a WordNet graph")]
    MissingGraph(Strategy),
}

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
#[error("translation failed: {0}")]
pub struct TranslationError(pub String);

/// Machine translation between language codes. Implementations should be
/// deterministic per `(text, source, target)` within one run.
pub trait TranslationClient: Sync {
    fn translate(&self, text: &str, source: &str, target: &str)
        -> Result<String, TranslationError>;
}

/// Returns the text unchanged; a non-semantic stand-in for a real service.
#[derive(Clone, Copy, Debug, Default)]
pub struct IdentityClient;

impl TranslationClient for IdentityClient {
    fn translate(&self, text: &str, _: &str, _: &str) -> Result<String, TranslationError> {
        Ok(text.to_string())
    }
}

#[derive(Serialize)]
struct TranslateRequest<'a> {
    text: &'a str,
    source: &'a str,
    target: &'a str,
}

#[derive(Deserialize)]
struct TranslateResponse {
    text: String,
}

/// POSTs `{text, source, target}` to an endpoint answering `{text}`.
pub struct HttpClient {
    endpoint: String,
    agent: ureq::Agent,
}

impl HttpClient {
    pub fn new(endpoint: impl Into<String>) -> HttpClient {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(30)))
            .build()
            .into();
        HttpClient {
            endpoint: endpoint.into(),
            agent,
        }
    }
}

impl TranslationClient for HttpClient {
    fn translate(
        &self,
        text: &str,
        source: &str,
        target: &str,
    ) -> Result<String, TranslationError> {
        let fail = |e: ureq::Error| TranslationError(format!("{}: {e}", self.endpoint));
        let reply: TranslateResponse = self
            .agent
            .post(&self.endpoint)
            .send_json(TranslateRequest {
                text,
                source,
                target,
            })
            .map_err(fail)?
            .body_mut()
            .read_json()
            .map_err(fail)?;
        Ok(reply.text)
    }
}

fn surfaces(text: &str) -> Vec<String> {
    tokenize(text).into_iter().map(|t| t.surface).collect()
}

fn key(word: &str) -> String {
    word.to_lowercase()
}

/// Swap the segments on either side of a uniform split point. Sentences
/// shorter than two tokens come back unchanged (`None`).
pub fn split_swap(tokens: &[String], rng: &mut impl Rng) -> Option<Vec<String>> {
    if tokens.len() < 2 {
        return None;
    }
    let at = rng.random_range(1..tokens.len());
    Some([&tokens[at..], &tokens[..at]].concat())
}

/// Insert one vocabulary word absent from the sentence at a uniform position.
/// `None` when every vocabulary word already occurs.
pub fn add_random_word(
    tokens: &[String],
    vocab: &[String],
    rng: &mut impl Rng,
) -> Option<Vec<String>> {
    let present: BTreeSet<String> = tokens.iter().map(|t| key(t)).collect();
    let absent: Vec<&String> = vocab
        .iter()
        .filter(|w| !present.contains(&key(w)))
        .collect();
    let word = absent.choose(rng)?;
    let mut out = tokens.to_vec();
    out.insert(rng.random_range(0..=tokens.len()), (*word).clone());
    Some(out)
}

/// Translate to `pivot` and back to English.
pub fn back_translate(
    text: &str,
    client: &dyn TranslationClient,
    pivot: &str,
) -> Result<String, TranslationError> {
    let there = client.translate(text, "en", pivot)?;
    client.translate(&there, pivot, "en")
}

fn as_tokens(words: &[String]) -> Vec<Token> {
    tokenize(&words.join(" "))
}

/// Duplicate the highest-tfidf word (first occurrence on ties) at a uniform
/// position. `None` for an empty sentence.
pub fn add_high_tfidf(
    tokens: &[String],
    idf: &IdfTable,
    rng: &mut impl Rng,
) -> Option<Vec<String>> {
    let weights: Vec<f64> = {
        let mut counts: BTreeMap<String, usize> = BTreeMap::new();
        for t in tokens {
            *counts.entry(key(t)).or_default() += 1;
        }
        tokens
            .iter()
            .map(|t| counts[&key(t)] as f64 * idf.idf(&key(t)))
            .collect()
    };
    let mut best: Option<usize> = None;
    for (i, &w) in weights.iter().enumerate() {
        if best.is_none_or(|b| w > weights[b]) {
            best = Some(i);
        }
    }
    let word = tokens[best?].clone();
    let mut out = tokens.to_vec();
    out.insert(rng.random_range(0..=tokens.len()), word);
    Some(out)
}

/// The `k` distinct words with the lowest pair-level tfidf (count in both
/// sentences times corpus idf); ties break lexicographically.
pub fn lowest_tfidf_words(a: &[String], b: &[String], idf: &IdfTable, k: usize) -> Vec<String> {
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for t in a.iter().chain(b) {
        *counts.entry(key(t)).or_default() += 1;
    }
    let mut ranked: Vec<(f64, String)> = counts
        .into_iter()
        .map(|(w, c)| (c as f64 * idf.idf(&w), w))
        .collect();
    ranked.sort_by(|x, y| x.0.total_cmp(&y.0).then_with(|| x.1.cmp(&y.1)));
    ranked.into_iter().take(k).map(|(_, w)| w).collect()
}

fn delete_from(
    tokens: &[String],
    targets: &BTreeSet<String>,
    p: f64,
    rng: &mut impl Rng,
) -> Vec<String> {
    let mut out = tokens.to_vec();
    let mut i = 0;
    while i < out.len() {
        let hit = targets.contains(&key(&out[i])) && rng.random_bool(p);
        if hit && out.len() > 1 {
            out.remove(i);
        } else {
            i += 1;
        }
    }
    out
}

/// Delete each occurrence of the `k` lowest-tfidf words of the pair with
/// probability `p`, never emptying a sentence.
pub fn delete_low_tfidf(
    a: &[String],
    b: &[String],
    idf: &IdfTable,
    k: usize,
    p: f64,
    rng: &mut impl Rng,
) -> (Vec<String>, Vec<String>) {
    let targets: BTreeSet<String> = lowest_tfidf_words(a, b, idf, k).into_iter().collect();
    let a = delete_from(a, &targets, p, rng);
    let b = delete_from(b, &targets, p, rng);
    (a, b)
}

/// The replacement `replace_synonyms` would use for one token, if any.
pub fn first_synonym(graph: &WordNetGraph, token: &str) -> Option<String> {
    let word = key(token);
    for pos in [Pos::Noun, Pos::Verb] {
        let Some(&first) = graph.synsets_of(&word, pos).first() else {
            continue;
        };
        let bases = graph.morphy(&word, pos);
        let synset = graph.synset(first)?;
        return synset
            .lemmas
            .iter()
            .map(|l| l.to_lowercase())
            .find(|l| *l != word && !bases.contains(l))
            .map(|l| l.replace('_', " "));
    }
    None
}

/// One replaced token: its position in the input, the source word and the
/// lemma that replaced it.
#[derive(Clone, Debug, PartialEq)]
pub struct Replacement {
    pub position: usize,
    pub source: String,
    pub lemma: String,
}

/// [`replace_synonyms`] plus a record of every replacement made.
pub fn replace_synonyms_traced(
    tokens: &[String],
    graph: &WordNetGraph,
) -> (Vec<String>, Vec<Replacement>) {
    let mut out = Vec::with_capacity(tokens.len());
    let mut trace = Vec::new();
    for (position, t) in tokens.iter().enumerate() {
        match first_synonym(graph, t) {
            Some(lemma) => {
                out.extend(surfaces(&lemma));
                trace.push(Replacement {
                    position,
                    source: t.clone(),
                    lemma,
                });
            }
            None => out.push(t.clone()),
        }
    }
    (out, trace)
}

/// Replace every token by the first other lemma of its first noun (else
/// verb) synset; multiword lemmas become several tokens.
pub fn replace_synonyms(tokens: &[String], graph: &WordNetGraph) -> Vec<String> {
    replace_synonyms_traced(tokens, graph).0
}

/// What [`augment_dataset`] needs beyond the spec.
#[derive(Clone, Copy, Default)]
pub struct Resources<'a> {
    pub graph: Option<&'a WordNetGraph>,
    /// Defaults to [`IdentityClient`].
    pub client: Option<&'a dyn TranslationClient>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AugmentReport {
    pub strategy: Strategy,
    pub pairs_in: usize,
    pub pairs_out: usize,
    /// Augmented pairs copied unchanged because the strategy did not apply.
    pub noops: usize,
    /// Sentences whose back translation failed and fell back to the original.
    pub failures: usize,
}

struct Outcome {
    a: Vec<String>,
    b: Vec<String>,
    applied: bool,
    failures: usize,
}

/// Original pairs followed by one augmented copy of each, labels kept.
/// Each pair draws from its own stream of `seed`, so results do not depend
/// on scheduling.
pub fn augment_dataset(
    pairs: &[SentencePair],
    spec: &AugmentationSpec,
    resources: Resources<'_>,
) -> Result<(Vec<SentencePair>, AugmentReport), AugmentError> {
    spec.validate()?;
    if pairs.is_empty() {
        return Err(AugmentError::EmptyDataset);
    }
    if spec.strategy == Strategy::ReplaceSynonyms && resources.graph.is_none() {
        return Err(AugmentError::MissingGraph(spec.strategy));
    }
    let tokenized: Vec<(Vec<String>, Vec<String>)> = pairs
        .iter()
        .map(|p| (surfaces(&p.text_a), surfaces(&p.text_b)))
        .collect();
    let corpus: Vec<Vec<Token>> = tokenized
        .iter()
        .flat_map(|(a, b)| [as_tokens(a), as_tokens(b)])
        .collect();
    let idf =
        IdfTable::fit(corpus.iter().map(Vec::as_slice)).map_err(|_| AugmentError::EmptyDataset)?;
    let vocab: Vec<String> = corpus
        .iter()
        .flatten()
        .map(|t| t.normalized.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let identity = IdentityClient;
    let client = resources.client.unwrap_or(&identity);

    let outcomes: Vec<Outcome> = tokenized
        .par_iter()
        .enumerate()
        .map(|(index, (a, b))| {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            rng.set_stream(index as u64);
            let mut failures = 0;
            let single = |f: &mut dyn FnMut(&[String]) -> Option<Vec<String>>| {
                let na = f(a);
                let nb = f(b);
                let applied = na.is_some() || nb.is_some();
                (
                    na.unwrap_or_else(|| a.clone()),
                    nb.unwrap_or_else(|| b.clone()),
                    applied,
                )
            };
            let (na, nb, applied) = match spec.strategy {
                Strategy::SplitSwap => single(&mut |t| split_swap(t, &mut rng)),
                Strategy::AddRandomWord => single(&mut |t| {
                    let out = add_random_word(t, &vocab, &mut rng);
                    if out.is_none() {
                        log::warn!("pair {index}: no absent vocabulary word to insert");
                    }
                    out
                }),
                Strategy::AddHighTfidf => single(&mut |t| add_high_tfidf(t, &idf, &mut rng)),
                Strategy::BackTranslation => {
                    single(
                        &mut |t| match back_translate(&t.join(" "), client, &spec.pivot) {
                            Ok(text) => Some(surfaces(&text)),
                            Err(e) => {
                                log::warn!("pair {index}: {e}; keeping the original sentence");
                                failures += 1;
                                None
                            }
                        },
                    )
                }
                Strategy::DeleteLowTfidf => {
                    let (na, nb) = delete_low_tfidf(a, b, &idf, spec.k, spec.p, &mut rng);
                    let applied = (&na, &nb) != (a, b);
                    (na, nb, applied)
                }
                Strategy::ReplaceSynonyms => {
                    let g = resources.graph.expect("checked above");
                    let (na, ta) = replace_synonyms_traced(a, g);
                    let (nb, tb) = replace_synonyms_traced(b, g);
                    (na, nb, !(ta.is_empty() && tb.is_empty()))
                }
            };
            Outcome {
                a: na,
                b: nb,
                applied,
                failures,
            }
        })
        .collect();

    let mut out = pairs.to_vec();
    let mut report = AugmentReport {
        strategy: spec.strategy,
        pairs_in: pairs.len(),
        pairs_out: 2 * pairs.len(),
        noops: 0,
        failures: 0,
    };
    for (src, o) in pairs.iter().zip(outcomes) {
        report.noops += usize::from(!o.applied);
        report.failures += o.failures;
        out.push(SentencePair {
            id: out.len(),
            text_a: o.a.join(" "),
            text_b: o.b.join(" "),
            label: src.label,
        });
    }
    Ok((out, report))
}

#[cfg(test)]
mod tests;
