use std::collections::BTreeSet;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::wordnet::{Pos, WordNetGraph};

use super::{Label, SentencePair};

/// Minimum number of synonym-bearing words the generator needs.
pub const MIN_SYNONYM_WORDS: usize = 20;
/// Chance that a content word of a positive copy is replaced by a synonym.
pub const REPLACE_PROBABILITY: f64 = 0.7;
/// Negatives share strictly less than this fraction of content words.
pub const MAX_NEGATIVE_OVERLAP: f64 = 0.3;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum SynthError {
    #[error("taxonomy has {found} words with single-word synonyms, need {needed}")]
    InsufficientVocabulary { found: usize, needed: usize },
    #[error("taxonomy lacks synonym-bearing {0} lemmas")]
    MissingPos(&'static str),
}

/// A word with the single-word, non-self lemmas sharing one of its synsets.
#[derive(Clone, Debug)]
struct Entry {
    word: String,
    synonyms: Vec<String>,
}

fn single_word(lemma: &str) -> bool {
    !lemma.is_empty() && lemma.chars().all(|c| c.is_ascii_alphabetic())
}

fn entries(graph: &WordNetGraph, pos: Pos) -> Vec<Entry> {
    let mut out = Vec::new();
    for (lemma, p) in graph.lemmas() {
        if p != pos || !single_word(lemma) {
            continue;
        }
        let mut synonyms = BTreeSet::new();
        for id in graph.lookup(lemma, pos) {
            if let Some(s) = graph.synset(*id) {
                for l in &s.lemmas {
                    let l = l.to_lowercase();
                    if l != lemma && single_word(&l) {
                        synonyms.insert(l);
                    }
                }
            }
        }
        if !synonyms.is_empty() {
            out.push(Entry {
                word: lemma.to_string(),
                synonyms: synonyms.into_iter().collect(),
            });
        }
    }
    out
}

/// Third-person singular present of a verb lemma.
pub fn third_person(verb: &str) -> String {
    let b = verb.as_bytes();
    let consonant_y = b.len() >= 2 && b[b.len() - 1] == b'y' && !b"aeiou".contains(&b[b.len() - 2]);
    if consonant_y {
        format!("{}ies", &verb[..verb.len() - 1])
    } else if ["s", "x", "z", "ch", "sh", "o"]
        .iter()
        .any(|s| verb.ends_with(s))
    {
        format!("{verb}es")
    } else {
        format!("{verb}s")
    }
}

/// Slots of the template `the {adj} {noun} {verb}s the {noun}`.
#[derive(Clone, Copy, PartialEq)]
enum Slot {
    Adj,
    Noun,
    Verb,
}

const TEMPLATE: [Slot; 4] = [Slot::Adj, Slot::Noun, Slot::Verb, Slot::Noun];

struct Lexicon {
    adj: Vec<Entry>,
    noun: Vec<Entry>,
    verb: Vec<Entry>,
}

impl Lexicon {
    fn pool(&self, slot: Slot) -> &[Entry] {
        match slot {
            Slot::Adj => &self.adj,
            Slot::Noun => &self.noun,
            Slot::Verb => &self.verb,
        }
    }
}

/// Content lemmas of one templated sentence.
type Sentence = [usize; 4];

fn render(words: &[String; 4]) -> String {
    format!(
        "the {} {} {} the {}",
        words[0],
        words[1],
        third_person(&words[2]),
        words[3]
    )
}

fn lemmas(lex: &Lexicon, s: &Sentence) -> [String; 4] {
    std::array::from_fn(|i| lex.pool(TEMPLATE[i])[s[i]].word.clone())
}

fn sample(lex: &Lexicon, rng: &mut ChaCha8Rng) -> Sentence {
    std::array::from_fn(|i| rng.random_range(0..lex.pool(TEMPLATE[i]).len()))
}

/// Share of `a`'s content words equal or synonymous to some word of `b`.
fn overlap(graph: &WordNetGraph, a: &[String; 4], b: &[String; 4]) -> f64 {
    let shared = a
        .iter()
        .filter(|wa| b.iter().any(|wb| wa == &wb || graph.is_synonym(wa, wb)))
        .count();
    shared as f64 / a.len() as f64
}

/// Templated paraphrase pairs over the taxonomy's vocabulary. Positives
/// copy a sentence and swap each content word for a synonym with
/// probability 0.7; negatives pair two sentences sharing under 30% of
/// their content words. Classes are balanced and shuffled.
pub fn synth_dataset(
    graph: &WordNetGraph,
    n_pairs: usize,
    seed: u64,
) -> Result<Vec<SentencePair>, SynthError> {
    let lex = Lexicon {
        adj: entries(graph, Pos::Adjective),
        noun: entries(graph, Pos::Noun),
        verb: entries(graph, Pos::Verb),
    };
    let found: BTreeSet<&str> = [&lex.adj, &lex.noun, &lex.verb]
        .iter()
        .flat_map(|p| p.iter().map(|e| e.word.as_str()))
        .collect();
    if found.len() < MIN_SYNONYM_WORDS {
        return Err(SynthError::InsufficientVocabulary {
            found: found.len(),
            needed: MIN_SYNONYM_WORDS,
        });
    }
    for (pool, name) in [
        (&lex.adj, "adjective"),
        (&lex.noun, "noun"),
        (&lex.verb, "verb"),
    ] {
        if pool.is_empty() {
            return Err(SynthError::MissingPos(name));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut labels: Vec<u8> = (0..n_pairs)
        .map(|i| u8::from(i < n_pairs.div_ceil(2)))
        .collect();
    labels.shuffle(&mut rng);
    let mut pairs = Vec::with_capacity(n_pairs);
    for (id, &label) in labels.iter().enumerate() {
        let s = sample(&lex, &mut rng);
        let a = lemmas(&lex, &s);
        let b: [String; 4] = if label == 1 {
            std::array::from_fn(|i| {
                let entry = &lex.pool(TEMPLATE[i])[s[i]];
                if rng.random_bool(REPLACE_PROBABILITY) {
                    entry.synonyms.choose(&mut rng).expect("non-empty").clone()
                } else {
                    entry.word.clone()
                }
            })
        } else {
            loop {
                let b = lemmas(&lex, &sample(&lex, &mut rng));
                if overlap(graph, &a, &b) < MAX_NEGATIVE_OVERLAP {
                    break b;
                }
            }
        };
        pairs.push(SentencePair {
            id,
            text_a: render(&a),
            text_b: render(&b),
            label: Label::Class(label),
        });
    }
    Ok(pairs)
}
