//! WordNet taxonomy: WNDB parsing, morphological reduction, synonymy and
//! Wu-Palmer similarity.
//!
//! A [`WordNetGraph`] is immutable once loaded and can be shared freely
//! between threads. Depths follow the convention that a root synset (one
//! without hypernyms) has depth 1, so every Wu-Palmer value is strictly
//! positive.
//!
//! ```
//! use kgat::wordnet::{load_wordnet, Pos};
//!
//! let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/data/wordnet-tiny");
//! let graph = load_wordnet(dir).unwrap();
//! assert_eq!(graph.word_similarity("dog", "cat"), 0.75);
//! assert_eq!(graph.morphy("dogs", Pos::Noun), vec!["dog".to_string()]);
//! ```

mod loader;
mod morphy;

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

pub use loader::load_wordnet;

/// Part of speech. Satellite adjectives are folded into [`Pos::Adjective`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Pos {
    Noun,
    Verb,
    Adjective,
    Adverb,
}

impl Pos {
    pub const ALL: [Pos; 4] = [Pos::Noun, Pos::Verb, Pos::Adjective, Pos::Adverb];

    /// File suffix used by the WNDB layout (`index.noun`, `verb.exc`, ...).
    pub fn file_suffix(self) -> &'static str {
        match self {
            Pos::Noun => "noun",
            Pos::Verb => "verb",
            Pos::Adjective => "adj",
            Pos::Adverb => "adv",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Pos> {
        match tag {
            "n" => Some(Pos::Noun),
            "v" => Some(Pos::Verb),
            "a" | "s" => Some(Pos::Adjective),
            "r" => Some(Pos::Adverb),
            _ => None,
        }
    }

    pub fn tag(self) -> char {
        match self {
            Pos::Noun => 'n',
            Pos::Verb => 'v',
            Pos::Adjective => 'a',
            Pos::Adverb => 'r',
        }
    }

    /// Whether the part of speech carries a hypernym hierarchy.
    pub fn has_hierarchy(self) -> bool {
        matches!(self, Pos::Noun | Pos::Verb)
    }
}

/// Byte offset into the `data.*` file plus part of speech.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SynsetId {
    pub offset: u32,
    pub pos: Pos,
}

impl fmt::Display for SynsetId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:08}-{}", self.offset, self.pos.tag())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Synset {
    pub id: SynsetId,
    /// Lemmas in file order; multiword lemmas keep their underscores.
    pub lemmas: Vec<String>,
    pub hypernyms: Vec<SynsetId>,
}

#[derive(Debug, thiserror::Error)]
pub enum WordNetError {
    #[error("missing {name} in {}", dir.display())]
    MissingFile { name: String, dir: PathBuf },
    #[error("reading {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{file}:{line}: {message}")]
    Parse {
        file: String,
        line: usize,
        message: String,
    },
    #[error("integrity: {from} refers to unknown synset {to}")]
    Dangling { from: String, to: SynsetId },
    #[error("integrity: hypernym cycle {}", format_cycle(.cycle))]
    Cycle { cycle: Vec<SynsetId> },
    #[error("unknown synset {0}")]
    UnknownSynset(SynsetId),
}

fn format_cycle(cycle: &[SynsetId]) -> String {
    cycle
        .iter()
        .map(|id| id.to_string())
        .collect::<Vec<_>>()
        .join(" -> ")
}

/// Immutable synset taxonomy with a lemma index and morphological exceptions.
#[derive(Clone, Debug, PartialEq)]
pub struct WordNetGraph {
    synsets: BTreeMap<SynsetId, Synset>,
    index: BTreeMap<(String, Pos), Vec<SynsetId>>,
    exceptions: BTreeMap<(String, Pos), Vec<String>>,
    depths: BTreeMap<SynsetId, u32>,
}

impl WordNetGraph {
    /// Depth assigned to a synset without hypernyms.
    pub const ROOT_DEPTH: u32 = 1;

    pub fn len(&self) -> usize {
        self.synsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.synsets.is_empty()
    }

    pub fn synset(&self, id: SynsetId) -> Option<&Synset> {
        self.synsets.get(&id)
    }

    pub fn synsets(&self) -> impl Iterator<Item = &Synset> {
        self.synsets.values()
    }

    /// Raw index entries for an already-normalized lemma.
    pub fn lookup(&self, lemma: &str, pos: Pos) -> &[SynsetId] {
        self.index
            .get(&(lemma.to_string(), pos))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn is_indexed(&self, lemma: &str, pos: Pos) -> bool {
        !self.lookup(lemma, pos).is_empty()
    }

    /// Every `(lemma, pos)` key in the index, in sorted order.
    pub fn lemmas(&self) -> impl Iterator<Item = (&str, Pos)> {
        self.index.keys().map(|(l, p)| (l.as_str(), *p))
    }

    pub(crate) fn exception_bases(&self, surface: &str, pos: Pos) -> &[String] {
        self.exceptions
            .get(&(surface.to_string(), pos))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    /// Base forms of `surface` that are present in the index.
    pub fn morphy(&self, surface: &str, pos: Pos) -> Vec<String> {
        morphy::base_forms(self, surface, pos)
    }

    /// Union of the index entries over every base form of `word`.
    pub fn synsets_of(&self, word: &str, pos: Pos) -> Vec<SynsetId> {
        let key = normalize_lemma(word);
        let mut out: Vec<SynsetId> = Vec::new();
        for base in self.morphy(&key, pos) {
            for id in self.lookup(&base, pos) {
                if !out.contains(id) {
                    out.push(*id);
                }
            }
        }
        out
    }

    /// Synsets of `word` across every part of speech, nouns first.
    pub fn all_synsets_of(&self, word: &str) -> Vec<SynsetId> {
        Pos::ALL
            .iter()
            .flat_map(|&pos| self.synsets_of(word, pos))
            .collect()
    }

    pub fn is_synonym(&self, w1: &str, w2: &str) -> bool {
        let a = self.all_synsets_of(w1);
        if a.is_empty() {
            return false;
        }
        let b = self.all_synsets_of(w2);
        a.iter().any(|id| b.contains(id))
    }

    pub fn synset_depth(&self, id: SynsetId) -> Result<u32, WordNetError> {
        self.depths
            .get(&id)
            .copied()
            .ok_or(WordNetError::UnknownSynset(id))
    }

    /// Minimal hop count from `id` to each of its ancestors (itself at 0).
    fn ancestors(&self, id: SynsetId) -> HashMap<SynsetId, u32> {
        let mut hops = HashMap::new();
        let mut queue = VecDeque::new();
        hops.insert(id, 0);
        queue.push_back(id);
        while let Some(cur) = queue.pop_front() {
            let next = hops[&cur] + 1;
            if let Some(s) = self.synsets.get(&cur) {
                for &h in &s.hypernyms {
                    if let std::collections::hash_map::Entry::Vacant(e) = hops.entry(h) {
                        e.insert(next);
                        queue.push_back(h);
                    }
                }
            }
        }
        hops
    }

    /// Wu-Palmer similarity `2·depth(lcs) / (depth(a) + depth(b))`, with both
    /// depths measured along paths through the least common subsumer.
    ///
    /// `Ok(None)` when the synsets share no ancestor.
    pub fn wup_similarity(&self, a: SynsetId, b: SynsetId) -> Result<Option<f64>, WordNetError> {
        self.synset_depth(a)?;
        self.synset_depth(b)?;
        let up_a = self.ancestors(a);
        let up_b = self.ancestors(b);
        // Deepest common ancestor; ties go to the smaller offset.
        let best = up_a
            .keys()
            .filter(|c| up_b.contains_key(c))
            .map(|&c| (self.depths[&c], c))
            .max_by(|(da, a), (db, b)| da.cmp(db).then_with(|| b.cmp(a)));
        Ok(best.map(|(lcs_depth, lcs)| {
            let da = lcs_depth + up_a[&lcs];
            let db = lcs_depth + up_b[&lcs];
            2.0 * f64::from(lcs_depth) / f64::from(da + db)
        }))
    }

    /// Word-level similarity in `[0, 1]`: 1 for synonyms, otherwise the best
    /// Wu-Palmer value over noun-noun and verb-verb synset pairs, otherwise 0.
    pub fn word_similarity(&self, w1: &str, w2: &str) -> f64 {
        if self.is_synonym(w1, w2) {
            return 1.0;
        }
        let mut best = 0.0f64;
        for pos in [Pos::Noun, Pos::Verb] {
            let a = self.synsets_of(w1, pos);
            if a.is_empty() {
                continue;
            }
            let b = self.synsets_of(w2, pos);
            for &x in &a {
                for &y in &b {
                    if let Ok(Some(v)) = self.wup_similarity(x, y) {
                        best = best.max(v);
                    }
                }
            }
        }
        best
    }

    /// True when the word resolves to no synset under any part of speech.
    pub fn is_oov(&self, word: &str) -> bool {
        Pos::ALL
            .iter()
            .all(|&pos| self.synsets_of(word, pos).is_empty())
    }
}

/// Lowercase and join multiword expressions with underscores, as the index does.
pub fn normalize_lemma(word: &str) -> String {
    word.split_whitespace()
        .collect::<Vec<_>>()
        .join("_")
        .to_lowercase()
}
