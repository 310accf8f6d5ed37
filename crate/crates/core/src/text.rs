//! Word-level tokenization, vocabularies, `[CLS] a [SEP] b [SEP]` pair
//! encoding and corpus TfIdf statistics.

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

pub const PAD: &str = "[PAD]";
pub const CLS: &str = "[CLS]";
pub const SEP: &str = "[SEP]";
pub const UNK: &str = "[UNK]";

pub const PAD_ID: u32 = 0;
pub const CLS_ID: u32 = 1;
pub const SEP_ID: u32 = 2;
pub const UNK_ID: u32 = 3;

const RESERVED: [&str; 4] = [PAD, CLS, SEP, UNK];

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum TextError {
    #[error("max_len must be at least 4, got {0}")]
    MaxLenTooSmall(usize),
    #[error("cannot fit idf statistics on an empty corpus")]
    EmptyCorpus,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub surface: String,
    /// Lowercased surface; identical to `surface` for special tokens.
    pub normalized: String,
    pub is_special: bool,
    pub starts_sentence: bool,
    pub capitalized: bool,
}

impl Token {
    pub fn special(symbol: &str) -> Token {
        Token {
            surface: symbol.to_string(),
            normalized: symbol.to_string(),
            is_special: true,
            starts_sentence: false,
            capitalized: false,
        }
    }

    fn word(surface: &str, starts_sentence: bool) -> Token {
        Token {
            surface: surface.to_string(),
            normalized: surface.to_lowercase(),
            is_special: false,
            starts_sentence,
            capitalized: surface.chars().next().is_some_and(char::is_uppercase),
        }
    }

    pub fn is_punctuation(&self) -> bool {
        !self.is_special && self.normalized.chars().all(is_punct)
    }
}

fn is_punct(c: char) -> bool {
    !c.is_alphanumeric()
}

fn ends_sentence(tok: &str) -> bool {
    matches!(tok, "." | "!" | "?")
}

/// Split on whitespace, peeling leading and trailing punctuation off each
/// chunk one character at a time. Internal punctuation (`3D-printed`,
/// `don't`) stays inside the word.
pub fn tokenize(text: &str) -> Vec<Token> {
    let mut pieces: Vec<&str> = Vec::new();
    for chunk in text.split_whitespace() {
        let start = chunk.find(|c: char| !is_punct(c));
        let Some(start) = start else {
            pieces.extend(
                chunk
                    .char_indices()
                    .map(|(i, c)| &chunk[i..i + c.len_utf8()]),
            );
            continue;
        };
        let end = chunk
            .char_indices()
            .rev()
            .find(|&(_, c)| !is_punct(c))
            .map(|(i, c)| i + c.len_utf8())
            .unwrap_or(chunk.len());
        let head = &chunk[..start];
        pieces.extend(head.char_indices().map(|(i, c)| &head[i..i + c.len_utf8()]));
        pieces.push(&chunk[start..end]);
        let tail = &chunk[end..];
        pieces.extend(tail.char_indices().map(|(i, c)| &tail[i..i + c.len_utf8()]));
    }

    let mut at_sentence_start = true;
    let mut out = Vec::with_capacity(pieces.len());
    for piece in pieces {
        let punct = piece.chars().all(is_punct);
        out.push(Token::word(piece, at_sentence_start && !punct));
        if punct {
            if ends_sentence(piece) {
                at_sentence_start = true;
            }
        } else {
            at_sentence_start = false;
        }
    }
    out
}

/// Token ↔ id mapping with the four reserved ids fixed at 0..=3.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocab {
    ids: HashMap<String, u32>,
    tokens: Vec<String>,
}

impl Vocab {
    /// Vocabulary holding only the reserved tokens.
    pub fn reserved_only() -> Vocab {
        Vocab::from_tokens(Vec::<String>::new())
    }

    /// Rebuild from the non-reserved tokens in id order (ids start at 4).
    /// Repeated or reserved entries are skipped.
    pub fn from_tokens<I, S>(tokens: I) -> Vocab
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut vocab = Vocab {
            ids: HashMap::new(),
            tokens: Vec::new(),
        };
        for t in RESERVED {
            vocab.push(t.to_string());
        }
        for t in tokens {
            let t = t.into();
            if !vocab.ids.contains_key(&t) {
                vocab.push(t);
            }
        }
        vocab
    }

    fn push(&mut self, token: String) {
        self.ids.insert(token.clone(), self.tokens.len() as u32);
        self.tokens.push(token);
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, normalized: &str) -> u32 {
        self.ids.get(normalized).copied().unwrap_or(UNK_ID)
    }

    pub fn contains(&self, normalized: &str) -> bool {
        self.ids.contains_key(normalized)
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    /// Non-reserved tokens in id order.
    pub fn words(&self) -> &[String] {
        &self.tokens[RESERVED.len()..]
    }
}

/// Non-reserved tokens with frequency ≥ `min_freq`, most frequent first,
/// ties broken lexicographically.
pub fn build_vocab<'a, I>(corpus: I, min_freq: usize) -> Vocab
where
    I: IntoIterator<Item = &'a [Token]>,
{
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for sentence in corpus {
        for tok in sentence.iter().filter(|t| !t.is_special) {
            *counts.entry(tok.normalized.as_str()).or_default() += 1;
        }
    }
    let mut words: Vec<(&str, usize)> = counts
        .into_iter()
        .filter(|&(w, c)| c >= min_freq.max(1) && !RESERVED.contains(&w))
        .collect();
    words.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    Vocab::from_tokens(words.into_iter().map(|(w, _)| w.to_string()))
}

/// A pair laid out as `[CLS] a [SEP] b [SEP] [PAD]…`.
#[derive(Clone, Debug, PartialEq)]
pub struct EncodedPair {
    pub ids: Vec<u32>,
    pub segment_ids: Vec<u32>,
    pub pad_mask: Vec<u8>,
    pub tokens: Vec<Token>,
    /// Number of tokens from each sentence surviving truncation.
    pub len_a: usize,
    pub len_b: usize,
}

impl EncodedPair {
    pub fn max_len(&self) -> usize {
        self.ids.len()
    }

    /// Count of non-padding positions.
    pub fn real_len(&self) -> usize {
        self.len_a + self.len_b + 3
    }

    /// Positions of sentence `a` and `b` tokens in the layout.
    pub fn a_positions(&self) -> std::ops::Range<usize> {
        1..1 + self.len_a
    }

    pub fn b_positions(&self) -> std::ops::Range<usize> {
        2 + self.len_a..2 + self.len_a + self.len_b
    }
}

/// Lengths after truncating the longer sentence from its tail until
/// `len_a + len_b + 3 ≤ max_len`. Ties alternate, starting with `a`.
pub fn truncated_lengths(mut len_a: usize, mut len_b: usize, max_len: usize) -> (usize, usize) {
    let budget = max_len.saturating_sub(3);
    let mut tie_takes_a = true;
    while len_a + len_b > budget {
        if len_a > len_b || (len_a == len_b && tie_takes_a) {
            if len_a == len_b {
                tie_takes_a = false;
            }
            len_a -= 1;
        } else {
            if len_a == len_b {
                tie_takes_a = true;
            }
            len_b -= 1;
        }
    }
    (len_a, len_b)
}

/// Lay out and id-map a sentence pair; out-of-vocabulary words map to `[UNK]`.
pub fn encode_pair(
    vocab: &Vocab,
    a: &[Token],
    b: &[Token],
    max_len: usize,
) -> Result<EncodedPair, TextError> {
    if max_len < 4 {
        return Err(TextError::MaxLenTooSmall(max_len));
    }
    let (len_a, len_b) = truncated_lengths(a.len(), b.len(), max_len);
    let mut tokens = Vec::with_capacity(max_len);
    let mut segment_ids = Vec::with_capacity(max_len);
    tokens.push(Token::special(CLS));
    tokens.extend(a[..len_a].iter().cloned());
    tokens.push(Token::special(SEP));
    segment_ids.resize(tokens.len(), 0);
    tokens.extend(b[..len_b].iter().cloned());
    tokens.push(Token::special(SEP));
    segment_ids.resize(tokens.len(), 1);
    let real = tokens.len();
    tokens.resize(max_len, Token::special(PAD));
    segment_ids.resize(max_len, 0);

    let ids = tokens
        .iter()
        .map(|t| match t.normalized.as_str() {
            PAD if t.is_special => PAD_ID,
            CLS if t.is_special => CLS_ID,
            SEP if t.is_special => SEP_ID,
            w => vocab.id(w),
        })
        .collect();
    let pad_mask = (0..max_len).map(|i| u8::from(i < real)).collect();
    Ok(EncodedPair {
        ids,
        segment_ids,
        pad_mask,
        tokens,
        len_a,
        len_b,
    })
}

/// Document frequencies over a sentence corpus; `idf(w) = ln(N / (1 + df(w)))`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdfTable {
    df: HashMap<String, usize>,
    documents: usize,
}

impl IdfTable {
    pub fn fit<'a, I>(corpus: I) -> Result<IdfTable, TextError>
    where
        I: IntoIterator<Item = &'a [Token]>,
    {
        let mut df: HashMap<String, usize> = HashMap::new();
        let mut documents = 0;
        for sentence in corpus {
            documents += 1;
            let unique: HashSet<&str> = sentence
                .iter()
                .filter(|t| !t.is_special)
                .map(|t| t.normalized.as_str())
                .collect();
            for w in unique {
                *df.entry(w.to_string()).or_default() += 1;
            }
        }
        if documents == 0 {
            return Err(TextError::EmptyCorpus);
        }
        Ok(IdfTable { df, documents })
    }

    pub fn documents(&self) -> usize {
        self.documents
    }

    pub fn df(&self, word: &str) -> usize {
        self.df.get(word).copied().unwrap_or(0)
    }

    pub fn idf(&self, word: &str) -> f64 {
        (self.documents as f64 / (1.0 + self.df(word) as f64)).ln()
    }

    /// Per-token `count(w in tokens) · idf(w)`, aligned with the input.
    /// Special tokens get `-inf` so they never rank highest.
    pub fn tfidf_weights(&self, tokens: &[Token]) -> Vec<f64> {
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for t in tokens.iter().filter(|t| !t.is_special) {
            *counts.entry(t.normalized.as_str()).or_default() += 1;
        }
        tokens
            .iter()
            .map(|t| {
                if t.is_special {
                    f64::NEG_INFINITY
                } else {
                    counts[t.normalized.as_str()] as f64 * self.idf(&t.normalized)
                }
            })
            .collect()
    }
}

pub fn fit_idf<'a, I>(corpus: I) -> Result<IdfTable, TextError>
where
    I: IntoIterator<Item = &'a [Token]>,
{
    IdfTable::fit(corpus)
}
