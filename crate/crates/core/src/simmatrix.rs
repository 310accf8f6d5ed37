//! Word similarity matrices built from WordNet, their attention-sized
//! extension, the on-disk cache and heat-map export.
//!
//! Cell values come from a fixed ladder: identical normalized tokens score 1;
//! two distinct proper names score 0; synonyms score 1; otherwise the
//! Wu-Palmer word similarity, which is 0 when either side is unknown.
//!
//! The attention-sized matrix is filled with 1 wherever a special token or
//! padding is involved, so under a Hadamard product it leaves those scores
//! untouched.

use std::collections::HashMap;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use crate::binio::{FrameError, Reader, Writer};
use crate::text::{EncodedPair, Token};
use crate::wordnet::WordNetGraph;

/// Row-major `f32` matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseMatrix {
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f32>,
}

impl DenseMatrix {
    pub fn filled(rows: usize, cols: usize, value: f32) -> DenseMatrix {
        DenseMatrix {
            rows,
            cols,
            values: vec![value; rows * cols],
        }
    }

    pub fn from_rows(rows: &[Vec<f32>]) -> DenseMatrix {
        let cols = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == cols), "ragged rows");
        DenseMatrix {
            rows: rows.len(),
            cols,
            values: rows.concat(),
        }
    }

    pub fn get(&self, i: usize, j: usize) -> f32 {
        self.values[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f32) {
        self.values[i * self.cols + j] = v;
    }

    pub fn transpose(&self) -> DenseMatrix {
        let mut t = DenseMatrix::filled(self.cols, self.rows, 0.0);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.set(j, i, self.get(i, j));
            }
        }
        t
    }
}

/// The `l_a × l_b` cross-sentence similarity matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct SimilarityMatrix {
    pub matrix: DenseMatrix,
    pub row_tokens: Vec<String>,
    pub col_tokens: Vec<String>,
}

impl SimilarityMatrix {
    pub fn rows(&self) -> usize {
        self.matrix.rows
    }

    pub fn cols(&self) -> usize {
        self.matrix.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f32 {
        self.matrix.get(i, j)
    }

    pub fn transpose(&self) -> SimilarityMatrix {
        SimilarityMatrix {
            matrix: self.matrix.transpose(),
            row_tokens: self.col_tokens.clone(),
            col_tokens: self.row_tokens.clone(),
        }
    }
}

/// Square `max_len × max_len` matrix multiplied into encoder attention scores.
#[derive(Clone, Debug, PartialEq)]
pub struct FullAttentionMatrix(pub DenseMatrix);

impl FullAttentionMatrix {
    /// The Hadamard identity: attention with this matrix equals plain attention.
    pub fn ones(size: usize) -> FullAttentionMatrix {
        FullAttentionMatrix(DenseMatrix::filled(size, size, 1.0))
    }

    pub fn size(&self) -> usize {
        self.0.rows
    }

    pub fn get(&self, i: usize, j: usize) -> f32 {
        self.0.get(i, j)
    }

    pub fn matrix(&self) -> &DenseMatrix {
        &self.0
    }
}

/// Capitalized, not sentence-initial and unknown to the taxonomy.
pub fn is_proper_name(graph: &WordNetGraph, token: &Token) -> bool {
    !token.is_special
        && token.capitalized
        && !token.starts_sentence
        && graph.is_oov(&token.normalized)
}

/// Similarity of two non-special tokens under the cell ladder.
pub fn cell_similarity(graph: &WordNetGraph, a: &Token, b: &Token) -> f64 {
    if a.normalized == b.normalized {
        return 1.0;
    }
    if is_proper_name(graph, a) && is_proper_name(graph, b) {
        return 0.0;
    }
    // word_similarity already returns 1 for synonyms and 0 for unknown words
    graph.word_similarity(&a.normalized, &b.normalized)
}

/// Memoizes the ladder over (normalized token, proper-name flag) keys.
struct CellCache<'g> {
    graph: &'g WordNetGraph,
    proper: HashMap<(String, bool, bool), bool>,
    cells: HashMap<(String, bool, String, bool), f64>,
}

impl<'g> CellCache<'g> {
    fn new(graph: &'g WordNetGraph) -> Self {
        CellCache {
            graph,
            proper: HashMap::new(),
            cells: HashMap::new(),
        }
    }

    fn proper(&mut self, t: &Token) -> bool {
        let key = (t.normalized.clone(), t.capitalized, t.starts_sentence);
        let graph = self.graph;
        *self
            .proper
            .entry(key)
            .or_insert_with(|| is_proper_name(graph, t))
    }

    fn cell(&mut self, a: &Token, b: &Token) -> f32 {
        let pa = self.proper(a);
        let pb = self.proper(b);
        let key = (a.normalized.clone(), pa, b.normalized.clone(), pb);
        if let Some(&v) = self.cells.get(&key) {
            return v as f32;
        }
        let v = if a.normalized == b.normalized {
            1.0
        } else if pa && pb {
            0.0
        } else {
            self.graph.word_similarity(&a.normalized, &b.normalized)
        };
        self.cells.insert(key, v);
        v as f32
    }
}

pub fn build_pair_matrix(graph: &WordNetGraph, a: &[Token], b: &[Token]) -> SimilarityMatrix {
    let mut cache = CellCache::new(graph);
    let mut matrix = DenseMatrix::filled(a.len(), b.len(), 0.0);
    for (i, ta) in a.iter().enumerate() {
        for (j, tb) in b.iter().enumerate() {
            matrix.set(i, j, cache.cell(ta, tb));
        }
    }
    SimilarityMatrix {
        matrix,
        row_tokens: a.iter().map(|t| t.normalized.clone()).collect(),
        col_tokens: b.iter().map(|t| t.normalized.clone()).collect(),
    }
}

/// Extend the ladder to every pair of real positions of an encoded pair,
/// covering within-sentence and cross-sentence cells alike.
pub fn build_full_matrix(graph: &WordNetGraph, encoded: &EncodedPair) -> FullAttentionMatrix {
    let size = encoded.max_len();
    let mut matrix = DenseMatrix::filled(size, size, 1.0);
    let real: Vec<usize> = (0..size)
        .filter(|&i| encoded.pad_mask[i] == 1 && !encoded.tokens[i].is_special)
        .collect();
    let mut cache = CellCache::new(graph);
    for (n, &i) in real.iter().enumerate() {
        for &j in &real[n + 1..] {
            let v = cache.cell(&encoded.tokens[i], &encoded.tokens[j]);
            matrix.set(i, j, v);
            matrix.set(j, i, v);
        }
    }
    FullAttentionMatrix(matrix)
}

const CACHE_MAGIC: &[u8; 4] = b"SIMM";
pub const CACHE_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CacheError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("similarity cache truncated: {0}")]
    Truncated(FrameError),
    #[error("not a similarity cache: {0}")]
    Format(FrameError),
    #[error("unsupported similarity cache version {found} (expected {CACHE_VERSION})")]
    Version { found: u32 },
    #[error("similarity cache corrupted: {0}")]
    Checksum(FrameError),
}

impl From<FrameError> for CacheError {
    fn from(e: FrameError) -> Self {
        match e {
            FrameError::Truncated { .. } => CacheError::Truncated(e),
            FrameError::Checksum { .. } => CacheError::Checksum(e),
            FrameError::BadMagic { .. } | FrameError::TrailingBytes(_) => CacheError::Format(e),
        }
    }
}

pub fn encode_cache(matrices: &[DenseMatrix]) -> Vec<u8> {
    let mut w = Writer::new(CACHE_MAGIC);
    w.u32(CACHE_VERSION);
    w.u32(matrices.len() as u32);
    for m in matrices {
        w.u32(m.rows as u32);
        w.u32(m.cols as u32);
        w.f32s(&m.values);
    }
    w.finish()
}

pub fn decode_cache(bytes: &[u8]) -> Result<Vec<DenseMatrix>, CacheError> {
    let mut r = Reader::open(bytes, CACHE_MAGIC)?;
    let version = r.u32()?;
    if version != CACHE_VERSION {
        return Err(CacheError::Version { found: version });
    }
    let count = r.u32()? as usize;
    let mut out = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let rows = r.u32()? as usize;
        let cols = r.u32()? as usize;
        let values = r.f32s(rows * cols)?;
        out.push(DenseMatrix { rows, cols, values });
    }
    r.finish()?;
    Ok(out)
}

pub fn write_cache(path: impl AsRef<Path>, matrices: &[DenseMatrix]) -> Result<(), CacheError> {
    let path = path.as_ref();
    fs::write(path, encode_cache(matrices)).map_err(|source| CacheError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_cache(path: impl AsRef<Path>) -> Result<Vec<DenseMatrix>, CacheError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| CacheError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    decode_cache(&bytes)
}

/// `round(255 · v)` with halves rounded up; values are clamped to `[0, 1]`.
pub fn pixel_intensity(v: f32) -> u8 {
    (255.0 * f64::from(v.clamp(0.0, 1.0)) + 0.5).floor() as u8
}

/// Write the matrix as CSV (header row of column tokens, one row per row
/// token, six decimals) and as a binary grayscale PGM image.
pub fn export_heatmap(
    matrix: &SimilarityMatrix,
    csv_path: impl AsRef<Path>,
    image_path: impl AsRef<Path>,
) -> io::Result<()> {
    let mut csv = csv::Writer::from_path(csv_path).map_err(io::Error::other)?;
    let mut header = vec![String::new()];
    header.extend(matrix.col_tokens.iter().cloned());
    csv.write_record(&header).map_err(io::Error::other)?;
    for i in 0..matrix.rows() {
        let mut record = vec![matrix.row_tokens[i].clone()];
        record.extend((0..matrix.cols()).map(|j| format!("{:.6}", matrix.get(i, j))));
        csv.write_record(&record).map_err(io::Error::other)?;
    }
    csv.flush()?;

    let mut pgm = format!("P5\n{} {}\n255\n", matrix.cols(), matrix.rows()).into_bytes();
    pgm.extend(matrix.matrix.values.iter().map(|&v| pixel_intensity(v)));
    let mut f = fs::File::create(image_path)?;
    f.write_all(&pgm)?;
    Ok(())
}
