use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub const TSV_HEADER: &str = "label\ttext_a\ttext_b";

/// What a model predicts for a pair.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HeadType {
    /// Two logits; labels are 0 or 1.
    BinaryClassifier,
    /// One score in [0, 5].
    Regressor,
}

impl HeadType {
    pub fn outputs(self) -> usize {
        match self {
            HeadType::BinaryClassifier => 2,
            HeadType::Regressor => 1,
        }
    }
}

impl fmt::Display for HeadType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            HeadType::BinaryClassifier => "binary-classifier",
            HeadType::Regressor => "regressor",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Label {
    Class(u8),
    Score(f64),
}

impl Label {
    pub fn as_f64(self) -> f64 {
        match self {
            Label::Class(c) => f64::from(c),
            Label::Score(s) => s,
        }
    }

    pub fn class(self) -> Option<usize> {
        match self {
            Label::Class(c) => Some(usize::from(c)),
            Label::Score(_) => None,
        }
    }

    fn to_field(self) -> String {
        match self {
            Label::Class(c) => c.to_string(),
            Label::Score(s) => s.to_string(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SentencePair {
    pub id: usize,
    pub text_a: String,
    pub text_b: String,
    pub label: Label,
}

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{}: expected header \"label<TAB>text_a<TAB>text_b\", found {found:?}", path.display())]
    Header { path: PathBuf, found: String },
    #[error("{}:{line}: {message}", path.display())]
    Line {
        path: PathBuf,
        line: usize,
        message: String,
    },
}

/// Parse one label field under the given head type.
pub fn parse_label(field: &str, head: HeadType) -> Result<Label, String> {
    match head {
        HeadType::BinaryClassifier => match field.trim() {
            "0" => Ok(Label::Class(0)),
            "1" => Ok(Label::Class(1)),
            other => Err(format!("class label must be 0 or 1, got {other:?}")),
        },
        HeadType::Regressor => {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| format!("non-numeric score {field:?}"))?;
            if (0.0..=5.0).contains(&v) {
                Ok(Label::Score(v))
            } else {
                Err(format!("score {v} outside [0, 5]"))
            }
        }
    }
}

pub fn parse_tsv(text: &str, path: &Path, head: HeadType) -> Result<Vec<SentencePair>, DataError> {
    let mut lines = text.lines();
    let header = lines.next().unwrap_or("");
    if header.trim_end_matches('\r') != TSV_HEADER {
        return Err(DataError::Header {
            path: path.to_path_buf(),
            found: header.to_string(),
        });
    }
    let mut pairs = Vec::new();
    for (i, raw) in lines.enumerate() {
        let line = i + 2;
        let raw = raw.trim_end_matches('\r');
        if raw.is_empty() {
            continue;
        }
        let err = |message: String| DataError::Line {
            path: path.to_path_buf(),
            line,
            message,
        };
        let fields: Vec<&str> = raw.split('\t').collect();
        if fields.len() != 3 {
            return Err(err(format!(
                "expected 3 tab-separated columns, found {}",
                fields.len()
            )));
        }
        let label = parse_label(fields[0], head).map_err(err)?;
        pairs.push(SentencePair {
            id: pairs.len(),
            text_a: fields[1].to_string(),
            text_b: fields[2].to_string(),
            label,
        });
    }
    Ok(pairs)
}

pub fn load_tsv(path: impl AsRef<Path>, head: HeadType) -> Result<Vec<SentencePair>, DataError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_tsv(&text, path, head)
}

/// Render pairs in the TSV layout [`load_tsv`] reads. Tabs and newlines
/// inside texts are replaced by spaces.
pub fn format_tsv(pairs: &[SentencePair]) -> String {
    let clean = |s: &str| s.replace(['\t', '\n', '\r'], " ");
    let mut out = String::from(TSV_HEADER);
    out.push('\n');
    for p in pairs {
        out.push_str(&format!(
            "{}\t{}\t{}\n",
            p.label.to_field(),
            clean(&p.text_a),
            clean(&p.text_b)
        ));
    }
    out
}

pub fn write_tsv(path: impl AsRef<Path>, pairs: &[SentencePair]) -> Result<(), DataError> {
    let path = path.as_ref();
    fs::write(path, format_tsv(pairs)).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str, head: HeadType) -> Result<Vec<SentencePair>, DataError> {
        parse_tsv(text, Path::new("t.tsv"), head)
    }

    #[test]
    fn reads_pairs() {
        let pairs = parse(
            "label\ttext_a\ttext_b\n1\ta b\tc\n0\td\te f\n",
            HeadType::BinaryClassifier,
        )
        .unwrap();
        assert_eq!(pairs.len(), 2);
        assert_eq!(pairs[1].text_b, "e f");
        assert_eq!(pairs[1].label, Label::Class(0));
    }

    #[test]
    fn score_bounds() {
        let ok = parse("label\ttext_a\ttext_b\n5.0\ta\tb\n", HeadType::Regressor).unwrap();
        assert_eq!(ok[0].label, Label::Score(5.0));
        let err = parse("label\ttext_a\ttext_b\n5.1\ta\tb\n", HeadType::Regressor).unwrap_err();
        assert!(err.to_string().contains("outside [0, 5]"));
        let err = parse("label\ttext_a\ttext_b\nx\ta\tb\n", HeadType::Regressor).unwrap_err();
        assert!(err.to_string().contains("non-numeric"));
    }

    #[test]
    fn malformed_lines_name_their_line() {
        let err = parse(
            "label\ttext_a\ttext_b\n1\ta\tb\n1\tonly\n",
            HeadType::BinaryClassifier,
        )
        .unwrap_err();
        assert!(err.to_string().starts_with("t.tsv:3:"), "{err}");
        let err = parse("label\ta\tb\n", HeadType::BinaryClassifier).unwrap_err();
        assert!(matches!(err, DataError::Header { .. }));
    }

    #[test]
    fn format_round_trips() {
        let text = "label\ttext_a\ttext_b\n1\ta b\tc\n0\td\te f\n";
        let pairs = parse(text, HeadType::BinaryClassifier).unwrap();
        assert_eq!(format_tsv(&pairs), text);
    }
}
