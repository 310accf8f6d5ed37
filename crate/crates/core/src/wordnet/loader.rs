//! WNDB text-format reader.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use super::{Pos, Synset, SynsetId, WordNetError, WordNetGraph};

/// Load `index.*`, `data.*` and `*.exc` for all four parts of speech.
///
/// All required files are checked for existence before any parsing starts.
pub fn load_wordnet(dir: impl AsRef<Path>) -> Result<WordNetGraph, WordNetError> {
    let dir = dir.as_ref();
    for pos in Pos::ALL {
        for name in [
            format!("index.{}", pos.file_suffix()),
            format!("data.{}", pos.file_suffix()),
            format!("{}.exc", pos.file_suffix()),
        ] {
            if !dir.join(&name).is_file() {
                return Err(WordNetError::MissingFile {
                    name,
                    dir: dir.to_path_buf(),
                });
            }
        }
    }

    let mut synsets = BTreeMap::new();
    let mut index: BTreeMap<(String, Pos), Vec<SynsetId>> = BTreeMap::new();
    let mut exceptions: BTreeMap<(String, Pos), Vec<String>> = BTreeMap::new();

    for pos in Pos::ALL {
        let name = format!("data.{}", pos.file_suffix());
        let text = read(dir, &name)?;
        for (lineno, line) in records(&text) {
            let synset = parse_data_line(line, pos).map_err(|message| WordNetError::Parse {
                file: name.clone(),
                line: lineno,
                message,
            })?;
            if synsets.insert(synset.id, synset).is_some() {
                return Err(WordNetError::Parse {
                    file: name,
                    line: lineno,
                    message: "duplicate synset offset".into(),
                });
            }
        }

        let name = format!("index.{}", pos.file_suffix());
        let text = read(dir, &name)?;
        for (lineno, line) in records(&text) {
            let (lemma, ids) =
                parse_index_line(line, pos).map_err(|message| WordNetError::Parse {
                    file: name.clone(),
                    line: lineno,
                    message,
                })?;
            index.entry((lemma, pos)).or_default().extend(ids);
        }

        let name = format!("{}.exc", pos.file_suffix());
        let text = read(dir, &name)?;
        for (lineno, line) in records(&text) {
            let mut fields = line.split_whitespace();
            let inflected = fields.next().unwrap_or_default().to_lowercase();
            let bases: Vec<String> = fields.map(str::to_lowercase).collect();
            if bases.is_empty() {
                return Err(WordNetError::Parse {
                    file: name,
                    line: lineno,
                    message: "exception entry without base form".into(),
                });
            }
            exceptions
                .entry((inflected, pos))
                .or_default()
                .extend(bases);
        }
    }

    verify_references(&synsets, &index)?;
    let depths = compute_depths(&synsets)?;
    Ok(WordNetGraph {
        synsets,
        index,
        exceptions,
        depths,
    })
}

fn read(dir: &Path, name: &str) -> Result<String, WordNetError> {
    let path = dir.join(name);
    fs::read_to_string(&path).map_err(|source| WordNetError::Io { path, source })
}

/// Non-empty, non-license lines with their 1-based line numbers.
fn records(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.starts_with("  ") && !l.trim().is_empty())
        .map(|(i, l)| (i + 1, l))
}

fn field<'a>(it: &mut impl Iterator<Item = &'a str>, what: &str) -> Result<&'a str, String> {
    it.next().ok_or_else(|| format!("missing {what}"))
}

fn number(s: &str, radix: u32, what: &str) -> Result<u32, String> {
    u32::from_str_radix(s, radix).map_err(|_| format!("invalid {what} {s:?}"))
}

fn pos_tag(s: &str) -> Result<Pos, String> {
    Pos::from_tag(s).ok_or_else(|| format!("invalid part of speech {s:?}"))
}

/// Adjective lemmas may carry a syntactic marker such as `(a)` or `(ip)`.
fn strip_marker(lemma: &str) -> &str {
    match lemma.find('(') {
        Some(i) if lemma.ends_with(')') => &lemma[..i],
        _ => lemma,
    }
}

fn parse_data_line(line: &str, file_pos: Pos) -> Result<Synset, String> {
    let head = line.split('|').next().unwrap_or_default();
    let mut it = head.split_whitespace();
    let offset = number(field(&mut it, "offset")?, 10, "offset")?;
    field(&mut it, "lexfile number")?;
    let ss_type = pos_tag(field(&mut it, "synset type")?)?;
    if ss_type != file_pos {
        return Err(format!("synset type {ss_type:?} in {file_pos:?} file"));
    }
    let w_cnt = number(field(&mut it, "word count")?, 16, "word count")?;
    if w_cnt == 0 {
        return Err("synset without lemmas".into());
    }
    let mut lemmas = Vec::with_capacity(w_cnt as usize);
    for _ in 0..w_cnt {
        lemmas.push(strip_marker(field(&mut it, "lemma")?).to_string());
        field(&mut it, "lex_id")?;
    }
    let p_cnt = number(field(&mut it, "pointer count")?, 10, "pointer count")?;
    let mut hypernyms = Vec::new();
    for _ in 0..p_cnt {
        let symbol = field(&mut it, "pointer symbol")?;
        let target = number(field(&mut it, "pointer offset")?, 10, "pointer offset")?;
        let target_pos = pos_tag(field(&mut it, "pointer pos")?)?;
        field(&mut it, "pointer source/target")?;
        if symbol == "@" || symbol == "@i" {
            hypernyms.push(SynsetId {
                offset: target,
                pos: target_pos,
            });
        }
    }
    Ok(Synset {
        id: SynsetId {
            offset,
            pos: file_pos,
        },
        lemmas,
        hypernyms,
    })
}

fn parse_index_line(line: &str, file_pos: Pos) -> Result<(String, Vec<SynsetId>), String> {
    let mut it = line.split_whitespace();
    let lemma = field(&mut it, "lemma")?.to_lowercase();
    let pos = pos_tag(field(&mut it, "pos")?)?;
    if pos != file_pos {
        return Err(format!("pos {pos:?} in {file_pos:?} index"));
    }
    let synset_cnt = number(field(&mut it, "synset count")?, 10, "synset count")?;
    let p_cnt = number(field(&mut it, "pointer count")?, 10, "pointer count")?;
    for _ in 0..p_cnt {
        field(&mut it, "pointer symbol")?;
    }
    field(&mut it, "sense count")?;
    field(&mut it, "tagged sense count")?;
    let mut ids = Vec::with_capacity(synset_cnt as usize);
    for _ in 0..synset_cnt {
        let offset = number(field(&mut it, "synset offset")?, 10, "synset offset")?;
        ids.push(SynsetId { offset, pos });
    }
    if it.next().is_some() {
        return Err("trailing fields after synset offsets".into());
    }
    Ok((lemma, ids))
}

fn verify_references(
    synsets: &BTreeMap<SynsetId, Synset>,
    index: &BTreeMap<(String, Pos), Vec<SynsetId>>,
) -> Result<(), WordNetError> {
    for ((lemma, pos), ids) in index {
        for id in ids {
            if !synsets.contains_key(id) {
                return Err(WordNetError::Dangling {
                    from: format!("index entry {lemma:?} ({pos:?})"),
                    to: *id,
                });
            }
        }
    }
    for s in synsets.values() {
        for h in &s.hypernyms {
            if !synsets.contains_key(h) {
                return Err(WordNetError::Dangling {
                    from: format!("synset {}", s.id),
                    to: *h,
                });
            }
        }
    }
    Ok(())
}

#[derive(Clone, Copy, PartialEq)]
enum Mark {
    Visiting,
    Done,
}

/// Depth of every synset; fails with the offending cycle if the hypernym
/// relation is not acyclic.
fn compute_depths(
    synsets: &BTreeMap<SynsetId, Synset>,
) -> Result<BTreeMap<SynsetId, u32>, WordNetError> {
    let mut marks: BTreeMap<SynsetId, Mark> = BTreeMap::new();
    let mut depths: BTreeMap<SynsetId, u32> = BTreeMap::new();

    for &start in synsets.keys() {
        if marks.contains_key(&start) {
            continue;
        }
        // Iterative DFS; `path` mirrors the current recursion stack.
        let mut path: Vec<(SynsetId, usize)> = vec![(start, 0)];
        marks.insert(start, Mark::Visiting);
        while let Some(&mut (node, ref mut next)) = path.last_mut() {
            let hypers = &synsets[&node].hypernyms;
            if *next < hypers.len() {
                let h = hypers[*next];
                *next += 1;
                match marks.get(&h) {
                    Some(Mark::Done) => {}
                    Some(Mark::Visiting) => {
                        let from = path.iter().position(|(n, _)| *n == h).unwrap_or(0);
                        let mut cycle: Vec<SynsetId> =
                            path[from..].iter().map(|(n, _)| *n).collect();
                        cycle.push(h);
                        return Err(WordNetError::Cycle { cycle });
                    }
                    None => {
                        marks.insert(h, Mark::Visiting);
                        path.push((h, 0));
                    }
                }
            } else {
                let depth = hypers
                    .iter()
                    .map(|h| depths[h])
                    .min()
                    .map_or(WordNetGraph::ROOT_DEPTH, |d| d + 1);
                depths.insert(node, depth);
                marks.insert(node, Mark::Done);
                path.pop();
            }
        }
    }
    Ok(depths)
}
