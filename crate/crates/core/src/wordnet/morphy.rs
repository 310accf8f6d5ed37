//! Rule-plus-exception reduction of inflected forms to indexed lemmas.

use super::{Pos, WordNetGraph};

const NOUN_RULES: &[(&str, &str)] = &[
    ("s", ""),
    ("ses", "s"),
    ("xes", "x"),
    ("zes", "z"),
    ("ches", "ch"),
    ("shes", "sh"),
    ("men", "man"),
    ("ies", "y"),
    ("es", "e"),
    ("es", ""),
];

const VERB_RULES: &[(&str, &str)] = &[
    ("s", ""),
    ("ies", "y"),
    ("es", "e"),
    ("es", ""),
    ("ed", "e"),
    ("ed", ""),
    ("ing", "e"),
    ("ing", ""),
];

const ADJ_RULES: &[(&str, &str)] = &[("er", ""), ("est", ""), ("er", "e"), ("est", "e")];

fn rules(pos: Pos) -> &'static [(&'static str, &'static str)] {
    match pos {
        Pos::Noun => NOUN_RULES,
        Pos::Verb => VERB_RULES,
        Pos::Adjective => ADJ_RULES,
        Pos::Adverb => &[],
    }
}

/// The surface form itself when indexed, then exception-list bases, then
/// rule detachments; only indexed candidates are kept, duplicates dropped.
pub(super) fn base_forms(graph: &WordNetGraph, surface: &str, pos: Pos) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    let push = |candidate: String, out: &mut Vec<String>| {
        if !candidate.is_empty() && graph.is_indexed(&candidate, pos) && !out.contains(&candidate) {
            out.push(candidate);
        }
    };
    push(surface.to_string(), &mut out);
    for base in graph.exception_bases(surface, pos) {
        push(base.clone(), &mut out);
    }
    for (suffix, ending) in rules(pos) {
        if let Some(stem) = surface.strip_suffix(suffix) {
            push(format!("{stem}{ending}"), &mut out);
        }
    }
    out
}
