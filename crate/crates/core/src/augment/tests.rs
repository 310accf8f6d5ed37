use std::collections::BTreeSet;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;

use super::*;
use crate::harness::Label;
use crate::wordnet::load_wordnet;

fn toks(s: &str) -> Vec<String> {
    s.split_whitespace().map(String::from).collect()
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn tiny() -> WordNetGraph {
    load_wordnet(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/tests/data/wordnet-tiny"
    ))
    .unwrap()
}

fn pair(id: usize, a: &str, b: &str, label: u8) -> SentencePair {
    SentencePair {
        id,
        text_a: a.into(),
        text_b: b.into(),
        label: Label::Class(label),
    }
}

fn idf_of(sentences: &[&str]) -> IdfTable {
    let corpus: Vec<Vec<Token>> = sentences.iter().map(|s| tokenize(s)).collect();
    IdfTable::fit(corpus.iter().map(Vec::as_slice)).unwrap()
}

#[test]
fn split_swap_rotates() {
    let input = toks("a b c d");
    let seen: BTreeSet<Vec<String>> = (0..50)
        .map(|s| split_swap(&input, &mut rng(s)).unwrap())
        .collect();
    let rotations: BTreeSet<Vec<String>> = (1..4)
        .map(|at| [&input[at..], &input[..at]].concat())
        .collect();
    assert_eq!(seen, rotations);
    assert!(seen.contains(&toks("c d a b")));
    assert_eq!(split_swap(&toks("a"), &mut rng(0)), None);
}

#[test]
fn random_word_outcomes_are_exhaustive() {
    let vocab = toks("a b");
    let seen: BTreeSet<Vec<String>> = (0..50)
        .map(|s| add_random_word(&toks("a"), &vocab, &mut rng(s)).unwrap())
        .collect();
    assert_eq!(seen, BTreeSet::from([toks("b a"), toks("a b")]));
    assert_eq!(add_random_word(&toks("a b"), &vocab, &mut rng(0)), None);
}

struct Mock;

impl TranslationClient for Mock {
    fn translate(&self, text: &str, source: &str, _: &str) -> Result<String, TranslationError> {
        Ok(if source == "en" {
            text.to_uppercase()
        } else {
            format!("{} roundtrip", text.to_lowercase())
        })
    }
}

struct Failing;

impl TranslationClient for Failing {
    fn translate(&self, _: &str, _: &str, _: &str) -> Result<String, TranslationError> {
        Err(TranslationError("unreachable".into()))
    }
}

#[test]
fn back_translation_clients() {
    assert_eq!(
        back_translate("a man", &IdentityClient, "zh").unwrap(),
        "a man"
    );
    assert_eq!(back_translate("x", &Mock, "zh").unwrap(), "x roundtrip");
    assert!(back_translate("x", &Failing, "zh").is_err());

    let data = [pair(0, "x", "y z", 1)];
    let spec = AugmentationSpec::new(Strategy::BackTranslation);
    let failing = Failing;
    let res = Resources {
        graph: None,
        client: Some(&failing),
    };
    let (out, report) = augment_dataset(&data, &spec, res).unwrap();
    assert_eq!(
        (out[1].text_a.as_str(), out[1].text_b.as_str()),
        ("x", "y z")
    );
    assert_eq!((report.failures, report.noops), (2, 1));
}

#[test]
fn http_client_speaks_the_wire_format() {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/translate", listener.local_addr().unwrap());
    let server = std::thread::spawn(move || {
        let (stream, _) = listener.accept().unwrap();
        let mut reader = BufReader::new(stream);
        let mut length = 0;
        loop {
            let mut line = String::new();
            reader.read_line(&mut line).unwrap();
            if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                length = v.trim().parse().unwrap();
            }
            if line == "\r\n" {
                break;
            }
        }
        let mut body = vec![0; length];
        reader.read_exact(&mut body).unwrap();
        let req: serde_json::Value = serde_json::from_slice(&body).unwrap();
        let reply = serde_json::json!({ "text": format!("{}|{}|{}", req["text"], req["source"], req["target"]) }).to_string();
        let mut stream = reader.into_inner();
        write!(
            stream,
            "HTTP/1.1 200 OK\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{reply}",
            reply.len()
        )
        .unwrap();
    });
    let client = HttpClient::new(url);
    assert_eq!(
        client.translate("hi", "en", "zh").unwrap(),
        r#""hi"|"en"|"zh""#
    );
    server.join().unwrap();
    assert!(HttpClient::new("http://127.0.0.1:1/")
        .translate("hi", "en", "zh")
        .is_err());
}

#[test]
fn high_tfidf_word_is_duplicated() {
    // idf(the) = ln(2/3) < idf(rope) = ln(2/2)
    let idf = idf_of(&["the rope", "the man"]);
    for s in 0..10 {
        let out = add_high_tfidf(&toks("rope the"), &idf, &mut rng(s)).unwrap();
        assert_eq!(out.len(), 3);
        assert_eq!(out.iter().filter(|w| *w == "rope").count(), 2);
    }
    assert_eq!(
        add_high_tfidf(&toks("man"), &idf, &mut rng(0)).unwrap(),
        toks("man man")
    );
    assert_eq!(add_high_tfidf(&[], &idf, &mut rng(0)), None);
}

#[test]
fn low_tfidf_deletion_endpoints() {
    let idf = idf_of(&["the man climbs a rope", "a dog sees the cat", "the rope"]);
    let (a, b) = (toks("the man climbs a rope"), toks("a dog sees the cat"));
    assert_eq!(
        delete_low_tfidf(&a, &b, &idf, 5, 0.0, &mut rng(0)),
        (a.clone(), b.clone())
    );
    let (da, db) = delete_low_tfidf(&a, &b, &idf, 100, 1.0, &mut rng(0));
    assert_eq!((da, db), (toks("rope"), toks("cat")));
    // "the" and "a" occur twice in the pair and in most documents
    assert_eq!(lowest_tfidf_words(&a, &b, &idf, 2), ["the", "a"]);
}

#[test]
fn defaults_round_trip() {
    let spec: AugmentationSpec =
        serde_json::from_str(r#"{"strategy": "delete_low_tfidf"}"#).unwrap();
    assert_eq!((spec.k, spec.p), (5, 0.5));
    assert_eq!(spec, AugmentationSpec::new(Strategy::DeleteLowTfidf));
    let back: AugmentationSpec =
        serde_json::from_str(&serde_json::to_string(&spec).unwrap()).unwrap();
    assert_eq!(back, spec);
    assert!(
        serde_json::from_str::<AugmentationSpec>(r#"{"strategy": "split_swap", "q": 1}"#).is_err()
    );
    assert!(AugmentationSpec {
        k: 0,
        ..spec.clone()
    }
    .validate()
    .is_err());
    assert!(AugmentationSpec { p: 1.5, ..spec }.validate().is_err());
    for s in Strategy::ALL {
        assert_eq!(s.name().parse::<Strategy>().unwrap(), s);
    }
    assert!("swap".parse::<Strategy>().is_err());
}

#[test]
fn synonyms_follow_fixture_lemma_order() {
    let g = tiny();
    assert_eq!(replace_synonyms(&toks("dog"), &g), toks("domestic dog"));
    assert_eq!(replace_synonyms(&toks("entity"), &g), toks("entity"));
    assert_eq!(replace_synonyms(&toks("zyzzyva"), &g), toks("zyzzyva"));
    // the plural reduces to "man", which is not a replacement for itself
    let (out, trace) = replace_synonyms_traced(&toks("the men"), &g);
    assert_eq!(out, toks("the adult male"));
    assert_eq!(trace[0].source, "men");
}

#[test]
fn dataset_doubles_and_keeps_labels() {
    let g = tiny();
    let data = [
        pair(0, "a dog sees a cat", "the cat", 1),
        pair(1, "the man", "a woman", 0),
        pair(2, "entity", "x", 1),
    ];
    for strategy in Strategy::ALL {
        let spec = AugmentationSpec::new(strategy);
        let res = Resources {
            graph: Some(&g),
            client: None,
        };
        let (out, report) = augment_dataset(&data, &spec, res).unwrap();
        assert_eq!(out.len(), 6);
        assert_eq!(&out[..3], &data);
        for i in 0..3 {
            assert_eq!(out[3 + i].label, data[i].label);
            assert_eq!(out[3 + i].id, 3 + i);
        }
        assert_eq!((report.pairs_in, report.pairs_out), (3, 6));
        assert_eq!(
            augment_dataset(&data, &spec, res).unwrap().0,
            out,
            "{strategy}"
        );
    }
    let spec = AugmentationSpec::new(Strategy::ReplaceSynonyms);
    let res = Resources {
        graph: Some(&g),
        client: None,
    };
    let (_, report) = augment_dataset(&data, &spec, res).unwrap();
    // only the last pair lacks a replaceable word
    assert_eq!(report.noops, 1);
    let spec = AugmentationSpec::new(Strategy::SplitSwap);
    let (_, report) = augment_dataset(&data, &spec, res).unwrap();
    assert_eq!(report.noops, 1);
}

#[test]
fn dataset_errors() {
    let spec = AugmentationSpec::new(Strategy::ReplaceSynonyms);
    assert_eq!(
        augment_dataset(&[pair(0, "a", "b", 0)], &spec, Resources::default()).unwrap_err(),
        AugmentError::MissingGraph(Strategy::ReplaceSynonyms)
    );
    assert_eq!(
        augment_dataset(
            &[],
            &AugmentationSpec::new(Strategy::SplitSwap),
            Resources::default()
        )
        .unwrap_err(),
        AugmentError::EmptyDataset
    );
}
