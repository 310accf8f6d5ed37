use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use kgat::harness::{synth_dataset, write_tsv};
use kgat::wordnet::load_wordnet;
use serde_json::{json, Value};
use tempfile::TempDir;

fn wordnet() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/data/wordnet-mini")
}

fn kgat(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kgat"))
        .args(args)
        .env_remove("KGAT_WORDNET_DIR")
        .output()
        .unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn stdout_json(out: &Output) -> Value {
    assert_eq!(
        code(out),
        0,
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).unwrap()
}

struct Fixture {
    dir: TempDir,
}

impl Fixture {
    fn new() -> Fixture {
        let dir = TempDir::new().unwrap();
        let graph = load_wordnet(wordnet()).unwrap();
        write_tsv(
            dir.path().join("train.tsv"),
            &synth_dataset(&graph, 24, 1).unwrap(),
        )
        .unwrap();
        write_tsv(
            dir.path().join("eval.tsv"),
            &synth_dataset(&graph, 10, 2).unwrap(),
        )
        .unwrap();
        Fixture { dir }
    }

    fn path(&self, name: &str) -> String {
        self.dir.path().join(name).to_str().unwrap().to_string()
    }

    fn config(&self, name: &str, value: Value) -> String {
        let path = self.path(name);
        fs::write(&path, value.to_string()).unwrap();
        path
    }

    fn encoder_config(&self, d_ff: usize, learning_rate: f64) -> String {
        self.config(
            &format!("encoder-{d_ff}.json"),
            json!({
                "encoder": {"num_layers": 2, "num_heads": 2, "d_model": 8, "d_ff": d_ff, "max_len": 16,
                            "head_type": "binary-classifier"},
                "training": {"epochs": 2, "batch_size": 8, "learning_rate": learning_rate},
            }),
        )
    }

    fn esim_config(&self) -> String {
        self.config(
            "esim.json",
            json!({
                "esim": {"embedding_dim": 4, "hidden_dim": 4, "composition_dim": 4, "mlp_dim": 4,
                         "head_type": "binary-classifier"},
                "training": {"epochs": 2, "batch_size": 8},
            }),
        )
    }
}

#[test]
fn help_and_usage_codes() {
    assert_eq!(code(&kgat(&["--help"])), 0);
    assert_eq!(code(&kgat(&["--version"])), 0);
    assert_eq!(code(&kgat(&[])), 1);
    assert_eq!(code(&kgat(&["train", "--bogus"])), 1);
    assert_eq!(
        code(&kgat(&[
            "augment",
            "--strategy",
            "shuffle",
            "--data",
            "x",
            "--out",
            "y"
        ])),
        1
    );
    let help = kgat(&["augment", "--help"]);
    let text = String::from_utf8(help.stdout).unwrap();
    assert!(
        text.contains("[default: 5]") && text.contains("[default: 0.5]"),
        "{text}"
    );
    for command in [
        "build-sim",
        "train",
        "eval",
        "augment",
        "probe-layers",
        "learning-curve",
        "heatmap",
    ] {
        assert_eq!(code(&kgat(&[command, "--help"])), 0, "{command}");
    }
}

#[test]
fn heatmap_of_the_climbing_pair() {
    let dir = TempDir::new().unwrap();
    let prefix = dir.path().join("fig");
    let out = kgat(&[
        "heatmap",
        "--wordnet",
        wordnet().to_str().unwrap(),
        "--a",
        "A man is climbing a rope",
        "--b",
        "A man climbs a rope",
        "--out",
        prefix.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("fig.csv")).unwrap();
    let rows: Vec<Vec<&str>> = csv.lines().map(|l| l.split(',').collect()).collect();
    let col = rows[0].iter().position(|c| *c == "man").unwrap();
    let row = rows.iter().position(|r| r[0] == "man").unwrap();
    assert_eq!(rows[row][col], "1.000000");
    let climbs = rows[0].iter().position(|c| *c == "climbs").unwrap();
    let climbing = rows.iter().position(|r| r[0] == "climbing").unwrap();
    assert_eq!(rows[climbing][climbs], "1.000000");
    let pgm = fs::read(dir.path().join("fig.pgm")).unwrap();
    assert!(pgm.starts_with(b"P5\n5 6\n255\n"));
    assert_eq!(pgm.len(), "P5\n5 6\n255\n".len() + 30);
}

#[test]
fn heatmap_reads_the_environment_default() {
    let dir = TempDir::new().unwrap();
    let prefix = dir.path().join("h");
    let out = Command::new(env!("CARGO_BIN_EXE_kgat"))
        .args([
            "heatmap",
            "--a",
            "a dog",
            "--b",
            "a cat",
            "--out",
            prefix.to_str().unwrap(),
        ])
        .env("KGAT_WORDNET_DIR", wordnet())
        .output()
        .unwrap();
    assert_eq!(code(&out), 0);
    assert!(dir.path().join("h.csv").exists());
}

#[test]
fn guided_training_needs_a_cache() {
    let f = Fixture::new();
    let cfg = f.encoder_config(16, 1e-3);
    let out = kgat(&[
        "train",
        "--model",
        "encoder",
        "--config",
        &cfg,
        "--data",
        &f.path("train.tsv"),
        "--guided",
    ]);
    assert_eq!(code(&out), 1);
    let out = kgat(&[
        "train",
        "--model",
        "esim",
        "--config",
        &cfg,
        "--data",
        &f.path("train.tsv"),
    ]);
    assert_eq!(code(&out), 1, "config has no esim section");
}

#[test]
fn train_then_eval_is_reproducible() {
    let f = Fixture::new();
    let cfg = f.encoder_config(16, 1e-3);
    let mut checkpoints = Vec::new();
    for run in ["a", "b"] {
        let out = kgat(&[
            "train",
            "--model",
            "encoder",
            "--config",
            &cfg,
            "--data",
            &f.path("train.tsv"),
            "--seed",
            "3",
            "--out",
            &f.path(run),
        ]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        checkpoints.push(fs::read(f.path(&format!("{run}/model.ckpt"))).unwrap());
    }
    assert_eq!(checkpoints[0], checkpoints[1]);
    assert_eq!(&checkpoints[0][..4], b"KGAT");
    let history: Value =
        serde_json::from_str(&fs::read_to_string(f.path("a/history.json")).unwrap()).unwrap();
    assert_eq!(history["epoch_loss"].as_array().unwrap().len(), 2);
    assert_eq!(history["train_pairs"], 24);

    let report = stdout_json(&kgat(&[
        "eval",
        "--model",
        &f.path("a/model.ckpt"),
        "--data",
        &f.path("eval.tsv"),
    ]));
    let counts: u64 = ["tp", "fp", "fn", "tn"]
        .iter()
        .map(|k| report[k].as_u64().unwrap())
        .sum();
    assert_eq!(counts, 10);
    assert!(report["macro_f1"].is_number());

    let half = kgat(&[
        "train",
        "--model",
        "encoder",
        "--config",
        &cfg,
        "--fraction",
        "0.5",
        "--data",
        &f.path("train.tsv"),
        "--out",
        &f.path("half"),
    ]);
    assert_eq!(code(&half), 0);
    let history: Value =
        serde_json::from_str(&fs::read_to_string(f.path("half/history.json")).unwrap()).unwrap();
    assert_eq!(history["train_pairs"], 12);
}

#[test]
fn eval_against_a_different_architecture_names_the_tensor() {
    let f = Fixture::new();
    let out = kgat(&[
        "train",
        "--model",
        "encoder",
        "--config",
        &f.encoder_config(16, 1e-3),
        "--data",
        &f.path("train.tsv"),
        "--out",
        &f.path("m"),
    ]);
    assert_eq!(code(&out), 0);
    let other = f.encoder_config(12, 1e-3);
    let out = kgat(&[
        "eval",
        "--model",
        &f.path("m/model.ckpt"),
        "--data",
        &f.path("eval.tsv"),
        "--config",
        &other,
    ]);
    assert_eq!(code(&out), 2);
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("ffn.inner.weight"), "{err}");
    let same = kgat(&[
        "eval",
        "--model",
        &f.path("m/model.ckpt"),
        "--data",
        &f.path("eval.tsv"),
        "--config",
        &f.encoder_config(16, 1e-3),
    ]);
    assert_eq!(code(&same), 0);
}

#[test]
fn guided_pipelines_through_the_cache() {
    let f = Fixture::new();
    let wn = wordnet();
    let wn = wn.to_str().unwrap();
    for (model, cfg, full) in [
        ("encoder", f.encoder_config(16, 1e-3), true),
        ("esim", f.esim_config(), false),
    ] {
        let (cache, train) = (f.path(&format!("{model}.simm")), f.path("train.tsv"));
        let mut args = vec![
            "build-sim",
            "--wordnet",
            wn,
            "--data",
            &train,
            "--out",
            &cache,
        ];
        if full {
            args.extend(["--full", "--max-len", "16"]);
        }
        let out = kgat(&args);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        assert_eq!(String::from_utf8(out.stdout).unwrap().trim(), "24");
        assert_eq!(&fs::read(&cache).unwrap()[..4], b"SIMM");

        let dir = f.path(model);
        let out = kgat(&[
            "train",
            "--model",
            model,
            "--config",
            &cfg,
            "--data",
            &f.path("train.tsv"),
            "--guided",
            "--sim",
            &cache,
            "--out",
            &dir,
        ]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        let ckpt = format!("{dir}/model.ckpt");
        stdout_json(&kgat(&[
            "eval",
            "--model",
            &ckpt,
            "--data",
            &f.path("eval.tsv"),
            "--wordnet",
            wn,
        ]));
        let out = kgat(&["eval", "--model", &ckpt, "--data", &f.path("eval.tsv")]);
        assert_eq!(code(&out), 1, "guided eval without similarity source");
        let out = kgat(&[
            "eval",
            "--model",
            &ckpt,
            "--data",
            &f.path("eval.tsv"),
            "--sim",
            &cache,
        ]);
        assert_eq!(code(&out), 2, "cache built on another file");
    }
}

#[test]
fn augment_doubles_the_file() {
    let f = Fixture::new();
    let out_tsv = f.path("aug.tsv");
    let report = stdout_json(&kgat(&[
        "augment",
        "--strategy",
        "split_swap",
        "--data",
        &f.path("train.tsv"),
        "--out",
        &out_tsv,
    ]));
    assert_eq!(report["pairs_out"], 48);
    let text = fs::read_to_string(&out_tsv).unwrap();
    assert!(text.starts_with("label\ttext_a\ttext_b\n"));
    assert_eq!(text.lines().count(), 49);
    let out = kgat(&[
        "augment",
        "--strategy",
        "replace_synonyms",
        "--data",
        &f.path("train.tsv"),
        "--out",
        &out_tsv,
    ]);
    assert_eq!(code(&out), 1, "needs a graph");
    let out = kgat(&[
        "augment",
        "--strategy",
        "replace_synonyms",
        "--data",
        &f.path("train.tsv"),
        "--out",
        &out_tsv,
        "--wordnet",
        wordnet().to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0);
}

#[test]
fn probe_reports_every_layer() {
    let f = Fixture::new();
    let out = kgat(&[
        "train",
        "--model",
        "encoder",
        "--config",
        &f.encoder_config(16, 1e-3),
        "--data",
        &f.path("train.tsv"),
        "--out",
        &f.path("m"),
    ]);
    assert_eq!(code(&out), 0);
    let report = stdout_json(&kgat(&[
        "probe-layers",
        "--model",
        &f.path("m/model.ckpt"),
        "--data",
        &f.path("eval.tsv"),
        "--epochs",
        "3",
    ]));
    assert_eq!(report["layers"].as_array().unwrap().len(), 2);
    assert_eq!(report["fingerprint_before"], report["fingerprint_after"]);
}

#[test]
fn learning_curve_writes_json_and_csv() {
    let f = Fixture::new();
    let cfg = f.config(
        "curve.json",
        json!({
            "data": {"train": f.path("train.tsv"), "eval": f.path("eval.tsv")},
            "esim": {"embedding_dim": 4, "hidden_dim": 4, "composition_dim": 4, "mlp_dim": 4,
                     "head_type": "binary-classifier"},
            "training": {"epochs": 1, "batch_size": 8},
            "learning_curve": {"fractions": [0.5, 1.0], "seeds": [1, 2]},
        }),
    );
    let prefix = f.path("table");
    let result = stdout_json(&kgat(&[
        "learning-curve",
        "--config",
        &cfg,
        "--jobs",
        "2",
        "--out",
        &prefix,
    ]));
    assert_eq!(result["rows"].as_array().unwrap().len(), 4);
    assert_eq!(result["aggregates"].as_array().unwrap().len(), 2);
    assert_eq!(result["rows"][0]["train_pairs"], 12);
    let csv = fs::read_to_string(format!("{prefix}.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);
    let again = stdout_json(&kgat(&["learning-curve", "--config", &cfg, "--jobs", "1"]));
    assert_eq!(again, result);
    let bad = f.config("bad.json", json!({"esim": {}, "trainng": {}}));
    assert_eq!(code(&kgat(&["learning-curve", "--config", &bad])), 2);
}

#[test]
fn data_and_numeric_failures() {
    let f = Fixture::new();
    let bad = f.path("bad.tsv");
    fs::write(&bad, "label\ttext_a\ttext_b\n7\ta\tb\n").unwrap();
    let cfg = f.encoder_config(16, 1e-3);
    let out = kgat(&[
        "train", "--model", "encoder", "--config", &cfg, "--data", &bad,
    ]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8(out.stderr).unwrap().contains("bad.tsv:2"));
    let out = kgat(&[
        "train",
        "--model",
        "encoder",
        "--config",
        &cfg,
        "--data",
        &f.path("missing.tsv"),
    ]);
    assert_eq!(code(&out), 2);
    let corrupt = f.path("corrupt.ckpt");
    fs::write(&corrupt, b"KGAT\x01\x00\x00\x00garbage").unwrap();
    assert_eq!(
        code(&kgat(&[
            "eval",
            "--model",
            &corrupt,
            "--data",
            &f.path("eval.tsv")
        ])),
        2
    );

    let diverging = f.encoder_config(16, 1e30);
    let out = kgat(&[
        "train",
        "--model",
        "encoder",
        "--config",
        &diverging,
        "--data",
        &f.path("train.tsv"),
        "--out",
        &f.path("nan"),
    ]);
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
}
