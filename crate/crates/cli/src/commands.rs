use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use kgat::augment::{
    augment_dataset, AugmentationSpec, HttpClient, IdentityClient, Resources, TranslationClient,
};
use kgat::harness::{
    learning_curve as run_curve, load_tsv, metrics, probe_layers, write_curve_csv, write_tsv,
    Label, ProbeOptions, SentencePair,
};
use kgat::simmatrix::{
    build_full_matrix, build_pair_matrix, export_heatmap, read_cache, write_cache, DenseMatrix,
};
use kgat::text::{encode_pair, tokenize, Vocab};
use kgat::train::ModelError;
use kgat::wordnet::{load_wordnet, WordNetGraph};
use log::{info, warn};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{require_dir, require_file, ModelKind, RunConfig};
use crate::failure::{data, usage, Failure};
use crate::model::{vocab_of, Inputs, Model};
use crate::{AugmentArgs, BuildSimArgs, CurveArgs, EvalArgs, HeatmapArgs, ProbeArgs, TrainArgs};

type Outcome = Result<(), Failure>;

fn graph(dir: &Path) -> Result<WordNetGraph, Failure> {
    require_dir(dir)?;
    Ok(load_wordnet(dir)?)
}

fn print_json<T: Serialize>(value: &T) -> Outcome {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value).map_err(data)?;
    writeln!(out)?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Outcome {
    let mut text = serde_json::to_string_pretty(value).map_err(data)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| data(format!("{}: {e}", path.display())))
}

fn labels(pairs: &[SentencePair]) -> Vec<Label> {
    pairs.iter().map(|p| p.label).collect()
}

fn translation_client(endpoint: Option<&str>) -> Box<dyn TranslationClient> {
    match endpoint {
        Some(url) => Box::new(HttpClient::new(url)),
        None => Box::new(IdentityClient),
    }
}

fn augment_with(
    pairs: &[SentencePair],
    spec: &AugmentationSpec,
    graph: Option<&WordNetGraph>,
    endpoint: Option<&str>,
) -> Result<Vec<SentencePair>, Failure> {
    let client = translation_client(endpoint);
    let res = Resources {
        graph,
        client: Some(client.as_ref()),
    };
    let (out, report) = augment_dataset(pairs, spec, res)?;
    info!(
        "{}: {} pairs in, {} out, {} unchanged, {} translation failures",
        report.strategy, report.pairs_in, report.pairs_out, report.noops, report.failures
    );
    Ok(out)
}

pub fn build_sim(args: BuildSimArgs) -> Outcome {
    require_file(&args.data)?;
    let g = graph(&args.wordnet)?;
    let pairs = load_tsv(&args.data, args.head.into())?;
    if args.full && args.max_len < 4 {
        return Err(usage("--max-len must be at least 4"));
    }
    let vocab = Vocab::reserved_only();
    let matrices: Vec<DenseMatrix> = pairs
        .par_iter()
        .map(|p| {
            let (a, b) = (tokenize(&p.text_a), tokenize(&p.text_b));
            if args.full {
                let encoded = encode_pair(&vocab, &a, &b, args.max_len).expect("max_len checked");
                build_full_matrix(&g, &encoded).0
            } else {
                build_pair_matrix(&g, &a, &b).matrix
            }
        })
        .collect();
    write_cache(&args.out, &matrices)?;
    println!("{}", matrices.len());
    Ok(())
}

pub fn train(args: TrainArgs) -> Outcome {
    if args.guided && args.sim.is_none() {
        return Err(usage("--guided needs --sim"));
    }
    if !args.guided && args.sim.is_some() {
        return Err(usage("--sim is only used with --guided"));
    }
    require_file(&args.config)?;
    let run = RunConfig::load(&args.config)?;
    let kind = run.kind(Some(args.model))?;
    let head = run.head_type(kind)?;
    let data_path = args
        .data
        .clone()
        .or_else(|| run.data.train.clone())
        .ok_or_else(|| usage("no training data: pass --data or set data.train"))?;
    require_file(&data_path)?;
    if let Some(sim) = &args.sim {
        require_file(sim)?;
        if run.augmentation.is_some() {
            return Err(usage(
                "--sim cannot be combined with augmentation; build the cache on an augmented TSV",
            ));
        }
    }
    let wordnet = run.wordnet(run.needs_graph())?.map(Path::to_path_buf);
    let out_dir = run.output_dir(args.out.as_deref())?;

    let mut opts = run.training.clone();
    opts.fraction = args.fraction.unwrap_or(opts.fraction);
    opts.seed = args.seed.unwrap_or(opts.seed);

    let mut pairs = load_tsv(&data_path, head)?;
    if let Some(spec) = &run.augmentation {
        let g = wordnet.as_deref().map(graph).transpose()?;
        pairs = augment_with(&pairs, spec, g.as_ref(), run.translate_endpoint.as_deref())?;
    }
    let vocab = vocab_of(&pairs, run.min_freq);
    let mut model = Model::build(&run, kind, vocab, args.guided, args.seed)?;
    let inputs = match &args.sim {
        Some(path) => model.prepare_cached(&pairs, read_cache(path)?)?,
        None => model.prepare(&pairs, None),
    };
    let history = model.fit(&inputs, &labels(&pairs), &opts)?;
    model.save(&out_dir.join("model.ckpt"))?;
    write_json(&out_dir.join("history.json"), &history)?;
    eprintln!(
        "trained {kind} on {} pairs for {} steps; final loss {:.4}; wrote {}",
        history.train_pairs,
        history.steps,
        history.epoch_loss.last().copied().unwrap_or(f64::NAN),
        out_dir.display()
    );
    Ok(())
}

/// Inputs for a loaded model: cached matrices, else a graph for guided models.
fn inputs_for(
    model: &Model,
    pairs: &[SentencePair],
    sim: Option<&Path>,
    wordnet: Option<&Path>,
) -> Result<Inputs, Failure> {
    if let Some(path) = sim {
        return model.prepare_cached(pairs, read_cache(path)?);
    }
    if !model.guided() {
        return Ok(model.prepare(pairs, None));
    }
    let dir = wordnet.ok_or_else(|| usage("guided checkpoint needs --sim or --wordnet"))?;
    Ok(model.prepare(pairs, Some(&graph(dir)?)))
}

pub fn eval(args: EvalArgs) -> Outcome {
    require_file(&args.model)?;
    require_file(&args.data)?;
    if let Some(p) = &args.sim {
        require_file(p)?;
    }
    let model = match &args.config {
        Some(path) => {
            require_file(path)?;
            Model::load_into(&args.model, &RunConfig::load(path)?)?
        }
        None => Model::load(&args.model)?,
    };
    let pairs = load_tsv(&args.data, model.head())?;
    let inputs = inputs_for(&model, &pairs, args.sim.as_deref(), args.wordnet.as_deref())?;
    let preds = model.predict(&inputs)?;
    print_json(&metrics(&preds, &labels(&pairs), model.head()))
}

#[derive(Serialize)]
struct AugmentOutput<'a> {
    output: &'a Path,
    #[serde(flatten)]
    report: kgat::augment::AugmentReport,
}

pub fn augment(args: AugmentArgs) -> Outcome {
    require_file(&args.data)?;
    let spec = AugmentationSpec {
        strategy: args.strategy,
        k: args.k,
        p: args.p,
        seed: args.seed,
        pivot: args.pivot.clone(),
    };
    spec.validate()?;
    let g = match &args.wordnet {
        Some(dir) => Some(graph(dir)?),
        None => None,
    };
    if args.translate_endpoint.is_none()
        && spec.strategy == kgat::augment::Strategy::BackTranslation
    {
        warn!("no --translate-endpoint; back translation uses the identity client");
    }
    let pairs = load_tsv(&args.data, args.head.into())?;
    let client = translation_client(args.translate_endpoint.as_deref());
    let res = Resources {
        graph: g.as_ref(),
        client: Some(client.as_ref()),
    };
    let (out, report) = augment_dataset(&pairs, &spec, res)?;
    write_tsv(&args.out, &out)?;
    print_json(&AugmentOutput {
        output: &args.out,
        report,
    })
}

pub fn probe(args: ProbeArgs) -> Outcome {
    require_file(&args.model)?;
    require_file(&args.data)?;
    let model = Model::load(&args.model)?;
    let encoder = model.encoder()?;
    let g = match (&args.wordnet, encoder.guided()) {
        (Some(dir), true) => Some(graph(dir)?),
        (None, true) => return Err(usage("guided checkpoint needs --wordnet")),
        (_, false) => None,
    };
    let pairs = load_tsv(&args.data, model.head())?;
    let opts = ProbeOptions {
        epochs: args.epochs,
        batch_size: args.batch_size,
        learning_rate: args.learning_rate,
        holdout_fraction: args.holdout,
        seed: args.seed,
    };
    print_json(&probe_layers(encoder, &pairs, g.as_ref(), &opts)?)
}

#[derive(Serialize)]
struct CurveOutput {
    model: ModelKind,
    guided: bool,
    train_pairs: usize,
    eval_pairs: usize,
    #[serde(flatten)]
    result: kgat::harness::CurveResult,
}

pub fn learning_curve(args: CurveArgs) -> Outcome {
    require_file(&args.config)?;
    let run = RunConfig::load(&args.config)?;
    let kind = run.kind(None)?;
    let head = run.head_type(kind)?;
    let (train_path, eval_path) = match (&run.data.train, &run.data.eval) {
        (Some(t), Some(e)) => (t.clone(), e.clone()),
        _ => return Err(usage("learning curves need data.train and data.eval")),
    };
    require_file(&train_path)?;
    require_file(&eval_path)?;
    let wordnet = run
        .wordnet(run.guided || run.needs_graph())?
        .map(Path::to_path_buf);
    let prefix = match (&args.out, &run.output_dir) {
        (Some(p), _) => Some(p.clone()),
        (None, Some(_)) => Some(run.output_dir(None)?.join("curve")),
        (None, None) => None,
    };
    if let Some(parent) = prefix
        .as_deref()
        .and_then(Path::parent)
        .filter(|p| !p.as_os_str().is_empty())
    {
        require_dir(parent)?;
    }

    let g = wordnet.as_deref().map(graph).transpose()?;
    let mut train_pairs = load_tsv(&train_path, head)?;
    if let Some(spec) = &run.augmentation {
        train_pairs = augment_with(
            &train_pairs,
            spec,
            g.as_ref(),
            run.translate_endpoint.as_deref(),
        )?;
    }
    let eval_pairs = load_tsv(&eval_path, head)?;
    let vocab = vocab_of(&train_pairs, run.min_freq);
    let template = Model::build(&run, kind, vocab.clone(), run.guided, None)?;
    let train_inputs = template.prepare(&train_pairs, g.as_ref());
    let eval_inputs = template.prepare(&eval_pairs, g.as_ref());
    let (train_labels, eval_labels) = (labels(&train_pairs), labels(&eval_pairs));

    let cell = |fraction: f64, seed: u64| {
        let mut model = Model::build(&run, kind, vocab.clone(), run.guided, Some(seed))
            .map_err(|f| ModelError::Config(f.to_string()))?;
        let mut opts = run.training.clone();
        opts.fraction = fraction;
        opts.seed = seed;
        let history = model.fit(&train_inputs, &train_labels, &opts)?;
        let preds = model.predict(&eval_inputs)?;
        Ok((history.train_pairs, metrics(&preds, &eval_labels, head)))
    };
    let result = run_curve(
        &run.learning_curve.fractions,
        &run.learning_curve.seeds,
        args.jobs,
        cell,
    )
    .map_err(Failure::from)?;
    let output = CurveOutput {
        model: kind,
        guided: run.guided,
        train_pairs: train_inputs.len(),
        eval_pairs: eval_inputs.len(),
        result,
    };
    if let Some(prefix) = prefix {
        let json_path = with_suffix(&prefix, "json");
        write_json(&json_path, &output)?;
        let csv_path = with_suffix(&prefix, "csv");
        let file = fs::File::create(&csv_path)
            .map_err(|e| data(format!("{}: {e}", csv_path.display())))?;
        write_curve_csv(&output.result, file).map_err(data)?;
        eprintln!("wrote {} and {}", json_path.display(), csv_path.display());
    }
    print_json(&output)
}

fn with_suffix(prefix: &Path, ext: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}

pub fn heatmap(args: HeatmapArgs) -> Outcome {
    let g = graph(&args.wordnet)?;
    let m = build_pair_matrix(&g, &tokenize(&args.a), &tokenize(&args.b));
    let (csv, pgm) = (with_suffix(&args.out, "csv"), with_suffix(&args.out, "pgm"));
    export_heatmap(&m, &csv, &pgm).map_err(|e| data(format!("{}: {e}", args.out.display())))?;
    eprintln!("wrote {} and {}", csv.display(), pgm.display());
    Ok(())
}
