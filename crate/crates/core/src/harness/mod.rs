//! Dataset I/O, metrics, layer probing, learning curves and a synthetic
//! paraphrase generator.

mod curve;
mod data;
mod metrics;
mod probe;
mod synth;

pub use curve::{
    aggregate, default_fractions, learning_curve, write_curve_csv, Band, CurveAggregate,
    CurveResult, CurveRow,
};
pub use data::{
    format_tsv, load_tsv, parse_label, parse_tsv, write_tsv, DataError, HeadType, Label,
    SentencePair, TSV_HEADER,
};
pub use metrics::{
    average_ranks, classification_metrics, metrics, pearson, spearman, MetricsReport,
};
pub use probe::{probe_layers, LayerReport, ProbeOptions, ProbeReport, MIN_HOLDOUT_PAIRS};
pub use synth::{
    synth_dataset, third_person, SynthError, MAX_NEGATIVE_OVERLAP, MIN_SYNONYM_WORDS,
    REPLACE_PROBABILITY,
};
