use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::train::ModelError;

use super::MetricsReport;

/// Fractions 0.1, 0.2, ..., 1.0.
pub fn default_fractions() -> Vec<f64> {
    (1..=10).map(|i| f64::from(i) / 10.0).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub fraction: f64,
    pub seed: u64,
    pub train_pairs: usize,
    pub metrics: MetricsReport,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub mean: f64,
    /// Sample standard deviation; 0 for a single run.
    pub std: f64,
}

impl Band {
    fn of(values: &[f64]) -> Band {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        };
        Band { mean, std }
    }
}

/// Per-fraction summary. A metric is summarized only when every run reports it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveAggregate {
    pub fraction: f64,
    pub runs: usize,
    pub f1_positive: Option<Band>,
    pub macro_f1: Option<Band>,
    pub accuracy: Option<Band>,
    pub pearson: Option<Band>,
    pub spearman: Option<Band>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveResult {
    pub rows: Vec<CurveRow>,
    pub aggregates: Vec<CurveAggregate>,
}

fn band(rows: &[&CurveRow], get: fn(&MetricsReport) -> Option<f64>) -> Option<Band> {
    let values: Option<Vec<f64>> = rows.iter().map(|r| get(&r.metrics)).collect();
    values.filter(|v| !v.is_empty()).map(|v| Band::of(&v))
}

/// Summarize rows per fraction, in order of first appearance.
pub fn aggregate(rows: &[CurveRow]) -> Vec<CurveAggregate> {
    let mut fractions: Vec<f64> = Vec::new();
    for r in rows {
        if !fractions.contains(&r.fraction) {
            fractions.push(r.fraction);
        }
    }
    fractions
        .into_iter()
        .map(|fraction| {
            let group: Vec<&CurveRow> = rows.iter().filter(|r| r.fraction == fraction).collect();
            CurveAggregate {
                fraction,
                runs: group.len(),
                f1_positive: band(&group, |m| m.f1_positive),
                macro_f1: band(&group, |m| m.macro_f1),
                accuracy: band(&group, |m| m.accuracy),
                pearson: band(&group, |m| m.pearson),
                spearman: band(&group, |m| m.spearman),
            }
        })
        .collect()
}

/// Run `cell(fraction, seed)` for every combination on up to `jobs` threads.
/// Each cell subsamples independently, so smaller fractions are not subsets
/// of larger ones. `cell` returns the training-set size and held-out metrics.
pub fn learning_curve<F>(
    fractions: &[f64],
    seeds: &[u64],
    jobs: usize,
    cell: F,
) -> Result<CurveResult, ModelError>
where
    F: Fn(f64, u64) -> Result<(usize, MetricsReport), ModelError> + Sync,
{
    if seeds.is_empty() || fractions.is_empty() {
        return Err(ModelError::Config(
            "learning curve needs at least one fraction and one seed".into(),
        ));
    }
    if let Some(f) = fractions.iter().find(|f| !(**f > 0.0 && **f <= 1.0)) {
        return Err(ModelError::Config(format!("fraction {f} outside (0, 1]")));
    }
    let cells: Vec<(f64, u64)> = fractions
        .iter()
        .flat_map(|&f| seeds.iter().map(move |&s| (f, s)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| ModelError::Config(e.to_string()))?;
    let rows = pool.install(|| {
        cells
            .par_iter()
            .map(|&(fraction, seed)| {
                let (train_pairs, metrics) = cell(fraction, seed)?;
                Ok(CurveRow {
                    fraction,
                    seed,
                    train_pairs,
                    metrics,
                })
            })
            .collect::<Result<Vec<_>, ModelError>>()
    })?;
    let aggregates = aggregate(&rows);
    Ok(CurveResult { rows, aggregates })
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// One CSV line per row; absent metrics are empty fields.
pub fn write_curve_csv<W: Write>(result: &CurveResult, out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "fraction",
        "seed",
        "train_pairs",
        "f1_positive",
        "macro_f1",
        "accuracy",
        "pearson",
        "spearman",
    ])?;
    for r in &result.rows {
        let m = &r.metrics;
        w.write_record([
            r.fraction.to_string(),
            r.seed.to_string(),
            r.train_pairs.to_string(),
            cell(m.f1_positive),
            cell(m.macro_f1),
            cell(m.accuracy),
            cell(m.pearson),
            cell(m.spearman),
        ])?;
    }
    w.flush()?;
    Ok(())
}
