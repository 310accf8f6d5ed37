use serde::{Deserialize, Serialize};

use super::{HeadType, Label};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub f1_positive: Option<f64>,
    pub macro_f1: Option<f64>,
    pub accuracy: Option<f64>,
    /// `None` when either side has zero variance or fewer than two values.
    pub pearson: Option<f64>,
    pub spearman: Option<f64>,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
}

fn f1(tp: usize, fp: usize, fn_: usize) -> f64 {
    let p = if tp + fp == 0 {
        0.0
    } else {
        tp as f64 / (tp + fp) as f64
    };
    let r = if tp + fn_ == 0 {
        0.0
    } else {
        tp as f64 / (tp + fn_) as f64
    };
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Classification metrics from 0/1 predictions and golds.
pub fn classification_metrics(preds: &[usize], golds: &[usize]) -> MetricsReport {
    let mut m = MetricsReport::default();
    for (&p, &g) in preds.iter().zip(golds) {
        match (p == 1, g == 1) {
            (true, true) => m.tp += 1,
            (true, false) => m.fp += 1,
            (false, true) => m.fn_ += 1,
            (false, false) => m.tn += 1,
        }
    }
    let total = m.tp + m.fp + m.fn_ + m.tn;
    let pos = f1(m.tp, m.fp, m.fn_);
    let neg = f1(m.tn, m.fn_, m.fp);
    m.f1_positive = Some(pos);
    m.macro_f1 = Some((pos + neg) / 2.0);
    m.accuracy = Some(if total == 0 {
        0.0
    } else {
        (m.tp + m.tn) as f64 / total as f64
    });
    m
}

pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len();
    if n < 2 || y.len() != n {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (&a, &b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// 1-based ranks; tied values share the mean of the ranks they span.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && x[order[j + 1]] == x[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    pearson(&average_ranks(x), &average_ranks(y))
}

/// Metrics for the given head type. Panics if lengths differ.
pub fn metrics(preds: &[Label], golds: &[Label], head: HeadType) -> MetricsReport {
    assert_eq!(preds.len(), golds.len(), "prediction/gold length mismatch");
    match head {
        HeadType::BinaryClassifier => {
            let cls = |v: &[Label]| {
                v.iter()
                    .map(|l| l.as_f64().round() as usize)
                    .collect::<Vec<_>>()
            };
            classification_metrics(&cls(preds), &cls(golds))
        }
        HeadType::Regressor => {
            let p: Vec<f64> = preds.iter().map(|l| l.as_f64()).collect();
            let g: Vec<f64> = golds.iter().map(|l| l.as_f64()).collect();
            MetricsReport {
                pearson: pearson(&p, &g),
                spearman: spearman(&p, &g),
                ..MetricsReport::default()
            }
        }
    }
}
