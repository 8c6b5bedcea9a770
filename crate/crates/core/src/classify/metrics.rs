use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Labels ordered by descending score, ties by ascending label index.
pub fn rank_labels(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order
}

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

fn f1(p: f64, r: f64) -> f64 {
    ratio(2.0 * p * r, p + r)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MulticlassMetrics {
    pub accuracy: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub per_class_f1: Vec<f64>,
    /// Classes with no true document; they count as zero in the averages.
    pub absent_classes: Vec<usize>,
}

/// Accuracy and macro-averaged precision, recall and F1 over `n_classes`
/// classes. Undefined ratios count as zero.
pub fn evaluate_multiclass(predictions: &[usize], truth: &[usize], n_classes: usize) -> Result<MulticlassMetrics> {
    if predictions.len() != truth.len() {
        return Err(Error::Data(format!(
            "{} predictions for {} documents",
            predictions.len(),
            truth.len()
        )));
    }
    if truth.is_empty() {
        return Err(Error::Data("cannot evaluate an empty prediction set".into()));
    }
    let n_classes = n_classes
        .max(truth.iter().max().map_or(0, |m| m + 1))
        .max(predictions.iter().max().map_or(0, |m| m + 1));
    let mut tp = vec![0usize; n_classes];
    let mut predicted = vec![0usize; n_classes];
    let mut actual = vec![0usize; n_classes];
    for (&p, &t) in predictions.iter().zip(truth) {
        predicted[p] += 1;
        actual[t] += 1;
        if p == t {
            tp[p] += 1;
        }
    }
    let mut per_class_f1 = Vec::with_capacity(n_classes);
    let (mut sp, mut sr) = (0.0, 0.0);
    for c in 0..n_classes {
        let p = ratio(tp[c] as f64, predicted[c] as f64);
        let r = ratio(tp[c] as f64, actual[c] as f64);
        sp += p;
        sr += r;
        per_class_f1.push(f1(p, r));
    }
    let absent_classes: Vec<usize> = (0..n_classes).filter(|&c| actual[c] == 0).collect();
    if !absent_classes.is_empty() {
        log::warn!("classes {absent_classes:?} have no test documents and score zero");
    }
    let n = n_classes as f64;
    Ok(MulticlassMetrics {
        accuracy: tp.iter().sum::<usize>() as f64 / truth.len() as f64,
        macro_precision: sp / n,
        macro_recall: sr / n,
        macro_f1: per_class_f1.iter().sum::<f64>() / n,
        per_class_f1,
        absent_classes,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultilabelMetrics {
    pub p_at_1: f64,
    pub p_at_5: f64,
    pub ndcg_at_5: f64,
    pub coverage_error: f64,
    pub lraps: f64,
    pub macro_f1: f64,
}

/// Precision at `k` for one document given its ranking.
fn precision_at(ranking: &[usize], truth: &[bool], k: usize) -> f64 {
    ranking.iter().take(k).filter(|&&l| truth[l]).count() as f64 / k as f64
}

fn ndcg_at(ranking: &[usize], truth: &[bool], n_true: usize, k: usize) -> f64 {
    let discount = |i: usize| 1.0 / ((i + 2) as f64).log2();
    let dcg: f64 = ranking
        .iter()
        .take(k)
        .enumerate()
        .filter(|(_, &l)| truth[l])
        .map(|(i, _)| discount(i))
        .sum();
    let ideal: f64 = (0..k.min(n_true)).map(discount).sum();
    ratio(dcg, ideal)
}

/// Ranking metrics over per-label scores plus macro F1 with a positive
/// decision at score > 0.
pub fn evaluate_multilabel(
    scores: &[Vec<f64>],
    truth: &[Vec<usize>],
    ids: Option<&[String]>,
) -> Result<MultilabelMetrics> {
    if scores.len() != truth.len() {
        return Err(Error::Data(format!(
            "{} score rows for {} documents",
            scores.len(),
            truth.len()
        )));
    }
    if scores.is_empty() {
        return Err(Error::Data("cannot evaluate an empty prediction set".into()));
    }
    let n_labels = scores[0].len();
    let mut sums = [0.0f64; 5];
    let mut tp = vec![0usize; n_labels];
    let mut predicted = vec![0usize; n_labels];
    let mut actual = vec![0usize; n_labels];
    for (doc, (s, t)) in scores.iter().zip(truth).enumerate() {
        let name = || ids.and_then(|ids| ids.get(doc)).cloned().unwrap_or_else(|| format!("#{doc}"));
        if t.is_empty() {
            return Err(Error::Data(format!("document {} has an empty label set", name())));
        }
        if s.len() != n_labels {
            return Err(Error::Dimension {
                expected: n_labels,
                found: s.len(),
            });
        }
        let mut is_true = vec![false; n_labels];
        for &l in t {
            if l >= n_labels {
                return Err(Error::Data(format!("document {} has label {l} out of range", name())));
            }
            is_true[l] = true;
        }
        let n_true = is_true.iter().filter(|b| **b).count();
        let ranking = rank_labels(s);
        let mut rank = vec![0usize; n_labels];
        for (pos, &l) in ranking.iter().enumerate() {
            rank[l] = pos + 1;
        }
        sums[0] += precision_at(&ranking, &is_true, 1);
        sums[1] += precision_at(&ranking, &is_true, 5);
        sums[2] += ndcg_at(&ranking, &is_true, n_true, 5);
        sums[3] += (0..n_labels).filter(|&l| is_true[l]).map(|l| rank[l]).max().unwrap_or(0) as f64;
        let mut ap = 0.0;
        let mut hits = 0usize;
        for (pos, &l) in ranking.iter().enumerate() {
            if is_true[l] {
                hits += 1;
                ap += hits as f64 / (pos + 1) as f64;
            }
        }
        sums[4] += ap / n_true as f64;
        for l in 0..n_labels {
            let pos = s[l] > 0.0;
            predicted[l] += usize::from(pos);
            actual[l] += usize::from(is_true[l]);
            tp[l] += usize::from(pos && is_true[l]);
        }
    }
    let n = scores.len() as f64;
    let macro_f1 = (0..n_labels)
        .map(|l| f1(ratio(tp[l] as f64, predicted[l] as f64), ratio(tp[l] as f64, actual[l] as f64)))
        .sum::<f64>()
        / n_labels.max(1) as f64;
    Ok(MultilabelMetrics {
        p_at_1: sums[0] / n,
        p_at_5: sums[1] / n,
        ndcg_at_5: sums[2] / n,
        coverage_error: sums[3] / n,
        lraps: sums[4] / n,
        macro_f1,
    })
}

/// Flat metrics report with fixed key names.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub accuracy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub macro_precision: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub macro_recall: Option<f64>,
    pub macro_f1: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_at_1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_at_5: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ndcg_at_5: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub coverage_error: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lraps: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub per_class_f1: Vec<f64>,
}

impl From<MulticlassMetrics> for MetricsReport {
    fn from(m: MulticlassMetrics) -> Self {
        Self {
            accuracy: Some(m.accuracy),
            macro_precision: Some(m.macro_precision),
            macro_recall: Some(m.macro_recall),
            macro_f1: m.macro_f1,
            per_class_f1: m.per_class_f1,
            ..Default::default()
        }
    }
}

impl From<MultilabelMetrics> for MetricsReport {
    fn from(m: MultilabelMetrics) -> Self {
        Self {
            macro_f1: m.macro_f1,
            p_at_1: Some(m.p_at_1),
            p_at_5: Some(m.p_at_5),
            ndcg_at_5: Some(m.ndcg_at_5),
            coverage_error: Some(m.coverage_error),
            lraps: Some(m.lraps),
            ..Default::default()
        }
    }
}

impl MetricsReport {
    /// `(key, value)` pairs in fixed order, present metrics only.
    pub fn entries(&self) -> Vec<(&'static str, f64)> {
        let opt = [
            ("accuracy", self.accuracy),
            ("macro_precision", self.macro_precision),
            ("macro_recall", self.macro_recall),
            ("macro_f1", Some(self.macro_f1)),
            ("p_at_1", self.p_at_1),
            ("p_at_5", self.p_at_5),
            ("ndcg_at_5", self.ndcg_at_5),
            ("coverage_error", self.coverage_error),
            ("lraps", self.lraps),
        ];
        opt.into_iter().filter_map(|(k, v)| v.map(|v| (k, v))).collect()
    }

    /// One `key value` line per metric.
    pub fn to_key_value(&self) -> String {
        self.entries()
            .into_iter()
            .map(|(k, v)| format!("{k} {v:.6}\n"))
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}
