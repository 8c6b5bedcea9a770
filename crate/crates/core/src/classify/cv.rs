use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{argmax, evaluate_multiclass, evaluate_multilabel, predict, train_linear, LinearConfig};
use crate::composition::DocVector;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvScore {
    pub l: usize,
    pub fold_f1: Vec<f64>,
    pub mean_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub best_l: usize,
    pub folds: usize,
    pub scores: Vec<CvScore>,
}

/// Fold index per document, stratified on each document's first label.
/// A fold lacking some class is merged into its neighbour until every
/// fold holds every class or two folds remain. Returns the assignment and
/// the final fold count.
pub fn stratified_folds(labels: &[Vec<usize>], folds: usize, seed: u64) -> (Vec<usize>, usize) {
    let mut groups: BTreeMap<Option<usize>, Vec<usize>> = BTreeMap::new();
    for (i, l) in labels.iter().enumerate() {
        groups.entry(l.iter().min().copied()).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fold = vec![0usize; labels.len()];
    let mut next = 0usize;
    for docs in groups.values_mut() {
        docs.shuffle(&mut rng);
        for &d in docs.iter() {
            fold[d] = next % folds;
            next += 1;
        }
    }
    let all: BTreeSet<usize> = labels.iter().flatten().copied().collect();
    let mut n = folds.min(labels.len()).max(1);
    loop {
        let mut present = vec![BTreeSet::new(); n];
        for (d, l) in labels.iter().enumerate() {
            present[fold[d]].extend(l.iter().copied());
        }
        let Some(bad) = (0..n).find(|&f| present[f] != all) else {
            break;
        };
        if n <= 2 {
            log::warn!("fold {bad} still lacks some classes with only {n} folds left");
            break;
        }
        let into = if bad + 1 < n { bad + 1 } else { bad - 1 };
        log::warn!("fold {bad} lacks some classes; merging it into fold {into}");
        let (lo, hi) = (bad.min(into), bad.max(into));
        for f in &mut fold {
            if *f == hi {
                *f = lo;
            } else if *f > hi {
                *f -= 1;
            }
        }
        n -= 1;
    }
    (fold, n)
}

fn fold_f1(
    vectors: &[DocVector],
    labels: &[Vec<usize>],
    n_labels: usize,
    multilabel: bool,
    train: &[usize],
    test: &[usize],
    cfg: &LinearConfig,
) -> Result<f64> {
    let xs: Vec<DocVector> = train.iter().map(|&i| vectors[i].clone()).collect();
    let ys: Vec<Vec<usize>> = train.iter().map(|&i| labels[i].clone()).collect();
    let model = train_linear(&xs, &ys, n_labels, cfg)?;
    let scores = test
        .iter()
        .map(|&i| predict(&model, &vectors[i]))
        .collect::<Result<Vec<_>>>()?;
    if multilabel {
        let truth: Vec<Vec<usize>> = test.iter().map(|&i| labels[i].clone()).collect();
        Ok(evaluate_multilabel(&scores, &truth, None)?.macro_f1)
    } else {
        let pred: Vec<usize> = scores.iter().map(|s| argmax(s)).collect();
        let truth: Vec<usize> = test.iter().map(|&i| labels[i][0]).collect();
        Ok(evaluate_multiclass(&pred, &truth, n_labels)?.macro_f1)
    }
}

/// Picks the sparsity constant with the best mean macro F1 over stratified
/// folds of the training documents. `featurize(l)` returns one vector per
/// training document built with constant `l`. Ties go to the smaller `l`.
pub fn cross_validate_l<F>(
    labels: &[Vec<usize>],
    n_labels: usize,
    multilabel: bool,
    candidates: &[usize],
    folds: usize,
    classifier: &LinearConfig,
    mut featurize: F,
) -> Result<CvResult>
where
    F: FnMut(usize) -> Result<Vec<DocVector>>,
{
    if candidates.is_empty() {
        return Err(Error::Config("no candidate values for l".into()));
    }
    if folds < 2 {
        return Err(Error::Config("cross-validation needs at least 2 folds".into()));
    }
    if labels.len() < 2 {
        return Err(Error::Data("cross-validation needs at least 2 training documents".into()));
    }
    if !multilabel {
        if let Some((i, _)) = labels.iter().enumerate().find(|(_, l)| l.len() != 1) {
            return Err(Error::Data(format!("document #{i} needs exactly one label")));
        }
    }
    let (assignment, n_folds) = stratified_folds(labels, folds, classifier.seed);
    let mut sorted = candidates.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let mut scores = Vec::with_capacity(sorted.len());
    for &l in &sorted {
        let vectors = featurize(l)?;
        if vectors.len() != labels.len() {
            return Err(Error::Data(format!(
                "featurization returned {} vectors for {} documents",
                vectors.len(),
                labels.len()
            )));
        }
        let mut fold_scores = Vec::with_capacity(n_folds);
        for f in 0..n_folds {
            let (test, train): (Vec<usize>, Vec<usize>) = (0..labels.len()).partition(|&i| assignment[i] == f);
            fold_scores.push(fold_f1(&vectors, labels, n_labels, multilabel, &train, &test, classifier)?);
        }
        let mean = fold_scores.iter().sum::<f64>() / n_folds as f64;
        log::info!("l={l}: mean macro F1 {mean:.4} over {n_folds} folds");
        scores.push(CvScore {
            l,
            fold_f1: fold_scores,
            mean_f1: mean,
        });
    }
    let mut best = 0;
    for (i, s) in scores.iter().enumerate() {
        if s.mean_f1 > scores[best].mean_f1 {
            best = i;
        }
    }
    Ok(CvResult {
        best_l: scores[best].l,
        folds: n_folds,
        scores,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(n: usize) -> (Vec<DocVector>, Vec<Vec<usize>>) {
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for i in 0..n {
            let c = i % 3;
            let mut v = vec![0.0; 3];
            v[c] = 1.0 + (i as f64 * 0.1).sin() * 0.1;
            xs.push(DocVector::Dense(v));
            ys.push(vec![c]);
        }
        (xs, ys)
    }

    #[test]
    fn folds_are_stratified() {
        let (_, ys) = toy(30);
        let (f, n) = stratified_folds(&ys, 5, 1);
        assert_eq!(n, 5);
        for fold in 0..5 {
            let mut counts = [0; 3];
            for (i, y) in ys.iter().enumerate() {
                if f[i] == fold {
                    counts[y[0]] += 1;
                }
            }
            assert_eq!(counts, [2, 2, 2]);
        }
    }

    #[test]
    fn rare_class_merges_folds() {
        let mut ys: Vec<Vec<usize>> = (0..20).map(|i| vec![i % 2]).collect();
        ys.push(vec![2]);
        ys.push(vec![2]);
        let (_, n) = stratified_folds(&ys, 5, 3);
        assert_eq!(n, 2);
    }

    #[test]
    fn exact_tie_picks_smallest_l() {
        let (xs, ys) = toy(30);
        let r = cross_validate_l(&ys, 3, false, &[7, 5, 3], 5, &LinearConfig::default(), |_| Ok(xs.clone())).unwrap();
        assert_eq!(r.best_l, 3);
        assert_eq!(r.scores.len(), 3);
    }

    #[test]
    fn better_features_win() {
        let (xs, ys) = toy(30);
        let noise: Vec<DocVector> = (0..30).map(|i| DocVector::Dense(vec![(i as f64).sin(), (i as f64 * 1.7).cos(), 0.3])).collect();
        let r = cross_validate_l(&ys, 3, false, &[3, 5], 5, &LinearConfig::default(), |l| {
            Ok(if l == 5 { xs.clone() } else { noise.clone() })
        })
        .unwrap();
        assert_eq!(r.best_l, 5);
    }
}
