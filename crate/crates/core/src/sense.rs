//! Polysemy candidate selection, context-clustering sense induction, and
//! `word#k` annotation of a corpus.
//!
//! Every occurrence of a candidate word is summarized by the mean of the
//! base vectors of its neighbors within a symmetric window. Summaries are
//! clustered with k-means; near-duplicate clusters are merged and clusters
//! with too small an occurrence share are absorbed, so words whose contexts
//! do not split end up with a single sense and are left unannotated.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;

use crate::corpus::{Corpus, Document, IdfTable, Vocabulary};
use crate::embeddings::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::kmeans::kmeans;
use crate::linalg::cosine;

/// Separator between a word and its sense id in annotated tokens.
pub const SENSE_SEPARATOR: char = '#';

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SenseConfig {
    /// Neighbors considered on each side of an occurrence.
    pub window: usize,
    pub max_senses: usize,
    pub min_share: f64,
    pub merge_threshold: f64,
    pub kmeans_iters: usize,
    pub seed: u64,
}

impl Default for SenseConfig {
    fn default() -> Self {
        Self {
            window: 5,
            max_senses: 3,
            min_share: 0.1,
            merge_threshold: 0.85,
            kmeans_iters: 100,
            seed: 1,
        }
    }
}

impl SenseConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_senses < 1 {
            return Err(Error::Config("max_senses must be >= 1".into()));
        }
        if self.window < 1 {
            return Err(Error::Config("sense window must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.min_share) {
            return Err(Error::Config("min_share must be in [0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sense {
    pub id: usize,
    pub share: f64,
    pub centroid: Vec<f64>,
}

/// Induced senses per candidate word.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SenseInventory {
    pub dim: usize,
    pub words: BTreeMap<String, Vec<Sense>>,
}

impl SenseInventory {
    pub fn senses(&self, word: &str) -> Option<&[Sense]> {
        self.words.get(word).map(Vec::as_slice)
    }

    pub fn is_multi_sense(&self, word: &str) -> bool {
        self.words.get(word).is_some_and(|s| s.len() > 1)
    }

    pub fn multi_sense_words(&self) -> impl Iterator<Item = &str> {
        self.words
            .iter()
            .filter(|(_, s)| s.len() > 1)
            .map(|(w, _)| w.as_str())
    }

    /// One line per sense: `word id share c1 .. cd`.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        for (word, senses) in &self.words {
            for s in senses {
                write!(out, "{} {} {:.6}", word, s.id, s.share).unwrap();
                for x in &s.centroid {
                    write!(out, " {x}").unwrap();
                }
                out.push('\n');
            }
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut inv = SenseInventory::default();
        let mut dim = None;
        for (i, line) in text.lines().enumerate() {
            let fields: Vec<&str> = line.split(' ').collect();
            if fields.len() < 3 {
                return Err(Error::parse(path, i + 1, "expected `word id share centroid..`"));
            }
            let bad = |what: &str| Error::parse(path, i + 1, format!("bad {what}"));
            let id: usize = fields[1].parse().map_err(|_| bad("sense id"))?;
            let share: f64 = fields[2].parse().map_err(|_| bad("share"))?;
            let centroid = fields[3..]
                .iter()
                .map(|f| f.parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|_| bad("centroid value"))?;
            match dim {
                None => dim = Some(centroid.len()),
                Some(d) if d != centroid.len() => {
                    return Err(Error::parse(path, i + 1, "centroid dimension changes"))
                }
                _ => {}
            }
            let senses = inv.words.entry(fields[0].to_string()).or_default();
            if id != senses.len() {
                return Err(Error::parse(path, i + 1, "sense ids must be 0..s-1 in order"));
            }
            senses.push(Sense { id, share, centroid });
        }
        inv.dim = dim.unwrap_or(0);
        Ok(inv)
    }
}

/// The `top_n` words by corpus-level tf-idf (`frequency · idf`), ties by
/// index, returned in rank order.
pub fn select_candidates(vocabulary: &Vocabulary, idf: &IdfTable, top_n: usize) -> Vec<u32> {
    let mut scored: Vec<(u32, f64)> = (0..vocabulary.len() as u32)
        .map(|i| (i, vocabulary.frequency(i) as f64 * idf.get(i)))
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    scored.truncate(top_n);
    scored.into_iter().map(|(i, _)| i).collect()
}

/// Mean of the base vectors of tokens within `window` positions of `pos`,
/// excluding `pos` itself. `None` when the window is empty.
fn context_mean(tokens: &[u32], pos: usize, window: usize, base: &EmbeddingMatrix) -> Option<Vec<f64>> {
    let lo = pos.saturating_sub(window);
    let hi = (pos + window).min(tokens.len().saturating_sub(1));
    let mut mean = vec![0.0; base.dim()];
    let mut n = 0usize;
    for (i, &t) in tokens.iter().enumerate().take(hi + 1).skip(lo) {
        if i == pos {
            continue;
        }
        crate::linalg::axpy(1.0, base.row(t as usize), &mut mean);
        n += 1;
    }
    (n > 0).then(|| {
        mean.iter_mut().for_each(|x| *x /= n as f64);
        mean
    })
}

fn check_alignment(vocab: &Vocabulary, base: &EmbeddingMatrix) -> Result<()> {
    if base.tokens() != vocab.tokens() {
        return Err(Error::Data(
            "base embeddings are not aligned with the corpus vocabulary".into(),
        ));
    }
    Ok(())
}

struct Cluster {
    first: usize,
    count: usize,
    sum: Vec<f64>,
}

impl Cluster {
    fn centroid(&self) -> Vec<f64> {
        self.sum.iter().map(|x| x / self.count as f64).collect()
    }

    fn absorb(&mut self, other: Cluster) {
        self.first = self.first.min(other.first);
        self.count += other.count;
        crate::linalg::axpy(1.0, &other.sum, &mut self.sum);
    }
}

/// Clusters occurrence summaries (`n × dim`) into senses.
fn cluster_occurrences(summaries: &[f64], dim: usize, config: &SenseConfig, seed: u64) -> Vec<Sense> {
    let n = summaries.len() / dim;
    if n == 0 {
        return vec![Sense {
            id: 0,
            share: 1.0,
            centroid: vec![0.0; dim],
        }];
    }
    let k = config.max_senses.min(n);
    let result = kmeans(summaries, dim, k, seed, config.kmeans_iters);
    let mut clusters: Vec<Cluster> = (0..result.k)
        .map(|c| Cluster {
            first: c,
            count: 0,
            sum: vec![0.0; dim],
        })
        .collect();
    for (i, &c) in result.assignments.iter().enumerate() {
        clusters[c].count += 1;
        crate::linalg::axpy(1.0, &summaries[i * dim..(i + 1) * dim], &mut clusters[c].sum);
    }
    clusters.retain(|c| c.count > 0);

    // merge the most similar pair while it exceeds the threshold
    loop {
        let centroids: Vec<Vec<f64>> = clusters.iter().map(Cluster::centroid).collect();
        let mut best: Option<(usize, usize, f64)> = None;
        for a in 0..clusters.len() {
            for b in a + 1..clusters.len() {
                let sim = cosine(&centroids[a], &centroids[b]);
                let identical = centroids[a] == centroids[b];
                if (sim > config.merge_threshold || identical)
                    && best.is_none_or(|(_, _, s)| sim > s)
                {
                    best = Some((a, b, sim));
                }
            }
        }
        let Some((a, b, _)) = best else { break };
        let other = clusters.remove(b);
        clusters[a].absorb(other);
    }

    // absorb under-populated clusters, smallest first
    while clusters.len() > 1 {
        let (small, count) = clusters
            .iter()
            .enumerate()
            .map(|(i, c)| (i, c.count))
            .min_by_key(|&(i, c)| (c, i))
            .unwrap();
        if count as f64 / n as f64 >= config.min_share {
            break;
        }
        let victim = clusters.remove(small);
        let vc = victim.centroid();
        let target = clusters
            .iter()
            .enumerate()
            .map(|(i, c)| (i, cosine(&vc, &c.centroid())))
            .max_by(|x, y| x.1.total_cmp(&y.1).then(y.0.cmp(&x.0)))
            .unwrap()
            .0;
        clusters[target].absorb(victim);
    }

    clusters.sort_by_key(|c| c.first);
    clusters
        .iter()
        .enumerate()
        .map(|(id, c)| Sense {
            id,
            share: c.count as f64 / n as f64,
            centroid: c.centroid(),
        })
        .collect()
}

/// Induces senses for each candidate from the contexts of its occurrences.
pub fn induce_senses(
    corpus: &Corpus,
    base: &EmbeddingMatrix,
    candidates: &[u32],
    config: &SenseConfig,
) -> Result<SenseInventory> {
    config.validate()?;
    check_alignment(&corpus.vocabulary, base)?;
    let dim = base.dim();
    let slot: HashMap<u32, usize> = candidates.iter().enumerate().map(|(i, &w)| (w, i)).collect();

    // per-candidate occurrence summaries, in corpus order
    let per_doc: Vec<Vec<(usize, Vec<f64>)>> = corpus
        .documents
        .par_iter()
        .map(|doc| {
            doc.tokens
                .iter()
                .enumerate()
                .filter_map(|(pos, t)| {
                    let s = *slot.get(t)?;
                    context_mean(&doc.tokens, pos, config.window, base).map(|m| (s, m))
                })
                .collect()
        })
        .collect();
    let mut summaries: Vec<Vec<f64>> = vec![Vec::new(); candidates.len()];
    for doc in per_doc {
        for (s, m) in doc {
            summaries[s].extend(m);
        }
    }

    let words: Vec<(String, Vec<Sense>)> = candidates
        .par_iter()
        .zip(summaries.par_iter())
        .map(|(&w, sums)| {
            let seed = config.seed.wrapping_add(w as u64);
            (
                corpus.vocabulary.token(w).to_string(),
                cluster_occurrences(sums, dim, config, seed),
            )
        })
        .collect();
    Ok(SenseInventory {
        dim,
        words: words.into_iter().collect(),
    })
}

/// A corpus whose multi-sense tokens carry `#k` suffixes.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotatedCorpus {
    pub corpus: Corpus,
}

pub fn sense_token(word: &str, sense: usize) -> String {
    format!("{word}{SENSE_SEPARATOR}{sense}")
}

/// Splits `word#k` into `(word, Some(k))`; other tokens pass through.
pub fn split_sense(token: &str) -> (&str, Option<usize>) {
    if let Some(pos) = token.rfind(SENSE_SEPARATOR) {
        let (base, suffix) = (&token[..pos], &token[pos + 1..]);
        if !base.is_empty() && !suffix.is_empty() && suffix.bytes().all(|b| b.is_ascii_digit()) {
            if let Ok(k) = suffix.parse() {
                return (base, Some(k));
            }
        }
    }
    (token, None)
}

/// Rewrites each occurrence of a multi-sense word as `word#k`, where `k`
/// maximizes the cosine between the occurrence's context mean and the sense
/// centroid. Ties go to the lower sense id; an empty context gets sense 0.
pub fn annotate(
    corpus: &Corpus,
    base: &EmbeddingMatrix,
    inventory: &SenseInventory,
    window: usize,
) -> Result<AnnotatedCorpus> {
    check_alignment(&corpus.vocabulary, base)?;
    if inventory.dim != 0 && inventory.dim != base.dim() {
        return Err(Error::Dimension {
            expected: base.dim(),
            found: inventory.dim,
        });
    }
    let senses_by_id: HashMap<u32, &[Sense]> = inventory
        .words
        .iter()
        .filter(|(_, s)| s.len() > 1)
        .filter_map(|(w, s)| corpus.vocabulary.get(w).map(|id| (id, s.as_slice())))
        .collect();

    let tokens: Vec<Vec<String>> = corpus
        .documents
        .par_iter()
        .map(|doc| {
            doc.tokens
                .iter()
                .enumerate()
                .map(|(pos, &t)| {
                    let word = corpus.vocabulary.token(t);
                    let Some(senses) = senses_by_id.get(&t) else {
                        return word.to_string();
                    };
                    let k = match context_mean(&doc.tokens, pos, window, base) {
                        None => 0,
                        Some(ctx) => {
                            let mut best = (0, f64::NEG_INFINITY);
                            for s in senses.iter() {
                                let sim = cosine(&ctx, &s.centroid);
                                if sim > best.1 {
                                    best = (s.id, sim);
                                }
                            }
                            best.0
                        }
                    };
                    sense_token(word, k)
                })
                .collect()
        })
        .collect();
    let corpus = Corpus::from_token_strings(&corpus.documents, &tokens, corpus.label_names.clone())?;
    Ok(AnnotatedCorpus { corpus })
}

impl AnnotatedCorpus {
    /// Identity annotation: every token passes through unchanged.
    pub fn identity(corpus: &Corpus) -> Self {
        Self {
            corpus: corpus.clone(),
        }
    }

    /// Documents with `#k` suffixes removed.
    pub fn stripped(&self) -> Vec<Vec<String>> {
        self.corpus
            .documents
            .iter()
            .map(|d| {
                d.tokens
                    .iter()
                    .map(|&t| split_sense(self.corpus.vocabulary.token(t)).0.to_string())
                    .collect()
            })
            .collect()
    }

    /// Number of token occurrences that carry a sense suffix.
    pub fn suffixed_occurrences(&self) -> usize {
        self.corpus
            .documents
            .iter()
            .flat_map(|d| &d.tokens)
            .filter(|&&t| split_sense(self.corpus.vocabulary.token(t)).1.is_some())
            .count()
    }

    /// Suffixed vocabulary entries whose base word the inventory does not
    /// mark as multi-sense.
    pub fn unknown_suffixed_tokens(&self, inventory: &SenseInventory) -> Vec<String> {
        self.corpus
            .vocabulary
            .tokens()
            .iter()
            .filter(|t| {
                let (base, k) = split_sense(t);
                k.is_some() && !inventory.is_multi_sense(base)
            })
            .cloned()
            .collect()
    }

    /// Writes one document per line, space-separated tokens.
    pub fn export(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        for doc in &self.corpus.documents {
            out.push_str(&self.corpus.token_strings(doc).join(" "));
            out.push('\n');
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    /// Replaces ids, labels and splits with those of `meta`, aligned by
    /// document position.
    pub fn with_metadata(mut self, meta: &Corpus) -> Result<Self> {
        if meta.documents.len() != self.corpus.documents.len() {
            return Err(Error::Dimension {
                expected: meta.documents.len(),
                found: self.corpus.documents.len(),
            });
        }
        for (doc, m) in self.corpus.documents.iter_mut().zip(&meta.documents) {
            doc.id = m.id.clone();
            doc.labels = m.labels.clone();
            doc.split = m.split;
        }
        self.corpus.label_names = meta.label_names.clone();
        Ok(self)
    }
}

/// Reads an annotated corpus (one document per line). Documents get ids
/// `line<N>`, no labels, and the train split; see
/// [`AnnotatedCorpus::with_metadata`].
pub fn import_annotation(path: &Path) -> Result<AnnotatedCorpus> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let lines: Vec<&str> = text.lines().collect();
    if lines.is_empty() {
        return Err(Error::Data(format!("{}: empty annotated corpus", path.display())));
    }
    let tokens: Vec<Vec<String>> = lines
        .iter()
        .map(|l| l.split(' ').filter(|t| !t.is_empty()).map(String::from).collect())
        .collect();
    let meta: Vec<Document> = (0..lines.len())
        .map(|i| Document {
            id: format!("line{}", i + 1),
            labels: Vec::new(),
            tokens: Vec::new(),
            split: crate::corpus::Split::Train,
        })
        .collect();
    let corpus = Corpus::from_token_strings(&meta, &tokens, Vec::new())?;
    Ok(AnnotatedCorpus { corpus })
}

/// Like [`import_annotation`], but warns about suffixed tokens whose base
/// word `inventory` does not know as multi-sense. The tokens are kept.
pub fn import_annotation_checked(path: &Path, inventory: &SenseInventory) -> Result<(AnnotatedCorpus, Vec<String>)> {
    let annotated = import_annotation(path)?;
    let unknown = annotated.unknown_suffixed_tokens(inventory);
    for tok in &unknown {
        log::warn!("{}: token {tok} has a sense suffix but its word is not multi-sense", path.display());
    }
    Ok((annotated, unknown))
}

/// Words of `candidates` that are absent from every document; kept for
/// diagnostics.
pub fn unseen_candidates(corpus: &Corpus, candidates: &[u32]) -> Vec<u32> {
    let seen: HashSet<u32> = corpus.documents.iter().flat_map(|d| d.tokens.iter().copied()).collect();
    candidates.iter().copied().filter(|c| !seen.contains(c)).collect()
}
