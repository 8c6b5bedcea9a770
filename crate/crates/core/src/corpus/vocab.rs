use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

/// Token/index maps plus corpus and document frequencies.
///
/// Indices are contiguous, assigned in descending frequency order with a
/// lexicographic tie-break so that every artifact built from a vocabulary
/// is byte-stable across runs.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
    frequency: Vec<u64>,
    doc_frequency: Vec<u64>,
    n_documents: u64,
}

impl Vocabulary {
    /// Builds a vocabulary from raw per-token counts. Entries are re-sorted
    /// into canonical order.
    pub fn from_counts(
        mut entries: Vec<(String, u64, u64)>,
        n_documents: u64,
    ) -> Result<Self> {
        entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let mut tokens = Vec::with_capacity(entries.len());
        let mut frequency = Vec::with_capacity(entries.len());
        let mut doc_frequency = Vec::with_capacity(entries.len());
        let mut index = HashMap::with_capacity(entries.len());
        for (tok, freq, df) in entries {
            if df == 0 || df > n_documents {
                return Err(Error::Data(format!(
                    "token {tok:?}: document frequency {df} outside 1..={n_documents}"
                )));
            }
            if index.insert(tok.clone(), tokens.len() as u32).is_some() {
                return Err(Error::Data(format!("duplicate token {tok:?}")));
            }
            tokens.push(tok);
            frequency.push(freq);
            doc_frequency.push(df);
        }
        Ok(Self {
            tokens,
            index,
            frequency,
            doc_frequency,
            n_documents,
        })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn n_documents(&self) -> u64 {
        self.n_documents
    }

    pub fn get(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn token(&self, idx: u32) -> &str {
        &self.tokens[idx as usize]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn frequency(&self, idx: u32) -> u64 {
        self.frequency[idx as usize]
    }

    pub fn doc_frequency(&self, idx: u32) -> u64 {
        self.doc_frequency[idx as usize]
    }

    /// Writes `token freq df idf` lines, idf to 6 decimals, preceded by a
    /// `#documents N` header.
    pub fn save(&self, idf: &IdfTable, path: &Path) -> Result<()> {
        if idf.len() != self.len() {
            return Err(Error::Dimension {
                expected: self.len(),
                found: idf.len(),
            });
        }
        let mut out = String::with_capacity(self.len() * 24);
        writeln!(out, "#documents {}", self.n_documents).unwrap();
        for (i, tok) in self.tokens.iter().enumerate() {
            writeln!(
                out,
                "{} {} {} {:.6}",
                tok, self.frequency[i], self.doc_frequency[i], idf.weights[i]
            )
            .unwrap();
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    /// Reads a file written by [`Vocabulary::save`]. The idf column is
    /// returned as stored.
    pub fn load(path: &Path) -> Result<(Self, IdfTable)> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut lines = text.lines().enumerate();
        let n_documents = match lines.next() {
            Some((_, header)) => header
                .strip_prefix("#documents ")
                .and_then(|n| n.trim().parse::<u64>().ok())
                .ok_or_else(|| Error::parse(path, 1, "expected `#documents N` header"))?,
            None => return Err(Error::parse(path, 1, "empty vocabulary file")),
        };
        let mut entries = Vec::new();
        let mut weights = Vec::new();
        for (lineno, line) in lines {
            let fields: Vec<&str> = line.split(' ').collect();
            if fields.len() != 4 {
                return Err(Error::parse(path, lineno + 1, "expected 4 fields"));
            }
            let bad = |what: &str| Error::parse(path, lineno + 1, format!("bad {what}"));
            let freq = fields[1].parse::<u64>().map_err(|_| bad("frequency"))?;
            let df = fields[2].parse::<u64>().map_err(|_| bad("document frequency"))?;
            let w = fields[3].parse::<f64>().map_err(|_| bad("idf"))?;
            entries.push((fields[0].to_string(), freq, df));
            weights.push(w);
        }
        let vocab = Self::from_counts(entries.clone(), n_documents)?;
        // from_counts may reorder; the file is canonical so it should not
        if vocab.tokens.iter().zip(&entries).any(|(a, b)| *a != b.0) {
            return Err(Error::parse(path, 2, "vocabulary not in canonical order"));
        }
        Ok((vocab, IdfTable { weights }))
    }
}

/// Counts tokens over `documents` and keeps those with corpus frequency at
/// least `min_frequency`.
pub fn build_vocabulary<S: AsRef<str>>(
    documents: &[Vec<S>],
    min_frequency: u64,
) -> Result<Vocabulary> {
    if min_frequency < 1 {
        return Err(Error::Config("min_frequency must be at least 1".into()));
    }
    let mut counts: HashMap<&str, (u64, u64)> = HashMap::new();
    for doc in documents {
        let mut seen = HashSet::new();
        for tok in doc {
            let tok = tok.as_ref();
            let entry = counts.entry(tok).or_default();
            entry.0 += 1;
            if seen.insert(tok) {
                entry.1 += 1;
            }
        }
    }
    let entries: Vec<_> = counts
        .into_iter()
        .filter(|(_, (freq, _))| *freq >= min_frequency)
        .map(|(tok, (freq, df))| (tok.to_string(), freq, df))
        .collect();
    if entries.is_empty() {
        return Err(Error::Data(format!(
            "no token reaches the minimum frequency {min_frequency}"
        )));
    }
    Vocabulary::from_counts(entries, documents.len() as u64)
}

/// Vocabulary-aligned inverse document frequencies.
#[derive(Debug, Clone, PartialEq)]
pub struct IdfTable {
    pub weights: Vec<f64>,
}

impl IdfTable {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn get(&self, idx: u32) -> f64 {
        self.weights[idx as usize]
    }
}

/// idf(w) = ln(N / df(w)).
pub fn compute_idf(vocabulary: &Vocabulary) -> IdfTable {
    let n = vocabulary.n_documents as f64;
    let weights = vocabulary
        .doc_frequency
        .iter()
        .map(|&df| (n / df as f64).ln())
        .collect();
    IdfTable { weights }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn docs(texts: &[&str]) -> Vec<Vec<String>> {
        texts
            .iter()
            .map(|t| t.split_whitespace().map(String::from).collect())
            .collect()
    }

    #[test]
    fn min_frequency_cutoff() {
        let v = build_vocabulary(&docs(&["x x y", "x z"]), 2).unwrap();
        assert_eq!(v.len(), 1);
        let x = v.get("x").unwrap();
        assert_eq!(v.frequency(x), 3);
        assert_eq!(v.doc_frequency(x), 2);
        assert_eq!(v.n_documents(), 2);
    }

    #[test]
    fn min_frequency_one_keeps_everything() {
        let v = build_vocabulary(&docs(&["x x y", "x z"]), 1).unwrap();
        assert_eq!(v.tokens(), &["x", "y", "z"]);
    }

    #[test]
    fn empty_vocabulary_is_an_error() {
        assert!(build_vocabulary(&docs(&["a b c"]), 100).is_err());
        assert!(build_vocabulary(&docs(&["a"]), 0).is_err());
    }

    #[test]
    fn index_order_frequency_then_lexicographic() {
        let v = build_vocabulary(&docs(&["b a c c", "a b d"]), 1).unwrap();
        assert_eq!(v.tokens(), &["a", "b", "c", "d"]);
    }

    #[test]
    fn idf_values() {
        let v = Vocabulary::from_counts(
            vec![("all".into(), 4, 4), ("half".into(), 2, 2)],
            4,
        )
        .unwrap();
        let idf = compute_idf(&v);
        assert_eq!(idf.get(v.get("all").unwrap()), 0.0);
        assert!((idf.get(v.get("half").unwrap()) - 2f64.ln()).abs() < 1e-12);
        assert!((idf.get(v.get("half").unwrap()) - 0.6931).abs() < 1e-4);

        let v = Vocabulary::from_counts(vec![("rare".into(), 1, 1)], 1000).unwrap();
        assert!((compute_idf(&v).get(0) - 6.9078).abs() < 1e-4);
    }

    #[test]
    fn save_load_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vocab.txt");
        let v = build_vocabulary(&docs(&["x x y", "x z", "q"]), 1).unwrap();
        let idf = compute_idf(&v);
        v.save(&idf, &path).unwrap();
        let (v2, idf2) = Vocabulary::load(&path).unwrap();
        assert_eq!(v, v2);
        for (a, b) in idf.weights.iter().zip(&idf2.weights) {
            assert!((a - b).abs() <= 5e-7);
        }
    }

    proptest! {
        #[test]
        fn df_matches_brute_force(corpus in prop::collection::vec(
            prop::collection::vec(0u8..8, 1..12), 1..10)
        ) {
            let docs: Vec<Vec<String>> = corpus
                .iter()
                .map(|d| d.iter().map(|t| format!("t{t}")).collect())
                .collect();
            let v = build_vocabulary(&docs, 1).unwrap();
            let n = docs.len() as u64;
            let mut df_sum = 0;
            for (i, tok) in v.tokens().iter().enumerate() {
                let brute = docs.iter().filter(|d| d.contains(tok)).count() as u64;
                prop_assert_eq!(v.doc_frequency(i as u32), brute);
                prop_assert!(brute >= 1 && brute <= n);
                df_sum += brute;
            }
            prop_assert!(df_sum <= v.len() as u64 * n);

            let idf = compute_idf(&v);
            for a in 0..v.len() as u32 {
                prop_assert!(idf.get(a) >= 0.0);
                for b in 0..v.len() as u32 {
                    if v.doc_frequency(a) < v.doc_frequency(b) {
                        prop_assert!(idf.get(a) > idf.get(b));
                    }
                }
            }
        }
    }
}
