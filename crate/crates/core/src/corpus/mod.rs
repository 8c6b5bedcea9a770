//! Corpus ingestion: tokenization, vocabulary, idf, and dataset loaders.

mod dataset;
mod tokenize;
mod vocab;

use std::fmt::Write as _;
use std::path::Path;

pub use dataset::{load_dataset, Dataset, DatasetFormat, RawDocument};
pub use tokenize::{tokenize, TokenizeOptions, ENGLISH_STOPWORDS};
pub use vocab::{build_vocabulary, compute_idf, IdfTable, Vocabulary};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "train" => Some(Split::Train),
            "test" => Some(Split::Test),
            _ => None,
        }
    }
}

/// A tokenized document. Token ids index into the owning corpus vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct Document {
    pub id: String,
    pub labels: Vec<usize>,
    pub tokens: Vec<u32>,
    pub split: Split,
}

/// Documents together with the vocabulary their token ids refer to.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub documents: Vec<Document>,
    pub vocabulary: Vocabulary,
    pub label_names: Vec<String>,
}

impl Corpus {
    /// Tokenizes every document, builds the vocabulary over all splits, and
    /// drops tokens below `min_frequency`.
    pub fn from_dataset(
        dataset: &Dataset,
        options: &TokenizeOptions,
        min_frequency: u64,
    ) -> Result<Self> {
        let tokenized: Vec<Vec<String>> = dataset
            .documents
            .iter()
            .map(|d| tokenize(&d.text, options))
            .collect();
        let vocabulary = build_vocabulary(&tokenized, min_frequency)?;
        let documents = dataset
            .documents
            .iter()
            .zip(&tokenized)
            .map(|(raw, toks)| Document {
                id: raw.id.clone(),
                labels: raw.labels.clone(),
                tokens: toks.iter().filter_map(|t| vocabulary.get(t)).collect(),
                split: raw.split,
            })
            .collect();
        Ok(Self {
            documents,
            vocabulary,
            label_names: dataset.label_names.clone(),
        })
    }

    /// Builds a corpus from already-tokenized documents, keeping every token.
    pub fn from_token_strings(
        meta: &[Document],
        tokens: &[Vec<String>],
        label_names: Vec<String>,
    ) -> Result<Self> {
        if meta.len() != tokens.len() {
            return Err(Error::Dimension {
                expected: meta.len(),
                found: tokens.len(),
            });
        }
        let vocabulary = build_vocabulary(tokens, 1)?;
        let documents = meta
            .iter()
            .zip(tokens)
            .map(|(m, toks)| Document {
                id: m.id.clone(),
                labels: m.labels.clone(),
                tokens: toks.iter().map(|t| vocabulary.get(t).unwrap()).collect(),
                split: m.split,
            })
            .collect();
        Ok(Self {
            documents,
            vocabulary,
            label_names,
        })
    }

    pub fn token_strings(&self, doc: &Document) -> Vec<&str> {
        doc.tokens.iter().map(|&t| self.vocabulary.token(t)).collect()
    }

    pub fn n_labels(&self) -> usize {
        self.label_names.len()
    }

    /// True when any document carries other than exactly one label.
    pub fn is_multilabel(&self) -> bool {
        self.documents.iter().any(|d| d.labels.len() != 1)
    }

    /// Writes documents as `id<TAB>split<TAB>labels<TAB>tokens`, labels as
    /// comma-separated indices, and the label names one per line to
    /// `labels_path`.
    pub fn save(&self, path: &Path, labels_path: &Path) -> Result<()> {
        let mut out = String::new();
        for doc in &self.documents {
            let labels: Vec<String> = doc.labels.iter().map(|l| l.to_string()).collect();
            writeln!(
                out,
                "{}\t{}\t{}\t{}",
                doc.id,
                doc.split.as_str(),
                labels.join(","),
                self.token_strings(doc).join(" ")
            )
            .unwrap();
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))?;
        let mut names = self.label_names.join("\n");
        names.push('\n');
        std::fs::write(labels_path, names).map_err(|e| Error::io(labels_path, e))
    }

    /// Reads a corpus written by [`Corpus::save`]. The vocabulary is rebuilt
    /// from the stored tokens.
    pub fn load(path: &Path, labels_path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let label_names: Vec<String> = std::fs::read_to_string(labels_path)
            .map_err(|e| Error::io(labels_path, e))?
            .lines()
            .filter(|l| !l.is_empty())
            .map(String::from)
            .collect();
        let mut meta = Vec::new();
        let mut tokens = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let fields: Vec<&str> = line.splitn(4, '\t').collect();
            if fields.len() != 4 {
                return Err(Error::parse(path, lineno + 1, "expected 4 tab-separated fields"));
            }
            let split = Split::parse(fields[1])
                .ok_or_else(|| Error::parse(path, lineno + 1, "bad split marker"))?;
            let labels = fields[2]
                .split(',')
                .filter(|s| !s.is_empty())
                .map(|s| {
                    s.parse::<usize>()
                        .ok()
                        .filter(|&l| l < label_names.len())
                        .ok_or_else(|| Error::parse(path, lineno + 1, "bad label index"))
                })
                .collect::<Result<Vec<_>>>()?;
            meta.push(Document {
                id: fields[0].to_string(),
                labels,
                tokens: Vec::new(),
                split,
            });
            tokens.push(
                fields[3]
                    .split(' ')
                    .filter(|t| !t.is_empty())
                    .map(String::from)
                    .collect::<Vec<_>>(),
            );
        }
        Self::from_token_strings(&meta, &tokens, label_names)
    }
}
