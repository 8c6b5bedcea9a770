//! Synthetic topic corpus used as the shipped test fixture: disjoint topic
//! vocabularies, a shared background of high-frequency filler tokens, and
//! planted polysemous words that each occur in two topics.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Dataset, RawDocument, Split};
use crate::error::{Error, Result};

/// Planted polysemous words; word `i` is shared by topics `i % T` and
/// `(i + 1) % T`.
pub const POLYSEMOUS_WORDS: &[&str] = &["bank", "spring", "court", "pitch", "crane", "match"];

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub n_docs: usize,
    pub n_topics: usize,
    pub topic_words: usize,
    pub background_words: usize,
    pub n_polysemous: usize,
    pub doc_len: usize,
    /// Fraction of tokens drawn from the shared background.
    pub background_share: f64,
    /// Fraction of tokens drawn from the topic's polysemous words.
    pub polysemous_share: f64,
    pub test_fraction: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_docs: 300,
            n_topics: 3,
            topic_words: 50,
            background_words: 10,
            n_polysemous: 3,
            doc_len: 60,
            background_share: 0.25,
            polysemous_share: 0.03,
            test_fraction: 0.3,
            seed: 7,
        }
    }
}

pub fn topic_word(topic: usize, j: usize) -> String {
    format!("t{topic}w{j:04}")
}

pub fn background_word(j: usize) -> String {
    format!("bg{j:02}")
}

/// Topics that share planted word `i`.
pub fn polysemous_topics(i: usize, n_topics: usize) -> (usize, usize) {
    (i % n_topics, (i + 1) % n_topics)
}

pub fn generate(config: &SynthConfig) -> Result<Dataset> {
    if config.n_topics < 2 || config.topic_words == 0 || config.doc_len == 0 {
        return Err(Error::Config("synthetic corpus needs >= 2 topics and non-empty docs".into()));
    }
    if config.n_polysemous > POLYSEMOUS_WORDS.len() {
        return Err(Error::Config(format!(
            "at most {} planted polysemous words",
            POLYSEMOUS_WORDS.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let n_test = (config.n_docs as f64 * config.test_fraction).round() as usize;
    let mut documents = Vec::with_capacity(config.n_docs);
    for n in 0..config.n_docs {
        let topic = n % config.n_topics;
        let planted: Vec<&str> = (0..config.n_polysemous)
            .filter(|&i| {
                let (a, b) = polysemous_topics(i, config.n_topics);
                a == topic || b == topic
            })
            .map(|i| POLYSEMOUS_WORDS[i])
            .collect();
        let mut words = Vec::with_capacity(config.doc_len);
        for _ in 0..config.doc_len {
            let r: f64 = rng.random();
            let word = if r < config.background_share && config.background_words > 0 {
                background_word(rng.random_range(0..config.background_words))
            } else if r < config.background_share + config.polysemous_share && !planted.is_empty() {
                planted[rng.random_range(0..planted.len())].to_string()
            } else {
                topic_word(topic, rng.random_range(0..config.topic_words))
            };
            words.push(word);
        }
        // interleave train and test across topics
        let split = if n * n_test / config.n_docs.max(1) != (n + 1) * n_test / config.n_docs.max(1) {
            Split::Test
        } else {
            Split::Train
        };
        documents.push(RawDocument {
            id: format!("doc{n:05}"),
            labels: vec![topic],
            text: words.join(" "),
            split,
        });
    }
    Ok(Dataset {
        documents,
        label_names: (0..config.n_topics).map(|t| format!("topic{t}")).collect(),
    })
}

/// Writes a dataset in the class-directory layout with `train/` and
/// `test/` roots.
pub fn write_newsgroup_dirs(dataset: &Dataset, root: &Path) -> Result<()> {
    for doc in &dataset.documents {
        let label = doc
            .labels
            .first()
            .ok_or_else(|| Error::Data(format!("document {} has no label", doc.id)))?;
        let dir = root
            .join(doc.split.as_str())
            .join(&dataset.label_names[*label]);
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let path = dir.join(format!("{}.txt", doc.id));
        std::fs::write(&path, &doc.text).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}
