use std::collections::HashSet;

use rust_stemmers::{Algorithm, Stemmer};

/// A compact English stopword list (function words and auxiliaries).
pub const ENGLISH_STOPWORDS: &[&str] = &[
    "a", "about", "above", "after", "again", "against", "all", "am", "an", "and", "any", "are",
    "as", "at", "be", "because", "been", "before", "being", "below", "between", "both", "but",
    "by", "can", "could", "did", "do", "does", "doing", "down", "during", "each", "few", "for",
    "from", "further", "had", "has", "have", "having", "he", "her", "here", "hers", "herself",
    "him", "himself", "his", "how", "i", "if", "in", "into", "is", "it", "its", "itself", "just",
    "me", "more", "most", "my", "myself", "no", "nor", "not", "now", "of", "off", "on", "once",
    "only", "or", "other", "our", "ours", "ourselves", "out", "over", "own", "same", "she",
    "should", "so", "some", "such", "than", "that", "the", "their", "theirs", "them",
    "themselves", "then", "there", "these", "they", "this", "those", "through", "to", "too",
    "under", "until", "up", "very", "was", "we", "were", "what", "when", "where", "which",
    "while", "who", "whom", "why", "will", "with", "would", "you", "your", "yours", "yourself",
    "yourselves",
];

/// Preprocessing switches applied by [`tokenize`].
#[derive(Debug, Clone)]
pub struct TokenizeOptions {
    pub remove_stopwords: bool,
    pub stopwords: HashSet<String>,
    /// Snowball English stemming. Off by default.
    pub stem: bool,
}

impl Default for TokenizeOptions {
    fn default() -> Self {
        Self {
            remove_stopwords: true,
            stopwords: ENGLISH_STOPWORDS.iter().map(|s| s.to_string()).collect(),
            stem: false,
        }
    }
}

impl TokenizeOptions {
    pub fn with_stopwords<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            remove_stopwords: true,
            stopwords: words.into_iter().map(Into::into).collect(),
            stem: false,
        }
    }

    pub fn keep_all() -> Self {
        Self {
            remove_stopwords: false,
            stopwords: HashSet::new(),
            stem: false,
        }
    }
}

/// Lowercases `text` and splits it into maximal runs of alphanumeric
/// characters, dropping stopwords and optionally stemming.
pub fn tokenize(text: &str, options: &TokenizeOptions) -> Vec<String> {
    let stemmer = options.stem.then(|| Stemmer::create(Algorithm::English));
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|piece| !piece.is_empty())
        .map(str::to_lowercase)
        // lowercasing can introduce non-alphanumeric marks (e.g. combining dots)
        .flat_map(|lower| {
            lower
                .split(|c: char| !c.is_alphanumeric())
                .filter(|p| !p.is_empty())
                .map(str::to_string)
                .collect::<Vec<_>>()
        })
        .filter(|tok| !(options.remove_stopwords && options.stopwords.contains(tok)))
        .map(|tok| match &stemmer {
            Some(s) => s.stem(&tok).into_owned(),
            None => tok,
        })
        .collect()
}
