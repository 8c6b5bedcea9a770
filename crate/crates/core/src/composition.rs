//! Word-topic vectors and document composition.
//!
//! A word-topic vector is the concatenation over clusters of the word
//! vector scaled by the word's (sparsified) cluster probability, all
//! weighted by idf. With only `l` clusters retained per word the vector has
//! at most `l·d` stored entries out of `K·d`, and a document vector is the
//! sum of the word-topic vectors of its tokens, accumulated sparsely.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;

use crate::clustering::SparseAssignmentTable;
use crate::corpus::IdfTable;
use crate::embeddings::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::linalg::normalize_l2;

/// Sorted `(index, value)` pairs of a vector of length `dim`. Stored values
/// may include explicit zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseVector {
    pub dim: usize,
    pub indices: Vec<u32>,
    pub values: Vec<f64>,
}

impl SparseVector {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            indices: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for (&i, &v) in self.indices.iter().zip(&self.values) {
            out[i as usize] = v;
        }
        out
    }

    pub fn nnz(&self) -> usize {
        self.values.iter().filter(|v| **v != 0.0).count()
    }
}

/// Word-topic vector for one word: block `k` holds `idf · p_k · wv`, other
/// blocks are zero. Blocks are stored for every retained cluster even when
/// the scale is zero.
pub fn word_topic_vector(wv: &[f64], sparse_row: &[(u32, f64)], idf: f64, k: usize) -> SparseVector {
    let d = wv.len();
    let mut blocks: Vec<(u32, f64)> = sparse_row.to_vec();
    blocks.sort_by_key(|&(c, _)| c);
    let mut indices = Vec::with_capacity(blocks.len() * d);
    let mut values = Vec::with_capacity(blocks.len() * d);
    for (c, p) in blocks {
        debug_assert!((c as usize) < k);
        let scale = idf * p;
        for (j, &x) in wv.iter().enumerate() {
            indices.push(c * d as u32 + j as u32);
            values.push(scale * x);
        }
    }
    SparseVector {
        dim: k * d,
        indices,
        values,
    }
}

/// Sparse word-topic vectors for a vocabulary. Each word stores whole
/// `d`-wide blocks, one per retained cluster, with block ids ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct WordTopicTable {
    pub k: usize,
    pub d: usize,
    pub l: usize,
    tokens: Vec<String>,
    block_offsets: Vec<usize>,
    block_ids: Vec<u32>,
    values: Vec<f64>,
}

impl WordTopicTable {
    fn empty(k: usize, d: usize, l: usize, tokens: Vec<String>) -> Self {
        Self {
            k,
            d,
            l,
            block_offsets: Vec::with_capacity(tokens.len() + 1),
            tokens,
            block_ids: Vec::new(),
            values: Vec::new(),
        }
    }

    fn push_block(&mut self, id: u32) -> &mut [f64] {
        self.block_ids.push(id);
        let start = self.values.len();
        self.values.resize(start + self.d, 0.0);
        &mut self.values[start..]
    }

    fn end_row(&mut self) {
        if self.block_offsets.is_empty() {
            self.block_offsets.push(0);
        }
        self.block_offsets.push(self.block_ids.len());
    }

    pub fn dim(&self) -> usize {
        self.k * self.d
    }

    /// Table from a row-major dense `V × K·d` matrix; blocks that are
    /// entirely zero are not stored.
    pub fn from_dense(tokens: Vec<String>, k: usize, d: usize, l: usize, data: &[f64]) -> Result<Self> {
        let dim = k * d;
        if data.len() != tokens.len() * dim {
            return Err(Error::Dimension {
                expected: tokens.len() * dim,
                found: data.len(),
            });
        }
        let n = tokens.len();
        let mut table = Self::empty(k, d, l, tokens);
        table.block_offsets.push(0);
        for i in 0..n {
            for b in 0..k {
                let src = &data[i * dim + b * d..i * dim + (b + 1) * d];
                if src.iter().any(|&x| x != 0.0) {
                    table.push_block(b as u32).copy_from_slice(src);
                }
            }
            table.block_offsets.push(table.block_ids.len());
        }
        Ok(table)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Stored `(block id, values)` pairs of word `i`.
    pub fn row_blocks(&self, i: usize) -> impl Iterator<Item = (u32, &[f64])> + '_ {
        let (a, b) = (self.block_offsets[i], self.block_offsets[i + 1]);
        self.block_ids[a..b]
            .iter()
            .zip(self.values[a * self.d..b * self.d].chunks_exact(self.d.max(1)))
            .map(|(&id, v)| (id, v))
    }

    /// Stored entries of word `i` as `(index, value)`.
    pub fn row_entries(&self, i: usize) -> impl Iterator<Item = (u32, f64)> + '_ {
        let d = self.d as u32;
        self.row_blocks(i)
            .flat_map(move |(b, v)| v.iter().enumerate().map(move |(j, &x)| (b * d + j as u32, x)))
    }

    /// Stored indices and values of word `i`.
    pub fn row(&self, i: usize) -> (Vec<u32>, &[f64]) {
        let (a, b) = (self.block_offsets[i], self.block_offsets[i + 1]);
        (self.row_entries(i).map(|(j, _)| j).collect(), &self.values[a * self.d..b * self.d])
    }

    /// Number of stored entries of word `i`.
    pub fn row_len(&self, i: usize) -> usize {
        (self.block_offsets[i + 1] - self.block_offsets[i]) * self.d
    }

    /// Values of block `b` of word `i`, when stored.
    pub fn block(&self, i: usize, b: usize) -> Option<&[f64]> {
        let (lo, hi) = (self.block_offsets[i], self.block_offsets[i + 1]);
        let p = self.block_ids[lo..hi].binary_search(&(b as u32)).ok()? + lo;
        Some(&self.values[p * self.d..(p + 1) * self.d])
    }

    pub fn row_vector(&self, i: usize) -> SparseVector {
        let (indices, values) = self.row(i);
        SparseVector {
            dim: self.dim(),
            indices,
            values: values.to_vec(),
        }
    }

    pub fn stored_entries(&self) -> usize {
        self.values.len()
    }

    /// Entries with a nonzero value.
    pub fn nonzeros(&self) -> usize {
        self.values.iter().filter(|v| **v != 0.0).count()
    }

    /// Percentage of zero entries in the dense `V × K·d` table.
    pub fn sparsity_percent(&self) -> f64 {
        let total = (self.len() * self.dim()) as f64;
        if total == 0.0 {
            return 0.0;
        }
        100.0 * (total - self.nonzeros() as f64) / total
    }

    /// Bytes held by the block offsets, block ids and values.
    pub fn storage_bytes(&self) -> usize {
        self.block_offsets.len() * std::mem::size_of::<usize>()
            + self.block_ids.len() * std::mem::size_of::<u32>()
            + self.values.len() * std::mem::size_of::<f64>()
    }

    /// Row-major dense copy. `V × K·d` doubles; small tables only.
    pub fn to_dense(&self) -> Vec<f64> {
        let dim = self.dim();
        let mut out = vec![0.0; self.len() * dim];
        for i in 0..self.len() {
            for (j, v) in self.row_entries(i) {
                out[i * dim + j as usize] = v;
            }
        }
        out
    }

    /// Header `#wtv K d l`, then `token index:value ..` per word, values to
    /// 6 decimals.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = String::with_capacity(self.values.len() * 14);
        writeln!(out, "#wtv {} {} {}", self.k, self.d, self.l).unwrap();
        for i in 0..self.len() {
            out.push_str(&self.tokens[i]);
            for (j, v) in self.row_entries(i) {
                write!(out, " {j}:{v:.6}").unwrap();
            }
            out.push('\n');
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut lines = text.lines();
        let header: Vec<usize> = lines
            .next()
            .and_then(|h| h.strip_prefix("#wtv "))
            .map(|h| h.split(' ').filter_map(|x| x.parse().ok()).collect())
            .unwrap_or_default();
        let [k, d, l] = header[..] else {
            return Err(Error::parse(path, 1, "expected `#wtv K d l` header"));
        };
        if d == 0 {
            return Err(Error::parse(path, 1, "block width must be positive"));
        }
        let mut table = Self::empty(k, d, l, Vec::new());
        table.block_offsets.push(0);
        for (i, line) in lines.enumerate() {
            let mut fields = line.split(' ');
            table.tokens.push(fields.next().unwrap_or_default().to_string());
            let mut entries = Vec::new();
            for f in fields {
                let parsed = f
                    .split_once(':')
                    .and_then(|(a, b)| Some((a.parse::<u32>().ok()?, b.parse::<f64>().ok()?)));
                let Some(e) = parsed.filter(|(j, _)| (*j as usize) < k * d) else {
                    return Err(Error::parse(path, i + 2, format!("bad entry {f:?}")));
                };
                entries.push(e);
            }
            entries.sort_by_key(|e| e.0);
            let row_start = table.block_ids.len();
            for (j, v) in entries {
                let b = j / d as u32;
                if table.block_ids[row_start..].last() != Some(&b) {
                    table.push_block(b);
                }
                let n = table.values.len();
                table.values[n - d + (j as usize % d)] = v;
            }
            table.block_offsets.push(table.block_ids.len());
        }
        Ok(table)
    }
}

/// Builds one word-topic vector per vocabulary word.
pub fn build_table(
    embeddings: &EmbeddingMatrix,
    assignments: &SparseAssignmentTable,
    idf: &IdfTable,
) -> Result<WordTopicTable> {
    let v = embeddings.len();
    if assignments.rows.len() != v || idf.len() != v {
        return Err(Error::Data(format!(
            "misaligned vocabularies: {} vectors, {} assignment rows, {} idf weights",
            v,
            assignments.rows.len(),
            idf.len()
        )));
    }
    let (k, d) = (assignments.k, embeddings.dim());
    let mut table = WordTopicTable::empty(k, d, assignments.l, embeddings.tokens().to_vec());
    let mut empty = 0usize;
    for i in 0..v {
        let mut row = assignments.rows[i].clone();
        if row.is_empty() {
            empty += 1;
        }
        row.sort_by_key(|&(c, _)| c);
        let wv = embeddings.row(i);
        let w = idf.get(i as u32);
        for (c, p) in row {
            let scale = w * p;
            for (o, &x) in table.push_block(c).iter_mut().zip(wv) {
                *o = scale * x;
            }
        }
        table.end_row();
    }
    if v == 0 {
        table.block_offsets.push(0);
    }
    if empty > 0 {
        log::warn!("{empty} words have an empty cluster support; their word-topic vectors are zero");
    }
    Ok(table)
}

/// Dense per-word vectors (e.g. reduced word-topic vectors), row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseWordTable {
    pub dim: usize,
    pub tokens: Vec<String>,
    pub data: Vec<f64>,
}

impl DenseWordTable {
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DocVector {
    Dense(Vec<f64>),
    Sparse(SparseVector),
}

impl DocVector {
    pub fn dim(&self) -> usize {
        match self {
            DocVector::Dense(v) => v.len(),
            DocVector::Sparse(s) => s.dim,
        }
    }

    pub fn to_dense(&self) -> Vec<f64> {
        match self {
            DocVector::Dense(v) => v.clone(),
            DocVector::Sparse(s) => s.to_dense(),
        }
    }

    pub fn nnz(&self) -> usize {
        match self {
            DocVector::Dense(v) => v.iter().filter(|x| **x != 0.0).count(),
            DocVector::Sparse(s) => s.nnz(),
        }
    }

    /// `(index, value)` pairs of the nonzero entries.
    pub fn nonzero_entries(&self) -> Vec<(usize, f64)> {
        match self {
            DocVector::Dense(v) => v
                .iter()
                .enumerate()
                .filter(|(_, x)| **x != 0.0)
                .map(|(i, x)| (i, *x))
                .collect(),
            DocVector::Sparse(s) => s
                .indices
                .iter()
                .zip(&s.values)
                .filter(|(_, x)| **x != 0.0)
                .map(|(i, x)| (*i as usize, *x))
                .collect(),
        }
    }

    fn values_mut(&mut self) -> &mut [f64] {
        match self {
            DocVector::Dense(v) => v,
            DocVector::Sparse(s) => &mut s.values,
        }
    }

    pub fn normalize(&mut self) {
        normalize_l2(self.values_mut());
    }
}

/// Result of embedding one document.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedded {
    pub vector: DocVector,
    /// Tokens absent from the table.
    pub unknown: usize,
    /// Stored table entries added into the accumulator.
    pub touched: usize,
}

/// Something that maps a token sequence to a document vector.
pub trait DocumentEmbedder: Sync {
    fn dim(&self) -> usize;
    fn n_words(&self) -> usize;
    fn embed_indices(&self, tokens: &[Option<u32>], normalize: bool) -> Embedded;
}

/// Scratch space for sparse accumulation. Only blocks touched by the
/// current document are scanned and reset.
struct Accumulator {
    dense: Vec<f64>,
    touched: Vec<bool>,
    blocks: Vec<u32>,
    block: usize,
}

impl Accumulator {
    fn new(dim: usize, block: usize) -> Self {
        Self {
            dense: vec![0.0; dim],
            touched: vec![false; dim.div_ceil(block.max(1))],
            blocks: Vec::new(),
            block: block.max(1),
        }
    }

    #[inline]
    fn add_block(&mut self, b: u32, values: &[f64]) {
        let lo = b as usize * self.block;
        for (o, v) in self.dense[lo..lo + values.len()].iter_mut().zip(values) {
            *o += v;
        }
        if !self.touched[b as usize] {
            self.touched[b as usize] = true;
            self.blocks.push(b);
        }
    }

    /// Touched blocks as a sparse vector (explicit zeros inside a touched
    /// block are kept), resetting the scratch space.
    fn finish(&mut self) -> SparseVector {
        self.blocks.sort_unstable();
        let n = self.blocks.len() * self.block;
        let mut out = SparseVector {
            dim: self.dense.len(),
            indices: Vec::with_capacity(n),
            values: Vec::with_capacity(n),
        };
        for &b in &self.blocks {
            let lo = b as usize * self.block;
            let hi = (lo + self.block).min(self.dense.len());
            let seg = &mut self.dense[lo..hi];
            out.indices.extend(lo as u32..hi as u32);
            out.values.extend_from_slice(seg);
            seg.fill(0.0);
            self.touched[b as usize] = false;
        }
        self.blocks.clear();
        out
    }
}

thread_local! {
    static SCRATCH: std::cell::RefCell<Option<Accumulator>> = const { std::cell::RefCell::new(None) };
}

impl DocumentEmbedder for WordTopicTable {
    fn dim(&self) -> usize {
        WordTopicTable::dim(self)
    }

    fn n_words(&self) -> usize {
        self.len()
    }

    fn embed_indices(&self, tokens: &[Option<u32>], normalize: bool) -> Embedded {
        SCRATCH.with(|cell| {
            let mut slot = cell.borrow_mut();
            let acc = match slot.as_mut() {
                Some(a) if a.dense.len() == self.dim() && a.block == self.d.max(1) => a,
                _ => slot.insert(Accumulator::new(self.dim(), self.d)),
            };
            let mut unknown = 0;
            let mut touched = 0;
            for t in tokens {
                match t {
                    Some(i) => {
                        for (b, vals) in self.row_blocks(*i as usize) {
                            acc.add_block(b, vals);
                            touched += vals.len();
                        }
                    }
                    None => unknown += 1,
                }
            }
            let mut vector = DocVector::Sparse(acc.finish());
            if normalize {
                vector.normalize();
            }
            Embedded {
                vector,
                unknown,
                touched,
            }
        })
    }
}

impl DocumentEmbedder for DenseWordTable {
    fn dim(&self) -> usize {
        self.dim
    }

    fn n_words(&self) -> usize {
        self.len()
    }

    fn embed_indices(&self, tokens: &[Option<u32>], normalize: bool) -> Embedded {
        let mut out = vec![0.0; self.dim];
        let mut unknown = 0;
        let mut touched = 0;
        for t in tokens {
            match t {
                Some(i) => {
                    crate::linalg::axpy(1.0, self.row(*i as usize), &mut out);
                    touched += self.dim;
                }
                None => unknown += 1,
            }
        }
        if normalize {
            normalize_l2(&mut out);
        }
        Embedded {
            vector: DocVector::Dense(out),
            unknown,
            touched,
        }
    }
}

/// Maps token strings onto table rows.
pub fn resolve_tokens<S: AsRef<str>>(index: &HashMap<&str, u32>, tokens: &[S]) -> Vec<Option<u32>> {
    tokens.iter().map(|t| index.get(t.as_ref()).copied()).collect()
}

pub fn token_index(tokens: &[String]) -> HashMap<&str, u32> {
    tokens.iter().enumerate().map(|(i, t)| (t.as_str(), i as u32)).collect()
}

/// Embeds one document given as token strings. Unknown tokens are skipped
/// and counted; an all-unknown document yields a zero vector.
pub fn embed_document<E: DocumentEmbedder + ?Sized, S: AsRef<str>>(
    embedder: &E,
    index: &HashMap<&str, u32>,
    tokens: &[S],
    normalize: bool,
) -> Embedded {
    let ids = resolve_tokens(index, tokens);
    let out = embedder.embed_indices(&ids, normalize);
    if !tokens.is_empty() && out.unknown == tokens.len() {
        log::warn!("document has no known tokens; its vector is zero");
    }
    out
}

/// Dense brute-force composition: materializes every block of every token,
/// including blocks whose assignment is zero. Serves as the correctness and
/// timing reference for the sparse path.
#[derive(Debug, Clone)]
pub struct DenseOracle<'a> {
    pub embeddings: &'a EmbeddingMatrix,
    /// `V × K` sparsified assignments with zeros filled in.
    pub assignments: Vec<f64>,
    pub k: usize,
    pub idf: &'a IdfTable,
}

impl<'a> DenseOracle<'a> {
    pub fn new(embeddings: &'a EmbeddingMatrix, sparse: &SparseAssignmentTable, idf: &'a IdfTable) -> Self {
        Self {
            embeddings,
            assignments: sparse.to_dense().rows,
            k: sparse.k,
            idf,
        }
    }

    pub fn embed(&self, tokens: &[Option<u32>], normalize: bool) -> Vec<f64> {
        let d = self.embeddings.dim();
        let mut out = vec![0.0; self.k * d];
        for &t in tokens.iter().flatten() {
            let t = t as usize;
            let wv = self.embeddings.row(t);
            let idf = self.idf.get(t as u32);
            for c in 0..self.k {
                let scale = idf * self.assignments[t * self.k + c];
                let block = &mut out[c * d..(c + 1) * d];
                for (o, x) in block.iter_mut().zip(wv) {
                    *o += scale * x;
                }
            }
        }
        if normalize {
            normalize_l2(&mut out);
        }
        out
    }
}

/// Per-document vectors with their ids and label sets.
#[derive(Debug, Clone, PartialEq)]
pub struct DocumentVectorSet {
    pub dim: usize,
    pub ids: Vec<String>,
    pub labels: Vec<Vec<usize>>,
    pub vectors: Vec<DocVector>,
}

impl DocumentVectorSet {
    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    /// Percentage of zero entries across all document vectors.
    pub fn sparsity_percent(&self) -> f64 {
        let total = (self.len() * self.dim) as f64;
        if total == 0.0 {
            return 0.0;
        }
        let nnz: usize = self.vectors.iter().map(DocVector::nnz).sum();
        100.0 * (total - nnz as f64) / total
    }

    /// First line `#docvectors sparse|dense <dim>`, then `id v1 .. vD` or
    /// `id i:v ..` per document.
    pub fn save(&self, path: &Path, sparse: bool) -> Result<()> {
        let mut out = String::new();
        writeln!(out, "#docvectors {} {}", if sparse { "sparse" } else { "dense" }, self.dim).unwrap();
        for (id, v) in self.ids.iter().zip(&self.vectors) {
            out.push_str(id);
            if sparse {
                for (i, x) in v.nonzero_entries() {
                    write!(out, " {i}:{x:e}").unwrap();
                }
            } else {
                for x in v.to_dense() {
                    write!(out, " {x:e}").unwrap();
                }
            }
            out.push('\n');
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    /// Reads vectors written by [`DocumentVectorSet::save`]. Labels are
    /// left empty.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut lines = text.lines();
        let header: Vec<&str> = lines.next().unwrap_or_default().split(' ').collect();
        let (sparse, dim) = match header[..] {
            ["#docvectors", kind @ ("sparse" | "dense"), dim] => (
                kind == "sparse",
                dim.parse::<usize>()
                    .map_err(|_| Error::parse(path, 1, "bad dimension"))?,
            ),
            _ => return Err(Error::parse(path, 1, "expected `#docvectors sparse|dense D`")),
        };
        let mut set = Self {
            dim,
            ids: Vec::new(),
            labels: Vec::new(),
            vectors: Vec::new(),
        };
        for (i, line) in lines.enumerate() {
            let lineno = i + 2;
            let mut fields = line.split(' ');
            set.ids.push(fields.next().unwrap_or_default().to_string());
            let vector = if sparse {
                let mut sv = SparseVector::zeros(dim);
                for f in fields {
                    let (a, b) = f
                        .split_once(':')
                        .ok_or_else(|| Error::parse(path, lineno, "bad sparse entry"))?;
                    let j: u32 = a.parse().map_err(|_| Error::parse(path, lineno, "bad index"))?;
                    if j as usize >= dim {
                        return Err(Error::parse(path, lineno, "index out of range"));
                    }
                    sv.indices.push(j);
                    sv.values
                        .push(b.parse().map_err(|_| Error::parse(path, lineno, "bad value"))?);
                }
                DocVector::Sparse(sv)
            } else {
                let v = fields
                    .map(|f| f.parse::<f64>())
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .map_err(|_| Error::parse(path, lineno, "bad value"))?;
                if v.len() != dim {
                    return Err(Error::parse(path, lineno, format!("expected {dim} values")));
                }
                DocVector::Dense(v)
            };
            set.labels.push(Vec::new());
            set.vectors.push(vector);
        }
        Ok(set)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimingReport {
    pub documents: usize,
    /// Mean wall-clock microseconds per document.
    pub sparse_us_per_doc: f64,
    pub dense_us_per_doc: Option<f64>,
    pub touched_entries: usize,
    pub unknown_tokens: usize,
}

impl TimingReport {
    pub fn speedup(&self) -> Option<f64> {
        self.dense_us_per_doc
            .map(|d| d / self.sparse_us_per_doc.max(f64::MIN_POSITIVE))
    }
}

/// One document to embed: id, labels, and table-resolved tokens.
#[derive(Debug, Clone)]
pub struct PreparedDoc {
    pub id: String,
    pub labels: Vec<usize>,
    pub tokens: Vec<Option<u32>>,
}

/// Embeds every document. Timing is measured single-threaded and on the
/// same footing for both paths: each document vector is formed and dropped.
/// When a dense oracle is supplied its per-document time is measured over
/// the same documents.
pub fn embed_corpus<E: DocumentEmbedder + ?Sized>(
    docs: &[PreparedDoc],
    embedder: &E,
    normalize: bool,
    oracle: Option<&DenseOracle<'_>>,
) -> (DocumentVectorSet, TimingReport) {
    let start = Instant::now();
    for d in docs {
        std::hint::black_box(embedder.embed_indices(&d.tokens, normalize));
    }
    let sparse_time = start.elapsed().as_secs_f64();

    let dense_time = oracle.map(|o| {
        let start = Instant::now();
        for d in docs {
            std::hint::black_box(o.embed(&d.tokens, normalize));
        }
        start.elapsed().as_secs_f64()
    });

    let embedded: Vec<Embedded> = docs
        .iter()
        .map(|d| embedder.embed_indices(&d.tokens, normalize))
        .collect();
    let n = docs.len().max(1) as f64;
    let mut all_unknown = 0;
    for (d, e) in docs.iter().zip(&embedded) {
        if !d.tokens.is_empty() && e.unknown == d.tokens.len() {
            all_unknown += 1;
        }
    }
    if all_unknown > 0 {
        log::warn!("{all_unknown} documents have no known tokens and embed to zero");
    }
    let report = TimingReport {
        documents: docs.len(),
        sparse_us_per_doc: sparse_time * 1e6 / n,
        dense_us_per_doc: dense_time.map(|t| t * 1e6 / n),
        touched_entries: embedded.iter().map(|e| e.touched).sum(),
        unknown_tokens: embedded.iter().map(|e| e.unknown).sum(),
    };
    let set = DocumentVectorSet {
        dim: embedder.dim(),
        ids: docs.iter().map(|d| d.id.clone()).collect(),
        labels: docs.iter().map(|d| d.labels.clone()).collect(),
        vectors: embedded.into_iter().map(|e| e.vector).collect(),
    };
    (set, report)
}

/// Parallel variant of [`embed_corpus`] without timing.
pub fn embed_corpus_parallel<E: DocumentEmbedder + ?Sized>(
    docs: &[PreparedDoc],
    embedder: &E,
    normalize: bool,
) -> DocumentVectorSet {
    let vectors = docs
        .par_iter()
        .map(|d| embedder.embed_indices(&d.tokens, normalize).vector)
        .collect();
    DocumentVectorSet {
        dim: embedder.dim(),
        ids: docs.iter().map(|d| d.id.clone()).collect(),
        labels: docs.iter().map(|d| d.labels.clone()).collect(),
        vectors,
    }
}

/// Document-level thresholding of composite vectors: entries with
/// `|v| < fraction · (|mean min| + |mean max|) / 2` are zeroed, where the
/// means are taken over documents of each vector's minimum and maximum
/// entry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DocThreshold {
    pub threshold: f64,
}

impl DocThreshold {
    pub fn fit(vectors: &DocumentVectorSet, fraction: f64) -> Self {
        let n = vectors.len().max(1) as f64;
        let (mut min_sum, mut max_sum) = (0.0, 0.0);
        for v in &vectors.vectors {
            let dense = v.to_dense();
            min_sum += dense.iter().copied().fold(f64::INFINITY, f64::min);
            max_sum += dense.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        }
        let (min_mean, max_mean) = (min_sum / n, max_sum / n);
        Self {
            threshold: fraction * (min_mean.abs() + max_mean.abs()) / 2.0,
        }
    }

    pub fn apply(&self, vectors: &mut DocumentVectorSet) {
        for v in &mut vectors.vectors {
            for x in v.values_mut() {
                if x.abs() < self.threshold {
                    *x = 0.0;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn word_topic_vector_example() {
        let wtv = word_topic_vector(&[1.0, 2.0], &[(1, 0.9)], 2.0, 3);
        let dense = wtv.to_dense();
        let expected = [0.0, 0.0, 1.8, 3.6, 0.0, 0.0];
        for (a, b) in dense.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_idf_gives_zero_vector() {
        let wtv = word_topic_vector(&[1.0, 2.0], &[(0, 0.5), (2, 0.5)], 0.0, 3);
        assert!(wtv.to_dense().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn empty_support_gives_zero_vector() {
        let wtv = word_topic_vector(&[1.0, 2.0], &[], 1.0, 3);
        assert_eq!(wtv.indices.len(), 0);
        assert!(wtv.to_dense().iter().all(|&x| x == 0.0));
    }

    fn tiny_table() -> (EmbeddingMatrix, SparseAssignmentTable, IdfTable) {
        let emb = EmbeddingMatrix::new(
            vec!["a".into(), "b".into()],
            2,
            vec![1.0, 2.0, -1.0, 0.5],
        )
        .unwrap();
        let sp = SparseAssignmentTable {
            k: 3,
            l: 2,
            rows: vec![vec![(0, 0.6), (2, 0.4)], vec![(1, 1.0)]],
        };
        (emb, sp, IdfTable { weights: vec![1.0, 2.0] })
    }

    #[test]
    fn build_table_rejects_misaligned() {
        let (emb, mut sp, idf) = tiny_table();
        sp.rows.pop();
        assert!(build_table(&emb, &sp, &idf).is_err());
    }

    #[test]
    fn single_token_and_repetition() {
        let (emb, sp, idf) = tiny_table();
        let table = build_table(&emb, &sp, &idf).unwrap();
        let index = token_index(table.tokens());
        let one = embed_document(&table, &index, &["a"], false).vector.to_dense();
        assert_eq!(one, table.row_vector(0).to_dense());
        let two = embed_document(&table, &index, &["a", "a"], false).vector.to_dense();
        for (x, y) in one.iter().zip(&two) {
            assert_eq!(2.0 * x, *y);
        }
    }

    #[test]
    fn unknown_tokens_are_counted() {
        let (emb, sp, idf) = tiny_table();
        let table = build_table(&emb, &sp, &idf).unwrap();
        let index = token_index(table.tokens());
        let e = embed_document(&table, &index, &["zz", "b", "yy"], true);
        assert_eq!(e.unknown, 2);
        let all_unknown = embed_document(&table, &index, &["zz"], true);
        assert_eq!(all_unknown.vector.nnz(), 0);
    }

    #[test]
    fn normalized_vector_has_unit_norm() {
        let (emb, sp, idf) = tiny_table();
        let table = build_table(&emb, &sp, &idf).unwrap();
        let index = token_index(table.tokens());
        let v = embed_document(&table, &index, &["a", "b"], true).vector.to_dense();
        assert!((crate::linalg::norm(&v) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn table_file_roundtrip() {
        let (emb, sp, idf) = tiny_table();
        let table = build_table(&emb, &sp, &idf).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("wtv.txt");
        table.save(&p).unwrap();
        let back = WordTopicTable::load(&p).unwrap();
        assert_eq!(back.tokens(), table.tokens());
        for (a, b) in back.to_dense().iter().zip(table.to_dense()) {
            assert!((a - b).abs() <= 5e-7);
        }
    }

    #[test]
    fn doc_vector_file_roundtrip() {
        let (emb, sp, idf) = tiny_table();
        let table = build_table(&emb, &sp, &idf).unwrap();
        let docs = vec![
            PreparedDoc { id: "d0".into(), labels: vec![0], tokens: vec![Some(0), Some(1)] },
            PreparedDoc { id: "d1".into(), labels: vec![1], tokens: vec![] },
        ];
        let (set, report) = embed_corpus(&docs, &table, true, None);
        assert_eq!(report.documents, 2);
        let dir = tempfile::tempdir().unwrap();
        for sparse in [true, false] {
            let p = dir.path().join("dv.txt");
            set.save(&p, sparse).unwrap();
            let back = DocumentVectorSet::load(&p).unwrap();
            assert_eq!(back.ids, set.ids);
            for (a, b) in back.vectors.iter().zip(&set.vectors) {
                assert_eq!(a.to_dense(), b.to_dense());
            }
        }
    }

    #[test]
    fn empty_corpus() {
        let (emb, sp, idf) = tiny_table();
        let table = build_table(&emb, &sp, &idf).unwrap();
        let (set, _) = embed_corpus(&[], &table, true, None);
        assert!(set.is_empty());
    }

    #[test]
    fn doc_threshold_zeroes_small_entries() {
        let mut set = DocumentVectorSet {
            dim: 3,
            ids: vec!["a".into(), "b".into()],
            labels: vec![vec![], vec![]],
            vectors: vec![
                DocVector::Dense(vec![-1.0, 0.01, 1.0]),
                DocVector::Dense(vec![-1.0, 0.5, 1.0]),
            ],
        };
        let t = DocThreshold::fit(&set, 0.04);
        assert!((t.threshold - 0.04).abs() < 1e-12);
        t.apply(&mut set);
        assert_eq!(set.vectors[0].to_dense(), vec![-1.0, 0.0, 1.0]);
        assert_eq!(set.vectors[1].to_dense(), vec![-1.0, 0.5, 1.0]);
    }
}
