//! Deterministic text encoder: lowercase alphanumeric tokens, feature-hashed
//! into a seeded embedding table, summed with counts and L2-normalized.
//!
//! Buckets are `FNV-1a 64(token UTF-8 bytes) mod num_buckets`. Table rows are
//! drawn from a ChaCha8 stream keyed by `(seed, bucket)`, so a row's initial
//! value does not depend on which other rows have been touched.

use std::collections::{BTreeMap, HashMap};
use std::hash::Hasher;

use fnv::FnvHasher;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::Matrix;

pub const DEFAULT_NUM_BUCKETS: u64 = 1 << 18;

/// Token multiset, iterated in lexicographic token order.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TokenBag(BTreeMap<String, u32>);

impl TokenBag {
    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn count(&self, token: &str) -> u32 {
        self.0.get(token).copied().unwrap_or(0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, u32)> {
        self.0.iter().map(|(k, &v)| (k.as_str(), v))
    }
}

pub fn tokenize(text: &str) -> TokenBag {
    let mut bag = BTreeMap::new();
    for tok in text.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()) {
        *bag.entry(tok.to_lowercase()).or_insert(0) += 1;
    }
    TokenBag(bag)
}

/// FNV-1a 64-bit hash of the token's UTF-8 bytes.
pub fn token_hash(token: &str) -> u64 {
    let mut h = FnvHasher::default();
    h.write(token.as_bytes());
    h.finish()
}

pub fn bucket(token: &str, num_buckets: u64) -> u64 {
    token_hash(token) % num_buckets
}

/// Unit-norm text vector, or all zeros for empty text.
#[derive(Clone, Debug, PartialEq)]
pub struct SemanticEmbedding(pub Vec<f64>);

impl SemanticEmbedding {
    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn cosine(&self, other: &Self) -> f64 {
        let d: f64 = self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum();
        let n = self.norm() * other.norm();
        if n == 0.0 {
            0.0
        } else {
            d / n
        }
    }
}

/// Anything that turns text into a fixed-width semantic vector.
pub trait SemanticEncoder {
    fn dim(&self) -> usize;
    fn encode(&self, text: &str) -> SemanticEmbedding;
}

/// A document reduced to `(bucket, count)` pairs in token order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct HashedDoc {
    pub entries: Vec<(u64, f64)>,
}

impl HashedDoc {
    pub fn from_bag(bag: &TokenBag, num_buckets: u64) -> Self {
        Self { entries: bag.iter().map(|(t, c)| (bucket(t, num_buckets), c as f64)).collect() }
    }

    pub fn from_text(text: &str, num_buckets: u64) -> Self {
        Self::from_bag(&tokenize(text), num_buckets)
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Hashed embedding table of logical shape `num_buckets × dim`.
///
/// Only rows that have been materialized (touched by a training document or
/// loaded from disk) are stored; every other row is regenerated on demand.
#[derive(Clone, Debug, PartialEq)]
pub struct TextTable {
    seed: u64,
    num_buckets: u64,
    dim: usize,
    index: HashMap<u64, usize>,
    buckets: Vec<u64>,
    rows: Matrix,
}

impl TextTable {
    pub fn new(num_buckets: u64, dim: usize, seed: u64) -> Result<Self> {
        if num_buckets == 0 {
            return Err(Error::InvalidInput("num_buckets must be at least 1".into()));
        }
        Ok(Self {
            seed,
            num_buckets,
            dim,
            index: HashMap::new(),
            buckets: Vec::new(),
            rows: Matrix::zeros(0, dim),
        })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn num_buckets(&self) -> u64 {
        self.num_buckets
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Logical parameter count, `num_buckets × dim`.
    pub fn num_params(&self) -> usize {
        self.num_buckets as usize * self.dim
    }

    /// Initial value of a row, uniform in `[-1/√dim, 1/√dim]`.
    pub fn initial_row(&self, bucket: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(bucket);
        let bound = 1.0 / (self.dim.max(1) as f64).sqrt();
        (0..self.dim).map(|_| rng.gen_range(-bound..=bound)).collect()
    }

    /// Row index of `bucket` in the materialized storage, creating it if needed.
    pub fn materialize(&mut self, bucket: u64) -> usize {
        if let Some(&i) = self.index.get(&bucket) {
            return i;
        }
        let row = self.initial_row(bucket);
        let i = self.buckets.len();
        self.rows.push_row(&row);
        self.buckets.push(bucket);
        self.index.insert(bucket, i);
        i
    }

    /// Materializes every bucket of `doc` and returns `(row index, count)` pairs.
    pub fn materialize_doc(&mut self, doc: &HashedDoc) -> Vec<(usize, f64)> {
        doc.entries.iter().map(|&(b, c)| (self.materialize(b), c)).collect()
    }

    pub fn materialized_index(&self, bucket: u64) -> Option<usize> {
        self.index.get(&bucket).copied()
    }

    /// Buckets in materialization order, aligned with [`Self::rows`].
    pub fn materialized_buckets(&self) -> &[u64] {
        &self.buckets
    }

    pub fn rows(&self) -> &Matrix {
        &self.rows
    }

    pub fn rows_mut(&mut self) -> &mut Matrix {
        &mut self.rows
    }

    /// Rebuilds a table from stored rows.
    pub fn from_parts(seed: u64, num_buckets: u64, dim: usize, buckets: Vec<u64>, rows: Matrix) -> Result<Self> {
        if rows.rows() != buckets.len() || rows.cols() != dim {
            return Err(Error::InvalidInput("text table rows do not match bucket list".into()));
        }
        let index: HashMap<u64, usize> = buckets.iter().enumerate().map(|(i, &b)| (b, i)).collect();
        if index.len() != buckets.len() || buckets.iter().any(|&b| b >= num_buckets) {
            return Err(Error::InvalidInput("invalid text table bucket list".into()));
        }
        Ok(Self { seed, num_buckets, dim, index, buckets, rows })
    }

    fn with_row<T>(&self, bucket: u64, f: impl FnOnce(&[f64]) -> T) -> T {
        match self.index.get(&bucket) {
            Some(&i) => f(self.rows.row(i)),
            None => f(&self.initial_row(bucket)),
        }
    }

    /// Unnormalized weighted sum of the document's rows.
    pub fn sum_doc(&self, doc: &HashedDoc, out: &mut [f64]) {
        out.iter_mut().for_each(|x| *x = 0.0);
        for &(b, c) in &doc.entries {
            self.with_row(b, |row| crate::linalg::axpy(c, row, out));
        }
    }

    pub fn encode_doc(&self, doc: &HashedDoc) -> SemanticEmbedding {
        let mut v = vec![0.0; self.dim];
        self.sum_doc(doc, &mut v);
        normalize_in_place(&mut v);
        SemanticEmbedding(v)
    }

    pub fn encode_bag(&self, bag: &TokenBag) -> SemanticEmbedding {
        self.encode_doc(&HashedDoc::from_bag(bag, self.num_buckets))
    }
}

/// Divides by the L2 norm; leaves an all-zero vector untouched. Returns the norm.
pub fn normalize_in_place(v: &mut [f64]) -> f64 {
    let norm = crate::linalg::dot(v, v).sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    norm
}

impl SemanticEncoder for TextTable {
    fn dim(&self) -> usize {
        self.dim
    }

    fn encode(&self, text: &str) -> SemanticEmbedding {
        encode_text(text, self)
    }
}

/// `normalize(Σ count · table[bucket(token)])`, or zeros for empty text.
pub fn encode_text(text: &str, table: &TextTable) -> SemanticEmbedding {
    table.encode_bag(&tokenize(text))
}

/// Raw user and item documents keyed by external id.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Corpus {
    pub user_docs: BTreeMap<u64, String>,
    pub item_docs: BTreeMap<u64, String>,
}

impl Corpus {
    pub fn item_text(&self, item: u64) -> Option<&str> {
        self.item_docs.get(&item).map(String::as_str)
    }

    pub fn user_text(&self, user: u64) -> Option<&str> {
        self.user_docs.get(&user).map(String::as_str)
    }
}
