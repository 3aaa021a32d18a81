//! MinHash signatures over word shingles and LSH-banded near-duplicate removal.
//!
//! Permutation `i` maps a 64-bit shingle hash `h` to `(a_i * h + b_i) mod p`
//! with `p = 2^61 - 1`. Coefficients come from a ChaCha stream seeded by the
//! configuration, so signatures are reproducible across runs and machines.

use std::collections::{BTreeSet, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;
use xxhash_rust::xxh3::xxh3_64;

use super::PipelineConfig;

pub const MERSENNE_61: u64 = (1 << 61) - 1;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MinHashError {
    #[error("cannot shingle empty text")]
    EmptyText,
}

/// Per-permutation minima of a text's shingle set.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MinHashSignature(Vec<u64>);

impl MinHashSignature {
    pub fn values(&self) -> &[u64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Fraction of positions where both signatures agree.
    pub fn estimated_jaccard(&self, other: &MinHashSignature) -> f64 {
        assert_eq!(self.len(), other.len(), "signature lengths differ");
        if self.0.is_empty() {
            return 0.0;
        }
        let equal = self.0.iter().zip(&other.0).filter(|(a, b)| a == b).count();
        equal as f64 / self.0.len() as f64
    }
}

/// Distinct word n-grams of the lowercased text, space-joined. A text with
/// fewer than `n` tokens yields a single shingle of all its tokens.
pub fn shingles(text: &str, n: usize) -> BTreeSet<String> {
    let lowered = text.to_lowercase();
    let tokens: Vec<&str> = lowered.split_whitespace().collect();
    if tokens.is_empty() {
        return BTreeSet::new();
    }
    if tokens.len() < n {
        return BTreeSet::from([tokens.join(" ")]);
    }
    tokens.windows(n).map(|w| w.join(" ")).collect()
}

#[inline]
fn mod_mersenne(x: u128) -> u64 {
    let p = MERSENNE_61 as u128;
    let mut r = (x & p) + (x >> 61);
    r = (r & p) + (r >> 61);
    let mut r = r as u64;
    if r >= MERSENNE_61 {
        r -= MERSENNE_61;
    }
    r
}

#[derive(Debug, Clone)]
pub struct MinHasher {
    coefficients: Vec<(u64, u64)>,
    shingle_n: usize,
}

impl MinHasher {
    pub fn new(permutations: usize, shingle_n: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let coefficients = (0..permutations)
            .map(|_| (rng.random_range(1..MERSENNE_61), rng.random_range(0..MERSENNE_61)))
            .collect();
        Self {
            coefficients,
            shingle_n: shingle_n.max(1),
        }
    }

    pub fn from_config(config: &PipelineConfig) -> Self {
        Self::new(config.minhash_permutations, config.shingle_n, config.seed)
    }

    pub fn permutations(&self) -> usize {
        self.coefficients.len()
    }

    pub fn signature(&self, text: &str) -> Result<MinHashSignature, MinHashError> {
        let hashes: Vec<u64> = shingles(text, self.shingle_n)
            .iter()
            .map(|s| mod_mersenne(xxh3_64(s.as_bytes()) as u128))
            .collect();
        if hashes.is_empty() {
            return Err(MinHashError::EmptyText);
        }
        let values = self
            .coefficients
            .iter()
            .map(|&(a, b)| {
                hashes
                    .iter()
                    .map(|&h| mod_mersenne(a as u128 * h as u128 + b as u128))
                    .min()
                    .expect("non-empty shingle set")
            })
            .collect();
        Ok(MinHashSignature(values))
    }
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    /// The smaller index always becomes the root, so every root is the
    /// earliest member of its group.
    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra < rb {
            self.parent[rb] = ra;
        } else if rb < ra {
            self.parent[ra] = rb;
        }
    }
}

/// For each text, the index of the earliest text in its near-duplicate group.
///
/// LSH banding only proposes candidate pairs; a pair is merged iff its
/// estimated Jaccard reaches `threshold`.
pub fn near_duplicate_roots(
    texts: &[&str],
    hasher: &MinHasher,
    bands: usize,
    rows: usize,
    threshold: f64,
) -> Result<Vec<usize>, MinHashError> {
    assert_eq!(
        bands * rows,
        hasher.permutations(),
        "bands x rows must equal permutations"
    );
    let signatures = texts
        .par_iter()
        .map(|t| hasher.signature(t))
        .collect::<Result<Vec<_>, _>>()?;

    let mut uf = UnionFind::new(texts.len());
    for band in 0..bands {
        let range = band * rows..(band + 1) * rows;
        let mut buckets: HashMap<&[u64], Vec<usize>> = HashMap::new();
        for (i, sig) in signatures.iter().enumerate() {
            buckets.entry(&sig.values()[range.clone()]).or_default().push(i);
        }
        for members in buckets.values().filter(|m| m.len() > 1) {
            for (pos, &i) in members.iter().enumerate() {
                for &j in &members[pos + 1..] {
                    if uf.find(i) != uf.find(j) && signatures[i].estimated_jaccard(&signatures[j]) >= threshold {
                        uf.union(i, j);
                    }
                }
            }
        }
    }
    Ok((0..texts.len()).map(|i| uf.find(i)).collect())
}

/// Indices of texts kept by near-dedup (group representatives), ascending.
pub fn near_dedup_keep(
    texts: &[&str],
    hasher: &MinHasher,
    config: &PipelineConfig,
) -> Result<Vec<usize>, MinHashError> {
    let roots = near_duplicate_roots(
        texts,
        hasher,
        config.lsh_bands,
        config.lsh_rows,
        config.near_dup_threshold,
    )?;
    Ok(roots
        .iter()
        .enumerate()
        .filter(|(i, r)| i == *r)
        .map(|(i, _)| i)
        .collect())
}
