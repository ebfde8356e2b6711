//! Text encoders mapping layer content to fixed-length embeddings.
//!
//! The default encoder is dependency-free and fully deterministic: hashed
//! character 1–3-gram counts are pushed through a fixed seeded random
//! projection and L2-normalized. A pretrained model can be slotted in behind
//! the same trait (see [`ExternalEncoder`]).

use std::collections::HashMap;

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default embedding length.
pub const DEFAULT_EMBED_DIM: usize = 16;

const NGRAM_BUCKETS: usize = 1024;
const DEFAULT_PROJECTION_SEED: u64 = 0x7475_7274_6c65;

/// Fixed-length text embedding with L2 norm in `{0} ∪ (0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TextEmbedding(pub Array1<f64>);

impl TextEmbedding {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

pub trait TextEncoder: Send + Sync {
    fn dim(&self) -> usize;
    fn encode(&self, content: &str) -> TextEmbedding;
}

/// Encoder selection key used in run configs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TextEncoderKind {
    #[default]
    HashedNgram,
    External,
}

fn fnv1a(bytes: impl IntoIterator<Item = u8>) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x1_0000_0000_01b3);
    }
    h
}

/// Hashed character n-gram encoder.
pub struct HashedNgramEncoder {
    dim: usize,
    projection: Array2<f64>,
}

impl HashedNgramEncoder {
    pub fn new(dim: usize) -> Self {
        Self::with_seed(dim, DEFAULT_PROJECTION_SEED)
    }

    pub fn with_seed(dim: usize, seed: u64) -> Self {
        assert!(dim >= 1, "embedding dim must be at least 1");
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let scale = 1.0 / (NGRAM_BUCKETS as f64).sqrt();
        let projection = Array2::from_shape_fn((dim, NGRAM_BUCKETS), |_| {
            rng.gen_range(-1.0..1.0) * scale
        });
        HashedNgramEncoder { dim, projection }
    }

    fn bucket_counts(content: &str) -> Vec<(usize, f64)> {
        let chars: Vec<char> = content.chars().collect();
        let mut counts: HashMap<usize, f64> = HashMap::new();
        for n in 1..=3usize {
            if chars.len() < n {
                break;
            }
            for window in chars.windows(n) {
                // salt by n so "ab" as a 2-gram differs from 'a','b' 1-grams
                let mut bytes = vec![n as u8];
                let mut buf = [0u8; 4];
                for ch in window {
                    bytes.extend_from_slice(ch.encode_utf8(&mut buf).as_bytes());
                }
                let bucket = (fnv1a(bytes) % NGRAM_BUCKETS as u64) as usize;
                *counts.entry(bucket).or_insert(0.0) += 1.0;
            }
        }
        let mut pairs: Vec<(usize, f64)> = counts.into_iter().collect();
        pairs.sort_unstable_by_key(|&(b, _)| b);
        pairs
    }
}

impl TextEncoder for HashedNgramEncoder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn encode(&self, content: &str) -> TextEmbedding {
        let mut e = Array1::zeros(self.dim);
        for (bucket, count) in Self::bucket_counts(content) {
            for (row, v) in e.iter_mut().enumerate() {
                *v += self.projection[(row, bucket)] * count;
            }
        }
        let norm = e.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            e.mapv_inplace(|v| v / norm);
        }
        TextEmbedding(e)
    }
}

/// Lookup encoder backed by precomputed embeddings (e.g. exported from a
/// pretrained sentence model). Unknown content encodes to the zero vector.
pub struct ExternalEncoder {
    dim: usize,
    table: HashMap<String, Array1<f64>>,
}

impl ExternalEncoder {
    /// Load a JSON map `{"content": [f64; dim], ...}`.
    pub fn from_json(bytes: &[u8], dim: usize) -> Result<Self> {
        let raw: HashMap<String, Vec<f64>> =
            serde_json::from_slice(bytes).map_err(|e| Error::Schema(e.to_string()))?;
        let mut table = HashMap::with_capacity(raw.len());
        for (content, values) in raw {
            if values.len() != dim {
                return Err(Error::Schema(format!(
                    "embedding for {content:?} has length {}, expected {dim}",
                    values.len()
                )));
            }
            let mut e = Array1::from_vec(values);
            let norm = e.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 1.0 {
                e.mapv_inplace(|v| v / norm);
            }
            table.insert(content, e);
        }
        Ok(ExternalEncoder { dim, table })
    }
}

impl TextEncoder for ExternalEncoder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn encode(&self, content: &str) -> TextEmbedding {
        TextEmbedding(
            self.table
                .get(content)
                .cloned()
                .unwrap_or_else(|| Array1::zeros(self.dim)),
        )
    }
}
