//! Deterministic text embeddings by signed feature hashing.
//!
//! Each lowercase alphanumeric token is hashed with SHA-256; the first eight
//! bytes pick a bucket and the ninth byte's low bit picks the sign. The
//! bucket counts are L2-normalized. Output depends only on the text and the
//! dimension, so it is identical across runs and platforms.

use sha2::{Digest, Sha256};

pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Hash-embeds `text` into `dim` buckets. Text without tokens maps to the
/// zero vector.
pub fn hash_embed(text: &str, dim: usize) -> Vec<f64> {
    assert!(dim >= 1, "hash_embed dim must be >= 1");
    let mut v = vec![0.0; dim];
    for tok in tokenize(text) {
        let digest = Sha256::digest(tok.as_bytes());
        let mut b = [0u8; 8];
        b.copy_from_slice(&digest[..8]);
        let bucket = (u64::from_le_bytes(b) % dim as u64) as usize;
        let sign = if digest[8] & 1 == 0 { 1.0 } else { -1.0 };
        v[bucket] += sign;
    }
    let n = crate::numerics::norm(&v);
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    v
}

/// Wraps [`hash_embed`] and counts inputs that produced no tokens.
#[derive(Debug, Clone)]
pub struct HashEmbedder {
    pub dim: usize,
    pub empty_inputs: usize,
    pub total_inputs: usize,
}

impl HashEmbedder {
    pub fn new(dim: usize) -> Self {
        HashEmbedder {
            dim,
            empty_inputs: 0,
            total_inputs: 0,
        }
    }

    pub fn embed(&mut self, text: &str) -> Vec<f64> {
        self.total_inputs += 1;
        let v = hash_embed(text, self.dim);
        if v.iter().all(|&x| x == 0.0) {
            self.empty_inputs += 1;
            log::warn!("text `{text}` produced no tokens; using the zero vector");
        }
        v
    }
}

/// Builds a news-style query string from article metadata: category,
/// subcategory, then entity surface forms, space-joined and lowercased.
/// Articles without entities fall back to their title tokens.
pub fn news_query(category: &str, subcategory: &str, entities: &[&str], title: &str) -> String {
    let mut parts: Vec<String> = vec![category.to_lowercase(), subcategory.to_lowercase()];
    if entities.is_empty() {
        parts.extend(tokenize(title));
    } else {
        parts.extend(entities.iter().map(|e| e.to_lowercase()));
    }
    parts
        .into_iter()
        .filter(|p| !p.trim().is_empty())
        .map(|p| p.split_whitespace().collect::<Vec<_>>().join(" "))
        .collect::<Vec<_>>()
        .join(" ")
}
