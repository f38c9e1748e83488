//! Greedy token-embedding similarity.

use std::collections::HashMap;

use sha2::{Digest, Sha256};

use super::{tokenize, MetricError};

/// Maps tokens to vectors of a fixed dimension.
pub trait EmbeddingProvider: Send + Sync {
    fn id(&self) -> String;
    fn dim(&self) -> usize;
    fn embed(&self, tokens: &[String]) -> Result<Vec<Vec<f64>>, MetricError>;
}

/// Deterministic vectors derived from a hash of each token. Identical
/// tokens get identical vectors; nothing else is implied. Useful for tests
/// and offline runs, not as a semantic score.
#[derive(Debug, Clone)]
pub struct HashEmbedder {
    pub dim: usize,
}

impl Default for HashEmbedder {
    fn default() -> Self {
        HashEmbedder { dim: 64 }
    }
}

impl EmbeddingProvider for HashEmbedder {
    fn id(&self) -> String {
        format!("hash-{}", self.dim)
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, tokens: &[String]) -> Result<Vec<Vec<f64>>, MetricError> {
        Ok(tokens
            .iter()
            .map(|t| {
                let mut v = Vec::with_capacity(self.dim);
                let mut block = 0u32;
                while v.len() < self.dim {
                    let h = Sha256::new().chain_update(block.to_le_bytes()).chain_update(t.as_bytes()).finalize();
                    v.extend(h.iter().take(self.dim - v.len()).map(|&b| f64::from(b) / 255.0 - 0.5));
                    block += 1;
                }
                v
            })
            .collect())
    }
}

/// Vectors from a fixed table, e.g. loaded from a JSON object mapping each
/// token to an array of numbers. Unknown tokens are an error.
#[derive(Debug, Clone)]
pub struct StaticEmbedder {
    name: String,
    dim: usize,
    table: HashMap<String, Vec<f64>>,
}

impl StaticEmbedder {
    pub fn new(name: impl Into<String>, table: HashMap<String, Vec<f64>>) -> Result<Self, MetricError> {
        let dim = table.values().next().map_or(0, Vec::len);
        if dim == 0 {
            return Err(MetricError::Provider("embedding table is empty".into()));
        }
        if let Some((t, v)) = table.iter().find(|(_, v)| v.len() != dim) {
            return Err(MetricError::Provider(format!("vector for {t:?} has {} dimensions, expected {dim}", v.len())));
        }
        Ok(StaticEmbedder { name: name.into(), dim, table })
    }

    pub fn from_json(name: impl Into<String>, json: &str) -> Result<Self, MetricError> {
        let table: HashMap<String, Vec<f64>> =
            serde_json::from_str(json).map_err(|e| MetricError::Provider(e.to_string()))?;
        Self::new(name, table)
    }
}

impl EmbeddingProvider for StaticEmbedder {
    fn id(&self) -> String {
        format!("static-{}", self.name)
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, tokens: &[String]) -> Result<Vec<Vec<f64>>, MetricError> {
        tokens
            .iter()
            .map(|t| self.table.get(t).cloned().ok_or_else(|| MetricError::Provider(format!("no vector for {t:?}"))))
            .collect()
    }
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        (dot / (na * nb)).clamp(0.0, 1.0)
    }
}

/// Greedy-matching precision, recall and F1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmbedScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Each candidate token is matched to its most similar reference token
/// (precision) and vice versa (recall). Similarities are cosines clipped to
/// [0, 1].
pub fn embed_score(candidate: &str, reference: &str, provider: &dyn EmbeddingProvider) -> Result<EmbedScore, MetricError> {
    let c = tokenize(candidate);
    let r = tokenize(reference);
    if c.is_empty() || r.is_empty() {
        return Err(MetricError::EmptyInput);
    }
    let (cv, rv) = (provider.embed(&c)?, provider.embed(&r)?);
    let dim = provider.dim();
    if let Some(v) = cv.iter().chain(&rv).find(|v| v.len() != dim) {
        return Err(MetricError::DimensionMismatch { expected: dim, found: v.len() });
    }
    let greedy = |from: &[Vec<f64>], to: &[Vec<f64>]| {
        from.iter().map(|a| to.iter().map(|b| cosine(a, b)).fold(0.0, f64::max)).sum::<f64>() / from.len() as f64
    };
    let precision = greedy(&cv, &rv);
    let recall = greedy(&rv, &cv);
    let f1 = if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
    Ok(EmbedScore { precision, recall, f1 })
}
