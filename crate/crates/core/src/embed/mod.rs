//! Embedding backends and the on-disk vector format.

mod hash;
pub mod io;
mod remote;

use std::collections::{HashMap, HashSet};
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

pub use crate::linalg::cosine_similarity;
pub use hash::HashEmbedder;
pub use io::{load_embeddings, read_embeddings, save_embeddings, write_embeddings};
pub use remote::RemoteEmbedder;

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    pub id: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Backend {
    File,
    Remote,
    HashTest,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProviderConfig {
    pub backend: Backend,
    pub dim: usize,
    /// Base URL of the remote service (remote only); `/embed` is appended.
    pub endpoint: Option<String>,
    /// Embedding file to look ids up in (file only).
    pub path: Option<PathBuf>,
    pub batch_size: usize,
    pub timeout_ms: u64,
    pub max_retries: u32,
    pub backoff_base_ms: u64,
    /// Upper bound on concurrent remote requests.
    pub max_in_flight: usize,
}

impl ProviderConfig {
    pub fn hash_test(dim: usize) -> Self {
        Self {
            backend: Backend::HashTest,
            dim,
            endpoint: None,
            path: None,
            batch_size: 64,
            timeout_ms: 30_000,
            max_retries: 3,
            backoff_base_ms: 100,
            max_in_flight: 4,
        }
    }

    pub fn remote(endpoint: impl Into<String>, dim: usize) -> Self {
        Self {
            backend: Backend::Remote,
            endpoint: Some(endpoint.into()),
            ..Self::hash_test(dim)
        }
    }

    pub fn file(path: impl Into<PathBuf>, dim: usize) -> Self {
        Self {
            backend: Backend::File,
            path: Some(path.into()),
            ..Self::hash_test(dim)
        }
    }

    fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::Config("embedding dim must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        Ok(())
    }
}

/// Anything that turns texts into fixed-width vectors.
pub trait Embedder {
    fn dim(&self) -> usize;
    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>>;
}

/// Vectors served out of an embedding file, keyed by text id.
struct FileEmbedder {
    dim: usize,
    table: HashMap<String, Vec<f64>>,
}

/// Embed `(id, text)` pairs, preserving input order.
pub fn embed_texts(
    texts: &[(String, String)],
    config: &ProviderConfig,
) -> Result<Vec<EmbeddingVector>> {
    config.validate()?;
    let mut seen = HashSet::new();
    if let Some((dup, _)) = texts.iter().find(|(id, _)| !seen.insert(id.as_str())) {
        return Err(Error::Precondition(format!("duplicate text id {dup:?}")));
    }
    if texts.is_empty() {
        return Ok(Vec::new());
    }
    let values = match config.backend {
        Backend::HashTest => {
            let emb = HashEmbedder::new(config.dim);
            texts.iter().map(|(_, t)| emb.embed(t)).collect()
        }
        Backend::Remote => {
            let emb = RemoteEmbedder::new(config)?;
            let refs: Vec<&str> = texts.iter().map(|(_, t)| t.as_str()).collect();
            emb.embed_all(&refs)?
        }
        Backend::File => {
            let path = config
                .path
                .as_ref()
                .ok_or_else(|| Error::Config("file backend needs a path".into()))?;
            let file = FileEmbedder::open(path, config.dim)?;
            texts
                .iter()
                .map(|(id, _)| file.lookup(id))
                .collect::<Result<Vec<_>>>()?
        }
    };
    for v in &values {
        if v.len() != config.dim {
            return Err(Error::DimMismatch {
                expected: config.dim,
                actual: v.len(),
            });
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::CorruptFile("non-finite embedding value".into()));
        }
    }
    Ok(texts
        .iter()
        .zip(values)
        .map(|((id, _), values)| EmbeddingVector {
            id: id.clone(),
            values,
        })
        .collect())
}

impl FileEmbedder {
    fn open(path: &std::path::Path, dim: usize) -> Result<Self> {
        let vectors = load_embeddings(path)?;
        let mut table = HashMap::with_capacity(vectors.len());
        for v in vectors {
            if v.values.len() != dim {
                return Err(Error::DimMismatch {
                    expected: dim,
                    actual: v.values.len(),
                });
            }
            table.insert(v.id, v.values);
        }
        Ok(Self { dim, table })
    }

    fn lookup(&self, id: &str) -> Result<Vec<f64>> {
        self.table.get(id).cloned().ok_or_else(|| {
            Error::Precondition(format!(
                "no vector for id {id:?} in embedding file (dim {})",
                self.dim
            ))
        })
    }
}
