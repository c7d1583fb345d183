//! Embeddings: the unit of observation in latent space.
//!
//! An embedding is either a single feature vector or a patch set (an ordered
//! list of equal-dimension vectors, stored row-major). Values are validated
//! on construction and never mutated afterwards.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingKind {
    Vector,
    PatchSet,
}

impl fmt::Display for EmbeddingKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EmbeddingKind::Vector => f.write_str("vector"),
            EmbeddingKind::PatchSet => f.write_str("patch_set"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawEmbedding", into = "RawEmbedding")]
pub struct Embedding {
    kind: EmbeddingKind,
    rows: usize,
    dim: usize,
    data: Vec<f64>,
}

impl Embedding {
    pub fn vector(data: Vec<f64>) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::EmptyData);
        }
        check_finite(&data)?;
        Ok(Embedding {
            kind: EmbeddingKind::Vector,
            rows: 1,
            dim: data.len(),
            data,
        })
    }

    pub fn patch_set(patches: Vec<Vec<f64>>) -> Result<Self> {
        let dim = patches.first().map(Vec::len).ok_or(Error::EmptyData)?;
        if dim == 0 {
            return Err(Error::EmptyData);
        }
        if let Some((row, p)) = patches.iter().enumerate().find(|(_, p)| p.len() != dim) {
            return Err(Error::DimensionMismatch(format!(
                "patch {row} has dimension {}, expected {dim}",
                p.len()
            )));
        }
        let rows = patches.len();
        let data: Vec<f64> = patches.into_iter().flatten().collect();
        check_finite(&data)?;
        Ok(Embedding {
            kind: EmbeddingKind::PatchSet,
            rows,
            dim,
            data,
        })
    }

    pub fn kind(&self) -> EmbeddingKind {
        self.kind
    }

    /// Number of patches; 1 for a vector.
    pub fn rows(&self) -> usize {
        self.rows
    }

    /// Dimension of each row.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// All entries, row-major.
    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    pub fn patches(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.dim)
    }

    /// `(kind, rows, dim)`; two embeddings with equal shapes can share a trace.
    pub fn shape(&self) -> (EmbeddingKind, usize, usize) {
        (self.kind, self.rows, self.dim)
    }
}

/// Builds an embedding from a row matrix. A vector must be given as a single row.
pub fn make_embedding(kind: EmbeddingKind, data: Vec<Vec<f64>>) -> Result<Embedding> {
    match kind {
        EmbeddingKind::PatchSet => Embedding::patch_set(data),
        EmbeddingKind::Vector => {
            if data.len() != 1 {
                return Err(Error::DimensionMismatch(format!(
                    "vector embedding needs exactly one row, got {}",
                    data.len()
                )));
            }
            Embedding::vector(data.into_iter().next().unwrap_or_default())
        }
    }
}

fn check_finite(data: &[f64]) -> Result<()> {
    match data.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(Error::NonFiniteEntry { index }),
        None => Ok(()),
    }
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", content = "data", rename_all = "snake_case")]
enum RawEmbedding {
    Vector(Vec<f64>),
    PatchSet(Vec<Vec<f64>>),
}

impl TryFrom<RawEmbedding> for Embedding {
    type Error = Error;

    fn try_from(raw: RawEmbedding) -> Result<Self> {
        match raw {
            RawEmbedding::Vector(v) => Embedding::vector(v),
            RawEmbedding::PatchSet(p) => Embedding::patch_set(p),
        }
    }
}

impl From<Embedding> for RawEmbedding {
    fn from(e: Embedding) -> Self {
        match e.kind {
            EmbeddingKind::Vector => RawEmbedding::Vector(e.data),
            EmbeddingKind::PatchSet => {
                RawEmbedding::PatchSet(e.data.chunks_exact(e.dim).map(<[f64]>::to_vec).collect())
            }
        }
    }
}
