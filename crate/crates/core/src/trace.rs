//! Finite traces of embeddings and their file formats.

use std::ops::Index;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::embedding::Embedding;
use crate::error::{Error, Result};

/// An ordered sequence of embeddings sharing one shape.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(try_from = "Vec<Embedding>", into = "Vec<Embedding>")]
pub struct Trace {
    items: Vec<Embedding>,
}

impl Trace {
    pub fn new(items: Vec<Embedding>) -> Result<Self> {
        if let Some(first) = items.first() {
            let shape = first.shape();
            if let Some((i, e)) = items.iter().enumerate().find(|(_, e)| e.shape() != shape) {
                return Err(Error::DimensionMismatch(format!(
                    "trace item {i} has shape {:?}, expected {shape:?}",
                    e.shape()
                )));
            }
        }
        Ok(Trace { items })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn items(&self) -> &[Embedding] {
        &self.items
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Embedding> {
        self.items.iter()
    }

    pub fn into_items(self) -> Vec<Embedding> {
        self.items
    }

    /// Appends an item, checking it against the trace's shape.
    pub fn push(&mut self, item: Embedding) -> Result<()> {
        if let Some(first) = self.items.first() {
            if first.shape() != item.shape() {
                return Err(Error::DimensionMismatch(format!(
                    "cannot append shape {:?} to trace of shape {:?}",
                    item.shape(),
                    first.shape()
                )));
            }
        }
        self.items.push(item);
        Ok(())
    }

    /// Items `start..=end`.
    pub fn slice(&self, start: usize, end: usize) -> Result<Trace> {
        if start > end || end >= self.items.len() {
            return Err(Error::IndexOutOfRange {
                start,
                end,
                len: self.items.len(),
            });
        }
        Ok(Trace {
            items: self.items[start..=end].to_vec(),
        })
    }

    /// Reads a trace from either a JSON array of embeddings or JSON Lines.
    pub fn load(path: impl AsRef<Path>) -> Result<Trace> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Trace::from_json_str(&text).map_err(|e| match e {
            Error::Schema { message, .. } => Error::schema(path.display().to_string(), message),
            other => other,
        })
    }

    pub fn from_json_str(text: &str) -> Result<Trace> {
        let trimmed = text.trim_start();
        if trimmed.starts_with('[') {
            let items: Vec<Embedding> =
                serde_json::from_str(text).map_err(|e| Error::schema("trace", e))?;
            return Trace::new(items);
        }
        let mut items = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let e: Embedding = serde_json::from_str(line)
                .map_err(|e| Error::schema(format!("trace line {}", lineno + 1), e))?;
            items.push(e);
        }
        Trace::new(items)
    }
}

/// Items `start..=end` of `trace`.
pub fn trace_slice(trace: &Trace, start: usize, end: usize) -> Result<Trace> {
    trace.slice(start, end)
}

impl Index<usize> for Trace {
    type Output = Embedding;

    fn index(&self, index: usize) -> &Embedding {
        &self.items[index]
    }
}

impl TryFrom<Vec<Embedding>> for Trace {
    type Error = Error;

    fn try_from(items: Vec<Embedding>) -> Result<Self> {
        Trace::new(items)
    }
}

impl From<Trace> for Vec<Embedding> {
    fn from(t: Trace) -> Self {
        t.items
    }
}

impl<'a> IntoIterator for &'a Trace {
    type Item = &'a Embedding;
    type IntoIter = std::slice::Iter<'a, Embedding>;

    fn into_iter(self) -> Self::IntoIter {
        self.items.iter()
    }
}
