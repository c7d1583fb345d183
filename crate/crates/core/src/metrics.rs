//! Distance functions between embeddings.
//!
//! Every metric is "smaller means more similar": cosine is reported as
//! `1 - similarity`. L1, L2 and cosine compare patch sets by flattening them
//! row-major, which requires equal patch counts. Chamfer works on patch sets
//! only and uses squared Euclidean inner terms.
//!
//! Metrics implement [`DistanceMetric`] and are looked up by name through a
//! [`MetricRegistry`]; the built-in names are `l1`, `l2`, `cosine` and
//! `chamfer`.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::{Arc, OnceLock};

use crate::embedding::{Embedding, EmbeddingKind};
use crate::error::{Error, Result};

/// Vectors at most this long are summed left to right; longer ones pairwise.
const PAIRWISE_BLOCK: usize = 1024;

/// Norm below which a vector has no usable direction.
pub const COSINE_NORM_TOLERANCE: f64 = 1e-12;

pub trait DistanceMetric: Send + Sync {
    fn name(&self) -> &'static str;

    fn accepts(&self, kind: EmbeddingKind) -> bool;

    fn distance(&self, a: &Embedding, b: &Embedding) -> Result<f64>;

    /// Checks that `e` can be fed to this metric at all.
    fn check_compatible(&self, e: &Embedding) -> Result<()> {
        if self.accepts(e.kind()) {
            Ok(())
        } else {
            Err(Error::IncompatibleMetric {
                metric: self.name().to_string(),
                kind: e.kind().to_string(),
            })
        }
    }
}

/// Shared handle to a registered metric. Two handles are equal when their names are.
#[derive(Clone)]
pub struct Metric(Arc<dyn DistanceMetric>);

impl Metric {
    pub fn new(metric: impl DistanceMetric + 'static) -> Self {
        Metric(Arc::new(metric))
    }

    /// Looks up a built-in metric.
    pub fn by_name(name: &str) -> Result<Metric> {
        MetricRegistry::builtin().get(name)
    }

    pub fn l1() -> Metric {
        Metric::new(L1)
    }

    pub fn l2() -> Metric {
        Metric::new(L2)
    }

    pub fn cosine() -> Metric {
        Metric::new(Cosine)
    }

    pub fn chamfer() -> Metric {
        Metric::new(Chamfer)
    }

    pub fn name(&self) -> &'static str {
        self.0.name()
    }

    pub fn distance(&self, a: &Embedding, b: &Embedding) -> Result<f64> {
        self.0.distance(a, b)
    }

    pub fn accepts(&self, kind: EmbeddingKind) -> bool {
        self.0.accepts(kind)
    }

    pub fn check_compatible(&self, e: &Embedding) -> Result<()> {
        self.0.check_compatible(e)
    }
}

impl PartialEq for Metric {
    fn eq(&self, other: &Self) -> bool {
        self.name() == other.name()
    }
}

impl fmt::Debug for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Metric({})", self.name())
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Name-indexed set of metrics.
#[derive(Clone, Default)]
pub struct MetricRegistry {
    metrics: BTreeMap<String, Metric>,
}

impl MetricRegistry {
    pub fn empty() -> Self {
        MetricRegistry::default()
    }

    pub fn with_builtins() -> Self {
        let mut r = MetricRegistry::empty();
        r.register(Metric::l1());
        r.register(Metric::l2());
        r.register(Metric::cosine());
        r.register(Metric::chamfer());
        r
    }

    /// Process-wide registry of the four built-in metrics.
    pub fn builtin() -> &'static MetricRegistry {
        static BUILTIN: OnceLock<MetricRegistry> = OnceLock::new();
        BUILTIN.get_or_init(MetricRegistry::with_builtins)
    }

    /// Adds or replaces a metric under its own name.
    pub fn register(&mut self, metric: Metric) {
        self.metrics.insert(metric.name().to_string(), metric);
    }

    pub fn get(&self, name: &str) -> Result<Metric> {
        self.metrics
            .get(name)
            .cloned()
            .ok_or_else(|| Error::UnknownMetric(name.to_string()))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.metrics.keys().map(String::as_str)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct L1;

#[derive(Debug, Clone, Copy)]
pub struct L2;

#[derive(Debug, Clone, Copy)]
pub struct Cosine;

#[derive(Debug, Clone, Copy)]
pub struct Chamfer;

impl DistanceMetric for L1 {
    fn name(&self) -> &'static str {
        "l1"
    }

    fn accepts(&self, _kind: EmbeddingKind) -> bool {
        true
    }

    fn distance(&self, a: &Embedding, b: &Embedding) -> Result<f64> {
        dist_l1(a, b)
    }
}

impl DistanceMetric for L2 {
    fn name(&self) -> &'static str {
        "l2"
    }

    fn accepts(&self, _kind: EmbeddingKind) -> bool {
        true
    }

    fn distance(&self, a: &Embedding, b: &Embedding) -> Result<f64> {
        dist_l2(a, b)
    }
}

impl DistanceMetric for Cosine {
    fn name(&self) -> &'static str {
        "cosine"
    }

    fn accepts(&self, _kind: EmbeddingKind) -> bool {
        true
    }

    fn distance(&self, a: &Embedding, b: &Embedding) -> Result<f64> {
        dist_cosine(a, b)
    }
}

impl DistanceMetric for Chamfer {
    fn name(&self) -> &'static str {
        "chamfer"
    }

    fn accepts(&self, kind: EmbeddingKind) -> bool {
        kind == EmbeddingKind::PatchSet
    }

    fn distance(&self, a: &Embedding, b: &Embedding) -> Result<f64> {
        dist_chamfer(a, b)
    }
}

/// Sum of `term(i)` for `i` in `lo..hi`, pairwise above [`PAIRWISE_BLOCK`].
fn tree_sum(lo: usize, hi: usize, term: &impl Fn(usize) -> f64) -> f64 {
    if hi - lo <= PAIRWISE_BLOCK {
        (lo..hi).fold(0.0, |acc, i| acc + term(i))
    } else {
        let mid = lo + (hi - lo) / 2;
        tree_sum(lo, mid, term) + tree_sum(mid, hi, term)
    }
}

fn flat_pair<'a>(a: &'a Embedding, b: &'a Embedding) -> Result<(&'a [f64], &'a [f64])> {
    if a.shape() != b.shape() {
        return Err(Error::DimensionMismatch(format!(
            "{:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok((a.as_flat(), b.as_flat()))
}

pub fn dist_l1(a: &Embedding, b: &Embedding) -> Result<f64> {
    let (x, y) = flat_pair(a, b)?;
    Ok(tree_sum(0, x.len(), &|i| (x[i] - y[i]).abs()))
}

pub fn dist_l2(a: &Embedding, b: &Embedding) -> Result<f64> {
    let (x, y) = flat_pair(a, b)?;
    Ok(tree_sum(0, x.len(), &|i| {
        let d = x[i] - y[i];
        d * d
    })
    .sqrt())
}

pub fn cosine_similarity(a: &Embedding, b: &Embedding) -> Result<f64> {
    let (x, y) = flat_pair(a, b)?;
    let n = x.len();
    let xx = tree_sum(0, n, &|i| x[i] * x[i]);
    let yy = tree_sum(0, n, &|i| y[i] * y[i]);
    if xx.sqrt() < COSINE_NORM_TOLERANCE || yy.sqrt() < COSINE_NORM_TOLERANCE {
        return Err(Error::ZeroVector);
    }
    let xy = tree_sum(0, n, &|i| x[i] * y[i]);
    // sqrt(xx * yy) rather than sqrt(xx) * sqrt(yy): identical inputs give exactly 1.
    Ok((xy / (xx * yy).sqrt()).clamp(-1.0, 1.0))
}

/// `1 - cosine_similarity`, in `[0, 2]`.
pub fn dist_cosine(a: &Embedding, b: &Embedding) -> Result<f64> {
    Ok(1.0 - cosine_similarity(a, b)?)
}

pub fn dist_chamfer(a: &Embedding, b: &Embedding) -> Result<f64> {
    for e in [a, b] {
        Chamfer.check_compatible(e)?;
    }
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch(format!(
            "patch dimension {} vs {}",
            a.dim(),
            b.dim()
        )));
    }
    if a.rows() == 0 || b.rows() == 0 {
        return Err(Error::EmptySet);
    }
    Ok(directed_chamfer(a, b) + directed_chamfer(b, a))
}

/// Sum over patches of `from` of the squared distance to the nearest patch of `to`.
fn directed_chamfer(from: &Embedding, to: &Embedding) -> f64 {
    from.patches()
        .map(|p| {
            to.patches()
                .map(|q| squared_l2(p, q))
                .fold(f64::INFINITY, f64::min)
        })
        .fold(0.0, |acc, d| acc + d)
}

fn squared_l2(p: &[f64], q: &[f64]) -> f64 {
    tree_sum(0, p.len(), &|i| {
        let d = p[i] - q[i];
        d * d
    })
}
