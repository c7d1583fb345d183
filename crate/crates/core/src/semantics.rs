//! Boolean and quantitative satisfaction over bounded trace windows.
//!
//! Both semantics evaluate a formula at index `start` of a trace, with all
//! temporal quantifiers ranging over `[start, bound]`:
//!
//! ```text
//! score(u, i)        = f_u(z_i)
//! score(!a, i)       = -score(a, i)
//! score(a & b, i)    = min(score(a, i), score(b, i))
//! score(a | b, i)    = max(score(a, i), score(b, i))
//! score(G a, i)      = inf_{k in [i, T]} score(a, k)
//! score(F a, i)      = sup_{k in [i, T]} score(a, k)
//! score(a U b, i)    = sup_{j in [i, T]} min(score(b, j), inf_{k in [i, j)} score(a, k))
//! score(true, i)     = +inf
//! ```
//!
//! [`score`] and [`sat`] compute each subformula as a signal over the whole
//! window in one backward pass. [`oracle_score`] recomputes the same
//! quantity on the normalized formula by enumerating every until split.

use crate::embedding::Embedding;
use crate::error::{Error, Result};
use crate::logic::{normalize, Formula, Predicate, Sense};
use crate::trace::Trace;

/// Longest window [`oracle_score`] accepts.
pub const ORACLE_MAX_WINDOW: usize = 12;
/// Deepest formula [`oracle_score`] accepts (measured before normalization).
pub const ORACLE_MAX_DEPTH: usize = 6;

/// A trace together with the evaluation window `[start, bound]`.
#[derive(Debug, Clone, Copy)]
pub struct ScoreContext<'a> {
    trace: &'a Trace,
    start: usize,
    bound: usize,
}

impl<'a> ScoreContext<'a> {
    pub fn new(trace: &'a Trace, start: usize, bound: usize) -> Result<Self> {
        if start > bound || bound >= trace.len() {
            return Err(Error::IndexOutOfRange {
                start,
                end: bound,
                len: trace.len(),
            });
        }
        Ok(ScoreContext {
            trace,
            start,
            bound,
        })
    }

    /// The whole trace as window `[0, len - 1]`.
    pub fn full(trace: &'a Trace) -> Result<Self> {
        if trace.is_empty() {
            return Err(Error::IndexOutOfRange {
                start: 0,
                end: 0,
                len: 0,
            });
        }
        ScoreContext::new(trace, 0, trace.len() - 1)
    }

    pub fn trace(&self) -> &'a Trace {
        self.trace
    }

    pub fn start(&self) -> usize {
        self.start
    }

    pub fn bound(&self) -> usize {
        self.bound
    }

    fn window(&self) -> &'a [Embedding] {
        &self.trace.items()[self.start..=self.bound]
    }
}

/// `f_u(z)` for one embedding.
pub fn eval_pred(p: &Predicate, z: &Embedding) -> Result<f64> {
    let d = p.target.metric.distance(z, &p.target.embedding)?;
    Ok(match p.sense {
        Sense::Reach => p.threshold - d,
        Sense::Avoid => d - p.threshold,
    })
}

/// Where predicate values come from. Lets the recursion run either on
/// embeddings or on predicate values supplied directly.
pub trait PredicateSource {
    /// Values of `p` at every window position.
    fn values(&self, p: &Predicate) -> Result<Vec<f64>>;

    /// Number of window positions.
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl PredicateSource for ScoreContext<'_> {
    fn values(&self, p: &Predicate) -> Result<Vec<f64>> {
        self.window().iter().map(|z| eval_pred(p, z)).collect()
    }

    fn len(&self) -> usize {
        self.bound - self.start + 1
    }
}

/// The window `head ++ tail` read without copying, evaluated from index 0.
#[derive(Debug, Clone, Copy)]
pub struct Concat<'a> {
    pub head: &'a [Embedding],
    pub tail: &'a [Embedding],
}

impl PredicateSource for Concat<'_> {
    fn values(&self, p: &Predicate) -> Result<Vec<f64>> {
        self.head
            .iter()
            .chain(self.tail)
            .map(|z| eval_pred(p, z))
            .collect()
    }

    fn len(&self) -> usize {
        self.head.len() + self.tail.len()
    }
}

/// Predicate values given directly, looked up by target name.
#[derive(Debug, Clone, Default)]
pub struct PredicateTable {
    len: usize,
    columns: Vec<(String, Vec<f64>)>,
}

impl PredicateTable {
    pub fn new(len: usize) -> Self {
        PredicateTable {
            len,
            columns: Vec::new(),
        }
    }

    /// Uses `values` as `f_u` for every predicate on target `name`,
    /// regardless of threshold or sense.
    pub fn with(mut self, name: impl Into<String>, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), self.len, "column length must equal table length");
        self.columns.push((name.into(), values));
        self
    }
}

impl PredicateSource for PredicateTable {
    fn values(&self, p: &Predicate) -> Result<Vec<f64>> {
        self.columns
            .iter()
            .find(|(n, _)| *n == p.target.name)
            .map(|(_, v)| v.clone())
            .ok_or_else(|| Error::Config(format!("no values for target `{}`", p.target.name)))
    }

    fn len(&self) -> usize {
        self.len
    }
}

/// Quantitative satisfaction score at the context's start index.
pub fn score(f: &Formula, ctx: &ScoreContext<'_>) -> Result<f64> {
    score_signal(f, ctx).map(|s| s[0])
}

/// Boolean satisfaction at the context's start index.
pub fn sat(f: &Formula, ctx: &ScoreContext<'_>) -> Result<bool> {
    sat_signal(f, ctx).map(|s| s[0])
}

/// Score at window position 0 for directly supplied predicate values.
pub fn score_with(f: &Formula, source: &impl PredicateSource) -> Result<f64> {
    score_signal(f, source).map(|s| s[0])
}

pub fn sat_with(f: &Formula, source: &impl PredicateSource) -> Result<bool> {
    sat_signal(f, source).map(|s| s[0])
}

/// Score of `f` at every window position `k`, each evaluated over `[k, bound]`.
pub fn score_signal<S: PredicateSource + ?Sized>(f: &Formula, src: &S) -> Result<Vec<f64>> {
    let n = src.len();
    Ok(match f {
        Formula::True => vec![f64::INFINITY; n],
        Formula::Pred(p) => src.values(p)?,
        Formula::Not(g) => {
            let mut s = score_signal(g, src)?;
            s.iter_mut().for_each(|v| *v = -*v);
            s
        }
        Formula::And(a, b) => zip_with(score_signal(a, src)?, &score_signal(b, src)?, f64::min),
        Formula::Or(a, b) => zip_with(score_signal(a, src)?, &score_signal(b, src)?, f64::max),
        Formula::Eventually(g) => suffix_scan(score_signal(g, src)?, f64::max),
        Formula::Always(g) => suffix_scan(score_signal(g, src)?, f64::min),
        Formula::Until(a, b) => {
            let lhs = score_signal(a, src)?;
            let mut out = score_signal(b, src)?;
            // u(k) = max(rhs(k), min(lhs(k), u(k + 1))), u(T) = rhs(T)
            for k in (0..n.saturating_sub(1)).rev() {
                out[k] = out[k].max(lhs[k].min(out[k + 1]));
            }
            out
        }
    })
}

pub fn sat_signal<S: PredicateSource + ?Sized>(f: &Formula, src: &S) -> Result<Vec<bool>> {
    let n = src.len();
    Ok(match f {
        Formula::True => vec![true; n],
        Formula::Pred(p) => src.values(p)?.into_iter().map(|v| v > 0.0).collect(),
        Formula::Not(g) => sat_signal(g, src)?.into_iter().map(|b| !b).collect(),
        Formula::And(a, b) => {
            let rhs = sat_signal(b, src)?;
            zip_with(sat_signal(a, src)?, &rhs, |x, y| x && y)
        }
        Formula::Or(a, b) => {
            let rhs = sat_signal(b, src)?;
            zip_with(sat_signal(a, src)?, &rhs, |x, y| x || y)
        }
        Formula::Eventually(g) => suffix_scan(sat_signal(g, src)?, |x, y| x || y),
        Formula::Always(g) => suffix_scan(sat_signal(g, src)?, |x, y| x && y),
        Formula::Until(a, b) => {
            let lhs = sat_signal(a, src)?;
            let mut out = sat_signal(b, src)?;
            for k in (0..n.saturating_sub(1)).rev() {
                out[k] = out[k] || (lhs[k] && out[k + 1]);
            }
            out
        }
    })
}

fn zip_with<T: Copy>(mut a: Vec<T>, b: &[T], op: impl Fn(T, T) -> T) -> Vec<T> {
    a.iter_mut().zip(b).for_each(|(x, y)| *x = op(*x, *y));
    a
}

fn suffix_scan<T: Copy>(mut s: Vec<T>, op: impl Fn(T, T) -> T) -> Vec<T> {
    for k in (0..s.len().saturating_sub(1)).rev() {
        s[k] = op(s[k], s[k + 1]);
    }
    s
}

/// Reference evaluation of the score by direct enumeration.
///
/// The formula is first normalized to `{Pred, True, Not, And, Until}`; each
/// until is then evaluated by trying every split index `j`. Results are
/// memoized per (node, position), which keeps the enumeration polynomial.
pub fn oracle_score(f: &Formula, ctx: &ScoreContext<'_>) -> Result<f64> {
    oracle_score_with(f, ctx)
}

pub fn oracle_score_with(f: &Formula, src: &impl PredicateSource) -> Result<f64> {
    if src.len() > ORACLE_MAX_WINDOW {
        return Err(Error::WindowTooLarge {
            len: src.len(),
            max: ORACLE_MAX_WINDOW,
        });
    }
    let depth = f.depth();
    if depth > ORACLE_MAX_DEPTH {
        return Err(Error::FormulaTooDeep {
            depth,
            max: ORACLE_MAX_DEPTH,
        });
    }
    let core = normalize(f);
    let mut arena = Vec::new();
    let root = Oracle::flatten(&core, &mut arena);
    let mut oracle = Oracle {
        memo: vec![vec![None; src.len()]; arena.len()],
        preds: vec![None; arena.len()],
        nodes: arena,
        len: src.len(),
    };
    oracle.eval(root, 0, src)
}

enum OracleNode<'f> {
    True,
    Pred(&'f Predicate),
    Not(usize),
    And(usize, usize),
    Until(usize, usize),
}

struct Oracle<'f> {
    nodes: Vec<OracleNode<'f>>,
    memo: Vec<Vec<Option<f64>>>,
    preds: Vec<Option<Vec<f64>>>,
    len: usize,
}

impl<'f> Oracle<'f> {
    fn flatten(f: &'f Formula, arena: &mut Vec<OracleNode<'f>>) -> usize {
        let node = match f {
            Formula::True => OracleNode::True,
            Formula::Pred(p) => OracleNode::Pred(p),
            Formula::Not(g) => OracleNode::Not(Self::flatten(g, arena)),
            Formula::And(a, b) => {
                OracleNode::And(Self::flatten(a, arena), Self::flatten(b, arena))
            }
            Formula::Until(a, b) => {
                OracleNode::Until(Self::flatten(a, arena), Self::flatten(b, arena))
            }
            Formula::Or(..) | Formula::Eventually(..) | Formula::Always(..) => {
                unreachable!("oracle runs on normalized formulas")
            }
        };
        arena.push(node);
        arena.len() - 1
    }

    fn eval(&mut self, id: usize, i: usize, src: &impl PredicateSource) -> Result<f64> {
        if let Some(v) = self.memo[id][i] {
            return Ok(v);
        }
        let v = match self.nodes[id] {
            OracleNode::True => f64::INFINITY,
            OracleNode::Pred(p) => {
                if self.preds[id].is_none() {
                    self.preds[id] = Some(src.values(p)?);
                }
                self.preds[id].as_ref().map(|vals| vals[i]).unwrap_or(f64::NAN)
            }
            OracleNode::Not(g) => -self.eval(g, i, src)?,
            OracleNode::And(a, b) => {
                let x = self.eval(a, i, src)?;
                let y = self.eval(b, i, src)?;
                if x < y {
                    x
                } else {
                    y
                }
            }
            OracleNode::Until(a, b) => {
                let mut best = f64::NEG_INFINITY;
                for j in i..self.len {
                    let mut prefix_inf = f64::INFINITY;
                    for k in i..j {
                        let v = self.eval(a, k, src)?;
                        if v < prefix_inf {
                            prefix_inf = v;
                        }
                    }
                    let here = self.eval(b, j, src)?;
                    let candidate = if here < prefix_inf { here } else { prefix_inf };
                    if candidate > best {
                        best = candidate;
                    }
                }
                best
            }
        };
        self.memo[id][i] = Some(v);
        Ok(v)
    }
}
