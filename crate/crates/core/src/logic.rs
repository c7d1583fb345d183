//! Formula trees, predicate normal form, derived operators and task patterns.
//!
//! Every predicate is kept in the normal form `f(z) > 0`:
//! a *reach* predicate `dist(z, target) <= eps` is stored as
//! `eps - dist(z, target) > 0`, and an *avoid* predicate
//! `dist(z, target) > eps` as `dist(z, target) - eps > 0`.
//!
//! `Or`, `Eventually` and `Always` are first-class nodes; [`normalize`]
//! rewrites them into the core `{Pred, True, Not, And, Until}`.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::embedding::Embedding;
use crate::error::{Error, Result};
use crate::metrics::Metric;

/// A named target embedding together with the metric used to compare against it.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetRef {
    pub name: String,
    pub embedding: Embedding,
    pub metric: Metric,
    pub role: String,
}

impl TargetRef {
    pub fn new(name: impl Into<String>, embedding: Embedding, metric: Metric) -> Result<Arc<Self>> {
        metric.check_compatible(&embedding)?;
        Ok(Arc::new(TargetRef {
            name: name.into(),
            embedding,
            metric,
            role: String::new(),
        }))
    }

    pub fn with_role(
        name: impl Into<String>,
        embedding: Embedding,
        metric: Metric,
        role: impl Into<String>,
    ) -> Result<Arc<Self>> {
        metric.check_compatible(&embedding)?;
        Ok(Arc::new(TargetRef {
            name: name.into(),
            embedding,
            metric,
            role: role.into(),
        }))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Sense {
    /// `eps - dist > 0`
    Reach,
    /// `dist - eps > 0`
    Avoid,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Predicate {
    pub target: Arc<TargetRef>,
    pub threshold: f64,
    pub sense: Sense,
}

impl Predicate {
    pub fn new(target: Arc<TargetRef>, threshold: f64, sense: Sense) -> Result<Self> {
        check_threshold(threshold)?;
        Ok(Predicate {
            target,
            threshold,
            sense,
        })
    }

    pub fn reach(target: Arc<TargetRef>, threshold: f64) -> Result<Self> {
        Predicate::new(target, threshold, Sense::Reach)
    }

    pub fn avoid(target: Arc<TargetRef>, threshold: f64) -> Result<Self> {
        Predicate::new(target, threshold, Sense::Avoid)
    }
}

fn check_threshold(eps: f64) -> Result<()> {
    if eps.is_finite() && eps >= 0.0 {
        Ok(())
    } else {
        Err(Error::NegativeThreshold(eps))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Formula {
    True,
    Pred(Predicate),
    Not(Box<Formula>),
    And(Box<Formula>, Box<Formula>),
    Or(Box<Formula>, Box<Formula>),
    Until(Box<Formula>, Box<Formula>),
    Eventually(Box<Formula>),
    Always(Box<Formula>),
}

impl Formula {
    pub fn pred(p: Predicate) -> Formula {
        Formula::Pred(p)
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(f: Formula) -> Formula {
        Formula::Not(Box::new(f))
    }

    pub fn and(a: Formula, b: Formula) -> Formula {
        Formula::And(Box::new(a), Box::new(b))
    }

    pub fn or(a: Formula, b: Formula) -> Formula {
        Formula::Or(Box::new(a), Box::new(b))
    }

    pub fn until(a: Formula, b: Formula) -> Formula {
        Formula::Until(Box::new(a), Box::new(b))
    }

    pub fn eventually(f: Formula) -> Formula {
        Formula::Eventually(Box::new(f))
    }

    pub fn always(f: Formula) -> Formula {
        Formula::Always(Box::new(f))
    }

    /// Height of the tree; leaves have depth 1.
    pub fn depth(&self) -> usize {
        match self {
            Formula::True | Formula::Pred(_) => 1,
            Formula::Not(f) | Formula::Eventually(f) | Formula::Always(f) => 1 + f.depth(),
            Formula::And(a, b) | Formula::Or(a, b) | Formula::Until(a, b) => {
                1 + a.depth().max(b.depth())
            }
        }
    }

    /// Distinct targets referenced by the formula, keyed by name.
    pub fn targets(&self) -> BTreeMap<String, Arc<TargetRef>> {
        let mut out = BTreeMap::new();
        self.collect_targets(&mut out);
        out
    }

    fn collect_targets(&self, out: &mut BTreeMap<String, Arc<TargetRef>>) {
        match self {
            Formula::True => {}
            Formula::Pred(p) => {
                out.entry(p.target.name.clone())
                    .or_insert_with(|| p.target.clone());
            }
            Formula::Not(f) | Formula::Eventually(f) | Formula::Always(f) => {
                f.collect_targets(out)
            }
            Formula::And(a, b) | Formula::Or(a, b) | Formula::Until(a, b) => {
                a.collect_targets(out);
                b.collect_targets(out);
            }
        }
    }

    /// How the formula's score at index 0 responds to appending items to the trace.
    pub fn extension_monotonicity(&self) -> Monotonicity {
        use Monotonicity::*;
        match self {
            Formula::True | Formula::Pred(_) => Constant,
            Formula::Not(f) => f.extension_monotonicity().flip(),
            Formula::And(a, b) | Formula::Or(a, b) => a
                .extension_monotonicity()
                .join(b.extension_monotonicity()),
            Formula::Eventually(f) => Increasing.join(f.extension_monotonicity()),
            Formula::Always(f) => Decreasing.join(f.extension_monotonicity()),
            Formula::Until(a, b) => Increasing
                .join(a.extension_monotonicity())
                .join(b.extension_monotonicity()),
        }
    }

    /// True when a positive score can never be revoked by a longer trace.
    pub fn satisfaction_is_permanent(&self) -> bool {
        matches!(
            self.extension_monotonicity(),
            Monotonicity::Constant | Monotonicity::Increasing
        )
    }
}

/// Direction in which a score can move when the trace grows.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Monotonicity {
    Constant,
    Increasing,
    Decreasing,
    Mixed,
}

impl Monotonicity {
    fn flip(self) -> Self {
        match self {
            Monotonicity::Increasing => Monotonicity::Decreasing,
            Monotonicity::Decreasing => Monotonicity::Increasing,
            other => other,
        }
    }

    fn join(self, other: Self) -> Self {
        use Monotonicity::*;
        match (self, other) {
            (Constant, x) | (x, Constant) => x,
            (a, b) if a == b => a,
            _ => Mixed,
        }
    }
}

/// Rewrites `Or`, `Eventually` and `Always` into `{Pred, True, Not, And, Until}`.
pub fn normalize(f: &Formula) -> Formula {
    match f {
        Formula::True => Formula::True,
        Formula::Pred(p) => Formula::Pred(p.clone()),
        Formula::Not(g) => Formula::not(normalize(g)),
        Formula::And(a, b) => Formula::and(normalize(a), normalize(b)),
        Formula::Until(a, b) => Formula::until(normalize(a), normalize(b)),
        Formula::Or(a, b) => Formula::not(Formula::and(
            Formula::not(normalize(a)),
            Formula::not(normalize(b)),
        )),
        Formula::Eventually(g) => Formula::until(Formula::True, normalize(g)),
        Formula::Always(g) => Formula::not(Formula::until(
            Formula::True,
            Formula::not(normalize(g)),
        )),
    }
}

/// `F(dist(z, target) <= eps)`.
pub fn reach(target: Arc<TargetRef>, eps: f64) -> Result<Formula> {
    Ok(Formula::eventually(Formula::Pred(Predicate::reach(
        target, eps,
    )?)))
}

/// `G(dist(z, target) > eps)`.
pub fn avoid(target: Arc<TargetRef>, eps: f64) -> Result<Formula> {
    Ok(Formula::always(Formula::Pred(Predicate::avoid(target, eps)?)))
}

/// `F(reach goal) & G(avoid a_1) & ... & G(avoid a_m)`, left-associated.
pub fn reach_avoid(
    goal: Arc<TargetRef>,
    eps_goal: f64,
    avoid_set: &[(Arc<TargetRef>, f64)],
) -> Result<Formula> {
    let mut f = reach(goal, eps_goal)?;
    for (target, eps) in avoid_set {
        f = Formula::and(f, avoid(target.clone(), *eps)?);
    }
    Ok(f)
}

/// Conjunction of `G(avoid)` terms, left-associated. `None` for an empty set.
pub fn avoid_all(avoid_set: &[(Arc<TargetRef>, f64)]) -> Result<Option<Formula>> {
    let mut out: Option<Formula> = None;
    for (target, eps) in avoid_set {
        let g = avoid(target.clone(), *eps)?;
        out = Some(match out {
            None => g,
            Some(f) => Formula::and(f, g),
        });
    }
    Ok(out)
}

/// `F((dist(z, first) <= eps_first) & F(dist(z, second) <= eps_second))`.
pub fn sequenced_visit(
    first: Arc<TargetRef>,
    eps_first: f64,
    second: Arc<TargetRef>,
    eps_second: f64,
) -> Result<Formula> {
    let p1 = Formula::Pred(Predicate::reach(first, eps_first)?);
    let then = reach(second, eps_second)?;
    Ok(Formula::eventually(Formula::and(p1, then)))
}

/// `F G(dist(z, goal) <= eps)`.
pub fn stability(goal: Arc<TargetRef>, eps: f64) -> Result<Formula> {
    Ok(Formula::eventually(Formula::always(Formula::Pred(
        Predicate::reach(goal, eps)?,
    ))))
}
