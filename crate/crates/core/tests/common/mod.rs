#![allow(dead_code)]

use std::sync::Arc;

use etl::logic::{Formula, Predicate, Sense};
use etl::{Embedding, Metric, TargetRef, Trace};
use rand::Rng;

pub fn random_vector(rng: &mut impl Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect()
}

pub fn random_embedding(rng: &mut impl Rng, dim: usize) -> Embedding {
    Embedding::vector(random_vector(rng, dim)).unwrap()
}

pub fn random_patch_set(rng: &mut impl Rng, rows: usize, dim: usize) -> Embedding {
    Embedding::patch_set((0..rows).map(|_| random_vector(rng, dim)).collect()).unwrap()
}

pub fn random_trace(rng: &mut impl Rng, len: usize, dim: usize) -> Trace {
    Trace::new((0..len).map(|_| random_embedding(rng, dim)).collect()).unwrap()
}

/// Targets `t0..tn` over vector embeddings, mixing the L1 and L2 metrics.
pub fn random_targets(rng: &mut impl Rng, n: usize, dim: usize) -> Vec<Arc<TargetRef>> {
    (0..n)
        .map(|k| {
            let metric = if rng.random_bool(0.5) {
                Metric::l2()
            } else {
                Metric::l1()
            };
            TargetRef::new(format!("t{k}"), random_embedding(rng, dim), metric).unwrap()
        })
        .collect()
}

pub fn random_predicate(rng: &mut impl Rng, targets: &[Arc<TargetRef>]) -> Predicate {
    let t = targets[rng.random_range(0..targets.len())].clone();
    // quarter-steps keep some predicates exactly on the boundary
    let eps = rng.random_range(0..12) as f64 * 0.25;
    let sense = if rng.random_bool(0.5) {
        Sense::Reach
    } else {
        Sense::Avoid
    };
    Predicate::new(t, eps, sense).unwrap()
}

/// A formula of depth at most `depth` using every constructor.
pub fn random_formula(rng: &mut impl Rng, depth: usize, targets: &[Arc<TargetRef>]) -> Formula {
    if depth <= 1 || rng.random_bool(0.2) {
        return if rng.random_bool(0.05) {
            Formula::True
        } else {
            Formula::pred(random_predicate(rng, targets))
        };
    }
    let sub = |rng: &mut _| random_formula(rng, depth - 1, targets);
    match rng.random_range(0..6) {
        0 => Formula::not(sub(rng)),
        1 => Formula::and(sub(rng), sub(rng)),
        2 => Formula::or(sub(rng), sub(rng)),
        3 => Formula::until(sub(rng), sub(rng)),
        4 => Formula::eventually(sub(rng)),
        _ => Formula::always(sub(rng)),
    }
}
