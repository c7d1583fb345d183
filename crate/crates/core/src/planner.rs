//! Receding-horizon random-shooting planner.
//!
//! At each step the planner samples `N` action sequences of length `K`
//! uniformly from the action box, rolls each out through the world model,
//! and scores the predictive trace `observed ++ predicted` from index 0 to
//! its last item. The cost is the violation `max(0, -score)`. The first
//! action of the cheapest sequence is applied; ties go to the higher raw
//! score, then to the lower sample index.

use std::io::Write;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::logic::Formula;
use crate::semantics::{score, score_with, Concat, ScoreContext};
use crate::trace::Trace;
use crate::worldmodel::{rollout, Action, WorldModel};

/// How the score bound `T` is chosen for a predictive trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundPolicy {
    /// `T = len(observed ++ predicted) - 1`, i.e. `t + K`.
    #[default]
    Fixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanConfig {
    pub horizon: usize,
    pub samples: usize,
    pub seed: u64,
    pub max_steps: usize,
    #[serde(default)]
    pub bound_policy: BoundPolicy,
    /// Evaluate candidates on the rayon pool. Does not affect results.
    #[serde(default = "default_parallel")]
    pub parallel: bool,
}

fn default_parallel() -> bool {
    true
}

impl Default for PlanConfig {
    fn default() -> Self {
        PlanConfig {
            horizon: 8,
            samples: 512,
            seed: 7,
            max_steps: 40,
            bound_policy: BoundPolicy::Fixed,
            parallel: true,
        }
    }
}

impl PlanConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 || self.samples == 0 || self.max_steps == 0 {
            return Err(Error::Config(
                "horizon, samples and max_steps must all be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// The physical system the planner acts on.
pub trait Environment {
    fn observation(&self) -> Vec<f64>;

    fn apply(&mut self, action: &Action) -> Result<()>;
}

/// `max(0, -score)` over the whole trace.
pub fn cost(f: &Formula, trace: &Trace) -> Result<f64> {
    let s = score(f, &ScoreContext::full(trace)?)?;
    Ok(violation(s))
}

fn violation(score: f64) -> f64 {
    if score < 0.0 {
        -score
    } else {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepDecision {
    pub action: Action,
    pub candidate: usize,
    pub cost: f64,
    pub score: f64,
}

#[derive(Debug, Clone, Copy)]
struct Evaluated {
    cost: f64,
    score: f64,
}

/// Candidate sequences for step `t`: a ChaCha stream keyed by (seed, t).
pub fn sample_candidates(
    model: &dyn WorldModel,
    cfg: &PlanConfig,
    t: usize,
) -> Vec<Vec<Action>> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(t as u64);
    let bound = model.action_bound();
    let dim = model.action_dim();
    (0..cfg.samples)
        .map(|_| {
            (0..cfg.horizon)
                .map(|_| Action((0..dim).map(|_| rng.random_range(-bound..=bound)).collect()))
                .collect()
        })
        .collect()
}

/// Index of the best candidate: lowest cost, then highest score, then lowest index.
fn select(evals: &[Evaluated]) -> usize {
    let mut best = 0;
    for (i, e) in evals.iter().enumerate().skip(1) {
        let b = evals[best];
        if e.cost < b.cost || (e.cost == b.cost && e.score > b.score) {
            best = i;
        }
    }
    best
}

pub fn plan_step(
    model: &dyn WorldModel,
    observed: &Trace,
    actions_so_far: &[Action],
    f: &Formula,
    cfg: &PlanConfig,
) -> Result<StepDecision> {
    cfg.validate()?;
    if observed.is_empty() {
        return Err(Error::InsufficientHistory { got: 0, need: 1 });
    }
    let candidates = sample_candidates(model, cfg, actions_so_far.len());
    let evaluate = |seq: &Vec<Action>| -> Result<Evaluated> {
        let predicted = rollout(model, observed.items(), actions_so_far, seq)?;
        let window = Concat {
            head: observed.items(),
            tail: predicted.items(),
        };
        let s = score_with(f, &window)?;
        Ok(Evaluated {
            cost: violation(s),
            score: s,
        })
    };
    let evals: Vec<Evaluated> = if cfg.parallel {
        candidates.par_iter().map(evaluate).collect::<Result<_>>()?
    } else {
        candidates.iter().map(evaluate).collect::<Result<_>>()?
    };
    let best = select(&evals);
    let action = candidates[best][0].clone();
    Ok(StepDecision {
        action,
        candidate: best,
        cost: evals[best].cost,
        score: evals[best].score,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub actions: Vec<Action>,
    /// Observed embeddings; one more than `actions`.
    pub trace: Trace,
    /// Predictive cost of the chosen candidate at each step.
    pub step_costs: Vec<f64>,
    /// Predictive score of the chosen candidate at each step.
    pub step_scores: Vec<f64>,
    /// Score over the observed trace after each step, starting before the first.
    pub observed_scores: Vec<f64>,
    pub final_score: f64,
    pub satisfied: bool,
}

pub fn run_receding_horizon(
    env: &mut dyn Environment,
    model: &dyn WorldModel,
    f: &Formula,
    cfg: &PlanConfig,
) -> Result<EpisodeResult> {
    run_receding_horizon_timed(env, model, f, cfg).map(|(r, _)| r)
}

/// Like [`run_receding_horizon`], also returning wall-clock time per step.
pub fn run_receding_horizon_timed(
    env: &mut dyn Environment,
    model: &dyn WorldModel,
    f: &Formula,
    cfg: &PlanConfig,
) -> Result<(EpisodeResult, Vec<Duration>)> {
    cfg.validate()?;
    let early_stop = f.satisfaction_is_permanent();
    let mut trace = Trace::new(vec![model.encode(&env.observation())?])?;
    let mut actions = Vec::new();
    let mut step_costs = Vec::new();
    let mut step_scores = Vec::new();
    let mut timings = Vec::new();
    let mut observed_scores = vec![score(f, &ScoreContext::full(&trace)?)?];

    for _ in 0..cfg.max_steps {
        if early_stop && observed_scores.last().is_some_and(|s| *s > 0.0) {
            break;
        }
        let started = Instant::now();
        let decision = plan_step(model, &trace, &actions, f, cfg)?;
        env.apply(&decision.action)?;
        trace.push(model.encode(&env.observation())?)?;
        actions.push(decision.action);
        step_costs.push(decision.cost);
        step_scores.push(decision.score);
        observed_scores.push(score(f, &ScoreContext::full(&trace)?)?);
        timings.push(started.elapsed());
    }

    let final_score = *observed_scores.last().unwrap_or(&f64::NEG_INFINITY);
    Ok((
        EpisodeResult {
            actions,
            trace,
            step_costs,
            step_scores,
            observed_scores,
            final_score,
            satisfied: final_score > 0.0,
        },
        timings,
    ))
}

/// Writes `step,score,cost,a0,a1,...`, one row per executed step.
pub fn write_steps_csv(result: &EpisodeResult, out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let dim = result.actions.first().map_or(0, |a| a.0.len());
    let mut header = vec!["step".to_string(), "score".into(), "cost".into()];
    header.extend((0..dim).map(|i| format!("a{i}")));
    w.write_record(&header).map_err(csv_err)?;
    for (i, a) in result.actions.iter().enumerate() {
        let mut row = vec![
            i.to_string(),
            result.step_scores[i].to_string(),
            result.step_costs[i].to_string(),
        ];
        row.extend(a.0.iter().map(f64::to_string));
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io("steps csv", e))?;
    Ok(())
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    Error::schema("csv", e)
}
