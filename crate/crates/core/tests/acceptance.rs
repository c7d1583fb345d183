//! Acceptance suite. Runs without the libtest harness and prints one
//! PASS/FAIL line per criterion; exits nonzero if any criterion fails.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use etl::harness::{self, demo_config, Region, Report, SpecName};
use etl::logic::{normalize, Formula};
use etl::metrics::{self, Metric};
use etl::semantics::{oracle_score, sat, score, score_with, PredicateTable, ScoreContext};
use etl::speclang::{self, Manifest};
use etl::worldmodel::{rollout, Action, PointMassWorld, WorldModel};
use etl::Embedding;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::*;

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("worked example", worked_example),
        ("oracle equivalence", oracle_equivalence),
        ("semantic identities", semantic_identities),
        ("metric properties", metric_properties),
        ("parser round-trip and fuzz", parser_round_trip_and_fuzz),
        ("encoder isometry", encoder_isometry),
        ("planning tasks", planning_tasks),
        ("determinism", determinism),
        ("heatmap", heatmap_properties),
    ];
    let mut failed = 0;
    for (k, (name, check)) in criteria.iter().enumerate() {
        let started = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check))
            .unwrap_or_else(|_| Err("panicked".to_string()));
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {} {name}: PASS ({detail}; {secs:.2}s)", k + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {} {name}: FAIL ({detail}; {secs:.2}s)", k + 1);
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}

const WORKED_VALUES: [f64; 4] = [-0.0461393, -0.05276561, 0.08344626, 0.0541718];

fn eventually_u() -> Formula {
    let t = etl::TargetRef::new("u", Embedding::vector(vec![0.0]).unwrap(), Metric::l2()).unwrap();
    Formula::eventually(Formula::pred(etl::Predicate::reach(t, 0.0).unwrap()))
}

fn worked_example() -> Outcome {
    let table = PredicateTable::new(4).with("u", WORKED_VALUES.to_vec());
    let f = eventually_u();
    score_with(&f, &table).map_err(|e| e.to_string())?;
    let mut best = Duration::MAX;
    let mut value = f64::NAN;
    for _ in 0..20 {
        let t0 = Instant::now();
        value = score_with(&f, &table).unwrap();
        best = best.min(t0.elapsed());
    }
    ensure!(
        value.to_bits() == 0.08344626f64.to_bits(),
        "score {value:e} is not 0.08344626"
    );
    ensure!(best < Duration::from_millis(1), "took {best:?}");
    Ok(format!("score = {value}, {best:?}"))
}

fn oracle_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0xE71);
    let cases = 10_000;
    let mut max_err = 0.0f64;
    let mut nonzero = 0;
    let t0 = Instant::now();
    for case in 0..cases {
        let dim = rng.random_range(1..=4);
        let len = rng.random_range(1..=8);
        let n_targets = rng.random_range(1..=3);
        let targets = random_targets(&mut rng, n_targets, dim);
        let depth = rng.random_range(1..=5);
        let f = random_formula(&mut rng, depth, &targets);
        let trace = random_trace(&mut rng, len, dim);
        let start = rng.random_range(0..len);
        let bound = rng.random_range(start..len);
        let ctx = ScoreContext::new(&trace, start, bound).unwrap();
        let s = score(&f, &ctx).unwrap();
        let o = oracle_score(&f, &ctx).unwrap();
        let err = if s == o { 0.0 } else { (s - o).abs() };
        ensure!(err <= 1e-9, "case {case}: score {s} vs oracle {o} for {f:?}");
        max_err = max_err.max(err);
        if s != 0.0 {
            nonzero += 1;
            let b = sat(&f, &ctx).unwrap();
            ensure!(b == (s > 0.0), "case {case}: sat {b} but score {s}");
        }
    }
    let elapsed = t0.elapsed();
    ensure!(elapsed < Duration::from_secs(60), "took {elapsed:?}");
    Ok(format!(
        "{cases} cases, max |score - oracle| = {max_err:e}, {nonzero} sign checks"
    ))
}

fn semantic_identities() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x1D);
    let cases = 1_000;
    for case in 0..cases {
        let dim = rng.random_range(1..=4);
        let len = rng.random_range(1..=10);
        let targets = random_targets(&mut rng, 3, dim);
        let a = random_formula(&mut rng, 5, &targets);
        let b = random_formula(&mut rng, 5, &targets);
        let trace = random_trace(&mut rng, len, dim);
        let ctx = ScoreContext::full(&trace).unwrap();
        let (sa, sb) = (score(&a, &ctx).unwrap(), score(&b, &ctx).unwrap());
        let neg = score(&Formula::not(a.clone()), &ctx).unwrap();
        ensure!(neg == -sa, "case {case}: negation {neg} vs {sa}");
        let or = score(&Formula::or(a.clone(), b.clone()), &ctx).unwrap();
        ensure!(or == sa.max(sb), "case {case}: or {or} vs max({sa}, {sb})");
        let norm = score(&normalize(&a), &ctx).unwrap();
        ensure!(
            norm == sa && sat(&normalize(&a), &ctx).unwrap() == sat(&a, &ctx).unwrap(),
            "case {case}: normalize changed {sa} to {norm}"
        );
    }
    Ok(format!("{cases} cases each for negation, disjunction, normalize"))
}

fn metric_properties() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x3E7);
    let cases = 1_000;
    for m in [Metric::l1(), Metric::l2(), Metric::cosine(), Metric::chamfer()] {
        for case in 0..cases {
            let dim = rng.random_range(1..=6);
            let draw = |rng: &mut ChaCha8Rng| {
                if m.name() == "chamfer" {
                    let rows = rng.random_range(1..=4);
                    random_patch_set(rng, rows, dim)
                } else {
                    random_embedding(rng, dim)
                }
            };
            let (a, b, c) = (draw(&mut rng), draw(&mut rng), draw(&mut rng));
            let d = |x: &Embedding, y: &Embedding| m.distance(x, y).unwrap();
            ensure!(d(&a, &a) == 0.0, "{m} case {case}: nonzero diagonal {}", d(&a, &a));
            ensure!(d(&a, &b) == d(&b, &a), "{m} case {case}: asymmetric");
            ensure!(d(&a, &b) >= 0.0, "{m} case {case}: negative");
            if m.name() == "l2" {
                ensure!(
                    d(&a, &c) <= d(&a, &b) + d(&b, &c) + 1e-9,
                    "l2 case {case}: triangle inequality"
                );
            }
            if m.name() == "cosine" {
                let k = rng.random_range(0.01..100.0);
                let scaled =
                    Embedding::vector(a.as_flat().iter().map(|x| x * k).collect()).unwrap();
                ensure!(
                    (d(&scaled, &b) - d(&a, &b)).abs() <= 1e-9,
                    "cosine case {case}: not scale invariant"
                );
            }
        }
    }
    let ps = |rows: &[[f64; 2]]| Embedding::patch_set(rows.iter().map(|r| r.to_vec()).collect()).unwrap();
    let two = metrics::dist_chamfer(&ps(&[[0.0, 0.0]]), &ps(&[[1.0, 0.0]])).unwrap();
    let three = metrics::dist_chamfer(&ps(&[[0.0, 0.0], [2.0, 0.0]]), &ps(&[[1.0, 0.0]])).unwrap();
    ensure!(two == 2.0 && three == 3.0, "chamfer hand examples gave {two}, {three}");
    Ok(format!("{cases} cases per metric; chamfer examples 2 and 3 exact"))
}

fn parser_round_trip_and_fuzz() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x9A5);
    let targets = random_targets(&mut rng, 4, 2);
    let manifest = Manifest::from_targets(targets.clone()).unwrap();
    let cases = 1_000;
    let mut printed = Vec::new();
    for case in 0..cases {
        let f = random_formula(&mut rng, 6, &targets);
        let text = speclang::pretty(&f);
        let back = speclang::parse_formula(&text, &manifest)
            .map_err(|e| format!("case {case}: `{text}` failed to parse: {e}"))?;
        ensure!(back == f, "case {case}: `{text}` parsed to a different formula");
        printed.push(text);
    }

    // half raw bytes, half byte-level mutations of valid specs
    let fuzz = 10_000;
    let mut accepted = 0;
    for case in 0..fuzz {
        let bytes: Vec<u8> = if case % 2 == 0 {
            let n = rng.random_range(0..64);
            (0..n).map(|_| rng.random()).collect()
        } else {
            let mut b = printed[rng.random_range(0..printed.len())].clone().into_bytes();
            for _ in 0..rng.random_range(1..4) {
                let i = rng.random_range(0..b.len());
                match rng.random_range(0..3) {
                    0 => b[i] = rng.random(),
                    1 => {
                        b.remove(i);
                    }
                    _ => b.insert(i, b"()!&|UFG<>=,. 0123456789dz"[rng.random_range(0..26)]),
                }
                if b.is_empty() {
                    break;
                }
            }
            b
        };
        let text = String::from_utf8_lossy(&bytes).into_owned();
        let result = catch_unwind(AssertUnwindSafe(|| speclang::parse_formula(&text, &manifest)))
            .map_err(|_| format!("parser panicked on {text:?}"))?;
        if result.is_ok() {
            accepted += 1;
        }
    }
    Ok(format!(
        "{cases} round-trips; {fuzz} fuzz inputs without a crash ({accepted} happened to parse)"
    ))
}

fn encoder_isometry() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x150);
    let cases = 1_000;
    let mut worst = 0.0f64;
    for case in 0..cases {
        let d = rng.random_range(2..=32);
        let s = rng.random_range(0.1..5.0);
        let drift = if case % 2 == 0 {
            [0.0, 0.0]
        } else {
            [rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1)]
        };
        let w = PointMassWorld::new(d, s, 0.25, rng.random(), drift).unwrap();
        let x = [rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)];
        let y = [rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)];
        let (ex, ey) = (w.encode(&x).unwrap(), w.encode(&y).unwrap());
        let phys = ((x[0] - y[0]).powi(2) + (x[1] - y[1]).powi(2)).sqrt();
        let err = (metrics::dist_l2(&ex, &ey).unwrap() - s * phys).abs();
        worst = worst.max(err);
        ensure!(err <= 1e-9, "case {case}: isometry error {err:e}");

        let actions: Vec<Action> = (0..10)
            .map(|_| Action::new(vec![rng.random_range(-0.25..=0.25), rng.random_range(-0.25..=0.25)]))
            .collect();
        let latent = rollout(&w, &[ex], &[], &actions).unwrap();
        let mut p = x;
        for (a, z) in actions.iter().zip(latent.iter()) {
            p = [p[0] + a.0[0] + drift[0], p[1] + a.0[1] + drift[1]];
            let expect = w.encode(&p).unwrap();
            let gap = metrics::dist_l2(z, &expect).unwrap();
            worst = worst.max(gap);
            ensure!(gap <= 1e-9, "case {case}: rollout drifted by {gap:e}");
        }
    }
    Ok(format!("{cases} pairs and rollouts, worst error {worst:e}"))
}

/// Straight-line witness: moves toward each waypoint at full speed under
/// drift and returns every visited position, or None if a waypoint is not
/// reached within `steps`.
fn witness(
    start: [f64; 2],
    waypoints: &[[f64; 2]],
    drift: [f64; 2],
    a_max: f64,
    steps: usize,
) -> Option<Vec<[f64; 2]>> {
    let mut path = vec![start];
    let mut p = start;
    for w in waypoints {
        while (p[0] - w[0]).abs() > 1e-12 || (p[1] - w[1]).abs() > 1e-12 {
            if path.len() > steps {
                return None;
            }
            let a = [0, 1].map(|k| (w[k] - p[k] - drift[k]).clamp(-a_max, a_max));
            p = [0, 1].map(|k| p[k] + a[k] + drift[k]);
            path.push(p);
        }
    }
    Some(path)
}

fn clear_of(path: &[[f64; 2]], avoid: &[Region]) -> bool {
    path.iter().all(|p| avoid.iter().all(|r| dist(*p, r.center) > r.radius))
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Reachable in `steps` per axis from `start` with zero drift.
fn reachable(start: [f64; 2], r: &Region, a_max: f64, steps: usize) -> bool {
    let reach = a_max * steps as f64;
    let clamped = [0, 1].map(|k| r.center[k].clamp(start[k] - reach, start[k] + reach));
    dist(clamped, r.center) < r.radius
}

fn first_inside(positions: &[[f64; 2]], r: &Region, from: usize) -> Option<usize> {
    (from..positions.len()).find(|&i| r.contains(positions[i]))
}

fn check_task(spec: SpecName, report: &Report, elapsed: Duration) -> Result<(), String> {
    let cfg = demo_config(spec);
    let env = &cfg.env;
    let p = &report.positions;
    let pm: etl::worldmodel::PointMassConfig = serde_json::from_value(cfg.model.clone()).unwrap();
    let (a_max, steps, drift) = (pm.a_max, cfg.plan.max_steps, pm.drift);
    ensure!(
        a_max == 0.25
            && cfg.plan.horizon == 8
            && cfg.plan.samples == 512
            && steps == 40
            && cfg.plan.seed == 7
            && cfg.metric == "l2",
        "{spec}: settings differ from the fixed task settings"
    );

    // feasibility from independent constructions
    let feasible = match spec {
        SpecName::Phi1 | SpecName::PsiReach => reachable(env.initial, &env.goals[0], a_max, steps),
        SpecName::Phi2 => {
            let g2 = reachable(env.initial, &env.goals[1], a_max, steps);
            ensure!(!g2, "{spec}: second goal was meant to be unreachable");
            reachable(env.initial, &env.goals[0], a_max, steps)
        }
        SpecName::Phi3 => {
            witness(env.initial, &[env.goals[0].center, env.goals[1].center], drift, a_max, steps)
                .is_some()
        }
        SpecName::PsiAvoid => {
            // drift cancelled by a constant admissible action keeps the mass still
            let cancel = drift.iter().all(|d| d.abs() <= a_max);
            let idle = witness(env.initial, &[], drift, a_max, steps).unwrap();
            // and doing nothing would hit a disc, so the task is not vacuous
            let mut q = env.initial;
            let passive: Vec<[f64; 2]> = (0..=steps)
                .map(|_| {
                    let here = q;
                    q = [q[0] + drift[0], q[1] + drift[1]];
                    here
                })
                .collect();
            ensure!(!clear_of(&passive, &env.avoid), "{spec}: zero actions already satisfy");
            cancel && clear_of(&idle, &env.avoid)
        }
        SpecName::PsiReachAvoid => {
            match witness(env.initial, &[env.goals[0].center], drift, a_max, steps) {
                Some(path) => clear_of(&path, &env.avoid),
                None => false,
            }
        }
    };
    ensure!(feasible, "{spec}: feasibility oracle says infeasible");

    ensure!(
        report.satisfied() && report.episode.final_score > 0.0,
        "{spec}: {}",
        report.summary()
    );
    ensure!(
        clear_of(p, &env.avoid),
        "{spec}: physical trajectory entered an avoid disc"
    );
    match spec {
        SpecName::Phi1 | SpecName::Phi2 | SpecName::PsiReach | SpecName::PsiReachAvoid => ensure!(
            first_inside(p, &env.goals[0], 0).is_some(),
            "{spec}: never entered the goal disc"
        ),
        SpecName::Phi3 => {
            let i1 = first_inside(p, &env.goals[0], 0);
            let i2 = i1.and_then(|i| first_inside(p, &env.goals[1], i));
            ensure!(i2.is_some(), "{spec}: goals not visited in order ({i1:?}, {i2:?})");
        }
        SpecName::PsiAvoid => {}
    }
    ensure!(
        report.score_table["l2"] == Some(report.episode.final_score),
        "{spec}: score table disagrees with the episode"
    );
    ensure!(elapsed < Duration::from_secs(10), "{spec}: episode took {elapsed:?}");
    Ok(())
}

fn planning_tasks() -> Outcome {
    let mut lines = Vec::new();
    let mut failures = Vec::new();
    for spec in SpecName::ALL {
        let t0 = Instant::now();
        let report = harness::run_experiment(&demo_config(spec)).map_err(|e| e.to_string())?;
        let elapsed = t0.elapsed();
        match check_task(spec, &report, elapsed) {
            Ok(()) => lines.push(format!(
                "{spec} {} steps score {:.4} {:.2}s",
                report.episode.actions.len(),
                report.episode.final_score,
                elapsed.as_secs_f64()
            )),
            Err(e) => failures.push(e),
        }
    }
    if failures.is_empty() {
        Ok(lines.join(", "))
    } else {
        Err(failures.join("; "))
    }
}

fn determinism() -> Outcome {
    for spec in SpecName::ALL {
        let cfg = demo_config(spec);
        let a = harness::run_experiment(&cfg).map_err(|e| e.to_string())?;
        let b = harness::run_experiment(&cfg).map_err(|e| e.to_string())?;
        ensure!(a.episode == b.episode, "{spec}: repeated run differs");
        let ja = serde_json::to_string(&a.episode).unwrap();
        let jb = serde_json::to_string(&b.episode).unwrap();
        ensure!(ja == jb, "{spec}: serialized episodes differ");
        let bits = |r: &Report| -> Vec<u64> {
            r.episode
                .actions
                .iter()
                .flat_map(|a| a.0.iter().map(|x| x.to_bits()))
                .collect()
        };
        ensure!(bits(&a) == bits(&b), "{spec}: actions differ in bits");

        let mut seq = cfg.clone();
        seq.plan.parallel = !cfg.plan.parallel;
        let c = harness::run_experiment(&seq).map_err(|e| e.to_string())?;
        ensure!(bits(&a) == bits(&c), "{spec}: parallelism changed the actions");
        ensure!(a.episode == c.episode, "{spec}: parallelism changed the episode");
    }
    Ok("six tasks repeated and rerun with the other parallelism setting".into())
}

fn heatmap_properties() -> Outcome {
    let embs = harness::synthetic_embeddings(8, 42);
    for m in [Metric::l1(), Metric::l2(), Metric::cosine(), Metric::chamfer()] {
        let matrix = harness::heatmap(&embs, &m).map_err(|e| e.to_string())?;
        let mut buf = Vec::new();
        harness::write_heatmap_csv(&matrix, &mut buf).unwrap();
        let parsed = parse_csv(&buf)?;
        ensure!(parsed.len() == 8 && parsed.iter().all(|r| r.len() == 8), "{m}: not 8x8");
        for i in 0..8 {
            ensure!(parsed[i][i] == 0.0, "{m}: nonzero diagonal");
            for j in 0..8 {
                ensure!(parsed[i][j] == parsed[j][i], "{m}: asymmetric at {i},{j}");
                ensure!(parsed[i][j] >= 0.0, "{m}: negative at {i},{j}");
                ensure!(parsed[i][j] == matrix[i][j], "{m}: CSV lost precision");
            }
        }
    }
    let line: Vec<Embedding> = [0.0, 1.0, 2.0]
        .iter()
        .map(|x| Embedding::vector(vec![*x]).unwrap())
        .collect();
    let m = harness::heatmap(&line, &Metric::l2()).map_err(|e| e.to_string())?;
    let expect = vec![vec![0.0, 1.0, 2.0], vec![1.0, 0.0, 1.0], vec![2.0, 1.0, 0.0]];
    ensure!(m == expect, "collinear case gave {m:?}");
    Ok("8 synthetic embeddings x 4 metrics; collinear L2 case exact".into())
}

fn parse_csv(bytes: &[u8]) -> Result<Vec<Vec<f64>>, String> {
    let text = std::str::from_utf8(bytes).map_err(|e| e.to_string())?;
    text.lines()
        .map(|l| {
            l.split(',')
                .map(|c| c.parse::<f64>().map_err(|e| format!("bad cell {c:?}: {e}")))
                .collect()
        })
        .collect()
}
