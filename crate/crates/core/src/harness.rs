//! Desk-scale experiments on the point-mass world, plus distance heatmaps.
//!
//! Rooms and configurations become disc regions in the plane. A region's
//! target embedding is the encoded disc center and its threshold is the
//! radius times the encoder scale, so with the L2 metric a reach predicate
//! holds exactly when the mass is inside the disc.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::embedding::Embedding;
use crate::error::{Error, Result};
use crate::logic::{self, Formula, TargetRef};
use crate::metrics::{Metric, MetricRegistry};
use crate::planner::{csv_err, run_receding_horizon_timed, EpisodeResult, Environment, PlanConfig};
use crate::semantics::{score, ScoreContext};
use crate::speclang::{self, Manifest};
use crate::trace::Trace;
use crate::worldmodel::{Action, ModelRegistry, PointMassConfig, WorldModel};

/// Ground-truth point mass: `x' = x + a + drift`.
#[derive(Debug, Clone)]
pub struct PointMassEnv {
    position: [f64; 2],
    drift: [f64; 2],
    a_max: f64,
    history: Vec<[f64; 2]>,
}

impl PointMassEnv {
    pub fn new(initial: [f64; 2], drift: [f64; 2], a_max: f64) -> Self {
        PointMassEnv {
            position: initial,
            drift,
            a_max,
            history: vec![initial],
        }
    }

    pub fn position(&self) -> [f64; 2] {
        self.position
    }

    /// Every visited position, starting with the initial one.
    pub fn history(&self) -> &[[f64; 2]] {
        &self.history
    }
}

impl Environment for PointMassEnv {
    fn observation(&self) -> Vec<f64> {
        self.position.to_vec()
    }

    fn apply(&mut self, action: &Action) -> Result<()> {
        let a = action.as_slice();
        if a.len() != 2 || !a.iter().all(|v| v.is_finite() && v.abs() <= self.a_max) {
            return Err(Error::ActionOutOfBounds {
                action: a.to_vec(),
                bound: self.a_max,
            });
        }
        self.position = [
            self.position[0] + a[0] + self.drift[0],
            self.position[1] + a[1] + self.drift[1],
        ];
        self.history.push(self.position);
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Region {
    pub name: String,
    pub center: [f64; 2],
    pub radius: f64,
}

impl Region {
    pub fn new(name: &str, center: [f64; 2], radius: f64) -> Self {
        Region {
            name: name.to_string(),
            center,
            radius,
        }
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        let (dx, dy) = (p[0] - self.center[0], p[1] - self.center[1]);
        (dx * dx + dy * dy).sqrt() < self.radius
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvConfig {
    pub initial: [f64; 2],
    #[serde(default)]
    pub goals: Vec<Region>,
    #[serde(default)]
    pub avoid: Vec<Region>,
}

/// The six named task specifications.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpecName {
    /// Visit room: `F reach(g1)`.
    Phi1,
    /// Visit either room: `F reach(g1) | F reach(g2)`.
    Phi2,
    /// Visit rooms sequentially: `F (reach(g1) & F reach(g2))`.
    Phi3,
    /// Reach configuration.
    PsiReach,
    /// Avoid every configuration in the avoid set.
    PsiAvoid,
    /// Reach and avoid.
    PsiReachAvoid,
}

impl SpecName {
    pub const ALL: [SpecName; 6] = [
        SpecName::Phi1,
        SpecName::Phi2,
        SpecName::Phi3,
        SpecName::PsiReach,
        SpecName::PsiAvoid,
        SpecName::PsiReachAvoid,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SpecName::Phi1 => "phi1",
            SpecName::Phi2 => "phi2",
            SpecName::Phi3 => "phi3",
            SpecName::PsiReach => "psi_reach",
            SpecName::PsiAvoid => "psi_avoid",
            SpecName::PsiReachAvoid => "psi_reach_avoid",
        }
    }
}

impl fmt::Display for SpecName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SpecName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SpecName::ALL
            .into_iter()
            .find(|n| n.as_str() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown spec `{s}`; expected one of {}",
                    SpecName::ALL.map(SpecName::as_str).join(", ")
                ))
            })
    }
}

/// Either a named task or formula text. Identifiers in the text resolve
/// against the manifest if given, then against region names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SpecChoice {
    Named(SpecName),
    Text {
        text: String,
        #[serde(default)]
        manifest: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: Option<String>,
    pub model: serde_json::Value,
    pub env: EnvConfig,
    pub spec: SpecChoice,
    #[serde(default = "default_metric")]
    pub metric: String,
    pub plan: PlanConfig,
}

fn default_metric() -> String {
    "l2".to_string()
}

impl ExperimentConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: ExperimentConfig = serde_json::from_str(&text)
            .map_err(|e| Error::schema(path.display().to_string(), e))?;
        // manifest paths are relative to the config file
        if let SpecChoice::Text {
            manifest: Some(m), ..
        } = &mut cfg.spec
        {
            if m.is_relative() {
                *m = path.parent().unwrap_or_else(|| Path::new(".")).join(&*m);
            }
        }
        Ok(cfg)
    }

    pub fn display_name(&self) -> String {
        match (&self.name, &self.spec) {
            (Some(n), _) => n.clone(),
            (None, SpecChoice::Named(s)) => s.to_string(),
            (None, SpecChoice::Text { .. }) => "custom".to_string(),
        }
    }

    fn point_mass(&self) -> Result<PointMassConfig> {
        serde_json::from_value(self.model.clone()).map_err(|e| Error::schema("model block", e))
    }

    fn validate(&self) -> Result<()> {
        self.plan.validate()?;
        let finite = |p: [f64; 2]| p.iter().all(|v| v.is_finite());
        if !finite(self.env.initial) {
            return Err(Error::Config("initial position must be finite".into()));
        }
        for r in self.env.goals.iter().chain(&self.env.avoid) {
            if !finite(r.center) || !(r.radius.is_finite() && r.radius >= 0.0) {
                return Err(Error::Config(format!("region `{}` is not finite", r.name)));
            }
            if !speclang::is_identifier(&r.name) {
                return Err(Error::Config(format!("region name `{}` is not an identifier", r.name)));
            }
        }
        Ok(())
    }
}

fn region_target(
    model: &dyn WorldModel,
    scale: f64,
    metric: &Metric,
    region: &Region,
    role: &str,
) -> Result<(Arc<TargetRef>, f64)> {
    let z = model.encode(&region.center)?;
    let t = TargetRef::with_role(region.name.clone(), z, metric.clone(), role)?;
    Ok((t, region.radius * scale))
}

fn goal(cfg: &ExperimentConfig, i: usize) -> Result<&Region> {
    cfg.env.goals.get(i).ok_or_else(|| {
        Error::Config(format!(
            "spec needs at least {} goal region(s), config has {}",
            i + 1,
            cfg.env.goals.len()
        ))
    })
}

/// Instantiates the configured specification with targets compared by `metric`.
pub fn build_spec(
    cfg: &ExperimentConfig,
    model: &dyn WorldModel,
    metric: &Metric,
) -> Result<Formula> {
    let scale = cfg.point_mass()?.scale;
    let target = |r: &Region, role: &str| region_target(model, scale, metric, r, role);
    let avoid_set = || -> Result<Vec<(Arc<TargetRef>, f64)>> {
        cfg.env.avoid.iter().map(|r| target(r, "avoid")).collect()
    };
    let reach_goal = |i: usize| -> Result<Formula> {
        let (t, eps) = target(goal(cfg, i)?, "goal")?;
        logic::reach(t, eps)
    };
    match &cfg.spec {
        SpecChoice::Named(SpecName::Phi1 | SpecName::PsiReach) => reach_goal(0),
        SpecChoice::Named(SpecName::Phi2) => Ok(Formula::or(reach_goal(0)?, reach_goal(1)?)),
        SpecChoice::Named(SpecName::Phi3) => {
            let (g1, e1) = target(goal(cfg, 0)?, "goal")?;
            let (g2, e2) = target(goal(cfg, 1)?, "goal")?;
            logic::sequenced_visit(g1, e1, g2, e2)
        }
        SpecChoice::Named(SpecName::PsiAvoid) => logic::avoid_all(&avoid_set()?)?
            .ok_or_else(|| Error::Config("psi_avoid needs at least one avoid region".into())),
        SpecChoice::Named(SpecName::PsiReachAvoid) => {
            if cfg.env.avoid.is_empty() {
                return Err(Error::Config(
                    "psi_reach_avoid needs at least one avoid region".into(),
                ));
            }
            let (g, e) = target(goal(cfg, 0)?, "goal")?;
            logic::reach_avoid(g, e, &avoid_set()?)
        }
        SpecChoice::Text { text, manifest } => {
            let mut m = Manifest::new();
            for r in &cfg.env.goals {
                m.insert(target(r, "goal")?.0, None, None)?;
            }
            for r in &cfg.env.avoid {
                m.insert(target(r, "avoid")?.0, None, None)?;
            }
            if let Some(path) = manifest {
                for (_, entry) in speclang::load_manifest(path)?.entries() {
                    m.insert(entry.target.clone(), entry.file.clone(), entry.threshold)?;
                }
            }
            speclang::parse_formula(text, &m)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub name: String,
    pub spec: String,
    pub metric: String,
    pub episode: EpisodeResult,
    /// Ground-truth positions, one per observed embedding.
    pub positions: Vec<[f64; 2]>,
    /// The stored trace re-scored with the spec built under each metric;
    /// `null` where the metric does not apply.
    pub score_table: BTreeMap<String, Option<f64>>,
    pub step_wall_clock_ms: Vec<f64>,
}

impl Report {
    pub fn satisfied(&self) -> bool {
        self.episode.satisfied
    }

    pub fn summary(&self) -> String {
        format!(
            "{}: {} after {} steps, final score {:.6} ({})",
            self.name,
            if self.episode.satisfied {
                "satisfied"
            } else {
                "NOT satisfied"
            },
            self.episode.actions.len(),
            self.episode.final_score,
            self.metric
        )
    }
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Report> {
    run_experiment_with(cfg, ModelRegistry::builtin(), MetricRegistry::builtin())
}

pub fn run_experiment_with(
    cfg: &ExperimentConfig,
    models: &ModelRegistry,
    metrics: &MetricRegistry,
) -> Result<Report> {
    cfg.validate()?;
    let model = models.build(&cfg.model)?;
    let pm = cfg.point_mass()?;
    let metric = metrics.get(&cfg.metric)?;
    let formula = build_spec(cfg, model.as_ref(), &metric)?;

    let mut env = PointMassEnv::new(cfg.env.initial, pm.drift, model.action_bound());
    let (episode, timings) =
        run_receding_horizon_timed(&mut env, model.as_ref(), &formula, &cfg.plan)?;

    let mut score_table = BTreeMap::new();
    for name in metrics.names() {
        let m = metrics.get(name)?;
        let rescored = build_spec(cfg, model.as_ref(), &m)
            .and_then(|f| score(&f, &ScoreContext::full(&episode.trace)?))
            .ok();
        score_table.insert(name.to_string(), rescored);
    }

    Ok(Report {
        name: cfg.display_name(),
        spec: speclang::pretty(&formula),
        metric: metric.name().to_string(),
        positions: env.history().to_vec(),
        episode,
        score_table,
        step_wall_clock_ms: timings.iter().map(|d| d.as_secs_f64() * 1e3).collect(),
    })
}

/// Built-in configuration for each named task.
pub fn demo_config(spec: SpecName) -> ExperimentConfig {
    let model = |drift: [f64; 2]| {
        let cfg = PointMassConfig {
            model: if drift == [0.0, 0.0] {
                "point_mass".into()
            } else {
                "drift".into()
            },
            drift,
            ..PointMassConfig::default()
        };
        serde_json::to_value(cfg).expect("config serializes")
    };
    let ring = |n: usize, radius: f64, disc: f64| -> Vec<Region> {
        (0..n)
            .map(|k| {
                let th = std::f64::consts::TAU * k as f64 / n as f64;
                Region::new(&format!("a{}", k + 1), [radius * th.cos(), radius * th.sin()], disc)
            })
            .collect()
    };
    let (env, drift) = match spec {
        SpecName::Phi1 => (
            EnvConfig {
                initial: [0.0, 0.0],
                goals: vec![Region::new("g1", [1.0, 0.0], 0.2)],
                avoid: vec![],
            },
            [0.0, 0.0],
        ),
        SpecName::Phi2 => (
            EnvConfig {
                initial: [0.0, 0.0],
                goals: vec![
                    Region::new("g1", [1.5, 0.5], 0.25),
                    Region::new("g2", [15.0, 0.0], 0.25),
                ],
                avoid: vec![],
            },
            [0.0, 0.0],
        ),
        SpecName::Phi3 => (
            EnvConfig {
                initial: [0.0, 0.0],
                goals: vec![
                    Region::new("g1", [1.0, 0.5], 0.25),
                    Region::new("g2", [1.5, -0.5], 0.25),
                ],
                avoid: vec![],
            },
            [0.0, 0.0],
        ),
        SpecName::PsiReach => (
            EnvConfig {
                initial: [0.0, 0.0],
                goals: vec![Region::new("g", [-1.5, 1.0], 0.2)],
                avoid: vec![],
            },
            [0.0, 0.0],
        ),
        SpecName::PsiAvoid => (
            EnvConfig {
                initial: [0.0, 0.0],
                goals: vec![],
                avoid: ring(8, 2.0, 0.5),
            },
            [0.12, 0.0],
        ),
        SpecName::PsiReachAvoid => (
            EnvConfig {
                initial: [0.0, 0.0],
                goals: vec![Region::new("g", [2.0, 0.0], 0.25)],
                // a gate: the straight line to the goal passes between the discs
                avoid: vec![
                    Region::new("a1", [1.0, 0.4], 0.3),
                    Region::new("a2", [1.0, -0.6], 0.25),
                ],
            },
            [0.0, 0.0],
        ),
    };
    ExperimentConfig {
        name: Some(spec.to_string()),
        model: model(drift),
        env,
        spec: SpecChoice::Named(spec),
        metric: default_metric(),
        plan: PlanConfig::default(),
    }
}

/// Pairwise distance matrix; symmetric with a zero diagonal.
pub fn heatmap(embeddings: &[Embedding], metric: &Metric) -> Result<Vec<Vec<f64>>> {
    if embeddings.len() < 2 {
        return Err(Error::Config("a heatmap needs at least two embeddings".into()));
    }
    // shape check, and the same error surface as a trace
    Trace::new(embeddings.to_vec())?;
    for e in embeddings {
        metric.check_compatible(e)?;
    }
    let n = embeddings.len();
    let mut m = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let d = metric.distance(&embeddings[i], &embeddings[j])?;
            m[i][j] = d;
            m[j][i] = d;
        }
    }
    Ok(m)
}

pub fn write_heatmap_csv(matrix: &[Vec<f64>], out: impl Write) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    for row in matrix {
        w.write_record(row.iter().map(f64::to_string)).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io("heatmap csv", e))?;
    Ok(())
}

/// `count` seeded patch-set embeddings (4 patches of dimension 8) drawn
/// around two cluster centers, so heatmaps show block structure.
pub fn synthetic_embeddings(count: usize, seed: u64) -> Vec<Embedding> {
    const PATCHES: usize = 4;
    const DIM: usize = 8;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let wide = Normal::new(0.0, 1.0).expect("valid normal");
    let narrow = Normal::new(0.0, 0.2).expect("valid normal");
    let centers: Vec<Vec<f64>> = (0..2)
        .map(|_| (0..PATCHES * DIM).map(|_| wide.sample(&mut rng)).collect())
        .collect();
    (0..count)
        .map(|i| {
            let c = &centers[(2 * i) / count.max(1)];
            let patches = (0..PATCHES)
                .map(|p| {
                    (0..DIM)
                        .map(|d| c[p * DIM + d] + narrow.sample(&mut rng))
                        .collect()
                })
                .collect();
            Embedding::patch_set(patches).expect("finite synthetic data")
        })
        .collect()
}
