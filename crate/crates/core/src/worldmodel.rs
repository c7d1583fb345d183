//! World models: an encoder from observations to embeddings, a transition
//! model over latent histories, and an optional decoder.
//!
//! [`PointMassWorld`] is an exact instantiation. Its encoder is a `d x 2`
//! matrix `E` with orthogonal columns of norm `s`, so latent L2 distances
//! are physical distances times `s`, and its dynamics
//! `z' = z + E (a + b)` are exactly linear. With drift `b = 0` it registers
//! as `point_mass`; with nonzero drift as `drift`.

use std::collections::BTreeMap;
use std::sync::{Arc, OnceLock};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::embedding::Embedding;
use crate::error::{Error, Result};
use crate::trace::Trace;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Action(pub Vec<f64>);

impl Action {
    pub fn new(components: Vec<f64>) -> Self {
        Action(components)
    }

    pub fn zeros(dim: usize) -> Self {
        Action(vec![0.0; dim])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

pub trait WorldModel: Send + Sync {
    fn name(&self) -> &str;

    /// Number of past steps the transition model consumes (`H`).
    fn context_horizon(&self) -> usize;

    fn action_dim(&self) -> usize;

    fn latent_dim(&self) -> usize;

    /// Actions must lie in the box `[-bound, bound]^action_dim`.
    fn action_bound(&self) -> f64;

    fn encode(&self, observation: &[f64]) -> Result<Embedding>;

    /// Predicts the next embedding from the last `H` embeddings and actions.
    fn step(&self, z_hist: &[Embedding], a_hist: &[Action], next: &Action) -> Result<Embedding>;

    fn decode(&self, _z: &Embedding) -> Option<Result<Vec<f64>>> {
        None
    }

    fn check_action(&self, a: &Action) -> Result<()> {
        let bound = self.action_bound();
        if a.0.len() != self.action_dim() {
            return Err(Error::DimensionMismatch(format!(
                "action has {} components, model expects {}",
                a.0.len(),
                self.action_dim()
            )));
        }
        if a.0.iter().all(|v| v.is_finite() && v.abs() <= bound) {
            Ok(())
        } else {
            Err(Error::ActionOutOfBounds {
                action: a.0.clone(),
                bound,
            })
        }
    }
}

/// Predicts one embedding per future action, feeding each prediction back as context.
pub fn rollout(
    model: &dyn WorldModel,
    z_hist: &[Embedding],
    a_hist: &[Action],
    a_future: &[Action],
) -> Result<Trace> {
    let h = model.context_horizon();
    if z_hist.len() < h {
        return Err(Error::InsufficientHistory {
            got: z_hist.len(),
            need: h,
        });
    }
    for a in a_future {
        model.check_action(a)?;
    }
    let mut zs: Vec<Embedding> = z_hist[z_hist.len() - h..].to_vec();
    let mut acts: Vec<Action> = a_hist[a_hist.len().saturating_sub(h)..].to_vec();
    let mut out = Vec::with_capacity(a_future.len());
    for a in a_future {
        let next = model.step(&zs, &acts, a)?;
        zs.push(next.clone());
        acts.push(a.clone());
        if zs.len() > h {
            zs.remove(0);
        }
        if acts.len() > h {
            acts.remove(0);
        }
        out.push(next);
    }
    Trace::new(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointMassConfig {
    #[serde(default = "default_model_name")]
    pub model: String,
    pub latent_dim: usize,
    pub scale: f64,
    pub a_max: f64,
    pub seed: u64,
    #[serde(default)]
    pub drift: [f64; 2],
}

fn default_model_name() -> String {
    "point_mass".to_string()
}

impl Default for PointMassConfig {
    fn default() -> Self {
        PointMassConfig {
            model: default_model_name(),
            latent_dim: 16,
            scale: 1.0,
            a_max: 0.25,
            seed: 7,
            drift: [0.0, 0.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointMassWorld {
    /// Row-major `d x 2`.
    encoder: Vec<[f64; 2]>,
    scale: f64,
    a_max: f64,
    drift: [f64; 2],
    seed: u64,
}

pub fn make_point_mass(latent_dim: usize, scale: f64, a_max: f64, seed: u64) -> Result<PointMassWorld> {
    PointMassWorld::new(latent_dim, scale, a_max, seed, [0.0, 0.0])
}

impl PointMassWorld {
    pub fn new(latent_dim: usize, scale: f64, a_max: f64, seed: u64, drift: [f64; 2]) -> Result<Self> {
        if latent_dim < 2 {
            return Err(Error::InvalidDimension(format!(
                "latent_dim must be at least 2, got {latent_dim}"
            )));
        }
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::InvalidDimension(format!("scale must be positive, got {scale}")));
        }
        if !(a_max.is_finite() && a_max > 0.0) {
            return Err(Error::InvalidDimension(format!("a_max must be positive, got {a_max}")));
        }
        if !drift.iter().all(|b| b.is_finite()) {
            return Err(Error::NonFiniteInput);
        }
        Ok(PointMassWorld {
            encoder: orthonormal_columns(latent_dim, seed, scale),
            scale,
            a_max,
            drift,
            seed,
        })
    }

    pub fn from_config(cfg: &PointMassConfig) -> Result<Self> {
        PointMassWorld::new(cfg.latent_dim, cfg.scale, cfg.a_max, cfg.seed, cfg.drift)
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn drift(&self) -> [f64; 2] {
        self.drift
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn encoder_matrix(&self) -> &[[f64; 2]] {
        &self.encoder
    }

    fn apply_encoder(&self, v: [f64; 2]) -> impl Iterator<Item = f64> + '_ {
        self.encoder.iter().map(move |row| row[0] * v[0] + row[1] * v[1])
    }
}

/// Gram-Schmidt on a seeded Gaussian `d x 2` draw, scaled by `scale`.
fn orthonormal_columns(d: usize, seed: u64, scale: f64) -> Vec<[f64; 2]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let c1: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
        let c2: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
        let n1 = norm(&c1);
        if n1 < 1e-8 {
            continue;
        }
        let e1: Vec<f64> = c1.iter().map(|v| v / n1).collect();
        let mut e2 = c2;
        // two passes keep e1 . e2 at rounding level
        for _ in 0..2 {
            let proj = dot(&e1, &e2);
            e2.iter_mut().zip(&e1).for_each(|(v, u)| *v -= proj * u);
        }
        let n2 = norm(&e2);
        if n2 < 1e-8 {
            continue;
        }
        return e1
            .iter()
            .zip(&e2)
            .map(|(a, b)| [a * scale, b / n2 * scale])
            .collect();
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn position(observation: &[f64]) -> Result<[f64; 2]> {
    match observation {
        [x, y] if x.is_finite() && y.is_finite() => Ok([*x, *y]),
        [_, _] => Err(Error::NonFiniteInput),
        other => Err(Error::DimensionMismatch(format!(
            "point-mass observation has 2 components, got {}",
            other.len()
        ))),
    }
}

impl WorldModel for PointMassWorld {
    fn name(&self) -> &str {
        if self.drift == [0.0, 0.0] {
            "point_mass"
        } else {
            "drift"
        }
    }

    fn context_horizon(&self) -> usize {
        1
    }

    fn action_dim(&self) -> usize {
        2
    }

    fn latent_dim(&self) -> usize {
        self.encoder.len()
    }

    fn action_bound(&self) -> f64 {
        self.a_max
    }

    fn encode(&self, observation: &[f64]) -> Result<Embedding> {
        let x = position(observation)?;
        Embedding::vector(self.apply_encoder(x).collect())
    }

    fn step(&self, z_hist: &[Embedding], _a_hist: &[Action], next: &Action) -> Result<Embedding> {
        self.check_action(next)?;
        let z = z_hist.last().ok_or(Error::InsufficientHistory { got: 0, need: 1 })?;
        if z.shape() != (crate::embedding::EmbeddingKind::Vector, 1, self.latent_dim()) {
            return Err(Error::DimensionMismatch(format!(
                "latent {:?} does not match model dimension {}",
                z.shape(),
                self.latent_dim()
            )));
        }
        let a = &next.0;
        let delta = [a[0] + self.drift[0], a[1] + self.drift[1]];
        let data = z
            .as_flat()
            .iter()
            .zip(self.apply_encoder(delta))
            .map(|(zi, di)| zi + di)
            .collect();
        Embedding::vector(data)
    }

    fn decode(&self, z: &Embedding) -> Option<Result<Vec<f64>>> {
        if z.as_flat().len() != self.latent_dim() {
            return Some(Err(Error::DimensionMismatch(format!(
                "cannot decode {} entries with a {}-dimensional model",
                z.as_flat().len(),
                self.latent_dim()
            ))));
        }
        let s2 = self.scale * self.scale;
        let mut x = [0.0; 2];
        for (row, zi) in self.encoder.iter().zip(z.as_flat()) {
            x[0] += row[0] * zi;
            x[1] += row[1] * zi;
        }
        Some(Ok(vec![x[0] / s2, x[1] / s2]))
    }
}

pub type ModelBuilder = fn(&serde_json::Value) -> Result<Arc<dyn WorldModel>>;

/// Name-indexed constructors for world models, fed from a JSON config block.
#[derive(Clone, Default)]
pub struct ModelRegistry {
    builders: BTreeMap<String, ModelBuilder>,
}

impl ModelRegistry {
    pub fn with_builtins() -> Self {
        let mut r = ModelRegistry::default();
        r.register("point_mass", build_point_mass);
        r.register("drift", build_drift);
        r
    }

    pub fn builtin() -> &'static ModelRegistry {
        static BUILTIN: OnceLock<ModelRegistry> = OnceLock::new();
        BUILTIN.get_or_init(ModelRegistry::with_builtins)
    }

    pub fn register(&mut self, name: impl Into<String>, builder: ModelBuilder) {
        self.builders.insert(name.into(), builder);
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.builders.keys().map(String::as_str)
    }

    /// Builds the model named by the block's `"model"` field.
    pub fn build(&self, block: &serde_json::Value) -> Result<Arc<dyn WorldModel>> {
        let name = block
            .get("model")
            .and_then(|v| v.as_str())
            .ok_or_else(|| Error::Config("model block needs a string `model` field".into()))?;
        let builder = self
            .builders
            .get(name)
            .ok_or_else(|| Error::UnknownModel(name.to_string()))?;
        builder(block)
    }
}

fn point_mass_config(block: &serde_json::Value) -> Result<PointMassConfig> {
    serde_json::from_value(block.clone()).map_err(|e| Error::schema("model block", e))
}

fn build_point_mass(block: &serde_json::Value) -> Result<Arc<dyn WorldModel>> {
    let cfg = point_mass_config(block)?;
    if cfg.drift != [0.0, 0.0] {
        return Err(Error::Config(
            "`point_mass` has no drift; use model `drift`".into(),
        ));
    }
    Ok(Arc::new(PointMassWorld::from_config(&cfg)?))
}

fn build_drift(block: &serde_json::Value) -> Result<Arc<dyn WorldModel>> {
    let cfg = point_mass_config(block)?;
    Ok(Arc::new(PointMassWorld::from_config(&cfg)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::dist_l2;

    fn gram(w: &PointMassWorld) -> [[f64; 2]; 2] {
        let mut g = [[0.0; 2]; 2];
        for row in w.encoder_matrix() {
            for i in 0..2 {
                for j in 0..2 {
                    g[i][j] += row[i] * row[j];
                }
            }
        }
        g
    }

    #[test]
    fn square_encoder_is_an_isometry() {
        let w = make_point_mass(2, 1.0, 0.25, 0).unwrap();
        let (x, y) = ([0.3, -1.2], [2.0, 0.7]);
        let d = dist_l2(&w.encode(&x).unwrap(), &w.encode(&y).unwrap()).unwrap();
        let truth = ((x[0] - y[0]).powi(2) + (x[1] - y[1]).powi(2)).sqrt();
        assert!((d - truth).abs() < 1e-12);
    }

    #[test]
    fn orthonormal_columns_in_sixteen_dims() {
        let w = make_point_mass(16, 1.0, 0.25, 7).unwrap();
        let g = gram(&w);
        assert!((g[0][0] - 1.0).abs() < 1e-9);
        assert!((g[1][1] - 1.0).abs() < 1e-9);
        assert!(g[0][1].abs() < 1e-9);
        let w3 = make_point_mass(16, 3.0, 0.25, 7).unwrap();
        assert!((gram(&w3)[0][0] - 9.0).abs() < 1e-9);
    }

    #[test]
    fn invalid_parameters() {
        assert!(matches!(
            make_point_mass(1, 1.0, 0.25, 0),
            Err(Error::InvalidDimension(_))
        ));
        assert!(make_point_mass(4, 0.0, 0.25, 0).is_err());
        assert!(make_point_mass(4, 1.0, -1.0, 0).is_err());
    }

    #[test]
    fn same_seed_same_encoder() {
        let a = make_point_mass(16, 1.0, 0.25, 11).unwrap();
        let b = make_point_mass(16, 1.0, 0.25, 11).unwrap();
        let c = make_point_mass(16, 1.0, 0.25, 12).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn encode_cases() {
        let w = make_point_mass(8, 2.0, 0.25, 3).unwrap();
        assert!(w.encode(&[0.0, 0.0]).unwrap().as_flat().iter().all(|v| *v == 0.0));
        assert!(matches!(w.encode(&[f64::NAN, 0.0]), Err(Error::NonFiniteInput)));
        assert!(w.encode(&[1.0]).is_err());
    }

    #[test]
    fn rollout_is_closed_form() {
        let w = make_point_mass(16, 1.0, 0.25, 7).unwrap();
        let z0 = w.encode(&[0.0, 0.0]).unwrap();
        let right = Action::new(vec![0.25, 0.0]);
        let out = rollout(&w, &[z0.clone()], &[], &[right.clone(), right]).unwrap();
        assert_eq!(out.len(), 2);
        for (k, z) in out.iter().enumerate() {
            let expect = w.encode(&[0.25 * (k + 1) as f64, 0.0]).unwrap();
            assert!(dist_l2(z, &expect).unwrap() < 1e-12);
        }
        assert!(rollout(&w, &[z0.clone()], &[], &[]).unwrap().is_empty());
        assert!(matches!(
            rollout(&w, &[z0.clone()], &[], &[Action::new(vec![0.5, 0.0])]),
            Err(Error::ActionOutOfBounds { .. })
        ));
        assert!(matches!(
            rollout(&w, &[], &[], &[Action::zeros(2)]),
            Err(Error::InsufficientHistory { .. })
        ));
    }

    #[test]
    fn drift_shifts_dynamics() {
        let w = PointMassWorld::new(4, 1.0, 0.25, 1, [0.1, -0.05]).unwrap();
        assert_eq!(w.name(), "drift");
        let z0 = w.encode(&[0.0, 0.0]).unwrap();
        let z1 = w.step(&[z0], &[], &Action::zeros(2)).unwrap();
        let x1 = w.decode(&z1).unwrap().unwrap();
        assert!((x1[0] - 0.1).abs() < 1e-12 && (x1[1] + 0.05).abs() < 1e-12);
    }

    #[test]
    fn decode_inverts_encode() {
        let w = make_point_mass(16, 2.5, 0.25, 9).unwrap();
        let x = [1.25, -0.75];
        let back = w.decode(&w.encode(&x).unwrap()).unwrap().unwrap();
        assert!((back[0] - x[0]).abs() < 1e-12 && (back[1] - x[1]).abs() < 1e-12);
    }

    #[test]
    fn registry_builds_from_config_block() {
        let block = serde_json::json!({"model":"point_mass","latent_dim":16,"scale":1.0,"a_max":0.25,"seed":7});
        let m = ModelRegistry::builtin().build(&block).unwrap();
        assert_eq!(m.latent_dim(), 16);
        assert_eq!(m.name(), "point_mass");
        let drift = serde_json::json!({"model":"drift","latent_dim":4,"scale":1.0,"a_max":0.25,"seed":7,"drift":[0.05,0.0]});
        assert_eq!(ModelRegistry::builtin().build(&drift).unwrap().name(), "drift");
        let unknown = serde_json::json!({"model":"dino_wm"});
        assert!(matches!(
            ModelRegistry::builtin().build(&unknown),
            Err(Error::UnknownModel(_))
        ));
        let bad = serde_json::json!({"model":"point_mass","latent_dim":1,"scale":1.0,"a_max":0.25,"seed":7});
        assert!(ModelRegistry::builtin().build(&bad).is_err());
    }
}
