//! Embedding temporal logic: specifications over sequences of learned
//! embeddings, a quantitative score, and a receding-horizon planner that
//! searches world-model rollouts for actions that satisfy a specification.
//!
//! ```
//! use etl::{logic, metrics::Metric, semantics, Embedding, TargetRef, Trace};
//!
//! let goal = TargetRef::new("g", Embedding::vector(vec![0.0]).unwrap(), Metric::l2()).unwrap();
//! let f = logic::reach(goal, 0.5).unwrap();
//! let trace = Trace::new(vec![
//!     Embedding::vector(vec![2.0]).unwrap(),
//!     Embedding::vector(vec![0.25]).unwrap(),
//! ])
//! .unwrap();
//! let ctx = semantics::ScoreContext::full(&trace).unwrap();
//! assert_eq!(semantics::score(&f, &ctx).unwrap(), 0.25);
//! ```

pub mod embedding;
pub mod error;
pub mod harness;
pub mod logic;
pub mod metrics;
pub mod planner;
pub mod semantics;
pub mod speclang;
pub mod trace;
pub mod worldmodel;

pub use embedding::{make_embedding, Embedding, EmbeddingKind};
pub use error::{Error, Position, Result};
pub use logic::{Formula, Predicate, Sense, TargetRef};
pub use metrics::{Metric, MetricRegistry};
pub use trace::{trace_slice, Trace};
pub use worldmodel::{Action, ModelRegistry, WorldModel};
