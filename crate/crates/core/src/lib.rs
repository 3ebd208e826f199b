//! Stochastic contextual bandits with context distributions.
//!
//! In the standard contextual bandit the learner sees the realized context
//! before acting. Here the environment instead announces a *distribution*
//! over contexts each round, samples the realization from it, and keeps the
//! realization hidden (or reveals it only after the action, or before it,
//! depending on the observation mode). The learner competes with the best
//! action for the announced distribution.
//!
//! The crate provides:
//!
//! - [`context`]: context distributions (Dirac, diagonal Gaussian, empirical)
//!   with sampling, moment access and CSV loading;
//! - [`features`]: feature maps and the per-round feature sets built from
//!   expected or sampled features;
//! - [`ridge`]: online regularized least squares with incremental inverse and
//!   log-determinant tracking, plus the self-normalized confidence radii;
//! - [`policies`]: the linear UCB policy variants (hidden, observed, exact
//!   baseline; expected or sampled features);
//! - [`kernel`]: kernelized UCB driven by kernel mean embeddings;
//! - [`sim`]: deterministic environments, the episode runner, regret traces
//!   and evaluation of the regret-bound right-hand sides.
//!
//! Everything is deterministic given a master seed: random draws go through
//! named substreams derived from `(seed, trial, round, label)`, so trials can
//! run in parallel and replay bit-identically.

pub mod context;
pub mod error;
pub mod features;
pub mod kernel;
pub mod policies;
pub mod ridge;
pub mod rng;
pub mod sim;

pub use context::ContextDistribution;
pub use error::BanditError;
pub use features::{ActionId, FeatureMap, FeatureMode, FeatureSet};
pub use kernel::{EmbeddingHandle, Kernel, KernelPolicy, KernelState};
pub use policies::{ConfidenceMode, LSchedule, LinearPolicy, PolicyConfig, PolicyVariant};
pub use ridge::{ConfidenceConfig, RidgeState};
pub use sim::{RegretBound, RegretTrace, StepRecord};

/// Tolerance on the unit-norm feature bound: inputs with Euclidean norm above
/// `1 + NORM_TOL` are rejected rather than clipped, so the confidence radii
/// stay valid.
pub const NORM_TOL: f64 = 1e-6;
