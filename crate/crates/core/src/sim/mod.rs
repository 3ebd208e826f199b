//! Deterministic environments and the episode runner.
//!
//! A [`Scenario`] instantiates one [`TrialEnv`] per trial (action sets may be
//! resampled per trial); [`run_episode`] then plays the
//! select / realize / reward / observe loop under the configured observation
//! mode and records a [`RegretTrace`]. Regret is measured against the action
//! maximizing the *expected* reward under the announced distribution,
//! evaluated at the realized context.
//!
//! All randomness flows through named substreams keyed by
//! `(master seed, trial, round, label)` — see [`labels`] — so traces are
//! bit-reproducible and different policies on the same scenario share the
//! same context, noise and sampling draws (paired comparisons by
//! construction). The realized context is always drawn and stored in the
//! trace (regret needs it) but reaches the policy only in the modes that are
//! allowed to see it.

mod bounds;
mod process;
mod runner;
mod scenario;
mod trace;

pub use bounds::{bound_for_variant, bound_rhs, trace_bound, BoundParams, RegretBound};
pub use process::{
    ContextProcess, DiracPoolProcess, DiscretizedGaussianProcess, DistributionDraw,
    FixedDistributionProcess, GroupProcess,
};
pub use runner::{
    mean_stderr, oracle_action, run_episode, run_trials, EpisodeFailure, KernelChoice,
    PolicySpec,
};
pub use scenario::{
    gauss_hermite_3, EmpiricalScenario, LowerBoundScenario, Scenario, SyntheticScenario,
    TrialEnv,
};
pub use trace::{RegretTrace, StepRecord, TraceVariant};

/// Substream labels used by the episode runner.
pub mod labels {
    /// Per-trial action-set draw (round component is 0).
    pub const ACTIONS: &str = "actions";
    /// Per-round distribution choice by the environment.
    pub const PROCESS: &str = "process";
    /// Per-round realized-context draw.
    pub const CONTEXT: &str = "context";
    /// Per-round feature/embedding sample batches drawn by the policy.
    pub const PSI: &str = "psi";
    /// Per-round observation noise.
    pub const NOISE: &str = "noise";
    /// Monte Carlo fallback for oracle expected rewards.
    pub const ORACLE: &str = "oracle";
}
