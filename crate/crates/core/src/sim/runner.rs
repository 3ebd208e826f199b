//! The episode runner: plays one policy against one scenario.

use std::sync::Arc;

use nalgebra::DVector;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::context::ContextDistribution;
use crate::error::{BanditError, Result};
use crate::features::{build_feature_set, expected_feature, sampled_feature, ActionId};
use crate::kernel::{FeatureDotKernel, KernelConfidence, KernelPolicy, KernelPolicyConfig, RbfKernel};
use crate::policies::{ConfidenceMode, LinearPolicy, PolicyConfig, PolicyVariant, Selection};
use crate::rng::{substream, Stream};
use crate::sim::bounds::{bound_for_variant, bound_rhs, BoundParams};
use crate::sim::labels;
use crate::sim::scenario::{Scenario, TrialEnv};
use crate::sim::trace::{RegretTrace, StepRecord, TraceVariant};

/// The policy to run in an episode.
#[derive(Debug, Clone)]
pub enum PolicySpec {
    Linear(PolicyConfig),
    Kernel {
        kernel: KernelChoice,
        config: KernelPolicyConfig,
    },
    /// Diagnostic agent that always plays the oracle action.
    OraclePlay,
}

/// Kernel catalogue for kernelized runs; concrete kernels are instantiated
/// per trial from the environment's map and action set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelChoice {
    /// Feature dot-product kernel (reproduces the linear policy).
    Linear,
    /// RBF over concatenated (action vector, context); requires a quadratic
    /// scenario whose action vectors are available.
    Rbf { lengthscale: f64 },
}

impl PolicySpec {
    pub fn trace_variant(&self) -> TraceVariant {
        match self {
            PolicySpec::Linear(cfg) => match cfg.variant {
                PolicyVariant::HiddenExpected => TraceVariant::HiddenExpected,
                PolicyVariant::HiddenSampled(_) => TraceVariant::HiddenSampled,
                PolicyVariant::ObservedExpected => TraceVariant::ObservedExpected,
                PolicyVariant::ObservedSampled(_) => TraceVariant::ObservedSampled,
                PolicyVariant::ExactBaseline => TraceVariant::ExactBaseline,
            },
            PolicySpec::Kernel { config, .. } => match config.sampled {
                None => TraceVariant::KernelExact,
                Some(_) => TraceVariant::KernelSampled,
            },
            PolicySpec::OraclePlay => TraceVariant::OraclePlay,
        }
    }
}

/// A failed episode carrying the partial trace recorded up to the failure.
#[derive(Debug)]
pub struct EpisodeFailure {
    pub error: BanditError,
    pub partial: RegretTrace,
}

impl std::fmt::Display for EpisodeFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "episode aborted at round {} of trial {}: {}",
            self.partial.len() + 1,
            self.partial.trial,
            self.error
        )
    }
}

impl std::error::Error for EpisodeFailure {}

/// The action maximizing the expected reward under `mu`, ties to the lowest
/// index. Falls back to Monte Carlo estimation (using the dedicated oracle
/// substream) when no closed-form expectation exists and the environment
/// configured a sample count.
pub fn oracle_action(
    env: &TrialEnv,
    mu: &ContextDistribution,
    fallback_rng: Option<&mut Stream>,
) -> Result<ActionId> {
    let expected = match env.map.expected_set(mu) {
        Some(fs) => Ok(fs),
        None => (0..env.n_actions())
            .map(|x| expected_feature(env.map.as_ref(), x, mu))
            .collect::<Result<Vec<_>>>(),
    };
    let expected = match expected {
        Ok(fs) => fs,
        Err(BanditError::UnsupportedExpectation) => {
            let samples = env
                .oracle_fallback_samples
                .ok_or(BanditError::UnsupportedExpectation)?;
            let rng = fallback_rng.ok_or(BanditError::UnsupportedExpectation)?;
            let batch = mu.sample_batch(samples, rng)?;
            (0..env.n_actions())
                .map(|x| sampled_feature(env.map.as_ref(), x, &batch))
                .collect::<Result<Vec<_>>>()?
        }
        Err(e) => return Err(e),
    };
    let mut best = 0;
    let mut best_val = f64::NEG_INFINITY;
    for (x, psi) in expected.iter().enumerate() {
        let val = psi.dot(&env.theta);
        if val > best_val {
            best_val = val;
            best = x;
        }
    }
    Ok(best)
}

enum Agent {
    Linear(LinearPolicy),
    Kernel(KernelPolicy),
    Oracle,
}

impl Agent {
    fn build(spec: &PolicySpec, env: &TrialEnv) -> Result<Self> {
        match spec {
            PolicySpec::Linear(cfg) => Ok(Agent::Linear(LinearPolicy::new(env.dim(), *cfg)?)),
            PolicySpec::Kernel { kernel, config } => {
                let kernel: Arc<dyn crate::kernel::Kernel> = match kernel {
                    KernelChoice::Linear => Arc::new(FeatureDotKernel::new(env.map.clone())),
                    KernelChoice::Rbf { lengthscale } => {
                        // Represent each action by its feature at the zero
                        // context; bounded and action-discriminating for any
                        // map.
                        let zero = vec![0.0; env.context_dim];
                        let actions: Vec<DVector<f64>> = (0..env.n_actions())
                            .map(|x| env.map.eval(x, &zero))
                            .collect();
                        Arc::new(RbfKernel::new(actions, *lengthscale)?)
                    }
                };
                // Construction-time probe validation: symmetry, bounded
                // diagonal, probe-Gram positive semidefiniteness.
                let probes: Vec<(usize, DVector<f64>)> = (0..env.n_actions().min(4))
                    .flat_map(|x| {
                        [0.0, 0.1].into_iter().map(move |v| {
                            (x, DVector::from_element(env.context_dim, v))
                        })
                    })
                    .collect();
                crate::kernel::validate_kernel(kernel.as_ref(), &probes)?;
                Ok(Agent::Kernel(KernelPolicy::new(kernel, *config)?))
            }
            PolicySpec::OraclePlay => Ok(Agent::Oracle),
        }
    }
}

/// Run one episode. Deterministic in `(scenario, policy, horizon,
/// master_seed, trial)`; errors abort the episode and attach the partial
/// trace.
pub fn run_episode(
    scenario: &dyn Scenario,
    policy: &PolicySpec,
    horizon: usize,
    master_seed: u64,
    trial: u64,
) -> std::result::Result<RegretTrace, EpisodeFailure> {
    let variant = policy.trace_variant();
    let fail = |error: BanditError, partial: RegretTrace| EpisodeFailure { error, partial };

    let env = match scenario.build(master_seed, trial) {
        Ok(env) => env,
        Err(e) => return Err(fail(e, RegretTrace::new(trial, variant, 1.0))),
    };
    let mut trace = RegretTrace::new(trial, variant, env.reward_scale);
    if horizon == 0 {
        return Err(fail(
            BanditError::invalid("horizon", "must be >= 1"),
            trace,
        ));
    }
    let mut agent = match Agent::build(policy, &env) {
        Ok(a) => a,
        Err(e) => return Err(fail(e, trace)),
    };
    let n_actions = env.n_actions();
    let noise = if env.noise_stddev > 0.0 {
        match Normal::new(0.0, env.noise_stddev) {
            Ok(n) => Some(n),
            Err(e) => {
                return Err(fail(
                    BanditError::invalid("noise_stddev", e.to_string()),
                    trace,
                ))
            }
        }
    } else {
        None
    };

    for t in 1..=horizon {
        let step = run_round(
            &env,
            policy,
            &mut agent,
            t,
            master_seed,
            trial,
            n_actions,
            noise.as_ref(),
            &trace,
        );
        match step {
            Ok(record) => trace.steps.push(record),
            Err(e) => return Err(fail(e, trace)),
        }
    }
    Ok(trace)
}

#[allow(clippy::too_many_arguments)]
fn run_round(
    env: &TrialEnv,
    policy: &PolicySpec,
    agent: &mut Agent,
    t: usize,
    master_seed: u64,
    trial: u64,
    n_actions: usize,
    noise: Option<&Normal<f64>>,
    trace: &RegretTrace,
) -> Result<StepRecord> {
    // Environment side: distribution, realization, oracle.
    let mut process_rng = substream(master_seed, trial, t as u64, labels::PROCESS);
    let draw = env
        .process
        .distribution(t, &trace.steps, &mut process_rng);
    let mu = draw.mu;
    let mut context_rng = substream(master_seed, trial, t as u64, labels::CONTEXT);
    let realized = mu.sample(&mut context_rng);
    let mut oracle_rng = substream(master_seed, trial, t as u64, labels::ORACLE);
    let oracle = oracle_action(env, &mu, Some(&mut oracle_rng))?;

    // Learner side: the policy sees only what its observation mode allows.
    let noise_draw = noise
        .map(|n| n.sample(&mut substream(master_seed, trial, t as u64, labels::NOISE)))
        .unwrap_or(0.0);
    let (selection, reward) = match (&mut *agent, policy) {
        (Agent::Linear(linear), PolicySpec::Linear(cfg)) => {
            let selection = match cfg.variant {
                PolicyVariant::ExactBaseline => {
                    let realized_features: Vec<DVector<f64>> = (0..n_actions)
                        .map(|x| env.map.eval(x, realized.as_slice()))
                        .collect();
                    linear.select_exact(&realized_features)?
                }
                _ => {
                    let mode = cfg.variant.feature_mode(t).expect("non-exact variant");
                    let mut psi_rng = substream(master_seed, trial, t as u64, labels::PSI);
                    let fs = build_feature_set(env.map.as_ref(), &mu, mode, t, &mut psi_rng)?;
                    linear.select(&fs)?
                }
            };
            let reward = env.reward_mean(selection.action, &realized) + noise_draw;
            if cfg.variant.regresses_on_realized() {
                let phi = env.map.eval(selection.action, realized.as_slice());
                linear.observe_exact(&phi, reward)?;
            } else {
                linear.observe_hidden(reward)?;
            }
            (selection, reward)
        }
        (Agent::Kernel(kernel), PolicySpec::Kernel { .. }) => {
            let mut psi_rng = substream(master_seed, trial, t as u64, labels::PSI);
            let embeddings = kernel.round_embeddings(n_actions, &mu, &mut psi_rng)?;
            let selection = kernel.select(&embeddings)?;
            let reward = env.reward_mean(selection.action, &realized) + noise_draw;
            kernel.observe(reward)?;
            (selection, reward)
        }
        (Agent::Oracle, _) => {
            let reward = env.reward_mean(oracle, &realized) + noise_draw;
            (
                Selection {
                    action: oracle,
                    ucb: 0.0,
                    width: 0.0,
                    beta: 0.0,
                },
                reward,
            )
        }
        _ => unreachable!("agent/spec pairing fixed at construction"),
    };

    // Regret bookkeeping against the distribution-optimal action at the
    // realized context.
    let regret_inst =
        env.reward_mean(oracle, &realized) - env.reward_mean(selection.action, &realized);
    let regret_cum = trace.final_regret() + regret_inst;

    // Post-update log-determinant and, in theoretical mode, the bound RHS at
    // this horizon.
    let (logdet, bound_value) = match (&*agent, policy) {
        (Agent::Linear(linear), PolicySpec::Linear(cfg)) => {
            let logdet = linear.ridge().logdet_ratio();
            let bound = match cfg.confidence {
                ConfidenceMode::Theoretical { delta, .. } => {
                    bound_for_variant(policy.trace_variant()).map(|kind| {
                        bound_rhs(
                            kind,
                            t,
                            logdet,
                            linear.beta(n_actions),
                            &BoundParams {
                                delta,
                                lambda: cfg.lambda,
                                n_actions,
                            },
                        )
                    })
                }
                ConfidenceMode::Tuned(_) => None,
            };
            (logdet, bound)
        }
        (Agent::Kernel(kernel), PolicySpec::Kernel { config, .. }) => {
            let diag = kernel.state().diagnostics();
            let bound = match config.confidence {
                KernelConfidence::Theoretical { delta, .. } => {
                    bound_for_variant(policy.trace_variant()).map(|kind| {
                        bound_rhs(
                            kind,
                            t,
                            diag.logdet_lambda_rho,
                            kernel.beta(),
                            &BoundParams {
                                delta,
                                lambda: config.lambda,
                                n_actions,
                            },
                        )
                    })
                }
                KernelConfidence::Tuned(_) => None,
            };
            (diag.logdet_lambda_rho, bound)
        }
        (Agent::Oracle, _) => (0.0, None),
        _ => unreachable!(),
    };

    Ok(StepRecord {
        round: t,
        mu_id: draw.id,
        action: selection.action,
        oracle_action: oracle,
        realized_context: realized,
        reward,
        regret_inst,
        regret_cum,
        beta: selection.beta,
        width: selection.width,
        logdet,
        bound_rhs: bound_value,
    })
}

/// Run many trials in parallel; results are ordered by trial index, so
/// aggregation is deterministic regardless of scheduling.
pub fn run_trials(
    scenario: &(dyn Scenario + Sync),
    policy: &PolicySpec,
    horizon: usize,
    master_seed: u64,
    trials: u64,
) -> Vec<std::result::Result<RegretTrace, EpisodeFailure>> {
    (0..trials)
        .into_par_iter()
        .map(|trial| run_episode(scenario, policy, horizon, master_seed, trial))
        .collect()
}

/// Sample mean and standard error.
pub fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}
