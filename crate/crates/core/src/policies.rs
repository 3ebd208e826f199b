//! Linear UCB policies over distribution-derived feature sets.
//!
//! Three families share the ridge machinery:
//!
//! - **hidden**: decisions and regression both use the per-action expected
//!   (or sample-averaged) features; the realization never reaches the policy;
//! - **observed**: decisions use expected/sampled features, but the realized
//!   feature arrives with the reward and drives the regression, which permits
//!   the smaller noise proxy `sigma` instead of `sqrt(4 + sigma^2)`;
//! - **exact baseline**: the realization is visible before acting, i.e.
//!   plain LinUCB on realized features.
//!
//! Selection and observation strictly alternate; violating the protocol is an
//! error, never silent.

use nalgebra::DVector;

use crate::error::{BanditError, Result};
use crate::features::{ActionId, FeatureMode, FeatureSet};
use crate::ridge::{ConfidenceConfig, RidgeState};

/// Sample-count schedule for sampled-feature variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LSchedule {
    /// Fixed batch size every round.
    Constant(usize),
    /// Batch size equal to the round index (the schedule the sampled-feature
    /// regret analysis assumes).
    RoundIndex,
}

impl LSchedule {
    /// Batch size at 1-based round `t`.
    pub fn at(&self, round: usize) -> usize {
        match self {
            LSchedule::Constant(l) => (*l).max(1),
            LSchedule::RoundIndex => round.max(1),
        }
    }
}

/// Which policy family and feature source to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolicyVariant {
    HiddenExpected,
    HiddenSampled(LSchedule),
    ObservedExpected,
    ObservedSampled(LSchedule),
    ExactBaseline,
}

impl PolicyVariant {
    /// Feature mode the variant expects at round `t`, or `None` for the
    /// exact baseline (which consumes realized features directly).
    pub fn feature_mode(&self, round: usize) -> Option<FeatureMode> {
        match self {
            PolicyVariant::HiddenExpected | PolicyVariant::ObservedExpected => {
                Some(FeatureMode::Expected)
            }
            PolicyVariant::HiddenSampled(s) | PolicyVariant::ObservedSampled(s) => {
                Some(FeatureMode::Sampled { l: s.at(round) })
            }
            PolicyVariant::ExactBaseline => None,
        }
    }

    /// Whether the regression consumes the realized feature (observed and
    /// exact modes) rather than the decision feature.
    pub fn regresses_on_realized(&self) -> bool {
        matches!(
            self,
            PolicyVariant::ObservedExpected
                | PolicyVariant::ObservedSampled(_)
                | PolicyVariant::ExactBaseline
        )
    }

    pub fn is_sampled(&self) -> bool {
        matches!(
            self,
            PolicyVariant::HiddenSampled(_) | PolicyVariant::ObservedSampled(_)
        )
    }
}

/// How the exploration coefficient is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ConfidenceMode {
    /// Variant-specific radius: the hidden variants inflate the noise proxy
    /// to `sqrt(4 + sigma^2)` and spend half the failure probability on the
    /// reduction martingale; the observed variant uses `sigma` with a
    /// three-way split; the exact baseline uses `sigma` with the full budget.
    Theoretical {
        sigma: f64,
        delta: f64,
        s_bound: f64,
    },
    /// Constant exploration coefficient (the usual tuning practice).
    Tuned(f64),
}

/// Full policy configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicyConfig {
    pub variant: PolicyVariant,
    pub confidence: ConfidenceMode,
    pub lambda: f64,
    /// Horizon `T`; consumed by the sampled-feature radius.
    pub horizon: usize,
}

#[derive(Debug, Clone)]
struct Pending {
    action: ActionId,
    feature: DVector<f64>,
}

/// A linear UCB policy instance for one trial.
#[derive(Debug, Clone)]
pub struct LinearPolicy {
    ridge: RidgeState,
    config: PolicyConfig,
    round: usize,
    pending: Option<Pending>,
}

impl LinearPolicy {
    pub fn new(dim: usize, config: PolicyConfig) -> Result<Self> {
        if config.horizon == 0 {
            return Err(BanditError::invalid("horizon", "must be >= 1"));
        }
        if let ConfidenceMode::Theoretical { sigma, delta, s_bound } = config.confidence {
            // Validate the split parameters once up front.
            ConfidenceConfig::new(sigma.max(0.0), delta, s_bound)?;
            if sigma < 0.0 {
                return Err(BanditError::invalid("sigma", "must be nonnegative"));
            }
        }
        Ok(LinearPolicy {
            ridge: RidgeState::new(dim, config.lambda)?,
            config,
            round: 0,
            pending: None,
        })
    }

    pub fn config(&self) -> &PolicyConfig {
        &self.config
    }

    pub fn ridge(&self) -> &RidgeState {
        &self.ridge
    }

    /// Rounds observed so far.
    pub fn round(&self) -> usize {
        self.round
    }

    pub fn has_pending(&self) -> bool {
        self.pending.is_some()
    }

    /// Exploration coefficient for the current state. `action_count` feeds
    /// the union bound of the sampled-feature radius.
    pub fn beta(&self, action_count: usize) -> f64 {
        match self.config.confidence {
            ConfidenceMode::Tuned(beta) => beta,
            ConfidenceMode::Theoretical {
                sigma,
                delta,
                s_bound,
            } => match self.config.variant {
                PolicyVariant::HiddenExpected => self.ridge.beta(&ConfidenceConfig {
                    rho: (4.0 + sigma * sigma).sqrt(),
                    delta: delta / 2.0,
                    s_bound,
                }),
                PolicyVariant::HiddenSampled(_) => {
                    self.ridge
                        .beta_sampled(sigma, delta, action_count, self.config.horizon)
                }
                PolicyVariant::ObservedExpected | PolicyVariant::ObservedSampled(_) => {
                    self.ridge.beta(&ConfidenceConfig {
                        rho: sigma,
                        delta: delta / 3.0,
                        s_bound,
                    })
                }
                PolicyVariant::ExactBaseline => self.ridge.beta(&ConfidenceConfig {
                    rho: sigma,
                    delta,
                    s_bound,
                }),
            },
        }
    }

    /// UCB action over a distribution-derived feature set (hidden and
    /// observed variants). Returns the chosen action, its decision feature's
    /// ellipsoid width, and the coefficient used.
    pub fn select(&mut self, feature_set: &FeatureSet) -> Result<Selection> {
        if self.pending.is_some() {
            return Err(BanditError::SelectionPending);
        }
        let expected_mode = self
            .config
            .variant
            .feature_mode(self.round + 1)
            .ok_or(BanditError::ModeMismatch)?;
        let matches = match (expected_mode, feature_set.mode()) {
            (FeatureMode::Expected, FeatureMode::Expected) => true,
            (FeatureMode::Sampled { .. }, FeatureMode::Sampled { .. }) => true,
            _ => false,
        };
        if !matches {
            return Err(BanditError::ModeMismatch);
        }
        self.select_from(feature_set.features())
    }

    /// UCB action over realized per-action features (exact baseline).
    pub fn select_exact(&mut self, realized: &[DVector<f64>]) -> Result<Selection> {
        if self.pending.is_some() {
            return Err(BanditError::SelectionPending);
        }
        if self.config.variant != PolicyVariant::ExactBaseline {
            return Err(BanditError::ModeMismatch);
        }
        self.select_from(realized)
    }

    fn select_from(&mut self, features: &[DVector<f64>]) -> Result<Selection> {
        if features.is_empty() {
            return Err(BanditError::Empty("action set"));
        }
        let beta = self.beta(features.len());
        let mut best: Option<(ActionId, f64, f64)> = None;
        for (x, psi) in features.iter().enumerate() {
            let width = self.ridge.width(psi)?;
            let ucb = self.ridge.predict(psi)? + beta * width;
            // Ties break toward the lowest action index.
            match best {
                Some((_, best_ucb, _)) if ucb <= best_ucb => {}
                _ => best = Some((x, ucb, width)),
            }
        }
        let (action, ucb, width) = best.unwrap();
        self.pending = Some(Pending {
            action,
            feature: features[action].clone(),
        });
        Ok(Selection {
            action,
            ucb,
            width,
            beta,
        })
    }

    /// Complete a hidden-variant round: regress the reward on the pending
    /// decision feature.
    pub fn observe_hidden(&mut self, reward: f64) -> Result<()> {
        let pending = self.pending.take().ok_or(BanditError::NoPendingSelection)?;
        self.ridge.update(&pending.feature, reward)?;
        self.round += 1;
        Ok(())
    }

    /// Complete an observed/exact round: regress the reward on the realized
    /// feature. The decision feature is discarded for regression; it only
    /// drove the choice.
    pub fn observe_exact(&mut self, realized_feature: &DVector<f64>, reward: f64) -> Result<()> {
        if self.pending.is_none() {
            return Err(BanditError::NoPendingSelection);
        }
        self.ridge.update(realized_feature, reward)?;
        self.pending = None;
        self.round += 1;
        Ok(())
    }

    /// The pending action, if a decision awaits its observation.
    pub fn pending_action(&self) -> Option<ActionId> {
        self.pending.as_ref().map(|p| p.action)
    }

    /// The pending decision feature.
    pub fn pending_feature(&self) -> Option<&DVector<f64>> {
        self.pending.as_ref().map(|p| &p.feature)
    }
}

/// Outcome of a selection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Selection {
    pub action: ActionId,
    pub ucb: f64,
    pub width: f64,
    pub beta: f64,
}
