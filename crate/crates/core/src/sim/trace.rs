//! Per-step regret records and their CSV serialization.

use std::io::{self, Write};

use nalgebra::DVector;

use crate::features::ActionId;

/// Which policy produced a trace; bound evaluation checks compatibility
/// against this tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceVariant {
    HiddenExpected,
    HiddenSampled,
    ObservedExpected,
    ObservedSampled,
    ExactBaseline,
    KernelExact,
    KernelSampled,
    OraclePlay,
}

/// One round of an episode.
#[derive(Debug, Clone)]
pub struct StepRecord {
    /// 1-based round index.
    pub round: usize,
    /// Identifier of the announced distribution (group key or round tag).
    pub mu_id: String,
    pub action: ActionId,
    pub oracle_action: ActionId,
    /// Realized context; stored even when the policy never sees it.
    pub realized_context: DVector<f64>,
    pub reward: f64,
    /// `f(oracle_action, c_t) - f(action, c_t)`.
    pub regret_inst: f64,
    /// Running sum of the instantaneous regrets.
    pub regret_cum: f64,
    /// Exploration coefficient used at selection time.
    pub beta: f64,
    /// Ellipsoid/posterior width of the decision feature at selection time.
    pub width: f64,
    /// Variant-appropriate log-determinant after the round's update.
    pub logdet: f64,
    /// Theoretical regret-bound right-hand side at this horizon, when the
    /// variant runs in theoretical-confidence mode.
    pub bound_rhs: Option<f64>,
}

/// Full episode record.
#[derive(Debug, Clone)]
pub struct RegretTrace {
    pub trial: u64,
    pub variant: TraceVariant,
    /// Multiplier taking model-unit rewards back to the scenario's raw units.
    pub reward_scale: f64,
    pub steps: Vec<StepRecord>,
}

impl RegretTrace {
    pub fn new(trial: u64, variant: TraceVariant, reward_scale: f64) -> Self {
        RegretTrace {
            trial,
            variant,
            reward_scale,
            steps: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Cumulative regret after the last recorded round.
    pub fn final_regret(&self) -> f64 {
        self.steps.last().map(|s| s.regret_cum).unwrap_or(0.0)
    }

    /// Cumulative regret after 1-based round `t`.
    pub fn regret_at(&self, t: usize) -> f64 {
        assert!(t >= 1 && t <= self.steps.len(), "round {t} out of range");
        self.steps[t - 1].regret_cum
    }

    /// CSV with one row per step. Reals carry 17 significant digits so
    /// reruns are byte-comparable.
    pub fn write_csv<W: Write>(&self, w: &mut W) -> io::Result<()> {
        writeln!(
            w,
            "trial,t,action,oracle_action,reward,regret_inst,regret_cum,beta,width,bound_rhs"
        )?;
        for s in &self.steps {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{}",
                self.trial,
                s.round,
                s.action,
                s.oracle_action,
                fmt(s.reward),
                fmt(s.regret_inst),
                fmt(s.regret_cum),
                fmt(s.beta),
                fmt(s.width),
                s.bound_rhs.map(fmt).unwrap_or_default(),
            )?;
        }
        Ok(())
    }
}

fn fmt(x: f64) -> String {
    format!("{x:.16e}")
}
