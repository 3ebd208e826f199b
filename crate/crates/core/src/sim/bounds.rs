//! Right-hand sides of the high-probability regret bounds.

use crate::error::{BanditError, Result};
use crate::sim::trace::{RegretTrace, TraceVariant};

/// Which regret bound to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegretBound {
    /// Hidden context, expected features.
    HiddenExpected,
    /// Hidden context, sample-averaged features with the round-index batch
    /// schedule.
    HiddenSampled,
    /// Context observed after acting, expected features.
    Observed,
    /// Kernelized variant with exact mean embeddings.
    Kernelized,
}

/// Static parameters entering the bound right-hand sides.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundParams {
    pub delta: f64,
    pub lambda: f64,
    pub n_actions: usize,
}

/// Evaluate a bound's right-hand side at horizon `t` from the maintained
/// log-determinant and the radius `beta_t` in force at that time.
///
/// `logdet` is `ln det(V_t) - ln det(V_0)` for the linear bounds and
/// `ln det(I + K_t/(lambda*rho))` for the kernelized one.
pub fn bound_rhs(
    bound: RegretBound,
    horizon: usize,
    logdet: f64,
    beta_t: f64,
    params: &BoundParams,
) -> f64 {
    let t = horizon as f64;
    let delta = params.delta;
    let elliptic = beta_t * (8.0 * t * logdet).sqrt();
    match bound {
        RegretBound::HiddenExpected => elliptic + 4.0 * (2.0 * t * (4.0 / delta).ln()).sqrt(),
        RegretBound::HiddenSampled => {
            let x = params.n_actions as f64;
            elliptic
                + 4.0
                    * (2.0 * t * (2.0 * x * std::f64::consts::PI * t / (3.0 * delta)).ln())
                        .sqrt()
        }
        RegretBound::Observed => {
            elliptic
                + 4.0
                    * (1.0 + beta_t / params.lambda.sqrt())
                    * (2.0 * t * (3.0 / delta).ln()).sqrt()
        }
        RegretBound::Kernelized => elliptic + 4.0 * (2.0 * t * (2.0 / delta).ln()).sqrt(),
    }
}

/// Which bound a trace variant supports, if any. The sampled observed
/// variant runs as an algorithm but has no evaluated bound.
pub fn bound_for_variant(variant: TraceVariant) -> Option<RegretBound> {
    match variant {
        TraceVariant::HiddenExpected => Some(RegretBound::HiddenExpected),
        TraceVariant::HiddenSampled => Some(RegretBound::HiddenSampled),
        TraceVariant::ObservedExpected => Some(RegretBound::Observed),
        TraceVariant::KernelExact => Some(RegretBound::Kernelized),
        TraceVariant::ObservedSampled
        | TraceVariant::ExactBaseline
        | TraceVariant::KernelSampled
        | TraceVariant::OraclePlay => None,
    }
}

/// Evaluate `bound` at the final step of a trace, using the trace's recorded
/// log-determinant and radius. Errors when the requested bound does not match
/// the trace's variant.
pub fn trace_bound(bound: RegretBound, trace: &RegretTrace, params: &BoundParams) -> Result<f64> {
    if bound_for_variant(trace.variant) != Some(bound) {
        return Err(BanditError::invalid(
            "bound",
            format!(
                "bound {:?} incompatible with trace variant {:?}",
                bound, trace.variant
            ),
        ));
    }
    let last = trace
        .steps
        .last()
        .ok_or(BanditError::Empty("trace"))?;
    Ok(bound_rhs(bound, last.round, last.logdet, last.beta, params))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn zero_logdet_leaves_only_the_martingale_term() {
        // All-zero features: det V_T = det V_0.
        let p = BoundParams {
            delta: 0.1,
            lambda: 1.0,
            n_actions: 3,
        };
        let rhs = bound_rhs(RegretBound::HiddenExpected, 100, 0.0, 5.0, &p);
        assert_abs_diff_eq!(
            rhs,
            4.0 * (2.0 * 100.0 * (4.0f64 / 0.1).ln()).sqrt(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn observed_bound_at_zero_radius() {
        // beta_T = 0: the inflation factor collapses to 1.
        let p = BoundParams {
            delta: 0.2,
            lambda: 1.0,
            n_actions: 2,
        };
        let rhs = bound_rhs(RegretBound::Observed, 50, 0.7, 0.0, &p);
        assert_abs_diff_eq!(
            rhs,
            4.0 * (2.0 * 50.0 * (3.0f64 / 0.2).ln()).sqrt(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn sampled_bound_scales_with_action_count() {
        let p1 = BoundParams {
            delta: 0.1,
            lambda: 1.0,
            n_actions: 1,
        };
        let p2 = BoundParams {
            n_actions: 100,
            ..p1
        };
        let a = bound_rhs(RegretBound::HiddenSampled, 100, 1.0, 1.0, &p1);
        let b = bound_rhs(RegretBound::HiddenSampled, 100, 1.0, 1.0, &p2);
        assert!(b > a);
    }
}
