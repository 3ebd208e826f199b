//! Distribution sequences: how the environment picks `mu_t` each round.
//!
//! The trait receives the episode history, so history-dependent (adversarial)
//! sequences can be plugged in; the shipped processes are all oblivious.

use std::sync::Arc;

use nalgebra::DVector;
use rand::distr::weighted::WeightedIndex;
use rand::prelude::*;

use crate::context::ContextDistribution;
use crate::rng::Stream;
use crate::sim::scenario::gauss_hermite_3;
use crate::sim::trace::StepRecord;

/// The environment's per-round announcement.
#[derive(Debug, Clone)]
pub struct DistributionDraw {
    /// Short identifier recorded in the trace (group key or round tag).
    pub id: String,
    pub mu: ContextDistribution,
}

/// Chooses the context distribution for each round.
pub trait ContextProcess: Send + Sync {
    fn distribution(
        &self,
        round: usize,
        history: &[StepRecord],
        rng: &mut Stream,
    ) -> DistributionDraw;
}

/// The same distribution every round.
#[derive(Debug, Clone)]
pub struct FixedDistributionProcess(pub ContextDistribution);

impl ContextProcess for FixedDistributionProcess {
    fn distribution(&self, _round: usize, _h: &[StepRecord], _rng: &mut Stream) -> DistributionDraw {
        DistributionDraw {
            id: "fixed".into(),
            mu: self.0.clone(),
        }
    }
}

/// Point masses drawn uniformly from a fixed pool (the classical
/// exact-context setting).
#[derive(Debug, Clone)]
pub struct DiracPoolProcess {
    pub pool: Vec<DVector<f64>>,
}

impl ContextProcess for DiracPoolProcess {
    fn distribution(&self, _round: usize, _h: &[StepRecord], rng: &mut Stream) -> DistributionDraw {
        let idx = rng.random_range(0..self.pool.len());
        DistributionDraw {
            id: format!("c{idx}"),
            mu: ContextDistribution::dirac(self.pool[idx].clone()),
        }
    }
}

/// Per-round random mean `m_t` (truncated standard normal coordinates) with a
/// unit-variance Gaussian around it, discretized coordinate-wise by 3-point
/// Gauss-Hermite quadrature. The discretization matches the Gaussian's
/// moments up to degree five, so quadratic features, their variances and the
/// expected rewards are exactly those of the continuous distribution, while
/// the support stays bounded — which keeps the unit-norm feature bound
/// enforceable.
#[derive(Debug, Clone)]
pub struct DiscretizedGaussianProcess {
    pub dim: usize,
    /// Truncation radius for the mean coordinates.
    pub mean_trunc: f64,
    /// Per-coordinate standard deviation of the context around the mean.
    pub stddev: f64,
}

impl DiscretizedGaussianProcess {
    pub fn sample_mean(&self, rng: &mut Stream) -> DVector<f64> {
        DVector::from_fn(self.dim, |_, _| truncated_standard_normal(rng, self.mean_trunc))
    }

    /// Largest context coordinate magnitude the process can emit.
    pub fn context_bound(&self) -> f64 {
        self.mean_trunc + 3.0f64.sqrt() * self.stddev
    }
}

impl ContextProcess for DiscretizedGaussianProcess {
    fn distribution(&self, round: usize, _h: &[StepRecord], rng: &mut Stream) -> DistributionDraw {
        let mean = self.sample_mean(rng);
        DistributionDraw {
            id: format!("t{round}"),
            mu: gauss_hermite_3(&mean, self.stddev),
        }
    }
}

/// Standard normal draw rejected outside `[-trunc, trunc]`.
pub(crate) fn truncated_standard_normal(rng: &mut Stream, trunc: f64) -> f64 {
    use rand_distr::StandardNormal;
    loop {
        let z: f64 = StandardNormal.sample(rng);
        if z.abs() <= trunc {
            return z;
        }
    }
}

/// Picks a group (uniformly or by the given frequencies) and announces its
/// empirical distribution; the realization is then drawn from that group.
#[derive(Clone)]
pub struct GroupProcess {
    pub groups: Arc<Vec<(String, ContextDistribution)>>,
    /// Optional pick frequencies, one per group (need not be normalized).
    pub frequencies: Option<Vec<f64>>,
}

impl ContextProcess for GroupProcess {
    fn distribution(&self, _round: usize, _h: &[StepRecord], rng: &mut Stream) -> DistributionDraw {
        let idx = match &self.frequencies {
            Some(freq) => WeightedIndex::new(freq.iter().copied())
                .expect("validated frequencies")
                .sample(rng),
            None => rng.random_range(0..self.groups.len()),
        };
        let (key, mu) = &self.groups[idx];
        DistributionDraw {
            id: key.clone(),
            mu: mu.clone(),
        }
    }
}
