//! Feature maps and per-round feature sets.
//!
//! A [`FeatureMap`] turns an `(action, context)` pair into a `d`-dimensional
//! feature vector. When the environment announces a context distribution
//! instead of a realization, the policy acts on per-action *expected*
//! features `E_c[phi(x, c)]` or their Monte Carlo averages over a shared
//! sample batch; [`build_feature_set`] assembles either kind into a
//! [`FeatureSet`], one feature per action in a stable order.

use std::sync::Arc;

use nalgebra::DVector;

use crate::context::ContextDistribution;
use crate::error::{BanditError, Result};
use crate::rng::Stream;
use crate::NORM_TOL;

/// Actions are identified by their index in a fixed ordering.
pub type ActionId = usize;

/// Deterministic map `(action, context) -> R^d`.
///
/// The default methods give maps a chance to declare closed-form expectation
/// rules; without one, expected features exist only for distributions with
/// finite support.
pub trait FeatureMap: Send + Sync {
    /// Feature dimension `d`.
    fn dim(&self) -> usize;

    /// Number of actions the map is defined for.
    fn num_actions(&self) -> usize;

    /// Write `phi(action, context)` into `out` (length `d`).
    fn eval_into(&self, action: ActionId, context: &[f64], out: &mut [f64]);

    /// Allocating wrapper around [`FeatureMap::eval_into`].
    fn eval(&self, action: ActionId, context: &[f64]) -> DVector<f64> {
        let mut out = DVector::zeros(self.dim());
        self.eval_into(action, context, out.as_mut_slice());
        out
    }

    /// Closed-form `E_{c~mu}[phi(action, c)]` when the map declares a moment
    /// rule for this distribution variant. `None` falls back to the generic
    /// finite-support path.
    fn expected(&self, _action: ActionId, _mu: &ContextDistribution) -> Option<DVector<f64>> {
        None
    }

    /// Mean of `phi(action, .)` over a sample batch, when the map has a
    /// cheaper-than-generic rule. Overrides must be pure functions of
    /// `(action, samples)`: re-deriving a stored feature from its batch has
    /// to reproduce it bit-exactly.
    fn sampled(&self, _action: ActionId, _samples: &[DVector<f64>]) -> Option<DVector<f64>> {
        None
    }

    /// Expected features for all actions at once, sharing per-distribution
    /// work. Must agree bit-for-bit with per-action [`FeatureMap::expected`].
    fn expected_set(&self, _mu: &ContextDistribution) -> Option<Vec<DVector<f64>>> {
        None
    }

    /// Sampled features for all actions from one shared batch. Must agree
    /// bit-for-bit with per-action [`FeatureMap::sampled`].
    fn sampled_set(&self, _samples: &[DVector<f64>]) -> Option<Vec<DVector<f64>>> {
        None
    }
}

/// Expected feature `E_{c~mu}[phi(x, c)]`.
///
/// Dirac and empirical distributions always work (point evaluation and
/// weighted sum); other variants need an analytic rule on the map, otherwise
/// [`BanditError::UnsupportedExpectation`] signals that the caller must use
/// sampled features.
pub fn expected_feature(
    map: &dyn FeatureMap,
    action: ActionId,
    mu: &ContextDistribution,
) -> Result<DVector<f64>> {
    if let Some(v) = map.expected(action, mu) {
        return Ok(v);
    }
    match mu {
        ContextDistribution::Dirac(c) => Ok(map.eval(action, c.as_slice())),
        ContextDistribution::Empirical { points, weights } => {
            let mut acc = DVector::zeros(map.dim());
            let mut buf = DVector::zeros(map.dim());
            for (p, w) in points.iter().zip(weights) {
                map.eval_into(action, p.as_slice(), buf.as_mut_slice());
                acc.axpy(*w, &buf, 1.0);
            }
            Ok(acc)
        }
        ContextDistribution::DiagonalGaussian { .. } => Err(BanditError::UnsupportedExpectation),
    }
}

/// True when every sample in the batch is the same point (Dirac batches).
fn uniform_batch(samples: &[DVector<f64>]) -> bool {
    samples[1..].iter().all(|s| s == &samples[0])
}

/// Mean feature over an explicit sample batch.
///
/// A batch of identical points short-circuits to a single evaluation, so the
/// point-mass reduction is exact rather than exact-up-to-rounding.
pub fn sampled_feature(
    map: &dyn FeatureMap,
    action: ActionId,
    samples: &[DVector<f64>],
) -> Result<DVector<f64>> {
    if samples.is_empty() {
        return Err(BanditError::Empty("sample batch"));
    }
    if uniform_batch(samples) {
        return Ok(map.eval(action, samples[0].as_slice()));
    }
    if let Some(v) = map.sampled(action, samples) {
        return Ok(v);
    }
    let mut acc = DVector::zeros(map.dim());
    let mut buf = DVector::zeros(map.dim());
    for s in samples {
        map.eval_into(action, s.as_slice(), buf.as_mut_slice());
        acc += &buf;
    }
    acc /= samples.len() as f64;
    Ok(acc)
}

/// How a round's feature set was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureMode {
    /// Closed-form expected features.
    Expected,
    /// Monte Carlo features from `l` shared context samples.
    Sampled { l: usize },
}

/// One feature per action for a single round, in action order.
#[derive(Debug, Clone)]
pub struct FeatureSet {
    features: Vec<DVector<f64>>,
    mode: FeatureMode,
    round: usize,
    /// The shared sample batch (sampled mode only). All actions' features
    /// are derived from this one batch, which keeps their estimation errors
    /// correlated the way the union-bound analysis assumes.
    batch: Option<Arc<Vec<DVector<f64>>>>,
}

impl FeatureSet {
    pub fn features(&self) -> &[DVector<f64>] {
        &self.features
    }

    pub fn feature(&self, action: ActionId) -> &DVector<f64> {
        &self.features[action]
    }

    pub fn num_actions(&self) -> usize {
        self.features.len()
    }

    pub fn mode(&self) -> FeatureMode {
        self.mode
    }

    pub fn round(&self) -> usize {
        self.round
    }

    pub fn batch(&self) -> Option<&Arc<Vec<DVector<f64>>>> {
        self.batch.as_ref()
    }
}

fn check_feature_norm(feature: &DVector<f64>) -> Result<()> {
    let norm = feature.norm();
    if !norm.is_finite() {
        return Err(BanditError::NonFinite("feature"));
    }
    if norm > 1.0 + NORM_TOL {
        return Err(BanditError::NormViolation {
            norm,
            bound: 1.0 + NORM_TOL,
        });
    }
    Ok(())
}

/// Build the per-round feature set for all `map.num_actions()` actions.
///
/// In sampled mode one batch of `l` contexts is drawn and reused across all
/// actions. Every produced feature is checked against the unit-norm bound.
pub fn build_feature_set(
    map: &dyn FeatureMap,
    mu: &ContextDistribution,
    mode: FeatureMode,
    round: usize,
    rng: &mut Stream,
) -> Result<FeatureSet> {
    let n = map.num_actions();
    if n == 0 {
        return Err(BanditError::Empty("action set"));
    }
    let (features, batch) = match mode {
        FeatureMode::Expected => {
            let features = match map.expected_set(mu) {
                Some(fs) => fs,
                None => (0..n)
                    .map(|x| expected_feature(map, x, mu))
                    .collect::<Result<Vec<_>>>()?,
            };
            (features, None)
        }
        FeatureMode::Sampled { l } => {
            let batch = Arc::new(mu.sample_batch(l, rng)?);
            let features = if uniform_batch(&batch) {
                (0..n).map(|x| map.eval(x, batch[0].as_slice())).collect()
            } else {
                match map.sampled_set(&batch) {
                    Some(fs) => fs,
                    None => (0..n)
                        .map(|x| sampled_feature(map, x, &batch))
                        .collect::<Result<Vec<_>>>()?,
                }
            };
            (features, Some(batch))
        }
    };
    for f in &features {
        check_feature_norm(f)?;
    }
    Ok(FeatureSet {
        features,
        mode,
        round,
        batch,
    })
}

/// Largest feature norm over a probe set of contexts; used to validate maps
/// at construction time.
pub fn probe_max_norm(map: &dyn FeatureMap, contexts: &[DVector<f64>]) -> f64 {
    let mut buf = DVector::zeros(map.dim());
    let mut max = 0.0f64;
    for x in 0..map.num_actions() {
        for c in contexts {
            map.eval_into(x, c.as_slice(), buf.as_mut_slice());
            max = max.max(buf.norm());
        }
    }
    max
}

/// Quadratic interaction map: for action vector `x` and context `c` in `R^m`,
/// the feature is `(x_1^2..x_m^2, c_1^2..c_m^2, x_1 c_1..x_m c_m) / scale`,
/// so `d = 3m`. With parameter `(1,..,1, 1,..,1, -2,..,-2)` the reward is the
/// squared distance `sum_i (x_i - c_i)^2` (up to the scale factors).
///
/// The map declares moment rules for every distribution variant: each feature
/// block depends only on `E[c]` and `E[c^2]`, both of which the distributions
/// expose exactly.
#[derive(Debug, Clone)]
pub struct QuadraticMap {
    actions: Vec<DVector<f64>>,
    context_dim: usize,
    inv_scale: f64,
}

impl QuadraticMap {
    /// Unscaled map (`scale = 1`).
    pub fn new(actions: Vec<DVector<f64>>) -> Result<Self> {
        Self::with_scale(actions, 1.0)
    }

    /// Map whose outputs are divided by `scale > 0`.
    pub fn with_scale(actions: Vec<DVector<f64>>, scale: f64) -> Result<Self> {
        if actions.is_empty() {
            return Err(BanditError::Empty("action set"));
        }
        if !(scale.is_finite() && scale > 0.0) {
            return Err(BanditError::invalid("scale", "must be finite and positive"));
        }
        let m = actions[0].len();
        if actions.iter().any(|a| a.len() != m || a.iter().any(|v| !v.is_finite())) {
            return Err(BanditError::invalid(
                "actions",
                "action vectors must be finite and share one dimension",
            ));
        }
        Ok(QuadraticMap {
            actions,
            context_dim: m,
            inv_scale: 1.0 / scale,
        })
    }

    pub fn context_dim(&self) -> usize {
        self.context_dim
    }

    pub fn action_vector(&self, action: ActionId) -> &DVector<f64> {
        &self.actions[action]
    }

    /// Supremum of the unscaled feature norm over `|x_i| <= action_bound`,
    /// `|c_i| <= context_bound`. Useful for choosing a scale that makes the
    /// unit-norm bound hold everywhere, not just on probes.
    pub fn norm_sup(m: usize, action_bound: f64, context_bound: f64) -> f64 {
        let a2 = action_bound * action_bound;
        let c2 = context_bound * context_bound;
        ((m as f64) * (a2 * a2 + c2 * c2 + a2 * c2)).sqrt()
    }

    fn fill(&self, x: &DVector<f64>, mean_c: &[f64], mean_c2: &[f64], out: &mut [f64]) {
        let m = self.context_dim;
        for i in 0..m {
            out[i] = x[i] * x[i] * self.inv_scale;
            out[m + i] = mean_c2[i] * self.inv_scale;
            out[2 * m + i] = x[i] * mean_c[i] * self.inv_scale;
        }
    }

    fn batch_moments(&self, samples: &[DVector<f64>]) -> (Vec<f64>, Vec<f64>) {
        let m = self.context_dim;
        let inv_l = 1.0 / samples.len() as f64;
        let mut mean_c = vec![0.0; m];
        let mut mean_c2 = vec![0.0; m];
        for s in samples {
            for i in 0..m {
                mean_c[i] += s[i];
                mean_c2[i] += s[i] * s[i];
            }
        }
        for i in 0..m {
            mean_c[i] *= inv_l;
            mean_c2[i] *= inv_l;
        }
        (mean_c, mean_c2)
    }
}

impl FeatureMap for QuadraticMap {
    fn dim(&self) -> usize {
        3 * self.context_dim
    }

    fn num_actions(&self) -> usize {
        self.actions.len()
    }

    fn eval_into(&self, action: ActionId, context: &[f64], out: &mut [f64]) {
        let m = self.context_dim;
        debug_assert_eq!(context.len(), m);
        let x = &self.actions[action];
        for i in 0..m {
            out[i] = x[i] * x[i] * self.inv_scale;
            out[m + i] = context[i] * context[i] * self.inv_scale;
            out[2 * m + i] = x[i] * context[i] * self.inv_scale;
        }
    }

    fn expected(&self, action: ActionId, mu: &ContextDistribution) -> Option<DVector<f64>> {
        let mean = mu.coordinate_mean();
        let m2 = mu.coordinate_second_moment();
        let mut out = DVector::zeros(self.dim());
        self.fill(
            &self.actions[action],
            mean.as_slice(),
            m2.as_slice(),
            out.as_mut_slice(),
        );
        Some(out)
    }

    fn sampled(&self, action: ActionId, samples: &[DVector<f64>]) -> Option<DVector<f64>> {
        // Batch moments; the assembled feature equals the mean of the
        // per-sample features because every block is linear in (c, c^2).
        let (mean_c, mean_c2) = self.batch_moments(samples);
        let mut out = DVector::zeros(self.dim());
        self.fill(&self.actions[action], &mean_c, &mean_c2, out.as_mut_slice());
        Some(out)
    }

    fn expected_set(&self, mu: &ContextDistribution) -> Option<Vec<DVector<f64>>> {
        let mean = mu.coordinate_mean();
        let m2 = mu.coordinate_second_moment();
        Some(
            (0..self.num_actions())
                .map(|x| {
                    let mut out = DVector::zeros(self.dim());
                    self.fill(&self.actions[x], mean.as_slice(), m2.as_slice(), out.as_mut_slice());
                    out
                })
                .collect(),
        )
    }

    fn sampled_set(&self, samples: &[DVector<f64>]) -> Option<Vec<DVector<f64>>> {
        let (mean_c, mean_c2) = self.batch_moments(samples);
        Some(
            (0..self.num_actions())
                .map(|x| {
                    let mut out = DVector::zeros(self.dim());
                    self.fill(&self.actions[x], &mean_c, &mean_c2, out.as_mut_slice());
                    out
                })
                .collect(),
        )
    }
}

/// Two-action map over a binary scalar context used by the linear-regret
/// demonstration: action 0 earns the context value, action 1 its complement.
/// Features are `(c, 1-c)` and `(1-c, c)`, so with parameter `(1, 0)` the
/// rewards are `c` and `1-c` and every feature on `{0,1}` has unit norm.
#[derive(Debug, Clone, Default)]
pub struct BinaryContrastMap;

impl FeatureMap for BinaryContrastMap {
    fn dim(&self) -> usize {
        2
    }

    fn num_actions(&self) -> usize {
        2
    }

    fn eval_into(&self, action: ActionId, context: &[f64], out: &mut [f64]) {
        let c = context[0];
        match action {
            0 => {
                out[0] = c;
                out[1] = 1.0 - c;
            }
            _ => {
                out[0] = 1.0 - c;
                out[1] = c;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;
    use approx::assert_abs_diff_eq;

    fn v(s: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(s)
    }

    /// Test-only map: phi depends on the action through a fixed unit vector
    /// and on the context through a bounded nonlinearity.
    struct TanhMap {
        dirs: Vec<DVector<f64>>,
    }

    impl FeatureMap for TanhMap {
        fn dim(&self) -> usize {
            self.dirs[0].len()
        }
        fn num_actions(&self) -> usize {
            self.dirs.len()
        }
        fn eval_into(&self, action: ActionId, context: &[f64], out: &mut [f64]) {
            let g = (context.iter().sum::<f64>()).tanh();
            for (o, d) in out.iter_mut().zip(self.dirs[action].iter()) {
                *o = d * g;
            }
        }
    }

    fn tanh_map() -> TanhMap {
        TanhMap {
            dirs: vec![v(&[1.0, 0.0]), v(&[0.6, 0.8])],
        }
    }

    #[test]
    fn dirac_expectation_is_point_evaluation() {
        let map = tanh_map();
        let mu = ContextDistribution::dirac(v(&[0.4, 0.1]));
        let e = expected_feature(&map, 1, &mu).unwrap();
        assert_eq!(e, map.eval(1, &[0.4, 0.1]));
    }

    #[test]
    fn empirical_expectation_is_weighted_average() {
        let map = tanh_map();
        let c1 = v(&[0.5, 0.0]);
        let c2 = v(&[-1.0, 0.3]);
        let mu =
            ContextDistribution::empirical(vec![c1.clone(), c2.clone()], vec![0.5, 0.5]).unwrap();
        let e = expected_feature(&map, 0, &mu).unwrap();
        let manual = (map.eval(0, c1.as_slice()) + map.eval(0, c2.as_slice())) * 0.5;
        assert_abs_diff_eq!(e, manual, epsilon = 1e-15);
    }

    #[test]
    fn gaussian_expectation_needs_a_rule() {
        let map = tanh_map();
        let mu =
            ContextDistribution::diagonal_gaussian(v(&[0.0, 0.0]), v(&[1.0, 1.0])).unwrap();
        assert!(matches!(
            expected_feature(&map, 0, &mu),
            Err(BanditError::UnsupportedExpectation)
        ));
    }

    #[test]
    fn quadratic_gaussian_moments() {
        // Unit-variance Gaussian: the c^2 block is m_i^2 + 1 and the cross
        // block is x_i * m_i.
        let actions = vec![v(&[1.0, -2.0])];
        let map = QuadraticMap::new(actions).unwrap();
        let mean = v(&[0.5, -1.0]);
        let mu = ContextDistribution::diagonal_gaussian(mean, v(&[1.0, 1.0])).unwrap();
        let e = expected_feature(&map, 0, &mu).unwrap();
        assert_abs_diff_eq!(
            e,
            v(&[1.0, 4.0, 1.25, 2.0, 0.5, 2.0]),
            epsilon = 1e-15
        );
    }

    #[test]
    fn quadratic_moment_rule_matches_weighted_sum_for_empirical() {
        let actions = vec![v(&[0.3, 1.1]), v(&[-0.7, 0.2])];
        let map = QuadraticMap::new(actions).unwrap();
        let mu = ContextDistribution::empirical(
            vec![v(&[0.2, -0.4]), v(&[1.0, 0.5]), v(&[-0.3, 0.9])],
            vec![0.2, 0.5, 0.3],
        )
        .unwrap();
        for x in 0..2 {
            let rule = map.expected(x, &mu).unwrap();
            // Generic weighted-sum route, bypassing the override.
            let mut acc = DVector::zeros(map.dim());
            if let Some(support) = mu.weighted_support() {
                for (w, p) in support {
                    acc.axpy(w, &map.eval(x, p.as_slice()), 1.0);
                }
            }
            assert_abs_diff_eq!(rule, acc, epsilon = 1e-14);
        }
    }

    #[test]
    fn sampled_feature_of_single_and_duplicate_samples() {
        let map = tanh_map();
        let c = v(&[0.4, 0.1]);
        let one = sampled_feature(&map, 0, &[c.clone()]).unwrap();
        assert_eq!(one, map.eval(0, c.as_slice()));
        // Identical batches reduce to the point evaluation exactly, for any
        // batch size (including sizes where a summed mean would round).
        for l in [2usize, 3, 7] {
            let batch: Vec<_> = (0..l).map(|_| c.clone()).collect();
            assert_eq!(sampled_feature(&map, 0, &batch).unwrap(), one);
        }
        assert!(matches!(
            sampled_feature(&map, 0, &[]),
            Err(BanditError::Empty(_))
        ));
    }

    #[test]
    fn sampled_features_concentrate_at_hoeffding_rate() {
        // Repeated batches: per-component deviations exceed
        // sqrt(2 ln(2/delta) / L) in at most ~delta of cases.
        let map = tanh_map();
        let mu = ContextDistribution::diagonal_gaussian(v(&[0.0, 0.0]), v(&[1.0, 1.0])).unwrap();
        // Expected feature via a huge-sample reference batch.
        let mut rng = substream(9, 0, 0, "ref");
        let reference = sampled_feature(
            &map,
            1,
            &mu.sample_batch(200_000, &mut rng).unwrap(),
        )
        .unwrap();
        let delta = 0.05f64;
        let reps = 200;
        let mut last_rate = f64::INFINITY;
        for (i, l) in [10usize, 100, 1000].into_iter().enumerate() {
            let bound = (2.0 * (2.0 / delta).ln() / l as f64).sqrt();
            let mut violations = 0usize;
            let mut total = 0usize;
            let mut mean_dev = 0.0;
            for rep in 0..reps {
                let mut rng = substream(9, rep as u64, l as u64, "hoeffding");
                let batch = mu.sample_batch(l, &mut rng).unwrap();
                let f = sampled_feature(&map, 1, &batch).unwrap();
                for j in 0..f.len() {
                    let dev = (f[j] - reference[j]).abs();
                    mean_dev += dev;
                    total += 1;
                    if dev > bound {
                        violations += 1;
                    }
                }
            }
            let rate = violations as f64 / total as f64;
            assert!(rate <= 1.5 * delta, "L={l}: violation rate {rate}");
            let mean_dev = mean_dev / total as f64;
            if i > 0 {
                assert!(mean_dev < last_rate, "deviation must shrink with L");
            }
            last_rate = mean_dev;
        }
    }

    #[test]
    fn feature_set_shares_one_batch_and_rederives_bit_exactly() {
        let map = tanh_map();
        let mu = ContextDistribution::diagonal_gaussian(v(&[0.1, 0.2]), v(&[0.5, 0.5])).unwrap();
        let mut rng = substream(11, 0, 5, "psi");
        let fs = build_feature_set(&map, &mu, FeatureMode::Sampled { l: 7 }, 5, &mut rng).unwrap();
        let batch = fs.batch().unwrap().clone();
        assert_eq!(batch.len(), 7);
        for x in 0..map.num_actions() {
            let rederived = sampled_feature(&map, x, &batch).unwrap();
            assert_eq!(&rederived, fs.feature(x), "action {x} not bit-exact");
        }
    }

    #[test]
    fn quadratic_feature_set_rederives_bit_exactly() {
        let actions = vec![v(&[0.3, -0.2]), v(&[0.1, 0.4])];
        let map = QuadraticMap::with_scale(actions, 10.0).unwrap();
        let mu = ContextDistribution::diagonal_gaussian(v(&[0.0, 0.0]), v(&[1.0, 1.0])).unwrap();
        let mut rng = substream(12, 0, 1, "psi");
        let fs = build_feature_set(&map, &mu, FeatureMode::Sampled { l: 31 }, 1, &mut rng).unwrap();
        let batch = fs.batch().unwrap().clone();
        for x in 0..2 {
            let rederived = sampled_feature(&map, x, &batch).unwrap();
            assert_eq!(&rederived, fs.feature(x));
        }
    }

    #[test]
    fn dirac_feature_set_identical_in_both_modes() {
        let map = tanh_map();
        let mu = ContextDistribution::dirac(v(&[0.3, -0.7]));
        let mut r1 = substream(1, 0, 0, "a");
        for l in [1usize, 3, 4] {
            let mut r2 = substream(2, 0, l as u64, "b");
            let expected =
                build_feature_set(&map, &mu, FeatureMode::Expected, 0, &mut r1).unwrap();
            let sampled =
                build_feature_set(&map, &mu, FeatureMode::Sampled { l }, 0, &mut r2).unwrap();
            for x in 0..map.num_actions() {
                assert_eq!(expected.feature(x), sampled.feature(x));
                assert_eq!(expected.feature(x), &map.eval(x, &[0.3, -0.7]));
            }
        }
    }

    #[test]
    fn norm_violations_are_rejected() {
        struct Big;
        impl FeatureMap for Big {
            fn dim(&self) -> usize {
                1
            }
            fn num_actions(&self) -> usize {
                1
            }
            fn eval_into(&self, _a: ActionId, _c: &[f64], out: &mut [f64]) {
                out[0] = 2.0;
            }
        }
        let mu = ContextDistribution::dirac(v(&[0.0]));
        let mut rng = substream(0, 0, 0, "n");
        let err = build_feature_set(&Big, &mu, FeatureMode::Expected, 0, &mut rng).unwrap_err();
        assert!(matches!(err, BanditError::NormViolation { .. }));
    }

    #[test]
    fn convexity_keeps_features_in_the_support_hull() {
        // The expected feature of an empirical distribution is the weighted
        // average of the support features: certify hull membership by
        // projected-gradient onto the simplex, and check the norm bound.
        let map = tanh_map();
        let mut rng = substream(21, 0, 0, "hull");
        for _ in 0..20 {
            use rand::Rng;
            let k = 4;
            let points: Vec<DVector<f64>> = (0..k)
                .map(|_| v(&[rng.random::<f64>() * 2.0 - 1.0, rng.random::<f64>() * 2.0 - 1.0]))
                .collect();
            let raw: Vec<f64> = (0..k).map(|_| rng.random::<f64>() + 1e-3).collect();
            let sum: f64 = raw.iter().sum();
            let weights: Vec<f64> = raw.iter().map(|w| w / sum).collect();
            let mu = ContextDistribution::empirical(points.clone(), weights).unwrap();
            let target = expected_feature(&map, 1, &mu).unwrap();
            let verts: Vec<DVector<f64>> =
                points.iter().map(|p| map.eval(1, p.as_slice())).collect();

            // Norm bound: inside the hull implies norm <= max vertex norm.
            let max_norm = verts.iter().map(|p| p.norm()).fold(0.0, f64::max);
            assert!(target.norm() <= max_norm + 1e-12);

            // Simplex projected gradient on ||V a - target||^2.
            let mut alpha = vec![1.0 / k as f64; k];
            for _ in 0..500 {
                let mut resid = target.clone();
                for (a, p) in alpha.iter().zip(&verts) {
                    resid.axpy(-*a, p, 1.0);
                }
                let mut grad: Vec<f64> = verts.iter().map(|p| -2.0 * p.dot(&resid)).collect();
                let step = 0.25;
                for (a, g) in alpha.iter_mut().zip(&grad) {
                    *a -= step * g;
                }
                // Euclidean projection onto the simplex.
                grad.clone_from(&alpha);
                grad.sort_by(|a, b| b.partial_cmp(a).unwrap());
                let mut css = 0.0;
                let mut rho = 0;
                let mut theta = 0.0;
                for (j, &g) in grad.iter().enumerate() {
                    css += g;
                    let t = (css - 1.0) / (j + 1) as f64;
                    if g - t > 0.0 {
                        rho = j + 1;
                        theta = t;
                    }
                }
                let _ = rho;
                for a in alpha.iter_mut() {
                    *a = (*a - theta).max(0.0);
                }
            }
            let mut resid = target.clone();
            for (a, p) in alpha.iter().zip(&verts) {
                resid.axpy(-*a, p, 1.0);
            }
            assert!(
                resid.norm() <= 1e-6,
                "hull residual {} too large",
                resid.norm()
            );
        }
    }
}
