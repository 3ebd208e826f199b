//! Online regularized least squares with confidence radii.
//!
//! [`RidgeState`] maintains `V_t = lambda*I + sum phi phi^T`, its inverse
//! (rank-one updates with periodic dense re-factorization), the running
//! log-determinant ratio `ln det(V_t) - ln det(V_0)`, and the estimate
//! `theta_hat = V_t^{-1} sum phi y`. On top of it sit the self-normalized
//! confidence radius `beta_t` and its bias-inflated counterpart for
//! sample-averaged features.

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{BanditError, Result};
use crate::NORM_TOL;

/// Default number of rank-one updates between dense re-factorizations.
pub const DEFAULT_RESYNC_PERIOD: usize = 256;

/// Parameters of the confidence radius.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConfidenceConfig {
    /// Subgaussian variance proxy of the observation noise.
    pub rho: f64,
    /// Failure probability in (0, 1).
    pub delta: f64,
    /// Upper bound on the Euclidean norm of the true parameter.
    pub s_bound: f64,
}

impl ConfidenceConfig {
    pub fn new(rho: f64, delta: f64, s_bound: f64) -> Result<Self> {
        if !(rho >= 0.0) {
            return Err(BanditError::invalid("rho", "must be nonnegative"));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(BanditError::invalid("delta", "must lie in (0, 1)"));
        }
        if !(s_bound > 0.0) {
            return Err(BanditError::invalid("s_bound", "must be positive"));
        }
        Ok(ConfidenceConfig {
            rho,
            delta,
            s_bound,
        })
    }
}

/// Online ridge regression state.
#[derive(Debug, Clone)]
pub struct RidgeState {
    d: usize,
    lambda: f64,
    v: DMatrix<f64>,
    v_inv: DMatrix<f64>,
    logdet_ratio: f64,
    b: DVector<f64>,
    theta_hat: DVector<f64>,
    t: usize,
    updates_since_resync: usize,
    resync_period: usize,
}

impl RidgeState {
    /// Fresh state: `V = lambda*I`, `theta_hat = 0`.
    pub fn new(d: usize, lambda: f64) -> Result<Self> {
        Self::with_resync_period(d, lambda, DEFAULT_RESYNC_PERIOD)
    }

    /// Fresh state with a custom re-factorization period.
    pub fn with_resync_period(d: usize, lambda: f64, resync_period: usize) -> Result<Self> {
        if d == 0 {
            return Err(BanditError::invalid("d", "dimension must be >= 1"));
        }
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(BanditError::invalid("lambda", "must be finite and positive"));
        }
        if resync_period == 0 {
            return Err(BanditError::invalid("resync_period", "must be >= 1"));
        }
        Ok(RidgeState {
            d,
            lambda,
            v: DMatrix::identity(d, d) * lambda,
            v_inv: DMatrix::identity(d, d) / lambda,
            logdet_ratio: 0.0,
            b: DVector::zeros(d),
            theta_hat: DVector::zeros(d),
            t: 0,
            updates_since_resync: 0,
            resync_period,
        })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Number of updates applied so far.
    pub fn t(&self) -> usize {
        self.t
    }

    /// `ln det(V_t) - ln det(V_0)`; nondecreasing in `t`.
    pub fn logdet_ratio(&self) -> f64 {
        self.logdet_ratio
    }

    pub fn theta_hat(&self) -> &DVector<f64> {
        &self.theta_hat
    }

    pub fn v(&self) -> &DMatrix<f64> {
        &self.v
    }

    pub fn v_inv(&self) -> &DMatrix<f64> {
        &self.v_inv
    }

    /// Predicted mean reward for a feature vector.
    pub fn predict(&self, phi: &DVector<f64>) -> Result<f64> {
        self.check_dim(phi)?;
        Ok(self.theta_hat.dot(phi))
    }

    /// Ellipsoid width `||phi||_{V^{-1}} = sqrt(phi^T V^{-1} phi)`.
    pub fn width(&self, phi: &DVector<f64>) -> Result<f64> {
        self.check_dim(phi)?;
        let q = self.quad_form_inv(phi);
        Ok(q.max(0.0).sqrt())
    }

    /// `V_t`-norm of the estimation error against a reference parameter:
    /// `||theta - theta_hat||_{V_t}`.
    pub fn estimation_error(&self, theta: &DVector<f64>) -> Result<f64> {
        self.check_dim(theta)?;
        let diff = theta - &self.theta_hat;
        Ok((&self.v * &diff).dot(&diff).max(0.0).sqrt())
    }

    /// Rank-one update with `(phi, y)`.
    ///
    /// `V <- V + phi phi^T` (inverse via Sherman-Morrison), the
    /// log-determinant ratio grows by `ln(1 + ||phi||^2_{V^{-1}})`,
    /// `b <- b + y phi`, and `theta_hat` is recomputed. Every
    /// `resync_period` updates the inverse and log-determinant are rebuilt
    /// from a dense factorization to stop drift.
    pub fn update(&mut self, phi: &DVector<f64>, y: f64) -> Result<()> {
        self.check_dim(phi)?;
        if phi.iter().any(|x| !x.is_finite()) || !y.is_finite() {
            return Err(BanditError::NonFinite("ridge update"));
        }
        let norm = phi.norm();
        if norm > 1.0 + NORM_TOL {
            return Err(BanditError::NormViolation {
                norm,
                bound: 1.0 + NORM_TOL,
            });
        }

        let w = &self.v_inv * phi; // V^{-1} phi
        let denom = 1.0 + phi.dot(&w);
        self.logdet_ratio += denom.ln();
        self.v.ger(1.0, phi, phi, 1.0); // V += phi phi^T
        self.v_inv.ger(-1.0 / denom, &w, &w, 1.0);
        // Keep the inverse symmetric against rounding drift.
        symmetrize(&mut self.v_inv);
        self.b.axpy(y, phi, 1.0);
        self.theta_hat = &self.v_inv * &self.b;
        self.t += 1;
        self.updates_since_resync += 1;
        if self.updates_since_resync >= self.resync_period {
            self.resync()?;
        }
        Ok(())
    }

    /// Rebuild the inverse and log-determinant from a dense factorization.
    pub fn resync(&mut self) -> Result<()> {
        let chol = Cholesky::new(self.v.clone()).ok_or_else(|| {
            BanditError::Numerical("ridge matrix lost positive definiteness".into())
        })?;
        let logdet_v: f64 = chol.l().diagonal().iter().map(|x| 2.0 * x.ln()).sum();
        self.logdet_ratio = logdet_v - self.d as f64 * self.lambda.ln();
        self.v_inv = chol.inverse();
        symmetrize(&mut self.v_inv);
        self.theta_hat = &self.v_inv * &self.b;
        self.updates_since_resync = 0;
        Ok(())
    }

    /// Self-normalized confidence radius
    /// `rho * sqrt(logdet_ratio + 2 ln(1/delta)) + sqrt(lambda) * s_bound`.
    ///
    /// Degenerate inputs (`delta -> 0`, `rho -> inf`) produce `+inf`, which a
    /// UCB rule treats as "explore the widest action"; they are not rejected.
    pub fn beta(&self, cfg: &ConfidenceConfig) -> f64 {
        cfg.rho * (self.logdet_ratio + 2.0 * (1.0 / cfg.delta).ln()).sqrt()
            + self.lambda.sqrt() * cfg.s_bound
    }

    /// Confidence radius for sample-averaged features, which inflates the
    /// noise proxy to `sqrt(4 + sigma^2)` and adds the accumulated feature
    /// bias term (union bound over `action_count` actions and the horizon):
    ///
    /// `sqrt((4 + sigma^2) (logdet_ratio + 2 ln(2/delta)))
    ///  + sqrt(8 ln(T) ln(pi^2 T^2 |X| / (3 delta))) + lambda`.
    pub fn beta_sampled(
        &self,
        sigma: f64,
        delta: f64,
        action_count: usize,
        horizon: usize,
    ) -> f64 {
        let t = horizon as f64;
        let x = action_count as f64;
        let first =
            ((4.0 + sigma * sigma) * (self.logdet_ratio + 2.0 * (2.0 / delta).ln())).sqrt();
        let second = (8.0
            * t.ln()
            * (std::f64::consts::PI.powi(2) * t * t * x / (3.0 * delta)).ln())
        .sqrt();
        first + second + self.lambda
    }

    /// Flat checkpoint of the full state.
    pub fn checkpoint(&self) -> RidgeCheckpoint {
        RidgeCheckpoint {
            d: self.d,
            lambda: self.lambda,
            v: self.v.as_slice().to_vec(),
            v_inv: self.v_inv.as_slice().to_vec(),
            logdet_ratio: self.logdet_ratio,
            b: self.b.as_slice().to_vec(),
            theta_hat: self.theta_hat.as_slice().to_vec(),
            t: self.t,
            updates_since_resync: self.updates_since_resync,
            resync_period: self.resync_period,
        }
    }

    /// Restore a state from a checkpoint.
    pub fn from_checkpoint(cp: &RidgeCheckpoint) -> Result<Self> {
        let d = cp.d;
        if d == 0 || cp.v.len() != d * d || cp.v_inv.len() != d * d || cp.b.len() != d {
            return Err(BanditError::invalid("checkpoint", "inconsistent dimensions"));
        }
        let v = DMatrix::from_column_slice(d, d, &cp.v);
        let v_inv = DMatrix::from_column_slice(d, d, &cp.v_inv);
        let b = DVector::from_column_slice(&cp.b);
        let theta_hat = DVector::from_column_slice(&cp.theta_hat);
        Ok(RidgeState {
            d,
            lambda: cp.lambda,
            v,
            v_inv,
            logdet_ratio: cp.logdet_ratio,
            b,
            theta_hat,
            t: cp.t,
            updates_since_resync: cp.updates_since_resync,
            resync_period: cp.resync_period,
        })
    }

    fn quad_form_inv(&self, phi: &DVector<f64>) -> f64 {
        (&self.v_inv * phi).dot(phi)
    }

    fn check_dim(&self, phi: &DVector<f64>) -> Result<()> {
        if phi.len() != self.d {
            return Err(BanditError::DimensionMismatch {
                expected: self.d,
                got: phi.len(),
            });
        }
        Ok(())
    }
}

/// Flat serializable record of a [`RidgeState`]; matrices are stored
/// column-major as 64-bit floats.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RidgeCheckpoint {
    pub d: usize,
    pub lambda: f64,
    pub v: Vec<f64>,
    pub v_inv: Vec<f64>,
    pub logdet_ratio: f64,
    pub b: Vec<f64>,
    pub theta_hat: Vec<f64>,
    pub t: usize,
    pub updates_since_resync: usize,
    pub resync_period: usize,
}

/// Radius inflation caused by per-step observation biases: `sqrt(sum b_t^2)`.
///
/// This is the exact amount by which the self-normalized bound grows when
/// each observation carries an arbitrary bias, since
/// `||sum phi_s b_s||_{V^{-1}} <= ||b||_2` for any feature matrix.
pub fn bias_bound(biases: &[f64]) -> f64 {
    biases.iter().map(|b| b * b).sum::<f64>().sqrt()
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;
    use approx::assert_abs_diff_eq;
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn random_unit_ball(d: usize, rng: &mut crate::rng::Stream, radius: f64) -> DVector<f64> {
        let raw: DVector<f64> =
            DVector::from_fn(d, |_, _| StandardNormal.sample(rng));
        let u: f64 = rng.random();
        let r = radius * u.powf(1.0 / d as f64);
        let n = raw.norm();
        if n == 0.0 {
            DVector::zeros(d)
        } else {
            raw * (r / n)
        }
    }

    #[test]
    fn init_matches_closed_form() {
        let s = RidgeState::new(3, 1.0).unwrap();
        assert_eq!(s.v(), &DMatrix::identity(3, 3));
        assert_eq!(s.theta_hat(), &DVector::zeros(3));
        assert_eq!(s.logdet_ratio(), 0.0);

        let s = RidgeState::new(1, 2.0).unwrap();
        assert_eq!(s.v()[(0, 0)], 2.0);
        assert_eq!(s.v_inv()[(0, 0)], 0.5);
        assert_eq!(s.logdet_ratio(), 0.0);

        assert!(RidgeState::new(0, 1.0).is_err());
        assert!(RidgeState::new(3, 0.0).is_err());
        assert!(RidgeState::new(3, -1.0).is_err());
    }

    #[test]
    fn single_update_solves_normal_equation() {
        // (lambda + phi^2) theta = phi y  =>  theta = 2/2 = 1.
        let mut s = RidgeState::new(1, 1.0).unwrap();
        s.update(&DVector::from_row_slice(&[1.0]), 2.0).unwrap();
        assert_eq!(s.v()[(0, 0)], 2.0);
        assert_abs_diff_eq!(s.theta_hat()[0], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn zero_feature_update_is_a_no_op() {
        let mut s = RidgeState::new(2, 0.5).unwrap();
        s.update(&DVector::from_row_slice(&[0.4, 0.1]), 1.0).unwrap();
        let before = s.clone();
        s.update(&DVector::zeros(2), 7.0).unwrap();
        assert_eq!(s.v(), before.v());
        assert_eq!(s.theta_hat(), before.theta_hat());
        assert_eq!(s.logdet_ratio(), before.logdet_ratio());
        assert_eq!(s.t(), before.t() + 1);
    }

    #[test]
    fn update_rejects_bad_inputs() {
        let mut s = RidgeState::new(2, 1.0).unwrap();
        let too_big = DVector::from_row_slice(&[1.0, 1.0]);
        assert!(matches!(
            s.update(&too_big, 0.0),
            Err(BanditError::NormViolation { .. })
        ));
        let nan = DVector::from_row_slice(&[f64::NAN, 0.0]);
        assert!(matches!(
            s.update(&nan, 0.0),
            Err(BanditError::NonFinite(_))
        ));
        let wrong_dim = DVector::from_row_slice(&[0.1]);
        assert!(matches!(
            s.update(&wrong_dim, 0.0),
            Err(BanditError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn batch_solve_oracle_agrees_after_fifty_updates() {
        let d = 5;
        let lambda = 0.7;
        let mut s = RidgeState::new(d, lambda).unwrap();
        let mut rng = substream(5, 0, 0, "ridge-batch");
        let mut phis = Vec::new();
        let mut ys = Vec::new();
        for _ in 0..50 {
            let phi = random_unit_ball(d, &mut rng, 1.0);
            let y: f64 = StandardNormal.sample(&mut rng);
            s.update(&phi, y).unwrap();
            phis.push(phi);
            ys.push(y);
        }
        // One-shot dense solve of (lambda I + Phi^T Phi) theta = Phi^T y.
        let mut v = DMatrix::identity(d, d) * lambda;
        let mut b = DVector::zeros(d);
        for (phi, y) in phis.iter().zip(&ys) {
            v.ger(1.0, phi, phi, 1.0);
            b.axpy(*y, phi, 1.0);
        }
        let theta = v.clone().lu().solve(&b).unwrap();
        assert!((s.theta_hat() - &theta).norm() <= 1e-8);
    }

    #[test]
    fn width_closed_forms() {
        let mut s = RidgeState::new(3, 1.0).unwrap();
        let e1 = DVector::from_row_slice(&[1.0, 0.0, 0.0]);
        assert_abs_diff_eq!(s.width(&e1).unwrap(), 1.0, epsilon = 1e-15);
        assert_eq!(s.width(&DVector::zeros(3)).unwrap(), 0.0);
        s.update(&e1, 0.3).unwrap();
        assert_abs_diff_eq!(
            s.width(&e1).unwrap(),
            1.0 / 2.0f64.sqrt(),
            epsilon = 1e-12
        );
        assert!(s.width(&DVector::zeros(2)).is_err());
    }

    #[test]
    fn beta_closed_forms_and_monotonicity() {
        let s = RidgeState::new(4, 1.0).unwrap();
        let cfg = ConfidenceConfig::new(1.0, 0.1, 1.0).unwrap();
        assert_abs_diff_eq!(
            s.beta(&cfg),
            (2.0 * 10.0f64.ln()).sqrt() + 1.0,
            epsilon = 1e-12
        );

        // Noiseless case: beta is the prior term alone, at any t.
        let mut s = RidgeState::new(2, 4.0).unwrap();
        let zero_noise = ConfidenceConfig::new(0.0, 0.3, 1.5).unwrap();
        assert_eq!(s.beta(&zero_noise), 2.0 * 1.5);
        s.update(&DVector::from_row_slice(&[0.5, 0.1]), 1.0).unwrap();
        assert_eq!(s.beta(&zero_noise), 2.0 * 1.5);

        // beta is nondecreasing along any update sequence.
        let cfg = ConfidenceConfig::new(0.5, 0.05, 1.0).unwrap();
        let mut s = RidgeState::new(3, 1.0).unwrap();
        let mut rng = substream(6, 0, 0, "beta-mono");
        let mut last = s.beta(&cfg);
        for _ in 0..200 {
            let phi = random_unit_ball(3, &mut rng, 1.0);
            s.update(&phi, 0.0).unwrap();
            let now = s.beta(&cfg);
            assert!(now >= last - 1e-12);
            last = now;
        }
    }

    #[test]
    fn degenerate_confidence_parameters_yield_infinity() {
        let s = RidgeState::new(2, 1.0).unwrap();
        let tiny_delta = ConfidenceConfig {
            rho: 1.0,
            delta: 0.0,
            s_bound: 1.0,
        };
        assert!(s.beta(&tiny_delta).is_infinite());
        let huge_rho = ConfidenceConfig {
            rho: f64::INFINITY,
            delta: 0.5,
            s_bound: 1.0,
        };
        assert!(s.beta(&huge_rho).is_infinite());
        assert!(ConfidenceConfig::new(1.0, 0.0, 1.0).is_err());
        assert!(ConfidenceConfig::new(-1.0, 0.5, 1.0).is_err());
    }

    #[test]
    fn beta_sampled_closed_forms() {
        let s = RidgeState::new(2, 1.0).unwrap();
        // Horizon 1: the union-bound term vanishes (ln 1 = 0).
        let b = s.beta_sampled(0.3, 0.2, 5, 1);
        let expected = ((4.0 + 0.09) * (2.0 * (2.0f64 / 0.2).ln())).sqrt() + 1.0;
        assert_abs_diff_eq!(b, expected, epsilon = 1e-12);

        // sigma = 0, t = 0, delta = 0.5, lambda = 1, |X| = 1, T = 1.
        let b = s.beta_sampled(0.0, 0.5, 1, 1);
        assert_abs_diff_eq!(b, (8.0 * 4.0f64.ln()).sqrt() + 1.0, epsilon = 1e-12);

        // The radius dominates its first summand alone.
        let mut s = RidgeState::new(2, 1.0).unwrap();
        s.update(&DVector::from_row_slice(&[0.9, 0.1]), 1.0).unwrap();
        let sigma = 0.4;
        let delta = 0.1;
        let first =
            ((4.0 + sigma * sigma) * (s.logdet_ratio() + 2.0 * (2.0f64 / delta).ln())).sqrt();
        assert!(s.beta_sampled(sigma, delta, 10, 100) >= first);
    }

    #[test]
    fn bias_bound_examples() {
        assert_eq!(bias_bound(&[]), 0.0);
        assert_eq!(bias_bound(&[3.0, 4.0]), 5.0);
    }

    #[test]
    fn bias_inflation_bounds_weighted_feature_sums() {
        // ||sum phi_s b_s||_{V^{-1}} <= sqrt(sum b^2) with V = A A^T + lambda I,
        // checked against a dense eigendecomposition route.
        let mut rng = substream(7, 0, 0, "bias");
        for _ in 0..50 {
            let d = 2 + (rng.random::<u32>() % 5) as usize;
            let t = 1 + (rng.random::<u32>() % 12) as usize;
            let lambda = 0.1 + rng.random::<f64>() * 3.0;
            let phis: Vec<DVector<f64>> =
                (0..t).map(|_| random_unit_ball(d, &mut rng, 1.0)).collect();
            let biases: Vec<f64> = (0..t)
                .map(|_| rng.random::<f64>() * 2.0 - 1.0)
                .collect();
            let mut v = DMatrix::identity(d, d) * lambda;
            let mut m = DVector::zeros(d);
            for (phi, b) in phis.iter().zip(&biases) {
                v.ger(1.0, phi, phi, 1.0);
                m.axpy(*b, phi, 1.0);
            }
            let v_inv = v.clone().try_inverse().unwrap();
            let lhs = (&v_inv * &m).dot(&m).max(0.0).sqrt();
            assert!(
                lhs <= bias_bound(&biases) + 1e-10,
                "lhs {lhs} vs bound {}",
                bias_bound(&biases)
            );
        }
    }

    #[test]
    fn resync_keeps_inverse_and_logdet_consistent() {
        let d = 6;
        let mut s = RidgeState::with_resync_period(d, 0.5, 16).unwrap();
        let mut rng = substream(8, 0, 0, "resync");
        for _ in 0..100 {
            let phi = random_unit_ball(d, &mut rng, 1.0);
            let y: f64 = StandardNormal.sample(&mut rng);
            s.update(&phi, y).unwrap();
        }
        let dense_inv = s.v().clone().try_inverse().unwrap();
        assert!((s.v_inv() - &dense_inv).norm() <= 1e-6);
        let chol = Cholesky::new(s.v().clone()).unwrap();
        let logdet: f64 = chol.l().diagonal().iter().map(|x| 2.0 * x.ln()).sum();
        let expected = logdet - d as f64 * 0.5f64.ln();
        assert_abs_diff_eq!(s.logdet_ratio(), expected, epsilon = 1e-6);
        // theta_hat = V^{-1} b holds after every update.
        let theta = &dense_inv * &DVector::from_column_slice(s.checkpoint().b.as_slice());
        assert!((s.theta_hat() - &theta).norm() <= 1e-8);
    }

    #[test]
    fn checkpoint_roundtrip_is_lossless() {
        let mut s = RidgeState::new(3, 1.3).unwrap();
        let mut rng = substream(9, 0, 0, "ckpt");
        for _ in 0..10 {
            let phi = random_unit_ball(3, &mut rng, 1.0);
            s.update(&phi, rng.random::<f64>()).unwrap();
        }
        let json = serde_json::to_string(&s.checkpoint()).unwrap();
        let restored =
            RidgeState::from_checkpoint(&serde_json::from_str(&json).unwrap()).unwrap();
        assert_eq!(restored.v(), s.v());
        assert_eq!(restored.theta_hat(), s.theta_hat());
        assert_eq!(restored.logdet_ratio(), s.logdet_ratio());
        assert_eq!(restored.t(), s.t());
    }

    #[test]
    fn jensen_width_inequality() {
        // width(weighted mean) <= weighted mean of widths, for any state.
        let mut rng = substream(10, 0, 0, "jensen");
        let d = 4;
        let mut s = RidgeState::new(d, 0.8).unwrap();
        for _ in 0..30 {
            s.update(&random_unit_ball(d, &mut rng, 1.0), 0.0).unwrap();
        }
        for _ in 0..200 {
            let k = 2 + (rng.random::<u32>() % 4) as usize;
            let vs: Vec<DVector<f64>> =
                (0..k).map(|_| random_unit_ball(d, &mut rng, 1.0)).collect();
            let raw: Vec<f64> = (0..k).map(|_| rng.random::<f64>() + 1e-6).collect();
            let sum: f64 = raw.iter().sum();
            let ws: Vec<f64> = raw.iter().map(|w| w / sum).collect();
            let mut mean = DVector::zeros(d);
            let mut rhs = 0.0;
            for (v, w) in vs.iter().zip(&ws) {
                mean.axpy(*w, v, 1.0);
                rhs += w * s.width(v).unwrap();
            }
            assert!(s.width(&mean).unwrap() <= rhs + 1e-12);
        }
    }
}
