//! Kernelized UCB with context distributions.
//!
//! The reward function lives in an RKHS; with uncertain contexts the natural
//! regressor is built from *kernel mean embeddings* `E_{c~mu}[k((x,c), .)]`
//! (or their sample averages). Past rounds are represented by
//! [`EmbeddingHandle`]s; their pairwise inner products form the Gram matrix,
//! and the posterior mean/width come from solves against `K + lambda*I`.
//!
//! Two triangular factorizations are maintained incrementally, one row per
//! round: `K + lambda*I` for solves, and `I + K/(lambda*rho)` whose
//! log-determinant feeds the confidence radius. Both log-determinant
//! conventions are exposed in [`KernelDiagnostics`].

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::context::ContextDistribution;
use crate::error::{BanditError, Result};
use crate::features::{ActionId, FeatureMap};
use crate::policies::LSchedule;
use crate::rng::Stream;
use crate::NORM_TOL;

/// Symmetric positive-definite kernel over (action, context) pairs.
/// Actions enter by id; concrete kernels hold whatever per-action data they
/// need (feature maps, action vectors).
pub trait Kernel: Send + Sync {
    fn eval(&self, action_a: ActionId, ctx_a: &[f64], action_b: ActionId, ctx_b: &[f64]) -> f64;
}

/// Linear kernel induced by a feature map: `k = phi_a . phi_b`. With this
/// kernel the mean-embedding machinery reproduces the linear policy exactly.
pub struct FeatureDotKernel {
    map: Arc<dyn FeatureMap>,
}

impl FeatureDotKernel {
    pub fn new(map: Arc<dyn FeatureMap>) -> Self {
        FeatureDotKernel { map }
    }
}

impl Kernel for FeatureDotKernel {
    fn eval(&self, action_a: ActionId, ctx_a: &[f64], action_b: ActionId, ctx_b: &[f64]) -> f64 {
        self.map
            .eval(action_a, ctx_a)
            .dot(&self.map.eval(action_b, ctx_b))
    }
}

/// Gaussian RBF kernel over the concatenated (action vector, context) pair.
pub struct RbfKernel {
    actions: Vec<DVector<f64>>,
    inv_two_ls2: f64,
}

impl RbfKernel {
    pub fn new(actions: Vec<DVector<f64>>, lengthscale: f64) -> Result<Self> {
        if actions.is_empty() {
            return Err(BanditError::Empty("action set"));
        }
        if !(lengthscale.is_finite() && lengthscale > 0.0) {
            return Err(BanditError::invalid(
                "lengthscale",
                "must be finite and positive",
            ));
        }
        Ok(RbfKernel {
            actions,
            inv_two_ls2: 1.0 / (2.0 * lengthscale * lengthscale),
        })
    }
}

impl Kernel for RbfKernel {
    fn eval(&self, action_a: ActionId, ctx_a: &[f64], action_b: ActionId, ctx_b: &[f64]) -> f64 {
        let xa = &self.actions[action_a];
        let xb = &self.actions[action_b];
        let mut sq = 0.0;
        for i in 0..xa.len() {
            let d = xa[i] - xb[i];
            sq += d * d;
        }
        for (a, b) in ctx_a.iter().zip(ctx_b) {
            let d = a - b;
            sq += d * d;
        }
        (-sq * self.inv_two_ls2).exp()
    }
}

/// Validate a kernel on probe points: symmetry, bounded diagonal, and
/// positive semidefiniteness of the probe Gram matrix.
pub fn validate_kernel(kernel: &dyn Kernel, probes: &[(ActionId, DVector<f64>)]) -> Result<()> {
    let n = probes.len();
    if n == 0 {
        return Err(BanditError::Empty("probe set"));
    }
    let mut gram = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            gram[(i, j)] = kernel.eval(
                probes[i].0,
                probes[i].1.as_slice(),
                probes[j].0,
                probes[j].1.as_slice(),
            );
        }
    }
    for i in 0..n {
        if gram[(i, i)] > 1.0 + NORM_TOL {
            return Err(BanditError::NormViolation {
                norm: gram[(i, i)],
                bound: 1.0 + NORM_TOL,
            });
        }
        for j in 0..i {
            if (gram[(i, j)] - gram[(j, i)]).abs() > 1e-12 {
                return Err(BanditError::Numerical(format!(
                    "kernel asymmetry {:.3e} at probe pair ({i}, {j})",
                    (gram[(i, j)] - gram[(j, i)]).abs()
                )));
            }
        }
    }
    let eig = gram.symmetric_eigenvalues();
    if let Some(min) = eig.iter().cloned().reduce(f64::min) {
        if min < -1e-8 {
            return Err(BanditError::Numerical(format!(
                "probe Gram matrix has eigenvalue {min:.3e}"
            )));
        }
    }
    Ok(())
}

/// A (possibly virtual) RKHS element: the mean embedding of one action under
/// one context distribution, either exact or represented by a stored sample
/// batch. Batches are shared immutably so the Gram matrix stays consistent.
#[derive(Debug, Clone)]
pub enum EmbeddingHandle {
    Exact {
        action: ActionId,
        mu: ContextDistribution,
    },
    Sampled {
        action: ActionId,
        batch: Arc<Vec<DVector<f64>>>,
    },
}

impl EmbeddingHandle {
    pub fn exact(action: ActionId, mu: ContextDistribution) -> Self {
        EmbeddingHandle::Exact { action, mu }
    }

    pub fn sampled(action: ActionId, batch: Arc<Vec<DVector<f64>>>) -> Self {
        EmbeddingHandle::Sampled { action, batch }
    }

    pub fn action(&self) -> ActionId {
        match self {
            EmbeddingHandle::Exact { action, .. } => *action,
            EmbeddingHandle::Sampled { action, .. } => *action,
        }
    }

    /// Weighted finite support, or an error for exact handles over
    /// distributions without one (those must use sampled embeddings).
    fn support(&self) -> Result<Vec<(f64, &DVector<f64>)>> {
        match self {
            EmbeddingHandle::Exact { mu, .. } => mu
                .weighted_support()
                .ok_or(BanditError::UnsupportedExpectation),
            EmbeddingHandle::Sampled { batch, .. } => {
                if batch.is_empty() {
                    return Err(BanditError::Empty("sample batch"));
                }
                let w = 1.0 / batch.len() as f64;
                Ok(batch.iter().map(|c| (w, c)).collect())
            }
        }
    }
}

/// Inner product of two mean embeddings: the double expectation of the
/// kernel, evaluated as a weighted double sum over the handles' supports
/// (exact finite-support distributions) or sample batches.
pub fn embedding_inner(
    a: &EmbeddingHandle,
    b: &EmbeddingHandle,
    kernel: &dyn Kernel,
) -> Result<f64> {
    let sa = a.support()?;
    let sb = b.support()?;
    let (xa, xb) = (a.action(), b.action());
    let mut acc = 0.0;
    for (wa, ca) in &sa {
        let mut row = 0.0;
        for (wb, cb) in &sb {
            row += wb * kernel.eval(xa, ca.as_slice(), xb, cb.as_slice());
        }
        acc += wa * row;
    }
    Ok(acc)
}

/// Diagnostic log-determinants of the regularized Gram matrix under both
/// scaling conventions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelDiagnostics {
    /// `ln det(I + K/(lambda*rho))` — the convention inside the confidence
    /// radius and the kernelized regret bound.
    pub logdet_lambda_rho: f64,
    /// `ln det(I + K/lambda)` — the convention matching the linear
    /// log-determinant ratio.
    pub logdet_lambda: f64,
}

/// Growing lower-triangular factor with one-row extension.
#[derive(Debug, Clone)]
struct GrowingCholesky {
    l: DMatrix<f64>,
    n: usize,
    logdet: f64, // ln det of the factored matrix
}

impl GrowingCholesky {
    fn new(capacity: usize) -> Self {
        GrowingCholesky {
            l: DMatrix::zeros(capacity.max(4), capacity.max(4)),
            n: 0,
            logdet: 0.0,
        }
    }

    fn ensure_capacity(&mut self, n: usize) {
        if n > self.l.nrows() {
            let new_cap = (self.l.nrows() * 2).max(n);
            let mut grown = DMatrix::zeros(new_cap, new_cap);
            grown
                .view_mut((0, 0), (self.n, self.n))
                .copy_from(&self.l.view((0, 0), (self.n, self.n)));
            self.l = grown;
        }
    }

    /// Append a row: `row` holds the off-diagonal entries of the new matrix
    /// row (length n), `diag` the new diagonal entry. Returns the jitter that
    /// had to be added to `diag`, escalating from 1e-10 by factors of 10 up
    /// to 1e-6 before giving up.
    fn append(&mut self, row: &[f64], diag: f64) -> Result<f64> {
        let n = self.n;
        self.ensure_capacity(n + 1);
        // Forward-solve L w = row.
        let mut w = vec![0.0; n];
        for i in 0..n {
            let mut s = row[i];
            for j in 0..i {
                s -= self.l[(i, j)] * w[j];
            }
            w[i] = s / self.l[(i, i)];
        }
        let wsq: f64 = w.iter().map(|x| x * x).sum();
        let mut jitter = 0.0;
        let mut pivot_sq = diag - wsq;
        while pivot_sq <= 0.0 {
            jitter = if jitter == 0.0 { 1e-10 } else { jitter * 10.0 };
            if jitter > 1e-6 {
                return Err(BanditError::Numerical(format!(
                    "Gram matrix lost positive definiteness (pivot^2 = {:.3e})",
                    diag - wsq
                )));
            }
            pivot_sq = diag + jitter - wsq;
        }
        let pivot = pivot_sq.sqrt();
        for (j, wj) in w.iter().enumerate() {
            self.l[(n, j)] = *wj;
        }
        self.l[(n, n)] = pivot;
        self.n += 1;
        self.logdet += 2.0 * pivot.ln();
        Ok(jitter)
    }

    /// Solve `L z = rhs` (forward substitution).
    fn forward(&self, rhs: &DVector<f64>) -> DVector<f64> {
        let n = self.n;
        let mut z = DVector::zeros(n);
        for i in 0..n {
            let mut s = rhs[i];
            for j in 0..i {
                s -= self.l[(i, j)] * z[j];
            }
            z[i] = s / self.l[(i, i)];
        }
        z
    }

    /// Solve `L L^T x = rhs`.
    fn solve(&self, rhs: &DVector<f64>) -> DVector<f64> {
        let n = self.n;
        let mut x = self.forward(rhs);
        for i in (0..n).rev() {
            let mut s = x[i];
            for j in (i + 1)..n {
                s -= self.l[(j, i)] * x[j];
            }
            x[i] = s / self.l[(i, i)];
        }
        x
    }

    fn factor(&self) -> DMatrix<f64> {
        DMatrix::from(self.l.view((0, 0), (self.n, self.n)))
    }
}

/// State of the kernelized estimator after `t` rounds.
pub struct KernelState {
    kernel: Arc<dyn Kernel>,
    lambda: f64,
    rho: f64,
    handles: Vec<EmbeddingHandle>,
    gram: DMatrix<f64>,
    y: Vec<f64>,
    chol_solve: GrowingCholesky,  // factor of K + lambda*I
    chol_radius: GrowingCholesky, // factor of I + K/(lambda*rho)
    alpha: Option<DVector<f64>>,  // cached (K + lambda*I)^{-1} y
}

impl KernelState {
    /// `rho` is the noise variance proxy entering the radius scaling; it must
    /// be positive because it divides the Gram matrix in the radius term.
    pub fn new(kernel: Arc<dyn Kernel>, lambda: f64, rho: f64) -> Result<Self> {
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(BanditError::invalid("lambda", "must be finite and positive"));
        }
        if !(rho.is_finite() && rho > 0.0) {
            return Err(BanditError::invalid("rho", "must be finite and positive"));
        }
        Ok(KernelState {
            kernel,
            lambda,
            rho,
            handles: Vec::new(),
            gram: DMatrix::zeros(0, 0),
            y: Vec::new(),
            chol_solve: GrowingCholesky::new(16),
            chol_radius: GrowingCholesky::new(16),
            alpha: None,
        })
    }

    pub fn len(&self) -> usize {
        self.handles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.handles.is_empty()
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn kernel(&self) -> &Arc<dyn Kernel> {
        &self.kernel
    }

    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    pub fn diagnostics(&self) -> KernelDiagnostics {
        // ln det(I + K/lambda) = ln det(K + lambda I) - t ln lambda.
        let t = self.len() as f64;
        KernelDiagnostics {
            logdet_lambda_rho: self.chol_radius.logdet,
            logdet_lambda: self.chol_solve.logdet - t * self.lambda.ln(),
        }
    }

    /// Lower-triangular factor of `K + lambda*I` (for oracle comparisons).
    pub fn solve_factor(&self) -> DMatrix<f64> {
        self.chol_solve.factor()
    }

    fn k_vector(&self, query: &EmbeddingHandle) -> Result<DVector<f64>> {
        let mut k = DVector::zeros(self.len());
        for (s, h) in self.handles.iter().enumerate() {
            k[s] = embedding_inner(h, query, self.kernel.as_ref())?;
        }
        Ok(k)
    }

    fn alpha(&mut self) -> &DVector<f64> {
        if self.alpha.is_none() {
            let y = DVector::from_column_slice(&self.y);
            self.alpha = Some(self.chol_solve.solve(&y));
        }
        self.alpha.as_ref().unwrap()
    }

    /// Posterior mean at a query embedding:
    /// `k_t(q)^T (K + lambda I)^{-1} y` (0 before any data).
    pub fn posterior_mean(&mut self, query: &EmbeddingHandle) -> Result<f64> {
        if self.is_empty() {
            return Ok(0.0);
        }
        let k = self.k_vector(query)?;
        let alpha = self.alpha();
        Ok(k.dot(alpha))
    }

    /// Posterior width at a query embedding:
    /// `sqrt((<q,q> - k_t(q)^T (K + lambda I)^{-1} k_t(q)) / lambda)`.
    ///
    /// Round-off can push the variance slightly negative; values in
    /// `[-1e-8, 0)` clamp to zero, anything lower is a numerical error.
    pub fn posterior_width(&self, query: &EmbeddingHandle) -> Result<f64> {
        let qq = embedding_inner(query, query, self.kernel.as_ref())?;
        let reduction = if self.is_empty() {
            0.0
        } else {
            let k = self.k_vector(query)?;
            let z = self.chol_solve.forward(&k);
            z.dot(&z)
        };
        let var = (qq - reduction) / self.lambda;
        if var < -1e-8 {
            return Err(BanditError::Numerical(format!(
                "posterior variance {var:.3e} below tolerance"
            )));
        }
        Ok(var.max(0.0).sqrt())
    }

    /// Confidence radius
    /// `rho * (sqrt(ln det(I + K/(lambda rho)) + 2 ln(1/delta)) + sqrt(lambda) * f_norm_bound)`.
    pub fn beta(&self, delta: f64, f_norm_bound: f64) -> f64 {
        let logdet = self.chol_radius.logdet;
        self.rho * ((logdet + 2.0 * (1.0 / delta).ln()).sqrt() + self.lambda.sqrt() * f_norm_bound)
    }

    /// Append one observed round. The Gram matrix grows by one row/column of
    /// embedding inner products and both factors extend incrementally.
    pub fn update(&mut self, handle: EmbeddingHandle, reward: f64) -> Result<()> {
        if !reward.is_finite() {
            return Err(BanditError::NonFinite("kernel reward"));
        }
        let t = self.len();
        let mut row = vec![0.0; t];
        for (s, h) in self.handles.iter().enumerate() {
            row[s] = embedding_inner(h, &handle, self.kernel.as_ref())?;
        }
        let mut diag = embedding_inner(&handle, &handle, self.kernel.as_ref())?;

        // Extend the solve factor of K + lambda I; any jitter it needs is
        // folded back into the stored Gram diagonal so factor and matrix
        // stay consistent.
        let jitter = self.chol_solve.append(&row, diag + self.lambda)?;
        diag += jitter;

        let scale = 1.0 / (self.lambda * self.rho);
        let scaled_row: Vec<f64> = row.iter().map(|v| v * scale).collect();
        self.chol_radius.append(&scaled_row, 1.0 + diag * scale)?;

        let mut grown = DMatrix::zeros(t + 1, t + 1);
        grown.view_mut((0, 0), (t, t)).copy_from(&self.gram);
        for (s, v) in row.iter().enumerate() {
            grown[(t, s)] = *v;
            grown[(s, t)] = *v;
        }
        grown[(t, t)] = diag;
        self.gram = grown;
        self.handles.push(handle);
        self.y.push(reward);
        self.alpha = None;
        Ok(())
    }
}

/// Confidence choice for the kernelized policy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelConfidence {
    /// Radius from the RKHS self-normalized bound with the hidden-context
    /// noise proxy `rho = sqrt(4 + sigma^2)`.
    Theoretical { delta: f64, f_norm_bound: f64 },
    /// Constant coefficient.
    Tuned(f64),
}

/// Configuration of the kernelized UCB policy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelPolicyConfig {
    /// Exact mean embeddings (finite-support distributions only) or sampled
    /// ones with the given batch schedule.
    pub sampled: Option<LSchedule>,
    pub confidence: KernelConfidence,
    pub lambda: f64,
    /// Observation noise level; enters the radius through
    /// `rho = sqrt(4 + sigma^2)`.
    pub sigma: f64,
}

impl KernelPolicyConfig {
    pub fn rho(&self) -> f64 {
        (4.0 + self.sigma * self.sigma).sqrt()
    }
}

/// Kernelized UCB over per-round embedding sets.
pub struct KernelPolicy {
    state: KernelState,
    config: KernelPolicyConfig,
    round: usize,
    pending: Option<EmbeddingHandle>,
}

impl KernelPolicy {
    pub fn new(kernel: Arc<dyn Kernel>, config: KernelPolicyConfig) -> Result<Self> {
        let state = KernelState::new(kernel, config.lambda, config.rho())?;
        Ok(KernelPolicy {
            state,
            config,
            round: 0,
            pending: None,
        })
    }

    pub fn state(&self) -> &KernelState {
        &self.state
    }

    pub fn state_mut(&mut self) -> &mut KernelState {
        &mut self.state
    }

    pub fn config(&self) -> &KernelPolicyConfig {
        &self.config
    }

    pub fn round(&self) -> usize {
        self.round
    }

    /// Build this round's embeddings, one per action, honoring the sampling
    /// mode. In sampled mode one batch is drawn and shared by all actions.
    pub fn round_embeddings(
        &self,
        n_actions: usize,
        mu: &ContextDistribution,
        rng: &mut Stream,
    ) -> Result<Vec<EmbeddingHandle>> {
        if n_actions == 0 {
            return Err(BanditError::Empty("action set"));
        }
        match self.config.sampled {
            None => Ok((0..n_actions)
                .map(|x| EmbeddingHandle::exact(x, mu.clone()))
                .collect()),
            Some(schedule) => {
                let l = schedule.at(self.round + 1);
                let batch = Arc::new(mu.sample_batch(l, rng)?);
                Ok((0..n_actions)
                    .map(|x| EmbeddingHandle::sampled(x, batch.clone()))
                    .collect())
            }
        }
    }

    pub fn beta(&self) -> f64 {
        match self.config.confidence {
            KernelConfidence::Tuned(b) => b,
            KernelConfidence::Theoretical {
                delta,
                f_norm_bound,
            } => self.state.beta(delta, f_norm_bound),
        }
    }

    /// UCB argmax over this round's embeddings (lowest index on ties).
    pub fn select(&mut self, embeddings: &[EmbeddingHandle]) -> Result<Selection> {
        if self.pending.is_some() {
            return Err(BanditError::SelectionPending);
        }
        if embeddings.is_empty() {
            return Err(BanditError::Empty("action set"));
        }
        let beta = self.beta();
        let mut best: Option<(usize, f64, f64)> = None;
        for (i, e) in embeddings.iter().enumerate() {
            let mean = self.state.posterior_mean(e)?;
            let width = self.state.posterior_width(e)?;
            let ucb = mean + beta * width;
            match best {
                Some((_, best_ucb, _)) if ucb <= best_ucb => {}
                _ => best = Some((i, ucb, width)),
            }
        }
        let (idx, ucb, width) = best.unwrap();
        self.pending = Some(embeddings[idx].clone());
        Ok(Selection {
            action: embeddings[idx].action(),
            ucb,
            width,
            beta,
        })
    }

    /// Complete the round: append the chosen embedding with its reward.
    pub fn observe(&mut self, reward: f64) -> Result<()> {
        let handle = self.pending.take().ok_or(BanditError::NoPendingSelection)?;
        self.state.update(handle, reward)?;
        self.round += 1;
        Ok(())
    }
}

pub use crate::policies::Selection;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::QuadraticMap;
    use crate::rng::substream;
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    fn v(s: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(s)
    }

    /// Unit-diagonal kernel over scalar "index" contexts: cos of the gap.
    struct ToyKernel;
    impl Kernel for ToyKernel {
        fn eval(&self, a: ActionId, ca: &[f64], b: ActionId, cb: &[f64]) -> f64 {
            let da = a as f64 + ca[0];
            let db = b as f64 + cb[0];
            ((da - db) * 0.7).cos()
        }
    }

    fn quad_map(scale: f64) -> Arc<QuadraticMap> {
        let actions = vec![v(&[0.5, -0.3]), v(&[-0.2, 0.4]), v(&[0.1, 0.1])];
        Arc::new(QuadraticMap::with_scale(actions, scale).unwrap())
    }

    #[test]
    fn dirac_inner_is_a_single_kernel_evaluation() {
        let k = ToyKernel;
        let a = EmbeddingHandle::exact(0, ContextDistribution::dirac(v(&[0.2])));
        let b = EmbeddingHandle::exact(1, ContextDistribution::dirac(v(&[-0.1])));
        let got = embedding_inner(&a, &b, &k).unwrap();
        assert_eq!(got, k.eval(0, &[0.2], 1, &[-0.1]));

        let sa = EmbeddingHandle::sampled(0, Arc::new(vec![v(&[0.2])]));
        let sb = EmbeddingHandle::sampled(1, Arc::new(vec![v(&[-0.1])]));
        assert_eq!(embedding_inner(&sa, &sb, &k).unwrap(), got);
    }

    #[test]
    fn gaussian_exact_embeddings_are_unsupported() {
        let k = ToyKernel;
        let mu = ContextDistribution::diagonal_gaussian(v(&[0.0]), v(&[1.0])).unwrap();
        let a = EmbeddingHandle::exact(0, mu);
        let b = EmbeddingHandle::exact(1, ContextDistribution::dirac(v(&[0.0])));
        assert!(matches!(
            embedding_inner(&a, &b, &k),
            Err(BanditError::UnsupportedExpectation)
        ));
    }

    #[test]
    fn linear_kernel_inner_matches_feature_dot_products() {
        let map = quad_map(4.0);
        let kernel = FeatureDotKernel::new(map.clone());
        let mu_a =
            ContextDistribution::empirical(vec![v(&[0.3, 0.1]), v(&[-0.5, 0.2])], vec![0.4, 0.6])
                .unwrap();
        let mu_b = ContextDistribution::dirac(v(&[0.1, -0.2]));
        let ea = EmbeddingHandle::exact(0, mu_a.clone());
        let eb = EmbeddingHandle::exact(2, mu_b.clone());
        let inner = embedding_inner(&ea, &eb, &kernel).unwrap();
        let psi_a = crate::features::expected_feature(map.as_ref(), 0, &mu_a).unwrap();
        let psi_b = crate::features::expected_feature(map.as_ref(), 2, &mu_b).unwrap();
        assert_abs_diff_eq!(inner, psi_a.dot(&psi_b), epsilon = 1e-10);

        // Sampled handles against sampled features.
        let mut rng = substream(13, 0, 0, "kin");
        let batch_a = Arc::new(mu_a.sample_batch(9, &mut rng).unwrap());
        let batch_b = Arc::new(mu_b.sample_batch(4, &mut rng).unwrap());
        let sa = EmbeddingHandle::sampled(1, batch_a.clone());
        let sb = EmbeddingHandle::sampled(2, batch_b.clone());
        let inner = embedding_inner(&sa, &sb, &kernel).unwrap();
        let psi_a = crate::features::sampled_feature(map.as_ref(), 1, &batch_a).unwrap();
        let psi_b = crate::features::sampled_feature(map.as_ref(), 2, &batch_b).unwrap();
        assert_abs_diff_eq!(inner, psi_a.dot(&psi_b), epsilon = 1e-10);
    }

    #[test]
    fn symmetry_of_embedding_inner() {
        let k = ToyKernel;
        let mut rng = substream(14, 0, 0, "sym");
        for _ in 0..20 {
            let pts_a: Vec<DVector<f64>> = (0..3).map(|_| v(&[rng.random::<f64>()])).collect();
            let pts_b: Vec<DVector<f64>> = (0..2).map(|_| v(&[rng.random::<f64>()])).collect();
            let a = EmbeddingHandle::sampled(0, Arc::new(pts_a));
            let b =
                EmbeddingHandle::exact(1, ContextDistribution::empirical_uniform(pts_b).unwrap());
            let ab = embedding_inner(&a, &b, &k).unwrap();
            let ba = embedding_inner(&b, &a, &k).unwrap();
            assert!((ab - ba).abs() <= 1e-12);
        }
    }

    #[test]
    fn empty_state_mean_and_width() {
        let mut state = KernelState::new(Arc::new(ToyKernel), 1.0, 2.0).unwrap();
        let q = EmbeddingHandle::exact(0, ContextDistribution::dirac(v(&[0.0])));
        assert_eq!(state.posterior_mean(&q).unwrap(), 0.0);
        // k(z,z) = 1, lambda = 1 -> prior width 1.
        assert_abs_diff_eq!(state.posterior_width(&q).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn scalar_posterior_solve() {
        // One Dirac observation with k(z,z)=1, y=2, lambda=1: mean at the
        // same point is 2/(1+1) = 1.
        let mut state = KernelState::new(Arc::new(ToyKernel), 1.0, 2.0).unwrap();
        let h = EmbeddingHandle::exact(0, ContextDistribution::dirac(v(&[0.0])));
        state.update(h.clone(), 2.0).unwrap();
        assert_abs_diff_eq!(state.posterior_mean(&h).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn orthogonal_query_keeps_prior_width() {
        struct Indicator;
        impl Kernel for Indicator {
            fn eval(&self, a: ActionId, _ca: &[f64], b: ActionId, _cb: &[f64]) -> f64 {
                if a == b {
                    1.0
                } else {
                    0.0
                }
            }
        }
        let mut state = KernelState::new(Arc::new(Indicator), 0.5, 2.0).unwrap();
        let d0 = ContextDistribution::dirac(v(&[0.0]));
        state.update(EmbeddingHandle::exact(0, d0.clone()), 1.0).unwrap();
        state.update(EmbeddingHandle::exact(1, d0.clone()), -1.0).unwrap();
        let q = EmbeddingHandle::exact(2, d0);
        assert_abs_diff_eq!(
            state.posterior_width(&q).unwrap(),
            (1.0f64 / 0.5).sqrt(),
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(state.posterior_mean(&q).unwrap(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn beta_closed_forms() {
        let state = KernelState::new(Arc::new(ToyKernel), 0.25, 1.5).unwrap();
        // t = 0: det = 1.
        let delta = 0.1;
        let b = state.beta(delta, 1.0);
        assert_abs_diff_eq!(b, 1.5 * ((2.0 * 10.0f64.ln()).sqrt() + 0.5), epsilon = 1e-12);
        // delta -> 1 at t = 0: only the norm term survives.
        assert_abs_diff_eq!(state.beta(1.0, 2.0), 1.5 * 0.5 * 2.0, epsilon = 1e-12);

        // One round with K = [1], lambda = rho = 1, delta = 0.1, B = 1:
        // beta = sqrt(2*(0.5 ln 2 + ln 10)) + 1.
        struct UnitKernel;
        impl Kernel for UnitKernel {
            fn eval(&self, _a: ActionId, _ca: &[f64], _b: ActionId, _cb: &[f64]) -> f64 {
                1.0
            }
        }
        let mut state = KernelState::new(Arc::new(UnitKernel), 1.0, 1.0).unwrap();
        state
            .update(
                EmbeddingHandle::exact(0, ContextDistribution::dirac(v(&[0.0]))),
                0.0,
            )
            .unwrap();
        let expected = (2.0 * (0.5 * 2.0f64.ln() + 10.0f64.ln())).sqrt() + 1.0;
        assert_abs_diff_eq!(state.beta(0.1, 1.0), expected, epsilon = 1e-12);
    }

    #[test]
    fn interpolation_in_the_small_regularization_limit() {
        let mut state = KernelState::new(Arc::new(ToyKernel), 1e-8, 2.0).unwrap();
        let h = EmbeddingHandle::exact(0, ContextDistribution::dirac(v(&[0.3])));
        state.update(h.clone(), 0.73).unwrap();
        assert_abs_diff_eq!(state.posterior_mean(&h).unwrap(), 0.73, epsilon = 1e-6);
    }

    #[test]
    fn duplicate_handles_stay_solvable() {
        let mut state = KernelState::new(Arc::new(ToyKernel), 0.1, 2.0).unwrap();
        let h = EmbeddingHandle::exact(1, ContextDistribution::dirac(v(&[0.5])));
        state.update(h.clone(), 1.0).unwrap();
        state.update(h.clone(), 1.2).unwrap();
        state.update(h.clone(), 0.8).unwrap();
        let mean = state.posterior_mean(&h).unwrap();
        assert!(mean.is_finite());
        // Average of rewards shrunk toward zero by lambda: close to 1.
        assert!((mean - 1.0).abs() < 0.1);
    }

    #[test]
    fn incremental_factor_matches_dense_cholesky() {
        let mut rng = substream(15, 0, 0, "chol");
        let mut state = KernelState::new(Arc::new(ToyKernel), 0.7, 2.0).unwrap();
        for i in 0..30 {
            let n_pts = 1 + (i % 4);
            let pts: Vec<DVector<f64>> = (0..n_pts)
                .map(|_| v(&[rng.random::<f64>() * 2.0 - 1.0]))
                .collect();
            let h = EmbeddingHandle::sampled(i % 3, Arc::new(pts));
            state.update(h, rng.random::<f64>()).unwrap();
        }
        let t = state.len();
        let dense =
            nalgebra::Cholesky::new(state.gram().clone() + DMatrix::identity(t, t) * 0.7).unwrap();
        let diff = (state.solve_factor() - dense.l()).norm();
        assert!(diff <= 1e-8, "factor mismatch {diff}");

        // Diagnostics agree with dense log-determinants.
        let diag = state.diagnostics();
        let dense_logdet: f64 = dense.l().diagonal().iter().map(|x| 2.0 * x.ln()).sum();
        assert_abs_diff_eq!(
            diag.logdet_lambda,
            dense_logdet - t as f64 * 0.7f64.ln(),
            epsilon = 1e-8
        );
        let scaled = nalgebra::Cholesky::new(
            DMatrix::identity(t, t) + state.gram().clone() / (0.7 * 2.0),
        )
        .unwrap();
        let dense_scaled: f64 = scaled.l().diagonal().iter().map(|x| 2.0 * x.ln()).sum();
        assert_abs_diff_eq!(diag.logdet_lambda_rho, dense_scaled, epsilon = 1e-8);
    }

    #[test]
    fn width_is_nonincreasing_in_data() {
        let mut rng = substream(16, 0, 0, "mono");
        let mut state = KernelState::new(Arc::new(ToyKernel), 1.0, 2.0).unwrap();
        let q = EmbeddingHandle::exact(0, ContextDistribution::dirac(v(&[0.25])));
        let mut last = state.posterior_width(&q).unwrap();
        for i in 0..40 {
            let h = EmbeddingHandle::exact(
                i % 3,
                ContextDistribution::dirac(v(&[rng.random::<f64>()])),
            );
            state.update(h, rng.random::<f64>()).unwrap();
            let now = state.posterior_width(&q).unwrap();
            assert!(now <= last + 1e-8, "width grew: {last} -> {now}");
            last = now;
        }
    }

    #[test]
    fn representer_consistency() {
        // posterior_mean equals sum_s alpha_s <k_s, q> with
        // alpha = (K + lambda I)^{-1} y, via an independent dense solve.
        let mut rng = substream(17, 0, 0, "repr");
        let mut state = KernelState::new(Arc::new(ToyKernel), 0.4, 2.0).unwrap();
        let mut handles = Vec::new();
        let mut rewards = Vec::new();
        for i in 0..12 {
            let h = EmbeddingHandle::exact(
                i % 3,
                ContextDistribution::dirac(v(&[rng.random::<f64>()])),
            );
            let r = rng.random::<f64>() * 2.0 - 1.0;
            state.update(h.clone(), r).unwrap();
            handles.push(h);
            rewards.push(r);
        }
        let t = handles.len();
        let reg = state.gram().clone() + DMatrix::identity(t, t) * 0.4;
        let alpha = reg.lu().solve(&DVector::from_column_slice(&rewards)).unwrap();
        let q = EmbeddingHandle::exact(1, ContextDistribution::dirac(v(&[0.77])));
        let mut manual = 0.0;
        for (s, h) in handles.iter().enumerate() {
            manual += alpha[s] * embedding_inner(h, &q, &ToyKernel).unwrap();
        }
        assert_abs_diff_eq!(state.posterior_mean(&q).unwrap(), manual, epsilon = 1e-9);
    }

    #[test]
    fn policy_protocol_and_tie_break() {
        let mut policy = KernelPolicy::new(
            Arc::new(ToyKernel),
            KernelPolicyConfig {
                sampled: None,
                confidence: KernelConfidence::Tuned(1.0),
                lambda: 1.0,
                sigma: 0.0,
            },
        )
        .unwrap();
        let mu = ContextDistribution::dirac(v(&[0.0]));
        let mut rng = substream(18, 0, 1, "emb");
        let embeddings = policy.round_embeddings(2, &mu, &mut rng).unwrap();
        assert!(matches!(
            policy.observe(0.0),
            Err(BanditError::NoPendingSelection)
        ));
        // Fresh state: every UCB value is beta * prior width with equal
        // diagonal, so the tie breaks to action 0.
        let sel = policy.select(&embeddings).unwrap();
        assert_eq!(sel.action, 0);
        assert!(matches!(
            policy.select(&embeddings),
            Err(BanditError::SelectionPending)
        ));
        policy.observe(0.5).unwrap();
    }

    #[test]
    fn kernel_validation_catches_bad_kernels() {
        struct Asym;
        impl Kernel for Asym {
            fn eval(&self, a: ActionId, _c: &[f64], b: ActionId, _cb: &[f64]) -> f64 {
                if a == b {
                    1.0
                } else if a < b {
                    0.5
                } else {
                    0.25
                }
            }
        }
        let probes: Vec<(ActionId, DVector<f64>)> =
            (0..3).map(|i| (i, v(&[i as f64 * 0.1]))).collect();
        assert!(validate_kernel(&Asym, &probes).is_err());

        let map = quad_map(4.0);
        let k = FeatureDotKernel::new(map);
        let probes2: Vec<(ActionId, DVector<f64>)> = (0..3)
            .map(|i| (i, v(&[i as f64 * 0.1, -0.2 * i as f64])))
            .collect();
        assert!(validate_kernel(&k, &probes2).is_ok());

        struct BigDiag;
        impl Kernel for BigDiag {
            fn eval(&self, _a: ActionId, _c: &[f64], _b: ActionId, _cb: &[f64]) -> f64 {
                2.0
            }
        }
        assert!(matches!(
            validate_kernel(&BigDiag, &probes),
            Err(BanditError::NormViolation { .. })
        ));
    }

    #[test]
    fn rbf_kernel_shape() {
        let k = RbfKernel::new(vec![v(&[0.0]), v(&[1.0])], 0.5).unwrap();
        assert_abs_diff_eq!(k.eval(0, &[0.0], 0, &[0.0]), 1.0, epsilon = 1e-15);
        let far = k.eval(0, &[0.0], 1, &[2.0]);
        let near = k.eval(0, &[0.0], 1, &[0.0]);
        assert!(far < near && near < 1.0);
    }
}
