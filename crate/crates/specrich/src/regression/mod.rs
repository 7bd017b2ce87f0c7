//! Kernel and ensemble regressors over extracted features.
//!
//! The composite kernel is a sum of three switchable terms: a biased dot
//! product `t_i·t_j + sigma^2`, a Gaussian RBF `exp(-||t_i - t_j||^2 /
//! (2 l^2))`, and a white-noise term that contributes `delta` whenever the
//! two inputs are elementwise equal (training duplicates therefore pick it
//! up off the diagonal, which is intentional and surfaced by dataset
//! validation). Kernel ridge regression and Gaussian process regression
//! share the kernel; the random forest lives in [`forest`].

pub(crate) mod forest;

pub use forest::{fit_rfr, RfrModel};

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

/// Composite kernel parameters. `sigma` enters the dot term squared,
/// `length_scale` is the RBF bandwidth, `white_noise` the equality bonus.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelConfig {
    pub sigma: f64,
    pub length_scale: f64,
    pub white_noise: f64,
    pub dot_enabled: bool,
    pub rbf_enabled: bool,
    pub white_enabled: bool,
}

impl Default for KernelConfig {
    /// The values found best for richness data by grid search.
    fn default() -> Self {
        KernelConfig {
            sigma: 1e3,
            length_scale: 1e3,
            white_noise: 10.0,
            dot_enabled: true,
            rbf_enabled: true,
            white_enabled: true,
        }
    }
}

impl KernelConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.sigma.is_finite() || self.sigma < 0.0 {
            return Err(Error::Config(format!(
                "kernel sigma must be finite and non-negative, got {}",
                self.sigma
            )));
        }
        if !self.length_scale.is_finite() || self.length_scale <= 0.0 {
            return Err(Error::Config(format!(
                "kernel length scale must be positive, got {}",
                self.length_scale
            )));
        }
        if !self.white_noise.is_finite() || self.white_noise < 0.0 {
            return Err(Error::Config(format!(
                "kernel white noise must be finite and non-negative, got {}",
                self.white_noise
            )));
        }
        if !self.dot_enabled && !self.rbf_enabled && !self.white_enabled {
            return Err(Error::Config("all kernel terms disabled".into()));
        }
        Ok(())
    }

    pub fn with_grid_point(&self, sigma: f64, length_scale: f64, white_noise: f64) -> Self {
        KernelConfig { sigma, length_scale, white_noise, ..self.clone() }
    }
}

/// Evaluates the composite kernel for two feature vectors.
pub fn kernel_eval(cfg: &KernelConfig, a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut k = 0.0;
    if cfg.dot_enabled {
        let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
        k += dot + cfg.sigma * cfg.sigma;
    }
    if cfg.rbf_enabled {
        let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
        k += (-d2 / (2.0 * cfg.length_scale * cfg.length_scale)).exp();
    }
    if cfg.white_enabled && a == b {
        k += cfg.white_noise;
    }
    k
}

fn row_slice(t: &DMatrix<f64>, i: usize, buf: &mut Vec<f64>) {
    buf.clear();
    buf.extend(t.row(i).iter().copied());
}

/// Symmetric Gram matrix over the rows of `t`.
pub fn build_gram(cfg: &KernelConfig, t: &DMatrix<f64>) -> DMatrix<f64> {
    let n = t.nrows();
    let mut gram = DMatrix::zeros(n, n);
    let mut a = Vec::new();
    let mut b = Vec::new();
    for i in 0..n {
        row_slice(t, i, &mut a);
        for j in i..n {
            row_slice(t, j, &mut b);
            let k = kernel_eval(cfg, &a, &b);
            gram[(i, j)] = k;
            gram[(j, i)] = k;
        }
    }
    gram
}

/// Cross-kernel matrix between training rows (rows of output) and query rows
/// (columns of output). The white term fires on exact elementwise equality,
/// so querying a training point reproduces that point's Gram column.
fn cross_gram(cfg: &KernelConfig, train: &DMatrix<f64>, query: &DMatrix<f64>) -> DMatrix<f64> {
    let n = train.nrows();
    let q = query.nrows();
    let mut out = DMatrix::zeros(n, q);
    let mut a = Vec::new();
    let mut b = Vec::new();
    for i in 0..n {
        row_slice(train, i, &mut a);
        for j in 0..q {
            row_slice(query, j, &mut b);
            out[(i, j)] = kernel_eval(cfg, &a, &b);
        }
    }
    out
}

/// Escalating-jitter Cholesky: retries with `1e-10`, `1e-8`, `1e-6` times the
/// mean diagonal added before giving up.
pub(crate) fn cholesky_with_jitter(m: DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    let n = m.nrows();
    if let Some(chol) = Cholesky::new(m.clone()) {
        return Ok(chol);
    }
    let mean_diag = m.diagonal().iter().map(|v| v.abs()).sum::<f64>() / n.max(1) as f64;
    let base = if mean_diag > 0.0 { mean_diag } else { 1.0 };
    for exp in [1e-10, 1e-8, 1e-6] {
        let mut jittered = m.clone();
        for i in 0..n {
            jittered[(i, i)] += exp * base;
        }
        if let Some(chol) = Cholesky::new(jittered) {
            return Ok(chol);
        }
    }
    Err(Error::NotPositiveDefinite)
}

fn check_training_shapes(t: &DMatrix<f64>, y: &DVector<f64>) -> Result<()> {
    if t.nrows() < 2 {
        return Err(Error::Config(format!(
            "need at least 2 training rows, got {}",
            t.nrows()
        )));
    }
    if t.nrows() != y.len() {
        return Err(Error::ShapeMismatch(format!(
            "features have {} rows but targets have {}",
            t.nrows(),
            y.len()
        )));
    }
    if t.iter().any(|v| !v.is_finite()) || y.iter().any(|v| !v.is_finite()) {
        return Err(Error::ShapeMismatch("training data contains non-finite values".into()));
    }
    Ok(())
}

fn check_query_shape(expected: usize, t_new: &DMatrix<f64>) -> Result<()> {
    if t_new.ncols() != expected {
        return Err(Error::DimensionMismatch { expected, got: t_new.ncols() });
    }
    Ok(())
}

/// Kernel ridge regression model: `alpha = (K + lambda I)^-1 (y - y_mean)`.
#[derive(Debug, Clone, PartialEq)]
pub struct KrrModel {
    pub(crate) kernel: KernelConfig,
    pub(crate) lambda: f64,
    pub(crate) alpha: DVector<f64>,
    pub(crate) train_t: DMatrix<f64>,
    pub(crate) y_offset: f64,
}

impl KrrModel {
    pub fn kernel(&self) -> &KernelConfig {
        &self.kernel
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn alpha(&self) -> &DVector<f64> {
        &self.alpha
    }

    pub fn train_t(&self) -> &DMatrix<f64> {
        &self.train_t
    }

    pub fn y_offset(&self) -> f64 {
        self.y_offset
    }

    pub(crate) fn from_parts(
        kernel: KernelConfig,
        lambda: f64,
        alpha: DVector<f64>,
        train_t: DMatrix<f64>,
        y_offset: f64,
    ) -> Self {
        KrrModel { kernel, lambda, alpha, train_t, y_offset }
    }

    /// Predictive mean `k(T_new)' alpha + y_mean` for each query row.
    pub fn predict(&self, t_new: &DMatrix<f64>) -> Result<DVector<f64>> {
        check_query_shape(self.train_t.ncols(), t_new)?;
        let cross = cross_gram(&self.kernel, &self.train_t, t_new);
        let mut out = cross.transpose() * &self.alpha;
        out.add_scalar_mut(self.y_offset);
        Ok(out)
    }
}

/// Fits kernel ridge regression. Targets are centered before the solve and
/// the mean is restored at prediction time, so the dual solution is against
/// `y - mean(y)`.
pub fn fit_krr(
    t: &DMatrix<f64>,
    y: &DVector<f64>,
    cfg: &KernelConfig,
    lambda: f64,
) -> Result<KrrModel> {
    cfg.validate()?;
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(Error::Config(format!("ridge lambda must be positive, got {lambda}")));
    }
    check_training_shapes(t, y)?;
    let n = t.nrows();
    let y_offset = y.mean();
    let yc = DVector::from_fn(n, |i, _| y[i] - y_offset);
    let mut m = build_gram(cfg, t);
    for i in 0..n {
        m[(i, i)] += lambda;
    }
    let alpha = cholesky_with_jitter(m)?.solve(&yc);
    Ok(KrrModel {
        kernel: cfg.clone(),
        lambda,
        alpha,
        train_t: t.clone(),
        y_offset,
    })
}

/// Gaussian process regression model with zero mean function on centered
/// targets: `alpha = (K + epsilon^2 I)^-1 (y - y_mean)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GprModel {
    pub(crate) kernel: KernelConfig,
    pub(crate) epsilon: f64,
    pub(crate) alpha: DVector<f64>,
    pub(crate) train_t: DMatrix<f64>,
    pub(crate) y_offset: f64,
    pub(crate) log_marginal_likelihood: f64,
}

impl GprModel {
    pub fn kernel(&self) -> &KernelConfig {
        &self.kernel
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn alpha(&self) -> &DVector<f64> {
        &self.alpha
    }

    pub fn train_t(&self) -> &DMatrix<f64> {
        &self.train_t
    }

    pub fn y_offset(&self) -> f64 {
        self.y_offset
    }

    pub fn log_marginal_likelihood(&self) -> f64 {
        self.log_marginal_likelihood
    }

    /// The prior mean function, identically zero on centered targets.
    pub fn mean_fn_value(&self) -> f64 {
        0.0
    }

    pub(crate) fn from_parts(
        kernel: KernelConfig,
        epsilon: f64,
        alpha: DVector<f64>,
        train_t: DMatrix<f64>,
        y_offset: f64,
        log_marginal_likelihood: f64,
    ) -> Self {
        GprModel { kernel, epsilon, alpha, train_t, y_offset, log_marginal_likelihood }
    }

    /// Posterior mean `k(T_new)' alpha + y_mean` for each query row.
    pub fn predict(&self, t_new: &DMatrix<f64>) -> Result<DVector<f64>> {
        check_query_shape(self.train_t.ncols(), t_new)?;
        let cross = cross_gram(&self.kernel, &self.train_t, t_new);
        let mut out = cross.transpose() * &self.alpha;
        out.add_scalar_mut(self.y_offset);
        Ok(out)
    }
}

/// Log marginal likelihood of centered targets under the kernel, with its
/// gradient in log-parameter space.
///
/// The gradient components follow the order `[ln sigma, ln length_scale,
/// ln white_noise]`, restricted to enabled terms whose parameter is
/// strictly positive (a zero-valued parameter contributes nothing and is
/// held fixed).
pub fn log_marginal_likelihood(
    cfg: &KernelConfig,
    epsilon: f64,
    t: &DMatrix<f64>,
    yc: &DVector<f64>,
) -> Result<(f64, Vec<f64>)> {
    let n = t.nrows();
    let mut m = build_gram(cfg, t);
    for i in 0..n {
        m[(i, i)] += epsilon * epsilon;
    }
    let chol = cholesky_with_jitter(m)?;
    let alpha = chol.solve(yc);
    let log_det: f64 = chol.l().diagonal().iter().map(|v| 2.0 * v.ln()).sum();
    let lml = -0.5 * yc.dot(&alpha)
        - 0.5 * log_det
        - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();

    // A = alpha alpha' - M^-1; dL/du = 0.5 tr(A dM/du).
    let m_inv = chol.inverse();
    let a = &alpha * alpha.transpose() - m_inv;

    let mut grad = Vec::new();
    if cfg.dot_enabled && cfg.sigma > 0.0 {
        // dK/d(ln sigma) = 2 sigma^2 * ones.
        let coeff = 2.0 * cfg.sigma * cfg.sigma;
        grad.push(0.5 * coeff * a.sum());
    }
    if cfg.rbf_enabled {
        // dK/d(ln l) = k_rbf(i,j) * d_ij^2 / l^2.
        let l2 = cfg.length_scale * cfg.length_scale;
        let mut acc = 0.0;
        let mut ri = Vec::new();
        let mut rj = Vec::new();
        for i in 0..n {
            row_slice(t, i, &mut ri);
            for j in 0..n {
                row_slice(t, j, &mut rj);
                let d2: f64 = ri.iter().zip(&rj).map(|(x, y)| (x - y) * (x - y)).sum();
                let k_rbf = (-d2 / (2.0 * l2)).exp();
                acc += a[(i, j)] * k_rbf * d2 / l2;
            }
        }
        grad.push(0.5 * acc);
    }
    if cfg.white_enabled && cfg.white_noise > 0.0 {
        // dK/d(ln delta) = delta * E with E the elementwise-equality mask.
        let mut acc = 0.0;
        let mut ri = Vec::new();
        let mut rj = Vec::new();
        for i in 0..n {
            row_slice(t, i, &mut ri);
            for j in 0..n {
                row_slice(t, j, &mut rj);
                if ri == rj {
                    acc += a[(i, j)];
                }
            }
        }
        grad.push(0.5 * cfg.white_noise * acc);
    }
    Ok((lml, grad))
}

fn pack_log_params(cfg: &KernelConfig) -> Vec<f64> {
    let mut u = Vec::new();
    if cfg.dot_enabled && cfg.sigma > 0.0 {
        u.push(cfg.sigma.ln());
    }
    if cfg.rbf_enabled {
        u.push(cfg.length_scale.ln());
    }
    if cfg.white_enabled && cfg.white_noise > 0.0 {
        u.push(cfg.white_noise.ln());
    }
    u
}

fn unpack_log_params(base: &KernelConfig, u: &[f64]) -> KernelConfig {
    let mut cfg = base.clone();
    let mut idx = 0;
    if cfg.dot_enabled && base.sigma > 0.0 {
        cfg.sigma = u[idx].exp();
        idx += 1;
    }
    if cfg.rbf_enabled {
        cfg.length_scale = u[idx].exp();
        idx += 1;
    }
    if cfg.white_enabled && base.white_noise > 0.0 {
        cfg.white_noise = u[idx].exp();
    }
    cfg
}

const GPR_MAX_ITERS: usize = 200;
const GPR_GRAD_TOL: f64 = 1e-6;
/// Deterministic log-space offsets for the three optimizer restarts.
const GPR_RESTART_SHIFTS: [f64; 3] = [2.0, -2.0, 4.0];

/// Gradient-ascent with step-halving line search from one starting point.
/// Returns the best (lml, params) reached; a Cholesky failure at a candidate
/// simply rejects the step.
fn ascend_lml(
    base: &KernelConfig,
    epsilon: f64,
    t: &DMatrix<f64>,
    yc: &DVector<f64>,
    start: Vec<f64>,
) -> Option<(f64, Vec<f64>)> {
    let mut u = start;
    let (mut lml, mut grad) = log_marginal_likelihood(&unpack_log_params(base, &u), epsilon, t, yc).ok()?;
    for _ in 0..GPR_MAX_ITERS {
        let gnorm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if gnorm < GPR_GRAD_TOL {
            break;
        }
        let mut step = 1.0 / gnorm.max(1.0);
        let mut advanced = false;
        while step > 1e-12 {
            let candidate: Vec<f64> =
                u.iter().zip(&grad).map(|(ui, gi)| ui + step * gi).collect();
            if let Ok((cand_lml, cand_grad)) =
                log_marginal_likelihood(&unpack_log_params(base, &candidate), epsilon, t, yc)
            {
                if cand_lml > lml {
                    u = candidate;
                    lml = cand_lml;
                    grad = cand_grad;
                    advanced = true;
                    break;
                }
            }
            step *= 0.5;
        }
        if !advanced {
            break;
        }
    }
    Some((lml, u))
}

/// Fits Gaussian process regression. With `optimize`, kernel parameters are
/// tuned by log-marginal-likelihood ascent from the given configuration plus
/// three deterministic log-space restarts; the best run wins.
pub fn fit_gpr(
    t: &DMatrix<f64>,
    y: &DVector<f64>,
    cfg: &KernelConfig,
    epsilon: f64,
    optimize: bool,
) -> Result<GprModel> {
    cfg.validate()?;
    if !(epsilon.is_finite() && epsilon >= 0.0) {
        return Err(Error::Config(format!(
            "observation noise epsilon must be non-negative, got {epsilon}"
        )));
    }
    check_training_shapes(t, y)?;
    let n = t.nrows();
    let y_offset = y.mean();
    let yc = DVector::from_fn(n, |i, _| y[i] - y_offset);

    let mut final_cfg = cfg.clone();
    if optimize {
        let base_u = pack_log_params(cfg);
        if !base_u.is_empty() {
            let mut best: Option<(f64, Vec<f64>)> = None;
            let mut starts = vec![base_u.clone()];
            for shift in GPR_RESTART_SHIFTS {
                starts.push(base_u.iter().map(|v| v + shift).collect());
            }
            for start in starts {
                if let Some((lml, u)) = ascend_lml(cfg, epsilon, t, &yc, start) {
                    let better = match &best {
                        Some((best_lml, _)) => lml > *best_lml,
                        None => true,
                    };
                    if better {
                        best = Some((lml, u));
                    }
                }
            }
            let (_, u) = best.ok_or(Error::NotPositiveDefinite)?;
            final_cfg = unpack_log_params(cfg, &u);
        }
    }

    let mut m = build_gram(&final_cfg, t);
    for i in 0..n {
        m[(i, i)] += epsilon * epsilon;
    }
    let chol = cholesky_with_jitter(m)?;
    let alpha = chol.solve(&yc);
    let log_det: f64 = chol.l().diagonal().iter().map(|v| 2.0 * v.ln()).sum();
    let lml = -0.5 * yc.dot(&alpha)
        - 0.5 * log_det
        - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();

    Ok(GprModel {
        kernel: final_cfg,
        epsilon,
        alpha,
        train_t: t.clone(),
        y_offset,
        log_marginal_likelihood: lml,
    })
}
