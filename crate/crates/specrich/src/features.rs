//! Linear feature extraction `T = X·W` with PCA, CCA, and PLS, plus
//! explained-variance accounting.
//!
//! All three extractors center the columns of `X` (no per-band variance
//! scaling; spectra are already mean-normalized per sample). Weight columns
//! have unit Euclidean norm and the component scores over the training data
//! are mutually orthogonal. Eigenvalues are reported uniformly as the sample
//! variance of each score vector, which for PCA coincides with the covariance
//! eigenvalues.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExtractionMethod {
    Pca,
    Cca,
    Pls,
}

impl ExtractionMethod {
    pub fn name(self) -> &'static str {
        match self {
            ExtractionMethod::Pca => "pca",
            ExtractionMethod::Cca => "cca",
            ExtractionMethod::Pls => "pls",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pca" => Ok(ExtractionMethod::Pca),
            "cca" => Ok(ExtractionMethod::Cca),
            "pls" => Ok(ExtractionMethod::Pls),
            other => Err(Error::Config(format!(
                "unknown extraction method {other:?}, expected pca|cca|pls"
            ))),
        }
    }
}

impl std::fmt::Display for ExtractionMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// A fitted linear feature extractor.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentModel {
    method: ExtractionMethod,
    /// m x k weight matrix with unit-norm columns.
    weights: DMatrix<f64>,
    /// Length-m column means of the training matrix.
    x_mean: DVector<f64>,
    /// Training response mean (CCA/PLS only).
    y_mean: Option<f64>,
    /// Sample variance of each component score over the training data.
    eigenvalues: Vec<f64>,
    k: usize,
}

impl ComponentModel {
    /// Assembles a model from externally computed parts. `weights` must be
    /// m x k with every column carrying a direction; `eigenvalues` must hold
    /// one entry per column. No unit-norm constraint is imposed, so this can
    /// also represent custom linear maps.
    pub fn from_parts(
        method: ExtractionMethod,
        weights: DMatrix<f64>,
        x_mean: DVector<f64>,
        y_mean: Option<f64>,
        eigenvalues: Vec<f64>,
    ) -> Result<Self> {
        let (m, k) = (weights.nrows(), weights.ncols());
        if m == 0 || k == 0 {
            return Err(Error::Config("weights matrix must be non-empty".into()));
        }
        if x_mean.len() != m {
            return Err(Error::DimensionMismatch { expected: m, got: x_mean.len() });
        }
        if eigenvalues.len() != k {
            return Err(Error::DimensionMismatch { expected: k, got: eigenvalues.len() });
        }
        if weights.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("weights must be finite".into()));
        }
        Ok(ComponentModel { method, weights, x_mean, y_mean, eigenvalues, k })
    }

    pub fn method(&self) -> ExtractionMethod {
        self.method
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    pub fn x_mean(&self) -> &DVector<f64> {
        &self.x_mean
    }

    pub fn y_mean(&self) -> Option<f64> {
        self.y_mean
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn input_dim(&self) -> usize {
        self.weights.nrows()
    }
}

/// One row of the explained-variance table.
#[derive(Debug, Clone, PartialEq)]
pub struct VarianceRow {
    /// 1-based component index.
    pub component_index: usize,
    pub eigenvalue: f64,
    pub pct_variance: f64,
    pub cumulative_pct: f64,
}

fn column_means(x: &DMatrix<f64>) -> DVector<f64> {
    let n = x.nrows() as f64;
    DVector::from_fn(x.ncols(), |j, _| x.column(j).sum() / n)
}

fn center_columns(x: &DMatrix<f64>) -> (DMatrix<f64>, DVector<f64>) {
    let means = column_means(x);
    let mut xc = x.clone();
    for j in 0..x.ncols() {
        let mu = means[j];
        for i in 0..x.nrows() {
            xc[(i, j)] -= mu;
        }
    }
    (xc, means)
}

fn check_common_pre(x: &DMatrix<f64>, k: usize, min_n: usize) -> Result<()> {
    let (n, m) = (x.nrows(), x.ncols());
    if n < min_n {
        return Err(Error::Config(format!("need at least {min_n} rows, got {n}")));
    }
    if m == 0 {
        return Err(Error::Config("matrix has no columns".into()));
    }
    if k == 0 {
        return Err(Error::Config("component count must be at least 1".into()));
    }
    let k_max = (n - 1).min(m);
    if k > k_max {
        return Err(Error::InsufficientRank { requested: k, rank: k_max });
    }
    Ok(())
}

/// Fits PCA: weight columns are the top-k eigenvectors of the covariance of
/// the column-centered matrix, with the largest-magnitude element of each
/// column oriented positive.
///
/// The decomposition goes through the symmetric eigensolver on the smaller
/// of `X_c'X_c` (m x m) or `X_c X_c'` (n x n) rather than a bidiagonal SVD
/// of `X_c`: the backend's SVD iteration can stall short of full accuracy on
/// some inputs, while the symmetric QR path is dependable. Both matrices
/// share the nonzero spectrum `s^2`; in the Gram (n x n) case the weights
/// are recovered as `X_c'u / s`.
pub fn fit_pca(x: &DMatrix<f64>, k: usize) -> Result<ComponentModel> {
    check_common_pre(x, k, 2)?;
    let n = x.nrows();
    let m = x.ncols();
    let (xc, x_mean) = center_columns(x);

    let use_gram = m > n;
    let eig = if use_gram {
        (&xc * xc.transpose()).symmetric_eigen()
    } else {
        (xc.transpose() * &xc).symmetric_eigen()
    };
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    // Tiny negative values are rounding artifacts of an exactly positive
    // semidefinite matrix.
    let singular_values: Vec<f64> =
        order.iter().map(|&i| eig.eigenvalues[i].max(0.0).sqrt()).collect();

    let sigma_max = singular_values[0];
    if sigma_max.is_nan() || sigma_max <= f64::EPSILON * (n as f64) {
        return Err(Error::ZeroVariance);
    }
    let tol = sigma_max * f64::EPSILON * (n.max(m) as f64);
    let rank = singular_values.iter().filter(|&&s| s > tol).count();
    if k > rank {
        return Err(Error::InsufficientRank { requested: k, rank });
    }

    let mut weights = DMatrix::zeros(m, k);
    let mut eigenvalues = Vec::with_capacity(k);
    for j in 0..k {
        let s = singular_values[j];
        let mut col: DVector<f64> = if use_gram {
            xc.transpose() * eig.eigenvectors.column(order[j]) / s
        } else {
            eig.eigenvectors.column(order[j]).into()
        };
        col /= col.norm();
        orient_largest_positive(&mut col);
        weights.set_column(j, &col);
        eigenvalues.push(s * s / (n as f64 - 1.0));
    }

    Ok(ComponentModel {
        method: ExtractionMethod::Pca,
        weights,
        x_mean,
        y_mean: None,
        eigenvalues,
        k,
    })
}

/// Flips the vector so its largest-magnitude element is positive.
fn orient_largest_positive(v: &mut DVector<f64>) {
    let mut best = 0usize;
    for i in 1..v.len() {
        if v[i].abs() > v[best].abs() {
            best = i;
        }
    }
    if v[best] < 0.0 {
        *v *= -1.0;
    }
}

/// Per-step direction rule for the supervised extractors.
enum DirectionRule {
    /// Covariance maximizer: w proportional to X'y.
    Covariance,
    /// Correlation maximizer: w proportional to (X'X + gamma I)^-1 X'y.
    Correlation,
}

/// Condition threshold above which the CCA normal matrix gets a ridge
/// stabilizer (n < m always makes X'X singular here).
const CCA_CONDITION_LIMIT: f64 = 1e10;

fn supervised_direction(
    xd: &DMatrix<f64>,
    yd: &DVector<f64>,
    rule: &DirectionRule,
) -> Result<DVector<f64>> {
    let xty = xd.transpose() * yd;
    // When the deflated response is orthogonal to every deflated column, the
    // cross-covariance is pure rounding noise and no meaningful direction
    // exists (for a scalar response this happens once the attainable
    // correlation is exhausted). The tolerance is relative to the current
    // deflated scales so it adapts as deflation shrinks the problem.
    let local_scale = (xd.norm() * yd.norm()).max(f64::MIN_POSITIVE);
    if xty.norm() <= 1e-12 * local_scale {
        return Err(Error::DegenerateDirection);
    }
    let raw = match rule {
        DirectionRule::Covariance => xty,
        DirectionRule::Correlation => {
            let m = xd.ncols();
            let mut normal = xd.transpose() * xd;
            // Estimate conditioning from the singular values of the deflated
            // matrix; cond(X'X) = (sigma_max / sigma_min)^2.
            let sv = xd.clone().svd(false, false).singular_values;
            let s_max = sv.max();
            let s_min = sv.min();
            let rank_deficient = xd.nrows() < m
                || s_min <= 0.0
                || (s_max / s_min) * (s_max / s_min) > CCA_CONDITION_LIMIT;
            if rank_deficient {
                let gamma = 1e-8 * normal.trace() / m as f64;
                for i in 0..m {
                    normal[(i, i)] += gamma;
                }
            }
            match nalgebra::Cholesky::new(normal) {
                Some(chol) => chol.solve(&xty),
                None => return Err(Error::NotPositiveDefinite),
            }
        }
    };
    let norm = raw.norm();
    if norm <= 0.0 || !norm.is_finite() {
        return Err(Error::DegenerateDirection);
    }
    Ok(raw / norm)
}

/// Shared deflation engine for PLS1 and sequential CCA.
///
/// Each step finds a unit direction in the deflated matrix, takes its score,
/// and deflates both `X` and `y` by that score. The weights applicable to the
/// *original* centered matrix are recovered from the identity
/// `X_c W = T (I + U)` with `U` strictly upper triangular, `U[i][j] = p_i·w_j`,
/// then column-normalized so the stored weights have unit norm.
fn fit_supervised(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    k: usize,
    method: ExtractionMethod,
    rule: DirectionRule,
) -> Result<ComponentModel> {
    check_common_pre(x, k, 3)?;
    if y.len() != x.nrows() {
        return Err(Error::ShapeMismatch(format!(
            "X has {} rows but y has {}",
            x.nrows(),
            y.len()
        )));
    }
    let n = x.nrows();
    let (xc, x_mean) = center_columns(x);
    let y_mean = y.mean();
    let yc = DVector::from_fn(n, |i, _| y[i] - y_mean);
    let y_norm = yc.norm();
    if y_norm <= 1e-12 * (n as f64).sqrt() * (1.0 + y_mean.abs()) {
        return Err(Error::ZeroResponseVariance);
    }

    let mut xd = xc.clone();
    let mut yd = yc.clone();
    let mut w_steps: Vec<DVector<f64>> = Vec::with_capacity(k);
    let mut p_steps: Vec<DVector<f64>> = Vec::with_capacity(k);

    for _ in 0..k {
        let w = supervised_direction(&xd, &yd, &rule)?;
        let t = &xd * &w;
        let tt = t.norm_squared();
        if tt <= 1e-24 * xc.norm_squared().max(f64::MIN_POSITIVE) {
            return Err(Error::DegenerateDirection);
        }
        let p = xd.transpose() * &t / tt;
        let q = yd.dot(&t) / tt;
        xd -= &t * p.transpose();
        yd -= &t * q;
        w_steps.push(w);
        p_steps.push(p);
    }

    // R = W (I + U)^-1, solved column-by-column by forward substitution on
    // the unit upper triangular system.
    let m = x.ncols();
    let mut rotation = DMatrix::zeros(m, k);
    for (j, w_j) in w_steps.iter().enumerate() {
        let mut r_j = w_j.clone();
        for (i, p_i) in p_steps.iter().enumerate().take(j) {
            let u_ij = p_i.dot(w_j);
            let r_i: DVector<f64> = rotation.column(i).into();
            r_j -= r_i * u_ij;
        }
        rotation.set_column(j, &r_j);
    }

    let mut weights = DMatrix::zeros(m, k);
    let mut eigenvalues = Vec::with_capacity(k);
    for j in 0..k {
        let mut col: DVector<f64> = rotation.column(j).into();
        let norm = col.norm();
        if norm <= 0.0 {
            return Err(Error::DegenerateDirection);
        }
        col /= norm;
        // Deterministic orientation: score covariance with the response is
        // kept non-negative (automatic for PLS, a convention for CCA).
        let t = &xc * &col;
        let cov = t.dot(&yc);
        if cov < 0.0 {
            col *= -1.0;
        } else if cov == 0.0 {
            orient_largest_positive(&mut col);
        }
        let t = &xc * &col;
        eigenvalues.push(t.norm_squared() / (n as f64 - 1.0));
        weights.set_column(j, &col);
    }

    Ok(ComponentModel {
        method,
        weights,
        x_mean,
        y_mean: Some(y_mean),
        eigenvalues,
        k,
    })
}

/// Fits sequential CCA for a scalar response: each direction maximizes the
/// correlation of its score with `y`, subject to unit weight norm and
/// orthogonality against earlier scores.
pub fn fit_cca(x: &DMatrix<f64>, y: &DVector<f64>, k: usize) -> Result<ComponentModel> {
    fit_supervised(x, y, k, ExtractionMethod::Cca, DirectionRule::Correlation)
}

/// Fits PLS1: each direction maximizes the covariance of its score with `y`,
/// with the same unit-norm and score-orthogonality constraints.
pub fn fit_pls(x: &DMatrix<f64>, y: &DVector<f64>, k: usize) -> Result<ComponentModel> {
    fit_supervised(x, y, k, ExtractionMethod::Pls, DirectionRule::Covariance)
}

/// Projects rows of `x` onto the fitted components: `T = (X - x_mean)·W`.
pub fn transform(model: &ComponentModel, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if x.ncols() != model.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: model.input_dim(),
            got: x.ncols(),
        });
    }
    let mut xc = x.clone();
    for j in 0..x.ncols() {
        let mu = model.x_mean[j];
        for i in 0..x.nrows() {
            xc[(i, j)] -= mu;
        }
    }
    Ok(xc * &model.weights)
}

/// Explained-variance table over the training matrix: eigenvalue, percent of
/// total variance, and running cumulative percent per component.
pub fn variance_table(model: &ComponentModel, x: &DMatrix<f64>) -> Result<Vec<VarianceRow>> {
    let t = transform(model, x)?;
    let n = x.nrows();
    if n < 2 {
        return Err(Error::Config("variance table needs at least 2 rows".into()));
    }
    let (xc, _) = center_columns(x);
    let total_variance = xc.norm_squared() / (n as f64 - 1.0);
    if total_variance <= 0.0 {
        return Err(Error::ZeroVariance);
    }
    let mut rows = Vec::with_capacity(model.k);
    let mut cumulative = 0.0;
    for j in 0..model.k {
        let col = t.column(j);
        let mean = col.sum() / n as f64;
        let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n as f64 - 1.0);
        let pct = var / total_variance * 100.0;
        cumulative += pct;
        rows.push(VarianceRow {
            component_index: j + 1,
            eigenvalue: var,
            pct_variance: pct,
            cumulative_pct: cumulative,
        });
    }
    Ok(rows)
}
