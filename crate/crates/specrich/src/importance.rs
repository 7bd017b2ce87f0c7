//! Band relative importance: how much each wavelength contributes to the
//! richness signal carried by the extracted components.
//!
//! Each component's predictive strength is measured by the partial
//! correlation of its score with the response, controlling for the other
//! components. Band `i` then aggregates its weight-times-strength across
//! components as `I_i = sqrt(sum_j (w_ij * p_j)^2)`, normalized to sum to 1.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::features::{transform, ComponentModel, ExtractionMethod};
use crate::pipeline::PipelineSpec;
use crate::spectral::Dataset;

/// Raw and normalized per-band importance, indexed like `band_centers`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImportanceProfile {
    pub band_centers: Vec<f64>,
    pub raw: Vec<f64>,
    pub normalized: Vec<f64>,
    pub method: ExtractionMethod,
    pub k_used: usize,
}

/// Partial correlation of score column `j` (0-based) with `y`, controlling
/// for every other column plus an intercept: the Pearson correlation of the
/// two least-squares residuals.
pub fn partial_correlation(t: &DMatrix<f64>, y: &DVector<f64>, j: usize) -> Result<f64> {
    let (n, k) = (t.nrows(), t.ncols());
    if j >= k {
        return Err(Error::Config(format!(
            "component index {j} out of range for {k} components"
        )));
    }
    if y.len() != n {
        return Err(Error::ShapeMismatch(format!(
            "scores have {n} rows but response has {}",
            y.len()
        )));
    }
    if n < k + 2 {
        return Err(Error::Config(format!(
            "partial correlation needs at least {} samples for {k} components, got {n}",
            k + 2
        )));
    }

    // Controls: intercept plus all score columns except j.
    let mut controls = DMatrix::zeros(n, k);
    for i in 0..n {
        controls[(i, 0)] = 1.0;
    }
    let mut col = 1;
    for c in 0..k {
        if c != j {
            for i in 0..n {
                controls[(i, col)] = t[(i, c)];
            }
            col += 1;
        }
    }

    let residual = |target: &DVector<f64>| -> DVector<f64> {
        // Least squares through the SVD pseudo-inverse; collinear controls
        // (e.g. duplicated components) are handled by rank truncation.
        let svd = controls.clone().svd(true, true);
        let coef = svd.solve(target, 1e-12).expect("svd solve with u,v computed");
        target - &controls * coef
    };

    let tj: DVector<f64> = t.column(j).into();
    let r_t = residual(&tj);
    let r_y = residual(y);

    let scale_t = tj.norm();
    let scale_y = y.norm();
    if r_t.norm() <= 1e-10 * scale_t.max(f64::MIN_POSITIVE)
        || r_y.norm() <= 1e-10 * scale_y.max(f64::MIN_POSITIVE)
    {
        return Err(Error::DegeneratePartialCorrelation { component: j + 1 });
    }
    Ok((r_t.dot(&r_y) / (r_t.norm() * r_y.norm())).clamp(-1.0, 1.0))
}

/// Aggregates component partial correlations into per-band importance.
/// `centers` labels the bands and must match the model's input width.
pub fn band_importance(
    model: &ComponentModel,
    partials: &[f64],
    centers: &[f64],
) -> Result<ImportanceProfile> {
    if partials.len() != model.k() {
        return Err(Error::DimensionMismatch { expected: model.k(), got: partials.len() });
    }
    if centers.len() != model.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: model.input_dim(),
            got: centers.len(),
        });
    }
    if partials.iter().all(|p| *p == 0.0) {
        return Err(Error::UninformativeModel);
    }
    let w = model.weights();
    let m = model.input_dim();
    let mut raw = Vec::with_capacity(m);
    for i in 0..m {
        let sum: f64 = (0..model.k()).map(|j| (w[(i, j)] * partials[j]).powi(2)).sum();
        raw.push(sum.sqrt());
    }
    let total: f64 = raw.iter().sum();
    if total <= 0.0 {
        return Err(Error::UninformativeModel);
    }
    let normalized: Vec<f64> = raw.iter().map(|v| v / total).collect();
    Ok(ImportanceProfile {
        band_centers: centers.to_vec(),
        raw,
        normalized,
        method: model.method(),
        k_used: model.k(),
    })
}

/// End-to-end importance for a dataset: fit the extractor on all samples,
/// compute each component's partial correlation with richness, aggregate.
pub fn importance_report(dataset: &Dataset, spec: &PipelineSpec) -> Result<ImportanceProfile> {
    let model = spec.fit_extractor(dataset.x(), dataset.y())?;
    let t = transform(&model, dataset.x())?;
    let mut partials = Vec::with_capacity(model.k());
    for j in 0..model.k() {
        partials.push(partial_correlation(&t, dataset.y(), j)?);
    }
    band_importance(&model, &partials, dataset.grid().centers())
}
