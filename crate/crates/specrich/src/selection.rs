//! Hyperparameter selection by cross-validated grid search.
//!
//! Every grid cell is scored with the *same* cross-validation partitions
//! (common random numbers), so score differences between cells reflect the
//! hyperparameters and not the fold draw. Cells whose evaluation fails are
//! recorded with missing scores and skipped by the argmax.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::evaluation::{two_fold_cv, CVConfig};
use crate::pipeline::{PipelineSpec, RegressorKind};
use crate::regression::KernelConfig;
use crate::spectral::Dataset;

/// Candidate values for the three kernel parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub sigma_values: Vec<f64>,
    pub length_values: Vec<f64>,
    pub delta_values: Vec<f64>,
}

/// Eleven logarithmic decade steps from 1e-5 to 1e5.
pub fn decade_grid() -> Vec<f64> {
    (-5..=5).map(|e| 10f64.powi(e)).collect()
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            sigma_values: decade_grid(),
            length_values: decade_grid(),
            delta_values: decade_grid(),
        }
    }
}

impl GridSpec {
    fn validate(&self) -> Result<()> {
        if self.sigma_values.is_empty()
            || self.length_values.is_empty()
            || self.delta_values.is_empty()
        {
            return Err(Error::Config("kernel grid has an empty axis".into()));
        }
        for (axis, values) in [
            ("sigma", &self.sigma_values),
            ("length", &self.length_values),
            ("delta", &self.delta_values),
        ] {
            for &v in values {
                if !v.is_finite() || v < 0.0 {
                    return Err(Error::Config(format!(
                        "kernel grid axis {axis} holds invalid value {v}"
                    )));
                }
            }
            if axis == "length" && values.contains(&0.0) {
                return Err(Error::Config("length scale grid value must be positive".into()));
            }
        }
        Ok(())
    }

    fn cells(&self) -> Vec<(f64, f64, f64)> {
        let mut out =
            Vec::with_capacity(self.sigma_values.len() * self.length_values.len() * self.delta_values.len());
        for &s in &self.sigma_values {
            for &l in &self.length_values {
                for &d in &self.delta_values {
                    out.push((s, l, d));
                }
            }
        }
        out
    }
}

/// What to optimize during selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SelectionMetric {
    /// Maximize the fold-averaged Pearson correlation.
    #[default]
    MaxR,
    /// Minimize the fold-averaged RMSE.
    MinRmse,
}

/// One scored candidate; `None` marks a cell whose evaluation failed.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRow<C> {
    pub config: C,
    pub mean_r: Option<f64>,
    pub mean_rmse: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionResult<C> {
    pub best: C,
    pub table: Vec<ScoreRow<C>>,
    pub metric: SelectionMetric,
}

fn better(
    metric: SelectionMetric,
    candidate: (f64, f64),
    incumbent: Option<(f64, f64)>,
) -> bool {
    let Some(inc) = incumbent else { return true };
    match metric {
        // Ties on the primary metric fall back to the secondary one; a
        // remaining tie keeps the earlier (lexicographically smaller) cell.
        SelectionMetric::MaxR => {
            candidate.0 > inc.0 || (candidate.0 == inc.0 && candidate.1 < inc.1)
        }
        SelectionMetric::MinRmse => {
            candidate.1 < inc.1 || (candidate.1 == inc.1 && candidate.0 > inc.0)
        }
    }
}

/// Exhaustive search over kernel parameter triples for a kernel pipeline
/// (KRR or GPR), scoring each cell by repeated two-fold cross-validation.
pub fn grid_search_kernel(
    dataset: &Dataset,
    spec: &PipelineSpec,
    grid: &GridSpec,
    cv: &CVConfig,
    metric: SelectionMetric,
) -> Result<SelectionResult<KernelConfig>> {
    if spec.regressor.kind() == RegressorKind::Rfr {
        return Err(Error::Config(
            "kernel grid search requires a kernel regressor (krr or gpr)".into(),
        ));
    }
    grid.validate()?;
    let base_kernel = spec.regressor.kernel().expect("kernel regressor").clone();
    let cells = grid.cells();

    let table: Vec<ScoreRow<KernelConfig>> = cells
        .par_iter()
        .map(|&(sigma, length, delta)| {
            let kernel = base_kernel.with_grid_point(sigma, length, delta);
            let scored = spec
                .with_kernel(kernel.clone())
                .and_then(|candidate| two_fold_cv(dataset, &candidate, cv));
            match scored {
                Ok(report) => ScoreRow {
                    config: kernel,
                    mean_r: Some(report.mean_r),
                    mean_rmse: Some(report.mean_rmse),
                },
                Err(_) => ScoreRow { config: kernel, mean_r: None, mean_rmse: None },
            }
        })
        .collect();

    pick_best(table, metric)
}

/// Scores every component count in `k_range` with identical CV partitions
/// and returns the best one. The range must stay within `[1, min(n-2, m)]`;
/// counts that are valid there but still too large for a half-sized training
/// fold show up as rows with missing scores.
pub fn select_components(
    dataset: &Dataset,
    spec: &PipelineSpec,
    k_range: std::ops::RangeInclusive<usize>,
    cv: &CVConfig,
    metric: SelectionMetric,
) -> Result<SelectionResult<usize>> {
    let (lo, hi) = (*k_range.start(), *k_range.end());
    let k_cap = (dataset.n().saturating_sub(2)).min(dataset.m());
    if lo < 1 || hi < lo || hi > k_cap {
        return Err(Error::Config(format!(
            "component range {lo}..={hi} must lie within 1..={k_cap}"
        )));
    }
    let ks: Vec<usize> = (lo..=hi).collect();
    let table: Vec<ScoreRow<usize>> = ks
        .par_iter()
        .map(|&k| match two_fold_cv(dataset, &spec.with_k(k), cv) {
            Ok(report) => ScoreRow {
                config: k,
                mean_r: Some(report.mean_r),
                mean_rmse: Some(report.mean_rmse),
            },
            Err(_) => ScoreRow { config: k, mean_r: None, mean_rmse: None },
        })
        .collect();

    pick_best(table, metric)
}

fn pick_best<C: Clone>(
    table: Vec<ScoreRow<C>>,
    metric: SelectionMetric,
) -> Result<SelectionResult<C>> {
    let mut best: Option<(usize, (f64, f64))> = None;
    for (idx, row) in table.iter().enumerate() {
        if let (Some(r), Some(e)) = (row.mean_r, row.mean_rmse) {
            if better(metric, (r, e), best.map(|(_, s)| s)) {
                best = Some((idx, (r, e)));
            }
        }
    }
    let Some((idx, _)) = best else {
        return Err(Error::AllCellsFailed);
    };
    Ok(SelectionResult { best: table[idx].config.clone(), table, metric })
}
