//! Predicting plant species richness from hyperspectral surface reflectance.
//!
//! This crate implements an end-to-end modelling pipeline for regressing a
//! scalar ecological response (the count of vascular plant species in a
//! ground plot) against per-plot hyperspectral reflectance:
//!
//! 1. **Spectral preprocessing** ([`preprocess`]): Gaussian band aggregation
//!    onto a coarser grid, removal of atmospherically affected bands, and
//!    brightness (mean) normalization of each spectrum. The same machinery
//!    simulates broad-band multispectral sensors from hyperspectral input.
//! 2. **Feature extraction** ([`features`]): linear dimensionality reduction
//!    `T = X·W` with PCA, CCA, or PLS, including explained-variance tables.
//! 3. **Regression** ([`regression`]): kernel ridge regression and Gaussian
//!    process regression over a composite dot-product + RBF + white kernel,
//!    and a random forest of CART regression trees.
//! 4. **Model selection** ([`selection`]): log-scale grid search over the
//!    kernel hyperparameters and component-count selection.
//! 5. **Evaluation** ([`evaluation`]): repeated two-fold cross-validation
//!    with Pearson `r` / RMSE reporting, pooled multi-region evaluation, and
//!    a deterministic synthetic-dataset generator ([`synthetic`]).
//! 6. **Band importance** ([`importance`]): per-band relative importance from
//!    component weights and partial correlations.
//!
//! File formats and the pipeline runner behind the `specrich` CLI live in
//! [`io`] and [`runner`].
//!
//! All fitted models are immutable once constructed and safe to share across
//! threads; every randomized procedure takes an explicit seed and produces
//! results independent of thread count.

pub mod error;
pub mod evaluation;
pub mod features;
pub mod importance;
pub mod io;
pub mod pipeline;
pub mod preprocess;
pub mod regression;
pub mod runner;
pub mod selection;
pub mod spectral;
pub mod synthetic;

pub use error::{Error, ErrorCategory, Result};
pub use evaluation::{pearson_r, pooled_region_eval, rmse, two_fold_cv, CVConfig, CVReport};
pub use features::{fit_cca, fit_pca, fit_pls, transform, variance_table, ComponentModel, ExtractionMethod, VarianceRow};
pub use importance::{band_importance, importance_report, partial_correlation, ImportanceProfile};
pub use pipeline::{GprParams, KrrParams, PipelineSpec, RegressorKind, RegressorSpec, RfrParams, TrainedRegressor};
pub use preprocess::{apply_band_mask, gaussian_resample, mean_normalize, simulate_multispectral, BandMask, SrfBand, SrfSet};
pub use regression::{build_gram, fit_gpr, fit_krr, fit_rfr, kernel_eval, GprModel, KernelConfig, KrrModel, RfrModel};
pub use selection::{grid_search_kernel, select_components, GridSpec, SelectionMetric, SelectionResult};
pub use spectral::{assemble_dataset, validate_dataset, BandGrid, Dataset, Diagnostic, RichnessPlot, SpectralSample};
pub use synthetic::{generate_synthetic_dataset, SyntheticSpec};
