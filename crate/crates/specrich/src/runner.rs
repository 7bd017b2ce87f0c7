//! End-to-end pipeline runs driven by a TOML configuration.
//!
//! A run loads spectra and plots, preprocesses, assembles the dataset,
//! optionally tunes hyperparameters, cross-validates, computes band
//! importance, and writes every artifact plus a `manifest.json` that records
//! the fully resolved configuration. Given the same config and inputs, a run
//! produces byte-identical outputs; on failure, partial outputs are removed.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::{two_fold_cv, CVConfig};
use crate::features::{variance_table, ExtractionMethod};
use crate::importance::importance_report;
use crate::io;
use crate::pipeline::{
    GprParams, KrrParams, PipelineSpec, RegressorKind, RegressorSpec, RfrParams,
};
use crate::preprocess::{
    apply_band_mask, binning_srf, gaussian_resample, mean_normalize, BandMask,
    DEFAULT_MASKED_CENTERS_NM, DEFAULT_MASK_TOLERANCE_NM,
};
use crate::regression::KernelConfig;
use crate::selection::{grid_search_kernel, select_components, GridSpec, SelectionMetric};
use crate::spectral::{
    assemble_dataset_logged, validate_dataset, BandGrid, Dataset, Diagnostic, SpectralSample,
};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathsConfig {
    pub spectra: PathBuf,
    pub plots: PathBuf,
    pub output_dir: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct PreprocessConfig {
    /// Aggregate source bands onto a regular grid before masking.
    pub resample: bool,
    /// First bin center; defaults to the first source band.
    pub resample_start_nm: Option<f64>,
    pub resample_step_nm: f64,
    pub resample_fwhm_nm: f64,
    pub mask_centers_nm: Vec<f64>,
    pub mask_tolerance_nm: f64,
    pub mean_normalize: bool,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            resample: true,
            resample_start_nm: None,
            resample_step_nm: 10.2,
            resample_fwhm_nm: 10.2,
            mask_centers_nm: DEFAULT_MASKED_CENTERS_NM.to_vec(),
            mask_tolerance_nm: DEFAULT_MASK_TOLERANCE_NM,
            mean_normalize: true,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub method: String,
    pub k: usize,
    pub regressor: String,
    pub sigma: f64,
    pub length_scale: f64,
    pub white_noise: f64,
    pub dot_enabled: bool,
    pub rbf_enabled: bool,
    pub white_enabled: bool,
    pub lambda: f64,
    pub epsilon: f64,
    pub optimize_gpr: bool,
    pub trees: usize,
    pub bootstrap: bool,
    pub max_features: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        let kernel = KernelConfig::default();
        let krr = KrrParams::default();
        let gpr = GprParams::default();
        let rfr = RfrParams::default();
        ModelConfig {
            method: "pls".into(),
            k: 2,
            regressor: "krr".into(),
            sigma: kernel.sigma,
            length_scale: kernel.length_scale,
            white_noise: kernel.white_noise,
            dot_enabled: kernel.dot_enabled,
            rbf_enabled: kernel.rbf_enabled,
            white_enabled: kernel.white_enabled,
            lambda: krr.lambda,
            epsilon: gpr.epsilon,
            optimize_gpr: gpr.optimize,
            trees: rfr.trees,
            bootstrap: rfr.bootstrap,
            max_features: rfr.max_features,
        }
    }
}

fn default_repetitions() -> usize {
    100
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct CvSection {
    #[serde(default = "default_repetitions")]
    pub repetitions: usize,
    /// Required: runs never seed from the clock.
    pub seed: Option<u64>,
}

impl Default for CvSection {
    fn default() -> Self {
        CvSection { repetitions: default_repetitions(), seed: None }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct TuneConfig {
    /// Grid-search the kernel parameters before the final fit.
    pub kernel: bool,
    /// Scan component counts before the final fit (after kernel tuning).
    pub components: bool,
    pub k_min: usize,
    pub k_max: usize,
    /// "max_r" or "min_rmse".
    pub metric: String,
    pub sigma_values: Option<Vec<f64>>,
    pub length_values: Option<Vec<f64>>,
    pub delta_values: Option<Vec<f64>>,
}

impl Default for TuneConfig {
    fn default() -> Self {
        TuneConfig {
            kernel: false,
            components: false,
            k_min: 1,
            k_max: 10,
            metric: "max_r".into(),
            sigma_values: None,
            length_values: None,
            delta_values: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub paths: PathsConfig,
    #[serde(default)]
    pub preprocess: PreprocessConfig,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub cv: CvSection,
    #[serde(default)]
    pub tune: TuneConfig,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("invalid run config: {e}")))
    }

    /// Resolves relative paths against the directory containing the config
    /// file, so configs behave the same from any working directory.
    pub fn resolve_paths(&mut self, config_dir: &Path) {
        for p in [
            &mut self.paths.spectra,
            &mut self.paths.plots,
            &mut self.paths.output_dir,
        ] {
            if p.is_relative() {
                *p = config_dir.join(&*p);
            }
        }
    }

    fn selection_metric(&self) -> Result<SelectionMetric> {
        match self.tune.metric.as_str() {
            "max_r" => Ok(SelectionMetric::MaxR),
            "min_rmse" => Ok(SelectionMetric::MinRmse),
            other => Err(Error::Config(format!(
                "tune.metric must be max_r or min_rmse, got {other:?}"
            ))),
        }
    }

    fn kernel(&self) -> KernelConfig {
        KernelConfig {
            sigma: self.model.sigma,
            length_scale: self.model.length_scale,
            white_noise: self.model.white_noise,
            dot_enabled: self.model.dot_enabled,
            rbf_enabled: self.model.rbf_enabled,
            white_enabled: self.model.white_enabled,
        }
    }

    fn pipeline(&self) -> Result<PipelineSpec> {
        let method = ExtractionMethod::parse(&self.model.method)?;
        let kind = RegressorKind::parse(&self.model.regressor)?;
        let regressor = match kind {
            RegressorKind::Krr => {
                RegressorSpec::Krr(KrrParams { kernel: self.kernel(), lambda: self.model.lambda })
            }
            RegressorKind::Gpr => RegressorSpec::Gpr(GprParams {
                kernel: self.kernel(),
                epsilon: self.model.epsilon,
                optimize: self.model.optimize_gpr,
            }),
            RegressorKind::Rfr => RegressorSpec::Rfr(RfrParams {
                trees: self.model.trees,
                bootstrap: self.model.bootstrap,
                max_features: self.model.max_features,
            }),
        };
        PipelineSpec::new(method, self.model.k, regressor)
    }

    fn validate(&self) -> Result<u64> {
        let seed = self
            .cv
            .seed
            .ok_or_else(|| Error::Config("cv.seed is required; runs never seed from the clock".into()))?;
        if self.cv.repetitions == 0 {
            return Err(Error::Config("cv.repetitions must be at least 1".into()));
        }
        for (field, path) in [
            ("paths.spectra", &self.paths.spectra),
            ("paths.plots", &self.paths.plots),
        ] {
            if !path.is_file() {
                return Err(Error::Config(format!(
                    "{field} does not point to a readable file: {}",
                    path.display()
                )));
            }
        }
        self.selection_metric()?;
        self.pipeline()?;
        Ok(seed)
    }
}

/// Loads a run configuration, resolving relative paths against the config
/// file's directory.
pub fn load_run_config(path: &Path) -> Result<RunConfig> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Io { path: path.display().to_string(), source: e })?;
    let mut cfg = RunConfig::from_toml_str(&text)?;
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    cfg.resolve_paths(dir);
    Ok(cfg)
}

/// What a finished run reports back to the caller.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub n_samples: usize,
    pub n_bands: usize,
    pub k_used: usize,
    pub kernel_used: Option<KernelConfig>,
    pub mean_r: f64,
    pub mean_rmse: f64,
    pub pooled_r: f64,
    pub pooled_rmse: f64,
    pub diagnostics: Vec<String>,
    pub artifacts: Vec<PathBuf>,
}

#[derive(Serialize)]
struct ManifestKernel {
    sigma: f64,
    length_scale: f64,
    white_noise: f64,
    dot_enabled: bool,
    rbf_enabled: bool,
    white_enabled: bool,
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    format: u32,
    version: &'static str,
    seed: u64,
    config: &'a RunConfig,
    n_samples: usize,
    n_bands: usize,
    grid_fingerprint: String,
    k_used: usize,
    kernel_used: Option<ManifestKernel>,
    fold_mean_r: f64,
    fold_mean_rmse: f64,
    pooled_r: f64,
    pooled_rmse: f64,
    diagnostics: &'a [String],
    artifacts: Vec<String>,
}

/// Tracks written artifacts so a failed run can clean up after itself.
struct ArtifactLog {
    written: Vec<PathBuf>,
}

impl ArtifactLog {
    fn record(&mut self, path: PathBuf) -> PathBuf {
        self.written.push(path.clone());
        path
    }

    fn remove_all(&self) {
        for p in &self.written {
            let _ = fs::remove_file(p);
        }
    }
}

fn preprocess_samples(
    cfg: &PreprocessConfig,
    samples: &[SpectralSample],
    grid: &BandGrid,
) -> Result<(Vec<SpectralSample>, BandGrid)> {
    let mut current: Vec<(String, Vec<f64>, bool)> = samples
        .iter()
        .map(|s| (s.plot_id.clone(), s.values.clone(), s.cloud_flagged))
        .collect();
    let mut current_grid = grid.clone();

    if cfg.resample {
        let srf = binning_srf(
            &current_grid,
            cfg.resample_start_nm,
            cfg.resample_step_nm,
            cfg.resample_fwhm_nm,
        )?;
        for (_, values, _) in &mut current {
            *values = gaussian_resample(values, &current_grid, &srf)?;
        }
        current_grid = srf.to_grid()?;
    }

    if !cfg.mask_centers_nm.is_empty() {
        let mask = BandMask::new(cfg.mask_centers_nm.clone(), cfg.mask_tolerance_nm)?;
        let mut masked_grid = None;
        for (_, values, _) in &mut current {
            let (kept, reduced) = apply_band_mask(values, &current_grid, &mask)?;
            *values = kept;
            masked_grid.get_or_insert(reduced);
        }
        if let Some(g) = masked_grid {
            current_grid = g;
        }
    }

    if cfg.mean_normalize {
        for (_, values, _) in &mut current {
            *values = mean_normalize(values)?;
        }
    }

    let rebuilt = current
        .into_iter()
        .map(|(id, values, cloud)| SpectralSample::new(id, values, &current_grid, cloud))
        .collect::<Result<Vec<_>>>()?;
    Ok((rebuilt, current_grid))
}

/// Runs the full pipeline described by `cfg`, writing all artifacts into
/// `paths.output_dir`.
pub fn run_pipeline(cfg: &RunConfig) -> Result<RunSummary> {
    let seed = cfg.validate()?;
    fs::create_dir_all(&cfg.paths.output_dir)
        .map_err(|e| Error::Io { path: cfg.paths.output_dir.display().to_string(), source: e })?;
    let mut log = ArtifactLog { written: Vec::new() };
    match run_steps(cfg, seed, &mut log) {
        Ok(summary) => Ok(summary),
        Err(e) => {
            log.remove_all();
            Err(e)
        }
    }
}

fn run_steps(cfg: &RunConfig, seed: u64, log: &mut ArtifactLog) -> Result<RunSummary> {
    let out = &cfg.paths.output_dir;

    // Load and preprocess.
    let (raw_samples, raw_grid) = io::load_spectra_csv(&cfg.paths.spectra)?;
    let plots = io::load_plots_csv(&cfg.paths.plots)?;
    let (samples, grid) = preprocess_samples(&cfg.preprocess, &raw_samples, &raw_grid)?;
    let spectra_path = log.record(out.join("preprocessed_spectra.csv"));
    io::save_spectra_csv(&spectra_path, &samples, &grid)?;

    // Assemble and validate.
    let (dataset, assembly_log) = assemble_dataset_logged(&samples, &plots, &grid)?;
    let mut diagnostics: Vec<String> = assembly_log.iter().map(|d| d.to_string()).collect();
    for d in validate_dataset(&dataset) {
        match d {
            Diagnostic::NonFinite { row, band, .. } => {
                return Err(Error::NonFiniteValue {
                    plot_id: dataset.plot_ids()[row].clone(),
                    band,
                })
            }
            Diagnostic::DuplicatePlotId { plot_id } => {
                return Err(Error::DuplicatePlotId(plot_id))
            }
            other => diagnostics.push(other.to_string()),
        }
    }

    let metric = cfg.selection_metric()?;
    let cv = CVConfig { repetitions: cfg.cv.repetitions, seed };
    let mut pipeline = cfg.pipeline()?;

    // Optional tuning, kernel first, then component count.
    if cfg.tune.kernel {
        let mut grid_spec = GridSpec::default();
        if let Some(v) = &cfg.tune.sigma_values {
            grid_spec.sigma_values = v.clone();
        }
        if let Some(v) = &cfg.tune.length_values {
            grid_spec.length_values = v.clone();
        }
        if let Some(v) = &cfg.tune.delta_values {
            grid_spec.delta_values = v.clone();
        }
        let result = grid_search_kernel(&dataset, &pipeline, &grid_spec, &cv, metric)?;
        let path = log.record(out.join("kernel_selection.csv"));
        io::write_kernel_scores(&path, &result)?;
        pipeline = pipeline.with_kernel(result.best)?;
    }
    if cfg.tune.components {
        let result =
            select_components(&dataset, &pipeline, cfg.tune.k_min..=cfg.tune.k_max, &cv, metric)?;
        let path = log.record(out.join("k_selection.csv"));
        io::write_component_scores(&path, &result)?;
        pipeline = pipeline.with_k(result.best);
    }

    // Explained variance of the final extractor over the full dataset.
    let extractor = pipeline.fit_extractor(dataset.x(), dataset.y())?;
    let rows = variance_table(&extractor, dataset.x())?;
    let variance_path = log.record(out.join("variance_table.csv"));
    io::write_variance_table(&variance_path, &rows)?;

    // Cross-validation.
    let report = two_fold_cv(&dataset, &pipeline, &cv)?;
    let folds_path = log.record(out.join("cv_report.csv"));
    io::write_fold_scores(&folds_path, &report.per_repetition)?;
    let predictions_path = log.record(out.join("predictions.csv"));
    io::write_predictions(&predictions_path, &report.pooled_predictions)?;
    let summary_path = log.record(out.join("cv_summary.csv"));
    io::write_cv_summary(&summary_path, &report)?;

    // Band importance over the full dataset.
    let profile = importance_report(&dataset, &pipeline)?;
    let importance_path = log.record(out.join("importance.csv"));
    io::write_importance(&importance_path, &profile)?;

    // Manifest last, naming every artifact.
    let kernel_used = pipeline.regressor.kernel().cloned();
    let manifest_path = log.record(out.join("manifest.json"));
    let artifact_names: Vec<String> = log
        .written
        .iter()
        .filter(|p| *p != &manifest_path)
        .map(|p| p.file_name().unwrap_or_default().to_string_lossy().into_owned())
        .collect();
    let manifest = Manifest {
        tool: "specrich",
        format: 1,
        version: env!("CARGO_PKG_VERSION"),
        seed,
        config: cfg,
        n_samples: dataset.n(),
        n_bands: dataset.m(),
        grid_fingerprint: grid.fingerprint(),
        k_used: pipeline.k,
        kernel_used: kernel_used.as_ref().map(|k| ManifestKernel {
            sigma: k.sigma,
            length_scale: k.length_scale,
            white_noise: k.white_noise,
            dot_enabled: k.dot_enabled,
            rbf_enabled: k.rbf_enabled,
            white_enabled: k.white_enabled,
        }),
        fold_mean_r: report.mean_r,
        fold_mean_rmse: report.mean_rmse,
        pooled_r: report.pooled_r,
        pooled_rmse: report.pooled_rmse,
        diagnostics: &diagnostics,
        artifacts: artifact_names,
    };
    let json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| Error::Config(format!("manifest serialization failed: {e}")))?;
    io::write_atomic(&manifest_path, format!("{json}\n").as_bytes())?;

    Ok(RunSummary {
        n_samples: dataset.n(),
        n_bands: dataset.m(),
        k_used: pipeline.k,
        kernel_used,
        mean_r: report.mean_r,
        mean_rmse: report.mean_rmse,
        pooled_r: report.pooled_r,
        pooled_rmse: report.pooled_rmse,
        diagnostics,
        artifacts: log.written.clone(),
    })
}

/// Convenience used by the CLI and tests: datasets round-trip through the
/// same spectra/plots CSVs the runner consumes.
pub fn save_dataset_csvs(dataset: &Dataset, spectra: &Path, plots: &Path) -> Result<()> {
    let (samples, plot_rows) = dataset.to_components();
    io::save_spectra_csv(spectra, &samples, dataset.grid())?;
    io::save_plots_csv(plots, &plot_rows)
}
