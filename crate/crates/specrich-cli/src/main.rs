//! `specrich` — species-richness modelling from hyperspectral reflectance.
//!
//! Every subcommand reads and writes local CSV/TOML files; nothing touches
//! the network. Randomized steps take explicit seeds, so identical
//! invocations produce byte-identical outputs regardless of `--threads`.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use specrich::error::{Error, ErrorCategory, Result};
use specrich::evaluation::{pooled_region_eval, two_fold_cv, CVConfig, CVReport};
use specrich::features::{transform, variance_table, ExtractionMethod};
use specrich::importance::importance_report;
use specrich::io;
use specrich::pipeline::{
    GprParams, KrrParams, PipelineSpec, RegressorKind, RegressorSpec, RfrParams,
};
use specrich::preprocess::{
    apply_band_mask, binning_srf, gaussian_resample, mean_normalize, BandMask,
    DEFAULT_MASKED_CENTERS_NM, DEFAULT_MASK_TOLERANCE_NM,
};
use specrich::regression::KernelConfig;
use specrich::runner::{load_run_config, run_pipeline, save_dataset_csvs};
use specrich::selection::{grid_search_kernel, select_components, GridSpec, SelectionMetric};
use specrich::spectral::{assemble_dataset_logged, BandGrid, Dataset, SpectralSample};
use specrich::synthetic::generate_synthetic_dataset;

#[derive(Parser, Debug)]
#[command(
    name = "specrich",
    version,
    about = "Predict plant species richness from hyperspectral reflectance",
    propagate_version = true
)]
struct Cli {
    /// Cap the number of worker threads (default: all available cores).
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Aggregate bands, mask wavelengths, and mean-normalize spectra.
    Preprocess(PreprocessArgs),
    /// Simulate a multispectral sensor by applying a spectral response set.
    SimulateMs(SimulateMsArgs),
    /// Fit a model on the full dataset and save it to a file.
    Fit(FitArgs),
    /// Score a configuration with repeated two-fold cross-validation.
    Evaluate(EvaluateArgs),
    /// Grid-search the kernel parameters (sigma, length scale, white noise).
    TuneKernel(TuneKernelArgs),
    /// Scan component counts and report cross-validated scores.
    TuneK(TuneKArgs),
    /// Compute per-band relative importance for an extraction model.
    Importance(ImportanceArgs),
    /// Generate a deterministic synthetic dataset.
    Synth(SynthArgs),
    /// Execute a full pipeline run described by a TOML config file.
    Run(RunArgs),
}

#[derive(Args, Debug)]
struct DataArgs {
    /// Spectra CSV with header plot_id,cloud,wl_<center>x<fwhm>,...
    #[arg(long, value_name = "FILE")]
    spectra: PathBuf,
    /// Plots CSV with header plot_id,region,richness,plot_area_m2,survey_date.
    #[arg(long, value_name = "FILE")]
    plots: PathBuf,
}

#[derive(Args, Debug)]
struct ModelArgs {
    /// Feature extraction method: pca, cca, or pls.
    #[arg(long, default_value = "pls")]
    method: String,
    /// Number of extracted components.
    #[arg(long, default_value_t = 2)]
    k: usize,
    /// Regressor: krr, gpr, or rfr.
    #[arg(long, default_value = "krr")]
    regressor: String,
    /// Dot-product kernel offset sigma.
    #[arg(long, default_value_t = 1e3, value_name = "SIGMA")]
    sigma: f64,
    /// RBF kernel length scale.
    #[arg(long, default_value_t = 1e3, value_name = "L")]
    length_scale: f64,
    /// White kernel magnitude added on exact sample equality.
    #[arg(long, default_value_t = 10.0, value_name = "DELTA")]
    white_noise: f64,
    /// Disable the dot-product kernel term.
    #[arg(long)]
    no_dot: bool,
    /// Disable the RBF kernel term.
    #[arg(long)]
    no_rbf: bool,
    /// Disable the white kernel term.
    #[arg(long)]
    no_white: bool,
    /// Ridge penalty for kernel ridge regression.
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    /// Observation noise standard deviation for GPR.
    #[arg(long, default_value_t = 1.0)]
    epsilon: f64,
    /// Skip marginal-likelihood optimization of the GPR kernel parameters.
    #[arg(long)]
    no_optimize: bool,
    /// Number of trees for random forest regression.
    #[arg(long, default_value_t = 100)]
    trees: usize,
    /// Train each tree on the full sample instead of a bootstrap resample.
    #[arg(long)]
    no_bootstrap: bool,
    /// Fraction of features considered per split in random forests.
    #[arg(long, default_value_t = 1.0 / 3.0)]
    max_features: f64,
}

impl ModelArgs {
    fn kernel(&self) -> KernelConfig {
        KernelConfig {
            sigma: self.sigma,
            length_scale: self.length_scale,
            white_noise: self.white_noise,
            dot_enabled: !self.no_dot,
            rbf_enabled: !self.no_rbf,
            white_enabled: !self.no_white,
        }
    }

    fn pipeline(&self) -> Result<PipelineSpec> {
        let method = ExtractionMethod::parse(&self.method)?;
        let regressor = match RegressorKind::parse(&self.regressor)? {
            RegressorKind::Krr => {
                RegressorSpec::Krr(KrrParams { kernel: self.kernel(), lambda: self.lambda })
            }
            RegressorKind::Gpr => RegressorSpec::Gpr(GprParams {
                kernel: self.kernel(),
                epsilon: self.epsilon,
                optimize: !self.no_optimize,
            }),
            RegressorKind::Rfr => RegressorSpec::Rfr(RfrParams {
                trees: self.trees,
                bootstrap: !self.no_bootstrap,
                max_features: self.max_features,
            }),
        };
        PipelineSpec::new(method, self.k, regressor)
    }
}

#[derive(Args, Debug)]
struct CvArgs {
    /// Number of two-fold cross-validation repetitions.
    #[arg(long, default_value_t = 100)]
    reps: usize,
    /// Master seed; identical seeds reproduce results exactly.
    #[arg(long)]
    seed: u64,
}

impl CvArgs {
    fn config(&self) -> CVConfig {
        CVConfig { repetitions: self.reps, seed: self.seed }
    }
}

#[derive(Args, Debug)]
struct PreprocessArgs {
    /// Input spectra CSV.
    #[arg(long, value_name = "FILE")]
    spectra: PathBuf,
    /// Output CSV for preprocessed spectra.
    #[arg(long, value_name = "FILE")]
    output: PathBuf,
    /// Resample onto the bands of this SRF CSV instead of a regular grid.
    #[arg(long, value_name = "FILE", conflicts_with_all = ["step", "fwhm", "start"])]
    srf: Option<PathBuf>,
    /// Aggregate onto a regular grid with this step, in nm.
    #[arg(long, value_name = "NM")]
    step: Option<f64>,
    /// FWHM of the aggregation bins, in nm (defaults to the step).
    #[arg(long, value_name = "NM")]
    fwhm: Option<f64>,
    /// Center of the first aggregation bin (defaults to the first band).
    #[arg(long, value_name = "NM")]
    start: Option<f64>,
    /// Skip wavelength masking entirely.
    #[arg(long)]
    no_mask: bool,
    /// Wavelength centers to mask, in nm (comma-separated or repeated).
    #[arg(long, value_delimiter = ',', value_name = "NM")]
    mask_center: Vec<f64>,
    /// Match tolerance for masked centers, in nm.
    #[arg(long, default_value_t = DEFAULT_MASK_TOLERANCE_NM, value_name = "NM")]
    mask_tolerance: f64,
    /// Skip mean normalization.
    #[arg(long)]
    no_normalize: bool,
}

#[derive(Args, Debug)]
struct SimulateMsArgs {
    /// Input spectra CSV.
    #[arg(long, value_name = "FILE")]
    spectra: PathBuf,
    /// Spectral response CSV with header band_name,center_nm,fwhm_nm.
    #[arg(long, value_name = "FILE")]
    srf: PathBuf,
    /// Output CSV for the simulated spectra.
    #[arg(long, value_name = "FILE")]
    output: PathBuf,
}

#[derive(Args, Debug)]
struct FitArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    model: ModelArgs,
    /// Seed for stochastic regressors (random forests).
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output path for the fitted model.
    #[arg(long, value_name = "FILE")]
    output: PathBuf,
    /// Optional output CSV for the explained-variance table.
    #[arg(long, value_name = "FILE")]
    variance_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    cv: CvArgs,
    /// Directory for cv_report.csv, predictions.csv, and cv_summary.csv.
    #[arg(long, value_name = "DIR")]
    output_dir: PathBuf,
    /// Pool rows across regions (plot ids qualified per region).
    #[arg(long)]
    pool_regions: bool,
}

#[derive(Args, Debug)]
struct TuneKernelArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    cv: CvArgs,
    /// Grid values for sigma (default: 1e-5..1e5 in decade steps).
    #[arg(long, value_delimiter = ',', value_name = "LIST")]
    sigma_values: Option<Vec<f64>>,
    /// Grid values for the length scale (default: decades).
    #[arg(long, value_delimiter = ',', value_name = "LIST")]
    length_values: Option<Vec<f64>>,
    /// Grid values for the white-noise magnitude (default: decades).
    #[arg(long, value_delimiter = ',', value_name = "LIST")]
    delta_values: Option<Vec<f64>>,
    /// Selection metric: max_r or min_rmse.
    #[arg(long, default_value = "max_r")]
    metric: String,
    /// Output CSV for the score table.
    #[arg(long, value_name = "FILE")]
    output: PathBuf,
}

#[derive(Args, Debug)]
struct TuneKArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    cv: CvArgs,
    /// Smallest component count to try.
    #[arg(long, default_value_t = 1)]
    k_min: usize,
    /// Largest component count to try.
    #[arg(long, default_value_t = 10)]
    k_max: usize,
    /// Selection metric: max_r or min_rmse.
    #[arg(long, default_value = "max_r")]
    metric: String,
    /// Output CSV for the score table.
    #[arg(long, value_name = "FILE")]
    output: PathBuf,
}

#[derive(Args, Debug)]
struct ImportanceArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Feature extraction method: pca, cca, or pls.
    #[arg(long, default_value = "pls")]
    method: String,
    /// Number of extracted components.
    #[arg(long, default_value_t = 2)]
    k: usize,
    /// Output CSV with header wavelength_nm,raw_importance,normalized_importance.
    #[arg(long, value_name = "FILE")]
    output: PathBuf,
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// Master seed for the generator.
    #[arg(long)]
    seed: u64,
    /// Number of plots to generate.
    #[arg(long, default_value_t = 40)]
    rows: usize,
    /// Number of spectral bands.
    #[arg(long, default_value_t = 52)]
    bands: usize,
    /// Center of the first band, in nm.
    #[arg(long, default_value_t = 402.8, value_name = "NM")]
    start: f64,
    /// Band spacing, in nm.
    #[arg(long, default_value_t = 10.2, value_name = "NM")]
    step: f64,
    /// Band FWHM, in nm (defaults to the step).
    #[arg(long, value_name = "NM")]
    fwhm: Option<f64>,
    /// Number of latent spectral patterns driving the response.
    #[arg(long, default_value_t = 2)]
    patterns: usize,
    /// Standard deviation of the response noise.
    #[arg(long, default_value_t = 1.0)]
    noise_sd: f64,
    /// Baseline richness before pattern contributions.
    #[arg(long, default_value_t = 40.0)]
    offset: f64,
    /// Output CSV for the spectra.
    #[arg(long, value_name = "FILE")]
    spectra_out: PathBuf,
    /// Output CSV for the plots.
    #[arg(long, value_name = "FILE")]
    plots_out: PathBuf,
}

#[derive(Args, Debug)]
struct RunArgs {
    /// TOML run configuration.
    #[arg(long, value_name = "FILE")]
    config: PathBuf,
    /// Override cv.seed from the config file.
    #[arg(long)]
    seed: Option<u64>,
    /// Override cv.repetitions from the config file.
    #[arg(long)]
    reps: Option<usize>,
    /// Override paths.output_dir from the config file.
    #[arg(long, value_name = "DIR")]
    output_dir: Option<PathBuf>,
    /// Override model.method from the config file.
    #[arg(long)]
    method: Option<String>,
    /// Override model.k from the config file.
    #[arg(long)]
    k: Option<usize>,
    /// Override model.regressor from the config file.
    #[arg(long)]
    regressor: Option<String>,
}

fn parse_metric(name: &str) -> Result<SelectionMetric> {
    match name {
        "max_r" => Ok(SelectionMetric::MaxR),
        "min_rmse" => Ok(SelectionMetric::MinRmse),
        other => Err(Error::Config(format!(
            "--metric must be max_r or min_rmse, got {other:?}"
        ))),
    }
}

fn load_dataset(data: &DataArgs) -> Result<Dataset> {
    let (samples, grid) = io::load_spectra_csv(&data.spectra)?;
    let plots = io::load_plots_csv(&data.plots)?;
    let (dataset, diagnostics) = assemble_dataset_logged(&samples, &plots, &grid)?;
    for d in &diagnostics {
        eprintln!("note: {d}");
    }
    Ok(dataset)
}

fn write_cv_artifacts(dir: &Path, report: &CVReport) -> Result<()> {
    std::fs::create_dir_all(dir)
        .map_err(|e| Error::Io { path: dir.display().to_string(), source: e })?;
    io::write_fold_scores(&dir.join("cv_report.csv"), &report.per_repetition)?;
    io::write_predictions(&dir.join("predictions.csv"), &report.pooled_predictions)?;
    io::write_cv_summary(&dir.join("cv_summary.csv"), report)
}

fn cmd_preprocess(args: &PreprocessArgs) -> Result<()> {
    let (samples, mut grid) = io::load_spectra_csv(&args.spectra)?;
    let mut rows: Vec<(String, Vec<f64>, bool)> = samples
        .iter()
        .map(|s| (s.plot_id.clone(), s.values.clone(), s.cloud_flagged))
        .collect();

    if let Some(srf_path) = &args.srf {
        let srf = io::load_srf_csv(srf_path)?;
        for (_, values, _) in &mut rows {
            *values = gaussian_resample(values, &grid, &srf)?;
        }
        grid = srf.to_grid()?;
    } else if args.step.is_some() || args.fwhm.is_some() || args.start.is_some() {
        let step = args
            .step
            .ok_or_else(|| Error::Config("--step is required with --fwhm or --start".into()))?;
        let srf = binning_srf(&grid, args.start, step, args.fwhm.unwrap_or(step))?;
        for (_, values, _) in &mut rows {
            *values = gaussian_resample(values, &grid, &srf)?;
        }
        grid = srf.to_grid()?;
    }

    if !args.no_mask {
        let centers = if args.mask_center.is_empty() {
            DEFAULT_MASKED_CENTERS_NM.to_vec()
        } else {
            args.mask_center.clone()
        };
        let mask = BandMask::new(centers, args.mask_tolerance)?;
        let mut reduced_grid = None;
        for (_, values, _) in &mut rows {
            let (kept, reduced) = apply_band_mask(values, &grid, &mask)?;
            *values = kept;
            reduced_grid.get_or_insert(reduced);
        }
        if let Some(g) = reduced_grid {
            grid = g;
        }
    }

    if !args.no_normalize {
        for (_, values, _) in &mut rows {
            *values = mean_normalize(values)?;
        }
    }

    let rebuilt = rows
        .into_iter()
        .map(|(id, values, cloud)| SpectralSample::new(id, values, &grid, cloud))
        .collect::<Result<Vec<_>>>()?;
    io::save_spectra_csv(&args.output, &rebuilt, &grid)?;
    println!(
        "wrote {} spectra with {} bands to {}",
        rebuilt.len(),
        grid.len(),
        args.output.display()
    );
    Ok(())
}

fn cmd_simulate_ms(args: &SimulateMsArgs) -> Result<()> {
    let (samples, grid) = io::load_spectra_csv(&args.spectra)?;
    let srf = io::load_srf_csv(&args.srf)?;
    let target = srf.to_grid()?;
    let simulated = samples
        .iter()
        .map(|s| {
            let values = gaussian_resample(&s.values, &grid, &srf)?;
            SpectralSample::new(s.plot_id.clone(), values, &target, s.cloud_flagged)
        })
        .collect::<Result<Vec<_>>>()?;
    io::save_spectra_csv(&args.output, &simulated, &target)?;
    println!(
        "simulated {} bands for {} spectra into {}",
        target.len(),
        simulated.len(),
        args.output.display()
    );
    Ok(())
}

fn cmd_fit(args: &FitArgs) -> Result<()> {
    let dataset = load_dataset(&args.data)?;
    let pipeline = args.model.pipeline()?;
    let extractor = pipeline.fit_extractor(dataset.x(), dataset.y())?;
    if let Some(path) = &args.variance_out {
        let rows = variance_table(&extractor, dataset.x())?;
        io::write_variance_table(path, &rows)?;
    }
    let t = transform(&extractor, dataset.x())?;
    let trained = pipeline.fit_regressor(&t, dataset.y(), args.seed)?;
    io::save_model(&args.output, &trained)?;
    let fitted = trained.predict(&t)?;
    let truth: Vec<f64> = dataset.y().iter().copied().collect();
    let preds: Vec<f64> = fitted.iter().copied().collect();
    let r = specrich::evaluation::pearson_r(&truth, &preds)?;
    let rmse = specrich::evaluation::rmse(&truth, &preds)?;
    println!(
        "fitted {}(k={}) + {} on n={}, m={}; training r={:.4}, rmse={:.4}; model written to {}",
        pipeline.method.name(),
        pipeline.k,
        pipeline.regressor.kind().name(),
        dataset.n(),
        dataset.m(),
        r,
        rmse,
        args.output.display()
    );
    Ok(())
}

fn cmd_evaluate(args: &EvaluateArgs) -> Result<()> {
    let dataset = load_dataset(&args.data)?;
    let pipeline = args.model.pipeline()?;
    let cv = args.cv.config();
    let report = if args.pool_regions {
        let mut groups: Vec<(String, Vec<usize>)> = Vec::new();
        for (row, region) in dataset.regions().iter().enumerate() {
            match groups.iter_mut().find(|(name, _)| name == region) {
                Some((_, rows)) => rows.push(row),
                None => groups.push((region.clone(), vec![row])),
            }
        }
        let parts: Vec<Dataset> = groups.iter().map(|(_, rows)| dataset.subset(rows)).collect();
        pooled_region_eval(&parts, &pipeline, &cv)?
    } else {
        two_fold_cv(&dataset, &pipeline, &cv)?
    };
    write_cv_artifacts(&args.output_dir, &report)?;
    println!(
        "cv over {} repetitions: fold-mean r={:.4}, rmse={:.4}; pooled r={:.4}, rmse={:.4}",
        cv.repetitions, report.mean_r, report.mean_rmse, report.pooled_r, report.pooled_rmse
    );
    println!("reports written to {}", args.output_dir.display());
    Ok(())
}

fn cmd_tune_kernel(args: &TuneKernelArgs) -> Result<()> {
    let dataset = load_dataset(&args.data)?;
    let pipeline = args.model.pipeline()?;
    let metric = parse_metric(&args.metric)?;
    let mut grid = GridSpec::default();
    if let Some(v) = &args.sigma_values {
        grid.sigma_values = v.clone();
    }
    if let Some(v) = &args.length_values {
        grid.length_values = v.clone();
    }
    if let Some(v) = &args.delta_values {
        grid.delta_values = v.clone();
    }
    let result = grid_search_kernel(&dataset, &pipeline, &grid, &args.cv.config(), metric)?;
    io::write_kernel_scores(&args.output, &result)?;
    println!(
        "best kernel: sigma={}, length_scale={}, white_noise={}; table written to {}",
        result.best.sigma,
        result.best.length_scale,
        result.best.white_noise,
        args.output.display()
    );
    Ok(())
}

fn cmd_tune_k(args: &TuneKArgs) -> Result<()> {
    let dataset = load_dataset(&args.data)?;
    let pipeline = args.model.pipeline()?;
    let metric = parse_metric(&args.metric)?;
    let result = select_components(
        &dataset,
        &pipeline,
        args.k_min..=args.k_max,
        &args.cv.config(),
        metric,
    )?;
    io::write_component_scores(&args.output, &result)?;
    println!(
        "best component count: k={}; table written to {}",
        result.best,
        args.output.display()
    );
    Ok(())
}

fn cmd_importance(args: &ImportanceArgs) -> Result<()> {
    let dataset = load_dataset(&args.data)?;
    let method = ExtractionMethod::parse(&args.method)?;
    let pipeline = PipelineSpec::new(method, args.k, RegressorSpec::Krr(KrrParams::default()))?;
    let profile = importance_report(&dataset, &pipeline)?;
    io::write_importance(&args.output, &profile)?;
    let peak = profile
        .normalized
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, v)| (profile.band_centers[i], *v));
    if let Some((wavelength, share)) = peak {
        println!(
            "importance profile over {} bands written to {}; peak at {wavelength} nm ({:.1}% of total)",
            profile.band_centers.len(),
            args.output.display(),
            share * 100.0
        );
    }
    Ok(())
}

fn cmd_synth(args: &SynthArgs) -> Result<()> {
    let fwhm = args.fwhm.unwrap_or(args.step);
    let grid = BandGrid::regular(args.start, args.step, fwhm, args.bands)?;
    let dataset = generate_synthetic_dataset(
        args.seed,
        args.rows,
        &grid,
        args.patterns,
        args.noise_sd,
        args.offset,
    )?;
    save_dataset_csvs(&dataset, &args.spectra_out, &args.plots_out)?;
    println!(
        "generated {} plots with {} bands (seed {}); spectra in {}, plots in {}",
        dataset.n(),
        dataset.m(),
        args.seed,
        args.spectra_out.display(),
        args.plots_out.display()
    );
    Ok(())
}

fn cmd_run(args: &RunArgs) -> Result<()> {
    let mut cfg = load_run_config(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.cv.seed = Some(seed);
    }
    if let Some(reps) = args.reps {
        cfg.cv.repetitions = reps;
    }
    if let Some(dir) = &args.output_dir {
        cfg.paths.output_dir = dir.clone();
    }
    if let Some(method) = &args.method {
        cfg.model.method = method.clone();
    }
    if let Some(k) = args.k {
        cfg.model.k = k;
    }
    if let Some(regressor) = &args.regressor {
        cfg.model.regressor = regressor.clone();
    }
    let summary = run_pipeline(&cfg)?;
    for note in &summary.diagnostics {
        eprintln!("note: {note}");
    }
    println!(
        "run complete: n={}, bands={}, k={}; fold-mean r={:.4}, rmse={:.4}; pooled r={:.4}, rmse={:.4}",
        summary.n_samples,
        summary.n_bands,
        summary.k_used,
        summary.mean_r,
        summary.mean_rmse,
        summary.pooled_r,
        summary.pooled_rmse
    );
    let names: BTreeSet<String> = summary
        .artifacts
        .iter()
        .filter_map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
        .collect();
    println!(
        "{} artifacts in {}: {}",
        names.len(),
        cfg.paths.output_dir.display(),
        names.into_iter().collect::<Vec<_>>().join(", ")
    );
    Ok(())
}

fn dispatch(command: &Command) -> Result<()> {
    match command {
        Command::Preprocess(args) => cmd_preprocess(args),
        Command::SimulateMs(args) => cmd_simulate_ms(args),
        Command::Fit(args) => cmd_fit(args),
        Command::Evaluate(args) => cmd_evaluate(args),
        Command::TuneKernel(args) => cmd_tune_kernel(args),
        Command::TuneK(args) => cmd_tune_k(args),
        Command::Importance(args) => cmd_importance(args),
        Command::Synth(args) => cmd_synth(args),
        Command::Run(args) => cmd_run(args),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests arrive as "errors" but exit cleanly.
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(1);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: could not configure the thread pool: {e}");
            return ExitCode::from(1);
        }
    }
    match dispatch(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.category() {
                ErrorCategory::Config => 1,
                ErrorCategory::Validation => 2,
                ErrorCategory::Numerical => 3,
            })
        }
    }
}
