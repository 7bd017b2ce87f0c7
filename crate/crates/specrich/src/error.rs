use thiserror::Error;

/// Coarse failure category, used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    /// Bad configuration or usage (exit code 1).
    Config,
    /// Input data failed validation (exit code 2).
    Validation,
    /// A numerical procedure failed (exit code 3).
    Numerical,
}

/// Errors produced by the specrich pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {path} at row {row}, column {column}: {message}")]
    Parse {
        path: String,
        row: usize,
        column: String,
        message: String,
    },

    #[error("invalid band grid: {0}")]
    InvalidGrid(String),

    #[error("spectrum for plot {plot_id:?} has {got} values but grid has {expected} bands")]
    SampleLengthMismatch {
        plot_id: String,
        got: usize,
        expected: usize,
    },

    #[error("spectrum for plot {plot_id:?} contains a non-finite value at band {band}")]
    NonFiniteValue { plot_id: String, band: usize },

    #[error("spectrum for plot {plot_id:?} does not reference the provided band grid")]
    GridRefMismatch { plot_id: String },

    #[error("invalid plot record {plot_id:?}: {message}")]
    InvalidPlot { plot_id: String, message: String },

    #[error("no matched samples between spectra and plots")]
    NoMatchedSamples,

    #[error("duplicate plot id {0:?}")]
    DuplicatePlotId(String),

    #[error("dataset shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("band {band_name:?} has no source coverage")]
    NoSourceCoverage { band_name: String },

    #[error("band mask removed all bands, leaving an empty spectrum")]
    EmptySpectrum,

    #[error("zero-mean spectrum cannot be mean-normalized")]
    ZeroMeanSpectrum,

    #[error("invalid spectral response set: {0}")]
    InvalidSrf(String),

    #[error("insufficient rank: requested {requested} components but data rank is {rank}")]
    InsufficientRank { requested: usize, rank: usize },

    #[error("zero variance in spectral matrix; nothing to extract")]
    ZeroVariance,

    #[error("zero response variance; supervised extraction is undefined")]
    ZeroResponseVariance,

    #[error("degenerate direction: response is uncorrelated with every band")]
    DegenerateDirection,

    #[error("dimension mismatch: expected {expected} columns, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("kernel matrix not positive definite")]
    NotPositiveDefinite,

    #[error("undefined correlation: an input has zero variance")]
    UndefinedCorrelation,

    #[error("incompatible band grids across datasets")]
    IncompatibleGrids,

    #[error("degenerate partial correlation: residual variance is zero for component {component}")]
    DegeneratePartialCorrelation { component: usize },

    #[error("uninformative model: all partial correlations are zero")]
    UninformativeModel,

    #[error("all grid cells failed to evaluate")]
    AllCellsFailed,

    #[error("model file {path}: {message}")]
    ModelFormat { path: String, message: String },
}

impl Error {
    /// Map this error onto the CLI exit-code category.
    pub fn category(&self) -> ErrorCategory {
        use Error::*;
        match self {
            Config(_) | Io { .. } | ModelFormat { .. } => ErrorCategory::Config,
            Parse { .. }
            | InvalidGrid(_)
            | SampleLengthMismatch { .. }
            | NonFiniteValue { .. }
            | GridRefMismatch { .. }
            | InvalidPlot { .. }
            | NoMatchedSamples
            | DuplicatePlotId(_)
            | ShapeMismatch(_)
            | EmptySpectrum
            | ZeroMeanSpectrum
            | InvalidSrf(_)
            | IncompatibleGrids => ErrorCategory::Validation,
            NoSourceCoverage { .. }
            | InsufficientRank { .. }
            | ZeroVariance
            | ZeroResponseVariance
            | DegenerateDirection
            | DimensionMismatch { .. }
            | NotPositiveDefinite
            | UndefinedCorrelation
            | DegeneratePartialCorrelation { .. }
            | UninformativeModel
            | AllCellsFailed => ErrorCategory::Numerical,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
