//! Domain types for spectra, ground plots, wavelength grids, and the joined
//! modelling dataset.

use std::collections::{BTreeMap, HashSet};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// A wavelength grid: band centers (nm, strictly increasing) paired with the
/// full-width-at-half-maximum of each band (nm).
#[derive(Debug, Clone, PartialEq)]
pub struct BandGrid {
    centers: Vec<f64>,
    fwhm: Vec<f64>,
}

impl BandGrid {
    pub fn new(centers: Vec<f64>, fwhm: Vec<f64>) -> Result<Self> {
        if centers.is_empty() {
            return Err(Error::InvalidGrid("grid has no bands".into()));
        }
        if centers.len() != fwhm.len() {
            return Err(Error::InvalidGrid(format!(
                "{} centers but {} fwhm values",
                centers.len(),
                fwhm.len()
            )));
        }
        for (i, &c) in centers.iter().enumerate() {
            if !c.is_finite() || c <= 0.0 {
                return Err(Error::InvalidGrid(format!("center {i} is {c}, must be positive")));
            }
            if i > 0 && c <= centers[i - 1] {
                return Err(Error::InvalidGrid(format!(
                    "centers not strictly increasing at index {i} ({} then {c})",
                    centers[i - 1]
                )));
            }
        }
        for (i, &w) in fwhm.iter().enumerate() {
            if !w.is_finite() || w <= 0.0 {
                return Err(Error::InvalidGrid(format!("fwhm {i} is {w}, must be positive")));
            }
        }
        Ok(Self { centers, fwhm })
    }

    /// A grid of `count` bands starting at `start` nm, spaced `step` nm apart,
    /// all sharing one FWHM. Used to build binning targets such as the 10.2 nm
    /// aggregation grid.
    pub fn regular(start: f64, step: f64, fwhm: f64, count: usize) -> Result<Self> {
        if step <= 0.0 {
            return Err(Error::InvalidGrid(format!("step {step} must be positive")));
        }
        let centers: Vec<f64> = (0..count).map(|i| start + step * i as f64).collect();
        Self::new(centers, vec![fwhm; count])
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    pub fn fwhm(&self) -> &[f64] {
        &self.fwhm
    }

    /// Content fingerprint used to tie samples to the grid they were read on.
    /// FNV-1a over the bit patterns of centers and widths.
    pub fn fingerprint(&self) -> String {
        let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
        let mut mix = |v: f64| {
            for byte in v.to_bits().to_le_bytes() {
                hash ^= u64::from(byte);
                hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
            }
        };
        for &c in &self.centers {
            mix(c);
        }
        for &w in &self.fwhm {
            mix(w);
        }
        format!("{:016x}", hash)
    }
}

/// One plot's reflectance vector on a named wavelength grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralSample {
    pub plot_id: String,
    pub values: Vec<f64>,
    pub grid_ref: String,
    pub cloud_flagged: bool,
}

impl SpectralSample {
    pub fn new(plot_id: impl Into<String>, values: Vec<f64>, grid: &BandGrid, cloud_flagged: bool) -> Result<Self> {
        let plot_id = plot_id.into();
        if values.len() != grid.len() {
            return Err(Error::SampleLengthMismatch {
                plot_id,
                got: values.len(),
                expected: grid.len(),
            });
        }
        if let Some(band) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue { plot_id, band });
        }
        Ok(Self {
            plot_id,
            values,
            grid_ref: grid.fingerprint(),
            cloud_flagged,
        })
    }
}

/// Ground-truth response for one plot: the count of native vascular species.
#[derive(Debug, Clone, PartialEq)]
pub struct RichnessPlot {
    pub plot_id: String,
    pub region: String,
    pub richness: u32,
    pub plot_area_m2: f64,
    pub survey_date: String,
}

/// Documented default plot footprint (20 m x 20 m).
pub const DEFAULT_PLOT_AREA_M2: f64 = 400.0;

impl RichnessPlot {
    pub fn new(
        plot_id: impl Into<String>,
        region: impl Into<String>,
        richness: u32,
        plot_area_m2: f64,
        survey_date: impl Into<String>,
    ) -> Result<Self> {
        let plot_id = plot_id.into();
        let survey_date = survey_date.into();
        if plot_area_m2.is_nan() || plot_area_m2 <= 0.0 {
            return Err(Error::InvalidPlot {
                plot_id,
                message: format!("plot_area_m2 {plot_area_m2} must be positive"),
            });
        }
        if !is_iso_date(&survey_date) {
            return Err(Error::InvalidPlot {
                plot_id,
                message: format!("survey_date {survey_date:?} is not an ISO-8601 calendar date"),
            });
        }
        Ok(Self {
            plot_id,
            region: region.into(),
            richness,
            plot_area_m2,
            survey_date,
        })
    }
}

/// Validates a `YYYY-MM-DD` calendar date, including day-in-month bounds.
fn is_iso_date(s: &str) -> bool {
    let bytes = s.as_bytes();
    if bytes.len() != 10 || bytes[4] != b'-' || bytes[7] != b'-' {
        return false;
    }
    let year: i32 = match s[0..4].parse() {
        Ok(y) => y,
        Err(_) => return false,
    };
    let month: u32 = match s[5..7].parse() {
        Ok(m) => m,
        Err(_) => return false,
    };
    let day: u32 = match s[8..10].parse() {
        Ok(d) => d,
        Err(_) => return false,
    };
    if !(1..=12).contains(&month) {
        return false;
    }
    let leap = (year % 4 == 0 && year % 100 != 0) || year % 400 == 0;
    let days_in_month = match month {
        1 | 3 | 5 | 7 | 8 | 10 | 12 => 31,
        4 | 6 | 9 | 11 => 30,
        2 if leap => 29,
        _ => 28,
    };
    (1..=days_in_month).contains(&day)
}

/// The joined modelling dataset: reflectance matrix `X` (rows = plots,
/// columns = bands), response vector `y`, and row metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    x: DMatrix<f64>,
    y: DVector<f64>,
    grid: BandGrid,
    plot_ids: Vec<String>,
    regions: Vec<String>,
}

impl Dataset {
    /// Builds a dataset, enforcing shape consistency. Value-level problems
    /// (non-finite entries, duplicate ids) are reported by
    /// [`validate_dataset`] rather than rejected here.
    pub fn new(
        x: DMatrix<f64>,
        y: DVector<f64>,
        grid: BandGrid,
        plot_ids: Vec<String>,
        regions: Vec<String>,
    ) -> Result<Self> {
        let n = x.nrows();
        if y.len() != n || plot_ids.len() != n || regions.len() != n {
            return Err(Error::ShapeMismatch(format!(
                "X has {n} rows but y/plot_ids/regions have {}/{}/{}",
                y.len(),
                plot_ids.len(),
                regions.len()
            )));
        }
        if x.ncols() != grid.len() {
            return Err(Error::ShapeMismatch(format!(
                "X has {} columns but grid has {} bands",
                x.ncols(),
                grid.len()
            )));
        }
        Ok(Self { x, y, grid, plot_ids, regions })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn m(&self) -> usize {
        self.x.ncols()
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn grid(&self) -> &BandGrid {
        &self.grid
    }

    pub fn plot_ids(&self) -> &[String] {
        &self.plot_ids
    }

    pub fn regions(&self) -> &[String] {
        &self.regions
    }

    /// Row subset in the given index order. Used by the cross-validation
    /// harness to carve folds.
    pub fn subset(&self, rows: &[usize]) -> Dataset {
        let x = DMatrix::from_fn(rows.len(), self.m(), |i, j| self.x[(rows[i], j)]);
        let y = DVector::from_fn(rows.len(), |i, _| self.y[rows[i]]);
        let plot_ids = rows.iter().map(|&i| self.plot_ids[i].clone()).collect();
        let regions = rows.iter().map(|&i| self.regions[i].clone()).collect();
        Dataset {
            x,
            y,
            grid: self.grid.clone(),
            plot_ids,
            regions,
        }
    }

    /// Decomposes the dataset back into per-plot samples and plots, so that a
    /// dataset can be re-assembled from its own components.
    pub fn to_components(&self) -> (Vec<SpectralSample>, Vec<RichnessPlot>) {
        let samples = (0..self.n())
            .map(|i| SpectralSample {
                plot_id: self.plot_ids[i].clone(),
                values: self.x.row(i).iter().copied().collect(),
                grid_ref: self.grid.fingerprint(),
                cloud_flagged: false,
            })
            .collect();
        let plots = (0..self.n())
            .map(|i| RichnessPlot {
                plot_id: self.plot_ids[i].clone(),
                region: self.regions[i].clone(),
                richness: self.y[i].max(0.0).round() as u32,
                plot_area_m2: DEFAULT_PLOT_AREA_M2,
                survey_date: "2017-01-01".to_string(),
            })
            .collect();
        (samples, plots)
    }
}

/// A problem found by [`validate_dataset`]. Diagnostics are reports, not
/// failures: a dataset with diagnostics still exists, it is just not fit for
/// modelling.
#[derive(Debug, Clone, PartialEq)]
pub enum Diagnostic {
    NonFinite { row: usize, band: usize, plot_id: String },
    DuplicatePlotId { plot_id: String },
    CloudFlaggedDropped { plot_id: String },
    DuplicateTrainingRow { row_a: usize, row_b: usize },
}

impl std::fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Diagnostic::NonFinite { row, band, plot_id } => {
                write!(f, "non-finite value at row {row}, band {band} (plot {plot_id:?})")
            }
            Diagnostic::DuplicatePlotId { plot_id } => write!(f, "duplicate plot id {plot_id:?}"),
            Diagnostic::CloudFlaggedDropped { plot_id } => {
                write!(f, "cloud-flagged spectrum for plot {plot_id:?} dropped at assembly")
            }
            Diagnostic::DuplicateTrainingRow { row_a, row_b } => {
                write!(f, "rows {row_a} and {row_b} have identical feature vectors")
            }
        }
    }
}

/// Joins spectra to ground plots by plot id, dropping cloud-flagged spectra,
/// and returns the dataset together with a log of dropped samples.
///
/// Row order is ascending by plot id, independent of input ordering.
pub fn assemble_dataset_logged(
    spectra: &[SpectralSample],
    plots: &[RichnessPlot],
    grid: &BandGrid,
) -> Result<(Dataset, Vec<Diagnostic>)> {
    let fingerprint = grid.fingerprint();
    let mut seen = HashSet::new();
    for s in spectra {
        if !seen.insert(s.plot_id.as_str()) {
            return Err(Error::DuplicatePlotId(s.plot_id.clone()));
        }
        if s.values.len() != grid.len() {
            return Err(Error::SampleLengthMismatch {
                plot_id: s.plot_id.clone(),
                got: s.values.len(),
                expected: grid.len(),
            });
        }
        if s.grid_ref != fingerprint {
            return Err(Error::GridRefMismatch { plot_id: s.plot_id.clone() });
        }
    }

    let mut by_id: BTreeMap<&str, &RichnessPlot> = BTreeMap::new();
    for p in plots {
        if by_id.insert(p.plot_id.as_str(), p).is_some() {
            return Err(Error::DuplicatePlotId(p.plot_id.clone()));
        }
    }

    let mut log = Vec::new();
    // BTreeMap keys give the deterministic ascending-id row order.
    let mut matched: BTreeMap<&str, (&SpectralSample, &RichnessPlot)> = BTreeMap::new();
    for s in spectra {
        if let Some(p) = by_id.get(s.plot_id.as_str()) {
            if s.cloud_flagged {
                log.push(Diagnostic::CloudFlaggedDropped { plot_id: s.plot_id.clone() });
            } else {
                matched.insert(s.plot_id.as_str(), (s, p));
            }
        }
    }
    if matched.is_empty() {
        return Err(Error::NoMatchedSamples);
    }

    let n = matched.len();
    let m = grid.len();
    let mut x = DMatrix::zeros(n, m);
    let mut y = DVector::zeros(n);
    let mut plot_ids = Vec::with_capacity(n);
    let mut regions = Vec::with_capacity(n);
    for (i, (_, (s, p))) in matched.iter().enumerate() {
        for (j, &v) in s.values.iter().enumerate() {
            x[(i, j)] = v;
        }
        y[i] = f64::from(p.richness);
        plot_ids.push(p.plot_id.clone());
        regions.push(p.region.clone());
    }

    let dataset = Dataset::new(x, y, grid.clone(), plot_ids, regions)?;
    Ok((dataset, log))
}

/// [`assemble_dataset_logged`] without the drop log.
pub fn assemble_dataset(
    spectra: &[SpectralSample],
    plots: &[RichnessPlot],
    grid: &BandGrid,
) -> Result<Dataset> {
    assemble_dataset_logged(spectra, plots, grid).map(|(d, _)| d)
}

/// Checks the dataset's type invariants and returns one diagnostic per
/// violation. An empty list means the dataset is fit for modelling.
pub fn validate_dataset(d: &Dataset) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for id in d.plot_ids() {
        if !seen.insert(id.as_str()) {
            out.push(Diagnostic::DuplicatePlotId { plot_id: id.clone() });
        }
    }
    for i in 0..d.n() {
        for j in 0..d.m() {
            if !d.x()[(i, j)].is_finite() {
                out.push(Diagnostic::NonFinite {
                    row: i,
                    band: j,
                    plot_id: d.plot_ids()[i].clone(),
                });
            }
        }
    }
    // Duplicate feature rows are legal but make the white kernel fire
    // off-diagonal, so they are worth surfacing.
    for i in 0..d.n() {
        for j in (i + 1)..d.n() {
            if (0..d.m()).all(|c| d.x()[(i, c)] == d.x()[(j, c)]) {
                out.push(Diagnostic::DuplicateTrainingRow { row_a: i, row_b: j });
            }
        }
    }
    out
}
