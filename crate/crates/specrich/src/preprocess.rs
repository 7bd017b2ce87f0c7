//! Spectral preprocessing: Gaussian band aggregation, band masking,
//! brightness normalization, and multispectral simulation.
//!
//! All operations work on a single reflectance vector plus its [`BandGrid`];
//! callers map them over sample collections.

use crate::error::{Error, Result};
use crate::spectral::BandGrid;

/// One destination band of a spectral response function: a Gaussian centered
/// at `center_nm` whose full width at half maximum is `fwhm_nm`.
#[derive(Debug, Clone, PartialEq)]
pub struct SrfBand {
    pub name: String,
    pub center_nm: f64,
    pub fwhm_nm: f64,
}

/// An ordered set of destination bands.
#[derive(Debug, Clone, PartialEq)]
pub struct SrfSet {
    bands: Vec<SrfBand>,
}

impl SrfSet {
    /// Bands must be non-empty with unique names, finite positive centers,
    /// and positive fwhm.
    pub fn new(bands: Vec<SrfBand>) -> Result<Self> {
        if bands.is_empty() {
            return Err(Error::InvalidSrf("band set is empty".into()));
        }
        let mut seen = std::collections::BTreeSet::new();
        for band in &bands {
            if band.name.is_empty() {
                return Err(Error::InvalidSrf("band name is empty".into()));
            }
            if !seen.insert(band.name.clone()) {
                return Err(Error::InvalidSrf(format!("duplicate band name {:?}", band.name)));
            }
            if !band.center_nm.is_finite() || band.center_nm <= 0.0 {
                return Err(Error::InvalidSrf(format!(
                    "band {:?} has invalid center {}",
                    band.name, band.center_nm
                )));
            }
            if !band.fwhm_nm.is_finite() || band.fwhm_nm <= 0.0 {
                return Err(Error::InvalidSrf(format!(
                    "band {:?} has non-positive fwhm {}",
                    band.name, band.fwhm_nm
                )));
            }
        }
        Ok(SrfSet { bands })
    }

    pub fn bands(&self) -> &[SrfBand] {
        &self.bands
    }

    pub fn len(&self) -> usize {
        self.bands.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bands.is_empty()
    }

    /// Builds the band grid spanned by this set. Requires strictly
    /// increasing centers (true for every sensor definition we handle).
    pub fn to_grid(&self) -> Result<BandGrid> {
        let centers: Vec<f64> = self.bands.iter().map(|b| b.center_nm).collect();
        let fwhm: Vec<f64> = self.bands.iter().map(|b| b.fwhm_nm).collect();
        BandGrid::new(centers, fwhm)
    }
}

/// Wavelength regions to drop, matched against band centers with an absolute
/// tolerance in nanometers.
#[derive(Debug, Clone, PartialEq)]
pub struct BandMask {
    remove_centers: Vec<f64>,
    tolerance_nm: f64,
}

/// Default matching tolerance for masked centers.
pub const DEFAULT_MASK_TOLERANCE_NM: f64 = 0.5;

/// Band centers (nm) affected by water-vapor features and sensor artifacts in
/// the 400-1000 nm range; removed by the default preprocessing chain.
pub const DEFAULT_MASKED_CENTERS_NM: [f64; 8] =
    [759.0, 769.0, 933.4, 943.4, 953.2, 402.8, 410.3, 999.5];

impl BandMask {
    pub fn new(remove_centers: Vec<f64>, tolerance_nm: f64) -> Result<Self> {
        if !(tolerance_nm.is_finite() && tolerance_nm >= 0.0) {
            return Err(Error::Config(format!(
                "mask tolerance must be non-negative, got {tolerance_nm}"
            )));
        }
        for &c in &remove_centers {
            if !c.is_finite() {
                return Err(Error::Config("mask center is not finite".into()));
            }
        }
        Ok(BandMask { remove_centers, tolerance_nm })
    }

    /// The water-vapor/artifact mask with the default 0.5 nm tolerance.
    pub fn default_mask() -> Self {
        BandMask {
            remove_centers: DEFAULT_MASKED_CENTERS_NM.to_vec(),
            tolerance_nm: DEFAULT_MASK_TOLERANCE_NM,
        }
    }

    pub fn remove_centers(&self) -> &[f64] {
        &self.remove_centers
    }

    pub fn tolerance_nm(&self) -> f64 {
        self.tolerance_nm
    }

    fn matches(&self, center: f64) -> bool {
        self.remove_centers.iter().any(|&c| (center - c).abs() <= self.tolerance_nm)
    }
}

const FWHM_TO_SD: f64 = 2.354_820_045_030_949_3; // 2 sqrt(2 ln 2)

/// Aggregates a spectrum onto destination bands with Gaussian weights.
///
/// For destination band `j`, source bands within `3 * fwhm_j` of the center
/// contribute with weight `exp(-(lambda_i - c_j)^2 / (2 sd_j^2))` where
/// `sd_j = fwhm_j / (2 sqrt(2 ln 2))`; weights are renormalized to sum to 1,
/// so each output is a convex combination of its window. The sum is anchored
/// at the window minimum and clamped, so constant spectra are preserved
/// bit-exactly and the output never leaves the window's value range. A
/// destination band whose window contains no source band is an error naming
/// that band.
pub fn gaussian_resample(values: &[f64], src: &BandGrid, dst: &SrfSet) -> Result<Vec<f64>> {
    if values.len() != src.len() {
        return Err(Error::DimensionMismatch { expected: src.len(), got: values.len() });
    }
    let centers = src.centers();
    let mut out = Vec::with_capacity(dst.len());
    for band in dst.bands() {
        let sd = band.fwhm_nm / FWHM_TO_SD;
        let window = 3.0 * band.fwhm_nm;
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        let mut weight_sum = 0.0;
        for (i, &lambda) in centers.iter().enumerate() {
            let d = lambda - band.center_nm;
            if d.abs() <= window {
                weight_sum += (-d * d / (2.0 * sd * sd)).exp();
                lo = lo.min(values[i]);
                hi = hi.max(values[i]);
            }
        }
        if weight_sum <= 0.0 {
            return Err(Error::NoSourceCoverage { band_name: band.name.clone() });
        }
        let mut acc = 0.0;
        for (i, &lambda) in centers.iter().enumerate() {
            let d = lambda - band.center_nm;
            if d.abs() <= window {
                let w = (-d * d / (2.0 * sd * sd)).exp();
                acc += w * (values[i] - lo);
            }
        }
        out.push((lo + acc / weight_sum).clamp(lo, hi));
    }
    Ok(out)
}

/// Removes masked bands, returning the reduced spectrum and its grid.
///
/// A mask matching nothing returns the input unchanged; a mask removing
/// every band is an error.
pub fn apply_band_mask(
    values: &[f64],
    grid: &BandGrid,
    mask: &BandMask,
) -> Result<(Vec<f64>, BandGrid)> {
    if values.len() != grid.len() {
        return Err(Error::DimensionMismatch { expected: grid.len(), got: values.len() });
    }
    let mut kept_values = Vec::with_capacity(values.len());
    let mut kept_centers = Vec::with_capacity(values.len());
    let mut kept_fwhm = Vec::with_capacity(values.len());
    for (i, &value) in values.iter().enumerate() {
        let center = grid.centers()[i];
        if !mask.matches(center) {
            kept_values.push(value);
            kept_centers.push(center);
            kept_fwhm.push(grid.fwhm()[i]);
        }
    }
    if kept_values.is_empty() {
        return Err(Error::EmptySpectrum);
    }
    let reduced = BandGrid::new(kept_centers, kept_fwhm)?;
    Ok((kept_values, reduced))
}

/// Threshold below which a spectrum mean counts as zero.
const MEAN_EPS: f64 = 1e-15;

/// Divides a spectrum by its mean, removing brightness differences caused by
/// viewing and illumination geometry. The output always has mean 1.
pub fn mean_normalize(values: &[f64]) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(Error::EmptySpectrum);
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    if mean.abs() <= MEAN_EPS {
        return Err(Error::ZeroMeanSpectrum);
    }
    Ok(values.iter().map(|v| v / mean).collect())
}

/// Simulates a broader-band sensor from a fine-resolution spectrum. This is
/// the same Gaussian aggregation as [`gaussian_resample`]; the band names of
/// the output live in `srf`.
pub fn simulate_multispectral(values: &[f64], src: &BandGrid, srf: &SrfSet) -> Result<Vec<f64>> {
    gaussian_resample(values, src, srf)
}

/// Builds an evenly spaced binning SRF over the span of a source grid:
/// centers every `step_nm` starting at `start_nm` (default: the first source
/// center), each with the given fwhm, stopping at the last source center.
pub fn binning_srf(
    src: &BandGrid,
    start_nm: Option<f64>,
    step_nm: f64,
    fwhm_nm: f64,
) -> Result<SrfSet> {
    if !(step_nm.is_finite() && step_nm > 0.0) {
        return Err(Error::Config(format!("bin step must be positive, got {step_nm}")));
    }
    if !(fwhm_nm.is_finite() && fwhm_nm > 0.0) {
        return Err(Error::Config(format!("bin fwhm must be positive, got {fwhm_nm}")));
    }
    let first = src.centers()[0];
    let last = src.centers()[src.len() - 1];
    let start = start_nm.unwrap_or(first);
    if !start.is_finite() || start <= 0.0 {
        return Err(Error::Config(format!("bin start must be positive, got {start}")));
    }
    let mut bands = Vec::new();
    let mut i = 0usize;
    loop {
        let center = start + step_nm * i as f64;
        if center > last + 1e-9 {
            break;
        }
        bands.push(SrfBand {
            name: format!("bin_{i:03}"),
            center_nm: center,
            fwhm_nm,
        });
        i += 1;
    }
    if bands.is_empty() {
        return Err(Error::Config(format!(
            "bin start {start} lies beyond the last source band {last}"
        )));
    }
    SrfSet::new(bands)
}
