//! File formats: CSV readers and writers for spectra, plots, and spectral
//! response functions; report writers for the pipeline artifacts; and a
//! versioned text format for trained models.
//!
//! Numeric data cells are written with 17 significant digits (`{:.16e}`),
//! which round-trips every finite `f64` exactly; header metadata such as
//! band centers uses the shortest round-trip form. All writers go through an
//! atomic temp-file-plus-rename so readers never observe partial files.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::evaluation::{CVReport, FoldScore, PredictionRecord};
use crate::features::VarianceRow;
use crate::importance::ImportanceProfile;
use crate::pipeline::TrainedRegressor;
use crate::preprocess::{SrfBand, SrfSet};
use crate::regression::forest::{Node, Tree};
use crate::regression::{GprModel, KernelConfig, KrrModel, RfrModel};
use crate::selection::{ScoreRow, SelectionResult};
use crate::spectral::{BandGrid, RichnessPlot, SpectralSample};

/// 17-significant-digit scientific notation: exact for every finite f64.
pub fn fmt_full(v: f64) -> String {
    format!("{v:.16e}")
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io { path: path.display().to_string(), source }
}

fn parse_err(path: &Path, row: usize, column: &str, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        row,
        column: column.to_string(),
        message: message.into(),
    }
}

/// Writes bytes to `path` through a sibling temp file and an atomic rename.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let mut tmp_name = path
        .file_name()
        .ok_or_else(|| Error::Config(format!("invalid output path {}", path.display())))?
        .to_os_string();
    tmp_name.push(".tmp");
    let tmp = path.with_file_name(tmp_name);
    fs::write(&tmp, contents).map_err(|e| io_err(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| io_err(path, e))
}

fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| io_err(path, e))
}

fn parse_f64(path: &Path, row: usize, column: &str, raw: &str) -> Result<f64> {
    raw.trim()
        .parse::<f64>()
        .map_err(|_| parse_err(path, row, column, format!("{raw:?} is not a number")))
}

// ---------------------------------------------------------------------------
// Spectra CSV: plot_id,cloud,wl_<center>x<fwhm>,...

/// Loads spectra and the band grid encoded in the header.
pub fn load_spectra_csv(path: &Path) -> Result<(Vec<SpectralSample>, BandGrid)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| csv_open_err(path, e))?;
    let headers = reader.headers().map_err(|e| csv_record_err(path, e))?.clone();
    if headers.len() < 3 || &headers[0] != "plot_id" || &headers[1] != "cloud" {
        return Err(parse_err(
            path,
            0,
            "header",
            "spectra files start with plot_id,cloud followed by wl_<center>x<fwhm> columns",
        ));
    }
    let mut centers = Vec::with_capacity(headers.len() - 2);
    let mut fwhm = Vec::with_capacity(headers.len() - 2);
    for idx in 2..headers.len() {
        let name = &headers[idx];
        let spec = name.strip_prefix("wl_").ok_or_else(|| {
            parse_err(path, 0, name, "band column must look like wl_<center>x<fwhm>")
        })?;
        let (c, w) = spec.split_once('x').ok_or_else(|| {
            parse_err(path, 0, name, "band column must look like wl_<center>x<fwhm>")
        })?;
        centers.push(parse_f64(path, 0, name, c)?);
        fwhm.push(parse_f64(path, 0, name, w)?);
    }
    let grid = BandGrid::new(centers, fwhm)?;

    let mut samples = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| csv_record_err(path, e))?;
        let plot_id = record[0].trim();
        if plot_id.is_empty() {
            return Err(parse_err(path, row, "plot_id", "plot id is empty"));
        }
        let cloud = match record[1].trim().to_ascii_lowercase().as_str() {
            "0" | "false" => false,
            "1" | "true" => true,
            other => {
                return Err(parse_err(
                    path,
                    row,
                    "cloud",
                    format!("{other:?} is not a 0/1 flag"),
                ))
            }
        };
        let mut values = Vec::with_capacity(grid.len());
        for idx in 2..record.len() {
            values.push(parse_f64(path, row, &headers[idx], &record[idx])?);
        }
        samples.push(SpectralSample::new(plot_id, values, &grid, cloud)?);
    }
    Ok((samples, grid))
}

/// Saves spectra on their grid. Every sample must already reference `grid`.
pub fn save_spectra_csv(path: &Path, samples: &[SpectralSample], grid: &BandGrid) -> Result<()> {
    let fingerprint = grid.fingerprint();
    let mut out = String::from("plot_id,cloud");
    for (c, w) in grid.centers().iter().zip(grid.fwhm()) {
        write!(out, ",wl_{c}x{w}").expect("write to string");
    }
    out.push('\n');
    for s in samples {
        if s.grid_ref != fingerprint {
            return Err(Error::GridRefMismatch { plot_id: s.plot_id.clone() });
        }
        out.push_str(&csv_field(&s.plot_id));
        out.push(',');
        out.push(if s.cloud_flagged { '1' } else { '0' });
        for v in &s.values {
            out.push(',');
            out.push_str(&fmt_full(*v));
        }
        out.push('\n');
    }
    write_atomic(path, out.as_bytes())
}

/// Quotes a CSV field when it contains separators or quotes.
fn csv_field(raw: &str) -> String {
    if raw.contains(',') || raw.contains('"') || raw.contains('\n') {
        format!("\"{}\"", raw.replace('"', "\"\""))
    } else {
        raw.to_string()
    }
}

fn csv_open_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => io_err(path, io),
        other => parse_err(path, 0, "file", format!("{other:?}")),
    }
}

fn csv_record_err(path: &Path, e: csv::Error) -> Error {
    let row = e.position().map(|p| p.line() as usize).unwrap_or(0);
    parse_err(path, row, "record", e.to_string())
}

// ---------------------------------------------------------------------------
// Plots CSV: plot_id,region,richness,plot_area_m2,survey_date

const PLOTS_HEADER: [&str; 5] = ["plot_id", "region", "richness", "plot_area_m2", "survey_date"];

pub fn load_plots_csv(path: &Path) -> Result<Vec<RichnessPlot>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| csv_open_err(path, e))?;
    let headers = reader.headers().map_err(|e| csv_record_err(path, e))?.clone();
    if headers.len() != 5 || headers.iter().zip(PLOTS_HEADER).any(|(a, b)| a != b) {
        return Err(parse_err(
            path,
            0,
            "header",
            format!("plots files require the header {}", PLOTS_HEADER.join(",")),
        ));
    }
    let mut plots = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| csv_record_err(path, e))?;
        let plot_id = record[0].trim().to_string();
        if plot_id.is_empty() {
            return Err(parse_err(path, row, "plot_id", "plot id is empty"));
        }
        let richness: u32 = record[2].trim().parse().map_err(|_| {
            parse_err(
                path,
                row,
                "richness",
                format!("{:?} is not a non-negative integer", &record[2]),
            )
        })?;
        let area = parse_f64(path, row, "plot_area_m2", &record[3])?;
        plots.push(RichnessPlot::new(
            plot_id,
            record[1].trim().to_string(),
            richness,
            area,
            record[4].trim().to_string(),
        )?);
    }
    Ok(plots)
}

pub fn save_plots_csv(path: &Path, plots: &[RichnessPlot]) -> Result<()> {
    let mut out = String::from("plot_id,region,richness,plot_area_m2,survey_date\n");
    for p in plots {
        writeln!(
            out,
            "{},{},{},{},{}",
            csv_field(&p.plot_id),
            csv_field(&p.region),
            p.richness,
            p.plot_area_m2,
            p.survey_date
        )
        .expect("write to string");
    }
    write_atomic(path, out.as_bytes())
}

// ---------------------------------------------------------------------------
// SRF CSV: band_name,center_nm,fwhm_nm

pub fn load_srf_csv(path: &Path) -> Result<SrfSet> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| csv_open_err(path, e))?;
    let headers = reader.headers().map_err(|e| csv_record_err(path, e))?.clone();
    let expected = ["band_name", "center_nm", "fwhm_nm"];
    if headers.len() != 3 || headers.iter().zip(expected).any(|(a, b)| a != b) {
        return Err(parse_err(
            path,
            0,
            "header",
            "srf files require the header band_name,center_nm,fwhm_nm",
        ));
    }
    let mut bands = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| csv_record_err(path, e))?;
        bands.push(SrfBand {
            name: record[0].trim().to_string(),
            center_nm: parse_f64(path, row, "center_nm", &record[1])?,
            fwhm_nm: parse_f64(path, row, "fwhm_nm", &record[2])?,
        });
    }
    SrfSet::new(bands)
}

pub fn save_srf_csv(path: &Path, srf: &SrfSet) -> Result<()> {
    let mut out = String::from("band_name,center_nm,fwhm_nm\n");
    for b in srf.bands() {
        writeln!(out, "{},{},{}", csv_field(&b.name), b.center_nm, b.fwhm_nm)
            .expect("write to string");
    }
    write_atomic(path, out.as_bytes())
}

// ---------------------------------------------------------------------------
// Report writers

pub fn write_variance_table(path: &Path, rows: &[VarianceRow]) -> Result<()> {
    let mut out = String::from("component,eigenvalue,pct,cumulative\n");
    for r in rows {
        writeln!(
            out,
            "{},{},{},{}",
            r.component_index,
            fmt_full(r.eigenvalue),
            fmt_full(r.pct_variance),
            fmt_full(r.cumulative_pct)
        )
        .expect("write to string");
    }
    write_atomic(path, out.as_bytes())
}

pub fn write_fold_scores(path: &Path, scores: &[FoldScore]) -> Result<()> {
    let mut out = String::from("rep,fold,r,rmse\n");
    for s in scores {
        writeln!(out, "{},{},{},{}", s.rep, s.fold, fmt_full(s.r), fmt_full(s.rmse))
            .expect("write to string");
    }
    write_atomic(path, out.as_bytes())
}

pub fn write_predictions(path: &Path, records: &[PredictionRecord]) -> Result<()> {
    let mut out = String::from("plot_id,truth,prediction,rep,fold\n");
    for r in records {
        writeln!(
            out,
            "{},{},{},{},{}",
            csv_field(&r.plot_id),
            fmt_full(r.truth),
            fmt_full(r.prediction),
            r.rep,
            r.fold
        )
        .expect("write to string");
    }
    write_atomic(path, out.as_bytes())
}

/// Both aggregates, named by how they were computed: fold-averaged metrics
/// are the primary summary, pooled metrics a secondary one.
pub fn write_cv_summary(path: &Path, report: &CVReport) -> Result<()> {
    let mut out = String::from("statistic,value\n");
    for (name, value) in [
        ("fold_mean_r", report.mean_r),
        ("fold_mean_rmse", report.mean_rmse),
        ("pooled_r", report.pooled_r),
        ("pooled_rmse", report.pooled_rmse),
    ] {
        writeln!(out, "{name},{}", fmt_full(value)).expect("write to string");
    }
    write_atomic(path, out.as_bytes())
}

fn opt_full(v: Option<f64>) -> String {
    v.map(fmt_full).unwrap_or_default()
}

/// Kernel grid-search table; failed cells keep their row with empty scores.
pub fn write_kernel_scores(path: &Path, result: &SelectionResult<KernelConfig>) -> Result<()> {
    let mut out = String::from("sigma,length,delta,mean_r,mean_rmse\n");
    for ScoreRow { config, mean_r, mean_rmse } in &result.table {
        writeln!(
            out,
            "{},{},{},{},{}",
            config.sigma,
            config.length_scale,
            config.white_noise,
            opt_full(*mean_r),
            opt_full(*mean_rmse)
        )
        .expect("write to string");
    }
    write_atomic(path, out.as_bytes())
}

pub fn write_component_scores(path: &Path, result: &SelectionResult<usize>) -> Result<()> {
    let mut out = String::from("k,mean_r,mean_rmse\n");
    for ScoreRow { config, mean_r, mean_rmse } in &result.table {
        writeln!(out, "{},{},{}", config, opt_full(*mean_r), opt_full(*mean_rmse))
            .expect("write to string");
    }
    write_atomic(path, out.as_bytes())
}

pub fn write_importance(path: &Path, profile: &ImportanceProfile) -> Result<()> {
    let mut out = String::from("wavelength_nm,raw_importance,normalized_importance\n");
    for i in 0..profile.band_centers.len() {
        writeln!(
            out,
            "{},{},{}",
            profile.band_centers[i],
            fmt_full(profile.raw[i]),
            fmt_full(profile.normalized[i])
        )
        .expect("write to string");
    }
    write_atomic(path, out.as_bytes())
}

// ---------------------------------------------------------------------------
// Model serialization: versioned line-oriented text

const MODEL_MAGIC: &str = "specrich-model v1";

fn model_err(path: &Path, message: impl Into<String>) -> Error {
    Error::ModelFormat { path: path.display().to_string(), message: message.into() }
}

fn kernel_line(k: &KernelConfig) -> String {
    format!(
        "kernel {} {} {} {} {} {}",
        fmt_full(k.sigma),
        fmt_full(k.length_scale),
        fmt_full(k.white_noise),
        u8::from(k.dot_enabled),
        u8::from(k.rbf_enabled),
        u8::from(k.white_enabled)
    )
}

fn vector_line(label: &str, v: &DVector<f64>) -> String {
    let mut line = label.to_string();
    for x in v.iter() {
        line.push(' ');
        line.push_str(&fmt_full(*x));
    }
    line
}

fn matrix_lines(out: &mut Vec<String>, m: &DMatrix<f64>) {
    for i in 0..m.nrows() {
        let mut line = String::from("row");
        for j in 0..m.ncols() {
            line.push(' ');
            line.push_str(&fmt_full(m[(i, j)]));
        }
        out.push(line);
    }
}

fn forest_to_lines(model: &RfrModel, lines: &mut Vec<String>) {
    for tree in &model.trees {
        lines.push(format!("tree {}", tree.nodes.len()));
        for node in &tree.nodes {
            match node {
                Node::Leaf { value } => lines.push(format!("leaf {}", fmt_full(*value))),
                Node::Split { feature, threshold, left, right } => lines.push(format!(
                    "split {feature} {} {left} {right}",
                    fmt_full(*threshold)
                )),
            }
        }
    }
}

/// Saves a trained regressor to the versioned text format.
pub fn save_model(path: &Path, model: &TrainedRegressor) -> Result<()> {
    let mut lines: Vec<String> = vec![MODEL_MAGIC.to_string()];
    match model {
        TrainedRegressor::Krr(m) => {
            lines.push("kind krr".to_string());
            lines.push(kernel_line(m.kernel()));
            lines.push(format!("lambda {}", fmt_full(m.lambda())));
            lines.push(format!("y_offset {}", fmt_full(m.y_offset())));
            lines.push(format!("shape {} {}", m.train_t().nrows(), m.train_t().ncols()));
            lines.push(vector_line("alpha", m.alpha()));
            matrix_lines(&mut lines, m.train_t());
        }
        TrainedRegressor::Gpr(m) => {
            lines.push("kind gpr".to_string());
            lines.push(kernel_line(m.kernel()));
            lines.push(format!("epsilon {}", fmt_full(m.epsilon())));
            lines.push(format!("lml {}", fmt_full(m.log_marginal_likelihood())));
            lines.push(format!("y_offset {}", fmt_full(m.y_offset())));
            lines.push(format!("shape {} {}", m.train_t().nrows(), m.train_t().ncols()));
            lines.push(vector_line("alpha", m.alpha()));
            matrix_lines(&mut lines, m.train_t());
        }
        TrainedRegressor::Rfr(m) => {
            lines.push("kind rfr".to_string());
            lines.push(format!(
                "forest {} {} {} {} {}",
                m.tree_count(),
                m.n_features(),
                m.seed(),
                u8::from(m.bootstrap()),
                fmt_full(m.max_features())
            ));
            forest_to_lines(m, &mut lines);
        }
    }
    lines.push("end".to_string());
    let mut text = lines.join("\n");
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

struct LineReader<'a> {
    path: &'a Path,
    lines: std::str::Lines<'a>,
    current: usize,
}

impl<'a> LineReader<'a> {
    fn next(&mut self) -> Result<&'a str> {
        self.current += 1;
        self.lines
            .next()
            .ok_or_else(|| model_err(self.path, format!("unexpected end of file at line {}", self.current)))
    }

    fn expect_tag(&mut self, tag: &str) -> Result<Vec<&'a str>> {
        let line = self.next()?;
        let mut parts = line.split_whitespace();
        match parts.next() {
            Some(t) if t == tag => Ok(parts.collect()),
            other => Err(model_err(
                self.path,
                format!("expected {tag:?} at line {}, found {other:?}", self.current),
            )),
        }
    }
}

fn parse_model_f64(path: &Path, raw: &str) -> Result<f64> {
    raw.parse::<f64>().map_err(|_| model_err(path, format!("{raw:?} is not a number")))
}

fn parse_model_usize(path: &Path, raw: &str) -> Result<usize> {
    raw.parse::<usize>().map_err(|_| model_err(path, format!("{raw:?} is not a count")))
}

fn parse_model_flag(path: &Path, raw: &str) -> Result<bool> {
    match raw {
        "0" => Ok(false),
        "1" => Ok(true),
        _ => Err(model_err(path, format!("{raw:?} is not a 0/1 flag"))),
    }
}

fn parse_kernel(path: &Path, fields: &[&str]) -> Result<KernelConfig> {
    if fields.len() != 6 {
        return Err(model_err(path, "kernel line needs 6 fields"));
    }
    Ok(KernelConfig {
        sigma: parse_model_f64(path, fields[0])?,
        length_scale: parse_model_f64(path, fields[1])?,
        white_noise: parse_model_f64(path, fields[2])?,
        dot_enabled: parse_model_flag(path, fields[3])?,
        rbf_enabled: parse_model_flag(path, fields[4])?,
        white_enabled: parse_model_flag(path, fields[5])?,
    })
}

fn parse_scalar(path: &Path, reader: &mut LineReader, tag: &str) -> Result<f64> {
    let fields = reader.expect_tag(tag)?;
    if fields.len() != 1 {
        return Err(model_err(path, format!("{tag} line needs one value")));
    }
    parse_model_f64(path, fields[0])
}

fn parse_vector(path: &Path, fields: &[&str], expected: usize, tag: &str) -> Result<DVector<f64>> {
    if fields.len() != expected {
        return Err(model_err(
            path,
            format!("{tag} has {} values, expected {expected}", fields.len()),
        ));
    }
    let mut v = DVector::zeros(expected);
    for (i, raw) in fields.iter().enumerate() {
        v[i] = parse_model_f64(path, raw)?;
    }
    Ok(v)
}

fn parse_matrix(path: &Path, reader: &mut LineReader, n: usize, k: usize) -> Result<DMatrix<f64>> {
    let mut m = DMatrix::zeros(n, k);
    for i in 0..n {
        let fields = reader.expect_tag("row")?;
        if fields.len() != k {
            return Err(model_err(
                path,
                format!("training row {i} has {} values, expected {k}", fields.len()),
            ));
        }
        for (j, raw) in fields.iter().enumerate() {
            m[(i, j)] = parse_model_f64(path, raw)?;
        }
    }
    Ok(m)
}

/// Loads a model saved by [`save_model`], validating version and layout.
pub fn load_model(path: &Path) -> Result<TrainedRegressor> {
    let text = read_to_string(path)?;
    let mut reader = LineReader { path, lines: text.lines(), current: 0 };
    let magic = reader.next()?;
    if magic != MODEL_MAGIC {
        return Err(model_err(path, format!("unsupported model header {magic:?}")));
    }
    let kind_fields = reader.expect_tag("kind")?;
    let kind = *kind_fields
        .first()
        .ok_or_else(|| model_err(path, "kind line needs a value"))?;
    let model = match kind {
        "krr" => {
            let kernel = parse_kernel(path, &reader.expect_tag("kernel")?)?;
            let lambda = parse_scalar(path, &mut reader, "lambda")?;
            let y_offset = parse_scalar(path, &mut reader, "y_offset")?;
            let shape = reader.expect_tag("shape")?;
            if shape.len() != 2 {
                return Err(model_err(path, "shape line needs rows and columns"));
            }
            let n = parse_model_usize(path, shape[0])?;
            let k = parse_model_usize(path, shape[1])?;
            let alpha = parse_vector(path, &reader.expect_tag("alpha")?, n, "alpha")?;
            let train_t = parse_matrix(path, &mut reader, n, k)?;
            TrainedRegressor::Krr(KrrModel::from_parts(kernel, lambda, alpha, train_t, y_offset))
        }
        "gpr" => {
            let kernel = parse_kernel(path, &reader.expect_tag("kernel")?)?;
            let epsilon = parse_scalar(path, &mut reader, "epsilon")?;
            let lml = parse_scalar(path, &mut reader, "lml")?;
            let y_offset = parse_scalar(path, &mut reader, "y_offset")?;
            let shape = reader.expect_tag("shape")?;
            if shape.len() != 2 {
                return Err(model_err(path, "shape line needs rows and columns"));
            }
            let n = parse_model_usize(path, shape[0])?;
            let k = parse_model_usize(path, shape[1])?;
            let alpha = parse_vector(path, &reader.expect_tag("alpha")?, n, "alpha")?;
            let train_t = parse_matrix(path, &mut reader, n, k)?;
            TrainedRegressor::Gpr(GprModel::from_parts(kernel, epsilon, alpha, train_t, y_offset, lml))
        }
        "rfr" => {
            let fields = reader.expect_tag("forest")?;
            if fields.len() != 5 {
                return Err(model_err(path, "forest line needs 5 fields"));
            }
            let tree_count = parse_model_usize(path, fields[0])?;
            let n_features = parse_model_usize(path, fields[1])?;
            let seed: u64 = fields[2]
                .parse()
                .map_err(|_| model_err(path, format!("{:?} is not a seed", fields[2])))?;
            let bootstrap = parse_model_flag(path, fields[3])?;
            let max_features = parse_model_f64(path, fields[4])?;
            let mut trees = Vec::with_capacity(tree_count);
            for _ in 0..tree_count {
                let tree_fields = reader.expect_tag("tree")?;
                if tree_fields.len() != 1 {
                    return Err(model_err(path, "tree line needs a node count"));
                }
                let node_count = parse_model_usize(path, tree_fields[0])?;
                if node_count == 0 {
                    return Err(model_err(path, "tree has no nodes"));
                }
                let mut nodes = Vec::with_capacity(node_count);
                for _ in 0..node_count {
                    let line = reader.next()?;
                    let mut parts = line.split_whitespace();
                    match parts.next() {
                        Some("leaf") => {
                            let raw = parts
                                .next()
                                .ok_or_else(|| model_err(path, "leaf line needs a value"))?;
                            nodes.push(Node::Leaf { value: parse_model_f64(path, raw)? });
                        }
                        Some("split") => {
                            let take = |p: &mut std::str::SplitWhitespace| {
                                p.next()
                                    .map(str::to_string)
                                    .ok_or_else(|| model_err(path, "split line needs 4 fields"))
                            };
                            let feature = parse_model_usize(path, &take(&mut parts)?)?;
                            let threshold = parse_model_f64(path, &take(&mut parts)?)?;
                            let left = parse_model_usize(path, &take(&mut parts)?)?;
                            let right = parse_model_usize(path, &take(&mut parts)?)?;
                            if feature >= n_features || left >= node_count || right >= node_count {
                                return Err(model_err(path, "split node references out of range"));
                            }
                            nodes.push(Node::Split { feature, threshold, left, right });
                        }
                        other => {
                            return Err(model_err(path, format!("unexpected node tag {other:?}")))
                        }
                    }
                }
                trees.push(Tree { nodes });
            }
            TrainedRegressor::Rfr(RfrModel::from_parts(
                trees,
                n_features,
                seed,
                bootstrap,
                max_features,
            ))
        }
        other => return Err(model_err(path, format!("unknown model kind {other:?}"))),
    };
    let fields = reader.expect_tag("end")?;
    if !fields.is_empty() {
        return Err(model_err(path, "trailing fields after end"));
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::{GprParams, KrrParams, PipelineSpec, RegressorSpec, RfrParams};
    use crate::spectral::Dataset;
    use crate::synthetic::generate_synthetic_dataset;
    use crate::ExtractionMethod;

    fn demo_dataset() -> Dataset {
        let grid = BandGrid::regular(420.0, 10.2, 10.2, 12).unwrap();
        generate_synthetic_dataset(5, 18, &grid, 2, 1.0, 40.0).unwrap()
    }

    #[test]
    fn fmt_full_round_trips_awkward_values() {
        for v in [0.1, 1.0 / 3.0, f64::MIN_POSITIVE, 1e300, -2.5e-7, 402.8, 0.0] {
            let s = fmt_full(v);
            let back: f64 = s.parse().unwrap();
            assert_eq!(back.to_bits(), v.to_bits(), "{v} -> {s} -> {back}");
        }
    }

    #[test]
    fn spectra_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("spectra.csv");
        let data = demo_dataset();
        let (samples, _) = data.to_components();
        save_spectra_csv(&path, &samples, data.grid()).unwrap();
        let (loaded, grid) = load_spectra_csv(&path).unwrap();
        assert_eq!(&grid, data.grid());
        assert_eq!(loaded, samples);
    }

    #[test]
    fn spectra_bad_inputs_are_diagnosed() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        // Wrong leading columns.
        std::fs::write(&path, "id,cloud,wl_500x10\nA,0,0.5\n").unwrap();
        assert!(matches!(load_spectra_csv(&path), Err(Error::Parse { .. })));
        // Malformed band header.
        std::fs::write(&path, "plot_id,cloud,band7\nA,0,0.5\n").unwrap();
        assert!(matches!(load_spectra_csv(&path), Err(Error::Parse { .. })));
        // Non-numeric cell names row and column.
        std::fs::write(&path, "plot_id,cloud,wl_500x10\nA,0,oops\n").unwrap();
        match load_spectra_csv(&path) {
            Err(Error::Parse { row, column, .. }) => {
                assert_eq!(row, 1);
                assert_eq!(column, "wl_500x10");
            }
            other => panic!("unexpected {other:?}"),
        }
        // Bad cloud flag.
        std::fs::write(&path, "plot_id,cloud,wl_500x10\nA,maybe,0.5\n").unwrap();
        assert!(matches!(load_spectra_csv(&path), Err(Error::Parse { .. })));
        // NaN cell parses as a float but fails spectrum validation.
        std::fs::write(&path, "plot_id,cloud,wl_500x10\nA,0,NaN\n").unwrap();
        assert!(matches!(load_spectra_csv(&path), Err(Error::NonFiniteValue { .. })));
        // Decreasing band centers.
        std::fs::write(&path, "plot_id,cloud,wl_500x10,wl_499x10\nA,0,0.5,0.5\n").unwrap();
        assert!(matches!(load_spectra_csv(&path), Err(Error::InvalidGrid(_))));
    }

    #[test]
    fn plots_round_trip_and_validation() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("plots.csv");
        let plots = vec![
            RichnessPlot::new("A1", "tablelands", 23, 400.0, "2017-02-19").unwrap(),
            RichnessPlot::new("B2", "tablelands", 0, 625.5, "2016-11-02").unwrap(),
        ];
        save_plots_csv(&path, &plots).unwrap();
        let loaded = load_plots_csv(&path).unwrap();
        assert_eq!(loaded, plots);

        // Negative richness is rejected at parse time.
        std::fs::write(
            &path,
            "plot_id,region,richness,plot_area_m2,survey_date\nA,r,-1,400,2017-02-19\n",
        )
        .unwrap();
        match load_plots_csv(&path) {
            Err(Error::Parse { column, .. }) => assert_eq!(column, "richness"),
            other => panic!("unexpected {other:?}"),
        }
        // Bad date is rejected by the domain type.
        std::fs::write(
            &path,
            "plot_id,region,richness,plot_area_m2,survey_date\nA,r,3,400,2017-02-30\n",
        )
        .unwrap();
        assert!(matches!(load_plots_csv(&path), Err(Error::InvalidPlot { .. })));
    }

    #[test]
    fn srf_round_trip_and_validation() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("srf.csv");
        let srf = SrfSet::new(vec![
            SrfBand { name: "B02".into(), center_nm: 492.4, fwhm_nm: 66.0 },
            SrfBand { name: "B03".into(), center_nm: 559.8, fwhm_nm: 36.0 },
        ])
        .unwrap();
        save_srf_csv(&path, &srf).unwrap();
        assert_eq!(load_srf_csv(&path).unwrap(), srf);

        std::fs::write(&path, "band_name,center_nm,fwhm_nm\nB1,500,0\n").unwrap();
        assert!(matches!(load_srf_csv(&path), Err(Error::InvalidSrf(_))));
    }

    #[test]
    fn model_round_trip_all_kinds() {
        let dir = tempfile::tempdir().unwrap();
        let data = demo_dataset();
        for (name, regressor) in [
            ("krr", RegressorSpec::Krr(KrrParams::default())),
            ("gpr", RegressorSpec::Gpr(GprParams { optimize: false, ..GprParams::default() })),
            ("rfr", RegressorSpec::Rfr(RfrParams { trees: 12, ..RfrParams::default() })),
        ] {
            let spec = PipelineSpec::new(ExtractionMethod::Pls, 2, regressor).unwrap();
            let extractor = spec.fit_extractor(data.x(), data.y()).unwrap();
            let t = crate::features::transform(&extractor, data.x()).unwrap();
            let model = spec.fit_regressor(&t, data.y(), 3).unwrap();
            let path = dir.path().join(format!("{name}.model"));
            save_model(&path, &model).unwrap();
            let loaded = load_model(&path).unwrap();
            assert_eq!(loaded, model, "{name} round trip");
            let p1 = model.predict(&t).unwrap();
            let p2 = loaded.predict(&t).unwrap();
            assert_eq!(p1, p2, "{name} predictions");
        }
    }

    #[test]
    fn model_loader_rejects_corruption() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.model");
        std::fs::write(&path, "something else\n").unwrap();
        assert!(matches!(load_model(&path), Err(Error::ModelFormat { .. })));
        std::fs::write(&path, "specrich-model v1\nkind svm\nend\n").unwrap();
        assert!(matches!(load_model(&path), Err(Error::ModelFormat { .. })));
        std::fs::write(
            &path,
            "specrich-model v1\nkind krr\nkernel 1 1 1 1 1 1\nlambda 1\ny_offset 0\nshape 2 1\nalpha 1\nrow 1\nrow 2\nend\n",
        )
        .unwrap();
        assert!(matches!(load_model(&path), Err(Error::ModelFormat { .. })));
    }

    #[test]
    fn atomic_writer_replaces_and_leaves_no_temp() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.csv");
        write_atomic(&path, b"first\n").unwrap();
        write_atomic(&path, b"second\n").unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "second\n");
        let leftovers: Vec<_> = std::fs::read_dir(dir.path())
            .unwrap()
            .map(|e| e.unwrap().file_name().into_string().unwrap())
            .filter(|n| n.ends_with(".tmp"))
            .collect();
        assert!(leftovers.is_empty(), "temp files left: {leftovers:?}");
    }

    #[test]
    fn report_writers_produce_expected_headers() {
        let dir = tempfile::tempdir().unwrap();
        let rows = vec![VarianceRow {
            component_index: 1,
            eigenvalue: 2.0,
            pct_variance: 80.0,
            cumulative_pct: 80.0,
        }];
        let vp = dir.path().join("variance.csv");
        write_variance_table(&vp, &rows).unwrap();
        let text = std::fs::read_to_string(&vp).unwrap();
        assert!(text.starts_with("component,eigenvalue,pct,cumulative\n"));
        assert!(text.lines().nth(1).unwrap().starts_with("1,"));

        let profile = ImportanceProfile {
            band_centers: vec![500.0, 510.0],
            raw: vec![0.2, 0.8],
            normalized: vec![0.2, 0.8],
            method: ExtractionMethod::Pls,
            k_used: 2,
        };
        let ip = dir.path().join("importance.csv");
        write_importance(&ip, &profile).unwrap();
        let text = std::fs::read_to_string(&ip).unwrap();
        assert!(text.starts_with("wavelength_nm,raw_importance,normalized_importance\n"));
        assert!(text.contains("\n500,"));
    }
}
