//! Repeated two-fold cross-validation and the evaluation metrics.
//!
//! Each repetition shuffles the samples with its own RNG substream, splits
//! them into two near-halves, and evaluates both train/validate directions.
//! Feature extraction is fitted inside the training fold only, so fold means
//! never see validation rows. Repetitions run in parallel but results are
//! keyed by repetition index, making reports identical for any thread count.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::features::transform;
use crate::pipeline::PipelineSpec;
use crate::spectral::Dataset;

/// Cross-validation settings. The fold count is fixed at two.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CVConfig {
    pub repetitions: usize,
    pub seed: u64,
}

impl Default for CVConfig {
    fn default() -> Self {
        CVConfig { repetitions: 100, seed: 0 }
    }
}

/// Validation scores of one fold of one repetition (both 1-based).
#[derive(Debug, Clone, PartialEq)]
pub struct FoldScore {
    pub rep: usize,
    pub fold: usize,
    pub r: f64,
    pub rmse: f64,
}

/// One held-out prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRecord {
    pub plot_id: String,
    pub region: String,
    pub truth: f64,
    pub prediction: f64,
    pub rep: usize,
    pub fold: usize,
}

/// Everything a CV run produces. `mean_r`/`mean_rmse` average the per-fold
/// scores (the primary aggregate); `pooled_r`/`pooled_rmse` are computed over
/// all held-out predictions at once (a secondary aggregate that weights
/// unequal folds differently).
#[derive(Debug, Clone, PartialEq)]
pub struct CVReport {
    pub per_repetition: Vec<FoldScore>,
    pub pooled_predictions: Vec<PredictionRecord>,
    pub mean_r: f64,
    pub mean_rmse: f64,
    pub pooled_r: f64,
    pub pooled_rmse: f64,
}

/// Pearson correlation coefficient, clamped to [-1, 1] against rounding.
pub fn pearson_r(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch { expected: a.len(), got: b.len() });
    }
    if a.len() < 2 {
        return Err(Error::Config(format!(
            "correlation needs at least 2 values, got {}",
            a.len()
        )));
    }
    let n = a.len() as f64;
    let mean_a = a.iter().sum::<f64>() / n;
    let mean_b = b.iter().sum::<f64>() / n;
    let mut dot = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for (x, y) in a.iter().zip(b) {
        let da = x - mean_a;
        let db = y - mean_b;
        dot += da * db;
        na += da * da;
        nb += db * db;
    }
    if na == 0.0 || nb == 0.0 {
        return Err(Error::UndefinedCorrelation);
    }
    Ok((dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0))
}

/// Root mean squared error.
pub fn rmse(truth: &[f64], pred: &[f64]) -> Result<f64> {
    if truth.len() != pred.len() {
        return Err(Error::DimensionMismatch { expected: truth.len(), got: pred.len() });
    }
    if truth.is_empty() {
        return Err(Error::Config("rmse needs at least one value".into()));
    }
    let sum: f64 = truth.iter().zip(pred).map(|(t, p)| (t - p) * (t - p)).sum();
    Ok((sum / truth.len() as f64).sqrt())
}

/// The shuffled two-fold partitions for every repetition: repetition `i`
/// shuffles `0..n` with RNG substream `i` and splits after `ceil(n/2)`.
/// Exposed so callers (and tests) can reconstruct fold membership exactly.
pub fn partition_plan(n: usize, cfg: &CVConfig) -> Vec<(Vec<usize>, Vec<usize>)> {
    (0..cfg.repetitions)
        .map(|rep| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(rep as u64);
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut rng);
            let half = n.div_ceil(2);
            let first = order[..half].to_vec();
            let second = order[half..].to_vec();
            (first, second)
        })
        .collect()
}

/// Deterministic per-fold seed for the forest regressor.
fn fold_seed(base: u64, rep: usize, fold: usize) -> u64 {
    base.wrapping_add(((rep as u64) << 1 | fold as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

fn eval_fold(
    dataset: &Dataset,
    spec: &PipelineSpec,
    cfg: &CVConfig,
    rep: usize,
    fold: usize,
    train_idx: &[usize],
    valid_idx: &[usize],
) -> Result<(FoldScore, Vec<PredictionRecord>)> {
    let train = dataset.subset(train_idx);
    let valid = dataset.subset(valid_idx);
    let extractor = spec.fit_extractor(train.x(), train.y())?;
    let t_train = transform(&extractor, train.x())?;
    let t_valid = transform(&extractor, valid.x())?;
    let model = spec.fit_regressor(&t_train, train.y(), fold_seed(cfg.seed, rep, fold))?;
    let preds = model.predict(&t_valid)?;

    let truth: Vec<f64> = valid.y().iter().copied().collect();
    let predicted: Vec<f64> = preds.iter().copied().collect();
    let r = pearson_r(&truth, &predicted)?;
    let e = rmse(&truth, &predicted)?;

    let records = valid
        .plot_ids()
        .iter()
        .zip(valid.regions())
        .zip(truth.iter().zip(&predicted))
        .map(|((plot_id, region), (t, p))| PredictionRecord {
            plot_id: plot_id.clone(),
            region: region.clone(),
            truth: *t,
            prediction: *p,
            rep: rep + 1,
            fold: fold + 1,
        })
        .collect();

    Ok((FoldScore { rep: rep + 1, fold: fold + 1, r, rmse: e }, records))
}

/// Repeated two-fold cross-validation of a pipeline over a dataset.
pub fn two_fold_cv(dataset: &Dataset, spec: &PipelineSpec, cfg: &CVConfig) -> Result<CVReport> {
    let n = dataset.n();
    if n < 4 {
        return Err(Error::Config(format!(
            "two-fold cross-validation needs at least 4 samples, got {n}"
        )));
    }
    if cfg.repetitions == 0 {
        return Err(Error::Config("repetitions must be at least 1".into()));
    }
    let min_fold = n / 2;
    if spec.k + 1 >= min_fold {
        return Err(Error::Config(format!(
            "{} components cannot be fitted inside folds of {} samples",
            spec.k, min_fold
        )));
    }

    let plan = partition_plan(n, cfg);
    let per_rep: Vec<(Vec<FoldScore>, Vec<PredictionRecord>)> = (0..cfg.repetitions)
        .into_par_iter()
        .map(|rep| -> Result<(Vec<FoldScore>, Vec<PredictionRecord>)> {
            let (first, second) = &plan[rep];
            let mut scores = Vec::with_capacity(2);
            let mut records = Vec::new();
            for (fold, (train_idx, valid_idx)) in
                [(first, second), (second, first)].into_iter().enumerate()
            {
                let (score, recs) =
                    eval_fold(dataset, spec, cfg, rep, fold, train_idx, valid_idx)?;
                scores.push(score);
                records.extend(recs);
            }
            Ok((scores, records))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut per_repetition = Vec::with_capacity(cfg.repetitions * 2);
    let mut pooled_predictions = Vec::with_capacity(cfg.repetitions * n);
    for (scores, records) in per_rep {
        per_repetition.extend(scores);
        pooled_predictions.extend(records);
    }

    let folds = per_repetition.len() as f64;
    let mean_r = per_repetition.iter().map(|s| s.r).sum::<f64>() / folds;
    let mean_rmse = per_repetition.iter().map(|s| s.rmse).sum::<f64>() / folds;
    let truth: Vec<f64> = pooled_predictions.iter().map(|p| p.truth).collect();
    let preds: Vec<f64> = pooled_predictions.iter().map(|p| p.prediction).collect();
    let pooled_r = pearson_r(&truth, &preds)?;
    let pooled_rmse = rmse(&truth, &preds)?;

    Ok(CVReport {
        per_repetition,
        pooled_predictions,
        mean_r,
        mean_rmse,
        pooled_r,
        pooled_rmse,
    })
}

/// Cross-validates a pipeline over several datasets pooled into one, e.g. to
/// test transfer across regions. All datasets must share an identical band
/// grid. With more than one dataset, plot ids are qualified as
/// `"<index>:<id>"` so repeated ids across regions stay distinct; a single
/// dataset is evaluated exactly as [`two_fold_cv`]. Region labels ride along
/// in the prediction records for stratified reporting.
pub fn pooled_region_eval(
    datasets: &[Dataset],
    spec: &PipelineSpec,
    cfg: &CVConfig,
) -> Result<CVReport> {
    match datasets {
        [] => Err(Error::Config("pooled evaluation needs at least one dataset".into())),
        [single] => two_fold_cv(single, spec, cfg),
        many => {
            let grid = many[0].grid();
            for d in &many[1..] {
                if d.grid() != grid {
                    return Err(Error::IncompatibleGrids);
                }
            }
            let total: usize = many.iter().map(|d| d.n()).sum();
            let m = grid.len();
            let mut x = DMatrix::zeros(total, m);
            let mut y = DVector::zeros(total);
            let mut plot_ids = Vec::with_capacity(total);
            let mut regions = Vec::with_capacity(total);
            let mut row = 0;
            for (idx, d) in many.iter().enumerate() {
                for i in 0..d.n() {
                    for j in 0..m {
                        x[(row, j)] = d.x()[(i, j)];
                    }
                    y[row] = d.y()[i];
                    plot_ids.push(format!("{idx}:{}", d.plot_ids()[i]));
                    regions.push(d.regions()[i].clone());
                    row += 1;
                }
            }
            let pooled = Dataset::new(x, y, grid.clone(), plot_ids, regions)?;
            two_fold_cv(&pooled, spec, cfg)
        }
    }
}
