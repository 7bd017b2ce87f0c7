//! Random forest regression: an average over variance-reduction CART trees,
//! each grown on a bootstrap resample with random feature subsets per node.
//!
//! Every tree draws from its own counter-based RNG substream, so forests are
//! reproducible for a given seed regardless of how many threads build them.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Node {
    Leaf { value: f64 },
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Tree {
    pub(crate) nodes: Vec<Node>,
}

impl Tree {
    fn predict_row(&self, row: &[f64]) -> f64 {
        let mut idx = 0;
        loop {
            match &self.nodes[idx] {
                Node::Leaf { value } => return *value,
                Node::Split { feature, threshold, left, right } => {
                    idx = if row[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }
}

/// Random forest regressor.
#[derive(Debug, Clone, PartialEq)]
pub struct RfrModel {
    pub(crate) trees: Vec<Tree>,
    pub(crate) n_features: usize,
    pub(crate) seed: u64,
    pub(crate) bootstrap: bool,
    pub(crate) max_features: f64,
}

impl RfrModel {
    pub fn tree_count(&self) -> usize {
        self.trees.len()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn bootstrap(&self) -> bool {
        self.bootstrap
    }

    pub fn max_features(&self) -> f64 {
        self.max_features
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub(crate) fn from_parts(
        trees: Vec<Tree>,
        n_features: usize,
        seed: u64,
        bootstrap: bool,
        max_features: f64,
    ) -> Self {
        RfrModel { trees, n_features, seed, bootstrap, max_features }
    }

    /// Mean of the per-tree predictions, accumulated in tree order.
    pub fn predict(&self, t_new: &DMatrix<f64>) -> Result<DVector<f64>> {
        if t_new.ncols() != self.n_features {
            return Err(Error::DimensionMismatch {
                expected: self.n_features,
                got: t_new.ncols(),
            });
        }
        let mut out = DVector::zeros(t_new.nrows());
        let mut row = Vec::with_capacity(self.n_features);
        for i in 0..t_new.nrows() {
            row.clear();
            row.extend(t_new.row(i).iter().copied());
            let sum: f64 = self.trees.iter().map(|tree| tree.predict_row(&row)).sum();
            out[i] = sum / self.trees.len() as f64;
        }
        Ok(out)
    }
}

struct TreeBuilder<'a> {
    t: &'a DMatrix<f64>,
    y: &'a DVector<f64>,
    mtry: usize,
    nodes: Vec<Node>,
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    reduction: f64,
}

impl<'a> TreeBuilder<'a> {
    /// Sum of squared errors around the mean for the given rows.
    fn node_sse(&self, rows: &[usize]) -> f64 {
        let n = rows.len() as f64;
        let sum: f64 = rows.iter().map(|&r| self.y[r]).sum();
        let sumsq: f64 = rows.iter().map(|&r| self.y[r] * self.y[r]).sum();
        (sumsq - sum * sum / n).max(0.0)
    }

    /// Best midpoint split of `rows` on one feature, or None if the feature
    /// is constant over the node.
    fn best_split_on_feature(&self, rows: &[usize], feature: usize) -> Option<BestSplit> {
        let mut order: Vec<usize> = rows.to_vec();
        order.sort_by(|&a, &b| {
            self.t[(a, feature)]
                .partial_cmp(&self.t[(b, feature)])
                .expect("finite feature values")
        });
        let n = order.len();
        let total_sum: f64 = order.iter().map(|&r| self.y[r]).sum();
        let total_sumsq: f64 = order.iter().map(|&r| self.y[r] * self.y[r]).sum();
        let total_sse = (total_sumsq - total_sum * total_sum / n as f64).max(0.0);

        let mut best: Option<BestSplit> = None;
        let mut left_sum = 0.0;
        let mut left_sumsq = 0.0;
        for i in 0..n - 1 {
            let yi = self.y[order[i]];
            left_sum += yi;
            left_sumsq += yi * yi;
            let v_lo = self.t[(order[i], feature)];
            let v_hi = self.t[(order[i + 1], feature)];
            if v_lo >= v_hi {
                continue;
            }
            let nl = (i + 1) as f64;
            let nr = (n - i - 1) as f64;
            let right_sum = total_sum - left_sum;
            let right_sumsq = total_sumsq - left_sumsq;
            let sse_l = (left_sumsq - left_sum * left_sum / nl).max(0.0);
            let sse_r = (right_sumsq - right_sum * right_sum / nr).max(0.0);
            let reduction = total_sse - sse_l - sse_r;
            let mut threshold = 0.5 * (v_lo + v_hi);
            if !(threshold >= v_lo && threshold < v_hi) {
                threshold = v_lo;
            }
            let better = match &best {
                Some(b) => reduction > b.reduction,
                None => true,
            };
            if better {
                best = Some(BestSplit { feature, threshold, reduction });
            }
        }
        best
    }

    /// Candidate features: a random subset of size `mtry`, scanned in
    /// ascending index order; if none of them admits a split, the remaining
    /// features are scanned too so a splittable node is never forced into a
    /// mixed leaf.
    fn choose_split(&self, rows: &[usize], rng: &mut ChaCha8Rng) -> Option<BestSplit> {
        let m = self.t.ncols();
        let mut features: Vec<usize> = (0..m).collect();
        features.shuffle(rng);
        let (subset, rest) = features.split_at(self.mtry.min(m));
        let mut subset: Vec<usize> = subset.to_vec();
        subset.sort_unstable();
        let mut best: Option<BestSplit> = None;
        for &f in &subset {
            if let Some(split) = self.best_split_on_feature(rows, f) {
                let better = match &best {
                    Some(b) => split.reduction > b.reduction,
                    None => true,
                };
                if better {
                    best = Some(split);
                }
            }
        }
        if best.is_some() {
            return best;
        }
        let mut rest: Vec<usize> = rest.to_vec();
        rest.sort_unstable();
        for f in rest {
            if let Some(split) = self.best_split_on_feature(rows, f) {
                let better = match &best {
                    Some(b) => split.reduction > b.reduction,
                    None => true,
                };
                if better {
                    best = Some(split);
                }
            }
        }
        best
    }

    fn grow(&mut self, rows: Vec<usize>, rng: &mut ChaCha8Rng) -> usize {
        let leaf_value = {
            let sum: f64 = rows.iter().map(|&r| self.y[r]).sum();
            sum / rows.len() as f64
        };
        let pure = rows.len() < 2 || self.node_sse(&rows) <= 0.0;
        let split = if pure { None } else { self.choose_split(&rows, rng) };
        match split {
            None => {
                self.nodes.push(Node::Leaf { value: leaf_value });
                self.nodes.len() - 1
            }
            Some(best) => {
                let (left_rows, right_rows): (Vec<usize>, Vec<usize>) = rows
                    .into_iter()
                    .partition(|&r| self.t[(r, best.feature)] <= best.threshold);
                debug_assert!(!left_rows.is_empty() && !right_rows.is_empty());
                let here = self.nodes.len();
                self.nodes.push(Node::Leaf { value: leaf_value }); // placeholder
                let left = self.grow(left_rows, rng);
                let right = self.grow(right_rows, rng);
                self.nodes[here] =
                    Node::Split { feature: best.feature, threshold: best.threshold, left, right };
                here
            }
        }
    }
}

fn build_tree(
    t: &DMatrix<f64>,
    y: &DVector<f64>,
    mtry: usize,
    bootstrap: bool,
    seed: u64,
    tree_index: u64,
) -> Tree {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(tree_index + 1);
    let n = t.nrows();
    let rows: Vec<usize> = if bootstrap {
        (0..n).map(|_| rng.gen_range(0..n)).collect()
    } else {
        (0..n).collect()
    };
    let mut builder = TreeBuilder { t, y, mtry, nodes: Vec::new() };
    builder.grow(rows, &mut rng);
    Tree { nodes: builder.nodes }
}

/// Fits a random forest of `trees` CART regressors.
///
/// `max_features` is the fraction of features each node may consider
/// (at least one feature is always drawn); trees grow to purity with
/// minimum leaf size 1 and no depth limit.
pub fn fit_rfr(
    t: &DMatrix<f64>,
    y: &DVector<f64>,
    trees: usize,
    seed: u64,
    bootstrap: bool,
    max_features: f64,
) -> Result<RfrModel> {
    if trees == 0 {
        return Err(Error::Config("forest needs at least one tree".into()));
    }
    if !(max_features.is_finite() && max_features > 0.0 && max_features <= 1.0) {
        return Err(Error::Config(format!(
            "max_features must lie in (0, 1], got {max_features}"
        )));
    }
    super::check_training_shapes(t, y)?;
    let m = t.ncols();
    if m == 0 {
        return Err(Error::Config("features have no columns".into()));
    }
    let mtry = ((max_features * m as f64) as usize).clamp(1, m);
    let built: Vec<Tree> = (0..trees as u64)
        .into_par_iter()
        .map(|i| build_tree(t, y, mtry, bootstrap, seed, i))
        .collect();
    Ok(RfrModel {
        trees: built,
        n_features: m,
        seed,
        bootstrap,
        max_features,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn noisy_step(n: usize, seed: u64) -> (DMatrix<f64>, DVector<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = DMatrix::from_fn(n, 3, |_, _| rng.gen_range(0.0..1.0));
        let y = DVector::from_fn(n, |i, _| {
            let base = if t[(i, 0)] > 0.5 { 10.0 } else { 2.0 };
            base + rng.gen_range(-0.3..0.3)
        });
        (t, y)
    }

    #[test]
    fn constant_targets_yield_constant_forest() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t = DMatrix::from_fn(12, 2, |_, _| rng.gen_range(-1.0..1.0));
        let y = DVector::from_element(12, 3.25);
        let model = fit_rfr(&t, &y, 20, 7, true, 1.0 / 3.0).unwrap();
        let preds = model.predict(&t).unwrap();
        for p in preds.iter() {
            assert_eq!(*p, 3.25);
        }
        // Every tree is a single leaf.
        for tree in &model.trees {
            assert_eq!(tree.nodes.len(), 1);
        }
    }

    #[test]
    fn full_trees_interpolate_distinct_rows() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let t = DMatrix::from_fn(15, 2, |_, _| rng.gen_range(-3.0..3.0));
        let y = DVector::from_fn(15, |i, _| rng.gen_range(0.0..50.0) + i as f64);
        let model = fit_rfr(&t, &y, 5, 11, false, 1.0).unwrap();
        let preds = model.predict(&t).unwrap();
        for i in 0..15 {
            assert!(
                (preds[i] - y[i]).abs() < 1e-12,
                "row {i}: {} vs {}",
                preds[i],
                y[i]
            );
        }
    }

    #[test]
    fn same_seed_reproduces_predictions_exactly() {
        let (t, y) = noisy_step(40, 3);
        let a = fit_rfr(&t, &y, 30, 99, true, 1.0 / 3.0).unwrap();
        let b = fit_rfr(&t, &y, 30, 99, true, 1.0 / 3.0).unwrap();
        assert_eq!(a.trees, b.trees);
        let q = DMatrix::from_fn(8, 3, |i, j| (i as f64 * 0.1) + (j as f64 * 0.05));
        assert_eq!(a.predict(&q).unwrap(), b.predict(&q).unwrap());
    }

    #[test]
    fn different_seeds_grow_different_forests() {
        let (t, y) = noisy_step(40, 4);
        let a = fit_rfr(&t, &y, 30, 1, true, 1.0 / 3.0).unwrap();
        let b = fit_rfr(&t, &y, 30, 2, true, 1.0 / 3.0).unwrap();
        assert_ne!(a.trees, b.trees);
    }

    #[test]
    fn forest_learns_step_function() {
        let (t, y) = noisy_step(120, 5);
        let model = fit_rfr(&t, &y, 100, 21, true, 1.0 / 3.0).unwrap();
        let preds = model.predict(&t).unwrap();
        let truth: Vec<f64> = y.iter().copied().collect();
        let fitted: Vec<f64> = preds.iter().copied().collect();
        let r = crate::evaluation::pearson_r(&truth, &fitted).unwrap();
        assert!(r > 0.9, "in-sample correlation {r}");
    }

    #[test]
    fn predictions_stay_within_target_range() {
        let (t, y) = noisy_step(60, 6);
        let model = fit_rfr(&t, &y, 50, 13, true, 1.0 / 3.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(100);
        let q = DMatrix::from_fn(30, 3, |_, _| rng.gen_range(-2.0..2.0));
        let preds = model.predict(&q).unwrap();
        let lo = y.min();
        let hi = y.max();
        for p in preds.iter() {
            assert!(*p >= lo && *p <= hi);
        }
    }

    #[test]
    fn invalid_parameters_are_rejected() {
        let (t, y) = noisy_step(10, 7);
        assert!(fit_rfr(&t, &y, 0, 1, true, 0.5).is_err());
        assert!(fit_rfr(&t, &y, 10, 1, true, 0.0).is_err());
        assert!(fit_rfr(&t, &y, 10, 1, true, 1.5).is_err());
    }

    #[test]
    fn wrong_query_width_is_rejected() {
        let (t, y) = noisy_step(10, 8);
        let model = fit_rfr(&t, &y, 5, 1, true, 1.0).unwrap();
        let q = DMatrix::zeros(2, 4);
        assert!(matches!(
            model.predict(&q),
            Err(Error::DimensionMismatch { expected: 3, got: 4 })
        ));
    }
}
