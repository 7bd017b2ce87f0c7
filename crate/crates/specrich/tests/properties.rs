//! Property-based tests: invariants that must hold for arbitrary valid
//! inputs, not just hand-picked fixtures.

use nalgebra::{DMatrix, DVector};
use proptest::collection::vec;
use proptest::prelude::*;

use specrich::evaluation::partition_plan;
use specrich::preprocess::binning_srf;
use specrich::{
    fit_pca, fit_pls, gaussian_resample, mean_normalize, transform, BandGrid, CVConfig,
};

/// Strategy for a plausible reflectance spectrum on an n-band grid.
fn spectrum(len: usize) -> impl Strategy<Value = Vec<f64>> {
    vec(0.005f64..0.95, len..=len)
}

proptest! {
    /// Mean normalization always lands on mean one, for any positive input.
    #[test]
    fn mean_normalize_recenters_to_one(values in vec(0.001f64..2.0, 3..120)) {
        let out = mean_normalize(&values).expect("positive spectra normalize");
        let mean = out.iter().sum::<f64>() / out.len() as f64;
        prop_assert!((mean - 1.0).abs() <= 1e-12, "mean {mean}");
    }

    /// Gaussian band aggregation is a convex combination: outputs stay
    /// within the input range, and constants pass through exactly.
    #[test]
    fn gaussian_resample_is_convex(
        values in spectrum(80),
        step in 4.0f64..30.0,
        fwhm in 4.0f64..40.0,
    ) {
        let src = BandGrid::regular(400.0, 5.0, 5.0, 80).expect("valid grid");
        let dst = binning_srf(&src, None, step, fwhm).expect("valid srf");
        let out = gaussian_resample(&values, &src, &dst).expect("resample");
        let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        for v in out {
            prop_assert!(v >= lo && v <= hi, "{v} outside [{lo}, {hi}]");
        }

        let constant = vec![0.42; src.len()];
        for v in gaussian_resample(&constant, &src, &dst).expect("resample") {
            prop_assert!(v == 0.42, "constant mapped to {v}");
        }
    }

    /// PCA weights are unit-norm and mutually orthogonal, and the scores are
    /// uncorrelated with sample variances matching the eigenvalues.
    #[test]
    fn pca_weights_orthonormal_scores_uncorrelated(
        entries in vec(-1.0f64..1.0, 12 * 6),
        k in 1usize..4,
    ) {
        let x = DMatrix::from_row_slice(12, 6, &entries);
        let model = match fit_pca(&x, k) {
            Ok(m) => m,
            // Degenerate draws (rank below k) are legitimately rejected.
            Err(_) => return Ok(()),
        };
        let w = model.weights();
        for a in 0..k {
            for b in 0..k {
                let dot = w.column(a).dot(&w.column(b));
                let expected = if a == b { 1.0 } else { 0.0 };
                prop_assert!((dot - expected).abs() <= 1e-8, "w{a}.w{b} = {dot}");
            }
        }
        let t = transform(&model, &x).expect("transform");
        let n = t.nrows() as f64;
        for a in 0..k {
            let mean_a = t.column(a).sum() / n;
            for b in 0..k {
                let mean_b = t.column(b).sum() / n;
                let cov = (0..t.nrows())
                    .map(|i| (t[(i, a)] - mean_a) * (t[(i, b)] - mean_b))
                    .sum::<f64>() / (n - 1.0);
                if a == b {
                    let lambda = model.eigenvalues()[a];
                    prop_assert!(
                        (cov - lambda).abs() <= 1e-8 * lambda.max(1e-12),
                        "score variance {cov} vs eigenvalue {lambda}"
                    );
                } else {
                    let scale = model.eigenvalues()[0].max(1e-12);
                    prop_assert!(cov.abs() <= 1e-8 * scale, "cov(t{a}, t{b}) = {cov}");
                }
            }
        }
    }

    /// PLS weights are unit-norm and the training scores are mutually
    /// orthogonal (the deflation guarantee).
    #[test]
    fn pls_scores_orthogonal(
        entries in vec(-1.0f64..1.0, 14 * 5),
        response in vec(1.0f64..60.0, 14),
        k in 1usize..4,
    ) {
        let x = DMatrix::from_row_slice(14, 5, &entries);
        let y = DVector::from_vec(response);
        let model = match fit_pls(&x, &y, k) {
            Ok(m) => m,
            // Constant responses or exhausted correlation are rejected.
            Err(_) => return Ok(()),
        };
        for j in 0..k {
            let norm = model.weights().column(j).norm();
            prop_assert!((norm - 1.0).abs() <= 1e-10, "|w{j}| = {norm}");
        }
        let t = transform(&model, &x).expect("transform");
        let scale = t.norm_squared().max(1e-12);
        for a in 0..k {
            for b in (a + 1)..k {
                let dot = t.column(a).dot(&t.column(b));
                prop_assert!(dot.abs() <= 1e-8 * scale, "t{a}.t{b} = {dot}");
            }
        }
    }

    /// Every cross-validation repetition splits the rows into two disjoint
    /// covering folds, with the first fold taking the extra row when n is
    /// odd.
    #[test]
    fn partitions_cover_and_split_evenly(
        n in 4usize..60,
        reps in 1usize..12,
        seed in any::<u64>(),
    ) {
        let cfg = CVConfig { repetitions: reps, seed };
        let plan = partition_plan(n, &cfg);
        prop_assert_eq!(plan.len(), reps);
        for (first, second) in plan {
            prop_assert_eq!(first.len(), n.div_ceil(2));
            prop_assert_eq!(second.len(), n / 2);
            let mut all: Vec<usize> = first.iter().chain(&second).copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        }
    }

    /// The same seed always yields the same partition plan.
    #[test]
    fn partitions_are_seed_deterministic(
        n in 4usize..40,
        reps in 1usize..8,
        seed in any::<u64>(),
    ) {
        let cfg = CVConfig { repetitions: reps, seed };
        prop_assert_eq!(partition_plan(n, &cfg), partition_plan(n, &cfg));
    }
}
