//! Property tests for the loss layer: oracle equivalence on random batches,
//! permutation equivariance, and division-safety of the threshold loss.

mod common;

use common::oracle;
use ndarray::Array2;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use kercon_core::kernels::WeightMatrix;
use kercon_core::losses::{
    loss_on_similarities, LossKind, LossOpts, ThrNorm,
};
use kercon_core::Error;

fn oracle_value(kind: LossKind, sims: &ndarray::ArrayView2<f64>, w: &ndarray::ArrayView2<f64>) -> Option<f64> {
    match kind {
        LossKind::YAware => oracle::yaware_direct(*sims, *w),
        LossKind::Threshold => {
            oracle::thr_direct(*sims, *w, oracle::ThrNormOracle::WeightSumWithFallback)
        }
        LossKind::Exp => oracle::exp_direct(*sims, *w),
        LossKind::SupCon => unreachable!("supcon covered separately"),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn implementation_matches_direct_transcription(
        seed in 0u64..10_000,
        n in 2usize..6,
        d in 2usize..4,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (sims, weights, _) = common::random_batch(&mut rng, n, d, 0.5);
        for kind in [LossKind::YAware, LossKind::Threshold, LossKind::Exp] {
            let got = loss_on_similarities(kind, sims.values(), &weights, &LossOpts::default());
            let want = oracle_value(kind, &sims.values(), &weights.values().view());
            match (got, want) {
                (Ok(out), Some(v)) => prop_assert!(
                    (out.value - v).abs() <= 1e-12,
                    "{kind:?}: {} vs oracle {v}", out.value
                ),
                (Err(Error::NoPositivePairs), None) => {}
                (g, w) => prop_assert!(false, "{kind:?}: mismatched outcomes {g:?} vs {w:?}"),
            }
        }
    }

    #[test]
    fn permuting_the_batch_permutes_gradients(
        seed in 0u64..10_000,
        n in 3usize..6,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (sims, weights, _) = common::random_batch(&mut rng, n, 3, 0.5);

        // a rotation of the index set
        let shift = 1 + (seed as usize) % (n - 1);
        let perm: Vec<usize> = (0..n).map(|i| (i + shift) % n).collect();

        let mut s_perm = Array2::<f64>::zeros((n, n));
        let mut w_perm = Array2::<f64>::zeros((n, n));
        for i in 0..n {
            for k in 0..n {
                s_perm[[i, k]] = sims.values()[[perm[i], perm[k]]];
                w_perm[[i, k]] = weights.values()[[perm[i], perm[k]]];
            }
        }
        let w_perm = WeightMatrix::from_raw(w_perm).unwrap();

        for kind in [LossKind::YAware, LossKind::Threshold, LossKind::Exp] {
            let base = loss_on_similarities(kind, sims.values(), &weights, &LossOpts::default());
            let perm_out = loss_on_similarities(kind, s_perm.view(), &w_perm, &LossOpts::default());
            match (base, perm_out) {
                (Ok(a), Ok(b)) => {
                    // summation-noise tolerance, scaled for losses far from O(1)
                    let tol = 1e-12 * a.value.abs().max(1.0);
                    prop_assert!((a.value - b.value).abs() <= tol, "{kind:?} value changed under permutation");
                    for i in 0..n {
                        for k in 0..n {
                            let g = a.grad[[perm[i], perm[k]]];
                            prop_assert!(
                                (b.grad[[i, k]] - g).abs() <= 1e-12 * g.abs().max(1.0),
                                "{kind:?} grad not equivariant at ({i},{k})"
                            );
                        }
                    }
                }
                (Err(Error::NoPositivePairs), Err(Error::NoPositivePairs)) => {}
                (a, b) => prop_assert!(false, "{kind:?}: mismatched outcomes {a:?} vs {b:?}"),
            }
        }
    }

    #[test]
    fn threshold_never_divides_by_zero(
        seed in 0u64..10_000,
        n in 2usize..7,
    ) {
        // weights drawn from {0, 0.5, 0.5, 1} with ties everywhere: the
        // restricted sets are often empty or zero-weight
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (sims, _, _) = common::random_batch(&mut rng, n, 3, 0.1);
        use rand::Rng;
        let mut w = Array2::<f64>::zeros((n, n));
        for i in 0..n {
            for k in (i + 1)..n {
                let v = [0.0, 0.5, 0.5, 1.0][rng.random_range(0..4)];
                w[[i, k]] = v;
                w[[k, i]] = v;
            }
        }
        let weights = WeightMatrix::from_raw(w).unwrap();
        for norm in [ThrNorm::WeightSum, ThrNorm::Count] {
            match loss_on_similarities(
                LossKind::Threshold,
                sims.values(),
                &weights,
                &LossOpts { thr_norm: norm },
            ) {
                Ok(out) => {
                    prop_assert!(out.value.is_finite());
                    prop_assert!(out.grad.iter().all(|g| g.is_finite()));
                }
                Err(Error::NoPositivePairs) => {}
                Err(e) => prop_assert!(false, "unexpected error {e}"),
            }
        }
    }

    #[test]
    fn losses_finite_under_extreme_similarity_scale(
        seed in 0u64..10_000,
        n in 2usize..6,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (sims, weights, _) = common::random_batch(&mut rng, n, 3, 0.1);
        let scaled = sims.values().to_owned() * 1e3;
        for kind in [LossKind::YAware, LossKind::Threshold, LossKind::Exp] {
            match loss_on_similarities(kind, scaled.view(), &weights, &LossOpts::default()) {
                Ok(out) => {
                    prop_assert!(out.value.is_finite(), "{kind:?} value not finite");
                    prop_assert!(out.grad.iter().all(|g| g.is_finite()), "{kind:?} grad not finite");
                }
                Err(Error::NoPositivePairs) => {}
                Err(e) => prop_assert!(false, "unexpected error {e}"),
            }
        }
    }
}
