//! Shared helpers for the integration suites.

pub mod oracle;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use kercon_core::kernels::{weight_matrix, LabelKernel, WeightMatrix};
use kercon_core::similarity::{project_rows, SimilarityMatrix};

/// A random unit-embedding batch with kernel weights from random ages.
///
/// Kernels rotate through Gaussian/Cauchy and (on coarse ages) the delta
/// kernel, so weight patterns include smooth values, exact ones and exact
/// zeros. Smooth bandwidths are kept wide relative to the age spread: the
/// threshold loss divides by restricted weight sums, and a weight like
/// exp(-400) would legitimately blow the loss up to 1e8+ where absolute
/// f64 comparisons stop meaning anything.
pub fn random_batch(
    rng: &mut ChaCha8Rng,
    n: usize,
    d: usize,
    temperature: f64,
) -> (SimilarityMatrix, WeightMatrix, Vec<f64>) {
    let raw = Array2::from_shape_fn((n, d), |_| rng.random::<f64>() * 2.0 - 1.0);
    let unit = project_rows(&raw).unwrap();
    let pick: u8 = rng.random_range(0..4);
    let (kernel, ages): (LabelKernel, Vec<f64>) = match pick {
        0 => (
            LabelKernel::gaussian(8.0 + rng.random::<f64>() * 4.0).unwrap(),
            (0..n).map(|_| rng.random::<f64>() * 20.0 + 6.0).collect(),
        ),
        1 => (
            LabelKernel::cauchy(0.02 + rng.random::<f64>() * 0.08).unwrap(),
            (0..n).map(|_| rng.random::<f64>() * 20.0 + 6.0).collect(),
        ),
        2 => (
            // coarse ages: duplicates guaranteed for small n
            LabelKernel::delta(),
            (0..n).map(|_| (rng.random_range(0..3) * 10) as f64).collect(),
        ),
        _ => (
            // far-apart clusters: cross weights underflow to exact 0, so the
            // count-fallback normalization path is exercised
            LabelKernel::gaussian(1.0).unwrap(),
            (0..n)
                .map(|_| if rng.random::<bool>() { 20.0 } else { 60.0 })
                .collect(),
        ),
    };
    let weights = weight_matrix(&kernel, &ages).unwrap();
    let sims = SimilarityMatrix::from_unit_rows(unit, temperature).unwrap();
    (sims, weights, ages)
}
