//! Label-distance kernels and per-batch weight matrices.
//!
//! For continuous labels there is no hard positive/negative split; instead
//! every pair of samples gets a degree of positiveness
//! `w = K(y_i - y_k) ∈ [0, 1]` computed by a kernel on the label difference.
//! Two smooth kernels are supported plus the indicator (delta) kernel, which
//! recovers the discrete-label setting.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Kernel family. `Gaussian` is serialized as `"rbf"` to match config files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelKind {
    #[serde(rename = "rbf", alias = "gaussian")]
    Gaussian,
    Cauchy,
    Delta,
}

impl KernelKind {
    /// Name used in config files and CSV output.
    pub fn name(&self) -> &'static str {
        match self {
            KernelKind::Gaussian => "rbf",
            KernelKind::Cauchy => "cauchy",
            KernelKind::Delta => "delta",
        }
    }
}

/// A label-distance kernel with its bandwidth parameter.
///
/// * Gaussian: `K(u) = exp(-u² / (2σ²))`, bandwidth is σ.
/// * Cauchy:   `K(u) = 1 / (γ·u² + 1)`, bandwidth is γ.
/// * Delta:    `K(u) = 1` iff `u == 0`, else `0`; bandwidth is ignored.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "KernelRepr", into = "KernelRepr")]
pub struct LabelKernel {
    kind: KernelKind,
    bandwidth: f64,
}

/// Serialized form: `{"kernel": "rbf"|"cauchy"|"delta", "bandwidth": 2.0}`.
#[derive(Serialize, Deserialize)]
struct KernelRepr {
    kernel: KernelKind,
    #[serde(default = "default_bandwidth")]
    bandwidth: f64,
}

fn default_bandwidth() -> f64 {
    1.0
}

impl TryFrom<KernelRepr> for LabelKernel {
    type Error = Error;
    fn try_from(r: KernelRepr) -> Result<Self> {
        LabelKernel::new(r.kernel, r.bandwidth)
    }
}

impl From<LabelKernel> for KernelRepr {
    fn from(k: LabelKernel) -> Self {
        KernelRepr {
            kernel: k.kind,
            bandwidth: k.bandwidth,
        }
    }
}

impl LabelKernel {
    pub fn new(kind: KernelKind, bandwidth: f64) -> Result<Self> {
        match kind {
            KernelKind::Delta => Ok(Self {
                kind,
                bandwidth: 1.0,
            }),
            KernelKind::Gaussian | KernelKind::Cauchy => {
                if bandwidth.is_finite() && bandwidth > 0.0 {
                    Ok(Self { kind, bandwidth })
                } else {
                    Err(Error::InvalidKernel(format!(
                        "{} kernel needs bandwidth > 0, got {bandwidth}",
                        kind.name()
                    )))
                }
            }
        }
    }

    pub fn gaussian(sigma: f64) -> Result<Self> {
        Self::new(KernelKind::Gaussian, sigma)
    }

    pub fn cauchy(gamma: f64) -> Result<Self> {
        Self::new(KernelKind::Cauchy, gamma)
    }

    pub fn delta() -> Self {
        Self {
            kind: KernelKind::Delta,
            bandwidth: 1.0,
        }
    }

    pub fn kind(&self) -> KernelKind {
        self.kind
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    /// Evaluate the kernel on a label difference `u`.
    ///
    /// Result is in `[0, 1]`, with `K(0) = 1` and `K(u) = K(-u)`.
    pub fn eval(&self, u: f64) -> Result<f64> {
        if !u.is_finite() {
            return Err(Error::InvalidLabelDifference(u));
        }
        Ok(match self.kind {
            KernelKind::Gaussian => {
                let s = self.bandwidth;
                (-(u * u) / (2.0 * s * s)).exp()
            }
            KernelKind::Cauchy => 1.0 / (self.bandwidth * u * u + 1.0),
            KernelKind::Delta => {
                if u == 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        })
    }
}

/// Evaluate `kernel` on the label difference `u`. See [`LabelKernel::eval`].
pub fn kernel_eval(kernel: &LabelKernel, u: f64) -> Result<f64> {
    kernel.eval(u)
}

/// N×N matrix of pairwise degrees of positiveness for one batch.
///
/// Entry `(i, k)` with `i != k` is `K(y_i - y_k)`. The diagonal is fixed to 0:
/// an anchor is never its own positive, and a zero diagonal lets downstream
/// sums run uniformly over all indices.
#[derive(Debug, Clone)]
pub struct WeightMatrix {
    values: Array2<f64>,
}

impl WeightMatrix {
    /// Wrap a precomputed weight matrix.
    ///
    /// Validates shape, the `[0, 1]` range and the zero diagonal, but not
    /// symmetry; [`weight_matrix`] always produces symmetric matrices, while
    /// this low-level hook also admits per-anchor masks used in tests and
    /// diagnostics.
    pub fn from_raw(values: Array2<f64>) -> Result<Self> {
        let n = values.nrows();
        if values.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: values.ncols(),
            });
        }
        if n < 2 {
            return Err(Error::BatchTooSmall(n));
        }
        for ((i, k), &w) in values.indexed_iter() {
            if i == k {
                if w != 0.0 {
                    return Err(Error::InvalidArgument(format!(
                        "weight matrix diagonal must be 0, got {w} at ({i},{i})"
                    )));
                }
            } else if !(0.0..=1.0).contains(&w) {
                return Err(Error::InvalidArgument(format!(
                    "weight {w} at ({i},{k}) outside [0, 1]"
                )));
            }
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }
}

/// Build the weight matrix for a batch of scalar labels.
///
/// `w[i][k] = K(y_i - y_k)` for `i != k`, diagonal 0. Labels are scalar
/// (age in years); for non-scalar labels use [`weight_matrix_with`] and
/// supply the distance yourself.
pub fn weight_matrix(kernel: &LabelKernel, labels: &[f64]) -> Result<WeightMatrix> {
    weight_matrix_with(kernel, labels, |a, b| a - b)
}

/// Build the weight matrix with a pluggable label distance.
///
/// `distance(y_i, y_k)` must be finite and symmetric up to sign (the kernels
/// only look at its square).
pub fn weight_matrix_with<L, F>(kernel: &LabelKernel, labels: &[L], distance: F) -> Result<WeightMatrix>
where
    F: Fn(&L, &L) -> f64,
{
    let n = labels.len();
    if n < 2 {
        return Err(Error::BatchTooSmall(n));
    }
    let mut values = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for k in (i + 1)..n {
            let w = kernel.eval(distance(&labels[i], &labels[k]))?;
            values[[i, k]] = w;
            values[[k, i]] = w;
        }
    }
    Ok(WeightMatrix { values })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn gaussian_identity_and_known_value() {
        let k = LabelKernel::gaussian(2.0).unwrap();
        assert_eq!(k.eval(0.0).unwrap(), 1.0);
        // exp(-4/8) evaluated independently
        assert!((k.eval(2.0).unwrap() - 0.606_530_659_712_633_4).abs() < 1e-12);
    }

    #[test]
    fn cauchy_known_value() {
        let k = LabelKernel::cauchy(1.0).unwrap();
        assert_eq!(k.eval(1.0).unwrap(), 0.5);
        assert_eq!(k.eval(0.0).unwrap(), 1.0);
    }

    #[test]
    fn delta_is_indicator() {
        let k = LabelKernel::delta();
        assert_eq!(k.eval(0.0).unwrap(), 1.0);
        assert_eq!(k.eval(0.3).unwrap(), 0.0);
    }

    #[test]
    fn non_finite_difference_is_rejected() {
        let k = LabelKernel::gaussian(1.0).unwrap();
        assert!(matches!(
            k.eval(f64::NAN),
            Err(Error::InvalidLabelDifference(_))
        ));
        assert!(k.eval(f64::INFINITY).is_err());
    }

    #[test]
    fn bad_bandwidth_is_rejected() {
        assert!(LabelKernel::gaussian(0.0).is_err());
        assert!(LabelKernel::cauchy(-1.0).is_err());
        assert!(LabelKernel::gaussian(f64::NAN).is_err());
    }

    #[test]
    fn weight_matrix_delta_on_discrete_labels() {
        let w = weight_matrix(&LabelKernel::delta(), &[5.0, 5.0, 9.0]).unwrap();
        let v = w.values();
        assert_eq!(v[[0, 1]], 1.0);
        assert_eq!(v[[1, 0]], 1.0);
        assert_eq!(v[[0, 2]], 0.0);
        assert_eq!(v[[1, 2]], 0.0);
        for i in 0..3 {
            assert_eq!(v[[i, i]], 0.0);
        }
    }

    #[test]
    fn weight_matrix_gaussian_off_diagonal() {
        let w = weight_matrix(&LabelKernel::gaussian(2.0).unwrap(), &[0.0, 2.0]).unwrap();
        assert!((w.values()[[0, 1]] - 0.606_530_659_712_633_4).abs() < 1e-12);
        assert!((w.values()[[1, 0]] - 0.606_530_659_712_633_4).abs() < 1e-12);
    }

    #[test]
    fn batch_of_one_is_rejected() {
        let err = weight_matrix(&LabelKernel::delta(), &[1.0]).unwrap_err();
        assert!(err.to_string().contains("batch too small"));
    }

    #[test]
    fn serde_roundtrip_matches_config_schema() {
        let k: LabelKernel = serde_json::from_str(r#"{"kernel":"rbf","bandwidth":2.0}"#).unwrap();
        assert_eq!(k.kind(), KernelKind::Gaussian);
        assert_eq!(k.bandwidth(), 2.0);
        let s = serde_json::to_string(&k).unwrap();
        assert!(s.contains("\"rbf\""));
        let back: LabelKernel = serde_json::from_str(&s).unwrap();
        assert_eq!(back, k);
        assert!(serde_json::from_str::<LabelKernel>(r#"{"kernel":"rbf","bandwidth":-2}"#).is_err());
    }

    #[test]
    fn tight_gaussian_approaches_delta() {
        let labels = [3.0, 3.0, 3.1, 7.5, 46.0];
        let tight = weight_matrix(&LabelKernel::gaussian(1e-6).unwrap(), &labels).unwrap();
        let delta = weight_matrix(&LabelKernel::delta(), &labels).unwrap();
        for (a, b) in tight.values().iter().zip(delta.values().iter()) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    fn smooth_kernel() -> impl Strategy<Value = LabelKernel> {
        prop_oneof![
            (0.1f64..10.0).prop_map(|s| LabelKernel::gaussian(s).unwrap()),
            (0.1f64..10.0).prop_map(|g| LabelKernel::cauchy(g).unwrap()),
        ]
    }

    fn any_kernel() -> impl Strategy<Value = LabelKernel> {
        prop_oneof![smooth_kernel(), Just(LabelKernel::delta())]
    }

    proptest! {
        #[test]
        fn kernel_is_bounded_symmetric_unimodal(kernel in any_kernel(), u in -100.0f64..100.0) {
            let k = kernel.eval(u).unwrap();
            prop_assert!((0.0..=1.0).contains(&k));
            prop_assert_eq!(k, kernel.eval(-u).unwrap());
            // non-increasing in |u|
            let further = kernel.eval(u * 1.5).unwrap();
            prop_assert!(further <= k + 1e-15);
        }

        // restricted to smooth kernels: a large shift can round two nearly
        // equal labels onto the same float, flipping the delta indicator
        #[test]
        fn label_shift_leaves_weights_unchanged(
            kernel in smooth_kernel(),
            labels in proptest::collection::vec(-50.0f64..50.0, 2..8),
            shift in -100.0f64..100.0,
        ) {
            let base = weight_matrix(&kernel, &labels).unwrap();
            let shifted_labels: Vec<f64> = labels.iter().map(|y| y + shift).collect();
            let shifted = weight_matrix(&kernel, &shifted_labels).unwrap();
            for (a, b) in base.values().iter().zip(shifted.values().iter()) {
                // shifting moves the subtraction onto different floats; exact for
                // integer-ish shifts, 1e-9 covers rounding of y + c
                prop_assert!((a - b).abs() < 1e-9);
            }
        }

        #[test]
        fn gaussian_scale_equivariance(
            sigma in 0.5f64..4.0,
            scale in 0.25f64..4.0,
            labels in proptest::collection::vec(-50.0f64..50.0, 2..8),
        ) {
            let base = weight_matrix(&LabelKernel::gaussian(sigma).unwrap(), &labels).unwrap();
            let scaled_labels: Vec<f64> = labels.iter().map(|y| y * scale).collect();
            let scaled =
                weight_matrix(&LabelKernel::gaussian(sigma * scale).unwrap(), &scaled_labels)
                    .unwrap();
            for (a, b) in base.values().iter().zip(scaled.values().iter()) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }

        #[test]
        fn weights_symmetric_in_unit_interval(
            kernel in any_kernel(),
            labels in proptest::collection::vec(-50.0f64..50.0, 2..8),
        ) {
            let w = weight_matrix(&kernel, &labels).unwrap();
            let v = w.values();
            for i in 0..labels.len() {
                prop_assert_eq!(v[[i, i]], 0.0);
                for k in 0..labels.len() {
                    prop_assert!((0.0..=1.0).contains(&v[[i, k]]));
                    prop_assert_eq!(v[[i, k]], v[[k, i]]);
                }
            }
        }
    }
}
