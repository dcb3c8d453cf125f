//! Feed-forward encoder `f: features → S^d` with hand-rolled backprop.
//!
//! Hidden layers use tanh (smooth, so finite-difference gradient checks are
//! clean); the final linear output is projected onto the unit sphere. The
//! projection is part of `f`: its Jacobian `(I − zzᵀ)/‖v‖` is applied when
//! chaining loss gradients (given with respect to the unit embeddings) back
//! to the parameters.

mod adam;
mod train;

pub use adam::{adam_step, scheduled_lr, AdamParams, AdamState};
pub use train::{
    train, write_trace_csv, BaselineHead, EpochRecord, TrainConfig, TrainMode, TrainedModel,
};

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::error::{Error, Result};
use crate::similarity::EmbeddingBatch;

#[derive(Debug, Clone)]
struct DenseLayer {
    /// out × in
    weight: Array2<f64>,
    bias: Array1<f64>,
}

/// Trainable encoder: a stack of dense layers, tanh between them, sphere
/// projection at the end.
#[derive(Debug, Clone)]
pub struct Encoder {
    layers: Vec<DenseLayer>,
}

/// Intermediate state of one forward pass, kept for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// Activations entering each layer: `acts[0]` is the input batch,
    /// `acts[l]` the tanh output of layer `l-1`.
    acts: Vec<Array2<f64>>,
    /// Row norms of the pre-projection output.
    norms: Vec<f64>,
    /// Unit-norm embeddings.
    pub unit: Array2<f64>,
}

/// Serialized parameters: layer sizes header plus the flat parameter vector,
/// and the optional regression head used in baseline mode.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub layer_sizes: Vec<usize>,
    pub params: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub head: Option<HeadCheckpoint>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HeadCheckpoint {
    pub weight: Vec<f64>,
    pub bias: f64,
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

impl Encoder {
    /// Xavier-initialized encoder. `layer_sizes` runs input → hidden… → d,
    /// with d ≥ 2 so the codomain is a genuine hypersphere.
    pub fn init(layer_sizes: &[usize], seed: u64) -> Result<Self> {
        if layer_sizes.len() < 2 {
            return Err(Error::InvalidArgument(
                "encoder needs at least input and output sizes".into(),
            ));
        }
        if layer_sizes.iter().any(|&s| s == 0) {
            return Err(Error::InvalidArgument("layer sizes must be positive".into()));
        }
        let d = *layer_sizes.last().unwrap();
        if d < 2 {
            return Err(Error::InvalidArgument(format!(
                "embedding dimension must be at least 2, got {d}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Vec::with_capacity(layer_sizes.len() - 1);
        for win in layer_sizes.windows(2) {
            let (fan_in, fan_out) = (win[0], win[1]);
            let std = (2.0 / (fan_in + fan_out) as f64).sqrt();
            let normal = Normal::new(0.0, std).expect("std is finite");
            let weight =
                Array2::from_shape_fn((fan_out, fan_in), |_| normal.sample(&mut rng));
            layers.push(DenseLayer {
                weight,
                bias: Array1::zeros(fan_out),
            });
        }
        Ok(Self { layers })
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![self.layers[0].weight.ncols()];
        sizes.extend(self.layers.iter().map(|l| l.weight.nrows()));
        sizes
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weight.ncols()
    }

    pub fn embedding_dim(&self) -> usize {
        self.layers.last().unwrap().weight.nrows()
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.len() + l.bias.len())
            .sum()
    }

    /// Forward pass keeping everything the backward pass needs.
    pub fn forward_cache(&self, features: ArrayView2<'_, f64>) -> Result<ForwardCache> {
        if features.ncols() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                got: features.ncols(),
            });
        }
        let n = features.nrows();
        if n == 0 {
            return Err(Error::EmptyInput("features"));
        }
        let mut acts: Vec<Array2<f64>> = vec![features.to_owned()];
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let mut z = acts.last().unwrap().dot(&layer.weight.t());
            z += &layer.bias;
            if l < last {
                z.mapv_inplace(f64::tanh);
                acts.push(z);
            } else {
                // final layer stays linear; project rows onto the sphere
                let mut norms = Vec::with_capacity(n);
                let mut unit = z.clone();
                for (row, mut r) in unit.rows_mut().into_iter().enumerate() {
                    let norm = r.dot(&r).sqrt();
                    if !norm.is_finite() || norm <= crate::similarity::MIN_PROJECTABLE_NORM {
                        return Err(Error::ZeroNormRow { row });
                    }
                    r.mapv_inplace(|x| x / norm);
                    norms.push(norm);
                }
                return Ok(ForwardCache { acts, norms, unit });
            }
        }
        unreachable!("encoder always has at least one layer")
    }

    /// Unit-norm embeddings of a feature batch.
    pub fn embed(&self, features: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        Ok(self.forward_cache(features)?.unit)
    }

    /// Embed and bundle with labels and sites.
    pub fn forward(
        &self,
        features: ArrayView2<'_, f64>,
        labels: &[f64],
        sites: &[u32],
    ) -> Result<EmbeddingBatch> {
        EmbeddingBatch::new(self.embed(features)?, labels.to_vec(), sites.to_vec())
    }

    /// Backprop an upstream gradient (with respect to the unit embeddings)
    /// to a flat parameter-gradient vector laid out like [`params_flat`].
    ///
    /// [`params_flat`]: Encoder::params_flat
    pub fn backward(&self, cache: &ForwardCache, upstream: ArrayView2<'_, f64>) -> Vec<f64> {
        let (n, d) = cache.unit.dim();
        debug_assert_eq!(upstream.dim(), (n, d));

        // through the projection: g_v = (g - z (z·g)) / ‖v‖
        let mut grad = Array2::<f64>::zeros((n, d));
        for r in 0..n {
            let z = cache.unit.row(r);
            let g = upstream.row(r);
            let zg = z.dot(&g);
            let norm = cache.norms[r];
            for j in 0..d {
                grad[[r, j]] = (g[j] - z[j] * zg) / norm;
            }
        }

        // per-layer gradients, last layer first, then flattened in order
        let mut per_layer: Vec<(Array2<f64>, Array1<f64>)> = Vec::with_capacity(self.layers.len());
        let mut g = grad;
        for (l, layer) in self.layers.iter().enumerate().rev() {
            let gw = g.t().dot(&cache.acts[l]);
            let gb = g.sum_axis(Axis(0));
            if l > 0 {
                let mut gh = g.dot(&layer.weight);
                // tanh'(z) = 1 - tanh(z)^2, and acts[l] holds tanh(z)
                gh.zip_mut_with(&cache.acts[l], |gi, &a| *gi *= 1.0 - a * a);
                g = gh;
            }
            per_layer.push((gw, gb));
        }
        per_layer.reverse();

        let mut flat = Vec::with_capacity(self.param_count());
        for (gw, gb) in per_layer {
            flat.extend(gw.iter());
            flat.extend(gb.iter());
        }
        flat
    }

    /// Flat parameter vector: per layer, row-major weights then bias.
    pub fn params_flat(&self) -> Vec<f64> {
        let mut flat = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            flat.extend(l.weight.iter());
            flat.extend(l.bias.iter());
        }
        flat
    }

    pub fn set_params_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::DimensionMismatch {
                expected: self.param_count(),
                got: flat.len(),
            });
        }
        let mut offset = 0;
        for l in &mut self.layers {
            for w in l.weight.iter_mut() {
                *w = flat[offset];
                offset += 1;
            }
            for b in l.bias.iter_mut() {
                *b = flat[offset];
                offset += 1;
            }
        }
        Ok(())
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            layer_sizes: self.layer_sizes(),
            params: self.params_flat(),
            head: None,
        }
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        let mut enc = Encoder::init(&ckpt.layer_sizes, 0)?;
        enc.set_params_flat(&ckpt.params)?;
        Ok(enc)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zeroed_final_layer_with_bias_is_constant_map() {
        let mut enc = Encoder::init(&[3, 4, 2], 0).unwrap();
        let mut flat = enc.params_flat();
        // zero the final weight block, set its bias nonzero
        let final_w = 2 * 4;
        let total = flat.len();
        for v in flat[total - final_w - 2..total - 2].iter_mut() {
            *v = 0.0;
        }
        flat[total - 2] = 0.3;
        flat[total - 1] = -0.4;
        enc.set_params_flat(&flat).unwrap();

        let x = array![[1.0, 2.0, 3.0], [-1.0, 0.5, 0.0], [4.0, 4.0, 4.0]];
        let z = enc.embed(x.view()).unwrap();
        for r in 1..3 {
            for j in 0..2 {
                assert!((z[[r, j]] - z[[0, j]]).abs() < 1e-15);
            }
        }
        // all pairwise cosines are 1
        let sim = z.row(0).dot(&z.row(1));
        assert!((sim - 1.0).abs() < 1e-12);
    }

    #[test]
    fn outputs_are_unit_norm() {
        let enc = Encoder::init(&[5, 8, 3], 7).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = Array2::from_shape_fn((10, 5), |_| rng.random::<f64>() * 4.0 - 2.0);
        let z = enc.embed(x.view()).unwrap();
        for r in z.rows() {
            assert!((r.dot(&r).sqrt() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn forward_is_deterministic() {
        let a = Encoder::init(&[4, 6, 2], 99).unwrap();
        let b = Encoder::init(&[4, 6, 2], 99).unwrap();
        assert_eq!(a.params_flat(), b.params_flat());
        let x = array![[0.1, 0.2, 0.3, 0.4], [1.0, -1.0, 0.5, 0.0]];
        let za = a.embed(x.view()).unwrap();
        let zb = b.embed(x.view()).unwrap();
        assert_eq!(za, zb);
    }

    #[test]
    fn zero_upstream_gives_zero_param_grads() {
        let enc = Encoder::init(&[3, 4, 2], 3).unwrap();
        let x = array![[1.0, 0.0, -1.0], [0.3, 0.3, 0.3]];
        let cache = enc.forward_cache(x.view()).unwrap();
        let grads = enc.backward(&cache, Array2::zeros((2, 2)).view());
        assert!(grads.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn single_linear_layer_matches_hand_jacobian() {
        // encoder [2, 2] with W = I, b = 0 on input (3, 4): v = (3, 4),
        // z = (0.6, 0.8), and d z / d v = (I - zzᵀ)/5
        let mut enc = Encoder::init(&[2, 2], 0).unwrap();
        enc.set_params_flat(&[1.0, 0.0, 0.0, 1.0, 0.0, 0.0]).unwrap();
        let x = array![[3.0, 4.0], [0.0, 1.0]];
        let cache = enc.forward_cache(x.view()).unwrap();
        assert!((cache.unit[[0, 0]] - 0.6).abs() < 1e-15);
        assert!((cache.unit[[0, 1]] - 0.8).abs() < 1e-15);

        // upstream only on row 0, direction e_0
        let upstream = array![[1.0, 0.0], [0.0, 0.0]];
        let grads = enc.backward(&cache, upstream.view());
        // g_v = ((1,0) - 0.6·(0.6,0.8)) / 5 = (0.64, -0.48)/5
        let gv = [0.128, -0.096];
        // dL/dW = g_vᵀ x, dL/db = g_v  (row 0 only)
        let expected = [
            gv[0] * 3.0,
            gv[0] * 4.0,
            gv[1] * 3.0,
            gv[1] * 4.0,
            gv[0],
            gv[1],
        ];
        for (g, e) in grads.iter().zip(expected.iter()) {
            assert!((g - e).abs() < 1e-12, "{g} vs {e}");
        }
    }

    #[test]
    fn parameter_gradients_match_finite_differences() {
        let enc = Encoder::init(&[3, 5, 4, 2], 11).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = Array2::from_shape_fn((4, 3), |_| rng.random::<f64>() * 2.0 - 1.0);
        // linear functional of the unit output: L = Σ c ⊙ z
        let c = Array2::from_shape_fn((4, 2), |_| rng.random::<f64>() * 2.0 - 1.0);

        let cache = enc.forward_cache(x.view()).unwrap();
        let analytic = enc.backward(&cache, c.view());

        let mut params = enc.params_flat();
        let eps = 1e-6;
        let mut worst = 0.0f64;
        for idx in 0..params.len() {
            let orig = params[idx];
            let mut probe = enc.clone();
            params[idx] = orig + eps;
            probe.set_params_flat(&params).unwrap();
            let lp = (&probe.embed(x.view()).unwrap() * &c).sum();
            params[idx] = orig - eps;
            probe.set_params_flat(&params).unwrap();
            let lm = (&probe.embed(x.view()).unwrap() * &c).sum();
            params[idx] = orig;
            let fd = (lp - lm) / (2.0 * eps);
            let rel = (fd - analytic[idx]).abs() / fd.abs().max(analytic[idx].abs()).max(1e-5);
            worst = worst.max(rel);
        }
        assert!(worst <= 1e-4, "max relative error {worst}");
    }

    #[test]
    fn checkpoint_roundtrip() {
        let enc = Encoder::init(&[4, 3, 2], 21).unwrap();
        let ckpt = enc.to_checkpoint();
        let back = Encoder::from_checkpoint(&ckpt).unwrap();
        assert_eq!(enc.params_flat(), back.params_flat());
        assert_eq!(enc.layer_sizes(), back.layer_sizes());
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let enc = Encoder::init(&[3, 2], 0).unwrap();
        let x = array![[1.0, 2.0]];
        assert!(matches!(
            enc.embed(x.view()),
            Err(Error::DimensionMismatch { expected: 3, got: 2 })
        ));
    }
}
