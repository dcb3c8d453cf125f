//! Training loop: the paper's optimizer recipe applied to the small encoder,
//! in contrastive mode or as an L1 regression baseline.

use ndarray::{Array1, Array2, ArrayView2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use super::{adam_step, scheduled_lr, AdamParams, AdamState, Encoder};
use crate::error::{Error, Result};
use crate::kernels::{weight_matrix, LabelKernel};
use crate::losses::{loss_with_gradient, supcon_loss, LossKind, LossOpts, ThrNorm};
use crate::numerics::{derive_seed, Kahan};
use crate::similarity::SimilarityMatrix;

/// Optimizer and loss settings for one training run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub lr_decay: f64,
    pub decay_every_epochs: usize,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub temperature: f64,
    pub loss: LossKind,
    pub kernel: LabelKernel,
    #[serde(default)]
    pub thr_norm: ThrNorm,
    #[serde(default)]
    pub adam: AdamParams,
}

impl TrainConfig {
    /// Defaults from the training recipe: lr 1e-4 decayed by 0.9 every 10
    /// epochs, weight decay 5e-5, batch size 32, 300 epochs.
    pub fn new(loss: LossKind, kernel: LabelKernel) -> Self {
        Self {
            learning_rate: 1e-4,
            lr_decay: 0.9,
            decay_every_epochs: 10,
            weight_decay: 5e-5,
            batch_size: 32,
            epochs: 300,
            seed: 0,
            temperature: 0.1,
            loss,
            kernel,
            thr_norm: ThrNorm::default(),
            adam: AdamParams::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.lr_decay > 0.0 && self.temperature > 0.0) {
            return Err(Error::Config(
                "learning_rate, lr_decay and temperature must be positive".into(),
            ));
        }
        if self.weight_decay < 0.0 {
            return Err(Error::Config("weight_decay must be non-negative".into()));
        }
        if self.batch_size < 2 {
            return Err(Error::Config(format!(
                "batch_size must be at least 2, got {}",
                self.batch_size
            )));
        }
        if self.decay_every_epochs == 0 {
            return Err(Error::Config("decay_every_epochs must be positive".into()));
        }
        if self.loss == LossKind::SupCon && self.kernel.kind() != crate::kernels::KernelKind::Delta
        {
            return Err(Error::Config(
                "supcon loss is only valid with the delta kernel".into(),
            ));
        }
        Ok(())
    }
}

/// One line of the loss trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub mean_loss: f64,
    pub lr: f64,
}

/// Write the loss trace as `epoch,mean_loss,lr` CSV.
pub fn write_trace_csv(path: &Path, trace: &[EpochRecord]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "epoch,mean_loss,lr")?;
    for r in trace {
        writeln!(f, "{},{},{}", r.epoch, r.mean_loss, r.lr)?;
    }
    Ok(())
}

/// Linear age head for the L1 baseline.
///
/// The learnable part operates in normalized units; a fixed affine
/// calibration (center and half-range of the training ages) maps it to
/// years, so Adam's step size is commensurate with the residuals it has to
/// fit. At initialization the head predicts the center age.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BaselineHead {
    weight: Array1<f64>,
    bias: f64,
    center: f64,
    scale: f64,
}

impl BaselineHead {
    pub fn new(dim: usize, train_ages: &[f64]) -> Self {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for &a in train_ages {
            lo = lo.min(a);
            hi = hi.max(a);
        }
        let center = if train_ages.is_empty() { 0.0 } else { 0.5 * (lo + hi) };
        let half = 0.5 * (hi - lo);
        Self {
            weight: Array1::zeros(dim),
            bias: 0.0,
            center,
            scale: if half > 0.0 { half } else { 1.0 },
        }
    }

    pub fn predict(&self, embeddings: ArrayView2<'_, f64>) -> Vec<f64> {
        embeddings
            .rows()
            .into_iter()
            .map(|z| self.center + self.scale * (z.dot(&self.weight) + self.bias))
            .collect()
    }

    fn params_flat(&self) -> Vec<f64> {
        let mut flat: Vec<f64> = self.weight.to_vec();
        flat.push(self.bias);
        flat
    }

    fn set_params_flat(&mut self, flat: &[f64]) {
        let d = self.weight.len();
        for (w, &v) in self.weight.iter_mut().zip(&flat[..d]) {
            *w = v;
        }
        self.bias = flat[d];
    }

    pub fn to_checkpoint(&self) -> super::HeadCheckpoint {
        super::HeadCheckpoint {
            weight: {
                let mut w = self.weight.to_vec();
                w.push(self.center);
                w.push(self.scale);
                w
            },
            bias: self.bias,
        }
    }
}

/// Whether to train contrastively or as the L1 regression baseline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainMode {
    Contrastive,
    BaselineL1,
}

/// A trained encoder, with the age head when trained in baseline mode.
#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub encoder: Encoder,
    pub head: Option<BaselineHead>,
}

impl TrainedModel {
    pub fn to_checkpoint(&self) -> super::Checkpoint {
        let mut ckpt = self.encoder.to_checkpoint();
        ckpt.head = self.head.as_ref().map(|h| h.to_checkpoint());
        ckpt
    }
}

/// Map continuous labels to discrete class ids by exact equality (for the
/// supcon reduction; meaningful only when labels are genuinely discrete).
fn discretize_exact(labels: &[f64]) -> Vec<u32> {
    let mut table: BTreeMap<u64, u32> = BTreeMap::new();
    labels
        .iter()
        .map(|y| {
            let bits = y.to_bits();
            let next = table.len() as u32;
            *table.entry(bits).or_insert(next)
        })
        .collect()
}

/// Train the encoder on `(features, ages)`.
///
/// Deterministic given `cfg.seed`: the shuffle order is drawn from a
/// dedicated seeded stream, epoch-end batches of size 1 are dropped, and
/// per-epoch mean losses are returned as the trace.
pub fn train(
    encoder: Encoder,
    features: ArrayView2<'_, f64>,
    ages: &[f64],
    mode: TrainMode,
    cfg: &TrainConfig,
) -> Result<(TrainedModel, Vec<EpochRecord>)> {
    cfg.validate()?;
    let n = features.nrows();
    if n == 0 {
        return Err(Error::EmptyInput("training features"));
    }
    if n < 2 {
        return Err(Error::BatchTooSmall(n));
    }
    if ages.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: ages.len(),
        });
    }
    if features.ncols() != encoder.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: encoder.input_dim(),
            got: features.ncols(),
        });
    }

    let mut encoder = encoder;
    let enc_len = encoder.param_count();
    let mut head = match mode {
        TrainMode::BaselineL1 => Some(BaselineHead::new(encoder.embedding_dim(), ages)),
        TrainMode::Contrastive => None,
    };

    let mut params = encoder.params_flat();
    if let Some(h) = &head {
        params.extend(h.params_flat());
    }
    let mut state = AdamState::new(params.len());
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, shuffle_tag()));

    let opts = LossOpts {
        thr_norm: cfg.thr_norm,
    };
    let mut order: Vec<usize> = (0..n).collect();
    let mut trace = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let lr = scheduled_lr(cfg.learning_rate, cfg.lr_decay, cfg.decay_every_epochs, epoch);
        order.shuffle(&mut rng);

        let mut epoch_loss = Kahan::new();
        let mut batches = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            if chunk.len() < 2 {
                continue; // contrastive losses are undefined on singletons
            }
            let m = chunk.len();
            let feats = gather_rows(&features, chunk);
            let batch_ages: Vec<f64> = chunk.iter().map(|&r| ages[r]).collect();

            let cache = encoder.forward_cache(feats.view())?;
            let (loss_val, grad_z, head_grads) = match mode {
                TrainMode::Contrastive => {
                    let sims =
                        SimilarityMatrix::from_unit_rows(cache.unit.clone(), cfg.temperature)?;
                    let out = if cfg.loss == LossKind::SupCon {
                        supcon_loss(&sims, &discretize_exact(&batch_ages))?
                    } else {
                        let weights = weight_matrix(&cfg.kernel, &batch_ages)?;
                        loss_with_gradient(cfg.loss, &sims, &weights, &opts)?
                    };
                    (out.value, out.grad, None)
                }
                TrainMode::BaselineL1 => {
                    let h = head.as_ref().expect("baseline mode has a head");
                    let preds = h.predict(cache.unit.view());
                    let mut loss = Kahan::new();
                    let mut grad_z = Array2::<f64>::zeros(cache.unit.dim());
                    let mut gw = Array1::<f64>::zeros(h.weight.len());
                    let mut gb = 0.0;
                    for r in 0..m {
                        let resid = preds[r] - batch_ages[r];
                        loss.add(resid.abs());
                        let s = resid.signum() * if resid == 0.0 { 0.0 } else { 1.0 };
                        let coeff = s * h.scale / m as f64;
                        grad_z.row_mut(r).scaled_add(coeff, &h.weight.view());
                        gw.scaled_add(coeff, &cache.unit.row(r));
                        gb += coeff;
                    }
                    let mut hg = gw.to_vec();
                    hg.push(gb);
                    (loss.sum() / m as f64, grad_z, Some(hg))
                }
            };

            let mut grads = encoder.backward(&cache, grad_z.view());
            if let Some(hg) = head_grads {
                grads.extend(hg);
            }
            adam_step(&mut params, &grads, &mut state, lr, cfg.weight_decay, &cfg.adam);
            encoder.set_params_flat(&params[..enc_len])?;
            if let Some(h) = &mut head {
                h.set_params_flat(&params[enc_len..]);
            }

            epoch_loss.add(loss_val);
            batches += 1;
        }

        if batches == 0 {
            return Err(Error::Config(
                "no usable batches: dataset smaller than 2 samples".into(),
            ));
        }
        trace.push(EpochRecord {
            epoch: epoch + 1,
            mean_loss: epoch_loss.sum() / batches as f64,
            lr,
        });
    }

    Ok((TrainedModel { encoder, head }, trace))
}

fn gather_rows(features: &ArrayView2<'_, f64>, rows: &[usize]) -> Array2<f64> {
    let d = features.ncols();
    let mut out = Array2::<f64>::zeros((rows.len(), d));
    for (slot, &r) in rows.iter().enumerate() {
        out.row_mut(slot).assign(&features.row(r));
    }
    out
}

const fn shuffle_tag() -> u64 {
    0x53_48_55_46 // "SHUF"
}
