//! Contrastive losses for regression, with exact analytic gradients.
//!
//! All three losses share the same skeleton. For an anchor `i`, every other
//! sample `k` in the batch carries a degree of positiveness `w_k ∈ [0, 1]`
//! and a scaled similarity `s_k`. Writing `A` for the indices distinct from
//! the anchor and `S_w = Σ_{t∈A} w_t`, the per-anchor losses are
//!
//! * y-aware:    `Σ_k (w_k/S_w) · [LSE_{t∈A}(s_t) − s_k]`
//! * threshold:  `Σ_k (w_k/n_k) · [LSE_{t: w_t<w_k}(s_t) − s_k]`, where the
//!   uniformity sum keeps only samples strictly less positive than `k`,
//!   `n_k` normalizes by their weight sum (falling back to their count when
//!   that sum is zero), and `k`-terms with an empty set are dropped;
//! * exp:        `Σ_k (w_k/S_w) · [LSE_{t∈A}(s_t·(1−w_t)) − s_k]` — repulsion
//!   strength scales with kernel distance, so near-anchor samples are
//!   repelled with strength ~0.
//!
//! The batch loss averages per-anchor losses over every anchor whose weight
//! row has positive sum; anchors without any positive interaction are
//! skipped, and a batch where every anchor is skipped is an error rather
//! than a NaN. With the delta kernel the y-aware loss reduces exactly to
//! SupCon, which is also provided standalone as the reduction target.
//!
//! Gradients are derived with respect to the unit embeddings at fixed norm;
//! chaining through the sphere-projection Jacobian `(I − zzᵀ)/‖v‖` is the
//! caller's job (the encoder does it). Every log-sum-exp here subtracts the
//! max, so values and gradients stay finite under extreme similarity scales.

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::WeightMatrix;
use crate::numerics::{softmax_into, Kahan};
use crate::similarity::{project_rows, SimilarityMatrix};

/// Which contrastive loss to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    YAware,
    #[serde(rename = "thr", alias = "threshold")]
    Threshold,
    Exp,
    SupCon,
}

impl LossKind {
    pub fn name(&self) -> &'static str {
        match self {
            LossKind::YAware => "yaware",
            LossKind::Threshold => "thr",
            LossKind::Exp => "exp",
            LossKind::SupCon => "supcon",
        }
    }

    pub const ALL: [LossKind; 4] = [
        LossKind::YAware,
        LossKind::Threshold,
        LossKind::Exp,
        LossKind::SupCon,
    ];
}

/// Normalization of the threshold loss denominator.
///
/// The restricted uniformity set `{t : w_t < w_k}` can have zero weight sum
/// (all strictly-less weights are 0, e.g. with the delta kernel).
/// `WeightSum` divides by the weight sum and falls back to the count in that
/// case; `Count` always divides by the count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThrNorm {
    #[default]
    WeightSum,
    Count,
}

/// Options shared by the loss entry points.
#[derive(Debug, Clone, Copy, Default)]
pub struct LossOpts {
    pub thr_norm: ThrNorm,
}

/// Loss value plus gradient with respect to the similarity entries.
///
/// `grad[[i, t]]` is the derivative of the batch loss with respect to the
/// similarity `s_t` seen from anchor `i`; the diagonal is structurally zero.
#[derive(Debug, Clone)]
pub struct SimGrad {
    pub value: f64,
    pub grad: Array2<f64>,
}

/// Loss value plus gradient with respect to every unit embedding.
#[derive(Debug, Clone)]
pub struct LossOutput {
    pub value: f64,
    pub grad: Array2<f64>,
}

fn check_shapes(sims: &ArrayView2<f64>, weights: &WeightMatrix) -> Result<usize> {
    let n = sims.nrows();
    if sims.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: sims.ncols(),
        });
    }
    if weights.n() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: weights.n(),
        });
    }
    if n < 2 {
        return Err(Error::BatchTooSmall(n));
    }
    Ok(n)
}

/// Compute a loss directly on a similarity matrix given as raw values.
///
/// This is the computational core shared by the embedding-level wrappers;
/// it is public so diagnostics and oracle comparisons can drive the losses
/// on hand-built matrices. `LossKind::SupCon` is accepted here and expects
/// 0/1 weights (the delta-kernel mask); it shares the y-aware formula, to
/// which it is algebraically identical in that case.
pub fn loss_on_similarities(
    kind: LossKind,
    sims: ArrayView2<f64>,
    weights: &WeightMatrix,
    opts: &LossOpts,
) -> Result<SimGrad> {
    let n = check_shapes(&sims, weights)?;
    let w = weights.values();

    let mut grad = Array2::<f64>::zeros((n, n));
    let mut total = Kahan::new();
    let mut valid_anchors = 0usize;

    // scratch buffers reused across anchors
    let mut others: Vec<usize> = Vec::with_capacity(n - 1);
    let mut vals: Vec<f64> = Vec::with_capacity(n - 1);
    let mut probs: Vec<f64> = Vec::with_capacity(n - 1);

    for i in 0..n {
        others.clear();
        others.extend((0..n).filter(|&t| t != i));

        let mut sw = Kahan::new();
        for &t in &others {
            sw.add(w[[i, t]]);
        }
        let sw = sw.sum();
        if sw <= 0.0 {
            continue; // anchor has no positive interaction at all
        }
        valid_anchors += 1;

        match kind {
            LossKind::YAware | LossKind::SupCon => {
                vals.clear();
                vals.extend(others.iter().map(|&t| sims[[i, t]]));
                probs.clear();
                probs.resize(vals.len(), 0.0);
                let lse = softmax_into(&vals, &mut probs);

                let mut anchor_loss = Kahan::new();
                for &k in &others {
                    let wk = w[[i, k]];
                    if wk > 0.0 {
                        anchor_loss.add(wk / sw * (lse - sims[[i, k]]));
                    }
                }
                total.add(anchor_loss.sum());

                for (slot, &t) in others.iter().enumerate() {
                    grad[[i, t]] = probs[slot] - w[[i, t]] / sw;
                }
            }
            LossKind::Exp => {
                // uniformity candidates a_t = s_t (1 - w_t) over all of A
                vals.clear();
                vals.extend(others.iter().map(|&t| sims[[i, t]] * (1.0 - w[[i, t]])));
                probs.clear();
                probs.resize(vals.len(), 0.0);
                let lse = softmax_into(&vals, &mut probs);

                let mut anchor_loss = Kahan::new();
                for &k in &others {
                    let wk = w[[i, k]];
                    if wk > 0.0 {
                        anchor_loss.add(wk / sw * (lse - sims[[i, k]]));
                    }
                }
                total.add(anchor_loss.sum());

                for (slot, &t) in others.iter().enumerate() {
                    grad[[i, t]] = probs[slot] * (1.0 - w[[i, t]]) - w[[i, t]] / sw;
                }
            }
            LossKind::Threshold => {
                let mut anchor_loss = Kahan::new();
                for &k in &others {
                    let wk = w[[i, k]];
                    if wk <= 0.0 {
                        continue;
                    }
                    // strictly-less-positive samples form the uniformity set
                    let dset: Vec<usize> = others
                        .iter()
                        .copied()
                        .filter(|&t| w[[i, t]] < wk)
                        .collect();
                    if dset.is_empty() {
                        continue;
                    }
                    let mut dw = Kahan::new();
                    for &t in &dset {
                        dw.add(w[[i, t]]);
                    }
                    let dw = dw.sum();
                    let norm = match opts.thr_norm {
                        ThrNorm::Count => dset.len() as f64,
                        ThrNorm::WeightSum => {
                            if dw > 0.0 {
                                dw
                            } else {
                                dset.len() as f64
                            }
                        }
                    };
                    let coeff = wk / norm;

                    vals.clear();
                    vals.extend(dset.iter().map(|&t| sims[[i, t]]));
                    probs.clear();
                    probs.resize(vals.len(), 0.0);
                    let lse = softmax_into(&vals, &mut probs);

                    anchor_loss.add(coeff * (lse - sims[[i, k]]));
                    grad[[i, k]] -= coeff;
                    for (slot, &t) in dset.iter().enumerate() {
                        grad[[i, t]] += coeff * probs[slot];
                    }
                }
                total.add(anchor_loss.sum());
            }
        }
    }

    if valid_anchors == 0 {
        return Err(Error::NoPositivePairs);
    }
    let scale = 1.0 / valid_anchors as f64;
    grad.mapv_inplace(|g| g * scale);
    Ok(SimGrad {
        value: total.sum() * scale,
        grad,
    })
}

/// Chain a similarity-space gradient back to the unit embeddings.
///
/// `s[i][t] = ⟨z_i, z_t⟩ / τ`, so each entry contributes `g·z_t/τ` to the
/// anchor row and `g·z_i/τ` to the other sample's row.
fn chain_to_embeddings(
    grad_s: &Array2<f64>,
    embeddings: ArrayView2<f64>,
    temperature: f64,
) -> Array2<f64> {
    let (n, d) = embeddings.dim();
    let mut grad = Array2::<f64>::zeros((n, d));
    let inv_t = 1.0 / temperature;
    for i in 0..n {
        for t in 0..n {
            if t == i {
                continue;
            }
            let g = grad_s[[i, t]];
            if g != 0.0 {
                grad.row_mut(i).scaled_add(g * inv_t, &embeddings.row(t));
                grad.row_mut(t).scaled_add(g * inv_t, &embeddings.row(i));
            }
        }
    }
    grad
}

/// Forward + backward for any loss kind, producing embedding-space gradients.
pub fn loss_with_gradient(
    kind: LossKind,
    sims: &SimilarityMatrix,
    weights: &WeightMatrix,
    opts: &LossOpts,
) -> Result<LossOutput> {
    let sg = loss_on_similarities(kind, sims.values(), weights, opts)?;
    let grad = chain_to_embeddings(&sg.grad, sims.embeddings(), sims.temperature());
    Ok(LossOutput {
        value: sg.value,
        grad,
    })
}

/// y-aware loss, Gaussian/Cauchy/delta weights. See the module docs.
pub fn yaware_loss(sims: &SimilarityMatrix, weights: &WeightMatrix) -> Result<LossOutput> {
    loss_with_gradient(LossKind::YAware, sims, weights, &LossOpts::default())
}

/// Threshold loss with the default weight-sum normalization.
pub fn thr_loss(sims: &SimilarityMatrix, weights: &WeightMatrix) -> Result<LossOutput> {
    loss_with_gradient(LossKind::Threshold, sims, weights, &LossOpts::default())
}

/// Threshold loss with an explicit normalization mode.
pub fn thr_loss_with(
    sims: &SimilarityMatrix,
    weights: &WeightMatrix,
    norm: ThrNorm,
) -> Result<LossOutput> {
    loss_with_gradient(
        LossKind::Threshold,
        sims,
        weights,
        &LossOpts { thr_norm: norm },
    )
}

/// exp loss: repulsion reweighted by `(1 - w_t)`.
pub fn exp_loss(sims: &SimilarityMatrix, weights: &WeightMatrix) -> Result<LossOutput> {
    loss_with_gradient(LossKind::Exp, sims, weights, &LossOpts::default())
}

/// Standard supervised contrastive loss on discrete class ids.
///
/// Independent of the kernel machinery: positives are exactly the samples
/// sharing the anchor's class. This is the reduction target for the
/// delta-kernel tests.
pub fn supcon_loss(sims: &SimilarityMatrix, classes: &[u32]) -> Result<LossOutput> {
    let n = sims.n();
    if classes.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: classes.len(),
        });
    }
    let s = sims.values();

    let mut grad_s = Array2::<f64>::zeros((n, n));
    let mut total = Kahan::new();
    let mut valid_anchors = 0usize;

    let mut vals: Vec<f64> = Vec::with_capacity(n - 1);
    let mut probs: Vec<f64> = Vec::with_capacity(n - 1);

    for i in 0..n {
        let others: Vec<usize> = (0..n).filter(|&t| t != i).collect();
        let positives: Vec<usize> = others
            .iter()
            .copied()
            .filter(|&k| classes[k] == classes[i])
            .collect();
        if positives.is_empty() {
            continue;
        }
        valid_anchors += 1;
        let p_count = positives.len() as f64;

        vals.clear();
        vals.extend(others.iter().map(|&t| s[[i, t]]));
        probs.clear();
        probs.resize(vals.len(), 0.0);
        let lse = softmax_into(&vals, &mut probs);

        let mut anchor_loss = Kahan::new();
        for &k in &positives {
            anchor_loss.add((lse - s[[i, k]]) / p_count);
        }
        total.add(anchor_loss.sum());

        for (slot, &t) in others.iter().enumerate() {
            let is_pos = if classes[t] == classes[i] { 1.0 } else { 0.0 };
            grad_s[[i, t]] = probs[slot] - is_pos / p_count;
        }
    }

    if valid_anchors == 0 {
        return Err(Error::NoPositivePairs);
    }
    let scale = 1.0 / valid_anchors as f64;
    grad_s.mapv_inplace(|g| g * scale);
    let grad = chain_to_embeddings(&grad_s, sims.embeddings(), sims.temperature());
    Ok(LossOutput {
        value: total.sum() * scale,
        grad,
    })
}

/// The pre-relaxation margin objective, its log-sum-exp relaxation and the
/// per-anchor slack cap.
///
/// For each loss kind the margin objective replaces the smooth log-sum-exp
/// by `max(0, ·)` over the same candidate set (the candidate set of the
/// relaxation additionally carries the hinge's `exp(0)` term, which the
/// y-aware loss already contains at `t = k`). By the LogSumExp sandwich,
/// `margin ≤ relaxed ≤ margin + cap` always holds, and for the threshold
/// and exp losses the reported smooth loss is ≤ `relaxed`.
#[derive(Debug, Clone, Copy)]
pub struct LseBound {
    pub margin: f64,
    pub relaxed: f64,
    pub cap: f64,
}

/// Margin objective + relaxation bound for a loss kind. See [`LseBound`].
pub fn lse_relaxation(
    kind: LossKind,
    sims: ArrayView2<f64>,
    weights: &WeightMatrix,
    opts: &LossOpts,
) -> Result<LseBound> {
    let n = check_shapes(&sims, weights)?;
    let w = weights.values();

    let mut margin = Kahan::new();
    let mut relaxed = Kahan::new();
    let mut cap = Kahan::new();
    let mut valid_anchors = 0usize;

    for i in 0..n {
        let others: Vec<usize> = (0..n).filter(|&t| t != i).collect();
        let sw: f64 = others.iter().map(|&t| w[[i, t]]).sum();
        if sw <= 0.0 {
            continue;
        }
        valid_anchors += 1;

        for &k in &others {
            let wk = w[[i, k]];
            if wk <= 0.0 {
                continue;
            }
            // candidate differences and the hinge zero
            let (coeff, cands): (f64, Vec<f64>) = match kind {
                LossKind::YAware | LossKind::SupCon => (
                    wk / sw,
                    others.iter().map(|&t| sims[[i, t]] - sims[[i, k]]).collect(),
                ),
                LossKind::Exp => {
                    let mut c: Vec<f64> = others
                        .iter()
                        .map(|&t| sims[[i, t]] * (1.0 - w[[i, t]]) - sims[[i, k]])
                        .collect();
                    c.push(0.0);
                    (wk / sw, c)
                }
                LossKind::Threshold => {
                    let dset: Vec<usize> = others
                        .iter()
                        .copied()
                        .filter(|&t| w[[i, t]] < wk)
                        .collect();
                    if dset.is_empty() {
                        continue;
                    }
                    let dw: f64 = dset.iter().map(|&t| w[[i, t]]).sum();
                    let norm = match opts.thr_norm {
                        ThrNorm::Count => dset.len() as f64,
                        ThrNorm::WeightSum => {
                            if dw > 0.0 {
                                dw
                            } else {
                                dset.len() as f64
                            }
                        }
                    };
                    let mut c: Vec<f64> = dset
                        .iter()
                        .map(|&t| sims[[i, t]] - sims[[i, k]])
                        .collect();
                    c.push(0.0);
                    (wk / norm, c)
                }
            };
            // for y-aware the t = k candidate is already the hinge zero
            let max = cands.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = crate::numerics::logsumexp(&cands);
            margin.add(coeff * max.max(0.0));
            relaxed.add(coeff * lse);
            cap.add(coeff * (cands.len() as f64).ln());
        }
    }

    if valid_anchors == 0 {
        return Err(Error::NoPositivePairs);
    }
    let scale = 1.0 / valid_anchors as f64;
    Ok(LseBound {
        margin: margin.sum() * scale,
        relaxed: relaxed.sum() * scale,
        cap: cap.sum() * scale,
    })
}

/// The pre-relaxation weighted-max objective for a loss kind.
pub fn margin_oracle(
    kind: LossKind,
    sims: ArrayView2<f64>,
    weights: &WeightMatrix,
    opts: &LossOpts,
) -> Result<f64> {
    Ok(lse_relaxation(kind, sims, weights, opts)?.margin)
}

/// Compare the analytic gradient against central finite differences taken
/// through the sphere projection and the similarity computation.
///
/// The stored embeddings are treated as raw pre-projection vectors: each
/// coordinate is perturbed, rows re-projected, the similarity matrix rebuilt
/// and the loss re-evaluated. Returns the max relative error over all
/// coordinates, with the relative denominator floored at 1e-5 so that
/// finite-difference noise on true zeros does not register as error.
pub fn loss_gradient_check(
    kind: LossKind,
    sims: &SimilarityMatrix,
    weights: &WeightMatrix,
    opts: &LossOpts,
    epsilon: f64,
) -> Result<f64> {
    if !(1e-7..=1e-3).contains(&epsilon) {
        return Err(Error::InvalidArgument(format!(
            "epsilon must lie in [1e-7, 1e-3], got {epsilon}"
        )));
    }
    let raw = sims.embeddings().to_owned();
    let tau = sims.temperature();
    let (n, d) = raw.dim();

    // analytic gradient at the projected point, chained through (I - zzᵀ)/‖v‖
    let unit = project_rows(&raw)?;
    let base = SimilarityMatrix::from_unit_rows(unit.clone(), tau)?;
    let out = loss_with_gradient(kind, &base, weights, opts)?;
    let mut analytic = Array2::<f64>::zeros((n, d));
    for r in 0..n {
        let v = raw.row(r);
        let norm = v.dot(&v).sqrt();
        let z = unit.row(r);
        let g = out.grad.row(r);
        let zg = z.dot(&g);
        for j in 0..d {
            analytic[[r, j]] = (g[j] - z[j] * zg) / norm;
        }
    }

    let eval = |vectors: &Array2<f64>| -> Result<f64> {
        let unit = project_rows(vectors)?;
        let s = SimilarityMatrix::from_unit_rows(unit, tau)?;
        Ok(loss_on_similarities(kind, s.values(), weights, opts)?.value)
    };

    let mut max_rel = 0.0f64;
    let mut perturbed = raw.clone();
    for r in 0..n {
        for j in 0..d {
            let orig = perturbed[[r, j]];
            perturbed[[r, j]] = orig + epsilon;
            let plus = eval(&perturbed)?;
            perturbed[[r, j]] = orig - epsilon;
            let minus = eval(&perturbed)?;
            perturbed[[r, j]] = orig;
            let fd = (plus - minus) / (2.0 * epsilon);
            let an = analytic[[r, j]];
            let rel = (fd - an).abs() / fd.abs().max(an.abs()).max(1e-5);
            max_rel = max_rel.max(rel);
        }
    }
    Ok(max_rel)
}
