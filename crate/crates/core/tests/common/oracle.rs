//! Brute-force oracle: a direct, independent transcription of the loss
//! formulas with naive exponentials and plain summation. Deliberately
//! shares no code with the implementation (no max-subtraction, no
//! compensated sums, different loop structure).

use ndarray::ArrayView2;

/// Whether the threshold denominator divides by the restricted weight sum
/// (falling back to the count when that sum is zero) or always by the count.
#[derive(Clone, Copy)]
pub enum ThrNormOracle {
    WeightSumWithFallback,
    Count,
}

/// y-aware: per anchor `-Σ_k (w_k/Σ_t w_t) ln(e^{s_k} / Σ_{t∈A} e^{s_t})`,
/// averaged over anchors whose weight row has positive sum.
pub fn yaware_direct(s: ArrayView2<f64>, w: ArrayView2<f64>) -> Option<f64> {
    let n = s.nrows();
    let mut total = 0.0;
    let mut anchors = 0usize;
    for i in 0..n {
        let others: Vec<usize> = (0..n).filter(|&t| t != i).collect();
        let sw: f64 = others.iter().map(|&t| w[[i, t]]).sum();
        if sw <= 0.0 {
            continue;
        }
        anchors += 1;
        let denom: f64 = others.iter().map(|&t| s[[i, t]].exp()).sum();
        let mut li = 0.0;
        for &k in &others {
            li -= w[[i, k]] / sw * (s[[i, k]].exp() / denom).ln();
        }
        total += li;
    }
    (anchors > 0).then(|| total / anchors as f64)
}

/// threshold: the uniformity sum keeps only samples strictly less positive
/// than `k`; empty sets drop the `k`-term.
pub fn thr_direct(s: ArrayView2<f64>, w: ArrayView2<f64>, norm: ThrNormOracle) -> Option<f64> {
    let n = s.nrows();
    let mut total = 0.0;
    let mut anchors = 0usize;
    for i in 0..n {
        let others: Vec<usize> = (0..n).filter(|&t| t != i).collect();
        let sw: f64 = others.iter().map(|&t| w[[i, t]]).sum();
        if sw <= 0.0 {
            continue;
        }
        anchors += 1;
        let mut li = 0.0;
        for &k in &others {
            if w[[i, k]] <= 0.0 {
                continue;
            }
            let dset: Vec<usize> = others
                .iter()
                .copied()
                .filter(|&t| w[[i, t]] < w[[i, k]])
                .collect();
            if dset.is_empty() {
                continue;
            }
            let dw: f64 = dset.iter().map(|&t| w[[i, t]]).sum();
            let norm_k = match norm {
                ThrNormOracle::Count => dset.len() as f64,
                ThrNormOracle::WeightSumWithFallback => {
                    if dw > 0.0 {
                        dw
                    } else {
                        dset.len() as f64
                    }
                }
            };
            let denom: f64 = dset.iter().map(|&t| s[[i, t]].exp()).sum();
            li -= w[[i, k]] / norm_k * (s[[i, k]].exp() / denom).ln();
        }
        total += li;
    }
    (anchors > 0).then(|| total / anchors as f64)
}

/// exp: `-(1/Σ_t w_t) Σ_k w_k ln(e^{s_k} / Σ_{t∈A} e^{s_t (1-w_t)})`; the
/// uniformity sum runs over every non-anchor sample (each entering at
/// strength `1 - w_t`, so exact positives contribute `e^0`).
pub fn exp_direct(s: ArrayView2<f64>, w: ArrayView2<f64>) -> Option<f64> {
    let n = s.nrows();
    let mut total = 0.0;
    let mut anchors = 0usize;
    for i in 0..n {
        let others: Vec<usize> = (0..n).filter(|&t| t != i).collect();
        let sw: f64 = others.iter().map(|&t| w[[i, t]]).sum();
        if sw <= 0.0 {
            continue;
        }
        anchors += 1;
        let denom: f64 = others
            .iter()
            .map(|&t| (s[[i, t]] * (1.0 - w[[i, t]])).exp())
            .sum();
        let mut li = 0.0;
        for &k in &others {
            li -= w[[i, k]] * (s[[i, k]].exp() / denom).ln();
        }
        total += li / sw;
    }
    (anchors > 0).then(|| total / anchors as f64)
}

/// Standard SupCon with the mean over positives and the denominator over
/// every non-anchor sample.
pub fn supcon_direct(s: ArrayView2<f64>, classes: &[u32]) -> Option<f64> {
    let n = s.nrows();
    let mut total = 0.0;
    let mut anchors = 0usize;
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
        anchors += 1;
        let denom: f64 = others.iter().map(|&t| s[[i, t]].exp()).sum();
        let mut li = 0.0;
        for &k in &positives {
            li -= (s[[i, k]].exp() / denom).ln();
        }
        total += li / positives.len() as f64;
    }
    (anchors > 0).then(|| total / anchors as f64)
}
