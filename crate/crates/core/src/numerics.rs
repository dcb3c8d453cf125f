//! Small numeric helpers: compensated summation and stable log-sum-exp.
//!
//! Loss reductions use these so that results are reproducible to ~1e-15
//! regardless of batch ordering, and so that exp() never overflows even
//! when similarities are scaled by large factors.

/// Derive an independent sub-seed from a master seed and a stream tag.
///
/// SplitMix64 finalizer; used wherever one config seed has to feed several
/// unrelated random streams (weight init, shuffling, per-split generation)
/// without correlation between them.
pub fn derive_seed(master: u64, stream: u64) -> u64 {
    let mut z = master
        .wrapping_add(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(stream.wrapping_mul(0xBF58_476D_1CE4_E5B9));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Kahan compensated accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct Kahan {
    sum: f64,
    comp: f64,
}

impl Kahan {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let y = x - self.comp;
        let t = self.sum + y;
        self.comp = (t - self.sum) - y;
        self.sum = t;
    }

    #[inline]
    pub fn sum(&self) -> f64 {
        self.sum
    }
}

/// Compensated sum of an iterator of f64.
pub fn kahan_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut acc = Kahan::new();
    for v in values {
        acc.add(v);
    }
    acc.sum()
}

/// log(sum_i exp(x_i)) with max subtraction.
///
/// Returns `f64::NEG_INFINITY` on an empty slice. Values of `-inf` in the
/// input are handled (they contribute exp(-inf) = 0).
pub fn logsumexp(values: &[f64]) -> f64 {
    let m = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        // empty input, or all -inf (max-subtraction would produce NaN)
        return m;
    }
    let s = kahan_sum(values.iter().map(|&v| (v - m).exp()));
    m + s.ln()
}

/// Softmax with max subtraction, written into `out` (same length as `values`).
///
/// Also returns the log-sum-exp of `values`.
pub fn softmax_into(values: &[f64], out: &mut [f64]) -> f64 {
    debug_assert_eq!(values.len(), out.len());
    let m = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut denom = Kahan::new();
    for (o, &v) in out.iter_mut().zip(values) {
        let e = (v - m).exp();
        *o = e;
        denom.add(e);
    }
    let d = denom.sum();
    for o in out.iter_mut() {
        *o /= d;
    }
    m + d.ln()
}
