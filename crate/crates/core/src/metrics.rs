//! Challenge evaluation stack: age MAE through a linear probe, site
//! balanced accuracy through a multinomial logistic probe, and the final
//! challenge score `BAcc^0.3 · MAE_ext` (lower is better, BAcc as a
//! fraction in [0, 1]).
//!
//! Probes only ever see training data; test splits enter solely through the
//! final MAE / BAcc computations.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::datagen::{Dataset, Split};
use crate::encoder::TrainedModel;
use crate::error::{Error, Result};
use crate::numerics::{kahan_sum, logsumexp};

/// The four numbers reported for one trained representation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeResult {
    pub mae_internal: f64,
    pub mae_external: f64,
    /// Fraction in [0, 1]; tables print it as percent.
    pub site_bacc: f64,
    pub challenge_score: f64,
}

/// Header for one-row-per-run CSV output.
pub const PROBE_CSV_HEADER: &str = "loss,kernel,bandwidth,seed,int_mae,ext_mae,bacc,score";

/// Serialize a result as one CSV row under [`PROBE_CSV_HEADER`].
pub fn probe_csv_row(
    loss: &str,
    kernel: &str,
    bandwidth: f64,
    seed: u64,
    r: &ProbeResult,
) -> String {
    format!(
        "{loss},{kernel},{bandwidth},{seed},{},{},{},{}",
        r.mae_internal, r.mae_external, r.site_bacc, r.challenge_score
    )
}

/// Mean absolute error.
pub fn mae(predictions: &[f64], targets: &[f64]) -> Result<f64> {
    if predictions.is_empty() {
        return Err(Error::EmptyInput("mae"));
    }
    if predictions.len() != targets.len() {
        return Err(Error::DimensionMismatch {
            expected: targets.len(),
            got: predictions.len(),
        });
    }
    Ok(kahan_sum(
        predictions
            .iter()
            .zip(targets)
            .map(|(p, t)| (p - t).abs()),
    ) / predictions.len() as f64)
}

/// Mean per-class recall over the classes present in `truth`.
pub fn balanced_accuracy(pred: &[u32], truth: &[u32]) -> Result<f64> {
    if truth.is_empty() {
        return Err(Error::EmptyInput("balanced_accuracy"));
    }
    if pred.len() != truth.len() {
        return Err(Error::DimensionMismatch {
            expected: truth.len(),
            got: pred.len(),
        });
    }
    let mut totals: BTreeMap<u32, (usize, usize)> = BTreeMap::new();
    for (&p, &t) in pred.iter().zip(truth) {
        let e = totals.entry(t).or_insert((0, 0));
        e.0 += 1;
        if p == t {
            e.1 += 1;
        }
    }
    let recalls: Vec<f64> = totals
        .values()
        .map(|&(total, correct)| correct as f64 / total as f64)
        .collect();
    Ok(recalls.iter().sum::<f64>() / recalls.len() as f64)
}

/// Challenge score `BAcc^0.3 · MAE_ext`.
///
/// `bacc` must be a fraction in [0, 1] — passing a percentage is the classic
/// mistake this guard catches.
pub fn challenge_score(bacc: f64, mae_ext: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&bacc) {
        return Err(Error::InvalidArgument(format!(
            "balanced accuracy must be a fraction in [0, 1], got {bacc}"
        )));
    }
    if !(mae_ext >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "external MAE must be non-negative, got {mae_ext}"
        )));
    }
    Ok(bacc.powf(0.3) * mae_ext)
}

/// Solve the SPD system `a x = b` by Cholesky decomposition.
fn solve_spd(mut a: Array2<f64>, b: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
    let n = a.nrows();
    let scale = (0..n).map(|i| a[[i, i]].abs()).fold(0.0f64, f64::max);
    let floor = scale.max(1.0) * 1e-13;
    // in-place lower Cholesky
    for j in 0..n {
        for k in 0..j {
            let l_jk = a[[j, k]];
            for i in j..n {
                a[[i, j]] -= a[[i, k]] * l_jk;
            }
        }
        let d = a[[j, j]];
        if !(d.is_finite() && d > floor) {
            return Err(Error::SingularSystem);
        }
        let root = d.sqrt();
        for i in j..n {
            a[[i, j]] /= root;
        }
    }
    // forward substitution L y = b
    let mut y = b.to_owned();
    for i in 0..n {
        for k in 0..i {
            let v = y[k];
            y[i] -= a[[i, k]] * v;
        }
        y[i] /= a[[i, i]];
    }
    // back substitution Lᵀ x = y
    for i in (0..n).rev() {
        for k in (i + 1)..n {
            let v = y[k];
            y[i] -= a[[k, i]] * v;
        }
        y[i] /= a[[i, i]];
    }
    Ok(y)
}

/// Ridge regression probe (closed form, centered normal equations).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RidgeProbe {
    weights: Array1<f64>,
    intercept: f64,
    lambda: f64,
}

impl RidgeProbe {
    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Vec<f64> {
        x.rows()
            .into_iter()
            .map(|r| r.dot(&self.weights) + self.intercept)
            .collect()
    }

    pub fn weights(&self) -> ArrayView1<'_, f64> {
        self.weights.view()
    }

    pub fn intercept(&self) -> f64 {
        self.intercept
    }

    /// Max-norm residual of the centered normal equations; used by tests to
    /// confirm the closed-form solution.
    pub fn normal_equation_residual(&self, x: ArrayView2<'_, f64>, y: &[f64]) -> f64 {
        let (n, d) = x.dim();
        let x_mean = x.mean_axis(Axis(0)).expect("n > 0");
        let y_mean = y.iter().sum::<f64>() / n as f64;
        let mut xc = x.to_owned();
        xc -= &x_mean;
        let yc: Array1<f64> = Array1::from_iter(y.iter().map(|v| v - y_mean));
        let gram = xc.t().dot(&xc);
        let rhs = xc.t().dot(&yc);
        let mut worst = 0.0f64;
        for i in 0..d {
            let mut lhs = 0.0;
            for j in 0..d {
                lhs += (gram[[i, j]] + if i == j { self.lambda } else { 0.0 }) * self.weights[j];
            }
            worst = worst.max((lhs - rhs[i]).abs());
        }
        worst
    }
}

/// Fit the ridge probe `(XᵀX + λI)w = Xᵀy` on centered data.
///
/// The intercept is not penalized; as λ → ∞ the weights vanish and
/// predictions collapse to the mean target.
pub fn fit_ridge_probe(x: ArrayView2<'_, f64>, y: &[f64], lambda: f64) -> Result<RidgeProbe> {
    let (n, d) = x.dim();
    if n == 0 || d == 0 {
        return Err(Error::EmptyInput("ridge probe"));
    }
    if y.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: y.len(),
        });
    }
    if lambda < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "ridge lambda must be non-negative, got {lambda}"
        )));
    }
    let x_mean = x.mean_axis(Axis(0)).expect("n > 0");
    let y_mean = y.iter().sum::<f64>() / n as f64;
    let mut xc = x.to_owned();
    xc -= &x_mean;
    let yc: Array1<f64> = Array1::from_iter(y.iter().map(|v| v - y_mean));

    let mut gram = xc.t().dot(&xc);
    for i in 0..d {
        gram[[i, i]] += lambda;
    }
    let rhs = xc.t().dot(&yc);
    let weights = solve_spd(gram, rhs.view())?;
    let intercept = y_mean - x_mean.dot(&weights);
    Ok(RidgeProbe {
        weights,
        intercept,
        lambda,
    })
}

/// Multinomial logistic probe for site prediction.
#[derive(Debug, Clone)]
pub struct LogisticProbe {
    /// d × C
    weights: Array2<f64>,
    intercepts: Array1<f64>,
    classes: Vec<u32>,
    objective_trace: Vec<f64>,
}

impl LogisticProbe {
    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Vec<u32> {
        let logits = x.dot(&self.weights) + &self.intercepts;
        logits
            .rows()
            .into_iter()
            .map(|row| {
                let mut best = 0usize;
                for (j, v) in row.iter().enumerate() {
                    if *v > row[best] {
                        best = j;
                    }
                }
                self.classes[best]
            })
            .collect()
    }

    /// Mean cross-entropy after each epoch; decreases monotonically for the
    /// step sizes used here.
    pub fn objective_trace(&self) -> &[f64] {
        &self.objective_trace
    }

    pub fn classes(&self) -> &[u32] {
        &self.classes
    }
}

/// Fit by full-batch gradient descent on the mean multinomial cross-entropy,
/// starting from zero weights (fully deterministic).
pub fn fit_logistic_probe(
    x: ArrayView2<'_, f64>,
    sites: &[u32],
    epochs: usize,
    lr: f64,
) -> Result<LogisticProbe> {
    let (n, d) = x.dim();
    if n == 0 {
        return Err(Error::EmptyInput("logistic probe"));
    }
    if sites.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: sites.len(),
        });
    }
    let mut classes: Vec<u32> = sites.to_vec();
    classes.sort_unstable();
    classes.dedup();
    let c = classes.len();
    if c < 2 {
        return Err(Error::SingleSite(c));
    }
    let class_index: BTreeMap<u32, usize> =
        classes.iter().enumerate().map(|(i, &s)| (s, i)).collect();
    let targets: Vec<usize> = sites.iter().map(|s| class_index[s]).collect();

    let mut weights = Array2::<f64>::zeros((d, c));
    let mut intercepts = Array1::<f64>::zeros(c);
    let mut trace = Vec::with_capacity(epochs);

    for _ in 0..epochs {
        let logits = x.dot(&weights) + &intercepts;
        // row-wise stable softmax and mean NLL
        let mut nll = 0.0;
        let mut probs = logits.clone();
        for (r, mut row) in probs.rows_mut().into_iter().enumerate() {
            let vals: Vec<f64> = row.iter().cloned().collect();
            let lse = logsumexp(&vals);
            nll += lse - vals[targets[r]];
            for v in row.iter_mut() {
                *v = (*v - lse).exp();
            }
        }
        nll /= n as f64;
        trace.push(nll);

        // gradient of mean NLL: Xᵀ(P - Y)/n
        for (r, &t) in targets.iter().enumerate() {
            probs[[r, t]] -= 1.0;
        }
        probs.mapv_inplace(|p| p / n as f64);
        let gw = x.t().dot(&probs);
        let gb = probs.sum_axis(Axis(0));
        weights.scaled_add(-lr, &gw);
        intercepts.scaled_add(-lr, &gb);
    }

    Ok(LogisticProbe {
        weights,
        intercepts,
        classes,
        objective_trace: trace,
    })
}

/// Representation + labels of one evaluation split.
#[derive(Debug, Clone, Copy)]
pub struct SplitEval<'a> {
    pub representations: ArrayView2<'a, f64>,
    pub ages: &'a [f64],
    pub sites: &'a [u32],
}

/// Probe hyperparameters used by [`evaluate_representations`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProbeConfig {
    pub ridge_lambda: f64,
    pub logistic_epochs: usize,
    pub logistic_lr: f64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            ridge_lambda: 1.0,
            logistic_epochs: 500,
            logistic_lr: 0.1,
        }
    }
}

fn check_split(split: &SplitEval<'_>, name: &'static str) -> Result<()> {
    let n = split.representations.nrows();
    if n == 0 {
        return Err(Error::EmptyInput(name));
    }
    if split.ages.len() != n || split.sites.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: split.ages.len().min(split.sites.len()),
        });
    }
    Ok(())
}

/// Fit probes on the train split only and score the two test splits.
///
/// Age predictions come from `head_predictions` when given (the L1
/// baseline reads its own head) and from a ridge probe on the train
/// representations otherwise. The site probe is always fit on train
/// representations and its balanced accuracy measured on the internal test
/// split. External sites must be disjoint from training sites.
pub fn evaluate_representations(
    train: &SplitEval<'_>,
    internal: &SplitEval<'_>,
    external: &SplitEval<'_>,
    head_predictions: Option<(&[f64], &[f64])>,
    cfg: &ProbeConfig,
) -> Result<ProbeResult> {
    check_split(train, "train split")?;
    check_split(internal, "internal split")?;
    check_split(external, "external split")?;

    let train_sites: std::collections::BTreeSet<u32> = train.sites.iter().copied().collect();
    let leaked: Vec<u32> = external
        .sites
        .iter()
        .copied()
        .filter(|s| train_sites.contains(s))
        .collect::<std::collections::BTreeSet<u32>>()
        .into_iter()
        .collect();
    if !leaked.is_empty() {
        return Err(Error::SplitLeakage(format!(
            "sites {leaked:?} appear in both train and external splits"
        )));
    }

    let (pred_internal, pred_external) = match head_predictions {
        Some((internal_preds, external_preds)) => {
            (internal_preds.to_vec(), external_preds.to_vec())
        }
        None => {
            let probe = fit_ridge_probe(train.representations, train.ages, cfg.ridge_lambda)?;
            (
                probe.predict(internal.representations),
                probe.predict(external.representations),
            )
        }
    };
    let mae_internal = mae(&pred_internal, internal.ages)?;
    let mae_external = mae(&pred_external, external.ages)?;

    let site_probe = fit_logistic_probe(
        train.representations,
        train.sites,
        cfg.logistic_epochs,
        cfg.logistic_lr,
    )?;
    let site_pred = site_probe.predict(internal.representations);
    let site_bacc = balanced_accuracy(&site_pred, internal.sites)?;

    Ok(ProbeResult {
        mae_internal,
        mae_external,
        site_bacc,
        challenge_score: challenge_score(site_bacc, mae_external)?,
    })
}

/// Embed every split with the trained encoder and run the probes.
pub fn evaluate_model(
    model: &TrainedModel,
    data: &Dataset,
    cfg: &ProbeConfig,
) -> Result<ProbeResult> {
    let train = data.split_parts(Split::Train);
    let internal = data.split_parts(Split::Internal);
    let external = data.split_parts(Split::External);

    let z_train = model.encoder.embed(train.features.view())?;
    let z_internal = model.encoder.embed(internal.features.view())?;
    let z_external = model.encoder.embed(external.features.view())?;

    let head_preds = model
        .head
        .as_ref()
        .map(|h| (h.predict(z_internal.view()), h.predict(z_external.view())));

    evaluate_representations(
        &SplitEval {
            representations: z_train.view(),
            ages: &train.ages,
            sites: &train.sites,
        },
        &SplitEval {
            representations: z_internal.view(),
            ages: &internal.ages,
            sites: &internal.sites,
        },
        &SplitEval {
            representations: z_external.view(),
            ages: &external.ages,
            sites: &external.sites,
        },
        head_preds
            .as_ref()
            .map(|(i, e)| (i.as_slice(), e.as_slice())),
        cfg,
    )
}
