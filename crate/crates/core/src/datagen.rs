//! Synthetic multi-site regression data.
//!
//! Each sample is an age drawn uniformly from the configured range, a site
//! drawn uniformly from the split's site pool, and a feature vector made of
//! two blocks:
//!
//! * a signal block `g(age)` — fixed random linear maps of the cubic basis
//!   `(a, a², a³)` of the normalized age, identical for every site — three
//!   quarters of the feature dimensions;
//! * a nuisance block `strength · (gain_s ⊙ h(age) + offset_s)` — the last
//!   quarter of the dimensions: a strong second age encoding behind
//!   per-site multiplicative gains and additive offsets (the scanner
//!   gain/offset model). Gains are correlated within an acquisition pool:
//!   training/internal sites share one base gain per coordinate, external
//!   sites draw their own, and every site adds its own deviation. A model
//!   that leans on this block looks accurate on the training pool and
//!   misfires on the external one, while its per-site spread makes it a
//!   poor channel for anything aligning samples across sites. At
//!   `site_effect_strength = 0` the block vanishes and the splits are
//!   exchangeable.
//!
//! Isotropic Gaussian noise with `noise_std` is added on top of everything.
//! Training and internal-test samples share one site pool; external-test
//! samples use a disjoint pool. Generation is deterministic: sub-streams
//! for the feature model and for each split are derived from the master
//! seed.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::derive_seed;

/// Configuration of the synthetic generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub n_train: usize,
    pub n_internal_test: usize,
    pub n_external_test: usize,
    #[serde(default = "default_sites_train")]
    pub n_sites_train: usize,
    #[serde(default = "default_sites_external")]
    pub n_sites_external: usize,
    #[serde(default = "default_feature_dim")]
    pub feature_dim: usize,
    /// [min, max] age in years.
    #[serde(default = "default_age_range")]
    pub age_range: [f64; 2],
    #[serde(default = "default_site_effect")]
    pub site_effect_strength: f64,
    #[serde(default = "default_noise_std")]
    pub noise_std: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_sites_train() -> usize {
    20
}
fn default_sites_external() -> usize {
    5
}
fn default_feature_dim() -> usize {
    32
}
fn default_age_range() -> [f64; 2] {
    [6.0, 86.0]
}
fn default_site_effect() -> f64 {
    2.0
}
fn default_noise_std() -> f64 {
    0.3
}

impl SyntheticConfig {
    /// Sensible defaults for everything except the split sizes.
    pub fn new(n_train: usize, n_internal_test: usize, n_external_test: usize) -> Self {
        Self {
            n_train,
            n_internal_test,
            n_external_test,
            n_sites_train: default_sites_train(),
            n_sites_external: default_sites_external(),
            feature_dim: default_feature_dim(),
            age_range: default_age_range(),
            site_effect_strength: default_site_effect(),
            noise_std: default_noise_std(),
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_train == 0 {
            return Err(Error::Config("n_train must be positive".into()));
        }
        if !(self.age_range[0] < self.age_range[1]) {
            return Err(Error::Config(format!(
                "age_range min must be below max, got {:?}",
                self.age_range
            )));
        }
        if self.feature_dim < 4 {
            return Err(Error::Config(
                "feature_dim must be at least 4 (two blocks of at least 2)".into(),
            ));
        }
        if self.n_sites_train == 0 {
            return Err(Error::Config("n_sites_train must be positive".into()));
        }
        if self.n_external_test > 0 && self.n_sites_external == 0 {
            return Err(Error::Config(
                "n_external_test > 0 requires n_sites_external > 0".into(),
            ));
        }
        if self.site_effect_strength < 0.0 || self.noise_std < 0.0 {
            return Err(Error::Config(
                "site_effect_strength and noise_std must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// Which split a row belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Internal,
    External,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Internal, Split::External];

    pub fn name(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Internal => "internal",
            Split::External => "external",
        }
    }

    fn parse(s: &str) -> Option<Split> {
        match s {
            "train" => Some(Split::Train),
            "internal" => Some(Split::Internal),
            "external" => Some(Split::External),
            _ => None,
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A flat multi-site dataset; one row per subject.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Array2<f64>,
    ages: Vec<f64>,
    sites: Vec<u32>,
    splits: Vec<Split>,
}

/// Owned copy of one split's rows.
#[derive(Debug, Clone)]
pub struct SplitParts {
    pub features: Array2<f64>,
    pub ages: Vec<f64>,
    pub sites: Vec<u32>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.ages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ages.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn ages(&self) -> &[f64] {
        &self.ages
    }

    pub fn sites(&self) -> &[u32] {
        &self.sites
    }

    pub fn splits(&self) -> &[Split] {
        &self.splits
    }

    pub fn split_len(&self, split: Split) -> usize {
        self.splits.iter().filter(|&&s| s == split).count()
    }

    /// Copy out one split.
    pub fn split_parts(&self, split: Split) -> SplitParts {
        let rows: Vec<usize> = (0..self.len()).filter(|&r| self.splits[r] == split).collect();
        let mut features = Array2::<f64>::zeros((rows.len(), self.feature_dim()));
        let mut ages = Vec::with_capacity(rows.len());
        let mut sites = Vec::with_capacity(rows.len());
        for (slot, &r) in rows.iter().enumerate() {
            features.row_mut(slot).assign(&self.features.row(r));
            ages.push(self.ages[r]);
            sites.push(self.sites[r]);
        }
        SplitParts {
            features,
            ages,
            sites,
        }
    }

    /// External sites must not appear in training. Called on every load.
    pub fn validate(&self) -> Result<()> {
        let train_sites: BTreeSet<u32> = self
            .sites
            .iter()
            .zip(&self.splits)
            .filter(|(_, &sp)| sp == Split::Train)
            .map(|(&s, _)| s)
            .collect();
        let leaked: BTreeSet<u32> = self
            .sites
            .iter()
            .zip(&self.splits)
            .filter(|(s, &sp)| sp == Split::External && train_sites.contains(s))
            .map(|(&s, _)| s)
            .collect();
        if !leaked.is_empty() {
            return Err(Error::SplitLeakage(format!(
                "sites {leaked:?} appear in both train and external splits"
            )));
        }
        if self.features.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite feature value".into()));
        }
        Ok(())
    }

    /// Write as CSV with header `site,age,split,f0..f{d-1}`.
    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        let d = self.feature_dim();
        let mut header = String::from("site,age,split");
        for j in 0..d {
            header.push_str(&format!(",f{j}"));
        }
        writeln!(f, "{header}")?;
        for r in 0..self.len() {
            let mut line = format!("{},{},{}", self.sites[r], self.ages[r], self.splits[r]);
            for j in 0..d {
                line.push_str(&format!(",{}", self.features[[r, j]]));
            }
            writeln!(f, "{line}")?;
        }
        Ok(())
    }

    /// Parse a CSV produced by [`save_csv`] (or matching its schema),
    /// validating every invariant.
    ///
    /// [`save_csv`]: Dataset::save_csv
    pub fn load_csv(path: &Path) -> Result<Dataset> {
        let file = std::fs::File::open(path)?;
        let mut lines = std::io::BufReader::new(file).lines();
        let header = lines
            .next()
            .ok_or(Error::EmptyInput("csv file"))?
            .map_err(Error::Io)?;
        let cols: Vec<&str> = header.trim_end().split(',').collect();
        for (idx, expected) in ["site", "age", "split"].iter().enumerate() {
            if cols.get(idx).copied() != Some(*expected) {
                return Err(Error::MissingColumn((*expected).into()));
            }
        }
        let d = cols.len().saturating_sub(3);
        if d == 0 {
            return Err(Error::MissingColumn("f0".into()));
        }
        for (j, col) in cols[3..].iter().enumerate() {
            if *col != format!("f{j}") {
                return Err(Error::MissingColumn(format!("f{j}")));
            }
        }

        let mut sites = Vec::new();
        let mut ages = Vec::new();
        let mut splits = Vec::new();
        let mut values: Vec<f64> = Vec::new();
        for (lineno, line) in lines.enumerate() {
            let line = line.map_err(Error::Io)?;
            let lineno = lineno + 2; // 1-based, after the header
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.trim_end().split(',').collect();
            if fields.len() != cols.len() {
                return Err(Error::MalformedCsv {
                    line: lineno,
                    msg: format!("expected {} fields, got {}", cols.len(), fields.len()),
                });
            }
            let site: u32 = fields[0].parse().map_err(|_| Error::MalformedCsv {
                line: lineno,
                msg: format!("bad site id {:?}", fields[0]),
            })?;
            let age: f64 = fields[1].parse().map_err(|_| Error::MalformedCsv {
                line: lineno,
                msg: format!("bad age {:?}", fields[1]),
            })?;
            if !age.is_finite() {
                return Err(Error::MalformedCsv {
                    line: lineno,
                    msg: "age must be finite".into(),
                });
            }
            let split = Split::parse(fields[2]).ok_or_else(|| Error::MalformedCsv {
                line: lineno,
                msg: format!("bad split {:?}", fields[2]),
            })?;
            for (j, raw) in fields[3..].iter().enumerate() {
                let v: f64 = raw.parse().map_err(|_| Error::MalformedCsv {
                    line: lineno,
                    msg: format!("bad feature f{j}: {raw:?}"),
                })?;
                if !v.is_finite() {
                    return Err(Error::MalformedCsv {
                        line: lineno,
                        msg: format!("feature f{j} must be finite"),
                    });
                }
                values.push(v);
            }
            sites.push(site);
            ages.push(age);
            splits.push(split);
        }
        let n = ages.len();
        let features = Array2::from_shape_vec((n, d), values)
            .expect("row width checked per line");
        let ds = Dataset {
            features,
            ages,
            sites,
            splits,
        };
        ds.validate()?;
        Ok(ds)
    }
}

/// Write the generator config next to an emitted CSV
/// (`data.csv` → `data.manifest.json`).
pub fn write_manifest(cfg: &SyntheticConfig, csv_path: &Path) -> Result<std::path::PathBuf> {
    let path = csv_path.with_extension("manifest.json");
    std::fs::write(&path, serde_json::to_string_pretty(cfg)?)?;
    Ok(path)
}

/// Per-feature affine scaler fit on training rows.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Standardizer {
    mean: Vec<f64>,
    std: Vec<f64>,
}

impl Standardizer {
    /// Column means and standard deviations. Constant columns get std 1 so
    /// they pass through unchanged (after centering).
    pub fn fit(features: &Array2<f64>) -> Self {
        let (n, d) = features.dim();
        let mut mean = vec![0.0; d];
        let mut std = vec![0.0; d];
        for j in 0..d {
            let col = features.column(j);
            let m = col.sum() / n as f64;
            let var = col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n as f64;
            mean[j] = m;
            std[j] = if var.sqrt() > 1e-9 { var.sqrt() } else { 1.0 };
        }
        Self { mean, std }
    }

    pub fn transform(&self, features: &Array2<f64>) -> Array2<f64> {
        let mut out = features.clone();
        for mut row in out.rows_mut() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = (*v - self.mean[j]) / self.std[j];
            }
        }
        out
    }
}

/// Standardize every split with statistics taken from the train split only.
pub fn standardize_dataset(data: &Dataset) -> (Dataset, Standardizer) {
    let train = data.split_parts(Split::Train);
    let scaler = Standardizer::fit(&train.features);
    let standardized = Dataset {
        features: scaler.transform(&data.features),
        ages: data.ages.clone(),
        sites: data.sites.clone(),
        splits: data.splits.clone(),
    };
    (standardized, scaler)
}

/// Fixed per-coordinate random maps of the cubic age basis.
struct FeatureModel {
    /// signal block coefficients, d_sig × 3
    signal: Array2<f64>,
    /// nuisance block coefficients, d_nuis × 3
    nuisance: Array2<f64>,
    /// per-site multiplicative gain deviation, n_sites × d_nuis
    gains: Array2<f64>,
    /// per-site additive offset, n_sites × d_nuis
    offsets: Array2<f64>,
}

fn age_basis(age: f64, range: [f64; 2]) -> [f64; 3] {
    let a = 2.0 * (age - range[0]) / (range[1] - range[0]) - 1.0;
    [a, a * a, a * a * a]
}

const MODEL_STREAM: u64 = 1;
const SPLIT_STREAMS: [u64; 3] = [2, 3, 4];

/// Fraction of feature dimensions given to the nuisance block.
fn nuisance_dims(feature_dim: usize) -> usize {
    (feature_dim / 4).max(1)
}

/// The nuisance age encoding is drawn wider than the signal one: with its
/// pool gain applied it is the highest-SNR channel in the data, which is
/// what tempts a supervised model into using it.
const NUISANCE_CODE_SCALE: f64 = 3.0;

/// Per-site deviation around the pool gain, relative to the unit pool gain
/// scale. Large enough that cross-site alignment sees the block disagree.
const GAIN_SITE_SPREAD: f64 = 0.5;

fn build_model(cfg: &SyntheticConfig) -> FeatureModel {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, MODEL_STREAM));
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let d_nuis = nuisance_dims(cfg.feature_dim);
    let d_sig = cfg.feature_dim - d_nuis;
    let n_sites = cfg.n_sites_train + cfg.n_sites_external;
    let signal = Array2::from_shape_fn((d_sig, 3), |_| normal.sample(&mut rng));
    let nuisance =
        Array2::from_shape_fn((d_nuis, 3), |_| NUISANCE_CODE_SCALE * normal.sample(&mut rng));
    // one base gain per coordinate for the training pool, a fresh one for
    // the external pool, plus per-site deviations
    let pool_train = Array1::from_shape_fn(d_nuis, |_| normal.sample(&mut rng));
    let pool_external = Array1::from_shape_fn(d_nuis, |_| normal.sample(&mut rng));
    let gains = Array2::from_shape_fn((n_sites, d_nuis), |(s, j)| {
        let pool = if s < cfg.n_sites_train {
            pool_train[j]
        } else {
            pool_external[j]
        };
        pool + GAIN_SITE_SPREAD * normal.sample(&mut rng)
    });
    let offsets = Array2::from_shape_fn((n_sites, d_nuis), |_| normal.sample(&mut rng));
    FeatureModel {
        signal,
        nuisance,
        gains,
        offsets,
    }
}

fn generate_split(
    cfg: &SyntheticConfig,
    model: &FeatureModel,
    split: Split,
    n: usize,
    site_pool: std::ops::Range<u32>,
    stream: u64,
    features: &mut Vec<f64>,
    ages: &mut Vec<f64>,
    sites: &mut Vec<u32>,
    splits: &mut Vec<Split>,
) {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, stream));
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let d_nuis = nuisance_dims(cfg.feature_dim);
    let d_sig = cfg.feature_dim - d_nuis;
    let strength = cfg.site_effect_strength;
    let pool: Vec<u32> = site_pool.collect();
    for _ in 0..n {
        let age = cfg.age_range[0] + rng.random::<f64>() * (cfg.age_range[1] - cfg.age_range[0]);
        let site = pool[rng.random_range(0..pool.len())];
        let basis = age_basis(age, cfg.age_range);
        let basis = Array1::from_iter(basis);
        for j in 0..d_sig {
            let clean = model.signal.row(j).dot(&basis);
            features.push(clean + cfg.noise_std * normal.sample(&mut rng));
        }
        for j in 0..d_nuis {
            let clean = model.nuisance.row(j).dot(&basis);
            let gained = strength
                * (clean * model.gains[[site as usize, j]]
                    + model.offsets[[site as usize, j]]);
            features.push(gained + cfg.noise_std * normal.sample(&mut rng));
        }
        ages.push(age);
        sites.push(site);
        splits.push(split);
    }
}

/// Generate the full dataset: train and internal-test rows share the first
/// `n_sites_train` site ids, external-test rows use the next
/// `n_sites_external` ids.
pub fn generate(cfg: &SyntheticConfig) -> Result<Dataset> {
    cfg.validate()?;
    let model = build_model(cfg);
    let total = cfg.n_train + cfg.n_internal_test + cfg.n_external_test;
    let mut features = Vec::with_capacity(total * cfg.feature_dim);
    let mut ages = Vec::with_capacity(total);
    let mut sites = Vec::with_capacity(total);
    let mut splits = Vec::with_capacity(total);

    let train_pool = 0..cfg.n_sites_train as u32;
    let external_pool =
        cfg.n_sites_train as u32..(cfg.n_sites_train + cfg.n_sites_external) as u32;

    generate_split(
        cfg, &model, Split::Train, cfg.n_train, train_pool.clone(), SPLIT_STREAMS[0],
        &mut features, &mut ages, &mut sites, &mut splits,
    );
    generate_split(
        cfg, &model, Split::Internal, cfg.n_internal_test, train_pool, SPLIT_STREAMS[1],
        &mut features, &mut ages, &mut sites, &mut splits,
    );
    generate_split(
        cfg, &model, Split::External, cfg.n_external_test, external_pool, SPLIT_STREAMS[2],
        &mut features, &mut ages, &mut sites, &mut splits,
    );

    let features = Array2::from_shape_vec((total, cfg.feature_dim), features)
        .expect("feature vector sized by construction");
    let ds = Dataset {
        features,
        ages,
        sites,
        splits,
    };
    ds.validate()?;
    Ok(ds)
}
