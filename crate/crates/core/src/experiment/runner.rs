//! Execute runs, persist them under `runs/<config-hash>/`, and aggregate
//! grid and comparison tables.
//!
//! Every cell is independent and deterministic, so grids are resumable
//! (cells with a persisted `result.json` are skipped) and may execute in
//! parallel; all files are written atomically (temp + rename) and all
//! aggregate numbers are recomputable from the per-seed CSV.

use rayon::prelude::*;
use std::path::{Path, PathBuf};
use std::time::Instant;

use super::config::{
    config_hash, ComparisonVerdict, DataSource, GridConfig, Method, RunConfig, RunRecord,
};
use crate::datagen::{self, Dataset, Split};
use crate::encoder::{train, write_trace_csv, Encoder, TrainMode};
use crate::error::{Error, Result};
use crate::metrics::{evaluate_model, probe_csv_row, ProbeResult, PROBE_CSV_HEADER};
use crate::numerics::derive_seed;

const ENCODER_INIT_STREAM: u64 = 0x1217;

fn atomic_write(path: &Path, contents: &str) -> Result<()> {
    let tmp = PathBuf::from(format!("{}.tmp", path.display()));
    std::fs::write(&tmp, contents)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

fn load_data(source: &DataSource) -> Result<Dataset> {
    match source {
        DataSource::Synthetic(cfg) => datagen::generate(cfg),
        DataSource::Csv { path } => Dataset::load_csv(Path::new(path)),
    }
}

/// Run one config end to end: data → train → evaluate → persist.
///
/// With `resume` set, a previously persisted result for the same config
/// hash is returned as-is.
pub fn run_single(cfg: &RunConfig, out_dir: &Path, resume: bool) -> Result<RunRecord> {
    cfg.validate()?;
    let hash = config_hash(cfg)?;
    let dir = out_dir.join("runs").join(&hash);
    let result_path = dir.join("result.json");
    if resume && result_path.exists() {
        if let Ok(record) = serde_json::from_str::<RunRecord>(&std::fs::read_to_string(
            &result_path,
        )?) {
            return Ok(record);
        }
    }
    std::fs::create_dir_all(&dir)?;

    let started = Instant::now();
    let raw_data = load_data(&cfg.data)?;
    let (data, scaler) = if cfg.train.standardize {
        let (d, s) = datagen::standardize_dataset(&raw_data);
        (d, Some(s))
    } else {
        (raw_data, None)
    };
    let train_parts = data.split_parts(Split::Train);

    let mut layer_sizes = vec![data.feature_dim()];
    layer_sizes.extend(&cfg.train.hidden_dims);
    layer_sizes.push(cfg.train.embedding_dim);
    let encoder = Encoder::init(
        &layer_sizes,
        derive_seed(cfg.train.seed, ENCODER_INIT_STREAM),
    )?;

    let mode = match cfg.method {
        Method::Contrastive => TrainMode::Contrastive,
        Method::Baseline => TrainMode::BaselineL1,
    };
    let train_cfg = cfg.to_train_config()?;
    let (model, trace) = train(
        encoder,
        train_parts.features.view(),
        &train_parts.ages,
        mode,
        &train_cfg,
    )?;

    let result = evaluate_model(&model, &data, &cfg.probe)?;
    let wall_time_secs = started.elapsed().as_secs_f64();

    let trace_path = dir.join("trace.csv");
    write_trace_csv(&trace_path, &trace)?;
    model.to_checkpoint().save(&dir.join("checkpoint.json"))?;
    if let Some(scaler) = &scaler {
        atomic_write(
            &dir.join("standardizer.json"),
            &serde_json::to_string_pretty(scaler)?,
        )?;
    }
    atomic_write(&dir.join("config.json"), &serde_json::to_string_pretty(cfg)?)?;

    let record = RunRecord {
        config_hash: hash,
        method: cfg.method_name(),
        config: cfg.clone(),
        result,
        wall_time_secs,
        trace_path: trace_path.display().to_string(),
    };
    atomic_write(&result_path, &serde_json::to_string_pretty(&record)?)?;
    Ok(record)
}

/// Outcome of a grid run.
#[derive(Debug)]
pub struct AblationReport {
    /// Successful cells, in grid order.
    pub records: Vec<RunRecord>,
    /// (cell label, error) for cells that failed; the grid continues.
    pub failures: Vec<(String, String)>,
    pub results_csv: PathBuf,
    pub aggregate_csv: PathBuf,
    /// The aggregate table text (also written to `aggregate_csv`).
    pub aggregate_table: String,
}

fn cell_label(cfg: &RunConfig) -> String {
    format!(
        "{}/{}-{}/seed{}",
        cfg.method_name(),
        cfg.train.kernel.kind().name(),
        cfg.train.kernel.bandwidth(),
        cfg.train.seed
    )
}

fn with_pool<T: Send>(jobs: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// Run the kernel × loss × seed grid, resumably and cell-parallel.
pub fn run_ablation(grid: &GridConfig, out_dir: &Path, jobs: usize) -> Result<AblationReport> {
    grid.validate()?;
    std::fs::create_dir_all(out_dir)?;
    let cells = grid.cells();

    let outcomes: Vec<std::result::Result<RunRecord, String>> = with_pool(jobs, || {
        cells
            .par_iter()
            .map(|cfg| run_single(cfg, out_dir, true).map_err(|e| e.to_string()))
            .collect()
    })?;

    let mut records = Vec::new();
    let mut failures = Vec::new();
    for (cfg, outcome) in cells.iter().zip(outcomes) {
        match outcome {
            Ok(r) => records.push(r),
            Err(e) => failures.push((cell_label(cfg), e)),
        }
    }

    // per-seed rows
    let mut rows = String::from(PROBE_CSV_HEADER);
    rows.push('\n');
    for r in &records {
        rows.push_str(&probe_csv_row(
            &r.method,
            r.config.train.kernel.kind().name(),
            r.config.train.kernel.bandwidth(),
            r.config.train.seed,
            &r.result,
        ));
        rows.push('\n');
    }
    let results_csv = out_dir.join("results.csv");
    atomic_write(&results_csv, &rows)?;

    // aggregate challenge scores as mean\std{..} per kernel row and loss column
    let mut table = String::from("kernel,bandwidth");
    for loss in &grid.losses {
        table.push(',');
        table.push_str(loss.name());
    }
    table.push('\n');
    for kernel in &grid.kernels {
        table.push_str(&format!(
            "{},{}",
            kernel.kind().name(),
            kernel.bandwidth()
        ));
        for loss in &grid.losses {
            let scores: Vec<f64> = records
                .iter()
                .filter(|r| {
                    r.config.train.kernel == *kernel && r.config.train.loss == Some(*loss)
                })
                .map(|r| r.result.challenge_score)
                .collect();
            if scores.is_empty() {
                table.push_str(",n/a");
            } else {
                let (mean, std) = mean_std(&scores);
                table.push_str(&format!(",{mean:.2}\\std{{{std:.2}}}"));
            }
        }
        table.push('\n');
    }
    let aggregate_csv = out_dir.join("aggregate.csv");
    atomic_write(&aggregate_csv, &table)?;

    if !failures.is_empty() {
        let json = serde_json::to_string_pretty(
            &failures
                .iter()
                .map(|(c, e)| serde_json::json!({"cell": c, "error": e}))
                .collect::<Vec<_>>(),
        )?;
        atomic_write(&out_dir.join("failures.json"), &json)?;
    }

    Ok(AblationReport {
        records,
        failures,
        results_csv,
        aggregate_csv,
        aggregate_table: table,
    })
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Outcome of a comparison run.
#[derive(Debug)]
pub struct ComparisonReport {
    /// (method, seed, result) in config × seed order.
    pub rows: Vec<(String, u64, ProbeResult)>,
    pub verdicts: Vec<ComparisonVerdict>,
    pub csv_path: PathBuf,
}

/// Train every config on the shared dataset across the given seeds and
/// compare each method against the baseline seed by seed.
///
/// All configs must declare the identical data source; `seeds` overrides
/// each config's training seed (empty = use each config's own seed).
pub fn run_comparison(
    configs: &[RunConfig],
    seeds: &[u64],
    out_dir: &Path,
    jobs: usize,
) -> Result<ComparisonReport> {
    if configs.is_empty() {
        return Err(Error::Config("comparison needs at least one config".into()));
    }
    for cfg in configs {
        cfg.validate()?;
    }
    let data_repr = |c: &RunConfig| -> Result<String> {
        Ok(super::config::canonical_json(&serde_json::to_value(&c.data)?))
    };
    let reference = data_repr(&configs[0])?;
    for cfg in &configs[1..] {
        if data_repr(cfg)? != reference {
            return Err(Error::Config(
                "comparison configs must share the same dataset (identical data source, seed and splits)"
                    .into(),
            ));
        }
    }
    std::fs::create_dir_all(out_dir)?;

    let mut cell_configs = Vec::new();
    for cfg in configs {
        if seeds.is_empty() {
            cell_configs.push(cfg.clone());
        } else {
            for &seed in seeds {
                let mut c = cfg.clone();
                c.train.seed = seed;
                cell_configs.push(c);
            }
        }
    }

    let outcomes: Vec<Result<RunRecord>> = with_pool(jobs, || {
        cell_configs
            .par_iter()
            .map(|cfg| run_single(cfg, out_dir, true))
            .collect()
    })?;
    let records: Vec<RunRecord> = outcomes.into_iter().collect::<Result<_>>()?;

    let mut csv = String::from("method,int_mae,bacc,ext_mae,score\n");
    let mut rows = Vec::with_capacity(records.len());
    for r in &records {
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            r.method,
            r.result.mae_internal,
            r.result.site_bacc,
            r.result.mae_external,
            r.result.challenge_score
        ));
        rows.push((r.method.clone(), r.config.train.seed, r.result));
    }
    let csv_path = out_dir.join("comparison.csv");
    atomic_write(&csv_path, &csv)?;

    // seed-paired verdicts against the baseline
    let baseline_rows: Vec<&(String, u64, ProbeResult)> =
        rows.iter().filter(|(m, _, _)| m == "baseline_l1").collect();
    let mut verdicts = Vec::new();
    if !baseline_rows.is_empty() {
        let methods: Vec<String> = {
            let mut seen = Vec::new();
            for (m, _, _) in &rows {
                if m != "baseline_l1" && !seen.contains(m) {
                    seen.push(m.clone());
                }
            }
            seen
        };
        for method in methods {
            let mut ext_mae_wins = 0;
            let mut bacc_wins = 0;
            let mut score_wins = 0;
            let mut paired = 0;
            let mut scores = Vec::new();
            let mut base_scores = Vec::new();
            for (m, seed, res) in &rows {
                if *m != method {
                    continue;
                }
                let Some((_, _, base)) = baseline_rows.iter().find(|(_, s, _)| s == seed) else {
                    continue;
                };
                paired += 1;
                if res.mae_external < base.mae_external {
                    ext_mae_wins += 1;
                }
                if res.site_bacc < base.site_bacc {
                    bacc_wins += 1;
                }
                if res.challenge_score < base.challenge_score {
                    score_wins += 1;
                }
                scores.push(res.challenge_score);
                base_scores.push(base.challenge_score);
            }
            if paired > 0 {
                verdicts.push(ComparisonVerdict {
                    method,
                    baseline: "baseline_l1".into(),
                    seeds: paired,
                    ext_mae_wins,
                    bacc_wins,
                    score_wins,
                    median_score: median(&scores),
                    median_score_baseline: median(&base_scores),
                });
            }
        }
        atomic_write(
            &out_dir.join("verdicts.json"),
            &serde_json::to_string_pretty(&verdicts)?,
        )?;
    }

    Ok(ComparisonReport {
        rows,
        verdicts,
        csv_path,
    })
}
