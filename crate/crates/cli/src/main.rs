//! `kercon` — train and evaluate kernel-weighted contrastive regression
//! models on synthetic multi-site data.
//!
//! Subcommands mirror the experiment API: `run` a single config, `ablate` a
//! kernel × loss × seed grid, `compare` methods against the L1 baseline,
//! `gen-data` to materialize a synthetic dataset as CSV.

use anyhow::Result;
use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

use kercon_core::datagen::{self, SyntheticConfig};
use kercon_core::experiment::{
    load_config, load_grid, run_ablation, run_comparison, run_single, RunConfig,
};

#[derive(Parser)]
#[command(name = "kercon", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one config: generate/load data, train, evaluate, persist.
    Run {
        /// Run config JSON.
        config: PathBuf,
        /// Override the training seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the number of training epochs.
        #[arg(long)]
        epochs: Option<usize>,
        /// Results directory.
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
    },
    /// Run the ablation grid (kernels × losses × seeds), resumably.
    Ablate {
        /// Grid config JSON.
        grid: PathBuf,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
        /// Parallel grid cells (0 = all cores).
        #[arg(long, default_value_t = 0)]
        jobs: usize,
        /// Override epochs for every cell.
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Train several configs on the shared dataset and compare them.
    Compare {
        /// Run config JSON files (baseline and/or contrastive).
        #[arg(required = true)]
        configs: Vec<PathBuf>,
        /// Training seeds, comma separated (default: each config's own).
        #[arg(long, value_delimiter = ',')]
        seeds: Vec<u64>,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 0)]
        jobs: usize,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Generate a synthetic dataset CSV plus its manifest.
    GenData {
        /// SyntheticConfig JSON.
        config: PathBuf,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            // machine-readable error on stderr
            eprintln!(
                "{}",
                serde_json::json!({ "error": err.to_string() })
            );
            ExitCode::FAILURE
        }
    }
}

fn apply_overrides(cfg: &mut RunConfig, seed: Option<u64>, epochs: Option<usize>) {
    if let Some(s) = seed {
        cfg.train.seed = s;
    }
    if let Some(e) = epochs {
        cfg.train.epochs = e;
    }
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Run {
            config,
            seed,
            epochs,
            out_dir,
        } => {
            let mut cfg = load_config(&config)?;
            apply_overrides(&mut cfg, seed, epochs);
            let record = run_single(&cfg, &out_dir, false)?;
            println!("run {} ({})", record.config_hash, record.method);
            println!(
                "  int MAE {:.3} | ext MAE {:.3} | site BAcc {:.1}% | score {:.3}",
                record.result.mae_internal,
                record.result.mae_external,
                100.0 * record.result.site_bacc,
                record.result.challenge_score
            );
            println!("  wall time {:.1}s", record.wall_time_secs);
            println!(
                "  persisted under {}",
                out_dir.join("runs").join(&record.config_hash).display()
            );
            Ok(())
        }
        Command::Ablate {
            grid,
            out_dir,
            jobs,
            epochs,
        } => {
            let mut grid = load_grid(&grid)?;
            if let Some(e) = epochs {
                grid.base.train.epochs = e;
            }
            let report = run_ablation(&grid, &out_dir, jobs)?;
            println!(
                "{} cells done, {} failed",
                report.records.len(),
                report.failures.len()
            );
            println!("per-seed rows: {}", report.results_csv.display());
            println!("aggregate (challenge score, mean\\std over seeds):");
            print!("{}", report.aggregate_table);
            for (cell, err) in &report.failures {
                println!("FAILED {cell}: {err}");
            }
            Ok(())
        }
        Command::Compare {
            configs,
            seeds,
            out_dir,
            jobs,
            epochs,
        } => {
            let mut cfgs = Vec::with_capacity(configs.len());
            for path in &configs {
                let mut cfg = load_config(path)?;
                apply_overrides(&mut cfg, None, epochs);
                cfgs.push(cfg);
            }
            let report = run_comparison(&cfgs, &seeds, &out_dir, jobs)?;
            println!("method,int_mae,bacc,ext_mae,score");
            for (method, seed, r) in &report.rows {
                println!(
                    "{method},{:.4},{:.4},{:.4},{:.4}  (seed {seed})",
                    r.mae_internal, r.site_bacc, r.mae_external, r.challenge_score
                );
            }
            for v in &report.verdicts {
                println!(
                    "{} vs {}: ext MAE lower in {}/{} seeds, BAcc lower in {}/{}, score lower in {}/{}; median score {:.3} vs {:.3}",
                    v.method,
                    v.baseline,
                    v.ext_mae_wins,
                    v.seeds,
                    v.bacc_wins,
                    v.seeds,
                    v.score_wins,
                    v.seeds,
                    v.median_score,
                    v.median_score_baseline
                );
            }
            println!("rows written to {}", report.csv_path.display());
            Ok(())
        }
        Command::GenData { config, out_dir } => {
            let text = std::fs::read_to_string(&config)?;
            let cfg: SyntheticConfig = serde_json::from_str(&text)?;
            let data = datagen::generate(&cfg)?;
            std::fs::create_dir_all(&out_dir)?;
            let csv_path = out_dir.join("data.csv");
            data.save_csv(&csv_path)?;
            let manifest = datagen::write_manifest(&cfg, &csv_path)?;
            println!(
                "wrote {} rows ({} train / {} internal / {} external) to {}",
                data.len(),
                data.split_len(datagen::Split::Train),
                data.split_len(datagen::Split::Internal),
                data.split_len(datagen::Split::External),
                csv_path.display()
            );
            println!("manifest: {}", manifest.display());
            Ok(())
        }
    }
}
