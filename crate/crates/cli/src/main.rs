//! `aoa`: synthetic sweeps, angle-of-arrival fitting, bounds and benchmarks.
//!
//! Exit codes: 0 success, 2 configuration error, 3 input/output error,
//! 4 computation failure.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use aoa_core::estimators::EstimatorMode;

#[derive(Debug, Parser)]
#[command(name = "aoa", version, about = "Angle-of-arrival estimation from path-loss measurements")]
struct Cli {
    /// Seed for every stochastic step (overrides the config and AOA_SEED).
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct ConfigArgs {
    /// Run configuration JSON.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Built-in configuration: stage1_chamber, stage2_ris_2m, stage2_ris_3m, cos_sanity.
    #[arg(long, visible_alias = "scenario")]
    preset: Option<String>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Sr,
    Direct,
    Poly,
}

impl From<ModeArg> for EstimatorMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Sr => EstimatorMode::UnconstrainedSr,
            ModeArg::Direct => EstimatorMode::DirectInv,
            ModeArg::Poly => EstimatorMode::PolyCos,
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic dataset (CSV plus metadata sidecar).
    Generate {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
        /// Override the generator noise, dB.
        #[arg(long)]
        noise_sigma_db: Option<f64>,
    },
    /// Fit an estimator to a dataset and write the model.
    FitAoa {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        #[arg(long)]
        out_model: PathBuf,
        /// Pareto front CSV (sr mode); defaults next to the model.
        #[arg(long)]
        front: Option<PathBuf>,
        /// Override the symbolic-regression iteration count.
        #[arg(long)]
        iterations: Option<usize>,
    },
    /// Map `freq_hz,s21_db[,theta_t_deg]` rows to angles.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Square-root Cramér-Rao bound curve.
    Crlb {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        noise_var: Option<f64>,
        #[arg(long)]
        snapshots: Option<usize>,
    },
    /// Monte-Carlo path-loss CDF under pointing errors.
    McCdf {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 3.0)]
        sigma_deg: f64,
        #[arg(long, default_value_t = 3000)]
        draws: usize,
    },
    /// Fit every configured estimator, score it and write the report and plot tables.
    Benchmark {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Existing dataset; generated from the config when absent.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
        #[arg(long)]
        iterations: Option<usize>,
        /// Override the Monte-Carlo trials per angle.
        #[arg(long)]
        trials: Option<usize>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let seed = cli.seed;
    let result = match cli.command {
        Command::Generate {
            cfg,
            out,
            noise_sigma_db,
        } => commands::generate(&cfg, seed, &out, noise_sigma_db),
        Command::FitAoa {
            cfg,
            data,
            mode,
            out_model,
            front,
            iterations,
        } => commands::fit_aoa(&cfg, seed, &data, mode.map(Into::into), &out_model, front, iterations),
        Command::Predict { model, input, out } => commands::predict(&model, &input, &out),
        Command::Crlb {
            cfg,
            out,
            noise_var,
            snapshots,
        } => commands::crlb(&cfg, &out, noise_var, snapshots),
        Command::McCdf {
            cfg,
            out,
            sigma_deg,
            draws,
        } => commands::mc_cdf(&cfg, seed, &out, sigma_deg, draws),
        Command::Benchmark {
            cfg,
            data,
            out_dir,
            iterations,
            trials,
        } => commands::benchmark(&cfg, seed, data.as_deref(), out_dir, iterations, trials),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code)
        }
    }
}
