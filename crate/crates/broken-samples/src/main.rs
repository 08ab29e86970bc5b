//! Command-line front end for the broken-samples experiment drivers.
//!
//! Every subcommand works without a configuration file — each ships a
//! sensible desk-scale default — and accepts `--config` to run a custom
//! study. All runs are deterministic: the same configuration, seed, and
//! subcommand produce byte-identical output files at any `--threads`
//! setting.
//!
//! Exit codes: `0` success, `1` configuration or I/O problems, `2` a
//! failed numerical self-check, `3` a numerical failure while running.

use std::path::PathBuf;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use broken_samples::experiments::{
    run_cv_sweep, run_limit_convergence, run_loss_curves, run_oracle_checks, run_simulate, svg,
    ExperimentConfig, ExperimentError,
};

#[derive(Parser)]
#[command(
    name = "broken-samples",
    version,
    about = "Monte-Carlo studies of batched pairing-loss estimators",
    arg_required_else_help = true
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment configuration (JSON); defaults are built in per subcommand
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Override the configuration's master seed
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override the configuration's output directory
    #[arg(long, global = true, value_name = "DIR")]
    out_dir: Option<PathBuf>,
    /// Worker threads; 0 means one per core
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate the parameter on fresh broken datasets across the sweep
    Simulate {
        /// Override the batch-size list, e.g. --m 5,20,50
        #[arg(long = "m", value_delimiter = ',', value_name = "LIST")]
        m_list: Vec<usize>,
        /// Override the batch-count list, e.g. --n 50,200
        #[arg(long = "n", value_delimiter = ',', value_name = "LIST")]
        n_list: Vec<usize>,
        /// Override the number of replicates per sweep cell
        #[arg(long)]
        replicates: Option<usize>,
    },
    /// Trace empirical loss curves next to the analytic limit curve
    LossCurve,
    /// Sweep estimator dispersion across true parameters and batch sizes
    Cv,
    /// Measure the expected-loss gap to the limit as batches grow
    LimitConvergence,
    /// Run the built-in numerical self-check suite
    OracleCheck,
    /// Re-render SVG plots from CSV tables in the output directory
    Render,
}

/// Desk-scale default study: torus model, modest sweep.
const DEFAULT_SIMULATE: &str = r#"{
    "model": { "kind": "torus_wrapped_gaussian", "sigma_star": 0.1 }
}"#;

/// Dispersion sweep defaults: three true widths, three batch sizes.
const DEFAULT_CV: &str = r#"{
    "model": { "kind": "torus_wrapped_gaussian", "sigma_star": 0.1 },
    "m_list": [5, 20, 50],
    "theta_star_list": [0.05, 0.1, 0.2]
}"#;

/// Convergence study defaults: the discrete model has exact expectations.
const DEFAULT_LIMIT: &str = r#"{
    "model": { "kind": "discrete_tabular", "theta_star": 0.8 }
}"#;

fn load_config(common: &Common, default_json: &str) -> anyhow::Result<ExperimentConfig> {
    let mut config = match &common.config {
        Some(path) => ExperimentConfig::from_path(path)
            .with_context(|| format!("loading {}", path.display()))?,
        None => ExperimentConfig::from_json(default_json)?,
    };
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    if let Some(dir) = &common.out_dir {
        config.output.dir = dir.clone();
    }
    Ok(config)
}

fn report_files(files: &[PathBuf]) {
    for file in files {
        println!("wrote {}", file.display());
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let common = &cli.common;
    match &cli.command {
        Command::Simulate {
            m_list,
            n_list,
            replicates,
        } => {
            let mut config = load_config(common, DEFAULT_SIMULATE)?;
            if !m_list.is_empty() {
                config.m_list = m_list.clone();
            }
            if !n_list.is_empty() {
                config.n_list = n_list.clone();
            }
            if let Some(replicates) = replicates {
                config.replicates = *replicates;
            }
            config.validate()?;
            let out = run_simulate(&config, &config.output.dir, common.threads)?;
            println!(
                "{} loss, {} estimates across {} sweep cells",
                config.loss.name(),
                out.estimates.len(),
                out.summary.len()
            );
            for row in &out.summary {
                println!(
                    "  m={:<4} n={:<5} mean={:.6} sd={:.3e} cv={:.3e} median|err|={:.3e}",
                    row.m, row.n, row.mean, row.sd, row.cv, row.median_abs_err
                );
            }
            report_files(&out.files);
        }
        Command::LossCurve => {
            let config = load_config(common, DEFAULT_SIMULATE)?;
            let out = run_loss_curves(&config, &config.output.dir, common.threads)?;
            println!(
                "{} loss curves ({} grid points each) plus the limit curve",
                out.minima.len(),
                out.limit.len()
            );
            report_files(&out.files);
        }
        Command::Cv => {
            let config = load_config(common, DEFAULT_CV)?;
            let out = run_cv_sweep(&config, &config.output.dir, common.threads)?;
            println!("dispersion over {} sweep rows", out.rows.len());
            for row in &out.rows {
                println!(
                    "  true={:<8} m={:<4} n={:<5} cv={:.3e}",
                    row.theta_star, row.m, row.n, row.cv
                );
            }
            report_files(&out.files);
        }
        Command::LimitConvergence => {
            let config = load_config(common, DEFAULT_LIMIT)?;
            let out = run_limit_convergence(&config, &config.output.dir)?;
            println!("expected-loss gap across {} rows", out.rows.len());
            for (theta, slope) in &out.fits {
                println!("  theta={theta:<8} log-log slope={slope:.4}");
            }
            report_files(&out.files);
        }
        Command::OracleCheck => {
            // the self-check suite is fixed; only the output directory and
            // thread count apply
            let out_dir = common
                .out_dir
                .clone()
                .unwrap_or_else(|| PathBuf::from("out"));
            let out = run_oracle_checks(&out_dir, common.threads)?;
            for check in &out.checks {
                println!(
                    "  {:<28} deviation={:.3e} tolerance={:.3e} {}",
                    check.name,
                    check.max_deviation,
                    check.tolerance,
                    if check.pass { "PASS" } else { "FAIL" }
                );
            }
            println!("all {} self-checks passed", out.checks.len());
            report_files(&out.files);
        }
        Command::Render => {
            let config = load_config(common, DEFAULT_SIMULATE)?;
            let files = svg::render_out_dir(&config.output.dir)?;
            report_files(&files);
        }
    }
    Ok(())
}

fn main() {
    // clap's default error exit code (2) is reserved here for failed
    // self-checks, so usage errors map to 1 and help/version to 0
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = i32::from(err.use_stderr());
            let _ = err.print();
            std::process::exit(code);
        }
    };
    if let Err(err) = run(cli) {
        eprintln!("error: {err:#}");
        let code = err
            .downcast_ref::<ExperimentError>()
            .map(ExperimentError::exit_code)
            .unwrap_or(1);
        std::process::exit(code);
    }
}
