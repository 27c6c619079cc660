//! Command-line driver for simulations and their analysis.
//!
//! Subcommands: `run` (single simulation), `sweep` (Cartesian parameter
//! scan), `analyze` (recompute fits/tables/plots for a run directory), and
//! `compare` (difference report between two run directories).
//!
//! Configuration precedence is file < `KSFLOW_*` environment variables <
//! command-line flags. Exit codes: 0 on success, 2 for configuration
//! errors, 3 for numeric aborts, 1 otherwise.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ksflow_core::config::{Preset, RunConfig};
use ksflow_core::diagnostics::DensityNorm;
use ksflow_core::runner;
use ksflow_core::Error;

const AFTER_HELP: &str = "\
Environment overrides: any configuration key can be set with \
KSFLOW_<SECTION>_<KEY>, e.g. KSFLOW_GRID_N=128, KSFLOW_TIME_DT=0.0005, or \
KSFLOW_DIAGNOSTICS_FIT_WINDOW='[0.2, 0.01]'. Overrides also apply to the \
configuration embedded in a manifest read by `analyze` or `--config`.

Presets: free, critical2d, critical3d-small, subcritical-appendixB.

Exit codes: 0 success, 2 configuration error, 3 numeric abort.";

#[derive(Parser)]
#[command(
    name = "ksflow",
    version,
    about = "Pseudospectral simulator and scattering analysis for half-density quantum flows",
    after_help = AFTER_HELP
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute a single run from a config file, a manifest, or a preset.
    Run(RunArgs),
    /// Execute the Cartesian sweep described by the config's [sweep] section.
    Sweep(RunArgs),
    /// Recompute fits, Cauchy tables, and plots for a finished run directory.
    Analyze {
        /// Run directory containing manifest.toml and diagnostics.csv.
        run_dir: PathBuf,
    },
    /// Write a difference report for two run directories.
    Compare {
        dir_a: PathBuf,
        dir_b: PathBuf,
        /// Directory for compare.csv.
        #[arg(long, default_value = "compare")]
        out: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    /// TOML run configuration (a run's manifest.toml also works).
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in configuration (see the preset list below).
    #[arg(long)]
    preset: Option<String>,
    /// Output directory; defaults to the config's output.directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override initial.seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker count recorded in the manifest. Integration is sequential;
    /// the determinism contract is stated per fixed thread count.
    #[arg(long, default_value_t = 1)]
    threads: usize,
}

fn config_error(path: &str, detail: impl Into<String>) -> Error {
    Error::Config {
        path: path.to_string(),
        detail: detail.into(),
    }
}

fn prepare(args: &RunArgs) -> Result<(RunConfig, PathBuf, usize), Error> {
    let mut config = match (&args.config, &args.preset) {
        (Some(path), None) => runner::load_run_config(path)?,
        (None, Some(name)) => {
            let preset = Preset::from_name(name).ok_or_else(|| {
                let names: Vec<&str> = Preset::ALL.iter().map(|p| p.name()).collect();
                config_error(
                    "--preset",
                    format!("unknown preset {name:?}; available: {}", names.join(", ")),
                )
            })?;
            // Round-trip through the parser so KSFLOW_* environment
            // overrides apply to presets exactly as to config files.
            RunConfig::from_toml(&preset.config().to_toml_string(), &format!("preset:{name}"))?
        }
        (None, None) => {
            return Err(config_error(
                "--config",
                "either --config PATH or --preset NAME is required",
            ))
        }
        (Some(_), Some(_)) => {
            return Err(config_error(
                "--preset",
                "--config and --preset are mutually exclusive",
            ))
        }
    };
    if let Some(seed) = args.seed {
        config.initial.seed = seed;
    }
    if args.threads == 0 {
        return Err(config_error("--threads", "must be at least 1"));
    }
    config.validate()?;
    let out = args
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from(&config.output.directory));
    Ok((config, out, args.threads))
}

fn print_fits(fits: &[(DensityNorm, ksflow_core::diagnostics::LinearFit<f64>)]) {
    for (p, fit) in fits {
        let name = match p {
            DensityNorm::L1 => "rho_l1",
            DensityNorm::L2 => "rho_l2",
            DensityNorm::LInf => "rho_linf",
        };
        println!(
            "  {name}: slope {:+.4} (r² {:.6}, residual {:.3e})",
            fit.slope, fit.r_squared, fit.residual
        );
    }
}

fn execute(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Run(args) => {
            let (config, out, threads) = prepare(&args)?;
            let artifacts = runner::run(&config, &out, threads)?;
            let records = artifacts.series.records();
            println!("run complete: {}", artifacts.out_dir.display());
            println!(
                "  {} samples from {} to {}, mass drift {:.3e}",
                records.len(),
                records[0].time(),
                records[records.len() - 1].time(),
                artifacts.mass_drift()
            );
            print_fits(&artifacts.decay_fits);
            if let Some(report) = &artifacts.scatter {
                let g_sup = report.g_inf.iter().fold(0.0_f64, |a, &b| a.max(b.abs()));
                println!(
                    "  scattering: sup|g_inf| {:.6e} at s = {}",
                    g_sup, report.s_ref
                );
            }
            if let Some(class) = &artifacts.dichotomy {
                println!("  dichotomy: {class}");
            }
            Ok(())
        }
        Command::Sweep(args) => {
            let (config, out, threads) = prepare(&args)?;
            let summary = runner::sweep(&config, &out, threads)?;
            let ok = summary.rows.iter().filter(|r| r.status == "ok").count();
            println!(
                "sweep complete: {} points ({} ok, {} failed)",
                summary.rows.len(),
                ok,
                summary.rows.len() - ok
            );
            for row in &summary.rows {
                let extra = match (&row.dichotomy, &row.observed_order) {
                    (Some(d), _) => format!(" dichotomy={d}"),
                    (None, Some(o)) => format!(" order={o:.3}"),
                    _ => String::new(),
                };
                println!(
                    "  point {:04}: {}{}{}",
                    row.point,
                    row.status,
                    extra,
                    row.error
                        .as_deref()
                        .map(|e| format!(" ({e})"))
                        .unwrap_or_default()
                );
            }
            println!("summary: {}", summary.csv_path.display());
            Ok(())
        }
        Command::Analyze { run_dir } => {
            let report = runner::analyze(&run_dir)?;
            println!("analysis written to {}", report.analysis_dir.display());
            match report.fit_window {
                Some((lo, hi)) => println!("  fit window: [{lo}, {hi}]"),
                None => println!("  fit window: full"),
            }
            print_fits(&report.fits);
            println!(
                "  cauchy tables: {} unmodified, {} modified snapshots",
                report.cauchy_unmodified.len(),
                report.cauchy_modified.len()
            );
            Ok(())
        }
        Command::Compare { dir_a, dir_b, out } => {
            let report = runner::compare(&dir_a, &dir_b, &out)?;
            println!(
                "compared {} vs {}: {} config difference(s)",
                dir_a.display(),
                dir_b.display(),
                report.config_diffs.len()
            );
            for (key, a, b) in &report.config_diffs {
                println!("  config {key}: {a} vs {b}");
            }
            let worst = report
                .column_diffs
                .iter()
                .max_by(|a, b| a.1.partial_cmp(&b.1).expect("finite diffs"));
            if let Some((name, diff)) = worst {
                println!("  largest column difference: {name} ({diff:.3e})");
            }
            if let Some(d) = report.final_state_distance {
                println!("  final-state distance: {d:.6e}");
            }
            println!("report: {}", out.join("compare.csv").display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(error) => {
            eprintln!("error: {error}");
            ExitCode::from(error.exit_code().clamp(1, 255) as u8)
        }
    }
}
