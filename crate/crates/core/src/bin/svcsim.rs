use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::error;

use svcsim::scenario::{check_report, run_scenario, ScenarioConfig};
use svcsim::svc::Scheme;
use svcsim::{Error, Result};

/// Adaptive SVC streaming simulator.
///
/// Log verbosity follows SVCSIM_LOG (e.g. `SVCSIM_LOG=debug`), default `info`.
#[derive(Parser)]
#[command(name = "svcsim", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write traces, report and plot data.
    Run {
        /// TOML scenario file.
        config: PathBuf,
        /// Output directory.
        #[arg(long, default_value = "run")]
        outdir: PathBuf,
        /// Comma-separated subset of cgs,fgs,mgs; overrides the config.
        #[arg(long, value_delimiter = ',')]
        schemes: Option<Vec<Scheme>>,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Print the default scenario as TOML.
    PrintDefaultConfig,
    /// Recompute the metrics of a run directory from its traces and compare
    /// them with its report.json.
    Report { rundir: PathBuf },
}

fn load(path: &PathBuf) -> Result<ScenarioConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io { path: path.clone(), source: e })?;
    ScenarioConfig::from_toml(&text).map_err(|e| match e {
        Error::Parse { line, column, reason, .. } => Error::Parse { path: path.display().to_string(), line, column, reason },
        other => other,
    })
}

fn print_table(report: &svcsim::scenario::RunReport) {
    println!("{:<6} {:>10} {:>11} {:>4} {:<10} {:>8} {:>10}", "scheme", "psnr_db", "decodable%", "mos", "", "loss%", "delay_ms");
    for r in report.schemes.values() {
        println!(
            "{:<6} {:>10.2} {:>11.1} {:>4} {:<10} {:>8.2} {:>10.1}",
            r.scheme,
            r.run_mean_psnr_db,
            r.decodable_frame_ratio * 100.0,
            r.mos,
            r.mos_label,
            r.loss_rate * 100.0,
            r.mean_delay_s * 1000.0
        );
    }
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Run { config, outdir, schemes, seed } => {
            let mut cfg = load(&config)?;
            if let Some(s) = schemes {
                cfg.schemes = s;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let report = run_scenario(&cfg, &outdir)?;
            print_table(&report);
            Ok(true)
        }
        Command::PrintDefaultConfig => {
            print!("{}", ScenarioConfig::default().to_toml());
            Ok(true)
        }
        Command::Report { rundir } => {
            let check = check_report(&rundir)?;
            print_table(&check.recomputed);
            for m in &check.mismatches {
                println!("mismatch: {m}");
            }
            if check.mismatches.is_empty() {
                println!("report.json matches the traces");
            }
            Ok(check.mismatches.is_empty())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("SVCSIM_LOG", "info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            error!("{e}");
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
