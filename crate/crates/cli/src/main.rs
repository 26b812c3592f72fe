//! `evolab` command line.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use evolab::checker::{run_source, CheckerConfig};
use evolab::metrics::{generation_series, metrics, metrics_csv};
use evolab::oracle::seeds::build_seed_trees;
use evolab::oracle::Landscape;
use evolab::runtime::{run_evolution_logged, RunConfig, RunError};
use evolab::search::analytic::{design_time_with_errors, throughput};
use evolab::search::montecarlo::{gap_csv, simulate_vs_gap};
use evolab::store::{replay, LogWriter};
use evolab::unit_tree::compose;

/// Exit status for an invalid configuration.
const CONFIG_ERROR: u8 = 4;

#[derive(Parser)]
#[command(name = "evolab", version, about = "Evolutionary block-design discovery at desk scale")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the evolutionary loop and write events.jsonl, summary.json and metrics.csv.
    Evolve {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "evolab-out")]
        out: PathBuf,
        /// Landscape JSON overriding the generated one.
        #[arg(long)]
        landscape: Option<PathBuf>,
        /// Overrides the master seed of the config.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Rebuild the store from a log and print its summary.
    Replay {
        #[arg(long)]
        log: PathBuf,
    },
    /// Population-fitness series and metrics of a log.
    Metrics {
        #[arg(long)]
        log: PathBuf,
        #[arg(long, default_value_t = 50)]
        window: usize,
        #[arg(long, default_value_t = 25)]
        step: usize,
    },
    /// Run the symbolic checker on a program file. Exit 0 pass, 2 static failure, 3 execution failure.
    Check {
        file: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Expected and simulated calls of staged versus single-shot generation.
    VsGap {
        #[arg(long, default_value_t = 0.5)]
        p: f64,
        #[arg(long, default_value_t = 10)]
        max_n: usize,
        #[arg(long, default_value_t = 10_000)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Pipeline throughput for a designer/verifier mix.
    Throughput {
        /// Mean minutes per design before redos.
        #[arg(long)]
        t_d: f64,
        /// Minutes per verification.
        #[arg(long)]
        t_v: f64,
        #[arg(long, default_value_t = 0.0)]
        error_rate: f64,
        #[arg(long, default_value_t = 1.0)]
        designers: f64,
        #[arg(long, default_value_t = 1.0)]
        verifiers: f64,
    },
    /// Print the seed designs as programs.
    Seeds,
}

fn evolve(config: Option<PathBuf>, out: PathBuf, landscape: Option<PathBuf>, seed: Option<u64>) -> Result<ExitCode> {
    let cfg = (|| -> Result<RunConfig, RunError> {
        let mut cfg = match &config {
            Some(path) => {
                let text = fs::read_to_string(path).map_err(|e| RunError::Config(format!("{}: {e}", path.display())))?;
                RunConfig::from_toml(&text)?
            }
            None => RunConfig::default(),
        };
        if let Some(path) = &landscape {
            let text = fs::read_to_string(path).map_err(|e| RunError::Config(format!("{}: {e}", path.display())))?;
            cfg.landscape = Some(Landscape::from_json(&text).map_err(|e| RunError::Config(e.to_string()))?);
        }
        if let Some(s) = seed {
            cfg.seed = s;
        }
        cfg.validate()?;
        Ok(cfg)
    })();
    let cfg = match cfg {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return Ok(ExitCode::from(CONFIG_ERROR));
        }
    };
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    let mut log = LogWriter::create(&out.join("events.jsonl"), &evolab::store::StoreConfig::new(cfg.scale_labels()))?;
    let output = run_evolution_logged(&cfg, &mut log)?;
    output.write(&out)?;
    println!("{}", serde_json::to_string_pretty(&output.summary)?);
    Ok(ExitCode::SUCCESS)
}

fn main() -> Result<ExitCode> {
    let cli = Cli::parse();
    match cli.command {
        Command::Evolve {
            config,
            out,
            landscape,
            seed,
        } => evolve(config, out, landscape, seed),
        Command::Replay { log } => {
            let store = replay(&log)?;
            println!("{}", serde_json::to_string_pretty(&store.summary())?);
            Ok(ExitCode::SUCCESS)
        }
        Command::Metrics { log, window, step } => {
            let store = replay(&log)?;
            let series = generation_series(&store, window, step)?;
            print!("{}", metrics_csv(&series));
            match metrics(&series) {
                Ok(m) => eprintln!("{}", serde_json::to_string_pretty(&m)?),
                Err(e) => eprintln!("metrics unavailable: {e}"),
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Check { file, seed } => {
            let text = fs::read_to_string(&file).with_context(|| format!("reading {}", file.display()))?;
            let report = run_source(&text, &CheckerConfig::default(), seed);
            println!("{}", report.to_json());
            Ok(ExitCode::from(report.exit_code() as u8))
        }
        Command::VsGap { p, max_n, trials, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let rows = simulate_vs_gap(p, 1..=max_n, trials, &mut rng)?;
            print!("{}", gap_csv(&rows));
            Ok(ExitCode::SUCCESS)
        }
        Command::Throughput {
            t_d,
            t_v,
            error_rate,
            designers,
            verifiers,
        } => {
            let effective = design_time_with_errors(t_d, error_rate)?;
            let t = throughput(designers, verifiers, effective, t_v)?;
            let report = serde_json::json!({
                "t_d": effective,
                "t_v": t_v,
                "theta": t.theta,
                "r_star": t.r_star,
            });
            println!("{}", serde_json::to_string_pretty(&report)?);
            Ok(ExitCode::SUCCESS)
        }
        Command::Seeds => {
            for tree in build_seed_trees() {
                println!("# {}\n{}", tree.design_name, compose(&tree)?);
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}
