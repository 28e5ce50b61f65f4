use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use vanet_magent::bench::{bench_csv, compare_strategies};
use vanet_magent::config::{parse_config, ConfigError};
use vanet_magent::scenario::{run_scenario, ScenarioError};

/// VANET mobile-agent simulator: QoS route discovery, alert
/// dissemination and a dispatch-strategy bench.
#[derive(Parser)]
#[command(name = "vanet-magent", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write trace/report files
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory (defaults to $VANET_MAGENT_OUT)
        #[arg(long)]
        out_dir: Option<PathBuf>,
        /// Override the seed from the config file
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Compare the four dispatch strategies on the configured task
    BenchStrategies {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Check a config file and print the effective configuration
    ValidateConfig {
        #[arg(long)]
        config: PathBuf,
    },
}

const EXIT_VALIDATION: u8 = 2;
const EXIT_PARSE: u8 = 3;
const EXIT_NOT_FOUND: u8 = 4;
const EXIT_IO: u8 = 5;

fn config_exit(err: &ConfigError) -> u8 {
    match err {
        ConfigError::Validation(_) => EXIT_VALIDATION,
        ConfigError::Parse(_) => EXIT_PARSE,
        ConfigError::NotFound(_) => EXIT_NOT_FOUND,
        ConfigError::Io(_) => EXIT_IO,
    }
}

fn resolve_out_dir(out_dir: Option<PathBuf>) -> Result<PathBuf, u8> {
    match out_dir.or_else(|| std::env::var_os("VANET_MAGENT_OUT").map(PathBuf::from)) {
        Some(dir) => Ok(dir),
        None => {
            eprintln!("error: no output directory; pass --out-dir or set VANET_MAGENT_OUT");
            Err(EXIT_IO)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Run {
            config,
            out_dir,
            seed,
        } => cmd_run(config, out_dir, seed),
        Command::BenchStrategies { config, out_dir } => cmd_bench(config, out_dir),
        Command::ValidateConfig { config } => cmd_validate(config),
    };
    match code {
        Ok(()) => ExitCode::SUCCESS,
        Err(code) => ExitCode::from(code),
    }
}

fn cmd_run(config: PathBuf, out_dir: Option<PathBuf>, seed: Option<u64>) -> Result<(), u8> {
    let out_dir = resolve_out_dir(out_dir)?;
    let mut cfg = parse_config(&config).map_err(|e| {
        eprintln!("error: {e}");
        config_exit(&e)
    })?;
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    let metrics = run_scenario(cfg, &out_dir).map_err(|e| {
        eprintln!("error: {e}");
        match e {
            ScenarioError::Config(ref c) => config_exit(c),
            ScenarioError::Build(_) => EXIT_VALIDATION,
            ScenarioError::Io(_) => EXIT_IO,
        }
    })?;
    println!("{}", metrics.to_json());
    Ok(())
}

fn cmd_bench(config: PathBuf, out_dir: Option<PathBuf>) -> Result<(), u8> {
    let out_dir = resolve_out_dir(out_dir)?;
    let cfg = parse_config(&config).map_err(|e| {
        eprintln!("error: {e}");
        config_exit(&e)
    })?;
    let task = cfg.bench_task();
    let comparison = compare_strategies(&task).map_err(|e| {
        eprintln!("error: {e}");
        EXIT_VALIDATION
    })?;
    std::fs::create_dir_all(&out_dir).map_err(|e| {
        eprintln!("error: {e}");
        EXIT_IO
    })?;
    let csv = bench_csv(&task, &comparison.results);
    std::fs::write(out_dir.join("strategy_bench.csv"), &csv).map_err(|e| {
        eprintln!("error: {e}");
        EXIT_IO
    })?;
    print!("{csv}");
    let names: Vec<&str> = comparison.ranking.iter().map(|s| s.tag()).collect();
    println!("ranking: {}", names.join(" < "));
    Ok(())
}

fn cmd_validate(config: PathBuf) -> Result<(), u8> {
    let cfg = parse_config(&config).map_err(|e| {
        eprintln!("error: {e}");
        config_exit(&e)
    })?;
    println!("{}", cfg.to_effective_json());
    Ok(())
}
