use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use deom::hierarchy::ddo_count;
use deom_cli::{fit_bath, parse_config, run, ConfigError, Failure, RunConfig};

#[derive(Parser)]
#[command(name = "deom", version, about = "Dissipaton equation of motion solver for fermionic impurity models")]
struct Cli {
    /// Worker threads (overrides the config's `workers`).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output directory (overrides `[output] dir`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Steady state and requested spectra for a config file.
    Run { config: PathBuf },
    /// Bath decomposition only; writes the mode table.
    FitBath { config: PathBuf },
    /// Number of DDOs for J modes truncated at level L.
    Count {
        #[arg(long = "J")]
        j: usize,
        #[arg(long = "L")]
        l: usize,
    },
}

fn load(path: &PathBuf, out: &Option<PathBuf>) -> Result<RunConfig, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        Failure::Config(ConfigError {
            line: None,
            message: format!("cannot read {}: {e}", path.display()),
        })
    })?;
    let mut cfg = parse_config(&text).map_err(|e| {
        Failure::Config(ConfigError {
            line: e.line,
            message: format!("{}: {e}", path.display()),
        })
    })?;
    if let Some(o) = out {
        cfg.out_dir = o.clone();
    }
    Ok(cfg)
}

fn setup_pool(cli_workers: Option<usize>, cfg: &RunConfig) -> Result<usize, Failure> {
    let n = cli_workers.or(cfg.workers).unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    if n == 0 {
        return Err(Failure::Config(ConfigError {
            line: None,
            message: "--workers must be at least 1".into(),
        }));
    }
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().ok();
    Ok(n)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Count { j, l } => {
            if *j > deom::hierarchy::MAX_MODES {
                Err(Failure::Config(ConfigError {
                    line: None,
                    message: format!("J is limited to {}", deom::hierarchy::MAX_MODES),
                }))
            } else {
                println!("{}", ddo_count(*j, *l));
                Ok(())
            }
        }
        Command::Run { config } | Command::FitBath { config } => (|| {
            let cfg = load(config, &cli.out)?;
            let workers = setup_pool(cli.workers, &cfg)?;
            let path = config.display().to_string();
            let summary = match &cli.command {
                Command::Run { .. } => run(&cfg, &path, workers)?,
                _ => fit_bath(&cfg, &path, workers)?,
            };
            for f in &summary.files {
                println!("{}", f.display());
            }
            println!("{}", summary.manifest.display());
            Ok(())
        })(),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
