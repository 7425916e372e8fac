use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use entropic_pricer_cli::{
    cmd_check_integrand, cmd_dual, cmd_price, cmd_selfcheck, cmd_track, CliError, Outcome, RunConfig, RunOptions,
};

#[derive(Debug, Parser)]
#[command(
    name = "entropic-pricer",
    version,
    about = "Convex pricing of bounded claims by quadratic BSDEs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Run configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Overrides solver.seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory (default: output.dir from the config, else the
    /// working directory).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Worker threads (default: output.threads, else all cores).
    #[arg(long, global = true, env = "ENTROPIC_PRICER_THREADS")]
    threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Price the configured claim.
    Price,
    /// Duality gaps over the measure scan.
    Dual,
    /// Tracking-error simulation for the configured hedges.
    Track,
    /// Growth conditions of the configured integrand.
    CheckIntegrand,
    /// Built-in oracle battery; needs no config.
    Selfcheck,
}

fn load(path: Option<&PathBuf>) -> Result<RunConfig, CliError> {
    let path = path.ok_or_else(|| CliError::Config("--config is required for this command".into()))?;
    RunConfig::load(path)
}

fn init_threads(n: Option<usize>) -> Result<(), CliError> {
    if let Some(n) = n {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("cannot start {n} threads: {e}")))?;
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<Outcome, CliError> {
    let opts = RunOptions {
        out_dir: cli.out.clone(),
        seed: cli.seed,
    };
    if let Command::Selfcheck = cli.command {
        init_threads(cli.threads)?;
        return Ok(cmd_selfcheck(&opts)?.0);
    }
    let cfg = load(cli.config.as_ref())?;
    init_threads(cli.threads.or(cfg.output.threads))?;
    match cli.command {
        Command::Price => cmd_price(&cfg, &opts),
        Command::Dual => cmd_dual(&cfg, &opts),
        Command::Track => cmd_track(&cfg, &opts),
        Command::CheckIntegrand => cmd_check_integrand(&cfg, &opts),
        Command::Selfcheck => unreachable!(),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(outcome) => {
            println!("{}", outcome.summary.trim_end());
            for f in &outcome.files {
                println!("wrote {}", f.display());
            }
            if !outcome.passed {
                eprintln!("contract violated");
            }
            ExitCode::from(outcome.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
