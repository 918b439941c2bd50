use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fic_cli::pipeline;
use fic_cli::{CliError, Overrides, RunConfig};

/// Focused information criterion model search.
#[derive(Parser)]
#[command(name = "fic", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit and rank every candidate, write table, results, plot and log.
    Run(Common),
    /// List the candidate models without fitting.
    Enumerate(Common),
    /// Sample the post-selection limit law and write the draws.
    Simulate(Common),
}

#[derive(Args)]
struct Common {
    /// TOML run configuration.
    config: PathBuf,
    /// Output directory, replacing `[output] dir`.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// `local` or `fixed`.
    #[arg(long)]
    framework: Option<String>,
    /// `fic_adj`, `fic_u`, `afic_adj` or `afic_u`.
    #[arg(long)]
    criterion: Option<String>,
    /// Score candidates on one thread.
    #[arg(long)]
    sequential: bool,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    draws: Option<usize>,
}

impl Common {
    fn load(&self) -> Result<RunConfig, CliError> {
        let mut cfg = RunConfig::load(&self.config)?;
        Overrides {
            output_dir: self.out_dir.clone(),
            framework: self.framework.clone(),
            criterion: self.criterion.clone(),
            sequential: self.sequential,
            seed: self.seed,
            draws: self.draws,
        }
        .apply(&mut cfg);
        Ok(cfg)
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run(c) => {
            let (out, paths) = pipeline::run(&c.load()?)?;
            let sel = out.result.selected();
            println!("selected {} {}", sel.id, sel.spec);
            for p in paths {
                println!("wrote {}", p.display());
            }
        }
        Command::Enumerate(c) => print!("{}", pipeline::enumerate(&c.load()?)?),
        Command::Simulate(c) => {
            let (sim, paths) = pipeline::simulate_to_disk(&c.load()?)?;
            print!("{}", sim.summary);
            for p in paths {
                println!("wrote {}", p.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("FIC_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if e.use_stderr() => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("usage error");
            eprintln!("{}", CliError::Config(first.trim_start_matches("error: ").to_string()).line());
            return ExitCode::from(1);
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.line());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
