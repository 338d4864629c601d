use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tamed_sde::SchemeVariant;
use tamed_sde_cli::config::parse_levels;
use tamed_sde_cli::{converge, moments, simulate, verify, CliError, Format, Overrides, RunConfig};

#[derive(Parser)]
#[command(
    name = "tamed-sde",
    version,
    about = "Randomized tamed Euler scheme: studies, paths and checks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Strong-error study over a ladder of step sizes.
    Converge(Common),
    /// One trajectory dumped at grid resolution.
    Simulate(Common),
    /// Parameter constraints, taming bounds and growth probes.
    Verify(Common),
    /// Moment bounds across step counts.
    Moments(Common),
}

#[derive(Args)]
struct Common {
    /// TOML configuration file.
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    paths: Option<usize>,
    /// Step counts `64,128` or exponent range `6..11`.
    #[arg(long)]
    levels: Option<String>,
    /// Reference step count.
    #[arg(long = "ref")]
    reference_n: Option<usize>,
    #[arg(long, value_parser = |s: &str| s.parse::<SchemeVariant>().map_err(|e| e.to_string()))]
    variant: Option<SchemeVariant>,
    #[arg(long, value_enum)]
    format: Option<Format>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
}

impl Common {
    fn load(&self) -> Result<RunConfig, CliError> {
        let levels = self
            .levels
            .as_deref()
            .map(parse_levels)
            .transpose()
            .map_err(CliError::Config)?;
        let mut cfg = RunConfig::load(&self.config)?;
        cfg.apply(&Overrides {
            seed: self.seed,
            paths: self.paths,
            levels,
            reference_n: self.reference_n,
            variant: self.variant,
            format: self.format,
            out: self.out.clone(),
            workers: self.workers,
        });
        Ok(cfg)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (common, run): (&Common, fn(&RunConfig) -> Result<_, CliError>) = match &cli.command {
        Command::Converge(c) => (c, converge),
        Command::Simulate(c) => (c, simulate),
        Command::Verify(c) => (c, verify),
        Command::Moments(c) => (c, moments),
    };
    match common.load().and_then(|cfg| run(&cfg)) {
        Ok(outcome) => {
            print!("{}", outcome.summary);
            for f in &outcome.files {
                println!("wrote {}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
