use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use selfsel_cli::{cmd_bench, cmd_diagnose, cmd_estimate, cmd_simulate, CliError, Context, Preset, RunConfig};

#[derive(Parser)]
#[command(name = "selfsel", version, about = "Self-selection regression and coarse mean estimation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a dataset from the configured model.
    Simulate(Common),
    /// Fit the configured model and write result.json.
    Estimate(Common),
    /// Run the checks and exit 3 if any fails.
    Diagnose(Common),
    /// Time stochastic-gradient evaluations.
    Bench {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 100_000)]
        steps: usize,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the seed in the config file.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write trace.csv next to the result.
    #[arg(long)]
    trace: bool,
    #[arg(long, default_value_t = 100)]
    trace_every: usize,
    #[arg(long, value_enum)]
    preset: Option<Preset>,
}

impl Common {
    fn context(&self) -> Result<Context, CliError> {
        let mut cfg = RunConfig::load(&self.config)?;
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(p) = self.preset {
            cfg.preset = p;
        }
        Context::new(cfg, self.out.clone(), self.trace, self.trace_every)
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate(c) => {
            let path = cmd_simulate(&c.context()?)?;
            println!("{}", path.display());
        }
        Command::Estimate(c) => {
            let ctx = c.context()?;
            let r = cmd_estimate(&ctx)?;
            println!("error {:.6} -> {}", r.error(), ctx.out.join("result.json").display());
        }
        Command::Diagnose(c) => {
            cmd_diagnose(&c.context()?)?;
        }
        Command::Bench { common, steps } => {
            let b = cmd_bench(&common.context()?, steps)?;
            println!("{:.0} steps/s", b.steps_per_second);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("selfsel: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
