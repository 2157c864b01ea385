use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use gdcert_cli::commands::{self, Outcome, Status, Suite};
use gdcert_cli::config::ExperimentConfig;

#[derive(Parser)]
#[command(name = "gdcert", version, about = "Convergence certificates for deep ReLU networks under gradient descent")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct RunArgs {
    /// Experiment configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (overrides GDCERT_OUT_DIR and the config).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum SuiteArg {
    Ntk,
    Lemma1,
    Descent,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate the certificate at initialization.
    Certify(RunArgs),
    /// Train with the per-iteration audit and write the trace.
    Train(RunArgs),
    /// Run a randomized inequality suite.
    Verify {
        #[arg(long, value_enum)]
        suite: SuiteArg,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Certified and converged fractions over an (N, width) grid.
    Sweep(RunArgs),
}

fn load(args: &RunArgs) -> gdcert::Result<(ExperimentConfig, PathBuf)> {
    let text = std::fs::read_to_string(&args.config)
        .map_err(|e| gdcert::Error::Io(format!("{}: {e}", args.config.display())))?;
    let mut cfg = ExperimentConfig::parse(&text)?;
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    let out = commands::resolve_out_dir(args.out.as_deref(), Some(&cfg));
    Ok((cfg, out))
}

fn run(cli: Cli) -> gdcert::Result<Outcome> {
    match cli.command {
        Command::Certify(a) => {
            let (cfg, out) = load(&a)?;
            commands::cmd_certify(&cfg, &out)
        }
        Command::Train(a) => {
            let (cfg, out) = load(&a)?;
            commands::cmd_train(&cfg, &out)
        }
        Command::Sweep(a) => {
            let (cfg, out) = load(&a)?;
            commands::cmd_sweep(&cfg, &out)
        }
        Command::Verify {
            suite,
            trials,
            seed,
            out,
        } => {
            let suite = match suite {
                SuiteArg::Ntk => Suite::Ntk,
                SuiteArg::Lemma1 => Suite::Lemma1,
                SuiteArg::Descent => Suite::Descent,
            };
            let out = commands::resolve_out_dir(out.as_deref(), None);
            commands::cmd_verify(suite, trials, seed, &out)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            // Help and version requests are not errors.
            return if e.use_stderr() {
                ExitCode::from(Status::Usage.code() as u8)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(outcome) => {
            print!("{}", outcome.report);
            ExitCode::from(outcome.status.code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(Status::Usage.code() as u8)
        }
    }
}
