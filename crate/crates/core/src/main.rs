use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use gravflow::cli::{self, CliError, ContextSelection, Overrides, RunConfig, SchemeSelection, EXIT_DOMAIN, EXIT_OK};

/// Gravity-model analysis of citation flows between territories.
#[derive(Debug, Parser)]
#[command(name = "gravflow", version)]
struct Args {
    /// Log more to stderr (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check the corpus and print one violation per line.
    Validate {
        /// JSON run config; input paths default to the standard file names.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Assign, aggregate, fit and write the report tables.
    Run {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum)]
        scheme: Option<SchemeSelection>,
        #[arg(long, value_enum)]
        context: Option<ContextSelection>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads; defaults to the available parallelism.
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Generate a synthetic corpus plus manifest.
    Simulate {
        /// JSON synth spec; built-in defaults when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "synthetic")]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn execute(command: Command) -> Result<i32, CliError> {
    match command {
        Command::Validate { config } => {
            let config = RunConfig::load(config.as_deref())?.apply(&Overrides::default())?;
            let violations = cli::cmd_validate(&config)?;
            for v in &violations {
                println!("{v}");
            }
            Ok(if violations.is_empty() { EXIT_OK } else { EXIT_DOMAIN })
        }
        Command::Run {
            config,
            scheme,
            context,
            out,
            jobs,
        } => {
            let config = RunConfig::load(config.as_deref())?.apply(&Overrides { scheme, context, out })?;
            for line in cli::cmd_run(&config, jobs)? {
                println!("{line}");
            }
            Ok(EXIT_OK)
        }
        Command::Simulate { config, out, seed } => {
            cli::cmd_simulate(config.as_deref(), &out, seed)?;
            Ok(EXIT_OK)
        }
    }
}

fn main() -> ExitCode {
    let args = Args::parse();
    let level = match args.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).format_timestamp(None).init();
    let code = match execute(args.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    ExitCode::from(code as u8)
}
