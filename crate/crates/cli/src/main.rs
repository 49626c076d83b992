use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use pmdrift_cli::commands::{self, CliError};

/// Porous-medium flow with drift: simulate, verify estimates, emit gallery configs.
///
/// Relative output paths are resolved against $PMDRIFT_OUTPUT_ROOT (default: the
/// working directory). Exit codes: 0 pass, 1 verifier failure, 2 usage or config
/// error, 3 numerical abort.
#[derive(Parser)]
#[command(name = "pmdrift", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a config and write snapshots, manifest and config to its output directory.
    Simulate {
        /// Config file, or `-` for stdin.
        #[arg(default_value = "-")]
        config: PathBuf,
        /// Write here instead of the config's output directory (relative paths resolve like it).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run one verifier on a run directory; exits 0 iff it passes.
    Verify {
        /// pressure_residual, aronson_benilan or mass.
        check: String,
        run_dir: PathBuf,
        /// Overrides the tolerance from the run's config.
        #[arg(long)]
        tolerance: Option<f64>,
    },
    /// Write the config and expectations of a named scenario; the config also goes to stdout.
    Gallery {
        name: String,
        /// Grid spacing (the scenario's own by default).
        #[arg(long)]
        dx: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Summarize the reports of a run and write contour polylines.
    Report { run_dir: PathBuf },
    /// Print a config with defaults filled in, or every error in it.
    Check {
        #[arg(default_value = "-")]
        config: PathBuf,
    },
}

fn execute(cmd: Command) -> Result<bool, CliError> {
    match cmd {
        Command::Simulate { config, out } => {
            let text = commands::read_config_text(&config)?;
            let dir = commands::simulate(&text, out.as_deref())?;
            println!("{}", dir.display());
            Ok(true)
        }
        Command::Verify { check, run_dir, tolerance } => {
            let report = commands::verify(&check, &run_dir, tolerance)?;
            print!("{}", report.to_record());
            Ok(report.passed())
        }
        Command::Gallery { name, dx, out } => {
            let (text, dir) = commands::gallery(&name, dx, out.as_deref())?;
            print!("{text}");
            eprintln!("wrote {}", dir.display());
            Ok(true)
        }
        Command::Report { run_dir } => {
            let (summary, n) = commands::report(&run_dir)?;
            println!("{} ({n} reports)", summary.display());
            Ok(true)
        }
        Command::Check { config } => {
            let text = commands::read_config_text(&config)?;
            print!("{}", pmdrift_cli::parse_config(&text)?.to_text());
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match execute(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
