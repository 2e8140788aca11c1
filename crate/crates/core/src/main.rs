use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use semigroup_lab::cli::{self, CliError, EXIT_RUNTIME, OUT_DIR_ENV};

#[derive(Parser)]
#[command(name = "semigroup-lab", version, about = "Multiplier bounds for reversible Markov semigroups")]
struct Args {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a JSON config (or a bundled preset by name).
    Run {
        config: String,
        /// Output directory for the JSON report and CSV table.
        #[arg(long, env = OUT_DIR_ENV, default_value = "out")]
        out: PathBuf,
        /// Worker threads (defaults to all cores).
        #[arg(long)]
        threads: Option<usize>,
    },
    /// List bundled configs.
    ListPresets,
}

fn run(config: &str, out: &Path, threads: Option<usize>) -> Result<i32, CliError> {
    let cfg = cli::load_config(config)?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(k) = threads {
        builder = builder.num_threads(k);
    }
    let pool = builder.build().map_err(|e| CliError::Io(e.to_string()))?;
    let output = pool.install(|| cli::run(cfg, out))?;
    for check in &output.report.checks {
        println!("{:<20} {}", check.kind, if check.pass { "pass" } else { "FAIL" });
    }
    println!("report: {}", output.json_path.display());
    println!("table:  {}", output.csv_path.display());
    Ok(output.exit_code())
}

fn main() -> ExitCode {
    let args = Args::parse();
    let code = match args.command {
        Command::ListPresets => {
            print!("{}", cli::list_presets());
            0
        }
        Command::Run { config, out, threads } => match run(&config, &out, threads) {
            Ok(code) => code,
            Err(e) => {
                eprintln!("error: {e}");
                e.exit_code()
            }
        },
    };
    ExitCode::from(u8::try_from(code).unwrap_or(EXIT_RUNTIME as u8))
}
