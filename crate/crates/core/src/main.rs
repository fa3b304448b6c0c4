use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use curvreg::cli::run_scenario;

/// Run one scenario and write its reports.
#[derive(Parser)]
#[command(version, about)]
struct Args {
    /// Scenario file (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Directory receiving the reports.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Worker threads; all cores by default.
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    verbose: bool,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let level = if args.verbose { "debug" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Some(n) = args.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("cannot start {n} threads: {e}");
            return ExitCode::from(2);
        }
    }
    match run_scenario(&args.config, &args.out) {
        Ok(files) => {
            for f in files {
                log::info!("wrote {}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
