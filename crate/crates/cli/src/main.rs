use clap::Parser;
use std::path::PathBuf;
use std::process::ExitCode;

/// Run one mean-field SDE experiment described by a TOML document.
#[derive(Debug, Parser)]
#[command(name = "mvlab", version)]
struct Args {
    /// Experiment document.
    #[arg(long)]
    config: PathBuf,
    /// Directory for report.json and CSV curves (overrides `output.dir`).
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Worker threads; defaults to all cores. Results do not depend on it.
    #[arg(long)]
    threads: Option<usize>,
    /// Overrides `sim.seed`.
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    if let Some(n) = args.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot start {n} threads: {e}");
            return ExitCode::from(3);
        }
    }
    match mvlab_cli::run_file(&args.config, args.output_dir.as_deref(), args.seed) {
        Ok(outcome) => {
            println!("{}", outcome.summary_line());
            ExitCode::from(outcome.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
