use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use qsdlab_cli::error::{CliError, CliResult};
use qsdlab_cli::{family_listing, plot, run_spec_file, selftest, with_threads, RunOptions};

#[derive(Parser, Debug)]
#[command(name = "qsdlab", version, about = "Conditioned drifted Brownian motion experiments")]
struct Cli {
    /// Output directory.
    #[arg(long, global = true, default_value = "qsdlab-out")]
    out: PathBuf,

    /// Seed for every Monte Carlo run, overriding the spec.
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[arg(long, global = true, env = "QSDLAB_THREADS")]
    threads: Option<usize>,

    /// Relative quadrature tolerance.
    #[arg(long, global = true)]
    tolerance: Option<f64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run every experiment of a spec file.
    Run { spec: PathBuf },
    /// Print the initial-law families and their parameter syntax.
    ListFamilies,
    /// Run the invariant suite and write selftest.csv.
    Selftest,
    /// Draw an SVG line chart of a CSV.
    Plot {
        csv: PathBuf,
        /// Output file; defaults to the CSV path with an .svg extension.
        #[arg(short, long)]
        output: Option<PathBuf>,
        #[arg(long)]
        log_y: bool,
    },
}

fn execute(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Run { spec } => {
            let opts = RunOptions {
                out: cli.out.clone(),
                seed: cli.seed,
                tolerance: cli.tolerance,
            };
            let manifest = with_threads(cli.threads, || run_spec_file(&spec, &opts))??;
            for e in &manifest.entries {
                println!("{}: complete", e.name);
            }
            println!("wrote {}", cli.out.display());
            Ok(())
        }
        Command::ListFamilies => {
            for (name, syntax) in family_listing() {
                println!("{name:<12} {syntax}");
            }
            Ok(())
        }
        Command::Selftest => {
            let seed = cli.seed.unwrap_or(0);
            let out = cli.out.clone();
            let checks = with_threads(cli.threads, || selftest::run(&out, seed))??;
            let mut failed = 0;
            for c in &checks {
                let verdict = if c.pass() { "ok" } else { "FAIL" };
                println!("{verdict:<4} {:<36} {:e} (<= {:e})", c.name, c.value, c.threshold);
                failed += usize::from(!c.pass());
            }
            if failed > 0 {
                return Err(CliError::SelftestFailed {
                    failed,
                    total: checks.len(),
                });
            }
            Ok(())
        }
        Command::Plot { csv, output, log_y } => {
            let path = plot::plot_csv(&csv, output.as_deref(), log_y)?;
            println!("wrote {}", path.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("qsdlab: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
