use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use hodge_cli::{run, Overrides, RunConfig, Task};

#[derive(Parser)]
#[command(name = "hodge", version, about = "Conformal Hodge-Laplacian scattering diagnostics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fiber identities, complex exactness, codifferential and Dirac convergence, curvature oracle.
    Verify(Common),
    /// Truncated spectra and the extrapolated essential bottom against the prediction.
    Spectrum(Common),
    /// Deviation integral, sufficient conditions, decomposition, Schatten and wave-operator diagnostics.
    Scatter(Common),
}

#[derive(Args)]
struct Common {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory for the JSON report and CSV files.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Override numerics.seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override numerics.grid.levels.
    #[arg(long)]
    grid_levels: Option<usize>,
    /// Override numerics.tolerance.
    #[arg(long)]
    tolerance: Option<f64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (task, args) = match cli.command {
        Command::Verify(a) => (Task::Verify, a),
        Command::Spectrum(a) => (Task::Spectrum, a),
        Command::Scatter(a) => (Task::Scatter, a),
    };
    let overrides = Overrides { seed: args.seed, grid_levels: args.grid_levels, tolerance: args.tolerance };
    let cfg = RunConfig::load(&args.config).and_then(|mut c| c.apply(overrides).map(|_| c));
    let report = match cfg.and_then(|c| run(task, &c)) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let written = match report.write(&args.out) {
        Ok(w) => w,
        Err(e) => {
            eprintln!("error: cannot write to {}: {e}", args.out.display());
            return ExitCode::from(2);
        }
    };
    // Write errors on stdout (e.g. a closed pipe) do not change the verdict.
    let mut stdout = std::io::stdout().lock();
    for c in &report.checks {
        let status = if c.pass { "PASS" } else { "FAIL" };
        let reason = c.reason.map(|r| format!(" [{}]", serde_json::to_value(r).unwrap().as_str().unwrap_or(""))).unwrap_or_default();
        let _ = writeln!(stdout, "{status} {}{reason}: {}", c.name, c.detail);
    }
    for p in written {
        let _ = writeln!(stdout, "wrote {}", p.display());
    }
    let _ = writeln!(stdout, "run {} {}", report.run_id, if report.pass { "PASS" } else { "FAIL" });
    if report.pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
