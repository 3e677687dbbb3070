mod report;
mod scenario;
mod sweep;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use scenario::{Mode, Scenario};

/// Token bucket filter: analytic model, simulator and comparisons.
#[derive(Debug, Parser)]
#[command(name = "tbf", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one scenario and write its report and tables.
    Run {
        scenario: PathBuf,
        /// Output directory (default: scenario `output.dir`, else `out`).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum)]
        mode: Option<Mode>,
        #[arg(long)]
        seed: Option<u64>,
        /// Simulation horizon in replenishment periods.
        #[arg(long)]
        horizon: Option<u64>,
        #[arg(long)]
        batches: Option<usize>,
        /// Stationary residual tolerance.
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Run a scenario over a parameter grid.
    Sweep {
        scenario: PathBuf,
        #[arg(long)]
        grid: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn out_dir(flag: Option<PathBuf>, scenario: &Scenario) -> PathBuf {
    flag.or_else(|| scenario.output.dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"))
}

struct Overrides {
    mode: Option<Mode>,
    seed: Option<u64>,
    horizon: Option<u64>,
    batches: Option<usize>,
    tol: Option<f64>,
}

fn run(path: &Path, out: Option<PathBuf>, o: Overrides) -> anyhow::Result<ExitCode> {
    let mut scenario = Scenario::load(path)?;
    if let Some(m) = o.mode {
        scenario.mode = m;
    }
    if let Some(s) = o.seed {
        scenario.simulation.seed = s;
    }
    if let Some(h) = o.horizon {
        scenario.simulation.horizon = h;
    }
    if let Some(b) = o.batches {
        scenario.simulation.batches = b;
    }
    if let Some(t) = o.tol {
        scenario.solver.residual_tol = t;
    }
    scenario.resolve()?;

    let dir = out_dir(out, &scenario);
    let report = report::run(&scenario)?;
    report::write(&report, &dir)?;
    let d = &report.diagnostics;
    match (d.states, d.iterations, d.residual) {
        (Some(n), Some(it), Some(r)) => println!(
            "{}: N={n} iterations={it} residual={r:.3e} ({:.2}s)",
            scenario.mode.name(),
            d.wall_time_s
        ),
        _ => println!("{}: done ({:.2}s)", scenario.mode.name(), d.wall_time_s),
    }
    if let Some(c) = &report.comparison {
        println!("occupancy TV distance {:.6}", c.occupancy_tv);
        for item in &c.disagreements {
            println!("outside confidence band: {item}");
        }
    }
    println!("wrote {}", dir.display());
    Ok(ExitCode::SUCCESS)
}

fn sweep(path: &Path, grid: &Path, out: Option<PathBuf>) -> anyhow::Result<ExitCode> {
    let scenario = Scenario::load(path)?;
    let grid = sweep::Grid::load(grid)?;
    let dir = out_dir(out, &scenario);
    let index = sweep::run(&scenario, &grid, &dir)?;
    for e in index.entries.iter().filter(|e| e.error.is_some()) {
        eprintln!(
            "point {} failed: {}",
            e.index,
            e.error.as_deref().unwrap_or_default()
        );
    }
    println!(
        "{} points, {} failed; index at {}",
        index.total,
        index.failed,
        dir.join("index.json").display()
    );
    Ok(if index.failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            scenario,
            out,
            mode,
            seed,
            horizon,
            batches,
            tol,
        } => run(
            &scenario,
            out,
            Overrides {
                mode,
                seed,
                horizon,
                batches,
                tol,
            },
        ),
        Command::Sweep {
            scenario,
            grid,
            out,
        } => sweep(&scenario, &grid, out),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
