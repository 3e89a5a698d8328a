use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use fracext::experiments::{check, default_output, run, ExperimentConfig, Outcome};
use fracext::mesh::{generate, generate_with_dofs, write_mesh, GeometrySpec};

#[derive(Parser)]
#[command(name = "fracext", version, about = "Exterior-value problems for the fractional Laplacian")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write its outputs.
    Run {
        config: PathBuf,
        /// Output directory (overrides the config).
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Concurrent sweep points (overrides the config).
        #[arg(short, long)]
        workers: Option<usize>,
    },
    /// Run an experiment and check its thresholds; exits nonzero on failure.
    Check {
        config: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
        #[arg(short, long)]
        workers: Option<usize>,
    },
    /// Generate a mesh for a named geometry.
    Mesh {
        /// interval, interval_control, disk, annulus, square or mshape.
        geometry: String,
        #[arg(short, long)]
        output: PathBuf,
        /// Target number of nodes.
        #[arg(long, conflicts_with = "h")]
        dofs: Option<usize>,
        /// Target mesh size.
        #[arg(long)]
        h: Option<f64>,
    },
}

fn load(config: &PathBuf, output: Option<PathBuf>, workers: Option<usize>) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::from_file(config).with_context(|| format!("reading {}", config.display()))?;
    if let Some(o) = output {
        cfg.output = Some(o);
    }
    if cfg.output.is_none() {
        cfg.output = Some(default_output(config));
    }
    if let Some(w) = workers {
        cfg.workers = w;
    }
    Ok(cfg)
}

fn print_outcome(outcome: &Outcome) {
    match outcome {
        Outcome::Rates(reports) => {
            for r in reports {
                let n = r.n.map(|n| format!(" n={n}")).unwrap_or_default();
                println!("s={}{n}: slope {:.4} (r^2 {:.4}) over {} rows", r.s, r.slope, r.r_squared, r.rows.len());
                for (p, e) in &r.rows {
                    println!("  {p:>12} {e:.6e}");
                }
            }
        }
        Outcome::Control(runs) => {
            println!("{:>5} {:>8} {:>12} {:>12} {:>12} {:>6} conv", "s", "xi", "|z|", "tracking", "baseline", "iters");
            for r in runs {
                println!(
                    "{:>5} {:>8.0e} {:>12.5e} {:>12.5e} {:>12.5e} {:>6} {}",
                    r.s, r.xi, r.control_norm, r.tracking_error, r.baseline_error, r.iterations, r.converged
                );
            }
        }
    }
}

fn main() -> ExitCode {
    match real_main() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn real_main() -> Result<ExitCode> {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config, output, workers } => {
            let cfg = load(&config, output, workers)?;
            let outcome = run(&cfg)?;
            print_outcome(&outcome);
            if let Some(o) = &cfg.output {
                eprintln!("outputs written to {}", o.display());
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Check { config, output, workers } => {
            let cfg = load(&config, output, workers)?;
            let outcome = run(&cfg)?;
            print_outcome(&outcome);
            let results = check(&cfg, &outcome);
            if results.is_empty() {
                bail!("{} defines no check.* thresholds", config.display());
            }
            for r in &results {
                println!("{} {}: {}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail);
            }
            Ok(if results.iter().all(|r| r.passed) { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
        Command::Mesh { geometry, output, dofs, h } => {
            let spec = GeometrySpec::from_name(&geometry)?;
            let mesh = match (dofs, h) {
                (_, Some(h)) => generate(&spec, h)?,
                (Some(d), None) => generate_with_dofs(&spec, d)?,
                (None, None) => generate_with_dofs(&spec, if spec.dim() == 1 { 500 } else { 3000 })?,
            };
            write_mesh(&output, &mesh)?;
            eprintln!(
                "{}: {} nodes, {} cells, h_max {:.4}, written to {}",
                geometry,
                mesh.num_nodes(),
                mesh.num_cells(),
                mesh.max_diameter(),
                output.display()
            );
            Ok(ExitCode::SUCCESS)
        }
    }
}
