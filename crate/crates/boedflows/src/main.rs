//! Command-line front end: `run` a full experiment config, `score` a saved
//! design at a stated fidelity, or dump the 1D toy `landscape` curve.

use std::collections::HashMap;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand};
use serde::Deserialize;

use boedflows::config::ExperimentConfig;
use boedflows::constraint::ConstraintSpec;
use boedflows::design::DesignBatch;
use boedflows::eig::{EigOracle, NmcBudget, NmcOracle};
use boedflows::error::{Error, Result};
use boedflows::models::{build_model, Model};
use boedflows::report::{run_experiment, scoring_oracle};
use boedflows::stream::{substream, Purpose};

#[derive(Parser)]
#[command(
    name = "boedflows",
    about = "Batch experimental design by entropy-regularised particle gradient flows",
    version
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run every (method, m, seed) cell of a flat key=value config file and
    /// write report.csv, designs.json, trajectories and plot data.
    Run {
        /// Path to the config file.
        config: PathBuf,
        /// Override a config key, e.g. --set seeds=2 (repeatable; applied
        /// after the file, so later values win).
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        /// Override the output directory.
        #[arg(long)]
        out: Option<String>,
    },
    /// Rescore a saved design (JSON array of coordinate arrays, optionally
    /// wrapped in an object with a `constraint` field).
    Score {
        /// Path to the design JSON file.
        design: PathBuf,
        /// Benchmark model name (toy1d|sensor2d|torus|pk|fhn).
        #[arg(long)]
        model: String,
        /// Outer Monte Carlo sample count.
        #[arg(long, default_value_t = NmcBudget::SCORING.n_outer)]
        n_outer: usize,
        /// Inner Monte Carlo sample count.
        #[arg(long, default_value_t = NmcBudget::SCORING.n_inner)]
        n_inner: usize,
        /// Use the closed-form criterion instead of Monte Carlo (circular
        /// model, or the 1D toy at m = 1).
        #[arg(long)]
        exact: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Repair an infeasible design instead of rejecting it.
        #[arg(long)]
        repair: bool,
    },
    /// Emit the quadrature EIG curve of the 1D toy model as CSV.
    Landscape {
        #[arg(long, default_value = "toy1d")]
        model: String,
        /// Number of grid points.
        #[arg(long, default_value_t = 200)]
        grid: usize,
        /// Write to a file instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match real_main() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn real_main() -> Result<ExitCode> {
    match Cli::parse().cmd {
        Cmd::Run { config, set, out } => cmd_run(&config, &set, out),
        Cmd::Score {
            design,
            model,
            n_outer,
            n_inner,
            exact,
            seed,
            repair,
        } => cmd_score(&design, &model, n_outer, n_inner, exact, seed, repair),
        Cmd::Landscape { model, grid, out } => cmd_landscape(&model, grid, out),
    }
}

fn cmd_run(config: &PathBuf, set: &[String], out: Option<String>) -> Result<ExitCode> {
    let mut overrides: Vec<(String, String)> = Vec::with_capacity(set.len() + 1);
    for entry in set {
        let (k, v) = entry.split_once('=').ok_or_else(|| Error::Parse {
            key: entry.clone(),
            reason: "--set expects KEY=VALUE".into(),
        })?;
        overrides.push((k.trim().to_string(), v.trim().to_string()));
    }
    if let Some(dir) = out {
        overrides.push(("out_dir".into(), dir));
    }
    let cfg = ExperimentConfig::load(config, &overrides)?;
    let report = run_experiment(&cfg)?;
    for r in &report.rows {
        if r.is_ok() {
            println!(
                "{:<20} m={:<3} seed={:<3} EIG = {:.4} ± {:.4}  ({} iters, {:.2}s)",
                r.method, r.m, r.seed, r.eig, r.se, r.iterations, r.wallclock_s
            );
        } else {
            println!("{:<20} m={:<3} seed={:<3} FAILED: {}", r.method, r.m, r.seed, r.status);
        }
    }
    for a in &report.aggregates {
        println!(
            "{:<20} m={:<3} over {} seeds: mean EIG = {:.4} ± {:.4}",
            a.method, a.m, a.n_seeds, a.mean_eig, a.se_eig
        );
    }
    println!("outputs written to {}", cfg.out_dir);
    Ok(if report.all_failed() {
        ExitCode::from(1)
    } else {
        ExitCode::SUCCESS
    })
}

/// A design file: either a bare JSON array of coordinate arrays, or an
/// object with `design` plus an optional `constraint` that overrides the
/// model's own.
#[derive(Deserialize)]
#[serde(untagged)]
enum DesignFile {
    Bare(Vec<Vec<f64>>),
    Wrapped {
        design: Vec<Vec<f64>>,
        constraint: Option<ConstraintSpec>,
    },
}

fn cmd_score(
    path: &PathBuf,
    model_name: &str,
    n_outer: usize,
    n_inner: usize,
    exact: bool,
    seed: u64,
    repair: bool,
) -> Result<ExitCode> {
    let model: Arc<dyn Model> = build_model(model_name, &HashMap::new())?;
    let text = std::fs::read_to_string(path)?;
    let parsed: DesignFile = serde_json::from_str(&text)?;
    let (points, constraint) = match parsed {
        DesignFile::Bare(points) => (points, model.constraint()),
        DesignFile::Wrapped { design, constraint } => {
            (design, constraint.unwrap_or_else(|| model.constraint()))
        }
    };
    let mut batch = DesignBatch::from_points(&points)?;
    if batch.dim() != model.design_dim() {
        return Err(Error::Config(format!(
            "design has dimension {} but model {model_name} expects {}",
            batch.dim(),
            model.design_dim()
        )));
    }
    if !constraint.is_feasible(&batch) {
        if repair {
            constraint.apply_batch(&mut batch);
        } else {
            return Err(Error::Config(
                "design is infeasible; rerun with --repair to project it onto the constraint"
                    .into(),
            ));
        }
    }

    let oracle: Arc<dyn EigOracle> = if exact {
        let o = scoring_oracle(&model, batch.m(), NmcBudget::new(n_outer, n_inner))?;
        if !matches!(
            o.mode(),
            boedflows::eig::EigMode::Exact | boedflows::eig::EigMode::Grid
        ) {
            return Err(Error::Config(format!(
                "--exact: no closed form or quadrature grid for model {model_name} at m = {}",
                batch.m()
            )));
        }
        o
    } else {
        Arc::new(NmcOracle::fresh(
            model.clone(),
            NmcBudget::new(n_outer, n_inner),
        )?)
    };
    let mut rng = substream(seed, 0, 0, Purpose::Report);
    let est = oracle.value(&batch, &mut rng)?;
    println!("value = {}", est.value);
    println!("se = {}", est.std_error);
    Ok(ExitCode::SUCCESS)
}

fn cmd_landscape(model_name: &str, grid: usize, out: Option<PathBuf>) -> Result<ExitCode> {
    if model_name != "toy1d" {
        return Err(Error::Config(format!(
            "landscape is defined for the 1D toy model only, got `{model_name}`"
        )));
    }
    if grid < 3 {
        return Err(Error::Config("landscape needs at least 3 grid points".into()));
    }
    let toy = boedflows::models::Toy1d::default();
    let landscape = boedflows::eig::Toy1dLandscape::compute(&toy, grid, 50);
    let mut lines = String::from("x,eig\n");
    for (x, v) in landscape.xs.iter().zip(&landscape.vals) {
        lines.push_str(&format!("{x},{v}\n"));
    }
    match out {
        Some(path) => std::fs::write(path, lines)?,
        None => print!("{lines}"),
    }
    Ok(ExitCode::SUCCESS)
}
