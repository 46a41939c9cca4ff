//! At positive temperature the flow's stationary law is a Gibbs measure:
//! density proportional to exp(EIG(x)/λ) times the reference. This example
//! runs a long single-slot flow on the 1D binary model and compares the
//! empirical particle law against that target via the 1D Wasserstein-1
//! distance (integrated CDF gap).
//!
//! Run with: cargo run --release --example gibbs_fixed_point

use std::sync::Arc;

use boedflows::eig::{Toy1dGridOracle, Toy1dLandscape};
use boedflows::error::Result;
use boedflows::flows::{Algorithm, Flow, FlowConfig, InitSpec, ReferenceMeasure, StateKind};
use boedflows::models::{Model, Toy1d};

fn main() -> Result<()> {
    let model = Toy1d::default();
    let lambda = 0.5;

    let cfg = FlowConfig {
        algorithm: Algorithm::Iid,
        lambda,
        gamma: 0.02,
        n_steps: 20_000,
        n_particles: 500,
        eta: 0.0,
        seed: 42,
        ..FlowConfig::default()
    };
    let oracle = Arc::new(Toy1dGridOracle::default_grid(model.clone()));
    let flow = Flow::new(
        cfg,
        1,
        1,
        model.constraint(),
        ReferenceMeasure::Uniform,
        InitSpec::Domain,
        oracle,
    )?;
    println!(
        "running {} particles for {} steps at λ = {lambda} ...",
        flow.config.n_particles, flow.config.n_steps
    );
    let run = flow.run()?;
    let mut xs: Vec<f64> = match &run.state.kind {
        StateKind::Iid(e) => e.points().map(|p| p[0]).collect(),
        _ => unreachable!(),
    };
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());

    // Gibbs target on the landscape grid (reference = uniform, so the
    // density is exp(EIG/λ) normalised).
    let land = Toy1dLandscape::default_for(&model);
    let weights: Vec<f64> = land.vals.iter().map(|v| (v / lambda).exp()).collect();
    let total: f64 = weights.iter().sum();
    let mut gibbs_cdf = Vec::with_capacity(weights.len());
    let mut acc = 0.0;
    for w in &weights {
        acc += w / total;
        gibbs_cdf.push(acc);
    }

    // W1 = ∫ |F_emp − F_gibbs| dx on the grid.
    let h = land.xs[1] - land.xs[0];
    let n = xs.len() as f64;
    let mut w1 = 0.0;
    let mut seen = 0usize;
    for (x, target) in land.xs.iter().zip(&gibbs_cdf) {
        while seen < xs.len() && xs[seen] <= *x {
            seen += 1;
        }
        w1 += (seen as f64 / n - target).abs() * h;
    }
    println!("W1(empirical, Gibbs) = {w1:.4}");

    // Side-by-side histogram over 14 bins.
    println!("\n{:>14} {:>10} {:>10}", "bin centre", "particles", "target");
    let bins = 14;
    let width = (model.hi - model.lo) / bins as f64;
    for b in 0..bins {
        let lo = model.lo + b as f64 * width;
        let hi = lo + width;
        let emp = xs.iter().filter(|&&x| x >= lo && x < hi).count() as f64 / n;
        let tgt: f64 = land
            .xs
            .iter()
            .zip(&weights)
            .filter(|(x, _)| **x >= lo && **x < hi)
            .map(|(_, w)| w / total)
            .sum();
        println!("{:>14.2} {:>10.3} {:>10.3}", 0.5 * (lo + hi), emp, tgt);
    }
    Ok(())
}
