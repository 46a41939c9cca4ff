//! Local ascent gets stuck on a multimodal information-gain surface; an
//! interacting-particle flow with noise does not.
//!
//! Both optimisers see the same exact (quadrature) criterion for the 1D
//! binary model. Plain gradient ascent is restarted from many uniform
//! starts; the particle flow is run once. We count how often each lands in
//! the basin of the global maximiser.
//!
//! Run with: cargo run --release --example escape_multimodal

use std::sync::Arc;

use boedflows::design::DesignBatch;
use boedflows::eig::{EigOracle, Toy1dGridOracle, Toy1dLandscape};
use boedflows::error::Result;
use boedflows::flows::{Algorithm, Flow, FlowConfig, InitSpec, ReferenceMeasure, StateKind};
use boedflows::models::{Model, Toy1d};
use boedflows::stream::{substream, Purpose};
use rand::Rng;

fn main() -> Result<()> {
    let model = Toy1d::default();
    let land = Toy1dLandscape::default_for(&model);
    let (argmax, _) = land
        .xs
        .iter()
        .zip(&land.vals)
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .map(|(x, v)| (*x, *v))
        .unwrap();
    let near_best = |x: f64| (x - argmax).abs() < 0.5;

    let oracle = Arc::new(Toy1dGridOracle::default_grid(model.clone()));

    // --- plain gradient ascent from 200 uniform restarts -----------------
    let restarts = 200;
    let mut ascent_hits = 0;
    let mut rng = substream(7, 0, 0, Purpose::Search);
    for _ in 0..restarts {
        let mut x: f64 = rng.gen_range(model.lo..model.hi);
        for step in 0..2000 {
            let mut r = substream(7, 1, step, Purpose::OracleCall);
            let g = oracle.grad(&DesignBatch::from_points(&[vec![x]])?, &mut r)?;
            x = (x + 0.05 * g[0]).clamp(model.lo, model.hi);
        }
        if near_best(x) {
            ascent_hits += 1;
        }
    }

    // --- one particle flow ------------------------------------------------
    let cfg = FlowConfig {
        algorithm: Algorithm::Iid,
        lambda: 0.05,
        gamma: 0.05,
        n_steps: 3000,
        n_particles: 64,
        eta: 0.0,
        seed: 7,
        ..FlowConfig::default()
    };
    let flow = Flow::new(
        cfg,
        1,
        1,
        model.constraint(),
        ReferenceMeasure::Uniform,
        InitSpec::Domain,
        oracle,
    )?;
    let run = flow.run()?;
    let flow_hits = match &run.state.kind {
        StateKind::Iid(e) => e.points().filter(|p| near_best(p[0])).count(),
        _ => unreachable!(),
    };
    let n = flow.config.n_particles;

    println!("global maximiser: x = {argmax:.3} (basin = ±0.5)");
    println!(
        "gradient ascent:  {ascent_hits}/{restarts} restarts reach the basin ({:.0}%)",
        100.0 * ascent_hits as f64 / restarts as f64
    );
    println!(
        "particle flow:    {flow_hits}/{n} particles end in the basin ({:.0}%)",
        100.0 * flow_hits as f64 / n as f64
    );
    Ok(())
}
