//! Observation-time design for a FitzHugh-Nagumo neuron: when should one
//! sample the voltage trace to learn the excitability parameters?
//!
//! The likelihood rides on an integrated ODE, so this example keeps the
//! batch small and the budget low; it still shows the flow beating evenly
//! spaced times by concentrating samples around the informative spikes.
//!
//! Run with: cargo run --release --example fhn_benchmark

use std::collections::HashMap;

use boedflows::baselines::design_uniform;
use boedflows::constraint::ConstraintSpec;
use boedflows::eig::NmcBudget;
use boedflows::error::Result;
use boedflows::extract::{extract_best_of_n, CandidateSet};
use boedflows::flows::{Algorithm, Flow, FlowConfig, InitSpec, ReferenceMeasure};
use boedflows::models::build_model;
use boedflows::report::scoring_oracle;
use boedflows::stream::{substream, Purpose};

fn main() -> Result<()> {
    env_logger::init();
    let model = build_model("fhn", &HashMap::new())?;
    let m = 10;
    let t_max = match model.constraint() {
        ConstraintSpec::OrderedMinGap { t_max, .. } => t_max,
        _ => unreachable!("fhn uses ordered sampling times"),
    };

    let cfg = FlowConfig {
        algorithm: Algorithm::Iid,
        lambda: 0.05,
        gamma: 0.01,
        n_steps: 250,
        n_particles: 20,
        k_tuples: 1,
        eta: 0.0,
        n_outer: 20,
        n_inner: 50,
        seed: 5,
        ..FlowConfig::default()
    };
    println!("flow on {m} observation times in [0, {t_max}] ...");
    let flow = Flow::for_model(cfg, &model, m, ReferenceMeasure::Uniform, InitSpec::Domain)?;
    let run = flow.run()?;

    let cands = CandidateSet::from_flow_run(&flow, &run, 80)?;
    let budget = NmcBudget::new(200, 400);
    let high = scoring_oracle(&model, m, budget)?;
    let (best, est) = extract_best_of_n(&cands, flow.oracle.as_ref(), high.as_ref(), 8, 5)?;

    let uniform = design_uniform(m, t_max)?;
    let mut rng = substream(5, 0, 0, Purpose::Report);
    let uni_est = high.value(&uniform, &mut rng)?;

    let times: Vec<String> = best.points().map(|p| format!("{:.2}", p[0])).collect();
    println!("\nflow design:        [{}]", times.join(", "));
    println!("flow EIG:           {:.4} ± {:.4}", est.value, est.std_error);
    println!("evenly spaced EIG:  {:.4} ± {:.4}", uni_est.value, uni_est.std_error);
    Ok(())
}
