//! Choose 15 blood-sampling times for a one-compartment pharmacokinetic
//! model, comparing the per-slot mean-field flow against evenly spaced
//! times. Gradients use the low-fidelity doubly-stochastic nested Monte
//! Carlo estimator; final designs are rescored at a higher budget.
//!
//! This is a desk-scale run (a few minutes); raise n_steps and the scoring
//! replications for benchmark-quality numbers.
//!
//! Run with: cargo run --release --example pk_benchmark

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
    let model = build_model("pk", &HashMap::new())?;
    let m = model.default_m();
    let t_max = match model.constraint() {
        ConstraintSpec::OrderedMinGap { t_max, .. } => t_max,
        _ => unreachable!("pk uses ordered sampling times"),
    };

    let cfg = FlowConfig {
        algorithm: Algorithm::Mf,
        lambda: 0.05,
        gamma: 0.01,
        n_steps: 300,
        n_particles: 20,
        k_tuples: 1,
        n_outer: 20,
        n_inner: 50,
        seed: 1,
        ..FlowConfig::default()
    };
    println!("mean-field flow on {} sampling times in [0, {t_max}] ...", m);
    let flow = Flow::for_model(cfg, &model, m, ReferenceMeasure::Uniform, InitSpec::Domain)?;
    let run = flow.run()?;

    let cands = CandidateSet::from_flow_run(&flow, &run, 100)?;
    let high = scoring_oracle(&model, m, NmcBudget::SCORING)?;
    let (best, est) = extract_best_of_n(&cands, flow.oracle.as_ref(), high.as_ref(), 10, 1)?;

    let uniform = design_uniform(m, t_max)?;
    let mut rng = substream(1, 0, 0, Purpose::Report);
    let uni_est = high.value(&uniform, &mut rng)?;

    let times: Vec<String> = best.points().map(|p| format!("{:.2}", p[0])).collect();
    println!("\nflow design (h):    [{}]", times.join(", "));
    println!("flow EIG:           {:.4} ± {:.4}", est.value, est.std_error);
    println!("evenly spaced EIG:  {:.4} ± {:.4}", uni_est.value, uni_est.std_error);
    println!("improvement:        {:+.4} nats", est.value - uni_est.value);
    Ok(())
}
