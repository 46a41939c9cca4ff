//! Stochastic gradient ascent on a single design with Adam updates and a
//! per-step feasibility repair. Iterates are logged so the caller can feed
//! them to best-of-n extraction.

use crate::constraint::ConstraintSpec;
use crate::design::DesignBatch;
use crate::eig::EigOracle;
use crate::error::{Error, Result};
use crate::stream::{substream, Purpose};

/// Adam moment/step-size settings.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub gamma: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            gamma: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0) || !(self.eps > 0.0) {
            return Err(Error::Config("Adam needs γ > 0 and ε > 0".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Config("Adam moment decays must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Run `n_steps` of Adam *ascent* from `init`, repairing feasibility after
/// every update. Returns the final iterate together with the full iterate
/// log (including the start, excluding nothing). A non-finite gradient
/// aborts with the step index in the error.
pub fn adam_ascent(
    oracle: &dyn EigOracle,
    init: DesignBatch,
    n_steps: usize,
    cfg: &AdamConfig,
    constraint: &ConstraintSpec,
    seed: u64,
) -> Result<(DesignBatch, Vec<DesignBatch>)> {
    cfg.validate()?;
    let mut batch = init;
    constraint.apply_batch(&mut batch);
    let dim = batch.coords().len();
    let mut m1 = vec![0.0; dim];
    let mut m2 = vec![0.0; dim];
    let mut log = Vec::with_capacity(n_steps + 1);
    log.push(batch.clone());

    for step in 1..=n_steps {
        let mut rng = substream(seed, 0, step as u64, Purpose::OracleCall);
        let grad = oracle.grad(&batch, &mut rng)?;
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite(format!(
                "gradient ascent aborted: non-finite gradient at step {step}"
            )));
        }
        let bc1 = 1.0 - cfg.beta1.powi(step as i32);
        let bc2 = 1.0 - cfg.beta2.powi(step as i32);
        for (k, g) in grad.iter().enumerate() {
            m1[k] = cfg.beta1 * m1[k] + (1.0 - cfg.beta1) * g;
            m2[k] = cfg.beta2 * m2[k] + (1.0 - cfg.beta2) * g * g;
            let m_hat = m1[k] / bc1;
            let v_hat = m2[k] / bc2;
            batch.coords_mut()[k] += cfg.gamma * m_hat / (v_hat.sqrt() + cfg.eps);
        }
        constraint.apply_batch(&mut batch);
        log.push(batch.clone());
    }
    Ok((batch, log))
}

/// Adam ascent from a random feasible start, returning the iterate log.
pub fn sga_adam_with_log(
    m: usize,
    constraint: &ConstraintSpec,
    oracle: &dyn EigOracle,
    n_steps: usize,
    cfg: &AdamConfig,
    seed: u64,
) -> Result<(DesignBatch, Vec<DesignBatch>)> {
    let mut init_rng = substream(seed, 0, 0, Purpose::Search);
    let dim = super::point_dim(constraint);
    let points: Vec<Vec<f64>> = (0..m)
        .map(|_| constraint.sample_domain(dim, &mut init_rng))
        .collect();
    let mut init = DesignBatch::from_points(&points)?;
    constraint.apply_batch(&mut init);
    adam_ascent(oracle, init, n_steps, cfg, constraint, seed)
}

/// Adam ascent from a random feasible start, final iterate only.
pub fn design_sga_adam(
    m: usize,
    constraint: &ConstraintSpec,
    oracle: &dyn EigOracle,
    n_steps: usize,
    cfg: &AdamConfig,
    seed: u64,
) -> Result<DesignBatch> {
    sga_adam_with_log(m, constraint, oracle, n_steps, cfg, seed).map(|(best, _)| best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baselines::tests::time_constraint;
    use crate::eig::FnOracle;

    fn unbounded() -> ConstraintSpec {
        ConstraintSpec::Box {
            lo: vec![-1e6],
            hi: vec![1e6],
        }
    }

    #[test]
    fn zero_gradient_leaves_the_iterate_fixed() {
        let oracle = FnOracle::new(|_: &DesignBatch| 0.0, |b: &DesignBatch| vec![0.0; b.coords().len()]);
        let constraint = time_constraint();
        let init = DesignBatch::from_times(&[3.0, 9.0, 21.0]).unwrap();
        let (got, log) = adam_ascent(&oracle, init.clone(), 50, &AdamConfig::default(), &constraint, 0).unwrap();
        assert_eq!(got, init);
        assert_eq!(log.len(), 51);
        assert!(log.iter().all(|b| *b == init));
    }

    #[test]
    fn concave_quadratic_converges_to_its_maximiser() {
        let t_star = 0.73;
        let oracle = FnOracle::new(
            move |b: &DesignBatch| -(b.coords()[0] - t_star).powi(2),
            move |b: &DesignBatch| vec![-2.0 * (b.coords()[0] - t_star)],
        );
        let init = DesignBatch::from_flat(1, vec![-3.0]).unwrap();
        let (got, _) =
            adam_ascent(&oracle, init, 2000, &AdamConfig::default(), &unbounded(), 0).unwrap();
        assert!(
            (got.coords()[0] - t_star).abs() < 1e-3,
            "final iterate {} vs maximiser {t_star}",
            got.coords()[0]
        );
    }

    #[test]
    fn first_update_has_unit_scale_regardless_of_gradient_magnitude() {
        // Bias correction makes the first Adam step γ·sign(g), so scaling
        // the gradient by 1000 must not change it.
        for scale in [1.0, 1000.0] {
            let oracle = FnOracle::new(
                |_: &DesignBatch| 0.0,
                move |b: &DesignBatch| b.coords().iter().map(|_| scale).collect(),
            );
            let init = DesignBatch::from_flat(1, vec![0.0]).unwrap();
            let cfg = AdamConfig::default();
            let (got, _) = adam_ascent(&oracle, init, 1, &cfg, &unbounded(), 0).unwrap();
            assert!(
                (got.coords()[0] - cfg.gamma).abs() < 1e-9,
                "first step {} should be γ = {} at gradient scale {scale}",
                got.coords()[0],
                cfg.gamma
            );
        }
    }

    #[test]
    fn non_finite_gradients_abort_with_the_step_index() {
        let oracle = FnOracle::new(|_: &DesignBatch| 0.0, |_: &DesignBatch| vec![f64::NAN]);
        let init = DesignBatch::from_flat(1, vec![0.0]).unwrap();
        let err = adam_ascent(&oracle, init, 5, &AdamConfig::default(), &unbounded(), 0)
            .err()
            .expect("NaN gradient must abort");
        assert!(err.to_string().contains("step 1"), "got: {err}");
    }

    #[test]
    fn iterates_respect_the_ordering_constraint_at_every_step() {
        let oracle = FnOracle::new(
            |_: &DesignBatch| 0.0,
            // Strong pull of every time toward zero, fighting the min-gap.
            |b: &DesignBatch| b.coords().iter().map(|t| -5.0 * t).collect(),
        );
        let constraint = time_constraint();
        let (_, log) = sga_adam_with_log(4, &constraint, &oracle, 300, &AdamConfig::default(), 3).unwrap();
        for b in &log {
            assert!(constraint.is_feasible(b), "infeasible iterate {:?}", b.coords());
        }
    }
}
