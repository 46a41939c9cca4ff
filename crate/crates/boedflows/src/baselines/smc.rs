//! Annealed sequential Monte Carlo over designs: temper exp(β·score) along
//! a linear inverse-temperature ladder ending at m/λ, with multinomial
//! resampling below an effective-sample-size threshold and random-walk
//! Metropolis mutations projected back onto the feasible set.

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::constraint::ConstraintSpec;
use crate::design::DesignBatch;
use crate::eig::EigOracle;
use crate::error::{Error, Result};
use crate::stream::{substream, Purpose};

/// Annealing-schedule and mutation-kernel settings.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SmcConfig {
    pub n_particles: usize,
    pub n_temps: usize,
    /// Resample when ESS / n_particles drops below this fraction.
    pub ess_threshold: f64,
    /// Random-walk proposal standard deviation per coordinate.
    pub mutation_scale: f64,
}

impl Default for SmcConfig {
    fn default() -> Self {
        Self {
            n_particles: 20,
            n_temps: 20,
            ess_threshold: 0.7,
            mutation_scale: 0.5,
        }
    }
}

impl SmcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_particles == 0 || self.n_temps == 0 {
            return Err(Error::Config("SMC needs ≥ 1 particle and ≥ 1 temperature".into()));
        }
        if !(0.0..=1.0).contains(&self.ess_threshold) || !(self.mutation_scale > 0.0) {
            return Err(Error::Config(
                "SMC needs ess_threshold in [0, 1] and mutation_scale > 0".into(),
            ));
        }
        Ok(())
    }
}

/// Kish effective sample size (Σw)² / Σw² of nonnegative weights.
pub fn effective_sample_size(weights: &[f64]) -> f64 {
    let s: f64 = weights.iter().sum();
    let s2: f64 = weights.iter().map(|w| w * w).sum();
    if s2 == 0.0 {
        0.0
    } else {
        s * s / s2
    }
}

/// Full output of an annealing run, for diagnostics and tests.
pub struct SmcRun {
    /// Best-scoring particle seen anywhere in the run.
    pub best: DesignBatch,
    pub best_score: f64,
    pub n_resamples: usize,
    /// Population at the final temperature.
    pub final_particles: Vec<DesignBatch>,
    pub final_scores: Vec<f64>,
}

/// Run the annealed sampler and keep the whole final population.
pub fn run_annealed_smc(
    m: usize,
    constraint: &ConstraintSpec,
    oracle: &dyn EigOracle,
    n_mcmc: usize,
    cfg: &SmcConfig,
    lambda: f64,
    seed: u64,
) -> Result<SmcRun> {
    cfg.validate()?;
    if !(lambda > 0.0) {
        return Err(Error::Config("SMC ladder needs λ > 0".into()));
    }
    let beta_max = m as f64 / lambda;
    let ladder: Vec<f64> = if cfg.n_temps == 1 {
        vec![0.0]
    } else {
        (0..cfg.n_temps)
            .map(|t| beta_max * t as f64 / (cfg.n_temps - 1) as f64)
            .collect()
    };

    let mut score_rng = substream(seed, 1, 0, Purpose::Search);
    let score = |b: &DesignBatch, rng: &mut rand_chacha::ChaCha8Rng| -> Result<f64> {
        Ok(oracle.value(b, rng)?.value)
    };

    let n = cfg.n_particles;
    let mut particles = Vec::with_capacity(n);
    let mut scores = Vec::with_capacity(n);
    let dim = super::point_dim(constraint);
    for i in 0..n {
        let mut init_rng = substream(seed, i as u64, 0, Purpose::Search);
        let points: Vec<Vec<f64>> = (0..m)
            .map(|_| constraint.sample_domain(dim, &mut init_rng))
            .collect();
        let mut b = DesignBatch::from_points(&points)?;
        constraint.apply_batch(&mut b);
        let s = score(&b, &mut score_rng)?;
        particles.push(b);
        scores.push(s);
    }
    let mut best_idx = (0..n).max_by(|&a, &b| scores[a].total_cmp(&scores[b])).unwrap();
    let mut best = (particles[best_idx].clone(), scores[best_idx]);

    let mut log_w = vec![0.0_f64; n];
    let mut n_resamples = 0;

    for (t, window) in ladder.windows(2).enumerate() {
        let (beta_prev, beta) = (window[0], window[1]);
        let delta = beta - beta_prev;
        for (lw, s) in log_w.iter_mut().zip(&scores) {
            *lw += delta * s;
        }
        let max_lw = log_w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let weights: Vec<f64> = log_w.iter().map(|lw| (lw - max_lw).exp()).collect();
        if !max_lw.is_finite() || weights.iter().sum::<f64>() == 0.0 {
            return Err(Error::Estimator(format!(
                "annealed sampler: all importance weights vanished at β = {beta:.4} \
                 (rung {} of {}, ladder 0..{beta_max:.4})",
                t + 1,
                ladder.len()
            )));
        }

        if effective_sample_size(&weights) < cfg.ess_threshold * n as f64 {
            let mut resample_rng = substream(seed, 0, (t + 1) as u64, Purpose::Resample);
            let dist = WeightedIndex::new(&weights)
                .map_err(|e| Error::Estimator(format!("resampling weights degenerate: {e}")))?;
            let picks: Vec<usize> = (0..n).map(|_| dist.sample(&mut resample_rng)).collect();
            particles = picks.iter().map(|&j| particles[j].clone()).collect();
            scores = picks.iter().map(|&j| scores[j]).collect();
            log_w.fill(0.0);
            n_resamples += 1;
        }

        // Mutate each particle with projected random-walk Metropolis steps
        // targeting exp(β·score) on the feasible set.
        for i in 0..n {
            let mut rng = substream(seed, i as u64, (t + 1) as u64, Purpose::Mutate);
            for _ in 0..n_mcmc {
                let mut proposal = particles[i].clone();
                for c in proposal.coords_mut() {
                    *c += cfg.mutation_scale * rng.sample::<f64, _>(StandardNormal);
                }
                constraint.apply_batch(&mut proposal);
                let s_new = score(&proposal, &mut score_rng)?;
                let log_accept = beta * (s_new - scores[i]);
                if log_accept >= 0.0 || rng.gen::<f64>().ln() < log_accept {
                    particles[i] = proposal;
                    scores[i] = s_new;
                    if s_new > best.1 {
                        best = (particles[i].clone(), s_new);
                    }
                }
            }
        }
    }

    best_idx = (0..n).max_by(|&a, &b| scores[a].total_cmp(&scores[b])).unwrap();
    if scores[best_idx] > best.1 {
        best = (particles[best_idx].clone(), scores[best_idx]);
    }
    Ok(SmcRun {
        best: best.0,
        best_score: best.1,
        n_resamples,
        final_particles: particles,
        final_scores: scores,
    })
}

/// Annealed SMC returning only the best-scoring design seen during the run.
pub fn design_annealed_smc(
    m: usize,
    constraint: &ConstraintSpec,
    oracle: &dyn EigOracle,
    n_mcmc: usize,
    cfg: &SmcConfig,
    lambda: f64,
    seed: u64,
) -> Result<DesignBatch> {
    run_annealed_smc(m, constraint, oracle, n_mcmc, cfg, lambda, seed).map(|run| run.best)
}
