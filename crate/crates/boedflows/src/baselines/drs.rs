//! Dimension-reduction schemes: random search over two-parameter schedule
//! families instead of the full m-dimensional design space.
//!
//! Both families map a latent point to a monotone schedule on [0, t_max]:
//! geometric schedules t_j = t₀·r^j and Beta-quantile schedules
//! t_j = t_max·F⁻¹(j/(m+1); α₁, α₂). Candidates are sampled, repaired to
//! feasibility, scored with the low-fidelity oracle, and the best one is
//! returned.

use rand::Rng;
use statrs::distribution::{Beta, ContinuousCDF};

use crate::constraint::ConstraintSpec;
use crate::design::DesignBatch;
use crate::eig::EigOracle;
use crate::error::{Error, Result};
use crate::stream::{substream, Purpose};

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Logistic map from the latent search square [−4, 4]² to schedule
/// parameters: t₀ = t_max·σ(z₁) and r = 1 + (r_max − 1)·σ(z₂). The latent
/// parameterisation keeps the random search away from the hard boundaries
/// t₀ ∈ {0, t_max}, r ∈ {1, r_max}.
pub fn latent_to_schedule_params(z: [f64; 2], t_max: f64, r_max: f64) -> (f64, f64) {
    (t_max * sigmoid(z[0]), 1.0 + (r_max - 1.0) * sigmoid(z[1]))
}

/// Geometric schedule t_j = t₀·r^j for j = 0..m−1 (so t₀ is the first
/// sampling time). Not yet clipped or gap-repaired.
pub fn geometric_schedule(m: usize, t0: f64, r: f64) -> Vec<f64> {
    (0..m).map(|j| t0 * r.powi(j as i32)).collect()
}

/// Beta-quantile schedule t_j = t_max·F⁻¹(q_j; α₁, α₂) at the interior
/// uniform quantiles q_j = j/(m+1), j = 1..m.
pub fn beta_schedule(m: usize, t_max: f64, alpha1: f64, alpha2: f64) -> Result<Vec<f64>> {
    let beta = Beta::new(alpha1, alpha2)
        .map_err(|e| Error::Config(format!("invalid Beta schedule parameters: {e}")))?;
    Ok((1..=m)
        .map(|j| t_max * beta_quantile(&beta, j as f64 / (m + 1) as f64))
        .collect())
}

/// Quantile of a Beta law by bisecting its CDF (the regularized incomplete
/// beta function). The library's own quantile routine only resolves to
/// about 1e-4, too coarse for schedule construction.
fn beta_quantile(beta: &Beta, q: f64) -> f64 {
    debug_assert!((0.0..=1.0).contains(&q));
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if beta.cdf(mid) < q {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn best_of_candidates(
    candidates: Vec<Vec<f64>>,
    constraint: &ConstraintSpec,
    oracle: &dyn EigOracle,
    seed: u64,
) -> Result<(DesignBatch, Vec<f64>)> {
    let mut score_rng = substream(seed, 1, 0, Purpose::Search);
    let mut log = Vec::with_capacity(candidates.len());
    let mut best: Option<(DesignBatch, f64)> = None;
    for times in candidates {
        let mut batch = DesignBatch::from_times(&times)?;
        constraint.apply_batch(&mut batch);
        let value = oracle.value(&batch, &mut score_rng)?.value;
        log.push(value);
        if best.as_ref().is_none_or(|(_, b)| value > *b) {
            best = Some((batch, value));
        }
    }
    let (batch, _) = best.ok_or(Error::EmptyCandidates)?;
    Ok((batch, log))
}

/// Random search over geometric schedules; returns the best design and the
/// low-fidelity score of every evaluated candidate (in sampling order).
pub fn design_geometric_drs_with_log(
    m: usize,
    t_max: f64,
    n_random: usize,
    r_max: f64,
    constraint: &ConstraintSpec,
    oracle: &dyn EigOracle,
    seed: u64,
) -> Result<(DesignBatch, Vec<f64>)> {
    if n_random == 0 {
        return Err(Error::Config("geometric_drs needs n_random ≥ 1".into()));
    }
    let mut rng = substream(seed, 0, 0, Purpose::Search);
    let candidates: Vec<Vec<f64>> = (0..n_random)
        .map(|_| {
            let z = [rng.gen_range(-4.0..4.0), rng.gen_range(-4.0..4.0)];
            let (t0, r) = latent_to_schedule_params(z, t_max, r_max);
            geometric_schedule(m, t0, r)
        })
        .collect();
    best_of_candidates(candidates, constraint, oracle, seed)
}

pub fn design_geometric_drs(
    m: usize,
    t_max: f64,
    n_random: usize,
    r_max: f64,
    constraint: &ConstraintSpec,
    oracle: &dyn EigOracle,
    seed: u64,
) -> Result<DesignBatch> {
    design_geometric_drs_with_log(m, t_max, n_random, r_max, constraint, oracle, seed)
        .map(|(b, _)| b)
}

/// Random search over Beta-quantile schedules with
/// (log α₁, log α₂) ~ Unif[log 0.1, log 10]².
pub fn design_beta_drs_with_log(
    m: usize,
    t_max: f64,
    n_random: usize,
    constraint: &ConstraintSpec,
    oracle: &dyn EigOracle,
    seed: u64,
) -> Result<(DesignBatch, Vec<f64>)> {
    if n_random == 0 {
        return Err(Error::Config("beta_drs needs n_random ≥ 1".into()));
    }
    let (lo, hi) = (0.1f64.ln(), 10.0f64.ln());
    let mut rng = substream(seed, 0, 0, Purpose::Search);
    let candidates = (0..n_random)
        .map(|_| {
            let a1 = rng.gen_range(lo..hi).exp();
            let a2 = rng.gen_range(lo..hi).exp();
            beta_schedule(m, t_max, a1, a2)
        })
        .collect::<Result<Vec<_>>>()?;
    best_of_candidates(candidates, constraint, oracle, seed)
}

pub fn design_beta_drs(
    m: usize,
    t_max: f64,
    n_random: usize,
    constraint: &ConstraintSpec,
    oracle: &dyn EigOracle,
    seed: u64,
) -> Result<DesignBatch> {
    design_beta_drs_with_log(m, t_max, n_random, constraint, oracle, seed).map(|(b, _)| b)
}
