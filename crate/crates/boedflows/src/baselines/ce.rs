//! Coordinate exchange: cyclically re-optimise one sampling time at a time
//! inside its feasible interval, holding the rest of the design fixed.
//!
//! The inner 1D maximisation comes in two flavours: exhaustive evaluation
//! on a grid (`ce_grid`), or a cheap squared-exponential Gaussian-process
//! emulator fit to a handful of oracle evaluations whose posterior mean is
//! maximised instead (`ce_gp`, with an optional greedy acceptance test).

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;

use crate::constraint::ConstraintSpec;
use crate::design::DesignBatch;
use crate::eig::EigOracle;
use crate::error::{Error, Result};
use crate::stream::{substream, Purpose};
use crate::util::linspace;

/// Gaussian-process emulator settings for `ce_gp` / `ce_gp_g`.
#[derive(Clone, Debug, PartialEq)]
pub struct GpConfig {
    /// Independent restarts of the whole sweep loop (best final design wins).
    pub n_starts: usize,
    /// Training evaluations per coordinate fit.
    pub r_train: usize,
    /// Fixed squared-exponential lengthscale.
    pub lengthscale: f64,
    /// Posterior-mean maximisation grid per coordinate.
    pub grid: usize,
    /// Diagonal jitter added when the Gram matrix fails to factor.
    pub jitter: f64,
}

impl Default for GpConfig {
    fn default() -> Self {
        Self {
            n_starts: 2,
            r_train: 20,
            lengthscale: 2.0,
            grid: 200,
            jitter: 1e-6,
        }
    }
}

impl GpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_starts == 0 || self.r_train < 2 || self.grid < 2 {
            return Err(Error::Config(
                "GP config needs n_starts ≥ 1, r_train ≥ 2, grid ≥ 2".into(),
            ));
        }
        if !(self.lengthscale > 0.0) || !(self.jitter > 0.0) {
            return Err(Error::Config("GP lengthscale and jitter must be positive".into()));
        }
        Ok(())
    }
}

/// One-dimensional GP regressor with a squared-exponential kernel, fixed
/// lengthscale and fixed observation noise.
pub struct Gp1d {
    xs: Vec<f64>,
    alpha: DVector<f64>,
    y_mean: f64,
    lengthscale: f64,
}

impl Gp1d {
    /// Fit by Cholesky factorisation of K + σ_n² I. A singular Gram matrix
    /// gets escalating diagonal jitter (starting at `jitter`), logged.
    pub fn fit(
        xs: &[f64],
        ys: &[f64],
        lengthscale: f64,
        noise_var: f64,
        jitter: f64,
    ) -> Result<Self> {
        if xs.len() != ys.len() || xs.len() < 2 {
            return Err(Error::Config("GP fit needs ≥ 2 aligned observations".into()));
        }
        let n = xs.len();
        let y_mean = ys.iter().sum::<f64>() / n as f64;
        let centred = DVector::from_iterator(n, ys.iter().map(|y| y - y_mean));
        let base = DMatrix::from_fn(n, n, |i, j| {
            let d = (xs[i] - xs[j]) / lengthscale;
            (-0.5 * d * d).exp() + if i == j { noise_var } else { 0.0 }
        });
        let mut extra = 0.0;
        let chol = loop {
            let k = if extra > 0.0 {
                &base + DMatrix::from_diagonal_element(n, n, extra)
            } else {
                base.clone()
            };
            match Cholesky::new(k) {
                Some(c) => break c,
                None => {
                    extra = if extra == 0.0 { jitter } else { extra * 10.0 };
                    if extra > 1e-2 {
                        return Err(Error::Estimator(
                            "GP Gram matrix stayed singular up to jitter 1e-2".into(),
                        ));
                    }
                    log::warn!("singular GP Gram matrix; retrying with jitter {extra:.1e}");
                }
            }
        };
        let alpha = chol.solve(&centred);
        Ok(Self {
            xs: xs.to_vec(),
            alpha,
            y_mean,
            lengthscale,
        })
    }

    /// Posterior mean at `x`.
    pub fn posterior_mean(&self, x: f64) -> f64 {
        let mut acc = 0.0;
        for (xi, a) in self.xs.iter().zip(self.alpha.iter()) {
            let d = (x - xi) / self.lengthscale;
            acc += a * (-0.5 * d * d).exp();
        }
        self.y_mean + acc
    }
}

fn time_axis(constraint: &ConstraintSpec) -> Result<(f64, f64)> {
    match constraint {
        ConstraintSpec::OrderedMinGap { min_gap, t_max } => Ok((*min_gap, *t_max)),
        other => Err(Error::Config(format!(
            "coordinate exchange needs ordered sampling times, got {}",
            other.tag()
        ))),
    }
}

/// Feasible interval for coordinate `i` of an ordered design.
fn feasible_interval(times: &[f64], i: usize, min_gap: f64, t_max: f64) -> (f64, f64) {
    let lo = if i == 0 { 0.0 } else { times[i - 1] + min_gap };
    let hi = if i + 1 == times.len() {
        t_max
    } else {
        times[i + 1] - min_gap
    };
    (lo, hi)
}

/// Coordinate exchange with exhaustive grid search per coordinate. The
/// incumbent value is appended to every candidate grid, so with a frozen
/// oracle the accepted score sequence can never decrease. Starts from the
/// evenly spaced design; `n_sweeps = 0` returns it unchanged.
pub fn design_ce_grid(
    m: usize,
    constraint: &ConstraintSpec,
    oracle: &dyn EigOracle,
    n_sweeps: usize,
    grid_size: usize,
    seed: u64,
) -> Result<DesignBatch> {
    let (min_gap, t_max) = time_axis(constraint)?;
    let mut batch = super::design_uniform(m, t_max)?;
    constraint.apply_batch(&mut batch);
    let mut score_rng = substream(seed, 1, 0, Purpose::Search);

    for _ in 0..n_sweeps {
        for i in 0..m {
            let (lo, hi) = feasible_interval(batch.coords(), i, min_gap, t_max);
            if !(lo <= hi) {
                log::warn!("coordinate {i}: empty feasible interval [{lo}, {hi}], skipped");
                continue;
            }
            let mut candidates = linspace(lo, hi, grid_size);
            candidates.push(batch.coords()[i]);
            let mut best = (batch.coords()[i], f64::NEG_INFINITY);
            for &t in &candidates {
                let mut trial = batch.clone();
                trial.coords_mut()[i] = t;
                let v = oracle.value(&trial, &mut score_rng)?.value;
                if v > best.1 {
                    best = (t, v);
                }
            }
            batch.coords_mut()[i] = best.0;
        }
    }
    Ok(batch)
}

/// Observation-noise estimate for the GP fits: 3 replicate oracle calls at
/// 3 anchor values of the middle coordinate, averaged sample variance.
/// Frozen oracles give identical replicates and hence zero noise; the
/// Cholesky jitter covers that case.
fn replicate_noise_estimate(
    batch: &DesignBatch,
    constraint_bounds: (f64, f64),
    min_gap: f64,
    oracle: &dyn EigOracle,
    rng: &mut rand_chacha::ChaCha8Rng,
) -> Result<f64> {
    let m = batch.m();
    let i = m / 2;
    let (lo, hi) = feasible_interval(batch.coords(), i, min_gap, constraint_bounds.1);
    if !(lo < hi) {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for frac in [0.25, 0.5, 0.75] {
        let mut trial = batch.clone();
        trial.coords_mut()[i] = lo + frac * (hi - lo);
        let vals: Vec<f64> = (0..3)
            .map(|_| oracle.value(&trial, rng).map(|e| e.value))
            .collect::<Result<Vec<_>>>()?;
        let mean = vals.iter().sum::<f64>() / 3.0;
        total += vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 2.0;
    }
    Ok((total / 3.0).max(0.0))
}

/// Coordinate exchange with a GP emulator per coordinate: fit `r_train`
/// oracle evaluations in the feasible interval, propose the maximiser of
/// the posterior mean on a grid. `greedy = false` always accepts the
/// proposal; `greedy = true` accepts only when the low-fidelity score
/// improves. Runs `n_starts` restarts (evenly spaced start, then random
/// feasible starts) and returns the best final design.
pub fn design_ce_gp(
    m: usize,
    constraint: &ConstraintSpec,
    oracle: &dyn EigOracle,
    n_sweeps: usize,
    gp: &GpConfig,
    greedy: bool,
    seed: u64,
) -> Result<DesignBatch> {
    gp.validate()?;
    let (min_gap, t_max) = time_axis(constraint)?;
    let mut train_rng = substream(seed, 0, 0, Purpose::Search);
    let mut score_rng = substream(seed, 1, 0, Purpose::Search);
    let mut noise_rng = substream(seed, 2, 0, Purpose::Search);

    let mut overall: Option<(DesignBatch, f64)> = None;
    for start in 0..gp.n_starts {
        let mut batch = if start == 0 {
            super::design_uniform(m, t_max)?
        } else {
            let times: Vec<f64> = (0..m).map(|_| train_rng.gen_range(0.0..t_max)).collect();
            DesignBatch::from_times(&times)?
        };
        constraint.apply_batch(&mut batch);
        let mut incumbent = oracle.value(&batch, &mut score_rng)?.value;

        for _ in 0..n_sweeps {
            let noise_var =
                replicate_noise_estimate(&batch, (0.0, t_max), min_gap, oracle, &mut noise_rng)?;
            for i in 0..m {
                let (lo, hi) = feasible_interval(batch.coords(), i, min_gap, t_max);
                if !(hi - lo > 1e-9) {
                    log::warn!("coordinate {i}: empty feasible interval, skipped");
                    continue;
                }
                let xs: Vec<f64> = (0..gp.r_train).map(|_| train_rng.gen_range(lo..hi)).collect();
                let mut ys = Vec::with_capacity(xs.len());
                for &x in &xs {
                    let mut trial = batch.clone();
                    trial.coords_mut()[i] = x;
                    ys.push(oracle.value(&trial, &mut score_rng)?.value);
                }
                let emulator = Gp1d::fit(&xs, &ys, gp.lengthscale, noise_var, gp.jitter)?;
                let proposal = linspace(lo, hi, gp.grid)
                    .into_iter()
                    .map(|x| (x, emulator.posterior_mean(x)))
                    .reduce(|a, b| if b.1 > a.1 { b } else { a })
                    .expect("grid is nonempty")
                    .0;

                let mut trial = batch.clone();
                trial.coords_mut()[i] = proposal;
                let trial_score = oracle.value(&trial, &mut score_rng)?.value;
                if !greedy || trial_score > incumbent {
                    batch = trial;
                    incumbent = trial_score;
                }
            }
        }
        let final_score = oracle.value(&batch, &mut score_rng)?.value;
        if overall.as_ref().is_none_or(|(_, s)| final_score > *s) {
            overall = Some((batch, final_score));
        }
    }
    Ok(overall.expect("n_starts ≥ 1").0)
}
