//! Independent oracles and diagnostics used by property tests and the
//! acceptance suite: grid Gibbs densities, one-dimensional Wasserstein
//! distance, finite-difference gradients, and exhaustive small-instance
//! drift enumeration.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::design::{DesignBatch, ParticleEnsemble};
use crate::eig::EigOracle;
use crate::error::{Error, Result};

/// Central finite-difference gradient of a scalar field. This is a test
/// oracle: it panics (naming the coordinate) if the field evaluates to a
/// non-finite value inside the stencil.
pub fn fd_gradient(f: &dyn Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut g = vec![0.0; x.len()];
    let mut work = x.to_vec();
    for k in 0..x.len() {
        work[k] = x[k] + h;
        let plus = f(&work);
        work[k] = x[k] - h;
        let minus = f(&work);
        work[k] = x[k];
        assert!(
            plus.is_finite() && minus.is_finite(),
            "non-finite field evaluation while differencing coordinate {k}"
        );
        g[k] = (plus - minus) / (2.0 * h);
    }
    g
}

/// A probability distribution supported on the nodes of a strictly
/// increasing 1D grid, with node masses obtained by trapezoidal quadrature
/// of a (log-)density and normalised to sum to one.
#[derive(Clone, Debug)]
pub struct GridDensity {
    pub grid: Vec<f64>,
    pub probs: Vec<f64>,
}

impl GridDensity {
    /// Build from log-weights on a grid; overflow-safe via max subtraction.
    pub fn from_log_weights(grid: &[f64], log_w: &[f64]) -> Result<Self> {
        if grid.len() != log_w.len() || grid.len() < 2 {
            return Err(Error::Config(
                "grid density needs >= 2 aligned nodes".into(),
            ));
        }
        if grid.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::Config("grid must be strictly increasing".into()));
        }
        let max = log_w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return Err(Error::NonFinite("grid density log-weights".into()));
        }
        let n = grid.len();
        let mut probs = vec![0.0; n];
        for k in 0..n {
            // Trapezoid cell width around node k.
            let cell = match k {
                0 => (grid[1] - grid[0]) / 2.0,
                _ if k == n - 1 => (grid[n - 1] - grid[n - 2]) / 2.0,
                _ => (grid[k + 1] - grid[k - 1]) / 2.0,
            };
            probs[k] = cell * (log_w[k] - max).exp();
        }
        let total: f64 = probs.iter().sum();
        for p in probs.iter_mut() {
            *p /= total;
        }
        Ok(Self {
            grid: grid.to_vec(),
            probs,
        })
    }

    /// Build directly from given atom masses (normalised here).
    pub fn from_probs(grid: &[f64], probs: &[f64]) -> Result<Self> {
        let lw: Vec<f64> = probs.iter().map(|p| p.ln()).collect();
        // Reuse the validation path; cell widths cancel only on uniform
        // grids, so renormalise explicitly instead.
        if grid.len() != probs.len() || grid.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::Config("invalid atom grid".into()));
        }
        let _ = lw;
        let total: f64 = probs.iter().sum();
        Ok(Self {
            grid: grid.to_vec(),
            probs: probs.iter().map(|p| p / total).collect(),
        })
    }

    /// Inverse-CDF sample from the atoms.
    pub fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        for (x, p) in self.grid.iter().zip(&self.probs) {
            acc += p;
            if u <= acc {
                return *x;
            }
        }
        *self.grid.last().unwrap()
    }

    /// Mean of the atom distribution.
    pub fn mean(&self) -> f64 {
        self.grid.iter().zip(&self.probs).map(|(x, p)| x * p).sum()
    }

    /// Total variation distance to another density on the same grid.
    pub fn tv_distance(&self, other: &GridDensity) -> f64 {
        0.5 * self
            .probs
            .iter()
            .zip(&other.probs)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
    }
}

/// Gibbs change of measure on a grid: p_k proportional to
/// exp(utility_k / lambda) * ref_density_k.
pub fn gibbs_density_1d(
    grid: &[f64],
    utility: &[f64],
    ref_density: &[f64],
    lambda: f64,
) -> Result<GridDensity> {
    if utility.len() != grid.len() || ref_density.len() != grid.len() {
        return Err(Error::Config("gibbs grids must be aligned".into()));
    }
    if !(lambda > 0.0) {
        return Err(Error::Config("gibbs temperature must be positive".into()));
    }
    let log_w: Vec<f64> = utility
        .iter()
        .zip(ref_density)
        .map(|(u, r)| u / lambda + r.ln())
        .collect();
    GridDensity::from_log_weights(grid, &log_w)
}

/// Wasserstein-1 distance between an empirical sample and a grid
/// distribution, computed as the integral of the absolute CDF difference
/// over the merged support.
pub fn wasserstein1_1d(samples: &[f64], density: &GridDensity) -> f64 {
    assert!(!samples.is_empty(), "wasserstein1_1d needs samples");
    let mut xs = samples.to_vec();
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = xs.len() as f64;

    // Sweep the merged support accumulating |F_emp - F_grid| * dx.
    let mut w1 = 0.0;
    let mut i = 0; // samples consumed
    let mut j = 0; // grid atoms consumed
    let mut f_emp: f64 = 0.0;
    let mut f_grid: f64 = 0.0;
    let mut prev: Option<f64> = None;
    while i < xs.len() || j < density.grid.len() {
        let next = match (xs.get(i), density.grid.get(j)) {
            (Some(a), Some(b)) => a.min(*b),
            (Some(a), None) => *a,
            (None, Some(b)) => *b,
            (None, None) => break,
        };
        if let Some(p) = prev {
            w1 += (f_emp - f_grid).abs() * (next - p);
        }
        while i < xs.len() && xs[i] <= next {
            f_emp += 1.0 / n;
            i += 1;
        }
        while j < density.grid.len() && density.grid[j] <= next {
            f_grid += density.probs[j];
            j += 1;
        }
        prev = Some(next);
    }
    w1
}

/// Exact interaction drift for one particle: the average of the slot
/// gradient over *all* (m-1)-tuples of partners, one drawn from each pool
/// (with replacement within a pool across tuples). `pools` lists the
/// partner ensembles in slot order, skipping `slot` itself. Refuses
/// enumerations beyond 1e5 tuples.
pub fn enumerate_drift(
    oracle: &dyn EigOracle,
    xi: &[f64],
    slot: usize,
    pools: &[&ParticleEnsemble],
    rng: &mut ChaCha8Rng,
) -> Result<Vec<f64>> {
    let m = pools.len() + 1;
    let dim = xi.len();
    let total: usize = pools.iter().map(|p| p.len()).product();
    if total > 100_000 {
        return Err(Error::Config(format!(
            "enumeration of {total} tuples exceeds the 1e5 guard"
        )));
    }
    let mut acc = vec![0.0; dim];
    let mut idx = vec![0usize; pools.len()];
    let mut batch = DesignBatch::zeros(m, dim);
    for _ in 0..total.max(1) {
        // Assemble the batch: xi at `slot`, pool particles in slot order.
        let mut pool_cursor = 0;
        for s in 0..m {
            let src: &[f64] = if s == slot {
                xi
            } else {
                let p = pools[pool_cursor].point(idx[pool_cursor]);
                pool_cursor += 1;
                p
            };
            batch.point_mut(s).copy_from_slice(src);
        }
        let g = oracle.grad_slot(&batch, slot, rng)?;
        for (a, v) in acc.iter_mut().zip(&g) {
            *a += v / total.max(1) as f64;
        }
        // Odometer increment over the tuple index space.
        for k in 0..idx.len() {
            idx[k] += 1;
            if idx[k] < pools[k].len() {
                break;
            }
            idx[k] = 0;
        }
    }
    Ok(acc)
}

/// Estimate of the regularised objective for a particle population on a
/// bounded interval: negative mean utility plus lambda times the KL
/// divergence of a histogram density against the uniform reference.
pub fn free_energy_estimate(
    samples: &[f64],
    utility: &dyn Fn(f64) -> f64,
    lambda: f64,
    lo: f64,
    hi: f64,
    n_bins: usize,
) -> f64 {
    let n = samples.len() as f64;
    let width = (hi - lo) / n_bins as f64;
    let mut counts = vec![0.0; n_bins];
    let mut mean_u = 0.0;
    for &x in samples {
        mean_u += utility(x) / n;
        let b = (((x - lo) / width) as usize).min(n_bins - 1);
        counts[b] += 1.0 / n;
    }
    // KL(hist || uniform) = sum p ln(p / (width / (hi-lo)))
    let uniform_cell = width / (hi - lo);
    let kl: f64 = counts
        .iter()
        .filter(|p| **p > 0.0)
        .map(|p| p * (p / uniform_cell).ln())
        .sum();
    -mean_u + lambda * kl
}
