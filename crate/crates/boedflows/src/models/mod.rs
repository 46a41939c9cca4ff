//! Benchmark observation models.
//!
//! Every model here is conditionally Gaussian with a scalar observation per
//! design point: `y_j | theta, xi_j ~ N(mean(theta, xi_j), sd(theta, xi_j)^2)`,
//! independently across the batch given `theta`. The trait therefore centres
//! on `mean_sd` / `mean_sd_grad`; log-likelihoods, their design gradients and
//! observation sampling are provided generically on top.

mod fhn;
mod pk;
mod sensor2d;
mod torus;
mod toy1d;

use std::collections::HashMap;
use std::sync::Arc;

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::constraint::ConstraintSpec;
use crate::design::DesignBatch;
use crate::error::{Error, Result};
use crate::util::ln_normal_pdf;

pub use fhn::{fhn_build_cache, Fhn, Trajectory};
pub use pk::Pk;
pub use sensor2d::Sensor2d;
pub use torus::TorusLinear;
pub use toy1d::Toy1d;

/// A parameter draw. Models with expensive forward simulations attach the
/// precomputed trajectory to the draw, so repeated likelihood evaluations at
/// new design points are cheap lookups.
#[derive(Clone, Debug)]
pub struct Theta {
    pub params: Vec<f64>,
    pub traj: Option<Arc<Trajectory>>,
}

impl Theta {
    pub fn new(params: Vec<f64>) -> Self {
        Self { params, traj: None }
    }
}

/// Mean and standard deviation of the scalar observation together with their
/// gradients in the design point (each of length `design_dim`).
#[derive(Clone, Debug)]
pub struct MeanSdGrad {
    pub mean: f64,
    pub sd: f64,
    pub dmean: Vec<f64>,
    pub dsd: Vec<f64>,
}

pub trait Model: Send + Sync {
    fn name(&self) -> &'static str;
    /// Concrete-type access, for callers that special-case a benchmark
    /// (e.g. routing a model with a closed-form information gain to its
    /// exact oracle instead of a Monte Carlo one).
    fn as_any(&self) -> &dyn std::any::Any;
    /// Dimension of one design point.
    fn design_dim(&self) -> usize;
    /// Dimension of the parameter vector.
    fn param_dim(&self) -> usize;
    /// Dimension of one observation (scalar for all built-in models).
    fn obs_dim(&self) -> usize {
        1
    }
    fn constraint(&self) -> ConstraintSpec;
    /// Batch size used by the benchmark this model comes from.
    fn default_m(&self) -> usize;

    fn sample_prior(&self, rng: &mut ChaCha8Rng) -> Theta;

    /// Mean and standard deviation of y at (theta, xi).
    fn mean_sd(&self, theta: &Theta, xi: &[f64]) -> Result<(f64, f64)>;

    /// Same plus gradients with respect to xi.
    fn mean_sd_grad(&self, theta: &Theta, xi: &[f64]) -> Result<MeanSdGrad>;

    /// Log-density of one observation.
    fn loglik(&self, y: f64, theta: &Theta, xi: &[f64]) -> Result<f64> {
        let (mu, sd) = self.mean_sd(theta, xi)?;
        Ok(ln_normal_pdf(y, mu, sd))
    }

    /// Gradient of `loglik` in the design point.
    fn grad_loglik_xi(&self, y: f64, theta: &Theta, xi: &[f64]) -> Result<Vec<f64>> {
        let g = self.mean_sd_grad(theta, xi)?;
        let r = (y - g.mean) / g.sd;
        // d/dxi [-ln sd - (y-mu)^2 / (2 sd^2)]
        Ok((0..xi.len())
            .map(|k| r / g.sd * g.dmean[k] + (r * r - 1.0) / g.sd * g.dsd[k])
            .collect())
    }

    /// Draw y ~ N(mean, sd^2).
    fn sample_obs(&self, theta: &Theta, xi: &[f64], rng: &mut ChaCha8Rng) -> Result<f64> {
        let (mu, sd) = self.mean_sd(theta, xi)?;
        let z: f64 = StandardNormal.sample(rng);
        Ok(mu + sd * z)
    }
}

/// Draw `theta` from the prior and one observation per design point,
/// conditionally independent given `theta`.
pub fn simulate_joint(
    model: &dyn Model,
    batch: &DesignBatch,
    rng: &mut ChaCha8Rng,
) -> Result<(Theta, Vec<f64>)> {
    let theta = model.sample_prior(rng);
    let ys = batch
        .points()
        .map(|xi| model.sample_obs(&theta, xi, rng))
        .collect::<Result<Vec<f64>>>()?;
    Ok((theta, ys))
}

/// Sum of per-point log-likelihoods; invariant under simultaneous
/// permutation of (y_j, xi_j) pairs.
pub fn batch_loglik(
    model: &dyn Model,
    ys: &[f64],
    theta: &Theta,
    batch: &DesignBatch,
) -> Result<f64> {
    if ys.len() != batch.m() {
        return Err(Error::Model(format!(
            "batch_loglik: {} observations for {} design points",
            ys.len(),
            batch.m()
        )));
    }
    let mut total = 0.0;
    for (j, xi) in batch.points().enumerate() {
        let term = model.loglik(ys[j], theta, xi)?;
        if !term.is_finite() {
            return Err(Error::NonFinite(format!(
                "batch_loglik term at slot {j} (y = {}, xi = {:?})",
                ys[j], xi
            )));
        }
        total += term;
    }
    Ok(total)
}

/// The benchmark models constructible by [`build_model`].
pub const MODEL_NAMES: [&str; 5] = ["toy1d", "sensor2d", "torus", "pk", "fhn"];

/// Construct a benchmark model by name with optional numeric overrides
/// (keys as accepted by each model's `apply_override`).
pub fn build_model(name: &str, overrides: &HashMap<String, f64>) -> Result<Arc<dyn Model>> {
    let mut unused: Vec<&String> = Vec::new();
    let model: Arc<dyn Model> = match name {
        "toy1d" => {
            let mut m = Toy1d::default();
            for (k, v) in overrides {
                if !m.apply_override(k, *v) {
                    unused.push(k);
                }
            }
            Arc::new(m)
        }
        "sensor2d" => {
            let mut m = Sensor2d::default();
            for (k, v) in overrides {
                if !m.apply_override(k, *v) {
                    unused.push(k);
                }
            }
            Arc::new(m)
        }
        "torus" => {
            let mut m = TorusLinear::default();
            for (k, v) in overrides {
                if !m.apply_override(k, *v) {
                    unused.push(k);
                }
            }
            Arc::new(m)
        }
        "pk" => {
            let mut m = Pk::default();
            for (k, v) in overrides {
                if !m.apply_override(k, *v) {
                    unused.push(k);
                }
            }
            Arc::new(m)
        }
        "fhn" => {
            let mut m = Fhn::default();
            for (k, v) in overrides {
                if !m.apply_override(k, *v) {
                    unused.push(k);
                }
            }
            Arc::new(m)
        }
        other => {
            return Err(Error::Parse {
                key: "model".into(),
                reason: format!(
                    "unknown model `{other}` (expected toy1d|sensor2d|torus|pk|fhn)"
                ),
            })
        }
    };
    if let Some(k) = unused.first() {
        return Err(Error::Parse {
            key: format!("{name}.{k}"),
            reason: "unknown model override".into(),
        });
    }
    Ok(model)
}
