//! Spiking-neuron sampling-time model (FitzHugh–Nagumo dynamics).
//!
//! The latent state (u1, u2) follows the two-dimensional FitzHugh–Nagumo
//! system; noisy voltage observations y(t_j) ~ N(u1(t_j; theta), sigma^2)
//! are taken at chosen times t_1 < ... < t_m in [0, 20] with a minimum gap.
//! Each prior draw integrates the system once with RK4 on a dense grid and
//! caches u1; likelihood queries evaluate the cached trajectory by linear
//! interpolation, and design-time gradients differentiate the interpolant
//! (the slope of the active segment, taking the right segment at nodes).

use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::constraint::ConstraintSpec;
use crate::error::{Error, Result};
use crate::models::{MeanSdGrad, Model, Theta};

/// Dense-grid voltage trace for one parameter draw.
#[derive(Clone, Debug)]
pub struct Trajectory {
    /// Grid spacing.
    pub h: f64,
    /// u1 at nodes 0, h, 2h, ..., t_max.
    pub u1: Vec<f64>,
}

impl Trajectory {
    /// Linear interpolation of u1 and the active-segment slope at time t
    /// (clamped to the grid range; right segment at interior nodes).
    pub fn value_slope(&self, t: f64) -> (f64, f64) {
        let n_seg = self.u1.len() - 1;
        let s = (t / self.h).clamp(0.0, n_seg as f64);
        let mut k = s.floor() as usize;
        if k >= n_seg {
            k = n_seg - 1;
        }
        let w = s - k as f64;
        let slope = (self.u1[k + 1] - self.u1[k]) / self.h;
        (self.u1[k] + w * (self.u1[k + 1] - self.u1[k]), slope)
    }
}

#[derive(Clone, Debug)]
pub struct Fhn {
    pub t_max: f64,
    pub min_gap: f64,
    /// RK4 grid step for the cached trajectories.
    pub grid_step: f64,
}

impl Default for Fhn {
    fn default() -> Self {
        Self {
            t_max: 20.0,
            min_gap: 0.25,
            grid_step: 0.01,
        }
    }
}

impl Fhn {
    /// Integrate the system for parameters (theta_1, theta_2, theta_3) with
    /// fixed-step RK4 at spacing `h`, from u(0) = (-1, 1) to t_max.
    pub fn integrate(&self, th: &[f64], h: f64) -> Trajectory {
        let n = (self.t_max / h).round() as usize;
        let h = self.t_max / n as f64;
        let f = |u: [f64; 2]| -> [f64; 2] {
            [
                th[2] * (u[0] - u[0] * u[0] * u[0] / 3.0 + u[1]),
                -(u[0] - th[0] + th[1] * u[1]) / th[2],
            ]
        };
        let mut u = [-1.0, 1.0];
        let mut u1 = Vec::with_capacity(n + 1);
        u1.push(u[0]);
        for _ in 0..n {
            let k1 = f(u);
            let k2 = f([u[0] + 0.5 * h * k1[0], u[1] + 0.5 * h * k1[1]]);
            let k3 = f([u[0] + 0.5 * h * k2[0], u[1] + 0.5 * h * k2[1]]);
            let k4 = f([u[0] + h * k3[0], u[1] + h * k3[1]]);
            u[0] += h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]);
            u[1] += h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]);
            u1.push(u[0]);
        }
        Trajectory { h, u1 }
    }

    fn traj<'a>(&self, theta: &'a Theta) -> Result<&'a Trajectory> {
        theta.traj.as_deref().ok_or_else(|| {
            Error::Model(
                "trajectory cache missing: this parameter draw was not produced by \
                 sample_prior / build_cache"
                    .into(),
            )
        })
    }

    pub fn apply_override(&mut self, key: &str, value: f64) -> bool {
        match key {
            "grid_step" => self.grid_step = value,
            "t_max" => self.t_max = value,
            "min_gap" => self.min_gap = value,
            _ => return false,
        }
        true
    }
}

/// Pre-draw `n` parameter sets with their cached trajectories.
pub fn fhn_build_cache(model: &Fhn, n: usize, rng: &mut ChaCha8Rng) -> Vec<Theta> {
    (0..n).map(|_| model.sample_prior(rng)).collect()
}

impl Model for Fhn {
    fn name(&self) -> &'static str {
        "fhn"
    }

    fn as_any(&self) -> &dyn std::any::Any {
        self
    }

    fn design_dim(&self) -> usize {
        1
    }

    fn param_dim(&self) -> usize {
        4
    }

    fn constraint(&self) -> ConstraintSpec {
        ConstraintSpec::OrderedMinGap {
            min_gap: self.min_gap,
            t_max: self.t_max,
        }
    }

    fn default_m(&self) -> usize {
        21
    }

    fn sample_prior(&self, rng: &mut ChaCha8Rng) -> Theta {
        let th = vec![
            rng.gen_range(0.0..1.0),
            rng.gen_range(0.0..1.0),
            rng.gen_range(1.0..5.0),
            rng.gen_range(0.5..1.0),
        ];
        let traj = Arc::new(self.integrate(&th, self.grid_step));
        Theta {
            params: th,
            traj: Some(traj),
        }
    }

    fn mean_sd(&self, theta: &Theta, xi: &[f64]) -> Result<(f64, f64)> {
        let (u, _) = self.traj(theta)?.value_slope(xi[0]);
        Ok((u, theta.params[3]))
    }

    fn mean_sd_grad(&self, theta: &Theta, xi: &[f64]) -> Result<MeanSdGrad> {
        let (u, slope) = self.traj(theta)?.value_slope(xi[0]);
        Ok(MeanSdGrad {
            mean: u,
            sd: theta.params[3],
            dmean: vec![slope],
            dsd: vec![0.0],
        })
    }
}
