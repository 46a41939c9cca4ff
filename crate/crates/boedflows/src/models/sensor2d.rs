//! Planar sensor-placement model with a bimodal target prior.
//!
//! A sensor at xi in [-5, 5]^2 observes y = f(theta, xi) + noise, where
//! f is a radial Gaussian response to an unknown target location theta. The
//! prior over theta is a two-component Gaussian mixture (a tight "major"
//! mode and a diffuse "minor" one), which makes the information gain surface
//! bimodal even for a single observation.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::constraint::ConstraintSpec;
use crate::error::Result;
use crate::models::{MeanSdGrad, Model, Theta};

#[derive(Clone, Debug)]
pub struct Sensor2d {
    pub ell: f64,
    pub sigma_y: f64,
    pub weight_major: f64,
    pub mu_major: [f64; 2],
    pub mu_minor: [f64; 2],
    pub sigma_major: f64,
    pub sigma_minor: f64,
    pub lo: f64,
    pub hi: f64,
}

impl Default for Sensor2d {
    fn default() -> Self {
        Self {
            ell: 0.5,
            sigma_y: 0.1,
            weight_major: 0.6,
            mu_major: [2.2, 0.0],
            mu_minor: [-1.5, 0.0],
            sigma_major: 0.2,
            sigma_minor: 0.5,
            lo: -5.0,
            hi: 5.0,
        }
    }
}

impl Sensor2d {
    fn response(&self, theta: &[f64], xi: &[f64]) -> f64 {
        let d0 = theta[0] - xi[0];
        let d1 = theta[1] - xi[1];
        (-(d0 * d0 + d1 * d1) / (2.0 * self.ell * self.ell)).exp()
    }

    pub fn apply_override(&mut self, key: &str, value: f64) -> bool {
        match key {
            "sigma_y" => self.sigma_y = value,
            "ell" => self.ell = value,
            "weight_major" => self.weight_major = value,
            _ => return false,
        }
        true
    }
}

impl Model for Sensor2d {
    fn name(&self) -> &'static str {
        "sensor2d"
    }

    fn as_any(&self) -> &dyn std::any::Any {
        self
    }

    fn design_dim(&self) -> usize {
        2
    }

    fn param_dim(&self) -> usize {
        2
    }

    fn constraint(&self) -> ConstraintSpec {
        ConstraintSpec::cube(self.lo, self.hi, 2)
    }

    fn default_m(&self) -> usize {
        1
    }

    fn sample_prior(&self, rng: &mut ChaCha8Rng) -> Theta {
        // Component indicator first, then the two Gaussian coordinates, in a
        // fixed draw order so the stream consumption is stable.
        let major = rng.gen::<f64>() < self.weight_major;
        let (mu, sd) = if major {
            (self.mu_major, self.sigma_major)
        } else {
            (self.mu_minor, self.sigma_minor)
        };
        let z0: f64 = StandardNormal.sample(rng);
        let z1: f64 = StandardNormal.sample(rng);
        Theta::new(vec![mu[0] + sd * z0, mu[1] + sd * z1])
    }

    fn mean_sd(&self, theta: &Theta, xi: &[f64]) -> Result<(f64, f64)> {
        Ok((self.response(&theta.params, xi), self.sigma_y))
    }

    fn mean_sd_grad(&self, theta: &Theta, xi: &[f64]) -> Result<MeanSdGrad> {
        let f = self.response(&theta.params, xi);
        let inv_ell2 = 1.0 / (self.ell * self.ell);
        // d/dxi exp(-|theta - xi|^2 / (2 l^2)) = f * (theta - xi) / l^2
        let dmean = vec![
            f * (theta.params[0] - xi[0]) * inv_ell2,
            f * (theta.params[1] - xi[1]) * inv_ell2,
        ];
        Ok(MeanSdGrad {
            mean: f,
            sd: self.sigma_y,
            dmean,
            dsd: vec![0.0, 0.0],
        })
    }
}
