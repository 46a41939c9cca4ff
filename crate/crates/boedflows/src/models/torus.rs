//! Linear-Gaussian model on the circle with a periodic sensitivity profile.
//!
//! Each design point is an angle xi in [-pi, pi); the observation is
//! y = h(xi)^T theta + noise with theta ~ N(0, I_2) and forward map
//! h(xi) = a(xi) (cos xi, sin xi)^T. The amplitude a is a baseline plus four
//! wrapped Gaussian bumps, so informative angles form several separated
//! clusters and repeating one angle in a batch is redundant. Because the
//! model is linear-Gaussian, the batch information gain has a closed form
//! (see `eig::exact_torus`), which makes this the main calibration model for
//! estimator and flow tests.

use std::f64::consts::PI;

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::constraint::{wrapped_diff, ConstraintSpec};
use crate::error::Result;
use crate::models::{MeanSdGrad, Model, Theta};

#[derive(Clone, Debug)]
pub struct TorusLinear {
    /// Baseline amplitude followed by the four bump amplitudes.
    pub amps: [f64; 5],
    pub centres: [f64; 4],
    /// Bump width parameter.
    pub ell0: f64,
    pub sigma_y: f64,
}

impl Default for TorusLinear {
    fn default() -> Self {
        Self {
            amps: [0.4, 2.0, 1.9, 1.6, 1.0],
            centres: [0.0, PI / 2.0, -PI / 2.0, PI],
            ell0: 0.3,
            sigma_y: 0.35,
        }
    }
}

impl TorusLinear {
    /// Periodic sensitivity amplitude a(xi).
    pub fn amplitude(&self, xi: f64) -> f64 {
        let mut a = self.amps[0];
        for (k, c) in self.centres.iter().enumerate() {
            let d = wrapped_diff(xi, *c) / self.ell0;
            a += self.amps[k + 1] * (-0.5 * d * d).exp();
        }
        a
    }

    /// d a(xi) / d xi (the wrapped difference has unit slope away from the
    /// cut point, which the bumps never reach with non-negligible mass).
    pub fn amplitude_grad(&self, xi: f64) -> f64 {
        let mut g = 0.0;
        for (k, c) in self.centres.iter().enumerate() {
            let d = wrapped_diff(xi, *c);
            let s = d / self.ell0;
            g += self.amps[k + 1] * (-0.5 * s * s).exp() * (-d / (self.ell0 * self.ell0));
        }
        g
    }

    /// Forward map h(xi) = a(xi) (cos xi, sin xi).
    pub fn h(&self, xi: f64) -> [f64; 2] {
        let a = self.amplitude(xi);
        [a * xi.cos(), a * xi.sin()]
    }

    /// d h(xi) / d xi.
    pub fn h_grad(&self, xi: f64) -> [f64; 2] {
        let a = self.amplitude(xi);
        let da = self.amplitude_grad(xi);
        [
            da * xi.cos() - a * xi.sin(),
            da * xi.sin() + a * xi.cos(),
        ]
    }

    pub fn apply_override(&mut self, key: &str, value: f64) -> bool {
        match key {
            "sigma_y" => self.sigma_y = value,
            "ell0" => self.ell0 = value,
            _ => return false,
        }
        true
    }
}

impl Model for TorusLinear {
    fn name(&self) -> &'static str {
        "torus"
    }

    fn as_any(&self) -> &dyn std::any::Any {
        self
    }

    fn design_dim(&self) -> usize {
        1
    }

    fn param_dim(&self) -> usize {
        2
    }

    fn constraint(&self) -> ConstraintSpec {
        ConstraintSpec::Torus
    }

    fn default_m(&self) -> usize {
        3
    }

    fn sample_prior(&self, rng: &mut ChaCha8Rng) -> Theta {
        let z0: f64 = StandardNormal.sample(rng);
        let z1: f64 = StandardNormal.sample(rng);
        Theta::new(vec![z0, z1])
    }

    fn mean_sd(&self, theta: &Theta, xi: &[f64]) -> Result<(f64, f64)> {
        let h = self.h(xi[0]);
        Ok((h[0] * theta.params[0] + h[1] * theta.params[1], self.sigma_y))
    }

    fn mean_sd_grad(&self, theta: &Theta, xi: &[f64]) -> Result<MeanSdGrad> {
        let h = self.h(xi[0]);
        let dh = self.h_grad(xi[0]);
        Ok(MeanSdGrad {
            mean: h[0] * theta.params[0] + h[1] * theta.params[1],
            sd: self.sigma_y,
            dmean: vec![dh[0] * theta.params[0] + dh[1] * theta.params[1]],
            dsd: vec![0.0],
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stream::{substream, Purpose};
    use crate::util::{mean, std_error};
    use crate::verify::fd_gradient;
    use rand::Rng;

    #[test]
    fn amplitude_is_periodic() {
        let m = TorusLinear::default();
        for xi in [-3.0, -1.2, 0.0, 0.7, 2.9] {
            assert!((m.amplitude(xi) - m.amplitude(xi + 2.0 * PI)).abs() < 1e-12);
        }
    }

    #[test]
    fn amplitude_gradient_matches_fd() {
        let m = TorusLinear::default();
        let mut rng = substream(2, 0, 0, Purpose::Sim);
        for _ in 0..200 {
            let xi = rng.gen_range(-PI..PI);
            let g = m.amplitude_grad(xi);
            let fd = fd_gradient(&|x: &[f64]| m.amplitude(x[0]), &[xi], 1e-6)[0];
            assert!((g - fd).abs() <= 1e-6 * g.abs().max(1.0), "xi = {xi}");
        }
    }

    #[test]
    fn observations_have_zero_prior_mean() {
        let m = TorusLinear::default();
        let mut rng = substream(4, 0, 0, Purpose::Sim);
        let xi = [0.0];
        let ys: Vec<f64> = (0..50_000)
            .map(|_| {
                let th = m.sample_prior(&mut rng);
                m.sample_obs(&th, &xi, &mut rng).unwrap()
            })
            .collect();
        assert!(mean(&ys).abs() <= 3.0 * std_error(&ys));
    }
}
