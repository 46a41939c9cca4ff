//! One-dimensional binary-parameter model with a multimodal sensitivity.
//!
//! A scalar design xi in [-3.5, 3.5] measures y ~ N(theta * a(xi), sigma_y^2)
//! for a binary latent theta in {-1, +1} with a symmetric prior. The
//! sensitivity a(xi) is a positive baseline plus four Gaussian bumps of
//! different amplitudes, so the information gain has several separated local
//! maxima — the canonical landscape for studying basin escape.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::constraint::ConstraintSpec;
use crate::error::Result;
use crate::models::{MeanSdGrad, Model, Theta};
use crate::util::linspace;

#[derive(Clone, Debug)]
pub struct Toy1d {
    /// Baseline amplitude followed by the four bump amplitudes.
    pub amps: [f64; 5],
    /// Bump centres, evenly spaced across the design interval.
    pub centres: [f64; 4],
    /// Denominator of the squared distance in each bump exponent.
    pub width: f64,
    /// Observation noise level.
    pub sigma_y: f64,
    pub lo: f64,
    pub hi: f64,
}

impl Default for Toy1d {
    fn default() -> Self {
        let cs = linspace(-3.5, 3.5, 4);
        Self {
            amps: [0.2, 0.4, 0.8, 1.4, 0.9],
            centres: [cs[0], cs[1], cs[2], cs[3]],
            width: 0.4,
            // With the amplitudes above, a noise level of this order keeps
            // the per-bump information gains well separated; much smaller
            // values push every bump against the ln 2 ceiling and flatten
            // the landscape into a plateau.
            sigma_y: 1.4,
            lo: -3.5,
            hi: 3.5,
        }
    }
}

impl Toy1d {
    /// Sensitivity amplitude a(xi) > 0.
    pub fn amplitude(&self, xi: f64) -> f64 {
        let mut a = self.amps[0];
        for (k, c) in self.centres.iter().enumerate() {
            let d = xi - c;
            a += self.amps[k + 1] * (-d * d / self.width).exp();
        }
        a
    }

    /// d a(xi) / d xi.
    pub fn amplitude_grad(&self, xi: f64) -> f64 {
        let mut g = 0.0;
        for (k, c) in self.centres.iter().enumerate() {
            let d = xi - c;
            g += self.amps[k + 1] * (-d * d / self.width).exp() * (-2.0 * d / self.width);
        }
        g
    }

    pub fn apply_override(&mut self, key: &str, value: f64) -> bool {
        match key {
            "sigma_y" => self.sigma_y = value,
            "width" => self.width = value,
            _ => return false,
        }
        true
    }
}

impl Model for Toy1d {
    fn name(&self) -> &'static str {
        "toy1d"
    }

    fn as_any(&self) -> &dyn std::any::Any {
        self
    }

    fn design_dim(&self) -> usize {
        1
    }

    fn param_dim(&self) -> usize {
        1
    }

    fn constraint(&self) -> ConstraintSpec {
        ConstraintSpec::cube(self.lo, self.hi, 1)
    }

    fn default_m(&self) -> usize {
        1
    }

    fn sample_prior(&self, rng: &mut ChaCha8Rng) -> Theta {
        let sign = if rng.gen::<bool>() { 1.0 } else { -1.0 };
        Theta::new(vec![sign])
    }

    fn mean_sd(&self, theta: &Theta, xi: &[f64]) -> Result<(f64, f64)> {
        Ok((theta.params[0] * self.amplitude(xi[0]), self.sigma_y))
    }

    fn mean_sd_grad(&self, theta: &Theta, xi: &[f64]) -> Result<MeanSdGrad> {
        Ok(MeanSdGrad {
            mean: theta.params[0] * self.amplitude(xi[0]),
            sd: self.sigma_y,
            dmean: vec![theta.params[0] * self.amplitude_grad(xi[0])],
            dsd: vec![0.0],
        })
    }
}
