//! Pharmacokinetic sampling-time model.
//!
//! A batch of sampling times t_1 < ... < t_m in [0, 24] (hours, minimum gap
//! 15 minutes) measures drug concentration y(t) ~ N(a(theta) mu_theta(t),
//! sigma^2 b_theta(t)) with mu_theta(t) = exp(-theta_1 t) - exp(-theta_2 t),
//! a(theta) = 400 theta_2 / (theta_3 (theta_2 - theta_1)) and heteroscedastic
//! inflation b_theta(t) = 1 + (a^2 / 10) mu_theta(t)^2. The parameters carry
//! independent log-normal priors.

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::constraint::ConstraintSpec;
use crate::error::{Error, Result};
use crate::models::{MeanSdGrad, Model, Theta};

#[derive(Clone, Debug)]
pub struct Pk {
    /// Base observation variance sigma^2.
    pub sigma2: f64,
    pub mu_log: [f64; 3],
    /// Common log-scale variance of the prior.
    pub sigma2_log: f64,
    pub t_max: f64,
    pub min_gap: f64,
}

impl Default for Pk {
    fn default() -> Self {
        Self {
            sigma2: 0.1,
            mu_log: [0.1f64.ln(), 1.0f64.ln(), 20.0f64.ln()],
            sigma2_log: 0.05,
            t_max: 24.0,
            min_gap: 0.25,
        }
    }
}

impl Pk {
    fn scale(theta: &[f64]) -> f64 {
        400.0 * theta[1] / (theta[2] * (theta[1] - theta[0]))
    }

    pub fn apply_override(&mut self, key: &str, value: f64) -> bool {
        match key {
            "sigma2" => self.sigma2 = value,
            "t_max" => self.t_max = value,
            "min_gap" => self.min_gap = value,
            _ => return false,
        }
        true
    }
}

impl Model for Pk {
    fn name(&self) -> &'static str {
        "pk"
    }

    fn as_any(&self) -> &dyn std::any::Any {
        self
    }

    fn design_dim(&self) -> usize {
        1
    }

    fn param_dim(&self) -> usize {
        3
    }

    fn constraint(&self) -> ConstraintSpec {
        ConstraintSpec::OrderedMinGap {
            min_gap: self.min_gap,
            t_max: self.t_max,
        }
    }

    fn default_m(&self) -> usize {
        15
    }

    fn sample_prior(&self, rng: &mut ChaCha8Rng) -> Theta {
        let sd = self.sigma2_log.sqrt();
        // The concentration scale has a pole at theta_2 = theta_1; under the
        // continuous prior that event is null, so resample on the (never yet
        // observed) degenerate draw instead of propagating infinities.
        loop {
            let th: Vec<f64> = self
                .mu_log
                .iter()
                .map(|m| {
                    let z: f64 = StandardNormal.sample(rng);
                    (m + sd * z).exp()
                })
                .collect();
            if (th[1] - th[0]).abs() >= 1e-12 {
                return Theta::new(th);
            }
        }
    }

    fn mean_sd(&self, theta: &Theta, xi: &[f64]) -> Result<(f64, f64)> {
        let th = &theta.params;
        let t = xi[0];
        let a = Self::scale(th);
        let mu = (-th[0] * t).exp() - (-th[1] * t).exp();
        let var = self.sigma2 * (1.0 + a * a / 10.0 * mu * mu);
        if !var.is_finite() || var <= 0.0 {
            return Err(Error::Model(format!(
                "degenerate observation variance {var} at t = {t}"
            )));
        }
        Ok((a * mu, var.sqrt()))
    }

    fn mean_sd_grad(&self, theta: &Theta, xi: &[f64]) -> Result<MeanSdGrad> {
        let th = &theta.params;
        let t = xi[0];
        let a = Self::scale(th);
        let e1 = (-th[0] * t).exp();
        let e2 = (-th[1] * t).exp();
        let mu = e1 - e2;
        let dmu = -th[0] * e1 + th[1] * e2;
        let var = self.sigma2 * (1.0 + a * a / 10.0 * mu * mu);
        let sd = var.sqrt();
        // d var / dt = sigma^2 * (a^2/10) * 2 mu dmu; d sd / dt = dvar / (2 sd)
        let dvar = self.sigma2 * a * a / 10.0 * 2.0 * mu * dmu;
        Ok(MeanSdGrad {
            mean: a * mu,
            sd,
            dmean: vec![a * dmu],
            dsd: vec![dvar / (2.0 * sd)],
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stream::{substream, Purpose};
    use crate::util::{ln_normal_pdf, mean, std_error, LN_2PI};
    use rand::Rng;

    #[test]
    fn prior_draws_are_positive_and_centred() {
        let m = Pk::default();
        let mut rng = substream(12, 0, 0, Purpose::Sim);
        let draws: Vec<Theta> = (0..20_000).map(|_| m.sample_prior(&mut rng)).collect();
        assert!(draws.iter().all(|t| t.params.iter().all(|p| *p > 0.0)));
        let log2: Vec<f64> = draws.iter().map(|t| t.params[2].ln()).collect();
        let target = 20.0f64.ln();
        assert!((mean(&log2) - target).abs() <= 4.0 * std_error(&log2));
    }

    #[test]
    fn simulated_means_match_the_closed_form() {
        let m = Pk::default();
        let mut rng = substream(13, 0, 0, Purpose::Sim);
        let t = [1.0];
        let mut ys = Vec::new();
        let mut mus = Vec::new();
        for _ in 0..100_000 {
            let th = m.sample_prior(&mut rng);
            mus.push(m.mean_sd(&th, &t).unwrap().0);
            ys.push(m.sample_obs(&th, &t, &mut rng).unwrap());
        }
        let gap = (mean(&ys) - mean(&mus)).abs();
        let se = (std_error(&ys).powi(2) + std_error(&mus).powi(2)).sqrt();
        assert!(gap <= 3.0 * se, "gap {gap} vs se {se}");
    }

    #[test]
    fn loglik_matches_direct_gaussian_formula() {
        let m = Pk::default();
        let mut rng = substream(14, 0, 0, Purpose::Sim);
        for _ in 0..100 {
            let th = m.sample_prior(&mut rng);
            let t = [rng.gen_range(0.0..24.0)];
            let y = rng.gen_range(-5.0..40.0);
            let ll = m.loglik(y, &th, &t).unwrap();
            // Independent evaluation of the density from the published
            // moment formulas.
            let a = 400.0 * th.params[1] / (th.params[2] * (th.params[1] - th.params[0]));
            let mu_t = (-th.params[0] * t[0]).exp() - (-th.params[1] * t[0]).exp();
            let var = 0.1 * (1.0 + a * a / 10.0 * mu_t * mu_t);
            let direct = -0.5 * LN_2PI - 0.5 * var.ln() - (y - a * mu_t).powi(2) / (2.0 * var);
            assert!((ll - direct).abs() < 1e-10);
            assert!((ll - ln_normal_pdf(y, a * mu_t, var.sqrt())).abs() < 1e-12);
        }
    }
}
