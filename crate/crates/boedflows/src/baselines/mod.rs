//! Classical design-optimisation baselines.
//!
//! Eight comparison methods spanning the usual families: fixed schedules
//! (`uniform`), low-dimensional random search over schedule families
//! (`geometric_drs`, `beta_drs`), coordinate exchange with grid or Gaussian
//! process inner maximisation (`ce_grid`, `ce_gp`, `ce_gp_g`), stochastic
//! gradient ascent with Adam (`sga_adam`), and an annealed sequential Monte
//! Carlo sampler over a temperature ladder (`smc`). All of them consume the
//! same [`EigOracle`] interface as the particle flows and return a single
//! feasible [`DesignBatch`].

mod ce;
mod drs;
mod sga;
mod smc;

pub use ce::{design_ce_grid, design_ce_gp, Gp1d, GpConfig};
pub use drs::{
    beta_schedule, design_beta_drs, design_beta_drs_with_log, design_geometric_drs,
    design_geometric_drs_with_log, geometric_schedule, latent_to_schedule_params,
};
pub use sga::{adam_ascent, design_sga_adam, sga_adam_with_log, AdamConfig};
pub use smc::{design_annealed_smc, effective_sample_size, SmcConfig, SmcRun};

use crate::constraint::ConstraintSpec;
use crate::design::DesignBatch;
use crate::eig::EigOracle;
use crate::error::{Error, Result};

/// Baseline method selector (config value for the `method` key).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    Uniform,
    GeometricDrs,
    BetaDrs,
    CeGrid,
    CeGp,
    /// Greedy GP coordinate exchange: accept a proposal only when the
    /// low-fidelity score improves.
    CeGpGreedy,
    SgaAdam,
    Smc,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Uniform => "uniform",
            Method::GeometricDrs => "geometric_drs",
            Method::BetaDrs => "beta_drs",
            Method::CeGrid => "ce_grid",
            Method::CeGp => "ce_gp",
            Method::CeGpGreedy => "ce_gp_g",
            Method::SgaAdam => "sga_adam",
            Method::Smc => "smc",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "uniform" => Ok(Method::Uniform),
            "geometric_drs" => Ok(Method::GeometricDrs),
            "beta_drs" => Ok(Method::BetaDrs),
            "ce_grid" => Ok(Method::CeGrid),
            "ce_gp" => Ok(Method::CeGp),
            "ce_gp_g" => Ok(Method::CeGpGreedy),
            "sga_adam" => Ok(Method::SgaAdam),
            "smc" => Ok(Method::Smc),
            other => Err(Error::Parse {
                key: "method".into(),
                reason: format!(
                    "unknown baseline `{other}` (expected uniform|geometric_drs|beta_drs|ce_grid|ce_gp|ce_gp_g|sga_adam|smc)"
                ),
            }),
        }
    }
}

/// Tuning knobs shared by the baselines. Each method reads `budget` as its
/// own budget parameter: candidate count for the random-search schedules
/// (`n_random`), sweep count for coordinate exchange (`n_sweeps`), step
/// count for Adam (`n_steps`), and per-temperature mutation steps for the
/// annealed sampler (`n_mcmc`).
#[derive(Clone, Debug, PartialEq)]
pub struct BaselineConfig {
    pub method: Method,
    pub budget: usize,
    /// Largest geometric ratio searched by `geometric_drs`.
    pub r_max: f64,
    /// Candidate grid size per coordinate for `ce_grid`.
    pub grid_size: usize,
    pub gp: GpConfig,
    pub smc: SmcConfig,
    pub adam: AdamConfig,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            method: Method::Uniform,
            budget: 100,
            r_max: 2.5,
            grid_size: 500,
            gp: GpConfig::default(),
            smc: SmcConfig::default(),
            adam: AdamConfig::default(),
        }
    }
}

impl BaselineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.budget == 0 {
            return Err(Error::Config("baseline budget must be at least 1".into()));
        }
        if !(self.r_max > 1.0) {
            return Err(Error::Config(format!(
                "r_max must exceed 1, got {}",
                self.r_max
            )));
        }
        if self.grid_size < 2 {
            return Err(Error::Config("grid_size must be at least 2".into()));
        }
        self.gp.validate()?;
        self.smc.validate()?;
        self.adam.validate()
    }

    /// Set one field from its config-file key; `Ok(false)` when the key is
    /// not a baseline key. The budget aliases (`n_random`, `n_sweeps`,
    /// `n_mcmc`) all set `budget`.
    pub fn apply_key(&mut self, key: &str, value: &str) -> Result<bool> {
        fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
            value.trim().parse().map_err(|_| Error::Parse {
                key: key.into(),
                reason: format!("invalid value `{value}`"),
            })
        }
        match key {
            "method" => self.method = Method::parse(value)?,
            "n_random" | "n_sweeps" | "n_mcmc" => self.budget = num(key, value)?,
            "r_max" => self.r_max = num(key, value)?,
            "grid_size" => self.grid_size = num(key, value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }
}

/// Evenly spaced interior sampling times: t_j = j·t_max/(m+1) for j = 1..m.
pub fn design_uniform(m: usize, t_max: f64) -> Result<DesignBatch> {
    if m == 0 {
        return Err(Error::Config("uniform design needs m ≥ 1".into()));
    }
    let times: Vec<f64> = (1..=m).map(|j| j as f64 * t_max / (m + 1) as f64).collect();
    DesignBatch::from_times(&times)
}

/// The `t_max` of an ordered sampling-time constraint; schedule-family
/// baselines only make sense on that geometry.
fn require_time_axis(method: Method, constraint: &ConstraintSpec) -> Result<(f64, f64)> {
    match constraint {
        ConstraintSpec::OrderedMinGap { min_gap, t_max } => Ok((*min_gap, *t_max)),
        other => Err(Error::Config(format!(
            "baseline `{}` needs an ordered sampling-time constraint, got {}",
            method.as_str(),
            other.tag()
        ))),
    }
}

/// Per-point design dimension implied by a constraint, used when a
/// generic method needs a random feasible initial design. Every scalar
/// geometry (sampling times, single angles) is one-dimensional; boxes
/// carry their own dimension.
pub(crate) fn point_dim(constraint: &ConstraintSpec) -> usize {
    match constraint {
        ConstraintSpec::Box { lo, .. } => lo.len(),
        ConstraintSpec::Torus
        | ConstraintSpec::OrderedMinGap { .. }
        | ConstraintSpec::Unconstrained => 1,
    }
}

/// Run one baseline against an oracle. `lambda` is only read by the
/// annealed sampler (its temperature ladder tops out at m/λ); `seed`
/// derives all method-internal substreams, so a frozen oracle makes every
/// baseline deterministic in `(config, seed)`.
pub fn run_baseline(
    cfg: &BaselineConfig,
    m: usize,
    constraint: &ConstraintSpec,
    oracle: &dyn EigOracle,
    lambda: f64,
    seed: u64,
) -> Result<DesignBatch> {
    cfg.validate()?;
    constraint.validate(m)?;
    match cfg.method {
        Method::Uniform => {
            let (min_gap, t_max) = require_time_axis(cfg.method, constraint)?;
            let mut batch = design_uniform(m, t_max)?;
            crate::constraint::repair_times(batch.coords_mut(), min_gap, t_max);
            Ok(batch)
        }
        Method::GeometricDrs => {
            let (_, t_max) = require_time_axis(cfg.method, constraint)?;
            design_geometric_drs(m, t_max, cfg.budget, cfg.r_max, constraint, oracle, seed)
        }
        Method::BetaDrs => {
            let (_, t_max) = require_time_axis(cfg.method, constraint)?;
            design_beta_drs(m, t_max, cfg.budget, constraint, oracle, seed)
        }
        Method::CeGrid => {
            require_time_axis(cfg.method, constraint)?;
            design_ce_grid(m, constraint, oracle, cfg.budget, cfg.grid_size, seed)
        }
        Method::CeGp => {
            require_time_axis(cfg.method, constraint)?;
            design_ce_gp(m, constraint, oracle, cfg.budget, &cfg.gp, false, seed)
        }
        Method::CeGpGreedy => {
            require_time_axis(cfg.method, constraint)?;
            design_ce_gp(m, constraint, oracle, cfg.budget, &cfg.gp, true, seed)
        }
        Method::SgaAdam => design_sga_adam(m, constraint, oracle, cfg.budget, &cfg.adam, seed),
        Method::Smc => {
            design_annealed_smc(m, constraint, oracle, cfg.budget, &cfg.smc, lambda, seed)
        }
    }
}
