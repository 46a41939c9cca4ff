//! Interacting-particle Langevin flows over design laws.
//!
//! A design law (a probability measure over design batches) is represented
//! by a finite particle system and evolved by discretised Langevin dynamics
//! on an entropy-regularised information-gain objective. Four couplings are
//! provided, differing in which product structure they impose on the law:
//!
//! * [`Algorithm::Joint`] — independent chains in the full batch space
//!   `Ξ^m`; plain stochastic-gradient Langevin per chain.
//! * [`Algorithm::Mf`] — one ensemble per batch slot (independent,
//!   non-identical marginals); slots interact through partner tuples drawn
//!   from the other ensembles.
//! * [`Algorithm::MfSub`] — the same with a random coordinate subset
//!   updated per step.
//! * [`Algorithm::Iid`] / [`Algorithm::IidRep`] — a single shared marginal;
//!   every particle plays each batch slot against partner tuples drawn from
//!   its own ensemble, optionally with a pairwise repulsion term.
//!
//! All randomness is drawn from counter-based substreams keyed by
//! `(seed, particle, step, purpose)`, so runs are reproducible bit-for-bit
//! and particle updates within a step are order-independent.

use std::sync::Arc;
use std::time::Instant;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::constraint::{wrapped_diff, ConstraintSpec};
use crate::design::{DesignBatch, ParticleEnsemble};
use crate::eig::{EigEstimate, EigOracle, NmcBudget, NmcOracle, Toy1dGridOracle};
use crate::error::{Error, Result};
use crate::models::Model;
use crate::stream::{substream, Purpose};

/// Fraction of coordinates updated per step by [`Algorithm::MfSub`].
pub const MF_SUB_FRACTION: f64 = 0.5;

/// Particle coupling used by the flow.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Algorithm {
    /// Independent Langevin chains in the joint batch space.
    Joint,
    /// Per-slot ensembles (mean-field system), all coordinates updated.
    Mf,
    /// Per-slot ensembles, random coordinate subset updated per step.
    MfSub,
    /// One shared ensemble; each particle is a single design point.
    Iid,
    /// `Iid` plus a pairwise repulsion drift (requires `eta > 0`).
    IidRep,
}

impl Algorithm {
    pub fn as_str(&self) -> &'static str {
        match self {
            Algorithm::Joint => "joint",
            Algorithm::Mf => "mf",
            Algorithm::MfSub => "mf_sub",
            Algorithm::Iid => "iid",
            Algorithm::IidRep => "iid_rep",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "joint" => Ok(Algorithm::Joint),
            "mf" => Ok(Algorithm::Mf),
            "mf_sub" | "mfsub" => Ok(Algorithm::MfSub),
            "iid" => Ok(Algorithm::Iid),
            "iid_rep" | "iidrep" => Ok(Algorithm::IidRep),
            other => Err(Error::Parse {
                key: "algorithm".into(),
                reason: format!("unknown algorithm `{other}` (expected joint|mf|mf_sub|iid|iid_rep)"),
            }),
        }
    }
}

/// Whether gradient oracles built from this config redraw their Monte Carlo
/// samples on every call or hold one set fixed for the whole run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum GradientRandomness {
    Frozen,
    Fresh,
}

impl GradientRandomness {
    pub fn as_str(&self) -> &'static str {
        match self {
            GradientRandomness::Frozen => "frozen",
            GradientRandomness::Fresh => "fresh",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "frozen" => Ok(GradientRandomness::Frozen),
            "fresh" => Ok(GradientRandomness::Fresh),
            other => Err(Error::Parse {
                key: "gradient_randomness".into(),
                reason: format!("expected frozen|fresh, got `{other}`"),
            }),
        }
    }
}

/// Hyper-parameters of one particle flow.
///
/// Serialises to/from a flat `key = value` file; the canonical keys are the
/// field names below (`λ`, `γ`, `N`, `K`, `K_rep`, `η`, `δ_rep`, ...), with
/// ASCII spellings (`lambda`, `gamma`, `eta`, `delta_rep`) accepted on input.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowConfig {
    pub algorithm: Algorithm,
    /// Regularisation temperature λ; per-slot algorithms use λ_m = λ/m.
    pub lambda: f64,
    /// Step size γ.
    pub gamma: f64,
    pub n_steps: usize,
    /// Particles per ensemble (chains for `Joint`). Config key `N`.
    pub n_particles: usize,
    /// Partner tuples averaged per drift estimate. Config key `K`.
    pub k_tuples: usize,
    /// Repulsion partners averaged per drift estimate. Config key `K_rep`.
    pub k_rep: usize,
    /// Repulsion strength η (only used by `IidRep`).
    pub eta: f64,
    /// Repulsion softening δ_rep in r(z) = 1/(‖z‖² + δ_rep²).
    pub delta_rep: f64,
    /// Outer Monte Carlo samples of the built-in estimator.
    pub n_outer: usize,
    /// Inner (contrastive) Monte Carlo samples of the built-in estimator.
    pub n_inner: usize,
    pub seed: u64,
    pub gradient_randomness: GradientRandomness,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::Iid,
            lambda: 0.05,
            gamma: 0.01,
            n_steps: 1000,
            n_particles: 50,
            k_tuples: 1,
            k_rep: 2,
            eta: 0.01,
            delta_rep: 1.0,
            n_outer: NmcBudget::OPTIMISATION.n_outer,
            n_inner: NmcBudget::OPTIMISATION.n_inner,
            seed: 0,
            gradient_randomness: GradientRandomness::Frozen,
        }
    }
}

impl FlowConfig {
    /// Temperature seen by per-slot updates: λ_m = λ/m.
    pub fn lambda_m(&self, m: usize) -> f64 {
        assert!(m >= 1);
        self.lambda / m as f64
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0) {
            return Err(Error::Config(format!("λ must be positive, got {}", self.lambda)));
        }
        if !(self.gamma > 0.0) {
            return Err(Error::Config(format!("γ must be positive, got {}", self.gamma)));
        }
        if self.n_particles == 0 {
            return Err(Error::Config("N must be at least 1".into()));
        }
        if self.k_tuples == 0 || self.k_rep == 0 {
            return Err(Error::Config("K and K_rep must be at least 1".into()));
        }
        if !(self.eta >= 0.0) {
            return Err(Error::Config(format!("η must be nonnegative, got {}", self.eta)));
        }
        if !(self.delta_rep > 0.0) {
            return Err(Error::Config(format!(
                "δ_rep must be positive, got {}",
                self.delta_rep
            )));
        }
        if self.n_outer == 0 || self.n_inner == 0 {
            return Err(Error::Config("n_outer and n_inner must be at least 1".into()));
        }
        if self.algorithm == Algorithm::IidRep && !(self.eta > 0.0) {
            return Err(Error::Config(
                "algorithm iid_rep needs η > 0 (use iid for η = 0)".into(),
            ));
        }
        Ok(())
    }

    /// Set one field from its config-file key. Returns `Ok(false)` when the
    /// key does not belong to `FlowConfig` (so callers can try their own
    /// keys), `Err` when the key is known but the value does not parse.
    pub fn apply_key(&mut self, key: &str, value: &str) -> Result<bool> {
        fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
            value.trim().parse().map_err(|_| Error::Parse {
                key: key.into(),
                reason: format!("invalid value `{value}`"),
            })
        }
        match key {
            "algorithm" => self.algorithm = Algorithm::parse(value)?,
            "λ" | "lambda" => self.lambda = num(key, value)?,
            "γ" | "gamma" => self.gamma = num(key, value)?,
            "n_steps" => self.n_steps = num(key, value)?,
            "N" => self.n_particles = num(key, value)?,
            "K" => self.k_tuples = num(key, value)?,
            "K_rep" => self.k_rep = num(key, value)?,
            "η" | "eta" => self.eta = num(key, value)?,
            "δ_rep" | "delta_rep" => self.delta_rep = num(key, value)?,
            "n_outer" => self.n_outer = num(key, value)?,
            "n_inner" => self.n_inner = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "gradient_randomness" => self.gradient_randomness = GradientRandomness::parse(value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    /// Canonical flat representation (keys as written by config files).
    pub fn to_pairs(&self) -> Vec<(&'static str, String)> {
        vec![
            ("algorithm", self.algorithm.as_str().to_string()),
            ("λ", self.lambda.to_string()),
            ("γ", self.gamma.to_string()),
            ("n_steps", self.n_steps.to_string()),
            ("N", self.n_particles.to_string()),
            ("K", self.k_tuples.to_string()),
            ("K_rep", self.k_rep.to_string()),
            ("η", self.eta.to_string()),
            ("δ_rep", self.delta_rep.to_string()),
            ("n_outer", self.n_outer.to_string()),
            ("n_inner", self.n_inner.to_string()),
            ("seed", self.seed.to_string()),
            (
                "gradient_randomness",
                self.gradient_randomness.as_str().to_string(),
            ),
        ]
    }

    /// Strict flat parse: every pair must be a `FlowConfig` key.
    pub fn from_pairs(pairs: &[(String, String)]) -> Result<Self> {
        let mut cfg = FlowConfig::default();
        for (k, v) in pairs {
            if !cfg.apply_key(k, v)? {
                return Err(Error::Parse {
                    key: k.clone(),
                    reason: "unknown flow config key".into(),
                });
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Reference measure ρ supplying the confining drift λ∇log ρ.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum ReferenceMeasure {
    /// Uniform on the constraint set: zero drift inside the domain.
    Uniform,
    /// Isotropic Gaussian N(mean, σ_ρ² I): score −(ξ − mean)/σ_ρ².
    Gaussian { mean: Vec<f64>, sigma: f64 },
}

impl ReferenceMeasure {
    /// ∇ log ρ at a single design point.
    pub fn score(&self, x: &[f64]) -> Vec<f64> {
        match self {
            ReferenceMeasure::Uniform => vec![0.0; x.len()],
            ReferenceMeasure::Gaussian { mean, sigma } => {
                let s2 = sigma * sigma;
                x.iter().zip(mean).map(|(xi, mi)| -(xi - mi) / s2).collect()
            }
        }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if let ReferenceMeasure::Gaussian { mean, sigma } = self {
            if mean.len() != dim {
                return Err(Error::Config(format!(
                    "reference mean has {} coordinates for dim {dim}",
                    mean.len()
                )));
            }
            if !(*sigma > 0.0) {
                return Err(Error::Config("reference σ must be positive".into()));
            }
        }
        Ok(())
    }
}

/// Where initial particles are drawn from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum InitSpec {
    /// Uniform over the constraint's natural domain (standard normal when
    /// unconstrained).
    Domain,
    /// Uniform in a sub-box (e.g. a small window around a known local mode).
    Box { lo: Vec<f64>, hi: Vec<f64> },
    /// Isotropic Gaussian.
    Gaussian { mean: Vec<f64>, sd: f64 },
}

impl InitSpec {
    pub fn sample(&self, constraint: &ConstraintSpec, dim: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        match self {
            InitSpec::Domain => constraint.sample_domain(dim, rng),
            InitSpec::Box { lo, hi } => (0..dim).map(|k| rng.gen_range(lo[k]..hi[k])).collect(),
            InitSpec::Gaussian { mean, sd } => (0..dim)
                .map(|k| mean[k] + sd * rng.sample::<f64, _>(StandardNormal))
                .collect(),
        }
    }
}

/// Inverse-quadratic repulsion potential r(z) = 1/(‖z‖² + δ_rep²).
pub fn repulsion_potential(z: &[f64], delta_rep: f64) -> f64 {
    let q: f64 = z.iter().map(|v| v * v).sum();
    1.0 / (q + delta_rep * delta_rep)
}

/// ∇r(z) = −2z/(‖z‖² + δ_rep²)². Odd in z, and exactly zero at z = 0, so a
/// particle exerts no force on itself.
pub fn repulsion_grad(z: &[f64], delta_rep: f64) -> Vec<f64> {
    let q: f64 = z.iter().map(|v| v * v).sum();
    let denom = q + delta_rep * delta_rep;
    let scale = -2.0 / (denom * denom);
    z.iter().map(|v| scale * v).collect()
}

/// Particle state of a flow at some step.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowState {
    pub step: usize,
    pub kind: StateKind,
}

#[derive(Clone, Debug, PartialEq)]
pub enum StateKind {
    /// One design batch per chain.
    Joint(Vec<DesignBatch>),
    /// One ensemble per batch slot.
    Mf(Vec<ParticleEnsemble>),
    /// A single shared ensemble of design points.
    Iid(ParticleEnsemble),
}

impl FlowState {
    /// Coordinate-wise mean position over all particles (length `dim`).
    pub fn mean_position(&self) -> Vec<f64> {
        match &self.kind {
            StateKind::Joint(chains) => {
                let dim = chains[0].dim();
                let mut out = vec![0.0; dim];
                let total = (chains.len() * chains[0].m()) as f64;
                for b in chains {
                    for p in b.points() {
                        for (o, c) in out.iter_mut().zip(p) {
                            *o += c / total;
                        }
                    }
                }
                out
            }
            StateKind::Mf(ensembles) => {
                let dim = ensembles[0].dim();
                let mut out = vec![0.0; dim];
                let total: usize = ensembles.iter().map(|e| e.len()).sum();
                for e in ensembles {
                    for p in e.points() {
                        for (o, c) in out.iter_mut().zip(p) {
                            *o += c / total as f64;
                        }
                    }
                }
                out
            }
            StateKind::Iid(e) => e.mean(),
        }
    }
}

/// One trajectory-log entry.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajRow {
    pub step: usize,
    pub algorithm: String,
    /// Low-fidelity criterion value of a probe batch assembled from the
    /// current state.
    pub probe_eig: f64,
    /// Mean particle position (`dim` entries).
    pub mean: Vec<f64>,
    /// Milliseconds since the start of the run.
    pub wallclock_ms: f64,
}

/// Retention policy for post-burn-in joint chains, the candidate source for
/// trajectory-tail extraction.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TailSpec {
    /// Fraction of the run discarded as burn-in.
    pub burn_fraction: f64,
    /// Keep every `thin`-th step after burn-in.
    pub thin: usize,
    /// Hard cap on retained batches per chain (stride widens to fit).
    pub max_per_chain: usize,
}

impl Default for TailSpec {
    fn default() -> Self {
        Self {
            burn_fraction: 0.8,
            thin: 1,
            max_per_chain: 25,
        }
    }
}

/// One retained tail batch.
#[derive(Clone, Debug)]
pub struct TailEntry {
    pub step: usize,
    pub chain: usize,
    pub batch: DesignBatch,
}

/// Result of a full flow run.
#[derive(Clone, Debug)]
pub struct FlowRun {
    pub state: FlowState,
    pub trajectory: Vec<TrajRow>,
    /// Post-burn-in joint chains (empty unless a `TailSpec` was set and the
    /// algorithm is `Joint`).
    pub tail: Vec<TailEntry>,
}

/// A fully assembled flow: configuration, problem geometry, reference
/// measure, initial law and criterion oracle.
///
/// Fields are public so tests can assemble off-contract variants (e.g. a
/// zero step size, or `IidRep` with η = 0) that [`Flow::new`] would reject.
pub struct Flow {
    pub config: FlowConfig,
    /// Batch size m.
    pub m: usize,
    /// Dimension of one design point.
    pub dim: usize,
    pub constraint: ConstraintSpec,
    pub reference: ReferenceMeasure,
    pub init: InitSpec,
    pub oracle: Arc<dyn EigOracle>,
    /// Trajectory rows are logged every `log_every` steps (and at step 0
    /// and the final step).
    pub log_every: usize,
    /// When set (Joint only), retain post-burn-in chains for extraction.
    pub tail: Option<TailSpec>,
}

impl Flow {
    pub fn new(
        config: FlowConfig,
        m: usize,
        dim: usize,
        constraint: ConstraintSpec,
        reference: ReferenceMeasure,
        init: InitSpec,
        oracle: Arc<dyn EigOracle>,
    ) -> Result<Self> {
        config.validate()?;
        if m == 0 || dim == 0 {
            return Err(Error::Config("flow needs m ≥ 1 and dim ≥ 1".into()));
        }
        constraint.validate(m)?;
        reference.validate(dim)?;
        let log_every = (config.n_steps / 20).max(1);
        Ok(Self {
            config,
            m,
            dim,
            constraint,
            reference,
            init,
            oracle,
            log_every,
            tail: None,
        })
    }

    /// Build a flow against a benchmark model with the default oracle
    /// routing: closed-form criterion for the circular model, quadrature
    /// grid for the 1D toy at m = 1, nested Monte Carlo otherwise (frozen
    /// or fresh per `config.gradient_randomness`, at the optimisation-tier
    /// budget from the config).
    pub fn for_model(
        config: FlowConfig,
        model: &Arc<dyn Model>,
        m: usize,
        reference: ReferenceMeasure,
        init: InitSpec,
    ) -> Result<Self> {
        let dim = model.design_dim();
        let oracle = default_oracle(&config, model, m)?;
        Flow::new(
            config,
            m,
            dim,
            model.constraint(),
            reference,
            init,
            oracle,
        )
    }

    /// Draw the initial particle system (streams `(seed, pid, 0, Init)`)
    /// and enforce the constraint.
    pub fn init_state(&self) -> FlowState {
        let cfg = &self.config;
        let kind = match cfg.algorithm {
            Algorithm::Joint => {
                let chains = (0..cfg.n_particles)
                    .map(|r| {
                        let mut rng = substream(cfg.seed, r as u64, 0, Purpose::Init);
                        let mut coords = Vec::with_capacity(self.m * self.dim);
                        for _ in 0..self.m {
                            coords.extend(self.init.sample(&self.constraint, self.dim, &mut rng));
                        }
                        let mut batch = DesignBatch::from_flat(self.dim, coords)
                            .expect("init coordinates are finite");
                        self.constraint.apply_batch(&mut batch);
                        batch
                    })
                    .collect();
                StateKind::Joint(chains)
            }
            Algorithm::Mf | Algorithm::MfSub => {
                let n = cfg.n_particles;
                let ensembles = (0..self.m)
                    .map(|b| {
                        ParticleEnsemble::from_fn(n, self.dim, |i, p| {
                            let pid = (b * n + i) as u64;
                            let mut rng = substream(cfg.seed, pid, 0, Purpose::Init);
                            let x = self.init.sample(&self.constraint, self.dim, &mut rng);
                            p.copy_from_slice(&x);
                            self.constraint.apply_point(p);
                        })
                    })
                    .collect();
                StateKind::Mf(ensembles)
            }
            Algorithm::Iid | Algorithm::IidRep => {
                let e = ParticleEnsemble::from_fn(cfg.n_particles, self.dim, |i, p| {
                    let mut rng = substream(cfg.seed, i as u64, 0, Purpose::Init);
                    let x = self.init.sample(&self.constraint, self.dim, &mut rng);
                    p.copy_from_slice(&x);
                    self.constraint.apply_point(p);
                });
                StateKind::Iid(e)
            }
        };
        FlowState { step: 0, kind }
    }

    /// Advance the state by one step. Updates are synchronous: every
    /// particle reads the start-of-step snapshot, so evaluation order does
    /// not matter.
    pub fn step(&self, state: &mut FlowState) -> Result<()> {
        let n = state.step;
        match &mut state.kind {
            StateKind::Joint(chains) => self.step_joint(chains, n)?,
            StateKind::Mf(ensembles) => self.step_mf(ensembles, n)?,
            StateKind::Iid(e) => self.step_iid(e, n)?,
        }
        state.step = n + 1;
        Ok(())
    }

    /// SGLD in the joint batch space: 𝛏 ← 𝛏 + γ(∇Ĝ + λ_m ∇log ρ_m) +
    /// √(2 λ_m γ) Z, then constraint repair. The product reference ρ_m =
    /// ρ^⊗m scores each slot independently.
    fn step_joint(&self, chains: &mut [DesignBatch], n: usize) -> Result<()> {
        let cfg = &self.config;
        let lam_m = cfg.lambda_m(self.m);
        let noise_sd = (2.0 * lam_m * cfg.gamma).sqrt();
        for (r, batch) in chains.iter_mut().enumerate() {
            let mut oracle_rng = substream(cfg.seed, r as u64, n as u64, Purpose::OracleCall);
            let grad = self.oracle.grad(batch, &mut oracle_rng)?;
            let mut noise_rng = substream(cfg.seed, r as u64, n as u64, Purpose::Noise);
            for j in 0..self.m {
                let score = self.reference.score(batch.point(j));
                let p = batch.point_mut(j);
                for k in 0..self.dim {
                    let drift = grad[j * self.dim + k] + lam_m * score[k];
                    if !drift.is_finite() {
                        return Err(Error::Flow {
                            step: n,
                            detail: format!("non-finite drift in chain {r}, slot {j}"),
                        });
                    }
                    let z: f64 = StandardNormal.sample(&mut noise_rng);
                    p[k] += cfg.gamma * drift + noise_sd * z;
                }
            }
            self.constraint.apply_batch(batch);
            if !batch.is_finite() {
                return Err(Error::Flow {
                    step: n,
                    detail: format!("non-finite state in chain {r}"),
                });
            }
        }
        Ok(())
    }

    /// Mean-field update: coordinate b's particles drift along the slot-b
    /// criterion gradient against partner tuples drawn from the other
    /// coordinates' ensembles, plus λ_m ∇log ρ, with noise √(2 λ_m γ).
    /// `MfSub` updates a uniformly chosen coordinate subset.
    fn step_mf(&self, ensembles: &mut [ParticleEnsemble], n: usize) -> Result<()> {
        let cfg = &self.config;
        let lam_m = cfg.lambda_m(self.m);
        let noise_sd = (2.0 * lam_m * cfg.gamma).sqrt();
        let n_particles = cfg.n_particles;

        let update: Vec<bool> = match cfg.algorithm {
            Algorithm::MfSub => {
                let size = ((MF_SUB_FRACTION * self.m as f64).round() as usize).clamp(1, self.m);
                let mut rng = substream(cfg.seed, 0, n as u64, Purpose::CoordSubset);
                let chosen = rand::seq::index::sample(&mut rng, self.m, size);
                let mut mask = vec![false; self.m];
                for b in chosen {
                    mask[b] = true;
                }
                mask
            }
            _ => vec![true; self.m],
        };

        let snapshot = ensembles.to_vec();
        for (b, ensemble) in ensembles.iter_mut().enumerate() {
            if !update[b] {
                continue;
            }
            for i in 0..n_particles {
                let pid = (b * n_particles + i) as u64;
                let mut tuple_rng = substream(cfg.seed, pid, n as u64, Purpose::Tuples);
                let mut oracle_rng = substream(cfg.seed, pid, n as u64, Purpose::OracleCall);
                let xi = ensemble.point(i).to_vec();
                let drift_phi = estimate_mf_drift(
                    self.oracle.as_ref(),
                    &snapshot,
                    b,
                    &xi,
                    cfg.k_tuples,
                    &mut tuple_rng,
                    &mut oracle_rng,
                )?;
                let score = self.reference.score(&xi);
                let mut noise_rng = substream(cfg.seed, pid, n as u64, Purpose::Noise);
                let p = ensemble.point_mut(i);
                for k in 0..self.dim {
                    let drift = drift_phi[k] + lam_m * score[k];
                    if !drift.is_finite() {
                        return Err(Error::Flow {
                            step: n,
                            detail: format!("non-finite drift at coordinate {b}, particle {i}"),
                        });
                    }
                    let z: f64 = StandardNormal.sample(&mut noise_rng);
                    p[k] += cfg.gamma * drift + noise_sd * z;
                }
                self.constraint.apply_point(p);
                if p.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Flow {
                        step: n,
                        detail: format!("non-finite state at coordinate {b}, particle {i}"),
                    });
                }
            }
        }
        Ok(())
    }

    /// Shared-marginal update: ξ ← ξ + γ(m ∇Φ̂ − η ∇Ψ̂ + λ ∇log ρ) +
    /// √(2 λ γ) Z. The repulsion block is skipped entirely when η = 0,
    /// which makes `IidRep` at η = 0 bit-identical to `Iid`.
    fn step_iid(&self, ensemble: &mut ParticleEnsemble, n: usize) -> Result<()> {
        let cfg = &self.config;
        let noise_sd = (2.0 * cfg.lambda * cfg.gamma).sqrt();
        let wrapped = self.constraint.is_wrapped();
        let snapshot = ensemble.clone();
        for i in 0..cfg.n_particles {
            let pid = i as u64;
            let mut tuple_rng = substream(cfg.seed, pid, n as u64, Purpose::Tuples);
            let mut oracle_rng = substream(cfg.seed, pid, n as u64, Purpose::OracleCall);
            let xi = ensemble.point(i).to_vec();
            let grad_phi = estimate_phi_drift(
                self.oracle.as_ref(),
                &snapshot,
                &xi,
                self.m,
                cfg.k_tuples,
                &mut tuple_rng,
                &mut oracle_rng,
            )?;
            let rep = if cfg.eta > 0.0 {
                let mut rep_rng = substream(cfg.seed, pid, n as u64, Purpose::Repulsion);
                estimate_repulsion_drift(
                    &snapshot,
                    &xi,
                    cfg.k_rep,
                    cfg.delta_rep,
                    wrapped,
                    &mut rep_rng,
                )
            } else {
                vec![0.0; self.dim]
            };
            let score = self.reference.score(&xi);
            let mut noise_rng = substream(cfg.seed, pid, n as u64, Purpose::Noise);
            let p = ensemble.point_mut(i);
            for k in 0..self.dim {
                let drift =
                    self.m as f64 * grad_phi[k] - cfg.eta * rep[k] + cfg.lambda * score[k];
                if !drift.is_finite() {
                    return Err(Error::Flow {
                        step: n,
                        detail: format!("non-finite drift at particle {i}"),
                    });
                }
                let z: f64 = StandardNormal.sample(&mut noise_rng);
                p[k] += cfg.gamma * drift + noise_sd * z;
            }
            self.constraint.apply_point(p);
            if p.iter().any(|v| !v.is_finite()) {
                return Err(Error::Flow {
                    step: n,
                    detail: format!("non-finite state at particle {i}"),
                });
            }
        }
        Ok(())
    }

    /// Assemble and score a probe batch summarising the current state:
    /// best chain for `Joint`, one uniformly drawn particle per coordinate
    /// for the mean-field algorithms, m i.i.d. particles for the shared
    /// ensemble. The batch is repaired before scoring.
    pub fn probe(&self, state: &FlowState) -> Result<(DesignBatch, EigEstimate)> {
        let cfg = &self.config;
        let step = state.step as u64;
        let mut index_rng = substream(cfg.seed, 0, step, Purpose::Probe);
        let mut score_rng = substream(cfg.seed, 1, step, Purpose::Probe);
        match &state.kind {
            StateKind::Joint(chains) => {
                let mut best: Option<(DesignBatch, EigEstimate)> = None;
                for batch in chains {
                    let est = self.oracle.value(batch, &mut score_rng)?;
                    if best.as_ref().is_none_or(|(_, b)| est.value > b.value) {
                        best = Some((batch.clone(), est));
                    }
                }
                Ok(best.expect("at least one chain"))
            }
            StateKind::Mf(ensembles) => {
                let mut coords = Vec::with_capacity(self.m * self.dim);
                for e in ensembles {
                    let i = index_rng.gen_range(0..e.len());
                    coords.extend_from_slice(e.point(i));
                }
                let mut batch = DesignBatch::from_flat(self.dim, coords)?;
                self.constraint.apply_batch(&mut batch);
                let est = self.oracle.value(&batch, &mut score_rng)?;
                Ok((batch, est))
            }
            StateKind::Iid(e) => {
                let mut coords = Vec::with_capacity(self.m * self.dim);
                for _ in 0..self.m {
                    let i = index_rng.gen_range(0..e.len());
                    coords.extend_from_slice(e.point(i));
                }
                let mut batch = DesignBatch::from_flat(self.dim, coords)?;
                self.constraint.apply_batch(&mut batch);
                let est = self.oracle.value(&batch, &mut score_rng)?;
                Ok((batch, est))
            }
        }
    }

    fn traj_row(&self, state: &FlowState, t0: Instant) -> Result<TrajRow> {
        let (_, est) = self.probe(state)?;
        Ok(TrajRow {
            step: state.step,
            algorithm: self.config.algorithm.as_str().to_string(),
            probe_eig: est.value,
            mean: state.mean_position(),
            wallclock_ms: t0.elapsed().as_secs_f64() * 1e3,
        })
    }

    /// Run `n_steps` from a fresh initial state, logging a trajectory row
    /// at step 0, every `log_every` steps, and at the final step.
    pub fn run(&self) -> Result<FlowRun> {
        let t0 = Instant::now();
        let cfg = &self.config;
        let mut state = self.init_state();
        let mut trajectory = vec![self.traj_row(&state, t0)?];
        let mut tail: Vec<TailEntry> = Vec::new();

        // Resolve the tail stride once so the retained set respects
        // max_per_chain without eviction logic.
        let tail_plan = self.tail.as_ref().map(|ts| {
            let burn_end = (ts.burn_fraction * cfg.n_steps as f64).ceil() as usize;
            let kept_steps = cfg.n_steps.saturating_sub(burn_end).max(1);
            let stride = ts.thin.max(1).max(kept_steps.div_ceil(ts.max_per_chain.max(1)));
            (burn_end, stride)
        });

        for _ in 0..cfg.n_steps {
            self.step(&mut state)?;
            if state.step.is_multiple_of(self.log_every) || state.step == cfg.n_steps {
                trajectory.push(self.traj_row(&state, t0)?);
            }
            if let (Some((burn_end, stride)), StateKind::Joint(chains)) =
                (tail_plan, &state.kind)
            {
                if state.step > burn_end && (state.step - burn_end).is_multiple_of(stride) {
                    for (r, batch) in chains.iter().enumerate() {
                        tail.push(TailEntry {
                            step: state.step,
                            chain: r,
                            batch: batch.clone(),
                        });
                    }
                }
            }
        }
        // Dedupe a final row that coincides with a log_every row.
        trajectory.dedup_by_key(|row| row.step);
        Ok(FlowRun {
            state,
            trajectory,
            tail,
        })
    }
}

/// Default oracle routing for a benchmark model: exact closed form for the
/// circular model, quadrature grid for the 1D toy at m = 1, nested Monte
/// Carlo otherwise. Frozen estimators draw their fixed sample set from
/// `(seed, 0, 0, OracleDraws)`.
pub fn default_oracle(
    config: &FlowConfig,
    model: &Arc<dyn Model>,
    m: usize,
) -> Result<Arc<dyn EigOracle>> {
    use crate::models::{TorusLinear, Toy1d};
    if let Some(torus) = model.as_any().downcast_ref::<TorusLinear>() {
        return Ok(Arc::new(crate::eig::ExactTorusOracle::new(torus.clone())));
    }
    if m == 1 {
        if let Some(toy) = model.as_any().downcast_ref::<Toy1d>() {
            return Ok(Arc::new(Toy1dGridOracle::default_grid(toy.clone())));
        }
    }
    let budget = NmcBudget::new(config.n_outer, config.n_inner);
    let oracle = match config.gradient_randomness {
        GradientRandomness::Fresh => NmcOracle::fresh(Arc::clone(model), budget)?,
        GradientRandomness::Frozen => {
            let mut rng = substream(config.seed, 0, 0, Purpose::OracleDraws);
            NmcOracle::frozen(Arc::clone(model), budget, m, &mut rng)?
        }
    };
    Ok(Arc::new(oracle))
}

/// Tuple-subsampled mean-field drift for coordinate `slot`: average over
/// `k_tuples` random batches — one partner drawn uniformly from every other
/// coordinate's ensemble, `xi` in slot `slot` — of the slot gradient.
/// Conditionally unbiased for the exhaustive tuple average given the
/// snapshot.
pub fn estimate_mf_drift(
    oracle: &dyn EigOracle,
    pools: &[ParticleEnsemble],
    slot: usize,
    xi: &[f64],
    k_tuples: usize,
    tuple_rng: &mut ChaCha8Rng,
    oracle_rng: &mut ChaCha8Rng,
) -> Result<Vec<f64>> {
    let m = pools.len();
    let dim = xi.len();
    let mut acc = vec![0.0; dim];
    let mut coords = vec![0.0; m * dim];
    for _ in 0..k_tuples {
        for (c, pool) in pools.iter().enumerate() {
            let src: &[f64] = if c == slot {
                xi
            } else {
                pool.point(tuple_rng.gen_range(0..pool.len()))
            };
            coords[c * dim..(c + 1) * dim].copy_from_slice(src);
        }
        let batch = DesignBatch::from_flat(dim, coords.clone())?;
        let g = oracle.grad_slot(&batch, slot, oracle_rng)?;
        for (a, gi) in acc.iter_mut().zip(&g) {
            *a += gi / k_tuples as f64;
        }
    }
    Ok(acc)
}

/// Tuple-subsampled shared-marginal drift ∇Φ̂(ξ): average over `k_tuples`
/// partner tuples drawn uniformly with replacement from the ensemble (the
/// particle's own index included) of the first-slot gradient of the batch
/// (ξ, partners...). The caller scales by m.
pub fn estimate_phi_drift(
    oracle: &dyn EigOracle,
    pool: &ParticleEnsemble,
    xi: &[f64],
    m: usize,
    k_tuples: usize,
    tuple_rng: &mut ChaCha8Rng,
    oracle_rng: &mut ChaCha8Rng,
) -> Result<Vec<f64>> {
    let dim = xi.len();
    let mut acc = vec![0.0; dim];
    let mut coords = vec![0.0; m * dim];
    coords[..dim].copy_from_slice(xi);
    for _ in 0..k_tuples {
        for c in 1..m {
            let j = tuple_rng.gen_range(0..pool.len());
            coords[c * dim..(c + 1) * dim].copy_from_slice(pool.point(j));
        }
        let batch = DesignBatch::from_flat(dim, coords.clone())?;
        let g = oracle.grad_slot(&batch, 0, oracle_rng)?;
        for (a, gi) in acc.iter_mut().zip(&g) {
            *a += gi / k_tuples as f64;
        }
    }
    Ok(acc)
}

/// Subsampled repulsion drift ∇Ψ̂(ξ): average of ∇r(ξ − ξ_J) over `k_rep`
/// uniform partner indices (self allowed — the even potential gives zero
/// self-force). Differences wrap on circular domains.
pub fn estimate_repulsion_drift(
    pool: &ParticleEnsemble,
    xi: &[f64],
    k_rep: usize,
    delta_rep: f64,
    wrapped: bool,
    rng: &mut ChaCha8Rng,
) -> Vec<f64> {
    let dim = xi.len();
    let mut acc = vec![0.0; dim];
    let mut z = vec![0.0; dim];
    for _ in 0..k_rep {
        let j = rng.gen_range(0..pool.len());
        let partner = pool.point(j);
        for k in 0..dim {
            z[k] = if wrapped {
                wrapped_diff(xi[k], partner[k])
            } else {
                xi[k] - partner[k]
            };
        }
        let g = repulsion_grad(&z, delta_rep);
        for (a, gi) in acc.iter_mut().zip(&g) {
            *a += gi / k_rep as f64;
        }
    }
    acc
}
