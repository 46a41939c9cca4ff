//! Expected-information-gain oracles.
//!
//! Every optimiser and baseline in this crate talks to a design criterion
//! through the [`EigOracle`] trait, which exposes a (possibly stochastic)
//! value and a pathwise gradient for a design batch. Implementations:
//!
//! * [`NmcOracle`] — nested Monte Carlo, either redrawing samples on every
//!   call (the doubly-stochastic estimator used inside particle flows) or
//!   holding one set of draws fixed (a deterministic surrogate used for
//!   scoring and gradient checks),
//! * [`ExactTorusOracle`] — closed-form linear-Gaussian criterion,
//! * [`Toy1dGridOracle`] — quadrature landscape on a dense grid.

pub mod exact_torus;
pub mod nmc;
pub mod quadrature;

pub use exact_torus::{exact_torus_eig, exact_torus_eig_grad, ExactTorusOracle};
pub use nmc::{FrozenDraws, NmcBudget, NmcOracle};
pub use quadrature::{eig_quadrature_1d, gauss_hermite, Toy1dGridOracle, Toy1dLandscape};

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::design::DesignBatch;
use crate::error::Result;

/// How an oracle produces its numbers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum EigMode {
    /// Nested Monte Carlo with draws redrawn on every call.
    Fresh,
    /// Nested Monte Carlo with one fixed set of draws.
    Frozen,
    /// Closed-form evaluation.
    Exact,
    /// Interpolation on a precomputed quadrature grid.
    Grid,
}

/// A criterion evaluation together with its Monte Carlo uncertainty.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct EigEstimate {
    pub value: f64,
    /// Standard error of the outer average (zero for deterministic modes).
    pub std_error: f64,
    pub n_outer: usize,
    pub n_inner: usize,
    pub randomness_mode: EigMode,
}

/// A design criterion with a gradient, safe to share across worker threads.
pub trait EigOracle: Send + Sync {
    /// Estimate the criterion for `batch`.
    fn value(&self, batch: &DesignBatch, rng: &mut ChaCha8Rng) -> Result<EigEstimate>;

    /// Gradient with respect to every design coordinate, flattened
    /// slot-major (`m * dim` entries).
    fn grad(&self, batch: &DesignBatch, rng: &mut ChaCha8Rng) -> Result<Vec<f64>>;

    /// Gradient restricted to one slot (`dim` entries). The default just
    /// slices the full gradient; estimators override this when a single
    /// slot can be had cheaper.
    fn grad_slot(
        &self,
        batch: &DesignBatch,
        slot: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Vec<f64>> {
        let d = batch.dim();
        let g = self.grad(batch, rng)?;
        Ok(g[slot * d..(slot + 1) * d].to_vec())
    }

    fn mode(&self) -> EigMode;
}

/// Closure-backed oracle for tests and synthetic landscapes.
pub struct FnOracle<V, G> {
    value_fn: V,
    grad_fn: G,
}

impl<V, G> FnOracle<V, G>
where
    V: Fn(&DesignBatch) -> f64 + Send + Sync,
    G: Fn(&DesignBatch) -> Vec<f64> + Send + Sync,
{
    pub fn new(value_fn: V, grad_fn: G) -> Self {
        Self { value_fn, grad_fn }
    }
}

impl<V, G> EigOracle for FnOracle<V, G>
where
    V: Fn(&DesignBatch) -> f64 + Send + Sync,
    G: Fn(&DesignBatch) -> Vec<f64> + Send + Sync,
{
    fn value(&self, batch: &DesignBatch, _rng: &mut ChaCha8Rng) -> Result<EigEstimate> {
        Ok(EigEstimate {
            value: (self.value_fn)(batch),
            std_error: 0.0,
            n_outer: 0,
            n_inner: 0,
            randomness_mode: EigMode::Exact,
        })
    }

    fn grad(&self, batch: &DesignBatch, _rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
        Ok((self.grad_fn)(batch))
    }

    fn mode(&self) -> EigMode {
        EigMode::Exact
    }
}
