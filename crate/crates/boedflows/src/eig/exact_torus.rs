//! Closed-form information gain for the linear-in-parameters circular
//! model. With feature map h(xi) and standard-normal parameter prior, the
//! posterior is Gaussian and
//!
//!   EIG(xi_1..xi_m) = 1/2 ln det( I_2 + sigma_y^-2 sum_j h_j h_j^T ),
//!
//! with gradient  d EIG / d xi_j = sigma_y^-2 h_j'^T M^{-1} h_j  for
//! M the matrix inside the determinant. Both are exact, cheap, and used as
//! the ground-truth scorer in the circular benchmark.

use nalgebra::Matrix2;
use rand_chacha::ChaCha8Rng;

use crate::design::DesignBatch;
use crate::eig::{EigEstimate, EigMode, EigOracle};
use crate::error::{Error, Result};
use crate::models::TorusLinear;

fn information_matrix(model: &TorusLinear, batch: &DesignBatch) -> Matrix2<f64> {
    let inv_var = 1.0 / (model.sigma_y * model.sigma_y);
    let mut m = Matrix2::identity();
    for point in batch.points() {
        let h = model.h(point[0]);
        m[(0, 0)] += inv_var * h[0] * h[0];
        m[(0, 1)] += inv_var * h[0] * h[1];
        m[(1, 0)] += inv_var * h[1] * h[0];
        m[(1, 1)] += inv_var * h[1] * h[1];
    }
    m
}

fn check(batch: &DesignBatch) -> Result<()> {
    if batch.dim() != 1 {
        return Err(Error::Estimator(format!(
            "circular criterion expects scalar angles, got dim={}",
            batch.dim()
        )));
    }
    Ok(())
}

/// Exact criterion value for a batch of angles.
pub fn exact_torus_eig(model: &TorusLinear, batch: &DesignBatch) -> Result<f64> {
    check(batch)?;
    let det = information_matrix(model, batch).determinant();
    if !(det > 0.0) {
        return Err(Error::NonFinite("information matrix determinant".into()));
    }
    Ok(0.5 * det.ln())
}

/// Exact gradient, one entry per angle.
pub fn exact_torus_eig_grad(model: &TorusLinear, batch: &DesignBatch) -> Result<Vec<f64>> {
    check(batch)?;
    let m = information_matrix(model, batch);
    let inv = m
        .try_inverse()
        .ok_or_else(|| Error::NonFinite("singular information matrix".into()))?;
    let inv_var = 1.0 / (model.sigma_y * model.sigma_y);
    let grad = batch
        .points()
        .map(|point| {
            let h = model.h(point[0]);
            let hp = model.h_grad(point[0]);
            let m_h = [
                inv[(0, 0)] * h[0] + inv[(0, 1)] * h[1],
                inv[(1, 0)] * h[0] + inv[(1, 1)] * h[1],
            ];
            inv_var * (hp[0] * m_h[0] + hp[1] * m_h[1])
        })
        .collect();
    Ok(grad)
}

/// [`EigOracle`] wrapper around the closed form.
pub struct ExactTorusOracle {
    pub model: TorusLinear,
}

impl ExactTorusOracle {
    pub fn new(model: TorusLinear) -> Self {
        Self { model }
    }
}

impl EigOracle for ExactTorusOracle {
    fn value(&self, batch: &DesignBatch, _rng: &mut ChaCha8Rng) -> Result<EigEstimate> {
        Ok(EigEstimate {
            value: exact_torus_eig(&self.model, batch)?,
            std_error: 0.0,
            n_outer: 0,
            n_inner: 0,
            randomness_mode: EigMode::Exact,
        })
    }

    fn grad(&self, batch: &DesignBatch, _rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
        exact_torus_eig_grad(&self.model, batch)
    }

    fn mode(&self) -> EigMode {
        EigMode::Exact
    }
}
