//! Design-space constraints and their enforcement.
//!
//! Constraints are applied *after* each full particle update (drift plus
//! noise): boxes clip, the circle wraps, and ordered sampling-time designs
//! go through a deterministic clip–sort–spread repair.

use std::f64::consts::PI;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::design::{DesignBatch, ParticleEnsemble};
use crate::error::{Error, Result};

/// Wrap an angle into the half-open interval [-pi, pi).
/// +pi maps to -pi; -pi maps to itself.
#[inline]
pub fn wrap_torus(z: f64) -> f64 {
    z - 2.0 * PI * ((z + PI) / (2.0 * PI)).floor()
}

/// Shortest signed circular difference a - b, in [-pi, pi).
#[inline]
pub fn wrapped_diff(a: f64, b: f64) -> f64 {
    wrap_torus(a - b)
}

/// Deterministic minimum-gap repair for ordered sampling times, in place:
/// clip to [0, t_max]; sort ascending; forward pass t_i = max(t_i, t_{i-1} +
/// min_gap); if the last time overflows t_max, pin it there and run a
/// backward pass t_i = min(t_i, t_{i+1} - min_gap). The result is sorted,
/// within [0, t_max], with all gaps >= min_gap, and the map is idempotent.
pub fn repair_times(times: &mut [f64], min_gap: f64, t_max: f64) {
    for t in times.iter_mut() {
        *t = t.clamp(0.0, t_max);
    }
    times.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let m = times.len();
    for i in 1..m {
        if times[i] < times[i - 1] + min_gap {
            times[i] = times[i - 1] + min_gap;
        }
    }
    if m >= 1 && times[m - 1] > t_max {
        times[m - 1] = t_max;
        for i in (0..m - 1).rev() {
            if times[i] > times[i + 1] - min_gap {
                times[i] = times[i + 1] - min_gap;
            }
        }
    }
}

/// The constraint attached to a design space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum ConstraintSpec {
    Unconstrained,
    /// Componentwise box: lo[k] <= x[k] <= hi[k].
    Box { lo: Vec<f64>, hi: Vec<f64> },
    /// Each coordinate is an angle identified modulo 2*pi, stored in [-pi, pi).
    Torus,
    /// Scalar sampling times in [0, t_max], sorted, consecutive gaps >= min_gap.
    OrderedMinGap { min_gap: f64, t_max: f64 },
}

impl ConstraintSpec {
    /// A cube [lo, hi]^dim.
    pub fn cube(lo: f64, hi: f64, dim: usize) -> Self {
        ConstraintSpec::Box {
            lo: vec![lo; dim],
            hi: vec![hi; dim],
        }
    }

    /// Check internal consistency and feasibility for a batch of size `m`.
    pub fn validate(&self, m: usize) -> Result<()> {
        match self {
            ConstraintSpec::Unconstrained | ConstraintSpec::Torus => Ok(()),
            ConstraintSpec::Box { lo, hi } => {
                if lo.len() != hi.len() || lo.is_empty() {
                    return Err(Error::Config("box bounds have mismatched lengths".into()));
                }
                if lo.iter().zip(hi).any(|(a, b)| !(a < b)) {
                    return Err(Error::Config("box bounds need lo < hi componentwise".into()));
                }
                Ok(())
            }
            ConstraintSpec::OrderedMinGap { min_gap, t_max } => {
                if !(*min_gap > 0.0) || !(*t_max > 0.0) {
                    return Err(Error::Config("min_gap and t_max must be positive".into()));
                }
                if (m.saturating_sub(1)) as f64 * min_gap > *t_max {
                    return Err(Error::Config(format!(
                        "infeasible constraint: (m-1)*min_gap = {} exceeds t_max = {}",
                        (m - 1) as f64 * min_gap,
                        t_max
                    )));
                }
                Ok(())
            }
        }
    }

    /// Enforce the constraint on a single point. For ordered sampling times
    /// this is the point-level part only (clipping to [0, t_max]); ordering
    /// is a batch-level property restored by [`ConstraintSpec::apply_batch`].
    pub fn apply_point(&self, x: &mut [f64]) {
        match self {
            ConstraintSpec::Unconstrained => {}
            ConstraintSpec::Box { lo, hi } => {
                for (k, v) in x.iter_mut().enumerate() {
                    *v = v.clamp(lo[k], hi[k]);
                }
            }
            ConstraintSpec::Torus => {
                for v in x.iter_mut() {
                    *v = wrap_torus(*v);
                }
            }
            ConstraintSpec::OrderedMinGap { t_max, .. } => {
                for v in x.iter_mut() {
                    *v = v.clamp(0.0, *t_max);
                }
            }
        }
    }

    /// Enforce the constraint on a whole batch (full repair for ordered
    /// sampling times).
    pub fn apply_batch(&self, batch: &mut DesignBatch) {
        match self {
            ConstraintSpec::OrderedMinGap { min_gap, t_max } => {
                debug_assert_eq!(batch.dim(), 1);
                repair_times(batch.coords_mut(), *min_gap, *t_max);
            }
            _ => {
                for j in 0..batch.m() {
                    self.apply_point(batch.point_mut(j));
                }
            }
        }
    }

    /// Batch feasibility with a small numerical tolerance on gap checks.
    pub fn is_feasible(&self, batch: &DesignBatch) -> bool {
        const TOL: f64 = 1e-9;
        if !batch.is_finite() {
            return false;
        }
        match self {
            ConstraintSpec::Unconstrained => true,
            ConstraintSpec::Box { lo, hi } => batch.points().all(|p| {
                p.iter()
                    .enumerate()
                    .all(|(k, v)| *v >= lo[k] - TOL && *v <= hi[k] + TOL)
            }),
            ConstraintSpec::Torus => batch.coords().iter().all(|v| (-PI..PI).contains(v)),
            ConstraintSpec::OrderedMinGap { min_gap, t_max } => {
                let ts = batch.coords();
                ts.iter().all(|t| (-TOL..=*t_max + TOL).contains(t))
                    && ts.windows(2).all(|w| w[1] - w[0] >= min_gap - TOL)
            }
        }
    }

    /// Draw one point uniformly over the constraint's natural domain
    /// (standard normal for unconstrained spaces).
    pub fn sample_domain(&self, dim: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        match self {
            ConstraintSpec::Unconstrained => (0..dim)
                .map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal))
                .collect(),
            ConstraintSpec::Box { lo, hi } => {
                (0..dim).map(|k| rng.gen_range(lo[k]..hi[k])).collect()
            }
            ConstraintSpec::Torus => (0..dim).map(|_| rng.gen_range(-PI..PI)).collect(),
            ConstraintSpec::OrderedMinGap { t_max, .. } => {
                (0..dim).map(|_| rng.gen_range(0.0..*t_max)).collect()
            }
        }
    }

    /// Whether differences between points should be computed with wrapped
    /// (circular) arithmetic.
    pub fn is_wrapped(&self) -> bool {
        matches!(self, ConstraintSpec::Torus)
    }

    /// Short human-readable tag used in serialised design records.
    pub fn tag(&self) -> String {
        match self {
            ConstraintSpec::Unconstrained => "unconstrained".into(),
            ConstraintSpec::Box { lo, hi } => format!("box[{:?},{:?}]", lo, hi),
            ConstraintSpec::Torus => "torus".into(),
            ConstraintSpec::OrderedMinGap { min_gap, t_max } => {
                format!("ordered_min_gap[{min_gap},{t_max}]")
            }
        }
    }

    /// Enforce the constraint point-wise on every particle of an ensemble.
    pub fn apply_ensemble(&self, e: &mut ParticleEnsemble) {
        for i in 0..e.len() {
            self.apply_point(e.point_mut(i));
        }
    }
}
