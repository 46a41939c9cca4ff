//! Design batches and particle ensembles.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A single design point: `d` coordinates (hours for sampling-time problems,
/// radians on the circle, sensor positions in the plane, ...).
pub type DesignPoint = Vec<f64>;

/// An ordered batch of `m` design points, stored slot-major in a flat buffer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DesignBatch {
    dim: usize,
    coords: Vec<f64>,
}

impl DesignBatch {
    /// Zero-initialised batch of `m` points of dimension `dim`.
    pub fn zeros(m: usize, dim: usize) -> Self {
        assert!(m >= 1 && dim >= 1);
        Self {
            dim,
            coords: vec![0.0; m * dim],
        }
    }

    /// Build from a flat slot-major coordinate buffer.
    pub fn from_flat(dim: usize, coords: Vec<f64>) -> Result<Self> {
        if dim == 0 || coords.is_empty() || !coords.len().is_multiple_of(dim) {
            return Err(Error::Config(format!(
                "design batch needs a positive multiple of dim={dim} coordinates, got {}",
                coords.len()
            )));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite("design batch coordinates".into()));
        }
        Ok(Self { dim, coords })
    }

    /// Build from one coordinate vector per point.
    pub fn from_points(points: &[DesignPoint]) -> Result<Self> {
        let dim = points.first().map(|p| p.len()).unwrap_or(0);
        if dim == 0 {
            return Err(Error::Config("design batch needs at least one point".into()));
        }
        if points.iter().any(|p| p.len() != dim) {
            return Err(Error::Config("design points have mixed dimensions".into()));
        }
        let coords: Vec<f64> = points.iter().flatten().copied().collect();
        Self::from_flat(dim, coords)
    }

    /// Convenience constructor for one-dimensional designs (e.g. sampling times).
    pub fn from_times(times: &[f64]) -> Result<Self> {
        Self::from_flat(1, times.to_vec())
    }

    pub fn m(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn point(&self, j: usize) -> &[f64] {
        &self.coords[j * self.dim..(j + 1) * self.dim]
    }

    pub fn point_mut(&mut self, j: usize) -> &mut [f64] {
        &mut self.coords[j * self.dim..(j + 1) * self.dim]
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn coords_mut(&mut self) -> &mut [f64] {
        &mut self.coords
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> {
        self.coords.chunks(self.dim)
    }

    pub fn to_points(&self) -> Vec<DesignPoint> {
        self.points().map(|p| p.to_vec()).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.coords.iter().all(|c| c.is_finite())
    }
}

/// `N` equally weighted particles of dimension `dim`; the empirical measure
/// (1/N) sum of Dirac masses at the particles represents a design law.
#[derive(Clone, Debug, PartialEq)]
pub struct ParticleEnsemble {
    dim: usize,
    flat: Vec<f64>,
}

impl ParticleEnsemble {
    pub fn zeros(n: usize, dim: usize) -> Self {
        assert!(n >= 1 && dim >= 1);
        Self {
            dim,
            flat: vec![0.0; n * dim],
        }
    }

    pub fn from_fn(n: usize, dim: usize, mut f: impl FnMut(usize, &mut [f64])) -> Self {
        let mut e = Self::zeros(n, dim);
        for i in 0..n {
            f(i, e.point_mut(i));
        }
        e
    }

    pub fn from_scalars(xs: &[f64]) -> Self {
        Self {
            dim: 1,
            flat: xs.to_vec(),
        }
    }

    pub fn len(&self) -> usize {
        self.flat.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.flat.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.flat[i * self.dim..(i + 1) * self.dim]
    }

    pub fn point_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.flat[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> {
        self.flat.chunks(self.dim)
    }

    /// Coordinate-wise mean of the particles.
    pub fn mean(&self) -> Vec<f64> {
        let n = self.len() as f64;
        let mut out = vec![0.0; self.dim];
        for p in self.points() {
            for (o, c) in out.iter_mut().zip(p) {
                *o += c / n;
            }
        }
        out
    }

    /// All particles as scalars; panics unless `dim == 1`.
    pub fn scalars(&self) -> &[f64] {
        assert_eq!(self.dim, 1);
        &self.flat
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn batch_layout_round_trips() {
        let b = DesignBatch::from_points(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(b.m(), 2);
        assert_eq!(b.dim(), 2);
        assert_eq!(b.point(1), &[3.0, 4.0]);
        assert_eq!(b.to_points(), vec![vec![1.0, 2.0], vec![3.0, 4.0]]);
    }

    #[test]
    fn batch_rejects_bad_shapes() {
        assert!(DesignBatch::from_flat(2, vec![1.0, 2.0, 3.0]).is_err());
        assert!(DesignBatch::from_points(&[vec![1.0], vec![1.0, 2.0]]).is_err());
        assert!(DesignBatch::from_flat(1, vec![f64::NAN]).is_err());
    }

    #[test]
    fn ensemble_mean() {
        let e = ParticleEnsemble::from_fn(4, 2, |i, p| {
            p[0] = i as f64;
            p[1] = 1.0;
        });
        assert_eq!(e.mean(), vec![1.5, 1.0]);
    }
}
