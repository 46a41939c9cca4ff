//! Gauss–Hermite quadrature and the dense quadrature landscape for the
//! one-dimensional binary-parameter model.
//!
//! For that model the information gain of a single design has a closed
//! expectation: with sensitivity a = a(xi) and noise sigma, the posterior
//! over the binary parameter after observing y is a logistic in
//! t = 2 a y / sigma^2, and by the sign symmetry of the mixture
//!
//!   EIG(xi) = ln 2 - E_{y ~ N(a, sigma^2)} [ H_b(logistic(t)) ].
//!
//! The expectation is smooth, so a couple of hundred Hermite nodes give it
//! to near machine precision.

use nalgebra::{DMatrix, SymmetricEigen};
use rand_chacha::ChaCha8Rng;

use crate::design::DesignBatch;
use crate::eig::{EigEstimate, EigMode, EigOracle};
use crate::error::{Error, Result};
use crate::models::Toy1d;
use crate::util::{binary_entropy_logit, linspace};

/// Nodes and weights for integrals against exp(-x^2), computed from the
/// Jacobi matrix of the Hermite recurrence (weights are sqrt(pi) times the
/// squared first eigenvector components). Nodes come back sorted.
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "quadrature needs at least one node");
    let sqrt_pi = std::f64::consts::PI.sqrt();
    if n == 1 {
        return (vec![0.0], vec![sqrt_pi]);
    }
    let mut jacobi = DMatrix::zeros(n, n);
    for i in 1..n {
        let b = (i as f64 / 2.0).sqrt();
        jacobi[(i - 1, i)] = b;
        jacobi[(i, i - 1)] = b;
    }
    let eig = SymmetricEigen::new(jacobi);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|k| {
            let v0 = eig.eigenvectors[(0, k)];
            (eig.eigenvalues[k], sqrt_pi * v0 * v0)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    pairs.into_iter().unzip()
}

/// E_{x ~ N(mu, sigma^2)}[g(x)] using precomputed Hermite nodes/weights.
pub fn normal_expectation(
    nodes: &[f64],
    weights: &[f64],
    mu: f64,
    sigma: f64,
    g: &dyn Fn(f64) -> f64,
) -> f64 {
    let inv_sqrt_pi = 1.0 / std::f64::consts::PI.sqrt();
    let scale = std::f64::consts::SQRT_2 * sigma;
    nodes
        .iter()
        .zip(weights)
        .map(|(x, w)| w * g(mu + scale * x))
        .sum::<f64>()
        * inv_sqrt_pi
}

/// Quadrature information gain of a single scalar design for the binary
/// model.
pub fn eig_quadrature_1d(model: &Toy1d, xi: f64, n_nodes: usize) -> f64 {
    let (nodes, weights) = gauss_hermite(n_nodes);
    eig_quadrature_1d_with(model, xi, &nodes, &weights)
}

/// Same, reusing a node table (the hot path when sweeping a grid).
pub fn eig_quadrature_1d_with(
    model: &Toy1d,
    xi: f64,
    nodes: &[f64],
    weights: &[f64],
) -> f64 {
    let a = model.amplitude(xi);
    let s2 = model.sigma_y * model.sigma_y;
    let resid_entropy = normal_expectation(nodes, weights, a, model.sigma_y, &|y| {
        binary_entropy_logit(2.0 * a * y / s2)
    });
    std::f64::consts::LN_2 - resid_entropy
}

/// The information-gain curve of the binary model tabulated on a dense
/// grid, with centred-difference slopes. Evaluation between nodes is
/// linear interpolation, which is plenty for a 2000-point grid.
#[derive(Clone, Debug)]
pub struct Toy1dLandscape {
    pub xs: Vec<f64>,
    pub vals: Vec<f64>,
    pub grads: Vec<f64>,
}

impl Toy1dLandscape {
    pub fn compute(model: &Toy1d, grid_n: usize, n_nodes: usize) -> Self {
        assert!(grid_n >= 3, "landscape grid needs at least 3 points");
        let (nodes, weights) = gauss_hermite(n_nodes);
        let xs = linspace(model.lo, model.hi, grid_n);
        let vals: Vec<f64> = xs
            .iter()
            .map(|&x| eig_quadrature_1d_with(model, x, &nodes, &weights))
            .collect();
        let mut grads = vec![0.0; grid_n];
        let h = xs[1] - xs[0];
        grads[0] = (vals[1] - vals[0]) / h;
        grads[grid_n - 1] = (vals[grid_n - 1] - vals[grid_n - 2]) / h;
        for k in 1..grid_n - 1 {
            grads[k] = (vals[k + 1] - vals[k - 1]) / (2.0 * h);
        }
        Self { xs, vals, grads }
    }

    /// Default resolution used across the crate: 2000 grid points, 200
    /// Hermite nodes.
    pub fn default_for(model: &Toy1d) -> Self {
        Self::compute(model, 2000, 200)
    }

    fn interp(&self, table: &[f64], x: f64) -> f64 {
        let n = self.xs.len();
        let lo = self.xs[0];
        let h = self.xs[1] - self.xs[0];
        let s = ((x - lo) / h).clamp(0.0, (n - 1) as f64);
        let k = (s as usize).min(n - 2);
        let w = s - k as f64;
        table[k] * (1.0 - w) + table[k + 1] * w
    }

    pub fn value_at(&self, x: f64) -> f64 {
        self.interp(&self.vals, x)
    }

    pub fn grad_at(&self, x: f64) -> f64 {
        self.interp(&self.grads, x)
    }

    /// Grid argmax as (location, value).
    pub fn argmax(&self) -> (f64, f64) {
        let mut best = 0;
        for k in 1..self.vals.len() {
            if self.vals[k] > self.vals[best] {
                best = k;
            }
        }
        (self.xs[best], self.vals[best])
    }

    /// Interior and boundary local maxima as (location, value), in grid
    /// order. A boundary node counts when it beats its single neighbour.
    pub fn local_maxima(&self) -> Vec<(f64, f64)> {
        let n = self.vals.len();
        let mut out = Vec::new();
        for k in 0..n {
            let left_ok = k == 0 || self.vals[k] > self.vals[k - 1];
            let right_ok = k == n - 1 || self.vals[k] > self.vals[k + 1];
            if left_ok && right_ok {
                out.push((self.xs[k], self.vals[k]));
            }
        }
        out
    }
}

/// Deterministic single-design oracle backed by the tabulated landscape.
pub struct Toy1dGridOracle {
    pub model: Toy1d,
    pub landscape: Toy1dLandscape,
}

impl Toy1dGridOracle {
    pub fn new(model: Toy1d, grid_n: usize, n_nodes: usize) -> Self {
        let landscape = Toy1dLandscape::compute(&model, grid_n, n_nodes);
        Self { model, landscape }
    }

    pub fn default_grid(model: Toy1d) -> Self {
        let landscape = Toy1dLandscape::default_for(&model);
        Self { model, landscape }
    }

    fn check(&self, batch: &DesignBatch) -> Result<()> {
        if batch.m() != 1 || batch.dim() != 1 {
            return Err(Error::Estimator(format!(
                "grid oracle handles single scalar designs, got m={} dim={}",
                batch.m(),
                batch.dim()
            )));
        }
        Ok(())
    }
}

impl EigOracle for Toy1dGridOracle {
    fn value(&self, batch: &DesignBatch, _rng: &mut ChaCha8Rng) -> Result<EigEstimate> {
        self.check(batch)?;
        Ok(EigEstimate {
            value: self.landscape.value_at(batch.point(0)[0]),
            std_error: 0.0,
            n_outer: 0,
            n_inner: 0,
            randomness_mode: EigMode::Grid,
        })
    }

    fn grad(&self, batch: &DesignBatch, _rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
        self.check(batch)?;
        Ok(vec![self.landscape.grad_at(batch.point(0)[0])])
    }

    fn mode(&self) -> EigMode {
        EigMode::Grid
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stream::{substream, Purpose};
    use crate::util::{mean, std_error};
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn hermite_weights_sum_to_sqrt_pi() {
        for n in [1, 2, 5, 20, 80] {
            let (_, w) = gauss_hermite(n);
            let total: f64 = w.iter().sum();
            assert!((total - std::f64::consts::PI.sqrt()).abs() < 1e-10, "n={n}");
        }
    }

    #[test]
    fn hermite_nodes_are_symmetric_and_sorted() {
        let (x, w) = gauss_hermite(21);
        for k in 0..21 {
            assert!((x[k] + x[20 - k]).abs() < 1e-9);
            assert!((w[k] - w[20 - k]).abs() < 1e-9);
        }
        assert!(x.windows(2).all(|p| p[0] < p[1]));
        // Odd rule has a node pinned at the origin.
        assert!(x[10].abs() < 1e-9);
    }

    #[test]
    fn hermite_integrates_standard_normal_moments_exactly() {
        // An n-node rule is exact through degree 2n-1, so 5 nodes must
        // reproduce E[x^k] for k <= 8 (moments 1, 0, 1, 0, 3, 0, 15, 0, 105).
        let (x, w) = gauss_hermite(5);
        let want = [1.0, 0.0, 1.0, 0.0, 3.0, 0.0, 15.0, 0.0, 105.0];
        for (k, target) in want.iter().enumerate() {
            let got = normal_expectation(&x, &w, 0.0, 1.0, &|t| t.powi(k as i32));
            assert!((got - target).abs() < 1e-9, "k={k}: {got} vs {target}");
        }
    }

    #[test]
    fn hermite_shifted_gaussian_mean_and_variance() {
        let (x, w) = gauss_hermite(12);
        let m1 = normal_expectation(&x, &w, 1.7, 0.6, &|t| t);
        let m2 = normal_expectation(&x, &w, 1.7, 0.6, &|t| (t - 1.7) * (t - 1.7));
        assert!((m1 - 1.7).abs() < 1e-12);
        assert!((m2 - 0.36).abs() < 1e-12);
    }

    #[test]
    fn quadrature_converges_in_node_count() {
        let m = Toy1d::default();
        let coarse = eig_quadrature_1d(&m, 7.0 / 6.0, 50);
        let mid = eig_quadrature_1d(&m, 7.0 / 6.0, 100);
        let fine = eig_quadrature_1d(&m, 7.0 / 6.0, 200);
        // The integrand is analytic in a strip of half-width
        // pi sigma^2 / (2 a) around the real axis, so node doubling gains
        // a couple of digits per step rather than machine precision at once.
        assert!((coarse - fine).abs() < 1e-6, "{coarse} vs {fine}");
        assert!((mid - fine).abs() < 1e-9, "{mid} vs {fine}");
        // Anchor computed with an independent Hermite implementation.
        assert!((fine - 0.3988248469).abs() < 1e-8, "{fine}");
    }

    #[test]
    fn eig_limits_zero_amplitude_and_saturation() {
        let mut m = Toy1d::default();
        m.amps = [0.0; 5];
        assert!(eig_quadrature_1d(&m, 0.0, 120).abs() < 1e-12);

        // Enormous signal-to-noise rate pins the gain to the prior entropy.
        let mut loud = Toy1d::default();
        loud.amps = [50.0, 0.0, 0.0, 0.0, 0.0];
        let eig = eig_quadrature_1d(&loud, 0.0, 120);
        assert!((eig - std::f64::consts::LN_2).abs() < 1e-6, "eig = {eig}");
    }

    #[test]
    fn eig_is_monotone_in_amplitude() {
        let m = Toy1d::default();
        let mut prev = 0.0;
        // Amplitude is increasing on the approach to the dominant bump.
        for xi in [0.0, 0.4, 0.7, 0.9, 1.0, 7.0 / 6.0] {
            let e = eig_quadrature_1d(&m, xi, 150);
            assert!(e > prev, "xi={xi}");
            prev = e;
        }
        assert!(prev < std::f64::consts::LN_2);
    }

    /// Independent check: brute-force Monte Carlo of the same mutual
    /// information, drawing the binary parameter and the observation and
    /// scoring the log posterior ratio directly.
    #[test]
    fn quadrature_matches_direct_monte_carlo() {
        let m = Toy1d::default();
        let xi = 0.8;
        let a = m.amplitude(xi);
        let s = m.sigma_y;
        let mut rng = substream(40, 0, 0, Purpose::Sim);
        let n = 200_000;
        let mut terms = Vec::with_capacity(n);
        for _ in 0..n {
            let th: f64 = if rng.gen::<bool>() { 1.0 } else { -1.0 };
            let eps: f64 = StandardNormal.sample(&mut rng);
            let y = th * a + s * eps;
            // ln p(y|th) - ln p(y) with the two-atom marginal.
            let lp = -0.5 * (y - th * a) * (y - th * a) / (s * s);
            let lm_plus = -0.5 * (y - a) * (y - a) / (s * s);
            let lm_minus = -0.5 * (y + a) * (y + a) / (s * s);
            let lmarg = crate::util::log_sum_exp(&[lm_plus, lm_minus]) - std::f64::consts::LN_2;
            terms.push(lp - lmarg);
        }
        let mc = mean(&terms);
        let se = std_error(&terms);
        let quad = eig_quadrature_1d(&m, xi, 200);
        assert!(
            (mc - quad).abs() <= 4.0 * se,
            "mc {mc} +- {se} vs quadrature {quad}"
        );
    }

    #[test]
    fn landscape_has_four_separated_maxima() {
        let m = Toy1d::default();
        let land = Toy1dLandscape::default_for(&m);
        let maxima = land.local_maxima();
        assert_eq!(maxima.len(), 4, "maxima at {maxima:?}");
        // The dominant bump sits at the second-from-right centre.
        let (x_star, v_star) = land.argmax();
        assert!((x_star - 7.0 / 6.0).abs() < 0.1, "argmax at {x_star}");
        for (x, v) in &maxima {
            if (x - x_star).abs() > 0.5 {
                assert!(*v < v_star);
            }
        }
    }

    #[test]
    fn landscape_interpolation_hits_grid_nodes() {
        let m = Toy1d::default();
        let land = Toy1dLandscape::compute(&m, 500, 80);
        for k in [0, 100, 250, 499] {
            // Up to one rounding step in the node-index arithmetic.
            assert!((land.value_at(land.xs[k]) - land.vals[k]).abs() < 1e-12);
            assert!((land.grad_at(land.xs[k]) - land.grads[k]).abs() < 1e-12);
        }
        // Clamping outside the box.
        assert_eq!(land.value_at(-100.0), land.vals[0]);
        assert_eq!(land.value_at(100.0), land.vals[499]);
    }

    #[test]
    fn grid_oracle_rejects_batches() {
        let oracle = Toy1dGridOracle::new(Toy1d::default(), 200, 60);
        let mut rng = substream(0, 0, 0, Purpose::Probe);
        let bad = DesignBatch::from_flat(1, vec![0.0, 1.0]).unwrap();
        assert!(oracle.value(&bad, &mut rng).is_err());
        let ok = DesignBatch::from_flat(1, vec![0.5]).unwrap();
        let est = oracle.value(&ok, &mut rng).unwrap();
        assert_eq!(est.randomness_mode, EigMode::Grid);
        assert!(est.value > 0.0 && est.value < std::f64::consts::LN_2);
    }

    #[test]
    fn grid_oracle_gradient_tracks_quadrature_slope() {
        let oracle = Toy1dGridOracle::default_grid(Toy1d::default());
        let m = Toy1d::default();
        let mut rng = substream(0, 0, 0, Purpose::Probe);
        for xi in [-2.0, -0.5, 0.9, 1.8, 3.0] {
            let g = oracle
                .grad(&DesignBatch::from_flat(1, vec![xi]).unwrap(), &mut rng)
                .unwrap()[0];
            let h = 1e-4;
            let fd = (eig_quadrature_1d(&m, xi + h, 200) - eig_quadrature_1d(&m, xi - h, 200))
                / (2.0 * h);
            assert!((g - fd).abs() < 1e-3, "xi={xi}: {g} vs {fd}");
        }
    }
}
