use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A unit vector on the sphere S^{n-1}.
#[derive(Debug, Clone, PartialEq)]
pub struct Direction(DVector<f64>);

impl Direction {
    /// Normalizes `v`. Fails on zero or non-finite input.
    pub fn new(v: DVector<f64>) -> Result<Self> {
        let norm = v.norm();
        if !norm.is_finite() || norm == 0.0 {
            return Err(Error::Domain(format!(
                "cannot normalize a direction of norm {norm}"
            )));
        }
        Ok(Self(v / norm))
    }

    pub fn from_slice(v: &[f64]) -> Result<Self> {
        Self::new(DVector::from_column_slice(v))
    }

    /// `(cos φ, sin φ)`.
    pub fn from_angle(phi: f64) -> Self {
        Self(DVector::from_column_slice(&[phi.cos(), phi.sin()]))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.0
    }

    /// The projection `θᵀx`.
    pub fn project(&self, x: &DVector<f64>) -> f64 {
        self.0.dot(x)
    }

    /// Quadratic form `θᵀAθ`.
    pub fn quad_form(&self, a: &DMatrix<f64>) -> f64 {
        let n = self.0.len();
        let mut acc = 0.0;
        for j in 0..n {
            let mut row = 0.0;
            for i in 0..n {
                row += a[(i, j)] * self.0[i];
            }
            acc += row * self.0[j];
        }
        acc
    }

    pub fn negated(&self) -> Self {
        Self(-&self.0)
    }
}

/// Quadrature rule for integrals against the uniform measure on the sphere.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Scheme {
    /// Equispaced midpoints on the half circle `[0, π)`; `n = 2` only.
    DeterministicAngular,
    /// Normalized standard Gaussian draws from a seeded stream.
    MonteCarlo { seed: u64 },
}

/// Directions with nonnegative quadrature weights summing to one.
#[derive(Debug, Clone)]
pub struct DirectionSet {
    directions: Vec<Direction>,
    weights: Vec<f64>,
    scheme: Scheme,
}

impl DirectionSet {
    pub fn directions(&self) -> &[Direction] {
        &self.directions
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn dim(&self) -> usize {
        self.directions[0].dim()
    }

    pub fn len(&self) -> usize {
        self.directions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.directions.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Direction, f64)> {
        self.directions.iter().zip(self.weights.iter().copied())
    }

    /// `Σ_j w_j θ_j θ_jᵀ`, the quadrature estimate of `I/n`.
    pub fn second_moment(&self) -> DMatrix<f64> {
        let n = self.dim();
        let mut acc = DMatrix::zeros(n, n);
        for (theta, w) in self.iter() {
            let v = theta.as_vector();
            acc.ger(w, v, v, 1.0);
        }
        acc
    }

    /// The same rule with every direction mapped through the orthogonal matrix `q`.
    pub fn rotated(&self, q: &DMatrix<f64>) -> Result<Self> {
        let directions = self
            .directions
            .iter()
            .map(|d| Direction::new(q * d.as_vector()))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            directions,
            weights: self.weights.clone(),
            scheme: self.scheme,
        })
    }
}

/// Builds a quadrature rule of `count` directions in dimension `dim`.
pub fn sample_directions(dim: usize, count: usize, scheme: Scheme) -> Result<DirectionSet> {
    if dim == 0 || count == 0 {
        return Err(Error::Config(format!(
            "direction set needs dim >= 1 and count >= 1, got dim={dim}, count={count}"
        )));
    }
    let directions = match scheme {
        Scheme::DeterministicAngular => {
            if dim != 2 {
                return Err(Error::Config(format!(
                    "deterministic-angular quadrature requires dim = 2, got {dim}"
                )));
            }
            (0..count)
                .map(|j| Direction::from_angle((j as f64 + 0.5) * PI / count as f64))
                .collect()
        }
        Scheme::MonteCarlo { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..count)
                .map(|_| random_direction(&mut rng, dim))
                .collect()
        }
    };
    Ok(DirectionSet {
        directions,
        weights: vec![1.0 / count as f64; count],
        scheme,
    })
}

/// Draws a direction uniformly from the sphere.
pub fn random_direction<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> Direction {
    loop {
        let v = DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
        if let Ok(d) = Direction::new(v) {
            return d;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn single_angular_direction_is_the_midpoint() {
        let set = sample_directions(2, 1, Scheme::DeterministicAngular).unwrap();
        let theta = set.directions()[0].as_vector();
        assert_abs_diff_eq!(theta[0], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(theta[1], 1.0, epsilon = 1e-15);
        assert_eq!(set.weights(), &[1.0]);
    }

    #[test]
    fn angular_weights_are_equal() {
        let set = sample_directions(2, 4, Scheme::DeterministicAngular).unwrap();
        assert!(set.weights().iter().all(|&w| w == 0.25));
        assert_abs_diff_eq!(set.weights().iter().sum::<f64>(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn angular_rule_requires_the_plane() {
        assert!(matches!(
            sample_directions(3, 8, Scheme::DeterministicAngular),
            Err(Error::Config(_))
        ));
        assert!(sample_directions(2, 0, Scheme::DeterministicAngular).is_err());
    }

    #[test]
    fn angular_rule_integrates_second_moment_exactly() {
        for m in [2, 3, 7, 512] {
            let set = sample_directions(2, m, Scheme::DeterministicAngular).unwrap();
            let s = set.second_moment();
            assert_abs_diff_eq!(s[(0, 0)], 0.5, epsilon = 1e-14);
            assert_abs_diff_eq!(s[(1, 1)], 0.5, epsilon = 1e-14);
            assert_abs_diff_eq!(s[(0, 1)], 0.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn monte_carlo_directions_are_unit_and_isotropic() {
        let set = sample_directions(3, 1000, Scheme::MonteCarlo { seed: 7 }).unwrap();
        for d in set.directions() {
            assert_abs_diff_eq!(d.as_vector().norm(), 1.0, epsilon = 1e-12);
        }
        let gap = (set.second_moment() - DMatrix::identity(3, 3) / 3.0).norm();
        assert!(gap < 0.05, "second moment gap {gap}");
    }

    #[test]
    fn monte_carlo_is_reproducible() {
        let a = sample_directions(4, 16, Scheme::MonteCarlo { seed: 11 }).unwrap();
        let b = sample_directions(4, 16, Scheme::MonteCarlo { seed: 11 }).unwrap();
        assert_eq!(a.directions(), b.directions());
    }
}
