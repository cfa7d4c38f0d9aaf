use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use super::directions::Direction;
use super::dist1d::Dist1D;
use crate::error::{Error, Result};

/// Anything whose pushforward along a direction is a 1D law.
pub trait Slice {
    fn dim(&self) -> usize;

    fn project(&self, theta: &Direction) -> Result<Dist1D>;
}

/// A Gaussian law `N(mean, covariance)` with SPD covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianLaw {
    mean: DVector<f64>,
    covariance: DMatrix<f64>,
}

impl GaussianLaw {
    pub fn new(mean: DVector<f64>, covariance: DMatrix<f64>) -> Result<Self> {
        let n = mean.len();
        if n == 0 {
            return Err(Error::Domain("gaussian law needs dimension >= 1".into()));
        }
        if covariance.shape() != (n, n) {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: covariance.nrows(),
            });
        }
        if mean.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("mean must be finite".into()));
        }
        let covariance = check_spd(&covariance)?;
        Ok(Self { mean, covariance })
    }

    pub fn from_slices(mean: &[f64], covariance_rows: &[&[f64]]) -> Result<Self> {
        let n = mean.len();
        if covariance_rows.len() != n || covariance_rows.iter().any(|r| r.len() != n) {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: covariance_rows.len(),
            });
        }
        let cov = DMatrix::from_fn(n, n, |i, j| covariance_rows[i][j]);
        Self::new(DVector::from_column_slice(mean), cov)
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    /// Draws `count` iid samples at time `time`.
    pub fn sample<R: Rng + ?Sized>(
        &self,
        count: usize,
        time: f64,
        rng: &mut R,
    ) -> Result<ParticleEnsemble> {
        let n = self.mean.len();
        let chol = Cholesky::new(self.covariance.clone())
            .ok_or_else(|| Error::Numeric("covariance lost positive definiteness".into()))?;
        let l = chol.l();
        // Row-major draw order keeps a particle's coordinates adjacent in the stream.
        let mut z = DMatrix::zeros(count, n);
        for i in 0..count {
            for j in 0..n {
                z[(i, j)] = rng.sample::<f64, _>(StandardNormal);
            }
        }
        let mut points = z * l.transpose();
        for mut row in points.row_iter_mut() {
            row += self.mean.transpose();
        }
        ParticleEnsemble::new(points, time)
    }
}

impl Slice for GaussianLaw {
    fn dim(&self) -> usize {
        self.mean.len()
    }

    fn project(&self, theta: &Direction) -> Result<Dist1D> {
        project_gaussian(self, theta)
    }
}

/// `N(θᵀm, θᵀΣθ)`.
pub fn project_gaussian(law: &GaussianLaw, theta: &Direction) -> Result<Dist1D> {
    check_dim(law.mean.len(), theta)?;
    Dist1D::gaussian(theta.project(&law.mean), theta.quad_form(&law.covariance))
}

/// Symmetrizes `a` and verifies it is symmetric positive definite.
pub(crate) fn check_spd(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: a.ncols(),
        });
    }
    for i in 0..n {
        for j in 0..i {
            let (x, y) = (a[(i, j)], a[(j, i)]);
            if !x.is_finite() || !y.is_finite() {
                return Err(Error::Domain("covariance must be finite".into()));
            }
            if (x - y).abs() > 1e-12 * x.abs().max(y.abs()).max(1.0) {
                return Err(Error::Domain(format!(
                    "covariance is not symmetric at ({i}, {j}): {x} vs {y}"
                )));
            }
        }
    }
    let sym = (a + a.transpose()) * 0.5;
    if Cholesky::new(sym.clone()).is_none() {
        return Err(Error::Domain("covariance is not positive definite".into()));
    }
    Ok(sym)
}

fn check_dim(n: usize, theta: &Direction) -> Result<()> {
    if theta.dim() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: theta.dim(),
        });
    }
    Ok(())
}

/// `N` particles in `R^n` (one per row) sharing a timestamp.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleEnsemble {
    points: DMatrix<f64>,
    time: f64,
}

impl ParticleEnsemble {
    pub fn new(points: DMatrix<f64>, time: f64) -> Result<Self> {
        if points.nrows() < 2 {
            return Err(Error::Domain(format!(
                "an ensemble needs at least 2 particles, got {}",
                points.nrows()
            )));
        }
        if points.ncols() == 0 {
            return Err(Error::Domain("particles need dimension >= 1".into()));
        }
        if points.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("particle coordinates must be finite".into()));
        }
        if !(time >= 0.0) {
            return Err(Error::Domain(format!(
                "ensemble time must be >= 0, got {time}"
            )));
        }
        Ok(Self { points, time })
    }

    pub fn from_rows(rows: &[&[f64]], time: f64) -> Result<Self> {
        let n = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::Domain("ragged particle rows".into()));
        }
        Self::new(DMatrix::from_fn(rows.len(), n, |i, j| rows[i][j]), time)
    }

    pub fn points(&self) -> &DMatrix<f64> {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.points.nrows() == 0
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn particle(&self, i: usize) -> DVector<f64> {
        self.points.row(i).transpose()
    }

    /// Unsorted projections `θᵀx_i` in particle order.
    pub fn projections(&self, theta: &Direction) -> DVector<f64> {
        &self.points * theta.as_vector()
    }

    pub fn mean(&self) -> DVector<f64> {
        self.points.row_mean().transpose()
    }

    /// Sample covariance with the `N − 1` normalization.
    pub fn covariance(&self) -> DMatrix<f64> {
        let m = self.mean();
        let mut centered = self.points.clone();
        for mut row in centered.row_iter_mut() {
            row -= m.transpose();
        }
        centered.transpose() * &centered / (self.len() as f64 - 1.0)
    }

    pub(crate) fn into_parts(self) -> (DMatrix<f64>, f64) {
        (self.points, self.time)
    }

    pub(crate) fn from_parts_unchecked(points: DMatrix<f64>, time: f64) -> Self {
        Self { points, time }
    }
}

impl Slice for ParticleEnsemble {
    fn dim(&self) -> usize {
        self.points.ncols()
    }

    fn project(&self, theta: &Direction) -> Result<Dist1D> {
        project_ensemble(self, theta)
    }
}

/// Sorted empirical law of the projections `θᵀx_i`.
pub fn project_ensemble(ens: &ParticleEnsemble, theta: &Direction) -> Result<Dist1D> {
    check_dim(ens.points.ncols(), theta)?;
    Dist1D::empirical(ens.projections(theta).as_slice().to_vec())
}
