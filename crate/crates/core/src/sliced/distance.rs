use rayon::prelude::*;

use super::directions::DirectionSet;
use super::dist1d::w2_1d;
use super::law::Slice;
use crate::error::{Error, Result};

/// Squared sliced 2-Wasserstein distance `Σ_j w_j W₂²(P_θj#μ, P_θj#ν)`.
///
/// Directions are evaluated in parallel; the weighted sum is reduced in
/// direction order so the result does not depend on the thread count.
pub fn sw2<A, B>(mu: &A, nu: &B, dirs: &DirectionSet, quantile_grid: usize) -> Result<f64>
where
    A: Slice + Sync + ?Sized,
    B: Slice + Sync + ?Sized,
{
    if mu.dim() != nu.dim() || mu.dim() != dirs.dim() {
        return Err(Error::DimensionMismatch {
            expected: mu.dim(),
            got: if mu.dim() != nu.dim() {
                nu.dim()
            } else {
                dirs.dim()
            },
        });
    }
    let terms = dirs
        .directions()
        .par_iter()
        .map(|theta| w2_1d(&mu.project(theta)?, &nu.project(theta)?, quantile_grid))
        .collect::<Result<Vec<f64>>>()?;
    Ok(terms.iter().zip(dirs.weights()).map(|(t, w)| t * w).sum())
}
