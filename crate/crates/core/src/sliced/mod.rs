//! Projections, 1D laws and maps, and the sliced Wasserstein distance.

mod directions;
mod dist1d;
mod distance;
mod law;

pub use directions::{random_direction, sample_directions, Direction, DirectionSet, Scheme};
pub use dist1d::{normal_cdf, ot_map_1d, standard_normal_quantile, w2_1d, Dist1D, Map1D};
pub use distance::sw2;
pub use law::{project_ensemble, project_gaussian, GaussianLaw, ParticleEnsemble, Slice};

pub(crate) use law::check_spd;
