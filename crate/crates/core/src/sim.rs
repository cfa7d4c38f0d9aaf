//! Discrete-time ensemble simulation, `x_{k+1} = x_k + h u_k`, `h = T/T_d`.
//!
//! Every controller acts on each particle independently. Random draws
//! (slicing directions, rotations) come from a dedicated stream and are
//! taken before any parallel section, so results do not depend on the
//! thread count.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::{
    default_epsilon, integrate_covariance, AffineController, GaussianFlow, MinEnergyController,
    SteeringProblem,
};
use crate::sliced::{
    ot_map_1d, random_direction, sample_directions, sw2, Direction, DirectionSet, GaussianLaw,
    ParticleEnsemble, Scheme, Slice,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ControllerKind {
    /// One uniformly random direction per step, gain `1/(T − t_k)`.
    IterativeSliced,
    /// One random direction per step, constant step size `1/T`.
    RecedingHorizon,
    /// All axes of a random orthonormal frame per step, step size `1/T`.
    OrthogonalBasis,
    /// The affine ideal sliced controller driven by the Gaussian flow.
    IdealAffine,
    /// Straight-line displacement interpolation.
    MinEnergy,
}

impl ControllerKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::IterativeSliced => "iterative-sliced",
            Self::RecedingHorizon => "receding-horizon",
            Self::OrthogonalBasis => "orthogonal-basis",
            Self::IdealAffine => "ideal-affine",
            Self::MinEnergy => "min-energy",
        }
    }
}

/// How to build a [`DirectionSet`] once the dimension is known.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DirectionSpec {
    pub count: usize,
    pub scheme: Scheme,
}

impl DirectionSpec {
    pub fn build(&self, dim: usize) -> Result<DirectionSet> {
        sample_directions(dim, self.count, self.scheme)
    }
}

/// Sliced distance to the target recorded alongside each snapshot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sw2Tracking {
    pub dirs: DirectionSpec,
    pub quantile_grid: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    /// Horizon `T`.
    pub horizon: f64,
    /// Step count `T_d`.
    pub steps: usize,
    /// Particle count `N`.
    pub particles: usize,
    pub seed: u64,
    pub controller: ControllerKind,
    /// Quadrature for the ideal-affine gain.
    pub dirs: Option<DirectionSpec>,
    /// Snapshot stride in steps. The initial and final states are always kept.
    pub record_every: usize,
    /// Affinely correct the initial sample so its mean and covariance equal `(m₀, Σ₀)`.
    pub moment_matched_init: bool,
    /// τ-steps of the covariance flow behind the ideal-affine controller.
    pub flow_steps: usize,
    pub track_sw2: Option<Sw2Tracking>,
}

impl SimConfig {
    pub fn new(horizon: f64, steps: usize, particles: usize, controller: ControllerKind) -> Self {
        Self {
            horizon,
            steps,
            particles,
            seed: 0,
            controller,
            dirs: None,
            record_every: steps.max(1),
            moment_matched_init: false,
            flow_steps: 4000,
            track_sw2: None,
        }
    }

    pub fn step_size(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    /// `t_k = k T / T_d`, exact at both ends.
    pub fn time(&self, k: usize) -> f64 {
        if k == self.steps {
            self.horizon
        } else {
            self.horizon * k as f64 / self.steps as f64
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.horizon > 0.0) || !self.horizon.is_finite() {
            return Err(Error::Config(format!(
                "T must be positive, got {}",
                self.horizon
            )));
        }
        if self.steps == 0 {
            return Err(Error::Config("T_d must be at least 1".into()));
        }
        if self.particles < 2 {
            return Err(Error::Config(format!(
                "N must be at least 2, got {}",
                self.particles
            )));
        }
        if self.record_every == 0 {
            return Err(Error::Config("record_every must be at least 1".into()));
        }
        if self.controller == ControllerKind::IdealAffine {
            if self.dirs.is_none() {
                return Err(Error::Config("ideal-affine controller needs `dirs`".into()));
            }
            if self.flow_steps < 10 {
                return Err(Error::Config("flow_steps must be at least 10".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimResult {
    pub controller: ControllerKind,
    /// Ensembles at `t_0`, every `record_every` steps, and `t_{T_d}`.
    pub snapshots: Vec<ParticleEnsemble>,
    /// `Σ_k h · mean_i ‖u_{k,i}‖²`.
    pub energy: f64,
    /// `Σ_k ∫_{t_k}^{t_{k+1}} (T − t) dt · mean_i ‖u_{k,i}‖²`.
    pub weighted_energy: f64,
    /// `(t, SW₂²(ρ_t, ρ_f))` at each snapshot when tracking is on.
    pub sw2_series: Option<Vec<(f64, f64)>>,
}

impl SimResult {
    pub fn terminal(&self) -> &ParticleEnsemble {
        self.snapshots
            .last()
            .expect("a run records at least two snapshots")
    }
}

pub fn empirical_energy(result: &SimResult) -> f64 {
    result.energy
}

struct Step {
    ensemble: ParticleEnsemble,
    mean_sq_control: f64,
}

fn check_step(
    k: usize,
    config: &SimConfig,
    ens: &ParticleEnsemble,
    target_dim: usize,
) -> Result<()> {
    if k >= config.steps {
        return Err(Error::Config(format!(
            "step index {k} out of range for T_d = {}",
            config.steps
        )));
    }
    if ens.dim() != target_dim {
        return Err(Error::DimensionMismatch {
            expected: target_dim,
            got: ens.dim(),
        });
    }
    Ok(())
}

/// `θᵀx_i − 𝒯^θ(θᵀx_i)` for every particle.
fn displacements<T: Slice + ?Sized>(
    ens: &ParticleEnsemble,
    target: &T,
    theta: &Direction,
) -> Result<Vec<f64>> {
    let proj = ens.projections(theta);
    let map = ot_map_1d(&ens.project(theta)?, &target.project(theta)?);
    Ok(proj
        .as_slice()
        .par_iter()
        .map(|&s| s - map.eval(s))
        .collect())
}

/// Moves every particle by `−c · d_i θ`; the control norm is `speed · |d_i|`.
fn sliced_move<T: Slice + ?Sized>(
    ens: &ParticleEnsemble,
    target: &T,
    theta: &Direction,
    c: f64,
    speed: f64,
    time: f64,
) -> Result<Step> {
    let d = displacements(ens, target, theta)?;
    let mean_sq = d.iter().map(|v| (speed * v).powi(2)).sum::<f64>() / d.len() as f64;
    let mut points = ens.points().clone();
    points.ger(-c, &DVector::from_vec(d), theta.as_vector(), 1.0);
    Ok(Step {
        ensemble: ParticleEnsemble::from_parts_unchecked(points, time),
        mean_sq_control: mean_sq,
    })
}

fn iterative(
    ens: &ParticleEnsemble,
    k: usize,
    config: &SimConfig,
    target: &(impl Slice + ?Sized),
    theta: &Direction,
) -> Result<Step> {
    check_step(k, config, ens, target.dim())?;
    // h/(T − t_k) = 1/(T_d − k): exactly 1 on the last step.
    let c = 1.0 / (config.steps - k) as f64;
    let speed = 1.0 / (config.horizon - config.time(k));
    sliced_move(ens, target, theta, c, speed, config.time(k + 1))
}

/// One step of the iterative sliced controller along `theta`.
pub fn iterative_step<T: Slice + ?Sized>(
    ens: &ParticleEnsemble,
    k: usize,
    config: &SimConfig,
    target: &T,
    theta: &Direction,
) -> Result<ParticleEnsemble> {
    Ok(iterative(ens, k, config, target, theta)?.ensemble)
}

fn receding(
    ens: &ParticleEnsemble,
    k: usize,
    config: &SimConfig,
    target: &(impl Slice + ?Sized),
    theta: &Direction,
) -> Result<Step> {
    check_step(k, config, ens, target.dim())?;
    let c = 1.0 / config.horizon;
    sliced_move(
        ens,
        target,
        theta,
        c,
        c / config.step_size(),
        config.time(k + 1),
    )
}

/// `x_{k+1} = x_k − (1/T)(θᵀx_k − 𝒯^θ(θᵀx_k)) θ`.
pub fn receding_horizon_step<T: Slice + ?Sized>(
    ens: &ParticleEnsemble,
    k: usize,
    config: &SimConfig,
    target: &T,
    theta: &Direction,
) -> Result<ParticleEnsemble> {
    Ok(receding(ens, k, config, target, theta)?.ensemble)
}

fn check_orthonormal(basis: &[Direction], n: usize) -> Result<()> {
    if basis.len() != n || basis.iter().any(|d| d.dim() != n) {
        return Err(Error::Config(format!(
            "an orthonormal basis of R^{n} needs {n} directions, got {}",
            basis.len()
        )));
    }
    for (i, a) in basis.iter().enumerate() {
        for b in &basis[..i] {
            let dot = a.as_vector().dot(b.as_vector());
            if dot.abs() > 1e-10 {
                return Err(Error::Config(format!(
                    "basis directions are not orthogonal (inner product {dot})"
                )));
            }
        }
    }
    Ok(())
}

fn orthogonal(
    ens: &ParticleEnsemble,
    k: usize,
    config: &SimConfig,
    target: &(impl Slice + ?Sized),
    basis: &[Direction],
) -> Result<Step> {
    check_step(k, config, ens, target.dim())?;
    check_orthonormal(basis, ens.dim())?;
    let c = 1.0 / config.horizon;
    let speed = c / config.step_size();
    let all = basis
        .iter()
        .map(|theta| displacements(ens, target, theta))
        .collect::<Result<Vec<_>>>()?;
    let count = ens.len();
    let mean_sq = (0..count)
        .map(|i| all.iter().map(|d| (speed * d[i]).powi(2)).sum::<f64>())
        .sum::<f64>()
        / count as f64;
    let mut points = ens.points().clone();
    for (theta, d) in basis.iter().zip(all) {
        points.ger(-c, &DVector::from_vec(d), theta.as_vector(), 1.0);
    }
    Ok(Step {
        ensemble: ParticleEnsemble::from_parts_unchecked(points, config.time(k + 1)),
        mean_sq_control: mean_sq,
    })
}

/// The receding-horizon update applied along every axis of `basis` at once.
pub fn orthogonal_basis_step<T: Slice + ?Sized>(
    ens: &ParticleEnsemble,
    k: usize,
    config: &SimConfig,
    target: &T,
    basis: &[Direction],
) -> Result<ParticleEnsemble> {
    Ok(orthogonal(ens, k, config, target, basis)?.ensemble)
}

/// Haar-distributed orthonormal frame.
pub fn random_basis<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> Vec<Direction> {
    let g = DMatrix::from_fn(dim, dim, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    let (q, r) = (qr.q(), qr.r());
    (0..dim)
        .map(|j| {
            let sign = if r[(j, j)] < 0.0 { -1.0 } else { 1.0 };
            Direction::new(q.column(j) * sign).expect("orthogonal columns have unit norm")
        })
        .collect()
}

fn affine_move(ens: &ParticleEnsemble, ctl: &AffineController, h: f64, time: f64) -> Step {
    let mut u = ens.points() * ctl.gain.transpose();
    for mut row in u.row_iter_mut() {
        row += ctl.offset.transpose();
    }
    let mean_sq = u.row_iter().map(|r| r.norm_squared()).sum::<f64>() / u.nrows() as f64;
    Step {
        ensemble: ParticleEnsemble::from_parts_unchecked(ens.points() + u * h, time),
        mean_sq_control: mean_sq,
    }
}

fn moment_match(ens: ParticleEnsemble, law: &GaussianLaw) -> Result<ParticleEnsemble> {
    let n = ens.dim();
    let m = ens.mean();
    let sample_l = Cholesky::new(ens.covariance())
        .ok_or_else(|| Error::Numeric("initial sample covariance is singular".into()))?
        .l();
    let law_l = Cholesky::new(law.covariance().clone())
        .ok_or_else(|| Error::Numeric("initial covariance is not positive definite".into()))?
        .l();
    let whiten = sample_l
        .solve_lower_triangular(&DMatrix::identity(n, n))
        .ok_or_else(|| Error::Numeric("initial sample covariance is singular".into()))?;
    let a = law_l * whiten;
    let (mut points, time) = ens.into_parts();
    for mut row in points.row_iter_mut() {
        row -= m.transpose();
    }
    let mut points = points * a.transpose();
    for mut row in points.row_iter_mut() {
        row += law.mean().transpose();
    }
    ParticleEnsemble::new(points, time)
}

/// Initial ensemble drawn from `ρ₀` on stream 0 of the seeded generator.
pub fn initial_ensemble(config: &SimConfig, problem: &SteeringProblem) -> Result<ParticleEnsemble> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let ens = problem.initial().sample(config.particles, 0.0, &mut rng)?;
    if config.moment_matched_init {
        moment_match(ens, problem.initial())
    } else {
        Ok(ens)
    }
}

enum Driver {
    Sliced,
    Affine(GaussianFlow, DirectionSet),
    MinEnergy(MinEnergyController),
}

/// Runs the configured controller for `k = 0, …, T_d − 1` toward the
/// problem's Gaussian target.
pub fn run(config: &SimConfig, problem: &SteeringProblem) -> Result<SimResult> {
    config.validate()?;
    if config.horizon != problem.horizon() {
        return Err(Error::Config(format!(
            "simulation horizon {} differs from problem horizon {}",
            config.horizon,
            problem.horizon()
        )));
    }
    let n = problem.dim();
    let h = config.step_size();
    let target = problem.target();

    let driver = match config.controller {
        ControllerKind::IdealAffine => {
            let dirs = config.dirs.expect("validated").build(n)?;
            let epsilon = default_epsilon(config.horizon).min(0.5 * h);
            let flow = integrate_covariance(problem, &dirs, config.flow_steps, epsilon)?;
            Driver::Affine(flow, dirs)
        }
        ControllerKind::MinEnergy => Driver::MinEnergy(MinEnergyController::new(problem)?),
        _ => Driver::Sliced,
    };
    let tracking = match &config.track_sw2 {
        Some(t) => Some((t.dirs.build(n)?, t.quantile_grid)),
        None => None,
    };

    let mut dir_rng = ChaCha8Rng::seed_from_u64(config.seed);
    dir_rng.set_stream(1);

    let mut ens = initial_ensemble(config, problem)?;
    let mut snapshots = Vec::new();
    let mut series = tracking.as_ref().map(|_| Vec::new());
    let mut record = |ens: &ParticleEnsemble| -> Result<()> {
        if let (Some((dirs, grid)), Some(series)) = (&tracking, series.as_mut()) {
            series.push((ens.time(), sw2(ens, target, dirs, *grid)?));
        }
        snapshots.push(ens.clone());
        Ok(())
    };

    let mut energy = 0.0;
    let mut weighted = 0.0;
    for k in 0..config.steps {
        if k % config.record_every == 0 {
            record(&ens)?;
        }
        let t = config.time(k);
        let step = match (&driver, config.controller) {
            (Driver::Sliced, ControllerKind::IterativeSliced) => {
                let theta = random_direction(&mut dir_rng, n);
                iterative(&ens, k, config, target, &theta)?
            }
            (Driver::Sliced, ControllerKind::RecedingHorizon) => {
                let theta = random_direction(&mut dir_rng, n);
                receding(&ens, k, config, target, &theta)?
            }
            (Driver::Sliced, _) => {
                let basis = random_basis(&mut dir_rng, n);
                orthogonal(&ens, k, config, target, &basis)?
            }
            (Driver::Affine(flow, dirs), _) => {
                let ctl = flow.controller_at(t, problem, dirs)?;
                affine_move(&ens, &ctl, h, config.time(k + 1))
            }
            (Driver::MinEnergy(me), _) => {
                affine_move(&ens, &me.affine_at(t)?, h, config.time(k + 1))
            }
        };
        if step.ensemble.points().iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!(
                "particles became non-finite at t = {t}"
            )));
        }
        energy += h * step.mean_sq_control;
        weighted += h * (config.horizon - t - 0.5 * h) * step.mean_sq_control;
        ens = step.ensemble;
    }
    record(&ens)?;

    Ok(SimResult {
        controller: config.controller,
        snapshots,
        energy,
        weighted_energy: weighted,
        sw2_series: series,
    })
}

/// For each particle, the largest distance of a recorded position from
/// the line through its first and last positions.
pub fn chord_deviation(snapshots: &[ParticleEnsemble]) -> Vec<f64> {
    let (Some(first), Some(last)) = (snapshots.first(), snapshots.last()) else {
        return Vec::new();
    };
    (0..first.len())
        .map(|i| {
            let a = first.particle(i);
            let chord = last.particle(i) - &a;
            let len = chord.norm();
            snapshots
                .iter()
                .map(|s| {
                    let rel = s.particle(i) - &a;
                    if len == 0.0 {
                        rel.norm()
                    } else {
                        let along = rel.dot(&chord) / (len * len);
                        (rel - &chord * along).norm()
                    }
                })
                .fold(0.0, f64::max)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::weighted_energy;
    use crate::sliced::Dist1D;
    use approx::assert_abs_diff_eq;

    fn example_problem() -> SteeringProblem {
        SteeringProblem::new(
            GaussianLaw::from_slices(&[-2.0, 2.0], &[&[1.0, 0.2], &[0.2, 0.5]]).unwrap(),
            GaussianLaw::from_slices(&[-8.0, 4.0], &[&[0.1, 0.0], &[0.0, 0.04]]).unwrap(),
            1.0,
        )
        .unwrap()
    }

    fn ensemble(seed: u64, count: usize, law: &GaussianLaw) -> ParticleEnsemble {
        law.sample(count, 0.0, &mut ChaCha8Rng::seed_from_u64(seed))
            .unwrap()
    }

    fn e1() -> Direction {
        Direction::from_slice(&[1.0, 0.0]).unwrap()
    }

    #[test]
    fn matching_projections_do_not_move() {
        let config = SimConfig::new(1.0, 10, 4, ControllerKind::IterativeSliced);
        let ens =
            ParticleEnsemble::from_rows(&[&[0.0, 1.0], &[2.0, -1.0], &[5.0, 0.0]], 0.0).unwrap();
        let target =
            ParticleEnsemble::from_rows(&[&[5.0, 9.0], &[0.0, 3.0], &[2.0, 7.0]], 0.0).unwrap();
        let next = iterative_step(&ens, 3, &config, &target, &e1()).unwrap();
        assert_eq!(next.points(), ens.points());
        let next = receding_horizon_step(&ens, 3, &config, &target, &e1()).unwrap();
        assert_eq!(next.points(), ens.points());
    }

    #[test]
    fn last_step_lands_on_the_map() {
        let p = example_problem();
        let config = SimConfig::new(1.0, 50, 100, ControllerKind::IterativeSliced);
        let ens = ensemble(1, 100, p.initial());
        for theta in [e1(), Direction::from_angle(2.1)] {
            let next = iterative_step(&ens, 49, &config, p.target(), &theta).unwrap();
            let map = ot_map_1d(
                &ens.project(&theta).unwrap(),
                &p.target().project(&theta).unwrap(),
            );
            let before = ens.projections(&theta);
            let after = next.projections(&theta);
            for (s, s_new) in before.iter().zip(after.iter()) {
                assert_abs_diff_eq!(*s_new, map.eval(*s), epsilon = 1e-12);
            }
            assert_eq!(next.time(), 1.0);
        }
    }

    #[test]
    fn projected_update_is_consistent() {
        let p = example_problem();
        let config = SimConfig::new(1.0, 40, 300, ControllerKind::IterativeSliced);
        let ens = ensemble(2, 300, p.initial());
        let theta = Direction::from_angle(0.4);
        let k = 7;
        let next = iterative_step(&ens, k, &config, p.target(), &theta).unwrap();
        let map = ot_map_1d(
            &ens.project(&theta).unwrap(),
            &p.target().project(&theta).unwrap(),
        );
        let h = config.step_size();
        for i in 0..ens.len() {
            let x = ens.particle(i);
            let s = theta.project(&x);
            let u = theta.as_vector() * (-(s - map.eval(s)) / (1.0 - config.time(k)));
            let expected = &x + u * h;
            assert!((next.particle(i) - expected).norm() < 1e-12);
            // The orthogonal complement is untouched.
            let perp = DVector::from_column_slice(&[-theta.as_vector()[1], theta.as_vector()[0]]);
            assert_abs_diff_eq!(perp.dot(&next.particle(i)), perp.dot(&x), epsilon = 1e-12);
        }
    }

    #[test]
    fn two_particle_update_is_the_cheaper_matching() {
        // Oracle: enumerate both matchings of the projected pairs.
        let config = SimConfig::new(2.0, 4, 2, ControllerKind::IterativeSliced);
        let ens = ParticleEnsemble::from_rows(&[&[3.0, 0.5], &[-1.0, 2.0]], 0.0).unwrap();
        let target = ParticleEnsemble::from_rows(&[&[4.0, 1.0], &[0.0, 1.0]], 0.0).unwrap();
        let theta = Direction::from_angle(0.3);
        let s = ens.projections(&theta);
        let r = target.projections(&theta);
        let cost = |p: [usize; 2]| (s[0] - r[p[0]]).powi(2) + (s[1] - r[p[1]]).powi(2);
        let best = if cost([0, 1]) <= cost([1, 0]) {
            [0, 1]
        } else {
            [1, 0]
        };
        let k = 1;
        let c = config.step_size() / (config.horizon - config.time(k));
        let next = iterative_step(&ens, k, &config, &target, &theta).unwrap();
        for i in 0..2 {
            let expected = ens.particle(i) - theta.as_vector() * (c * (s[i] - r[best[i]]));
            assert!((next.particle(i) - expected).norm() < 1e-14);
        }
    }

    #[test]
    fn receding_matches_iterative_for_single_step() {
        let p = example_problem();
        let config = SimConfig::new(1.0, 1, 50, ControllerKind::RecedingHorizon);
        let ens = ensemble(3, 50, p.initial());
        let theta = Direction::from_angle(1.1);
        let a = receding_horizon_step(&ens, 0, &config, p.target(), &theta).unwrap();
        let b = iterative_step(&ens, 0, &config, p.target(), &theta).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn step_index_is_checked() {
        let p = example_problem();
        let config = SimConfig::new(1.0, 5, 10, ControllerKind::IterativeSliced);
        let ens = ensemble(3, 10, p.initial());
        assert!(iterative_step(&ens, 5, &config, p.target(), &e1()).is_err());
    }

    #[test]
    fn orthogonal_identity_basis_separates_axes() {
        let config = SimConfig::new(1.0, 10, 3, ControllerKind::OrthogonalBasis);
        let ens =
            ParticleEnsemble::from_rows(&[&[0.0, 1.0], &[2.0, -1.0], &[5.0, 0.0]], 0.0).unwrap();
        let target =
            ParticleEnsemble::from_rows(&[&[1.0, 1.0], &[4.0, -1.0], &[9.0, 0.0]], 0.0).unwrap();
        let basis = vec![e1(), Direction::from_slice(&[0.0, 1.0]).unwrap()];
        let next = orthogonal_basis_step(&ens, 0, &config, &target, &basis).unwrap();
        for i in 0..3 {
            assert_eq!(next.points()[(i, 1)], ens.points()[(i, 1)]);
            assert!(next.points()[(i, 0)] != ens.points()[(i, 0)]);
        }
    }

    #[test]
    fn orthogonal_step_hits_diagonal_gaussian_marginals() {
        // Per-axis oracle: the particle of rank r on axis j moves to the
        // target quantile at level (r − ½)/N.
        let target = GaussianLaw::from_slices(&[3.0, -1.0], &[&[4.0, 0.0], &[0.0, 0.25]]).unwrap();
        let source = GaussianLaw::from_slices(&[0.0, 1.0], &[&[1.0, 0.0], &[0.0, 2.0]]).unwrap();
        let count = 20;
        let config = SimConfig::new(1.0, 1, count, ControllerKind::OrthogonalBasis);
        let ens = ensemble(4, count, &source);
        let basis = vec![e1(), Direction::from_slice(&[0.0, 1.0]).unwrap()];
        let next = orthogonal_basis_step(&ens, 0, &config, &target, &basis).unwrap();
        let (mf, sdf) = ([3.0, -1.0], [2.0, 0.5]);
        for j in 0..2 {
            let mut order: Vec<usize> = (0..count).collect();
            order.sort_by(|&a, &b| ens.points()[(a, j)].total_cmp(&ens.points()[(b, j)]));
            for (r, &i) in order.iter().enumerate() {
                let level = (r as f64 + 0.5) / count as f64;
                let expected = mf[j] + sdf[j] * crate::sliced::standard_normal_quantile(level);
                assert_abs_diff_eq!(next.points()[(i, j)], expected, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn non_orthonormal_basis_is_rejected() {
        let config = SimConfig::new(1.0, 10, 3, ControllerKind::OrthogonalBasis);
        let ens =
            ParticleEnsemble::from_rows(&[&[0.0, 1.0], &[2.0, -1.0], &[5.0, 0.0]], 0.0).unwrap();
        let basis = vec![e1(), Direction::from_angle(0.3)];
        assert!(matches!(
            orthogonal_basis_step(&ens, 0, &config, &ens, &basis),
            Err(Error::Config(_))
        ));
        assert!(orthogonal_basis_step(&ens, 0, &config, &ens, &basis[..1]).is_err());
    }

    #[test]
    fn random_basis_is_orthonormal() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for dim in [1, 2, 5] {
            let basis = random_basis(&mut rng, dim);
            let q = DMatrix::from_fn(dim, dim, |i, j| basis[j].as_vector()[i]);
            assert!((q.transpose() * &q - DMatrix::identity(dim, dim)).norm() < 1e-12);
        }
    }

    #[test]
    fn orthogonal_basis_run_reduces_sw2() {
        let p = example_problem();
        let mut config = SimConfig::new(1.0, 200, 2000, ControllerKind::OrthogonalBasis);
        config.seed = 5;
        config.track_sw2 = Some(Sw2Tracking {
            dirs: DirectionSpec {
                count: 256,
                scheme: Scheme::DeterministicAngular,
            },
            quantile_grid: 2000,
        });
        let res = run(&config, &p).unwrap();
        let series = res.sw2_series.unwrap();
        let (first, last) = (series[0].1, series.last().unwrap().1);
        assert!(last < 0.01 * first, "{first} -> {last}");
    }

    #[test]
    fn config_validation() {
        let p = example_problem();
        let mut config = SimConfig::new(1.0, 0, 10, ControllerKind::IterativeSliced);
        assert!(matches!(run(&config, &p), Err(Error::Config(_))));
        config.steps = 10;
        config.particles = 1;
        assert!(matches!(run(&config, &p), Err(Error::Config(_))));
        config.particles = 10;
        config.controller = ControllerKind::IdealAffine;
        assert!(matches!(run(&config, &p), Err(Error::Config(_))));
        config.controller = ControllerKind::MinEnergy;
        config.horizon = 2.0;
        assert!(matches!(run(&config, &p), Err(Error::Config(_))));
    }

    #[test]
    fn snapshots_follow_the_stride() {
        let p = example_problem();
        let mut config = SimConfig::new(1.0, 10, 20, ControllerKind::IterativeSliced);
        config.record_every = 4;
        let res = run(&config, &p).unwrap();
        let times: Vec<f64> = res.snapshots.iter().map(|s| s.time()).collect();
        assert_eq!(times, vec![0.0, 0.4, 0.8, 1.0]);
    }

    #[test]
    fn fixed_point_runs_stay_near_the_target() {
        let law = example_problem().target().clone();
        let p = SteeringProblem::new(law.clone(), law, 1.0).unwrap();
        let mut config = SimConfig::new(1.0, 50, 2000, ControllerKind::MinEnergy);
        config.dirs = Some(DirectionSpec {
            count: 128,
            scheme: Scheme::DeterministicAngular,
        });
        config.moment_matched_init = false;
        let res = run(&config, &p).unwrap();
        assert_eq!(res.energy, 0.0);
        assert_eq!(res.terminal().points(), res.snapshots[0].points());

        config.controller = ControllerKind::IdealAffine;
        let res = run(&config, &p).unwrap();
        assert!(res.energy < 1e-18, "energy {}", res.energy);
    }

    #[test]
    fn moment_matched_initial_ensemble_is_exact() {
        let p = example_problem();
        let mut config = SimConfig::new(1.0, 10, 500, ControllerKind::IterativeSliced);
        config.moment_matched_init = true;
        let ens = initial_ensemble(&config, &p).unwrap();
        assert!((ens.mean() - p.initial().mean()).norm() < 1e-12);
        assert!((ens.covariance() - p.initial().covariance()).norm() < 1e-12);
    }

    #[test]
    fn ideal_affine_tracks_the_flow() {
        let p = example_problem();
        let n = 5000;
        let mut config = SimConfig::new(1.0, 1000, n, ControllerKind::IdealAffine);
        config.dirs = Some(DirectionSpec {
            count: 512,
            scheme: Scheme::DeterministicAngular,
        });
        config.record_every = 100;
        config.seed = 3;
        let res = run(&config, &p).unwrap();
        let dirs = config.dirs.unwrap().build(2).unwrap();
        let flow = integrate_covariance(&p, &dirs, 4000, 1e-6).unwrap();
        for snap in &res.snapshots[..res.snapshots.len() - 1] {
            let sigma = flow.covariance_at(snap.time()).unwrap();
            let gap = (snap.covariance() - &sigma).norm();
            assert!(
                gap <= 5.0 / (n as f64).sqrt(),
                "t = {}: gap {gap}",
                snap.time()
            );
        }
    }

    #[test]
    fn ideal_affine_weighted_energy_matches_flow() {
        let p = example_problem();
        let mut config = SimConfig::new(1.0, 4000, 20_000, ControllerKind::IdealAffine);
        config.dirs = Some(DirectionSpec {
            count: 512,
            scheme: Scheme::DeterministicAngular,
        });
        config.moment_matched_init = true;
        let res = run(&config, &p).unwrap();
        let dirs = config.dirs.unwrap().build(2).unwrap();
        let exact = weighted_energy(&p, &dirs, 4000).unwrap();
        assert!(
            (res.weighted_energy - exact).abs() <= 0.01 * exact,
            "{} vs {exact}",
            res.weighted_energy
        );
    }

    #[test]
    fn min_energy_paths_are_straight_and_reach_the_target() {
        let p = example_problem();
        let mut config = SimConfig::new(1.0, 100, 4000, ControllerKind::MinEnergy);
        config.record_every = 10;
        config.moment_matched_init = true;
        let res = run(&config, &p).unwrap();
        let dev = chord_deviation(&res.snapshots);
        assert!(dev.iter().all(|&d| d < 1e-9));
        let end = res.terminal();
        assert!((end.mean() - p.target().mean()).norm() < 1e-9);
        assert!((end.covariance() - p.target().covariance()).norm() < 1e-9);
    }

    #[test]
    fn runs_are_bit_reproducible_across_thread_pools() {
        let p = example_problem();
        let mut config = SimConfig::new(1.0, 50, 3000, ControllerKind::IterativeSliced);
        config.seed = 17;
        let run_with = |threads: usize, config: &SimConfig| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| run(config, &p).unwrap())
        };
        for kind in [
            ControllerKind::IterativeSliced,
            ControllerKind::OrthogonalBasis,
        ] {
            config.controller = kind;
            let a = run_with(1, &config);
            let b = run_with(4, &config);
            assert_eq!(a, b);
        }
        let mut other = config.clone();
        other.seed = 18;
        assert_ne!(run_with(2, &config), run_with(2, &other));
    }

    #[test]
    fn sliced_step_against_empirical_target_matches_quantiles() {
        let config = SimConfig::new(1.0, 1, 4, ControllerKind::IterativeSliced);
        let ens =
            ParticleEnsemble::from_rows(&[&[0.0, 0.0], &[1.0, 0.0], &[3.0, 0.0], &[2.0, 0.0]], 0.0)
                .unwrap();
        let target = ParticleEnsemble::from_rows(
            &[&[10.0, 0.0], &[40.0, 0.0], &[30.0, 0.0], &[20.0, 0.0]],
            0.0,
        )
        .unwrap();
        let next = iterative_step(&ens, 0, &config, &target, &e1()).unwrap();
        let moved: Vec<f64> = (0..4).map(|i| next.points()[(i, 0)]).collect();
        assert_eq!(moved, vec![10.0, 20.0, 40.0, 30.0]);
        assert_eq!(
            next.project(&e1()).unwrap(),
            Dist1D::Empirical(vec![10.0, 20.0, 30.0, 40.0])
        );
    }
}
