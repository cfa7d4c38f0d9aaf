//! Numerical certification of the steering theory on Gaussian problems.
//!
//! Each check returns [`CheckReport`]s whose pass/fail status can be
//! recomputed from the stored numbers.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::gaussian::{
    control_power, flow_energy, gain_matrix, integrate_covariance, mean_trajectory, GaussianFlow,
    SteeringProblem,
};
use crate::sliced::{ot_map_1d, sw2, DirectionSet, Dist1D, GaussianLaw, Slice};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckStatus {
    Pass,
    Fail,
    /// The numerical method could not resolve the claim.
    Inconclusive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ToleranceKind {
    /// `|measured − expected| ≤ tolerance`.
    Absolute,
    /// `|measured − expected| ≤ tolerance · max(|expected|, 1e-12)`.
    Relative,
    /// `measured ≤ expected + tolerance`.
    AtMost,
    /// `measured ≥ expected − tolerance`.
    AtLeast,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub name: String,
    pub status: CheckStatus,
    pub measured: f64,
    pub expected: f64,
    pub tolerance: f64,
    pub tolerance_kind: ToleranceKind,
    pub details: String,
}

impl CheckReport {
    pub fn new(
        name: impl Into<String>,
        measured: f64,
        expected: f64,
        tolerance: f64,
        tolerance_kind: ToleranceKind,
        details: impl Into<String>,
    ) -> Self {
        let mut report = Self {
            name: name.into(),
            status: CheckStatus::Fail,
            measured,
            expected,
            tolerance,
            tolerance_kind,
            details: details.into(),
        };
        if report.within_tolerance() {
            report.status = CheckStatus::Pass;
        }
        report
    }

    /// Whether the stored numbers satisfy the stated tolerance.
    pub fn within_tolerance(&self) -> bool {
        let (m, e, tol) = (self.measured, self.expected, self.tolerance);
        match self.tolerance_kind {
            ToleranceKind::Absolute => (m - e).abs() <= tol,
            ToleranceKind::Relative => (m - e).abs() <= tol * e.abs().max(1e-12),
            ToleranceKind::AtMost => m <= e + tol,
            ToleranceKind::AtLeast => m >= e - tol,
        }
    }

    /// Pass and fail agree with the stored numbers; inconclusive is always consistent.
    pub fn is_consistent(&self) -> bool {
        match self.status {
            CheckStatus::Pass => self.within_tolerance(),
            CheckStatus::Fail => !self.within_tolerance(),
            CheckStatus::Inconclusive => true,
        }
    }

    pub fn passed(&self) -> bool {
        self.status == CheckStatus::Pass
    }

    fn inconclusive(mut self, why: &str) -> Self {
        self.status = CheckStatus::Inconclusive;
        self.details = format!("{}; {why}", self.details);
        self
    }
}

fn gaussian_at(
    problem: &SteeringProblem,
    flow: &GaussianFlow,
    dirs: &DirectionSet,
    t: f64,
) -> Result<GaussianLaw> {
    GaussianLaw::new(
        mean_trajectory(problem, t)?,
        flow.integrated_covariance_at(t, problem, dirs)?,
    )
}

/// Analytic `dSW₂²/dt` along the ideal flow: `−2λ(t) (tr(K̄ΣK̄ᵀ) + ‖m − m_f‖²/n²)`.
pub fn analytic_sw2_rate(
    problem: &SteeringProblem,
    flow: &GaussianFlow,
    dirs: &DirectionSet,
    t: f64,
) -> Result<f64> {
    let law = gaussian_at(problem, flow, dirs, t)?;
    let power = control_power(law.mean(), law.covariance(), problem, dirs)?;
    Ok(-2.0 * problem.lambda(t)? * power)
}

/// Compares the analytic rate with Richardson-extrapolated central
/// differences of `t ↦ SW₂²(N(m(t), Σ(t)), ρ_f)` at each of `times`,
/// relative tolerance 1e-4, plus one report on the sign of the analytic
/// rate over every node of the flow.
pub fn check_sw2_derivative(
    problem: &SteeringProblem,
    flow: &GaussianFlow,
    dirs: &DirectionSet,
    times: &[f64],
    fd_step: f64,
) -> Result<Vec<CheckReport>> {
    const TOL: f64 = 1e-4;
    if !(fd_step > 0.0) {
        return Err(Error::Config(format!(
            "fd_step must be positive, got {fd_step}"
        )));
    }
    let target = problem.target();
    let f = |t: f64| -> Result<f64> { sw2(&gaussian_at(problem, flow, dirs, t)?, target, dirs, 1) };
    let central = |t: f64, d: f64| -> Result<f64> { Ok((f(t + d)? - f(t - d)?) / (2.0 * d)) };

    let mut reports = Vec::with_capacity(times.len() + 1);
    for &t in times {
        if !(t - fd_step > 0.0 && t + fd_step < flow.end_time()) {
            return Err(Error::Domain(format!(
                "derivative time {t} with step {fd_step} leaves (0, {})",
                flow.end_time()
            )));
        }
        let analytic = analytic_sw2_rate(problem, flow, dirs, t)?;
        let coarse = central(t, fd_step)?;
        let fine = central(t, fd_step / 2.0)?;
        let richardson = (4.0 * fine - coarse) / 3.0;
        let report = CheckReport::new(
            format!("sw2-derivative@t={t}"),
            richardson,
            analytic,
            TOL,
            ToleranceKind::Relative,
            format!("central differences h={fd_step} and h/2 with Richardson extrapolation; h/2 estimate {fine}"),
        );
        let disagreement = (fine - richardson).abs();
        reports.push(
            if disagreement > 0.5 * TOL * analytic.abs().max(f64::MIN_POSITIVE) {
                report.inconclusive(&format!(
                    "step-halving disagreement {disagreement} exceeds half the tolerance"
                ))
            } else {
                report
            },
        );
    }

    let mut worst = f64::NEG_INFINITY;
    let mut worst_t = 0.0;
    for ((&t, m), sigma) in flow
        .times()
        .iter()
        .zip(flow.means())
        .zip(flow.covariances())
    {
        let rate = -2.0 * problem.lambda(t)? * control_power(m, sigma, problem, dirs)?;
        if rate > worst {
            worst = rate;
            worst_t = t;
        }
    }
    reports.push(CheckReport::new(
        "sw2-nonincreasing",
        worst,
        0.0,
        0.0,
        ToleranceKind::AtMost,
        format!(
            "largest analytic rate over {} flow nodes, attained at t={worst_t}",
            flow.len()
        ),
    ));
    Ok(reports)
}

/// Terminal residuals of the flow at `t = T − ε`: the covariance against
/// the absolute bound 1e-3, and the mean against its closed form
/// `(ε/T)^{1/n} ‖m₀ − m_f‖` to 1e-9.
pub fn check_convergence(
    problem: &SteeringProblem,
    dirs: &DirectionSet,
    steps: usize,
    epsilon: f64,
) -> Result<Vec<CheckReport>> {
    let flow = integrate_covariance(problem, dirs, steps, epsilon)?;
    let target = problem.target();
    let sigma_res = (flow.covariances().last().expect("nonempty") - target.covariance()).norm();
    let mean_res = (flow.means().last().expect("nonempty") - target.mean()).norm();
    let n = problem.dim() as f64;
    let predicted = (epsilon / problem.horizon()).powf(1.0 / n)
        * (problem.initial().mean() - target.mean()).norm();
    Ok(vec![
        CheckReport::new(
            "convergence-covariance",
            sigma_res,
            0.0,
            1e-3,
            ToleranceKind::AtMost,
            format!(
                "‖Σ(T−ε) − Σ_f‖_F with ε={epsilon}, {steps} RK4 steps in τ, M={}",
                dirs.len()
            ),
        ),
        CheckReport::new(
            "convergence-mean",
            mean_res,
            predicted,
            1e-9,
            ToleranceKind::Absolute,
            format!("‖m(T−ε) − m_f‖ against (ε/T)^(1/n)‖m₀ − m_f‖, ε={epsilon}"),
        ),
    ])
}

/// `E∫_0^{T−ε}‖u‖²dt` of the ideal controller against `½ SW₂²(ρ₀, ρ_f)`.
pub fn check_energy_identity(
    problem: &SteeringProblem,
    dirs: &DirectionSet,
    steps: usize,
    relative_tolerance: f64,
) -> Result<CheckReport> {
    let flow = integrate_covariance(
        problem,
        dirs,
        steps,
        crate::gaussian::default_epsilon(problem.horizon()),
    )?;
    let energy = flow_energy(&flow, problem, dirs);
    let half = 0.5 * sw2(problem.initial(), problem.target(), dirs, 1)?;
    Ok(CheckReport::new(
        "energy-identity",
        energy.energy,
        half,
        relative_tolerance,
        ToleranceKind::Relative,
        format!(
            "E∫‖u‖²dt on [0, T−ε], ε=1e-6·T, {steps} τ-steps, M={}; horizon-weighted energy E∫(T−t)‖u‖²dt = {}",
            dirs.len(),
            energy.weighted_energy
        ),
    ))
}

/// `E∫_0^{T−ε}(T − t)‖u‖²dt` of the ideal controller against `½ SW₂²(ρ₀, ρ_f)`.
pub fn check_weighted_energy_identity(
    problem: &SteeringProblem,
    dirs: &DirectionSet,
    steps: usize,
    relative_tolerance: f64,
) -> Result<CheckReport> {
    let flow = integrate_covariance(
        problem,
        dirs,
        steps,
        crate::gaussian::default_epsilon(problem.horizon()),
    )?;
    let energy = flow_energy(&flow, problem, dirs);
    let half = 0.5 * sw2(problem.initial(), problem.target(), dirs, 1)?;
    Ok(CheckReport::new(
        "weighted-energy-identity",
        energy.weighted_energy,
        half,
        relative_tolerance,
        ToleranceKind::Relative,
        format!(
            "E∫(T−t)‖u‖²dt on [0, T−ε], ε=1e-6·T, {steps} τ-steps, M={}",
            dirs.len()
        ),
    ))
}

/// Random SPD matrix at Frobenius distance at least `min_gap` from `center`.
fn random_spd_away_from<R: Rng + ?Sized>(
    rng: &mut R,
    center: &DMatrix<f64>,
    min_gap: f64,
) -> DMatrix<f64> {
    let n = center.nrows();
    loop {
        let a = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let scale = center.trace() / n as f64 * (0.25 + 2.0 * rng.random::<f64>());
        let sigma =
            (&a * a.transpose()) * (scale / n as f64) + DMatrix::identity(n, n) * (0.05 * scale);
        if (&sigma - center).norm() >= min_gap {
            return sigma;
        }
    }
}

/// Zero gain at the target covariance, and strictly positive gain norms
/// for 20 seeded SPD covariances at least 0.1 away from it.
///
/// The second report is a numerical probe of uniqueness, not a proof.
pub fn check_fixed_point(
    target: &GaussianLaw,
    dirs: &DirectionSet,
    t: f64,
    horizon: f64,
    seed: u64,
) -> Result<Vec<CheckReport>> {
    let sf = target.covariance();
    let at_target = gain_matrix(t, sf, sf, horizon, dirs)?.norm();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut smallest = f64::INFINITY;
    for _ in 0..20 {
        let sigma = random_spd_away_from(&mut rng, sf, 0.1);
        smallest = smallest.min(gain_matrix(t, &sigma, sf, horizon, dirs)?.norm());
    }
    let floor = (1e3 * at_target).max(1e-8);
    Ok(vec![
        CheckReport::new(
            "fixed-point-gain",
            at_target,
            0.0,
            1e-10,
            ToleranceKind::Absolute,
            format!("‖K(t, Σ_f)‖_F at t={t}, M={}", dirs.len()),
        ),
        CheckReport::new(
            "fixed-point-uniqueness-probe",
            smallest,
            floor,
            0.0,
            ToleranceKind::AtLeast,
            "smallest ‖K(t, Σ)‖_F over 20 seeded SPD Σ with ‖Σ − Σ_f‖_F ≥ 0.1; numerical probe, not a proof",
        ),
    ])
}

/// Standard normal quantiles at the midpoints `(j − ½)/G`, found by
/// bisection on the CDF.
fn normal_midpoint_quantiles(grid: usize) -> Vec<f64> {
    let cdf = |x: f64| 0.5 * erfc(-x / std::f64::consts::SQRT_2);
    let half: Vec<f64> = (1..=grid / 2)
        .map(|j| {
            let p = (j as f64 - 0.5) / grid as f64;
            let (mut lo, mut hi) = (-40.0, 0.0);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if cdf(mid) < p {
                    lo = mid;
                } else {
                    hi = mid;
                }
                if hi - lo <= f64::EPSILON * hi.abs().max(1.0) {
                    break;
                }
            }
            0.5 * (lo + hi)
        })
        .collect();
    // Midpoint levels are symmetric about ½.
    let mut all: Vec<f64> = half.clone();
    if grid % 2 == 1 {
        all.push(0.0);
    }
    all.extend(half.iter().rev().map(|q| -q));
    all
}

/// Dense reference for the sliced distance between planar Gaussians:
/// an angular sweep with a midpoint quantile grid on every slice.
#[derive(Debug, Clone)]
pub struct BruteForceOracle {
    angles: usize,
    quantiles: Vec<f64>,
}

impl BruteForceOracle {
    pub fn new(angles: usize, grid: usize) -> Result<Self> {
        if angles == 0 || grid == 0 {
            return Err(Error::Config(
                "oracle needs at least one angle and one grid cell".into(),
            ));
        }
        Ok(Self {
            angles,
            quantiles: normal_midpoint_quantiles(grid),
        })
    }

    pub fn sw2(&self, mu: &GaussianLaw, nu: &GaussianLaw) -> Result<f64> {
        if mu.dim() != 2 || nu.dim() != 2 {
            return Err(Error::Config(
                "the brute-force oracle is planar only".into(),
            ));
        }
        let slice = |law: &GaussianLaw, c: f64, s: f64| {
            let (m, v) = (law.mean(), law.covariance());
            let mean = c * m[0] + s * m[1];
            let var = c * c * v[(0, 0)] + 2.0 * c * s * v[(0, 1)] + s * s * v[(1, 1)];
            (mean, var.sqrt())
        };
        let mut total = 0.0;
        for j in 0..self.angles {
            let phi = (j as f64 + 0.5) * PI / self.angles as f64;
            let (c, s) = (phi.cos(), phi.sin());
            let (m1, s1) = slice(mu, c, s);
            let (m2, s2) = slice(nu, c, s);
            let w2: f64 = self
                .quantiles
                .iter()
                .map(|q| ((m1 + s1 * q) - (m2 + s2 * q)).powi(2))
                .sum();
            total += w2 / self.quantiles.len() as f64;
        }
        Ok(total / self.angles as f64)
    }
}

/// `SW₂²(μ, ν)` for planar Gaussians with `m_angles` angles and a
/// quantile grid of `grid` cells per slice, without the Gaussian closed form.
pub fn oracle_sw2_bruteforce(
    mu: &GaussianLaw,
    nu: &GaussianLaw,
    m_angles: usize,
    grid: usize,
) -> Result<f64> {
    BruteForceOracle::new(m_angles, grid)?.sw2(mu, nu)
}

/// A seeded random planar Gaussian with mean entries in `[-5, 5]`.
pub fn random_gaussian<R: Rng + ?Sized>(rng: &mut R) -> GaussianLaw {
    let mean = DVector::from_fn(2, |_, _| rng.random_range(-5.0..5.0));
    let a = DMatrix::from_fn(2, 2, |_, _| rng.sample::<f64, _>(StandardNormal));
    let cov = &a * a.transpose() + DMatrix::identity(2, 2) * 0.05;
    GaussianLaw::new(mean, (&cov + cov.transpose()) * 0.5).expect("shifted Gram matrix is SPD")
}

/// Metric and monotonicity properties of the sliced core on `pairs`
/// seeded random Gaussian pairs in the plane.
pub fn check_sliced_properties(
    dirs: &DirectionSet,
    pairs: usize,
    seed: u64,
    oracle: Option<&BruteForceOracle>,
) -> Result<Vec<CheckReport>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut asymmetry: f64 = 0.0;
    let mut smallest = f64::INFINITY;
    let mut self_distance: f64 = 0.0;
    let mut oracle_gap: f64 = 0.0;
    let mut worst_drop: f64 = 0.0;
    for _ in 0..pairs {
        let a = random_gaussian(&mut rng);
        let b = random_gaussian(&mut rng);
        let ab = sw2(&a, &b, dirs, 1)?;
        let ba = sw2(&b, &a, dirs, 1)?;
        asymmetry = asymmetry.max((ab - ba).abs());
        smallest = smallest.min(ab);
        self_distance = self_distance.max(sw2(&a, &a, dirs, 1)?.abs());
        if let Some(oracle) = oracle {
            oracle_gap = oracle_gap.max((ab - oracle.sw2(&a, &b)?).abs() / ab);
        }

        let theta = &dirs.directions()[rng.random_range(0..dirs.len())];
        let samples: Vec<f64> = (0..50)
            .map(|_| rng.sample::<f64, _>(StandardNormal) * 3.0)
            .collect();
        for (src, tgt) in [
            (a.project(theta)?, b.project(theta)?),
            (Dist1D::empirical(samples.clone())?, b.project(theta)?),
            (a.project(theta)?, Dist1D::empirical(samples)?),
        ] {
            let map = ot_map_1d(&src, &tgt);
            let lo = src.mean() - 6.0 * src.variance().sqrt();
            let hi = src.mean() + 6.0 * src.variance().sqrt();
            let mut prev = map.eval(lo);
            for i in 1..=400 {
                let y = map.eval(lo + (hi - lo) * i as f64 / 400.0);
                worst_drop = worst_drop.max(prev - y);
                prev = y;
            }
        }
    }
    let mut reports = vec![
        CheckReport::new(
            "sw2-symmetry",
            asymmetry,
            0.0,
            1e-12,
            ToleranceKind::Absolute,
            format!("max |SW₂²(a,b) − SW₂²(b,a)| over {pairs} random pairs"),
        ),
        CheckReport::new(
            "sw2-nonnegative",
            smallest,
            0.0,
            0.0,
            ToleranceKind::AtLeast,
            format!("min SW₂² over {pairs} random pairs"),
        ),
        CheckReport::new(
            "sw2-identity",
            self_distance,
            0.0,
            0.0,
            ToleranceKind::Absolute,
            format!("max SW₂²(a,a) over {pairs} random laws"),
        ),
        CheckReport::new(
            "map1d-monotone",
            worst_drop,
            0.0,
            0.0,
            ToleranceKind::AtMost,
            "largest decrease of a 1D transport map between consecutive grid points",
        ),
    ];
    if oracle.is_some() {
        reports.push(CheckReport::new("sw2-oracle-agreement", oracle_gap, 0.0, 1e-4, ToleranceKind::AtMost,
            format!("max relative gap between closed-form SW₂² and the brute-force oracle over {pairs} pairs")));
    }
    Ok(reports)
}
