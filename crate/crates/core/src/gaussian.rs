//! Closed-form machinery for steering between Gaussian laws.
//!
//! Under the ideal sliced controller a Gaussian ensemble stays Gaussian
//! and the control is affine, `v(t, x) = K(t, Σ(t)) x + η(t, Σ(t))`, with
//!
//! ```text
//! K(t, Σ) = λ(t) [ ∫ √(θᵀΣ_fθ / θᵀΣθ) θθᵀ σ(dθ) − I/n ],   λ(t) = 1/(T − t)
//! ṁ = −(λ(t)/n)(m − m_f),     Σ̇ = KΣ + ΣKᵀ.
//! ```
//!
//! The gain blows up at the horizon. The covariance equation is therefore
//! integrated in `τ = −log(T − t)`, where `λ dt = dτ` and the right-hand
//! side becomes `K̄Σ + ΣK̄` with the bounded normalized gain `K̄ = K/λ`.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{sym_inv_sqrt, sym_sqrt, symmetrize};
use crate::sliced::{check_spd, ot_map_1d, DirectionSet, GaussianLaw, Slice};

/// Gaussian initial and target laws with a horizon `T`.
#[derive(Debug, Clone)]
pub struct SteeringProblem {
    initial: GaussianLaw,
    target: GaussianLaw,
    horizon: f64,
}

impl SteeringProblem {
    pub fn new(initial: GaussianLaw, target: GaussianLaw, horizon: f64) -> Result<Self> {
        if initial.dim() != target.dim() {
            return Err(Error::DimensionMismatch {
                expected: initial.dim(),
                got: target.dim(),
            });
        }
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(Error::Config(format!(
                "horizon must be positive, got {horizon}"
            )));
        }
        Ok(Self {
            initial,
            target,
            horizon,
        })
    }

    pub fn initial(&self) -> &GaussianLaw {
        &self.initial
    }

    pub fn target(&self) -> &GaussianLaw {
        &self.target
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn dim(&self) -> usize {
        self.initial.dim()
    }

    /// `λ(t) = 1/(T − t)`.
    pub fn lambda(&self, t: f64) -> Result<f64> {
        lambda(t, self.horizon)
    }

    /// The problem seen through the orthogonal change of coordinates `q`.
    pub fn rotated(&self, q: &DMatrix<f64>) -> Result<Self> {
        let rot = |law: &GaussianLaw| {
            GaussianLaw::new(
                q * law.mean(),
                symmetrize(&(q * law.covariance() * q.transpose())),
            )
        };
        Self::new(rot(&self.initial)?, rot(&self.target)?, self.horizon)
    }
}

fn lambda(t: f64, horizon: f64) -> Result<f64> {
    if !(t < horizon) {
        return Err(Error::Horizon { t, horizon });
    }
    Ok(1.0 / (horizon - t))
}

/// `K̄(Σ) = Σ_j w_j √(θ_jᵀΣ_fθ_j / θ_jᵀΣθ_j) θ_jθ_jᵀ − I/n`, symmetrized.
///
/// No validation; callers guarantee SPD inputs of matching dimension.
pub(crate) fn normalized_gain(
    sigma: &DMatrix<f64>,
    target_sigma: &DMatrix<f64>,
    dirs: &DirectionSet,
) -> DMatrix<f64> {
    let n = sigma.nrows();
    let mut acc = DMatrix::zeros(n, n);
    for (theta, w) in dirs.iter() {
        let ratio = (theta.quad_form(target_sigma) / theta.quad_form(sigma)).sqrt();
        let v = theta.as_vector();
        acc.ger(w * ratio, v, v, 1.0);
    }
    for i in 0..n {
        acc[(i, i)] -= 1.0 / n as f64;
    }
    symmetrize(&acc)
}

fn check_gain_inputs(
    sigma: &DMatrix<f64>,
    target_sigma: &DMatrix<f64>,
    dirs: &DirectionSet,
) -> Result<()> {
    let n = sigma.nrows();
    if target_sigma.shape() != (n, n) || dirs.dim() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: if dirs.dim() != n {
                dirs.dim()
            } else {
                target_sigma.nrows()
            },
        });
    }
    check_spd(sigma)?;
    check_spd(target_sigma)?;
    Ok(())
}

/// Feedback gain `K(t, Σ)` of the ideal sliced controller.
pub fn gain_matrix(
    t: f64,
    sigma: &DMatrix<f64>,
    target_sigma: &DMatrix<f64>,
    horizon: f64,
    dirs: &DirectionSet,
) -> Result<DMatrix<f64>> {
    let lam = lambda(t, horizon)?;
    check_gain_inputs(sigma, target_sigma, dirs)?;
    Ok(normalized_gain(sigma, target_sigma, dirs) * lam)
}

/// Offset `η(t, Σ)` chosen so that `K m + η = −(λ/n)(m − m_f)` holds exactly.
pub fn offset_vector(
    t: f64,
    sigma: &DMatrix<f64>,
    mean: &DVector<f64>,
    problem: &SteeringProblem,
    dirs: &DirectionSet,
) -> Result<DVector<f64>> {
    if mean.len() != problem.dim() {
        return Err(Error::DimensionMismatch {
            expected: problem.dim(),
            got: mean.len(),
        });
    }
    let k = gain_matrix(t, sigma, problem.target.covariance(), problem.horizon, dirs)?;
    Ok(offset_from_gain(&k, t, mean, problem))
}

fn offset_from_gain(
    k: &DMatrix<f64>,
    t: f64,
    mean: &DVector<f64>,
    problem: &SteeringProblem,
) -> DVector<f64> {
    let lam = 1.0 / (problem.horizon - t);
    let n = problem.dim() as f64;
    -(mean - problem.target.mean()) * (lam / n) - k * mean
}

/// Affine state feedback `u = K x + η` valid at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineController {
    pub gain: DMatrix<f64>,
    pub offset: DVector<f64>,
    pub time: f64,
}

impl AffineController {
    pub fn velocity(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.gain * x + &self.offset
    }
}

/// Closed-form mean `m(t) = m_f + ((T − t)/T)^{1/n} (m₀ − m_f)`.
pub fn mean_trajectory(problem: &SteeringProblem, t: f64) -> Result<DVector<f64>> {
    let horizon = problem.horizon;
    if !(0.0..=horizon).contains(&t) {
        return Err(Error::Domain(format!(
            "mean trajectory is defined on [0, {horizon}], got t = {t}"
        )));
    }
    Ok(mean_at_fraction(problem, (horizon - t) / horizon))
}

/// Mean at remaining-time fraction `r = (T − t)/T`.
fn mean_at_fraction(problem: &SteeringProblem, remaining: f64) -> DVector<f64> {
    let m0 = problem.initial.mean();
    let mf = problem.target.mean();
    if remaining == 0.0 {
        return mf.clone();
    }
    let factor = remaining.powf(1.0 / problem.dim() as f64);
    mf + (m0 - mf) * factor
}

/// Mean and covariance sampled on an equispaced grid in `τ = −log(T − t)`.
#[derive(Debug, Clone)]
pub struct GaussianFlow {
    horizon: f64,
    taus: Vec<f64>,
    times: Vec<f64>,
    means: Vec<DVector<f64>>,
    covariances: Vec<DMatrix<f64>>,
    target: GaussianLaw,
}

impl GaussianFlow {
    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn taus(&self) -> &[f64] {
        &self.taus
    }

    pub fn means(&self) -> &[DVector<f64>] {
        &self.means
    }

    pub fn covariances(&self) -> &[DMatrix<f64>] {
        &self.covariances
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Last integrated time, `T − ε`.
    pub fn end_time(&self) -> f64 {
        *self.times.last().expect("flow has at least two nodes")
    }

    /// The state reported at `t = T`: the flow is snapped onto the target.
    pub fn terminal(&self) -> &GaussianLaw {
        &self.target
    }

    fn locate(&self, t: f64) -> Result<(usize, f64)> {
        let end = self.end_time();
        if !(t >= 0.0 && t <= end) {
            return Err(Error::Extrapolation { t, start: 0.0, end });
        }
        let tau = -(self.horizon - t).ln();
        let dtau = self.taus[1] - self.taus[0];
        let last = self.taus.len() - 2;
        let idx = (((tau - self.taus[0]) / dtau).floor().max(0.0) as usize).min(last);
        let frac = ((tau - self.taus[idx]) / dtau).clamp(0.0, 1.0);
        Ok((idx, frac))
    }

    /// `Σ(t)` by linear interpolation in `τ`.
    pub fn covariance_at(&self, t: f64) -> Result<DMatrix<f64>> {
        let (i, f) = self.locate(t)?;
        Ok(&self.covariances[i] * (1.0 - f) + &self.covariances[i + 1] * f)
    }

    /// `Σ(t)` by RK4 from the nearest grid node at or below `t`.
    ///
    /// Unlike [`Self::covariance_at`] this is smooth in `t`, which finite
    /// differences need.
    pub fn integrated_covariance_at(
        &self,
        t: f64,
        problem: &SteeringProblem,
        dirs: &DirectionSet,
    ) -> Result<DMatrix<f64>> {
        let (i, _) = self.locate(t)?;
        let tau = -(self.horizon - t).ln();
        advance_covariance(&self.covariances[i], problem, dirs, self.taus[i], tau, 4)
    }

    /// The Gaussian state `N(m(t), Σ(t))`.
    pub fn law_at(&self, problem: &SteeringProblem, t: f64) -> Result<GaussianLaw> {
        GaussianLaw::new(mean_trajectory(problem, t)?, self.covariance_at(t)?)
    }

    /// Affine ideal controller at time `t`.
    pub fn controller_at(
        &self,
        t: f64,
        problem: &SteeringProblem,
        dirs: &DirectionSet,
    ) -> Result<AffineController> {
        let sigma = self.covariance_at(t)?;
        let mean = mean_trajectory(problem, t)?;
        let gain = gain_matrix(
            t,
            &sigma,
            problem.target.covariance(),
            problem.horizon,
            dirs,
        )?;
        let offset = offset_from_gain(&gain, t, &mean, problem);
        Ok(AffineController {
            gain,
            offset,
            time: t,
        })
    }
}

/// One classical RK4 step of `dΣ/dτ = K̄Σ + ΣK̄`.
fn rk4_step(
    sigma: &DMatrix<f64>,
    target_sigma: &DMatrix<f64>,
    dirs: &DirectionSet,
    dtau: f64,
) -> DMatrix<f64> {
    let rhs = |s: &DMatrix<f64>| {
        let k = normalized_gain(s, target_sigma, dirs);
        let ks = &k * s;
        &ks + ks.transpose()
    };
    let k1 = rhs(sigma);
    let k2 = rhs(&(sigma + &k1 * (dtau / 2.0)));
    let k3 = rhs(&(sigma + &k2 * (dtau / 2.0)));
    let k4 = rhs(&(sigma + &k3 * dtau));
    symmetrize(&(sigma + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dtau / 6.0)))
}

fn ensure_spd(sigma: &DMatrix<f64>, time: f64) -> Result<()> {
    if sigma.iter().any(|v| !v.is_finite()) {
        return Err(Error::IntegrationFailure {
            time,
            reason: "covariance became non-finite".into(),
        });
    }
    if Cholesky::new(sigma.clone()).is_none() {
        return Err(Error::IntegrationFailure {
            time,
            reason: "covariance lost positive definiteness".into(),
        });
    }
    Ok(())
}

/// Advances `Σ` from `tau_from` to `tau_to` (either direction) with `substeps` RK4 steps.
pub(crate) fn advance_covariance(
    sigma: &DMatrix<f64>,
    problem: &SteeringProblem,
    dirs: &DirectionSet,
    tau_from: f64,
    tau_to: f64,
    substeps: usize,
) -> Result<DMatrix<f64>> {
    let h = (tau_to - tau_from) / substeps as f64;
    let mut s = sigma.clone();
    for i in 0..substeps {
        s = rk4_step(&s, problem.target.covariance(), dirs, h);
        let tau = tau_from + h * (i + 1) as f64;
        ensure_spd(&s, problem.horizon - (-tau).exp())?;
    }
    Ok(s)
}

/// Integrates the covariance equation from `t = 0` to `t = T − ε`.
///
/// Fixed-step RK4 on `steps` equispaced cells in `τ ∈ [−log T, −log ε]`,
/// with the same direction set at every stage.
pub fn integrate_covariance(
    problem: &SteeringProblem,
    dirs: &DirectionSet,
    steps: usize,
    epsilon: f64,
) -> Result<GaussianFlow> {
    let horizon = problem.horizon;
    if steps < 10 {
        return Err(Error::Config(format!(
            "need at least 10 steps, got {steps}"
        )));
    }
    if !(epsilon > 0.0 && epsilon < horizon) {
        return Err(Error::Config(format!(
            "epsilon must lie in (0, T = {horizon}), got {epsilon}"
        )));
    }
    if dirs.dim() != problem.dim() {
        return Err(Error::DimensionMismatch {
            expected: problem.dim(),
            got: dirs.dim(),
        });
    }
    let tau0 = -horizon.ln();
    let tau_end = -epsilon.ln();
    let dtau = (tau_end - tau0) / steps as f64;

    let mut taus = Vec::with_capacity(steps + 1);
    let mut times = Vec::with_capacity(steps + 1);
    let mut means = Vec::with_capacity(steps + 1);
    let mut covariances = Vec::with_capacity(steps + 1);

    let mut sigma = problem.initial.covariance().clone();
    for i in 0..=steps {
        let (tau, t, remaining) = if i == steps {
            (tau_end, horizon - epsilon, epsilon / horizon)
        } else if i == 0 {
            (tau0, 0.0, 1.0)
        } else {
            let tau = tau0 + dtau * i as f64;
            let left = (-tau).exp();
            (tau, horizon - left, left / horizon)
        };
        if i > 0 {
            sigma = rk4_step(&sigma, problem.target.covariance(), dirs, dtau);
            ensure_spd(&sigma, t)?;
        }
        taus.push(tau);
        times.push(t);
        means.push(mean_at_fraction(problem, remaining));
        covariances.push(sigma.clone());
    }
    Ok(GaussianFlow {
        horizon,
        taus,
        times,
        means,
        covariances,
        target: problem.target.clone(),
    })
}

/// Ideal sliced controller evaluated through its affine form.
pub fn ideal_velocity(
    t: f64,
    x: &DVector<f64>,
    flow: &GaussianFlow,
    problem: &SteeringProblem,
    dirs: &DirectionSet,
) -> Result<DVector<f64>> {
    if x.len() != problem.dim() {
        return Err(Error::DimensionMismatch {
            expected: problem.dim(),
            got: x.len(),
        });
    }
    Ok(flow.controller_at(t, problem, dirs)?.velocity(x))
}

/// Ideal sliced controller evaluated slice by slice:
/// `−λ(t) Σ_j w_j (θ_jᵀx − 𝒯^θj(θ_jᵀx)) θ_j`, where `𝒯^θ` is the 1D optimal
/// map between the projections of `current` and `target`.
///
/// Works for any pair of sliceable laws, Gaussian or empirical.
pub fn sliced_velocity<A, B>(
    t: f64,
    x: &DVector<f64>,
    current: &A,
    target: &B,
    horizon: f64,
    dirs: &DirectionSet,
) -> Result<DVector<f64>>
where
    A: Slice + ?Sized,
    B: Slice + ?Sized,
{
    let lam = lambda(t, horizon)?;
    let n = x.len();
    if current.dim() != n || target.dim() != n || dirs.dim() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: current.dim(),
        });
    }
    let mut acc = DVector::zeros(n);
    for (theta, w) in dirs.iter() {
        let map = ot_map_1d(&current.project(theta)?, &target.project(theta)?);
        let s = theta.project(x);
        acc.axpy(w * (s - map.eval(s)), theta.as_vector(), 1.0);
    }
    Ok(acc * -lam)
}

/// An affine map `x ↦ A x + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineMap {
    pub matrix: DMatrix<f64>,
    pub offset: DVector<f64>,
}

impl AffineMap {
    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.matrix * x + &self.offset
    }
}

/// Brenier (optimal transport) map between the two Gaussian marginals.
pub fn brenier_map_gaussian(problem: &SteeringProblem) -> Result<AffineMap> {
    let s0 = problem.initial.covariance();
    let sf = problem.target.covariance();
    let root = sym_sqrt(s0)?;
    let inv_root = sym_inv_sqrt(s0)?;
    let middle = sym_sqrt(&symmetrize(&(&root * sf * &root)))?;
    let matrix = symmetrize(&(&inv_root * middle * &inv_root));
    let offset = problem.target.mean() - &matrix * problem.initial.mean();
    Ok(AffineMap { matrix, offset })
}

/// Minimum-energy controller along the displacement interpolation
/// `𝒯_{0:t}(x) = ((T − t)/T) x + (t/T) 𝒯(x)`.
#[derive(Debug, Clone)]
pub struct MinEnergyController {
    map: AffineMap,
    horizon: f64,
}

impl MinEnergyController {
    pub fn new(problem: &SteeringProblem) -> Result<Self> {
        Ok(Self {
            map: brenier_map_gaussian(problem)?,
            horizon: problem.horizon,
        })
    }

    pub fn map(&self) -> &AffineMap {
        &self.map
    }

    /// The velocity field at time `t` written as `v = G x + c`.
    pub fn affine_at(&self, t: f64) -> Result<AffineController> {
        let horizon = self.horizon;
        if !(t >= 0.0) {
            return Err(Error::Domain(format!("time must be >= 0, got {t}")));
        }
        lambda(t, horizon)?;
        let n = self.map.offset.len();
        let a = t / horizon;
        let interp = DMatrix::identity(n, n) * (1.0 - a) + &self.map.matrix * a;
        let inv = interp.try_inverse().ok_or_else(|| {
            Error::Numeric(format!("displacement interpolation singular at t = {t}"))
        })?;
        let excess = (&self.map.matrix - DMatrix::identity(n, n)) * inv;
        let offset = (&self.map.offset - &excess * &self.map.offset * a) / horizon;
        Ok(AffineController {
            gain: excess / horizon,
            offset,
            time: t,
        })
    }

    /// `v(t, x) = (𝒯(z) − z)/T` with `z = 𝒯_{0:t}⁻¹(x)`.
    pub fn velocity(&self, t: f64, x: &DVector<f64>) -> Result<DVector<f64>> {
        let horizon = self.horizon;
        if !(t >= 0.0) {
            return Err(Error::Domain(format!("time must be >= 0, got {t}")));
        }
        lambda(t, horizon)?;
        let n = x.len();
        if n != self.map.offset.len() {
            return Err(Error::DimensionMismatch {
                expected: self.map.offset.len(),
                got: n,
            });
        }
        let a = t / horizon;
        let interp = DMatrix::identity(n, n) * (1.0 - a) + &self.map.matrix * a;
        let rhs = x - &self.map.offset * a;
        let z = interp.lu().solve(&rhs).ok_or_else(|| {
            Error::Numeric(format!("displacement interpolation singular at t = {t}"))
        })?;
        Ok((self.map.apply(&z) - z) / horizon)
    }
}

pub fn min_energy_velocity(
    t: f64,
    x: &DVector<f64>,
    problem: &SteeringProblem,
) -> Result<DVector<f64>> {
    MinEnergyController::new(problem)?.velocity(t, x)
}

/// Default terminal cutoff `ε = 1e-6 · T`.
pub fn default_epsilon(horizon: f64) -> f64 {
    1e-6 * horizon
}

/// Control energy of the ideal sliced controller, split two ways.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowEnergy {
    /// `E ∫_0^{T−ε} ‖u‖² dt`.
    pub energy: f64,
    /// `E ∫_0^{T−ε} (T − t) ‖u‖² dt`.
    pub weighted_energy: f64,
}

/// `E‖v‖²/λ² = tr(K̄ΣK̄ᵀ) + ‖m − m_f‖²/n²` for the state `N(m, Σ)`.
///
/// `dSW₂²/dt = −2λ(t)` times this quantity along the ideal flow.
pub fn control_power(
    mean: &DVector<f64>,
    sigma: &DMatrix<f64>,
    problem: &SteeringProblem,
    dirs: &DirectionSet,
) -> Result<f64> {
    check_gain_inputs(sigma, problem.target.covariance(), dirs)?;
    Ok(power_unchecked(mean, sigma, problem, dirs))
}

fn power_unchecked(
    mean: &DVector<f64>,
    sigma: &DMatrix<f64>,
    problem: &SteeringProblem,
    dirs: &DirectionSet,
) -> f64 {
    let n = problem.dim() as f64;
    let k = normalized_gain(sigma, problem.target.covariance(), dirs);
    (&k * sigma * k.transpose()).trace() + (mean - problem.target.mean()).norm_squared() / (n * n)
}

pub(crate) fn normalized_control_power(
    flow: &GaussianFlow,
    problem: &SteeringProblem,
    dirs: &DirectionSet,
) -> Vec<f64> {
    flow.covariances
        .iter()
        .zip(&flow.means)
        .map(|(sigma, m)| power_unchecked(m, sigma, problem, dirs))
        .collect()
}

/// Energies of the ideal controller, integrated in `τ` on the flow grid.
///
/// With `dτ = λ dt` the plain energy is `∫ λ E‖K̄x + η̄‖² dτ` and the
/// horizon-weighted one is `∫ E‖K̄x + η̄‖² dτ`.
pub fn flow_energy(
    flow: &GaussianFlow,
    problem: &SteeringProblem,
    dirs: &DirectionSet,
) -> FlowEnergy {
    let power = normalized_control_power(flow, problem, dirs);
    let dtau = flow.taus[1] - flow.taus[0];
    let lam: Vec<f64> = flow.taus.iter().map(|tau| tau.exp()).collect();
    let unweighted: Vec<f64> = power.iter().zip(&lam).map(|(p, l)| p * l).collect();
    FlowEnergy {
        energy: simpson(&unweighted, dtau),
        weighted_energy: simpson(&power, dtau),
    }
}

/// `E ∫_0^{T−ε} ‖u‖² dt` under the ideal sliced controller, `ε = 1e-6 T`.
///
/// For `n ≥ 2` and `m₀ ≠ m_f` this grows like `log(T/ε)`: the mean
/// velocity scales as `(T − t)^{1/n − 1}`.
pub fn ideal_energy(problem: &SteeringProblem, dirs: &DirectionSet, steps: usize) -> Result<f64> {
    let flow = integrate_covariance(problem, dirs, steps, default_epsilon(problem.horizon))?;
    Ok(flow_energy(&flow, problem, dirs).energy)
}

/// `E ∫_0^{T−ε} (T − t)‖u‖² dt` under the ideal sliced controller.
///
/// Equals `½ SW₂²(ρ₀, ρ_f)` in the limit `ε → 0`.
pub fn weighted_energy(
    problem: &SteeringProblem,
    dirs: &DirectionSet,
    steps: usize,
) -> Result<f64> {
    let flow = integrate_covariance(problem, dirs, steps, default_epsilon(problem.horizon))?;
    Ok(flow_energy(&flow, problem, dirs).weighted_energy)
}

/// Composite Simpson on an equispaced grid; trapezoid on a trailing odd cell.
pub(crate) fn simpson(values: &[f64], h: f64) -> f64 {
    let cells = values.len().saturating_sub(1);
    if cells == 0 {
        return 0.0;
    }
    let even = cells - cells % 2;
    let mut acc = 0.0;
    for i in (0..even).step_by(2) {
        acc += values[i] + 4.0 * values[i + 1] + values[i + 2];
    }
    acc *= h / 3.0;
    if even < cells {
        acc += 0.5 * h * (values[cells - 1] + values[cells]);
    }
    acc
}
