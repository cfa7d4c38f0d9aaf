//! The `sliced-steer` command line: `steer`, `compare` and `check`.
//!
//! Configuration is one JSON document with the sections `problem`, `sim`,
//! `dirs`, `outputs` and `check`. Every section and field is optional and
//! defaults to the two-dimensional example scenario; unknown keys are
//! rejected.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::analysis::{
    check_convergence, check_energy_identity, check_fixed_point, check_sliced_properties,
    check_sw2_derivative, check_weighted_energy_identity, BruteForceOracle, CheckReport,
};
use crate::error::Error;
use crate::gaussian::{
    brenier_map_gaussian, integrate_covariance, mean_trajectory, SteeringProblem,
};
use crate::linalg::sym_sqrt;
use crate::sim::{
    chord_deviation, run, ControllerKind, DirectionSpec, SimConfig, SimResult, Sw2Tracking,
};
use crate::sliced::{GaussianLaw, Scheme};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "sliced-steer",
    version,
    about = "Steer particle ensembles with sliced optimal transport feedback"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate one controller and write trajectories, moments and energy.
    Steer(CommonArgs),
    /// Compare covariance evolution and 3σ ellipses across controllers.
    Compare(CommonArgs),
    /// Run the certification checks and write a JSON report.
    Check(CommonArgs),
}

#[derive(Debug, Args)]
struct CommonArgs {
    /// JSON configuration file. Defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides `sim.seed` and `check.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `outputs.dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LawSection {
    pub mean: Vec<f64>,
    pub covariance: Vec<Vec<f64>>,
}

impl LawSection {
    fn build(&self, name: &str) -> Result<GaussianLaw, Error> {
        let rows: Vec<&[f64]> = self.covariance.iter().map(Vec::as_slice).collect();
        GaussianLaw::from_slices(&self.mean, &rows)
            .map_err(|e| Error::Config(format!("problem.{name}: {e}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProblemSection {
    pub initial: LawSection,
    pub target: LawSection,
    pub horizon: f64,
}

impl Default for ProblemSection {
    fn default() -> Self {
        Self {
            initial: LawSection {
                mean: vec![-2.0, 2.0],
                covariance: vec![vec![1.0, 0.2], vec![0.2, 0.5]],
            },
            target: LawSection {
                mean: vec![-8.0, 4.0],
                covariance: vec![vec![0.1, 0.0], vec![0.0, 0.04]],
            },
            horizon: 1.0,
        }
    }
}

impl ProblemSection {
    pub fn build(&self) -> Result<SteeringProblem, Error> {
        SteeringProblem::new(
            self.initial.build("initial")?,
            self.target.build("target")?,
            self.horizon,
        )
        .map_err(|e| Error::Config(format!("problem: {e}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimSection {
    pub controller: ControllerKind,
    /// `T_d`.
    pub steps: usize,
    /// `N`. Zero with `ideal-affine` reports the Gaussian flow instead of particles.
    pub particles: usize,
    pub seed: u64,
    pub record_every: usize,
    pub moment_matched_init: bool,
    pub flow_steps: usize,
    /// Record SW₂² to the target at every snapshot.
    pub track_sw2: bool,
    /// `T_d` of the iterative controller in `compare`.
    pub compare_steps: usize,
}

impl Default for SimSection {
    fn default() -> Self {
        Self {
            controller: ControllerKind::IterativeSliced,
            steps: 1000,
            particles: 5000,
            seed: 0,
            record_every: 100,
            moment_matched_init: false,
            flow_steps: 4000,
            track_sw2: false,
            compare_steps: 100_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DirsSection {
    pub count: usize,
    pub scheme: Scheme,
}

impl Default for DirsSection {
    fn default() -> Self {
        Self {
            count: 512,
            scheme: Scheme::DeterministicAngular,
        }
    }
}

impl DirsSection {
    fn spec(&self) -> DirectionSpec {
        DirectionSpec {
            count: self.count,
            scheme: self.scheme,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputsSection {
    pub dir: PathBuf,
    /// Write every particle of every snapshot.
    pub snapshots: bool,
}

impl Default for OutputsSection {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            snapshots: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CheckSection {
    pub seed: u64,
    pub flow_steps: usize,
    pub epsilon: f64,
    pub energy_tolerance: f64,
    pub weighted_energy_tolerance: f64,
    pub derivative_times: Vec<f64>,
    pub fd_step: f64,
    pub fixed_point_time: f64,
    pub property_pairs: usize,
    pub oracle_angles: usize,
    pub oracle_grid: usize,
}

impl Default for CheckSection {
    fn default() -> Self {
        Self {
            seed: 0,
            flow_steps: 4000,
            epsilon: 1e-6,
            energy_tolerance: 0.005,
            weighted_energy_tolerance: 1e-4,
            derivative_times: vec![0.1, 0.3, 0.5, 0.7],
            fd_step: 1e-5,
            fixed_point_time: 0.0,
            property_pairs: 20,
            oracle_angles: 4096,
            oracle_grid: 100_000,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub problem: ProblemSection,
    pub sim: SimSection,
    pub dirs: DirsSection,
    pub outputs: OutputsSection,
    pub check: CheckSection,
}

impl Config {
    pub fn from_json(text: &str) -> Result<Self, Error> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, Error> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    fn sim_config(&self, controller: ControllerKind, steps: usize) -> SimConfig {
        let s = &self.sim;
        SimConfig {
            horizon: self.problem.horizon,
            steps,
            particles: s.particles,
            seed: s.seed,
            controller,
            dirs: Some(self.dirs.spec()),
            record_every: s.record_every,
            moment_matched_init: s.moment_matched_init,
            flow_steps: s.flow_steps,
            track_sw2: s.track_sw2.then_some(Sw2Tracking {
                dirs: self.dirs.spec(),
                quantile_grid: s.particles.max(1024),
            }),
        }
    }
}

/// Record of one command invocation, written after every other output.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub seed: u64,
    pub wall_time_seconds: f64,
    pub config: Config,
    pub outputs: Vec<PathBuf>,
    pub summary: serde_json::Value,
}

fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::DimensionMismatch { .. } => EXIT_CONFIG,
        _ => EXIT_NUMERIC,
    }
}

/// Parses `args` (program name first) and runs the command; returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let (name, common) = match &cli.command {
        Command::Steer(a) => ("steer", a),
        Command::Compare(a) => ("compare", a),
        Command::Check(a) => ("check", a),
    };
    let result = prepare(common).and_then(|(config, pool)| {
        eprintln!("seed: {}", config.sim.seed);
        let started = Instant::now();
        let work = || match name {
            "steer" => cmd_steer(&config).map(|o| (o, EXIT_OK)),
            "compare" => cmd_compare(&config).map(|o| (o, EXIT_OK)),
            _ => cmd_check(&config),
        };
        let ((outputs, summary), code) = match pool {
            Some(pool) => pool.install(work),
            None => work(),
        }?;
        let manifest = RunManifest {
            command: name.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            seed: config.sim.seed,
            wall_time_seconds: started.elapsed().as_secs_f64(),
            config: config.clone(),
            outputs,
            summary,
        };
        write_file(
            &config.outputs.dir.join("manifest.json"),
            &serde_json::to_string_pretty(&manifest).expect("manifest serializes"),
        )?;
        Ok(code)
    });
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn prepare(args: &CommonArgs) -> Result<(Config, Option<rayon::ThreadPool>), Error> {
    let mut config = match &args.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    if let Some(seed) = args.seed {
        config.sim.seed = seed;
        config.check.seed = seed;
    }
    if let Some(out) = &args.out {
        config.outputs.dir = out.clone();
    }
    let pool = match args.threads {
        Some(0) => return Err(Error::Config("--threads must be at least 1".into())),
        Some(k) => Some(
            rayon::ThreadPoolBuilder::new()
                .num_threads(k)
                .build()
                .map_err(|e| Error::Config(format!("cannot start {k} threads: {e}")))?,
        ),
        None => None,
    };
    fs::create_dir_all(&config.outputs.dir).map_err(|e| {
        Error::Config(format!(
            "cannot create output directory {}: {e}",
            config.outputs.dir.display()
        ))
    })?;
    Ok((config, pool))
}

fn write_file(path: &Path, contents: &str) -> Result<(), Error> {
    fs::write(path, contents)
        .map_err(|e| Error::Config(format!("cannot write {}: {e}", path.display())))
}

fn moments_header(n: usize, leading: &str) -> String {
    let mut h = String::from(leading);
    h.push('t');
    for i in 1..=n {
        let _ = write!(h, ",m_{i}");
    }
    for i in 1..=n {
        for j in 1..=n {
            let _ = write!(h, ",Sigma_{i}{j}");
        }
    }
    h.push('\n');
    h
}

fn moments_row(out: &mut String, leading: &str, t: f64, m: &DVector<f64>, s: &DMatrix<f64>) {
    out.push_str(leading);
    let _ = write!(out, "{t}");
    for v in m.iter() {
        let _ = write!(out, ",{v}");
    }
    for i in 0..s.nrows() {
        for j in 0..s.ncols() {
            let _ = write!(out, ",{}", s[(i, j)]);
        }
    }
    out.push('\n');
}

fn snapshots_csv(result: &SimResult, n: usize) -> String {
    let mut out = String::from("t,particle_id");
    for i in 1..=n {
        let _ = write!(out, ",x_{i}");
    }
    out.push('\n');
    for snap in &result.snapshots {
        for (id, row) in snap.points().row_iter().enumerate() {
            let _ = write!(out, "{},{id}", snap.time());
            for v in row.iter() {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
    }
    out
}

/// `steer`: one controller, one ensemble.
pub fn cmd_steer(config: &Config) -> Result<(Vec<PathBuf>, serde_json::Value), Error> {
    let problem = config.problem.build()?;
    let n = problem.dim();
    let dir = &config.outputs.dir;
    let mut outputs = Vec::new();
    let mut moments = moments_header(n, "");

    if config.sim.particles == 0 {
        if config.sim.controller != ControllerKind::IdealAffine {
            return Err(Error::Config(
                "sim.particles = 0 is only allowed for ideal-affine".into(),
            ));
        }
        let dirs = config.dirs.spec().build(n)?;
        let flow = integrate_covariance(
            &problem,
            &dirs,
            config.sim.flow_steps,
            1e-6 * problem.horizon(),
        )?;
        let stride = (config.sim.flow_steps / 100).max(1);
        for (i, &t) in flow.times().iter().enumerate() {
            if i % stride == 0 || i + 1 == flow.len() {
                moments_row(
                    &mut moments,
                    "",
                    t,
                    &flow.means()[i],
                    &flow.covariances()[i],
                );
            }
        }
        let terminal = flow.terminal();
        moments_row(
            &mut moments,
            "",
            problem.horizon(),
            terminal.mean(),
            terminal.covariance(),
        );
        let energy = crate::gaussian::flow_energy(&flow, &problem, &dirs);
        let path = dir.join("moments.csv");
        write_file(&path, &moments)?;
        outputs.push(path);
        let path = dir.join("energy.json");
        let summary = serde_json::json!({
            "controller": "ideal-affine",
            "source": "gaussian-flow",
            "energy": energy.energy,
            "weighted_energy": energy.weighted_energy,
        });
        write_file(
            &path,
            &serde_json::to_string_pretty(&summary).expect("json"),
        )?;
        outputs.push(path);
        return Ok((outputs, summary));
    }

    let sim = config.sim_config(config.sim.controller, config.sim.steps);
    let result = run(&sim, &problem)?;
    for snap in &result.snapshots {
        moments_row(
            &mut moments,
            "",
            snap.time(),
            &snap.mean(),
            &snap.covariance(),
        );
    }
    if config.outputs.snapshots {
        let path = dir.join("snapshots.csv");
        write_file(&path, &snapshots_csv(&result, n))?;
        outputs.push(path);
    }
    let path = dir.join("moments.csv");
    write_file(&path, &moments)?;
    outputs.push(path);

    let deviation = chord_deviation(&result.snapshots)
        .into_iter()
        .fold(0.0, f64::max);
    let mut summary = serde_json::json!({
        "controller": sim.controller.name(),
        "energy": result.energy,
        "weighted_energy": result.weighted_energy,
        "max_chord_deviation": deviation,
        "straight_paths": deviation <= 1e-9,
    });
    if let Some(series) = &result.sw2_series {
        summary["sw2_series"] = serde_json::json!(series);
    }
    let path = dir.join("energy.json");
    write_file(
        &path,
        &serde_json::to_string_pretty(&summary).expect("json"),
    )?;
    outputs.push(path);
    Ok((outputs, summary))
}

/// Vertices `m + 3 Σ^{1/2} (cos φ_k, sin φ_k)`, `φ_k = 2πk/64`.
pub fn ellipse_3sigma(mean: &DVector<f64>, sigma: &DMatrix<f64>) -> Result<Vec<[f64; 2]>, Error> {
    if mean.len() != 2 {
        return Err(Error::Config(format!(
            "ellipse output needs n = 2, got n = {}",
            mean.len()
        )));
    }
    let root = sym_sqrt(sigma)?;
    Ok((0..64)
        .map(|k| {
            let phi = 2.0 * std::f64::consts::PI * k as f64 / 64.0;
            let v = mean + &root * DVector::from_column_slice(&[phi.cos(), phi.sin()]) * 3.0;
            [v[0], v[1]]
        })
        .collect())
}

/// `compare`: covariance evolution of the iterative controller (particles),
/// the ideal controller (Gaussian flow) and the minimum-energy controller
/// (exact affine pushforward), sampled at the iterative run's snapshots.
pub fn cmd_compare(config: &Config) -> Result<(Vec<PathBuf>, serde_json::Value), Error> {
    let problem = config.problem.build()?;
    let n = problem.dim();
    if n != 2 {
        return Err(Error::Config(format!(
            "compare writes planar ellipses and needs n = 2, got n = {n}"
        )));
    }
    let horizon = problem.horizon();
    let sim = config.sim_config(ControllerKind::IterativeSliced, config.sim.compare_steps);
    let record_every = (config.sim.compare_steps / 10).max(1);
    let sim = SimConfig {
        record_every,
        ..sim
    };
    let iterative = run(&sim, &problem)?;

    let dirs = config.dirs.spec().build(n)?;
    let flow = integrate_covariance(&problem, &dirs, config.sim.flow_steps, 1e-6 * horizon)?;
    let brenier = brenier_map_gaussian(&problem)?;
    let ideal_at = |t: f64| -> Result<(DVector<f64>, DMatrix<f64>), Error> {
        if t >= flow.end_time() {
            let law = flow.terminal();
            return Ok((law.mean().clone(), law.covariance().clone()));
        }
        Ok((mean_trajectory(&problem, t)?, flow.covariance_at(t)?))
    };
    let min_energy_at = |t: f64| -> (DVector<f64>, DMatrix<f64>) {
        let a = t / horizon;
        let b = DMatrix::identity(n, n) * (1.0 - a) + &brenier.matrix * a;
        let m = &b * problem.initial().mean() + &brenier.offset * a;
        let s = &b * problem.initial().covariance() * b.transpose();
        (m, (&s + s.transpose()) * 0.5)
    };

    let mut moments = moments_header(n, "controller,");
    let mut ellipses = String::from("controller,t,vertex_index,x_1,x_2\n");
    let mut max_gap: f64 = 0.0;
    let mut terminal_min_energy_gap = f64::NAN;
    for snap in &iterative.snapshots {
        let t = snap.time();
        let ideal = ideal_at(t)?;
        let series = [
            ("iterative-sliced", (snap.mean(), snap.covariance())),
            ("ideal-affine", ideal.clone()),
            ("min-energy", min_energy_at(t)),
        ];
        max_gap = max_gap.max((&series[0].1 .1 - &ideal.1).norm());
        if t == horizon {
            terminal_min_energy_gap = (&series[2].1 .1 - problem.target().covariance()).norm();
        }
        for (name, (m, s)) in &series {
            moments_row(&mut moments, &format!("{name},"), t, m, s);
            for (k, v) in ellipse_3sigma(m, s)?.iter().enumerate() {
                let _ = writeln!(ellipses, "{name},{t},{k},{},{}", v[0], v[1]);
            }
        }
    }
    let dir = &config.outputs.dir;
    let moments_path = dir.join("compare_moments.csv");
    let ellipse_path = dir.join("ellipses.csv");
    write_file(&moments_path, &moments)?;
    write_file(&ellipse_path, &ellipses)?;
    let summary = serde_json::json!({
        "iterative_steps": config.sim.compare_steps,
        "max_iterative_vs_ideal_covariance_gap": max_gap,
        "terminal_min_energy_covariance_gap": terminal_min_energy_gap,
    });
    Ok((vec![moments_path, ellipse_path], summary))
}

/// Runs every certification check on the configured problem.
pub fn run_checks(config: &Config) -> Result<Vec<CheckReport>, Error> {
    let problem = config.problem.build()?;
    let c = &config.check;
    let n = problem.dim();
    let dirs = config.dirs.spec().build(n)?;
    let horizon = problem.horizon();
    let mut reports = Vec::new();

    let flow = integrate_covariance(&problem, &dirs, c.flow_steps, c.epsilon * horizon)?;
    let times: Vec<f64> = c.derivative_times.iter().map(|t| t * horizon).collect();
    reports.extend(check_sw2_derivative(
        &problem,
        &flow,
        &dirs,
        &times,
        c.fd_step * horizon,
    )?);
    reports.extend(check_convergence(
        &problem,
        &dirs,
        c.flow_steps,
        c.epsilon * horizon,
    )?);
    reports.push(check_energy_identity(
        &problem,
        &dirs,
        c.flow_steps,
        c.energy_tolerance,
    )?);
    reports.push(check_weighted_energy_identity(
        &problem,
        &dirs,
        c.flow_steps,
        c.weighted_energy_tolerance,
    )?);
    reports.extend(check_fixed_point(
        problem.target(),
        &dirs,
        c.fixed_point_time * horizon,
        horizon,
        c.seed,
    )?);
    if n == 2 {
        let oracle = BruteForceOracle::new(c.oracle_angles, c.oracle_grid)?;
        reports.extend(check_sliced_properties(
            &dirs,
            c.property_pairs,
            c.seed,
            Some(&oracle),
        )?);
    }
    Ok(reports)
}

/// `check`: exit 0 iff every report passes.
pub fn cmd_check(config: &Config) -> Result<((Vec<PathBuf>, serde_json::Value), i32), Error> {
    let reports = run_checks(config)?;
    for r in &reports {
        eprintln!(
            "{:<34} {:<12} measured={:e} expected={:e}",
            r.name,
            format!("{:?}", r.status).to_lowercase(),
            r.measured,
            r.expected
        );
    }
    let path = config.outputs.dir.join("report.json");
    write_file(
        &path,
        &serde_json::to_string_pretty(&reports).expect("reports serialize"),
    )?;
    let failed = reports.iter().filter(|r| !r.passed()).count();
    let summary = serde_json::json!({ "checks": reports.len(), "not_passed": failed });
    Ok((
        (vec![path], summary),
        if failed == 0 {
            EXIT_OK
        } else {
            EXIT_CHECK_FAILED
        },
    ))
}
