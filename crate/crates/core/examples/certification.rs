// Runs the numerical checks on the example problem and prints the reports.
//
// Run: cargo run --release --example certification

use sliced_steering::analysis::{
    check_convergence, check_energy_identity, check_fixed_point, check_sw2_derivative,
    check_weighted_energy_identity, CheckReport,
};
use sliced_steering::gaussian::{integrate_covariance, SteeringProblem};
use sliced_steering::sliced::{sample_directions, GaussianLaw, Scheme};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let problem = SteeringProblem::new(
        GaussianLaw::from_slices(&[-2.0, 2.0], &[&[1.0, 0.2], &[0.2, 0.5]])?,
        GaussianLaw::from_slices(&[-8.0, 4.0], &[&[0.1, 0.0], &[0.0, 0.04]])?,
        1.0,
    )?;
    let dirs = sample_directions(2, 512, Scheme::DeterministicAngular)?;
    let flow = integrate_covariance(&problem, &dirs, 1000, 1e-6)?;

    let mut reports: Vec<CheckReport> = Vec::new();
    reports.extend(check_sw2_derivative(
        &problem,
        &flow,
        &dirs,
        &[0.1, 0.5],
        1e-5,
    )?);
    reports.extend(check_convergence(&problem, &dirs, 1000, 1e-6)?);
    reports.push(check_energy_identity(&problem, &dirs, 1000, 0.005)?);
    reports.push(check_weighted_energy_identity(&problem, &dirs, 1000, 1e-4)?);
    reports.extend(check_fixed_point(problem.target(), &dirs, 0.0, 1.0, 0)?);

    for r in &reports {
        println!(
            "{:<30} {:<12?} {:>14.6e} {:>14.6e}",
            r.name, r.status, r.measured, r.expected
        );
    }
    println!("{}", serde_json::to_string(&reports[0])?);
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
