// Mean and covariance under the ideal sliced controller.
//
// The covariance equation is integrated in tau = -log(T - t); the mean has
// a closed form. Also prints both control-energy functionals.
//
// Run: cargo run --example gaussian_flow

use sliced_steering::gaussian::{flow_energy, integrate_covariance, SteeringProblem};
use sliced_steering::sliced::{sample_directions, sw2, GaussianLaw, Scheme};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let problem = SteeringProblem::new(
        GaussianLaw::from_slices(&[-2.0, 2.0], &[&[1.0, 0.2], &[0.2, 0.5]])?,
        GaussianLaw::from_slices(&[-8.0, 4.0], &[&[0.1, 0.0], &[0.0, 0.04]])?,
        1.0,
    )?;
    let dirs = sample_directions(2, 512, Scheme::DeterministicAngular)?;
    let flow = integrate_covariance(&problem, &dirs, 2000, 1e-6)?;

    println!(
        "{:>10} {:>9} {:>9} {:>9} {:>9} {:>9}",
        "t", "m1", "m2", "S11", "S12", "S22"
    );
    for t in [0.0, 0.25, 0.5, 0.75, 0.9, 0.99, 0.999] {
        let law = flow.law_at(&problem, t)?;
        let (m, s) = (law.mean(), law.covariance());
        println!(
            "{t:>10} {:>9.4} {:>9.4} {:>9.5} {:>9.5} {:>9.5}",
            m[0],
            m[1],
            s[(0, 0)],
            s[(0, 1)],
            s[(1, 1)]
        );
    }

    let energy = flow_energy(&flow, &problem, &dirs);
    let half = 0.5 * sw2(problem.initial(), problem.target(), &dirs, 1)?;
    println!(
        "E int |u|^2 dt        = {:.4}  (up to T - 1e-6)",
        energy.energy
    );
    println!("E int (T-t)|u|^2 dt   = {:.6}", energy.weighted_energy);
    println!("SW2^2(rho_0, rho_f)/2 = {half:.6}");
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
