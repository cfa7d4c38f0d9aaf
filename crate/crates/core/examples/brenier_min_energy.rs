// The Gaussian Brenier map and the straight-line minimum-energy controller.
//
// Run: cargo run --example brenier_min_energy

use nalgebra::DVector;
use sliced_steering::gaussian::{brenier_map_gaussian, MinEnergyController, SteeringProblem};
use sliced_steering::sliced::GaussianLaw;

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let problem = SteeringProblem::new(
        GaussianLaw::from_slices(&[-2.0, 2.0], &[&[1.0, 0.2], &[0.2, 0.5]])?,
        GaussianLaw::from_slices(&[-8.0, 4.0], &[&[0.1, 0.0], &[0.0, 0.04]])?,
        1.0,
    )?;
    let map = brenier_map_gaussian(&problem)?;
    println!("A = {:.5}", map.matrix);
    println!("b = {:?}", map.offset.as_slice());
    let pushed = &map.matrix * problem.initial().covariance() * &map.matrix;
    println!("A S0 A = {:.6}", pushed);

    let ctl = MinEnergyController::new(&problem)?;
    let mut x = DVector::from_column_slice(&[-1.0, 2.5]);
    let steps = 10;
    let h = problem.horizon() / steps as f64;
    for k in 0..steps {
        let v = ctl.velocity(k as f64 * h, &x)?;
        println!(
            "t = {:.1}  x = ({:8.4}, {:8.4})  v = ({:8.4}, {:8.4})",
            k as f64 * h,
            x[0],
            x[1],
            v[0],
            v[1]
        );
        x += v * h;
    }
    println!(
        "t = 1.0  x = ({:8.4}, {:8.4})  T(x0) = {:?}",
        x[0],
        x[1],
        map.apply(&DVector::from_column_slice(&[-1.0, 2.5]))
            .as_slice()
    );
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
