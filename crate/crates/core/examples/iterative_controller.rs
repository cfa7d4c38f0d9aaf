// Particles driven by the iterative sliced controller: one random
// direction per step, 1D transport along it, gain 1/(T - t_k).
//
// Run: cargo run --release --example iterative_controller

use sliced_steering::gaussian::SteeringProblem;
use sliced_steering::sim::{run, ControllerKind, DirectionSpec, SimConfig, Sw2Tracking};
use sliced_steering::sliced::{GaussianLaw, Scheme};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let problem = SteeringProblem::new(
        GaussianLaw::from_slices(&[-2.0, 2.0], &[&[1.0, 0.2], &[0.2, 0.5]])?,
        GaussianLaw::from_slices(&[-8.0, 4.0], &[&[0.1, 0.0], &[0.0, 0.04]])?,
        1.0,
    )?;
    let mut config = SimConfig::new(1.0, 500, 2000, ControllerKind::IterativeSliced);
    config.seed = 42;
    config.record_every = 50;
    config.track_sw2 = Some(Sw2Tracking {
        dirs: DirectionSpec {
            count: 256,
            scheme: Scheme::DeterministicAngular,
        },
        quantile_grid: 2000,
    });
    let result = run(&config, &problem)?;

    for (t, d) in result.sw2_series.as_deref().unwrap_or_default() {
        println!("t = {t:.2}  SW2 to target = {:.4}", d.sqrt());
    }
    let end = result.terminal();
    println!("terminal mean       {:?}", end.mean().as_slice());
    println!("terminal covariance {:?}", end.covariance().as_slice());
    println!("energy {:.3}", result.energy);
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
