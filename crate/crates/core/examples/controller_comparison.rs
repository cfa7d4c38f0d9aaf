// All five controllers on the same initial ensemble.
//
// Run: cargo run --release --example controller_comparison

use sliced_steering::gaussian::SteeringProblem;
use sliced_steering::sim::{chord_deviation, run, ControllerKind, DirectionSpec, SimConfig};
use sliced_steering::sliced::{sample_directions, sw2, GaussianLaw, Scheme};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let problem = SteeringProblem::new(
        GaussianLaw::from_slices(&[-2.0, 2.0], &[&[1.0, 0.2], &[0.2, 0.5]])?,
        GaussianLaw::from_slices(&[-8.0, 4.0], &[&[0.1, 0.0], &[0.0, 0.04]])?,
        1.0,
    )?;
    let dirs = sample_directions(2, 256, Scheme::DeterministicAngular)?;
    println!(
        "{:<18} {:>10} {:>10} {:>12} {:>10}",
        "controller", "SW2 end", "energy", "weighted", "bend"
    );
    for kind in [
        ControllerKind::IterativeSliced,
        ControllerKind::RecedingHorizon,
        ControllerKind::OrthogonalBasis,
        ControllerKind::IdealAffine,
        ControllerKind::MinEnergy,
    ] {
        let mut config = SimConfig::new(1.0, 200, 1000, kind);
        config.seed = 7;
        config.record_every = 10;
        config.dirs = Some(DirectionSpec {
            count: 256,
            scheme: Scheme::DeterministicAngular,
        });
        let result = run(&config, &problem)?;
        let end = sw2(result.terminal(), problem.target(), &dirs, 1000)?.sqrt();
        let bend = chord_deviation(&result.snapshots)
            .into_iter()
            .fold(0.0, f64::max);
        println!(
            "{:<18} {end:>10.4} {:>10.3} {:>12.4} {bend:>10.2e}",
            kind.name(),
            result.energy,
            result.weighted_energy
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
