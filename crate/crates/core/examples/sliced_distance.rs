// Sliced 2-Wasserstein distance between two planar Gaussians.
//
// Compares the deterministic angular rule, Monte Carlo directions and a
// brute-force quantile-grid evaluation.
//
// Run: cargo run --example sliced_distance

use sliced_steering::analysis::oracle_sw2_bruteforce;
use sliced_steering::sliced::{sample_directions, sw2, GaussianLaw, Scheme};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let initial = GaussianLaw::from_slices(&[-2.0, 2.0], &[&[1.0, 0.2], &[0.2, 0.5]])?;
    let target = GaussianLaw::from_slices(&[-8.0, 4.0], &[&[0.1, 0.0], &[0.0, 0.04]])?;

    for m in [4, 16, 64, 512] {
        let dirs = sample_directions(2, m, Scheme::DeterministicAngular)?;
        println!(
            "angular   M={m:<5} SW2^2 = {:.10}",
            sw2(&initial, &target, &dirs, 1)?
        );
    }
    for m in [100, 10_000] {
        let dirs = sample_directions(2, m, Scheme::MonteCarlo { seed: 1 })?;
        println!(
            "random    M={m:<5} SW2^2 = {:.10}",
            sw2(&initial, &target, &dirs, 1)?
        );
    }
    let brute = oracle_sw2_bruteforce(&initial, &target, 512, 20_000)?;
    println!("brute force (512 angles, 20000 quantiles) = {brute:.10}");
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
