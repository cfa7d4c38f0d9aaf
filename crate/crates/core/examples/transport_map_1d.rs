// One-dimensional optimal transport maps.
//
// Gaussian to Gaussian is affine; anything involving samples goes through
// the quantile functions, which on equal sample counts is sort matching.
//
// Run: cargo run --example transport_map_1d

use sliced_steering::sliced::{ot_map_1d, w2_1d, Dist1D, Map1D};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let source = Dist1D::gaussian(-2.0, 1.0)?;
    let target = Dist1D::gaussian(-8.0, 0.1)?;
    if let Map1D::Affine { slope, intercept } = ot_map_1d(&source, &target) {
        println!("gaussian map: s -> {slope:.5} s + {intercept:.5}");
    }
    println!("W2^2 = {:.5}", w2_1d(&source, &target, 1)?);

    let samples = Dist1D::empirical(vec![0.3, -1.2, 2.5, 0.9, -0.4])?;
    let goal = Dist1D::empirical(vec![10.0, 20.0, 30.0, 40.0, 50.0])?;
    let map = ot_map_1d(&samples, &goal);
    for s in [-1.2, -0.4, 0.3, 0.9, 2.5, 9.0] {
        println!("  {s:>5} -> {}", map.eval(s));
    }

    let to_gaussian = ot_map_1d(&samples, &Dist1D::gaussian(0.0, 1.0)?);
    println!("samples to N(0,1):");
    for s in [-1.2, 0.0, 0.3, 2.5] {
        println!("  {s:>5} -> {:.4}", to_gaussian.eval(s));
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
