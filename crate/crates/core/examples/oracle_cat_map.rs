//! Lyapunov vectors from the QR method for the shipped systems.

use std::time::Instant;

use lyapmetric::oracle::{det_growth_check, doubling_delta};
use lyapmetric::{lyapunov_vector, Grid, MeasureWeights, OracleParams, TorusSystem};
use lyapmetric::dynamics::Perturbation;

fn main() -> lyapmetric::Result<()> {
    let systems = vec![
        TorusSystem::cat_map(),
        TorusSystem::toral_automorphism(vec![vec![2, 3], vec![1, 2]])?,
        TorusSystem::standard_map(1.5)?,
        TorusSystem::perturbed_automorphism(vec![vec![2, 1], vec![1, 1]], 0.1, Perturbation::SineShear)?,
    ];
    let params = OracleParams::default();
    for sys in &systems {
        let weights = MeasureWeights::lebesgue(&Grid::for_system(sys, 16)?);
        let start = Instant::now();
        let est = lyapunov_vector(sys, &weights, &params)?;
        println!(
            "{:<55} lambda = {:?}  spread {:.2e}  ({:.2?})",
            sys.description(),
            est.lambda.as_slice(),
            est.per_point_spread,
            start.elapsed()
        );
        println!("{:<55} mean log|det| rate = {:.2e}", "", det_growth_check(sys, &weights, 100)?);
    }
    let cat = TorusSystem::cat_map();
    let weights = MeasureWeights::lebesgue(&Grid::for_system(&cat, 16)?);
    let (_, delta) = doubling_delta(&cat, &weights, &OracleParams { samples: 8, ..params })?;
    println!("cat map: change when n_steps doubles = {delta:.2e}");
    println!("exact cat map exponent = {:.16}", ((3.0 + 5f64.sqrt()) / 2.0).ln());
    Ok(())
}
