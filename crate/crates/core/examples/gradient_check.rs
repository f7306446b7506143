//! Finite-difference check of the metric gradient, and the second-order
//! behavior of the central differences as the step doubles.

use lyapmetric::field::flat_metric;
use lyapmetric::optimizer::{gradient_check, log_log_slope, random_directions, verify_gradient, GRADIENT_SCALE};
use lyapmetric::sampling::smooth_metric_field;
use lyapmetric::{Grid, MeasureWeights, TorusSystem};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> lyapmetric::Result<()> {
    let sys = TorusSystem::toral_automorphism(vec![vec![2, 3], vec![1, 2]])?;
    let grid = Grid::for_system(&sys, 8)?;
    let w = MeasureWeights::lebesgue(&grid);
    let g = flat_metric(&grid);
    println!("gradient scale constant = {GRADIENT_SCALE}");
    println!("max relative error, 20 directions, delta 1e-5: {:.3e}", verify_gradient(&sys, &g, &w, 1, 20, 1e-5, 0)?);

    // away from the flat metric the third derivative is nonzero, so the mismatch scales as delta^2
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let g = smooth_metric_field(&mut rng, &grid, 0.5, 2);
    let deltas = [0.01, 0.02, 0.04, 0.08];
    let dirs = random_directions(&g, &w, 3, 2);
    for (i, row) in gradient_check(&sys, &g, &w, 1, &dirs, &deltas)?.iter().enumerate() {
        let mismatch: Vec<f64> = row.iter().map(|c| (c.finite_difference - c.predicted).abs()).collect();
        println!("direction {i}: predicted {:+.6e}, mismatch {:?}, slope {:.3}", row[0].predicted, mismatch, log_log_slope(&deltas, &mismatch));
    }

    let sm = TorusSystem::standard_map(1.5)?;
    let grid = Grid::for_system(&sm, 12)?;
    let w = MeasureWeights::lebesgue(&grid);
    let g = smooth_metric_field(&mut rng, &grid, 0.3, 2);
    println!("standard map (interpolated images): {:.3e}", verify_gradient(&sm, &g, &w, 1, 5, 1e-5, 3)?);
    Ok(())
}
