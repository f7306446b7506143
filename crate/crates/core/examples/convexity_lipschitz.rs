//! Geodesic convexity and the L2 Lipschitz bound of the objective on random fields.

use lyapmetric::objective::{convexity_check, lipschitz_check, scaling_invariance_check};
use lyapmetric::sampling::random_metric_field;
use lyapmetric::{Grid, MeasureWeights, TorusSystem};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> lyapmetric::Result<()> {
    let sys = TorusSystem::toral_automorphism(vec![vec![2, 3], vec![1, 2]])?;
    let grid = Grid::for_system(&sys, 8)?;
    let w = MeasureWeights::lebesgue(&grid);
    let mut rng = ChaCha8Rng::seed_from_u64(7);

    let mut worst_convexity = f64::NEG_INFINITY;
    let mut worst_ratio = 0.0f64;
    for _ in 0..20 {
        let a = random_metric_field(&mut rng, &grid, 1.0);
        let b = random_metric_field(&mut rng, &grid, 1.0);
        for t in [0.1, 0.3, 0.5, 0.7, 0.9] {
            let rep = convexity_check(&sys, &a, &b, &w, t)?;
            worst_convexity = worst_convexity.max(rep.max_pointwise_excess);
        }
        for k in 1..=2 {
            let (lhs, rhs) = lipschitz_check(&sys, &a, &b, &w, k)?;
            worst_ratio = worst_ratio.max(lhs / rhs);
        }
    }
    println!("largest convexity excess (should be <= 1e-8): {worst_convexity:.3e}");
    println!("largest |Δs_k| / (√k d_L2) (should be <= 1): {worst_ratio:.4}");

    let g = random_metric_field(&mut rng, &grid, 1.0);
    let gamma: Vec<f64> = (0..grid.len()).map(|_| rng.random_range(0.5..2.0)).collect();
    println!("change under conformal rescaling: {:.3e}", scaling_invariance_check(&sys, &g, &w, &gamma)?);
    Ok(())
}
