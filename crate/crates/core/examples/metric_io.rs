//! Writes a metric field in the JSON exchange format, reads it back and
//! evaluates the objective from both copies.

use lyapmetric::field::{read_metric_json, write_metric_json};
use lyapmetric::sampling::smooth_metric_field;
use lyapmetric::{evaluate_objective, Grid, MeasureWeights, TorusSystem};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> lyapmetric::Result<()> {
    let sys = TorusSystem::cat_map();
    let grid = Grid::for_system(&sys, 4)?;
    let w = MeasureWeights::lebesgue(&grid);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let g = smooth_metric_field(&mut rng, &grid, 0.5, 2);

    let text = write_metric_json(&g);
    println!("{}", text.lines().take(6).collect::<Vec<_>>().join("\n"));
    println!("  ...");
    let back = read_metric_json(&text)?.into_field(Some(&grid))?;
    let a = evaluate_objective(&sys, &g, &w, None)?;
    let b = evaluate_objective(&sys, &back, &w, None)?;
    println!("s before: {:?}", a.s_partial);
    println!("s after:  {:?}", b.s_partial);

    // a record whose determinants are not 1 is rejected
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let first = lines.iter().position(|l| l.trim_start().starts_with('[') && l.contains(',')).unwrap_or(0);
    lines[first] = "    [2.0, 0.0, 0.0, 2.0],".to_string();
    let bad = lines.join("\n");
    match read_metric_json(&bad).and_then(|r| r.into_field(Some(&grid))) {
        Ok(_) => println!("unexpectedly accepted"),
        Err(e) => println!("rejected: {e}"),
    }
    Ok(())
}
