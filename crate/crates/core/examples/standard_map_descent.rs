//! Descent on the Chirikov standard map, where no closed form is known.
//!
//! Compares the optimized `s_1` with the QR oracle and checks that `s_2`
//! stays at zero. Usage: `cargo run --release --example standard_map_descent [K] [n] [iters]`.

use std::time::Instant;

use lyapmetric::dynamics::invariant_weights;
use lyapmetric::field::flat_metric;
use lyapmetric::{descend, lyapunov_vector, Grid, MeasureMode, OptimizerConfig, OracleParams, TorusSystem};

fn main() -> lyapmetric::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let k: f64 = args.first().and_then(|s| s.parse().ok()).unwrap_or(1.5);
    let n: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(32);
    let iters: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(200);

    let sys = TorusSystem::standard_map(k)?;
    let grid = Grid::for_system(&sys, n)?;
    let weights = invariant_weights(&sys, &grid, MeasureMode::Lebesgue, 0)?;
    let oracle = lyapunov_vector(&sys, &weights, &OracleParams::default())?;
    println!("K = {k}, n = {n}, oracle lambda = {:?}", oracle.lambda.as_slice());

    let start = Instant::now();
    let config = OptimizerConfig { max_iters: iters, ..Default::default() };
    let out = descend(&sys, &flat_metric(&grid), &weights, &config, Some(&oracle))?;
    for r in out.trace.records.iter().step_by((out.trace.records.len() / 10).max(1)) {
        println!("iter {:4}  s_1 {:.6}  s_2 {:+.1e}  step {:.2e}  |grad| {:.2e}", r.iter, r.s_partial[0], r.s_partial[1], r.step, r.grad_norm);
    }
    let s1 = out.final_report.s_partial[0];
    let l1 = oracle.lambda[0];
    println!(
        "{:?} after {} iterations in {:.1?}: s_1 = {s1:.6}, lambda_1 = {l1:.6}, relative gap {:.1}%",
        out.status,
        out.iterations,
        start.elapsed(),
        100.0 * (s1 - l1) / l1
    );
    Ok(())
}
