//! Bochi's averaged metrics `bar(g, f*g, ..., f^{N-1}*g)` on the automorphism
//! `[[2,3],[1,2]]`: the top exponent gap shrinks as `N` grows and the pointwise
//! inequality against `(1/N) σ(df^N)` holds at every cell.

use lyapmetric::verify::{bochi_csv, bochi_table};
use lyapmetric::{OracleParams, TorusSystem};

fn main() -> lyapmetric::Result<()> {
    let sys = TorusSystem::toral_automorphism(vec![vec![2, 3], vec![1, 2]])?;
    let rows = bochi_table(&sys, 16, &[1, 2, 4, 8, 16], &OracleParams::default())?;
    print!("{}", bochi_csv(&rows));
    println!("lambda_1 = log(2 + sqrt 3) = {:.16}", (2.0 + 3f64.sqrt()).ln());
    Ok(())
}
