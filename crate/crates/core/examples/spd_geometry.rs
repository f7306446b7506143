//! Trace-metric geometry on 2x2 SPD matrices: distances, geodesics,
//! vectorial distance, barycenters and Horn's inequality.

use lyapmetric::spd::{
    barycenter, geodesic_between, gl_action, log_singular_values, majorize_leq, spd_distance, vectorial_distance,
};
use lyapmetric::{InvertibleMatrix, SpdMatrix};
use nalgebra::DMatrix;

fn main() -> lyapmetric::Result<()> {
    let p = SpdMatrix::from_diagonal(&[4.0, 0.25])?;
    let q = SpdMatrix::new(DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]))?;

    println!("d(p, q)         = {:.12}", spd_distance(&p, &q)?);
    println!("vector d(p, q)  = {:?}", vectorial_distance(&p, &q)?.as_slice());
    let mid = geodesic_between(&p, &q, 0.5)?;
    println!("midpoint        = {:.6}", mid.to_matrix());
    println!("d(p, mid)       = {:.12}  (half of d(p, q))", spd_distance(&p, &mid)?);

    // the GL action is an isometry of the vectorial distance
    let g = InvertibleMatrix::new(DMatrix::from_row_slice(2, 2, &[1.0, 3.0, -2.0, 0.5]))?;
    let moved = vectorial_distance(&gl_action(&g, &p)?, &gl_action(&g, &q)?)?;
    println!("vector d(gp, gq) = {:?}", moved.as_slice());

    let r = SpdMatrix::from_diagonal(&[1.0, 9.0])?;
    let bar = barycenter(&[p.clone(), q.clone(), r])?;
    println!("barycenter det  = {:.12}", bar.det());

    let a = InvertibleMatrix::new(DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 1.0]))?;
    let b = InvertibleMatrix::new(DMatrix::from_row_slice(2, 2, &[1.0, 4.0, 0.0, 1.0]))?;
    let lhs = log_singular_values(&a.mul(&b)?)?;
    let rhs = log_singular_values(&a)?.add(&log_singular_values(&b)?)?;
    println!("Horn: {:?} majorized by {:?}: {}", lhs.as_slice(), rhs.as_slice(), majorize_leq(&lhs, &rhs, false)?);
    Ok(())
}
