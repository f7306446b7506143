//! Random test objects: SPD matrices, invertible matrices, fields.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::dynamics::Grid;
use crate::field::{MetricField, TangentField};
use crate::spd::{InvertibleMatrix, SpdMatrix, SymMatrix};

fn gaussian(rng: &mut impl Rng, d: usize) -> DMatrix<f64> {
    DMatrix::from_fn(d, d, |_, _| rng.sample(StandardNormal))
}

/// Symmetric matrix with standard Gaussian entries (GOE-like).
pub fn random_sym(rng: &mut impl Rng, d: usize) -> SymMatrix {
    SymMatrix::symmetric_part(&gaussian(rng, d))
}

/// `exp(scale · S)` for a Gaussian symmetric `S`.
pub fn random_spd(rng: &mut impl Rng, d: usize, scale: f64) -> SpdMatrix {
    SpdMatrix::exp(&(&random_sym(rng, d) * scale))
}

/// Random SPD matrix with determinant exactly 1.
pub fn random_unit_det_spd(rng: &mut impl Rng, d: usize, scale: f64) -> SpdMatrix {
    random_spd(rng, d, scale).normalize_det()
}

/// Gaussian matrix conditioned to have `|det| ≥ 1e-3`.
pub fn random_invertible(rng: &mut impl Rng, d: usize) -> InvertibleMatrix {
    loop {
        let m = gaussian(rng, d);
        if m.determinant().abs() >= 1e-3 {
            return InvertibleMatrix::new(m).expect("determinant bounded away from zero");
        }
    }
}

/// Random element of `M_ω` on `grid`, with per-cell log-spread `scale`.
///
/// Values are drawn independently per cell, so the field is rough; that is
/// the hard case for every inequality the crate checks.
pub fn random_metric_field(rng: &mut impl Rng, grid: &Grid, scale: f64) -> MetricField {
    let values = (0..grid.len()).map(|_| random_unit_det_spd(rng, grid.dim(), scale)).collect();
    MetricField::from_values(*grid, values).expect("unit determinant by construction")
}

/// Smooth random element of `M_ω`: a sum of a few low Fourier modes in the log domain.
pub fn smooth_metric_field(rng: &mut impl Rng, grid: &Grid, scale: f64, modes: usize) -> MetricField {
    let d = grid.dim();
    let terms: Vec<(Vec<i32>, f64, SymMatrix)> = (0..modes)
        .map(|_| {
            let k: Vec<i32> = (0..d).map(|_| rng.random_range(-2..=2)).collect();
            let phase = rng.random::<f64>();
            let s = random_sym(rng, d);
            let tr = s.trace() / d as f64;
            let s = &s - &(&SymMatrix::identity(d) * tr);
            (k, phase, s)
        })
        .collect();
    let values = (0..grid.len())
        .map(|c| {
            let x = grid.sample_point(c);
            let mut acc = SymMatrix::zeros(d);
            for (k, phase, s) in &terms {
                let arg: f64 = k.iter().zip(x.coords()).map(|(ki, xi)| *ki as f64 * xi).sum::<f64>() + phase;
                acc = &acc + &(s * (scale * (std::f64::consts::TAU * arg).cos()));
            }
            SpdMatrix::exp(&acc).normalize_det()
        })
        .collect();
    MetricField::from_values(*grid, values).expect("unit determinant by construction")
}

/// Random tangent field at `g` (trace-free in whitened coordinates).
pub fn random_tangent_field(rng: &mut impl Rng, g: &MetricField) -> TangentField {
    let d = g.grid().dim();
    let whitened: Vec<SymMatrix> = (0..g.grid().len())
        .map(|_| {
            let s = random_sym(rng, d);
            let tr = s.trace() / d as f64;
            &s - &(&SymMatrix::identity(d) * tr)
        })
        .collect();
    TangentField::from_whitened(g, &whitened).expect("trace-free by construction")
}
