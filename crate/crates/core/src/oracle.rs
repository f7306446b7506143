//! Reference Lyapunov exponents from the discrete QR method.

use nalgebra::DMatrix;
use rand::distr::{weighted::WeightedIndex, Distribution};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{MeasureWeights, TorusMap, TorusPoint};
use crate::error::{Error, Result};
use crate::linalg;
use crate::spd::LogSingularVector;

/// Parameters of [`lyapunov_vector`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleParams {
    /// Steps averaged per orbit.
    pub n_steps: usize,
    /// Number of orbits.
    pub samples: usize,
    /// Steps discarded before averaging so the frame aligns with the Oseledets splitting.
    pub warmup: usize,
    pub seed: u64,
}

impl Default for OracleParams {
    fn default() -> Self {
        Self { n_steps: 10_000, samples: 64, warmup: 100, seed: 0 }
    }
}

/// Averaged Lyapunov vector with dispersion diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LyapunovEstimate {
    /// Nats per iteration, nonincreasing.
    pub lambda: LogSingularVector,
    pub n_steps: usize,
    /// Largest deviation of a single orbit's exponents from the average.
    pub per_point_spread: f64,
}

impl LyapunovEstimate {
    /// Number of exponents above `threshold`.
    pub fn positive_count(&self, threshold: f64) -> usize {
        self.lambda.as_slice().iter().filter(|&&l| l > threshold).count()
    }
}

/// Exponents of one orbit: `(1/n) Σ log|R_ii|` after `warmup` discarded steps,
/// starting from the orthonormal `frame`. Sorted nonincreasing.
pub fn orbit_exponents<M: TorusMap + ?Sized>(
    sys: &M,
    x0: &TorusPoint,
    frame: &DMatrix<f64>,
    n_steps: usize,
    warmup: usize,
) -> Vec<f64> {
    let d = sys.dim();
    let mut q = frame.clone();
    let mut x = x0.clone();
    let mut acc = vec![0.0; d];
    for step in 0..warmup + n_steps {
        let z = sys.jacobian_matrix(&x) * &q;
        let (qn, r) = linalg::qr(&z);
        if step >= warmup {
            for (i, a) in acc.iter_mut().enumerate() {
                *a += r[(i, i)].abs().ln();
            }
        }
        q = qn;
        x = sys.apply(&x);
    }
    let mut out: Vec<f64> = acc.iter().map(|a| a / n_steps as f64).collect();
    out.sort_by(|a, b| b.total_cmp(a));
    out
}

/// Random orthonormal frame from the QR factor of a Gaussian matrix.
pub fn random_frame(rng: &mut impl Rng, d: usize) -> DMatrix<f64> {
    let g = DMatrix::from_fn(d, d, |_, _| rng.sample(StandardNormal));
    linalg::qr(&g).0
}

/// Draws `samples` start points by cell weight, uniformly inside each cell, with a random frame each.
fn draw_starts(weights: &MeasureWeights, samples: usize, seed: u64) -> Result<Vec<(TorusPoint, DMatrix<f64>)>> {
    let grid = weights.grid();
    let dist = WeightedIndex::new(weights.weights())
        .map_err(|e| Error::InvalidArgument(format!("measure weights: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nf = grid.n() as f64;
    Ok((0..samples)
        .map(|_| {
            let cell = dist.sample(&mut rng);
            let idx = grid.multi_index(cell);
            let x = TorusPoint::new(idx.iter().map(|&i| (i as f64 + rng.random::<f64>()) / nf).collect());
            let frame = random_frame(&mut rng, grid.dim());
            (x, frame)
        })
        .collect())
}

/// `λ⃗` as the average of per-orbit QR exponents over `samples` seeded orbits.
///
/// Orbits run in parallel; the reduction follows sample order so the result
/// only depends on the parameters.
pub fn lyapunov_vector<M: TorusMap + ?Sized>(
    sys: &M,
    weights: &MeasureWeights,
    params: &OracleParams,
) -> Result<LyapunovEstimate> {
    if params.n_steps == 0 || params.samples == 0 {
        return Err(Error::InvalidArgument("n_steps and samples must be positive".into()));
    }
    if weights.grid().dim() != sys.dim() {
        return Err(Error::DimensionMismatch { expected: sys.dim(), found: weights.grid().dim() });
    }
    let starts = draw_starts(weights, params.samples, params.seed)?;
    let per_orbit: Vec<Vec<f64>> = starts
        .par_iter()
        .map(|(x, q)| orbit_exponents(sys, x, q, params.n_steps, params.warmup))
        .collect();
    let d = sys.dim();
    let mut mean = vec![0.0; d];
    for e in &per_orbit {
        for (m, v) in mean.iter_mut().zip(e) {
            *m += v;
        }
    }
    let count = per_orbit.len() as f64;
    mean.iter_mut().for_each(|m| *m /= count);
    let spread = per_orbit
        .iter()
        .flat_map(|e| e.iter().zip(&mean).map(|(a, b)| (a - b).abs()))
        .fold(0.0, f64::max);
    Ok(LyapunovEstimate { lambda: LogSingularVector::from_unsorted(mean), n_steps: params.n_steps, per_point_spread: spread })
}

/// `(1/n) Σ_cells w · log|det df^n_x|`, computed as a sum of per-step log-determinants.
pub fn det_growth_check<M: TorusMap + ?Sized>(sys: &M, weights: &MeasureWeights, n_steps: usize) -> Result<f64> {
    if n_steps == 0 {
        return Err(Error::InvalidArgument("n_steps must be positive".into()));
    }
    let grid = weights.grid();
    let rates: Vec<f64> = (0..grid.len())
        .into_par_iter()
        .map(|c| {
            if weights.weights()[c] == 0.0 {
                return 0.0;
            }
            let mut x = grid.sample_point(c);
            let mut acc = 0.0;
            for _ in 0..n_steps {
                acc += sys.jacobian_matrix(&x).determinant().abs().ln();
                x = sys.apply(&x);
            }
            acc / n_steps as f64
        })
        .collect();
    Ok(rates.iter().zip(weights.weights()).map(|(r, w)| r * w).sum())
}

/// Oracle estimates at `n_steps` and `2 n_steps`, reporting the componentwise change.
pub fn doubling_delta<M: TorusMap + ?Sized>(
    sys: &M,
    weights: &MeasureWeights,
    params: &OracleParams,
) -> Result<(LyapunovEstimate, f64)> {
    let a = lyapunov_vector(sys, weights, params)?;
    let doubled = OracleParams { n_steps: params.n_steps * 2, ..*params };
    let b = lyapunov_vector(sys, weights, &doubled)?;
    let delta = b.lambda.max_abs_diff(&a.lambda)?;
    Ok((b, delta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{Grid, LinearDiagnostic, TorusSystem};
    use approx::assert_relative_eq;

    fn lebesgue(sys: &TorusSystem, n: usize) -> MeasureWeights {
        MeasureWeights::lebesgue(&Grid::for_system(sys, n).unwrap())
    }

    #[test]
    fn cat_map_exponents() {
        let cat = TorusSystem::cat_map();
        let est = lyapunov_vector(&cat, &lebesgue(&cat, 8), &OracleParams { samples: 8, ..Default::default() }).unwrap();
        let l = ((3.0 + 5f64.sqrt()) / 2.0).ln();
        assert_relative_eq!(est.lambda[0], l, epsilon = 1e-6);
        assert_relative_eq!(est.lambda[1], -l, epsilon = 1e-6);
        assert!(est.lambda.sum().abs() < 1e-8);
    }

    #[test]
    fn second_automorphism_and_identity() {
        let b = TorusSystem::toral_automorphism(vec![vec![2, 3], vec![1, 2]]).unwrap();
        let est = lyapunov_vector(&b, &lebesgue(&b, 8), &OracleParams { samples: 4, ..Default::default() }).unwrap();
        assert_relative_eq!(est.lambda[0], (2.0 + 3f64.sqrt()).ln(), epsilon = 1e-6);
        let id = TorusSystem::identity(2);
        let est = lyapunov_vector(&id, &lebesgue(&id, 4), &OracleParams { samples: 4, n_steps: 100, ..Default::default() }).unwrap();
        assert!(est.lambda.norm() < 1e-15);
    }

    #[test]
    fn seeds_do_not_matter_on_ergodic_systems() {
        let cat = TorusSystem::cat_map();
        let w = lebesgue(&cat, 8);
        let a = lyapunov_vector(&cat, &w, &OracleParams { samples: 4, seed: 1, ..Default::default() }).unwrap();
        let b = lyapunov_vector(&cat, &w, &OracleParams { samples: 4, seed: 2, ..Default::default() }).unwrap();
        assert!(a.lambda.max_abs_diff(&b.lambda).unwrap() < 1e-6);
        let again = lyapunov_vector(&cat, &w, &OracleParams { samples: 4, seed: 1, ..Default::default() }).unwrap();
        assert_eq!(a, again);
    }

    #[test]
    fn det_growth_examples() {
        let cat = TorusSystem::cat_map();
        assert!(det_growth_check(&cat, &lebesgue(&cat, 4), 50).unwrap().abs() < 1e-12);
        let sm = TorusSystem::standard_map(1.5).unwrap();
        assert!(det_growth_check(&sm, &lebesgue(&sm, 4), 50).unwrap().abs() < 1e-12);
        let diag = LinearDiagnostic { dim: 2, factor: 2.0 };
        let w = MeasureWeights::lebesgue(&Grid::new(2, 2, crate::dynamics::Anchor::Corner).unwrap());
        assert_relative_eq!(det_growth_check(&diag, &w, 10).unwrap(), 2.0 * 2f64.ln(), epsilon = 1e-14);
        let est = lyapunov_vector(&diag, &w, &OracleParams { samples: 2, n_steps: 20, warmup: 0, seed: 0 }).unwrap();
        assert_relative_eq!(est.lambda.sum(), 2.0 * 2f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn standard_map_sum_is_zero() {
        let sm = TorusSystem::standard_map(1.5).unwrap();
        let est = lyapunov_vector(&sm, &lebesgue(&sm, 8), &OracleParams { samples: 4, n_steps: 2000, ..Default::default() }).unwrap();
        assert!(est.lambda.sum().abs() < 1e-8);
        assert!(est.lambda[0] > 0.0);
    }
}
