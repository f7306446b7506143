//! The averaged singular-value objective and its structural checks.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::dynamics::{Grid, MeasureWeights, TorusMap, TorusPoint, TorusSystem};
use crate::error::{Error, Result};
use crate::field::{self, MetricField};
use crate::numfmt::{json_array, sig17};
use crate::oracle::LyapunovEstimate;
use crate::spd::{self, LogSingularVector, SpdMatrix, SymMatrix};

/// Threshold deciding which oracle exponents count as positive.
pub const POSITIVE_EXPONENT_TOL: f64 = 1e-6;

/// Where the image of a sample point lands on the grid.
#[derive(Debug, Clone)]
pub(crate) enum Image {
    /// Exactly on a sample point.
    Node(usize),
    /// Between sample points, with multilinear weights.
    Stencil(Vec<(usize, f64)>),
}

/// Per-cell geometry of `f` on a grid: Jacobian at the sample point and the image location.
#[derive(Debug, Clone)]
pub(crate) struct Discretization {
    pub grid: Grid,
    pub jacobians: Vec<DMatrix<f64>>,
    pub images: Vec<Image>,
}

impl Discretization {
    pub fn new<M: TorusMap + ?Sized>(sys: &M, grid: &Grid) -> Result<Self> {
        if sys.dim() != grid.dim() {
            return Err(Error::DimensionMismatch { expected: grid.dim(), found: sys.dim() });
        }
        let node_map = grid.node_map(sys);
        let mut jacobians = Vec::with_capacity(grid.len());
        let mut images = Vec::with_capacity(grid.len());
        for c in 0..grid.len() {
            let x = grid.sample_point(c);
            jacobians.push(sys.jacobian_matrix(&x));
            images.push(match &node_map {
                Some(map) => Image::Node(map[c]),
                None => Image::Stencil(grid.interpolation_stencil(&sys.apply(&x))),
            });
        }
        Ok(Self { grid: *grid, jacobians, images })
    }

    pub fn len(&self) -> usize {
        self.jacobians.len()
    }

    /// `G` at the image of `cell`, from values and their logs.
    pub fn image_value(&self, values: &[SpdMatrix], logs: &[DMatrix<f64>], cell: usize) -> SpdMatrix {
        match &self.images[cell] {
            Image::Node(y) => values[*y].clone(),
            Image::Stencil(st) => {
                let d = self.grid.dim();
                let mut acc = DMatrix::zeros(d, d);
                for &(c, w) in st {
                    acc += &logs[c] * w;
                }
                SpdMatrix::exp(&SymMatrix::symmetric_part(&acc))
            }
        }
    }

    /// `σ⃗^g(df_x)` for every cell of a raw (not necessarily unit determinant) field.
    pub fn cell_sigmas(&self, values: &[SpdMatrix], logs: &[DMatrix<f64>]) -> Result<Vec<LogSingularVector>> {
        (0..self.len())
            .into_par_iter()
            .map(|c| spd::metric_log_singular_values(&self.image_value(values, logs, c), &self.jacobians[c], &values[c]))
            .collect()
    }
}

fn logs_of(values: &[SpdMatrix]) -> Vec<DMatrix<f64>> {
    values.iter().map(|v| v.log().into_matrix()).collect()
}

fn check_weights(grid: &Grid, weights: &MeasureWeights) -> Result<()> {
    if grid != weights.grid() {
        return Err(Error::GridMismatch("metric field and measure weights live on different grids".into()));
    }
    Ok(())
}

fn weighted_mean(sigmas: &[LogSingularVector], weights: &[f64]) -> LogSingularVector {
    let d = sigmas[0].dim();
    let mut acc = vec![0.0; d];
    for (s, w) in sigmas.iter().zip(weights) {
        for (a, v) in acc.iter_mut().zip(s.as_slice()) {
            *a += w * v;
        }
    }
    LogSingularVector::from_unsorted(acc)
}

/// Value of the vector objective at one metric field.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ObjectiveReport {
    /// `S⃗_{f,μ}(g)`.
    pub svec: LogSingularVector,
    /// `s_k = svec_1 + … + svec_k`.
    pub s_partial: Vec<f64>,
    /// `s_k − (λ_1 + … + λ_k)` when an oracle estimate was supplied.
    pub gap_to_oracle: Option<Vec<f64>>,
    /// `σ⃗^g(df_x)` per cell, when requested.
    pub per_cell_sigma: Option<Vec<LogSingularVector>>,
}

impl ObjectiveReport {
    fn from_sigmas(sigmas: &[LogSingularVector], weights: &[f64], oracle: Option<&LyapunovEstimate>) -> Result<Self> {
        let svec = weighted_mean(sigmas, weights);
        let s_partial = svec.partial_sums();
        let gap_to_oracle = match oracle {
            Some(o) => {
                if o.lambda.dim() != svec.dim() {
                    return Err(Error::DimensionMismatch { expected: svec.dim(), found: o.lambda.dim() });
                }
                Some(s_partial.iter().zip(o.lambda.partial_sums()).map(|(s, l)| s - l).collect())
            }
            None => None,
        };
        Ok(Self { svec, s_partial, gap_to_oracle, per_cell_sigma: None })
    }

    /// Scalarization `Σ_k w_k s_k`.
    pub fn scalarized(&self, k_weights: &[f64]) -> f64 {
        self.s_partial.iter().zip(k_weights).map(|(s, w)| s * w).sum()
    }

    /// JSON text with 17 significant digits.
    pub fn to_json(&self) -> String {
        let mut fields = vec![
            format!("  \"svec\": {}", json_array(self.svec.as_slice())),
            format!("  \"s_partial\": {}", json_array(&self.s_partial)),
        ];
        match &self.gap_to_oracle {
            Some(g) => fields.push(format!("  \"gap_to_oracle\": {}", json_array(g))),
            None => fields.push("  \"gap_to_oracle\": null".to_string()),
        }
        match &self.per_cell_sigma {
            Some(cells) => {
                let rows: Vec<String> = cells.iter().map(|s| format!("    {}", json_array(s.as_slice()))).collect();
                fields.push(format!("  \"per_cell_sigma\": [\n{}\n  ]", rows.join(",\n")));
            }
            None => fields.push("  \"per_cell_sigma\": null".to_string()),
        }
        format!("{{\n{}\n}}\n", fields.join(",\n"))
    }

    /// Header plus one row: `s_1..s_d, gap_1..gap_d` (gaps empty without an oracle).
    pub fn to_csv(&self) -> String {
        let d = self.s_partial.len();
        let mut header: Vec<String> = (1..=d).map(|k| format!("s_{k}")).collect();
        header.extend((1..=d).map(|k| format!("gap_{k}")));
        let mut row: Vec<String> = self.s_partial.iter().map(|&s| sig17(s)).collect();
        match &self.gap_to_oracle {
            Some(g) => row.extend(g.iter().map(|&x| sig17(x))),
            None => row.extend(std::iter::repeat_n(String::new(), d)),
        }
        format!("{}\n{}\n", header.join(","), row.join(","))
    }
}

/// `σ⃗^g(df_x) = σ⃗(G_{f(x)}^{1/2} A_x G_x^{-1/2})` at an arbitrary point.
pub fn sigma_at(sys: &TorusSystem, g: &MetricField, x: &TorusPoint) -> Result<LogSingularVector> {
    let gx = g.evaluate(x);
    let gy = g.evaluate(&sys.apply(x));
    spd::metric_log_singular_values(&gy, &sys.jacobian_matrix(x), &gx)
}

/// `S⃗_{f,μ}(g)` as the weighted sum of per-cell singular-value vectors.
pub fn evaluate_objective<M: TorusMap + ?Sized>(
    sys: &M,
    g: &MetricField,
    weights: &MeasureWeights,
    oracle: Option<&LyapunovEstimate>,
) -> Result<ObjectiveReport> {
    check_weights(g.grid(), weights)?;
    let disc = Discretization::new(sys, g.grid())?;
    let sigmas = disc.cell_sigmas(g.values(), g.logs())?;
    ObjectiveReport::from_sigmas(&sigmas, weights.weights(), oracle)
}

/// [`evaluate_objective`] with the per-cell vectors kept in the report.
pub fn evaluate_objective_detailed<M: TorusMap + ?Sized>(
    sys: &M,
    g: &MetricField,
    weights: &MeasureWeights,
    oracle: Option<&LyapunovEstimate>,
) -> Result<ObjectiveReport> {
    check_weights(g.grid(), weights)?;
    let disc = Discretization::new(sys, g.grid())?;
    let sigmas = disc.cell_sigmas(g.values(), g.logs())?;
    let mut report = ObjectiveReport::from_sigmas(&sigmas, weights.weights(), oracle)?;
    report.per_cell_sigma = Some(sigmas);
    Ok(report)
}

/// Objective of a raw SPD field that need not have unit determinant.
pub fn evaluate_raw<M: TorusMap + ?Sized>(
    sys: &M,
    grid: &Grid,
    values: &[SpdMatrix],
    weights: &MeasureWeights,
) -> Result<ObjectiveReport> {
    check_weights(grid, weights)?;
    if values.len() != grid.len() {
        return Err(Error::GridMismatch(format!("{} values for {} cells", values.len(), grid.len())));
    }
    let disc = Discretization::new(sys, grid)?;
    let sigmas = disc.cell_sigmas(values, &logs_of(values))?;
    ObjectiveReport::from_sigmas(&sigmas, weights.weights(), None)
}

/// `max_k |s_k(γ g) − s_k(g)|` for a positive scalar field `γ` (one value per cell).
///
/// Exactly zero up to rounding when the grid measure is invariant under `f`;
/// otherwise the value measures the discretization residual.
pub fn scaling_invariance_check<M: TorusMap + ?Sized>(
    sys: &M,
    g: &MetricField,
    weights: &MeasureWeights,
    gamma: &[f64],
) -> Result<f64> {
    if gamma.len() != g.grid().len() {
        return Err(Error::GridMismatch("gamma has the wrong number of cells".into()));
    }
    if gamma.iter().any(|&c| !(c > 0.0)) {
        return Err(Error::InvalidArgument("gamma must be positive".into()));
    }
    let scaled: Vec<SpdMatrix> = g.values().iter().zip(gamma).map(|(v, &c)| v.scaled(c)).collect();
    let a = evaluate_raw(sys, g.grid(), g.values(), weights)?;
    let b = evaluate_raw(sys, g.grid(), &scaled, weights)?;
    Ok(a.s_partial.iter().zip(&b.s_partial).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max))
}

/// Outcome of a geodesic convexity check at one parameter `t`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvexityReport {
    pub t: f64,
    /// Largest per-cell majorization excess of `σ⃗^{g^t}` over `(1−t)σ⃗^{g⁰} + tσ⃗^{g¹}`.
    pub max_pointwise_excess: f64,
    /// Majorization excess of the integrated inequality.
    pub integrated_excess: f64,
}

impl ConvexityReport {
    pub fn passed(&self, tol: f64) -> bool {
        self.max_pointwise_excess <= tol && self.integrated_excess <= tol
    }
}

/// Checks `σ⃗^{g^t}(df_x) ⪯ (1−t)σ⃗^{g_a}(df_x) + tσ⃗^{g_b}(df_x)` on every cell and after integration,
/// where `g^t` is the cellwise geodesic from `g_a` to `g_b`.
pub fn convexity_check<M: TorusMap + ?Sized>(
    sys: &M,
    g_a: &MetricField,
    g_b: &MetricField,
    weights: &MeasureWeights,
    t: f64,
) -> Result<ConvexityReport> {
    check_weights(g_a.grid(), weights)?;
    let g_t = field::field_geodesic(g_a, g_b, t)?;
    let disc = Discretization::new(sys, g_a.grid())?;
    let sa = disc.cell_sigmas(g_a.values(), g_a.logs())?;
    let sb = disc.cell_sigmas(g_b.values(), g_b.logs())?;
    let st = disc.cell_sigmas(g_t.values(), g_t.logs())?;
    let mut worst = f64::NEG_INFINITY;
    for c in 0..disc.len() {
        let rhs = sa[c].lerp(&sb[c], t)?;
        worst = worst.max(spd::majorization_excess(&st[c], &rhs, false)?);
    }
    let w = weights.weights();
    let rhs = weighted_mean(&sa, w).lerp(&weighted_mean(&sb, w), t)?;
    let integrated = spd::majorization_excess(&weighted_mean(&st, w), &rhs, false)?;
    Ok(ConvexityReport { t, max_pointwise_excess: worst, integrated_excess: integrated })
}

/// Midpoint convexity: [`convexity_check`] at `t = ½` against the tolerance 1e-8.
pub fn midpoint_convexity_check<M: TorusMap + ?Sized>(
    sys: &M,
    g_a: &MetricField,
    g_b: &MetricField,
    weights: &MeasureWeights,
) -> Result<bool> {
    Ok(convexity_check(sys, g_a, g_b, weights, 0.5)?.passed(1e-8))
}

/// `(|s_k(g1) − s_k(g2)|, √k · d_{L2}(g1, g2))`.
pub fn lipschitz_check<M: TorusMap + ?Sized>(
    sys: &M,
    g1: &MetricField,
    g2: &MetricField,
    weights: &MeasureWeights,
    k: usize,
) -> Result<(f64, f64)> {
    let d = g1.grid().dim();
    if k == 0 || k > d {
        return Err(Error::InvalidArgument(format!("k must be in 1..={d}, got {k}")));
    }
    let a = evaluate_objective(sys, g1, weights, None)?;
    let b = evaluate_objective(sys, g2, weights, None)?;
    let lhs = (a.s_partial[k - 1] - b.s_partial[k - 1]).abs();
    let rhs = (k as f64).sqrt() * field::l2_distance(g1, g2, weights)?;
    Ok((lhs, rhs))
}

/// Upper bound `s_k(g)` on the entropy, with `k` the number of positive oracle exponents.
pub fn entropy_estimate<M: TorusMap + ?Sized>(
    sys: &M,
    g: &MetricField,
    weights: &MeasureWeights,
    oracle: &LyapunovEstimate,
) -> Result<f64> {
    let k = oracle.positive_count(POSITIVE_EXPONENT_TOL);
    if k == 0 {
        return Ok(0.0);
    }
    Ok(evaluate_objective(sys, g, weights, None)?.s_partial[k - 1])
}

/// `(1/n) σ⃗(G_{f^n x}^{1/2} df^n_x G_x^{-1/2})` at the sample point of `cell`, without forming `df^n`.
pub fn iterate_sigma<M: TorusMap + ?Sized>(sys: &M, g: &MetricField, cell: usize, n: usize) -> Result<LogSingularVector> {
    if n == 0 {
        return Err(Error::InvalidArgument("n must be positive".into()));
    }
    let mut x = g.grid().sample_point(cell);
    let mut factors = vec![g.value(cell).powf(-0.5).to_matrix()];
    for _ in 0..n {
        factors.push(sys.jacobian_matrix(&x));
        x = sys.apply(&x);
    }
    factors.push(g.evaluate(&x).sqrt().to_matrix());
    Ok(spd::log_singular_values_of_product(&factors)?.scaled(1.0 / n as f64))
}

/// Largest per-cell excess in `σ⃗^{g^N}(df_x) ⪯ (1/N) σ⃗^{g⁰}(df^N_x)`.
pub fn bochi_inequality_excess<M: TorusMap + ?Sized>(
    sys: &M,
    g0: &MetricField,
    g_n: &MetricField,
    n: usize,
) -> Result<f64> {
    let disc = Discretization::new(sys, g_n.grid())?;
    let lhs = disc.cell_sigmas(g_n.values(), g_n.logs())?;
    let excess: Result<Vec<f64>> = (0..disc.len())
        .into_par_iter()
        .map(|c| spd::majorization_excess(&lhs[c], &iterate_sigma(sys, g0, c, n)?, false))
        .collect();
    Ok(excess?.into_iter().fold(f64::NEG_INFINITY, f64::max))
}

/// Strong-majorization excess of the oracle vector over `S⃗(g)`.
pub fn lower_bound_excess(oracle: &LyapunovEstimate, report: &ObjectiveReport) -> Result<f64> {
    spd::majorization_excess(&oracle.lambda, &report.svec, false)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::flat_metric;
    use crate::sampling;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn b_system() -> TorusSystem {
        TorusSystem::toral_automorphism(vec![vec![2, 3], vec![1, 2]]).unwrap()
    }

    fn setup(sys: &TorusSystem, n: usize) -> (Grid, MeasureWeights) {
        let grid = Grid::for_system(sys, n).unwrap();
        let w = MeasureWeights::lebesgue(&grid);
        (grid, w)
    }

    #[test]
    fn sigma_at_examples() {
        let cat = TorusSystem::cat_map();
        let (grid, _) = setup(&cat, 4);
        let flat = flat_metric(&grid);
        let l = ((3.0 + 5f64.sqrt()) / 2.0).ln();
        let s = sigma_at(&cat, &flat, &TorusPoint::new(vec![0.3, 0.8])).unwrap();
        assert_relative_eq!(s[0], l, epsilon = 1e-14);
        assert_relative_eq!(s[1], -l, epsilon = 1e-14);
        let b = b_system();
        let s = sigma_at(&b, &flat, &grid.sample_point(3)).unwrap();
        assert_relative_eq!(s[0], 0.5 * (9.0 + 4.0 * 5f64.sqrt()).ln(), epsilon = 1e-14);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let g = sampling::random_metric_field(&mut rng, &grid, 1.0);
        let id = TorusSystem::identity(2);
        assert!(sigma_at(&id, &g, &grid.sample_point(5)).unwrap().norm() < 1e-13);
    }

    #[test]
    fn objective_examples() {
        let cat = TorusSystem::cat_map();
        let (grid, w) = setup(&cat, 8);
        let l = ((3.0 + 5f64.sqrt()) / 2.0).ln();
        let r = evaluate_objective(&cat, &flat_metric(&grid), &w, None).unwrap();
        assert_relative_eq!(r.svec[0], l, epsilon = 1e-13);
        assert_relative_eq!(r.s_partial[1], 0.0, epsilon = 1e-13);
        let b = b_system();
        let r = evaluate_objective(&b, &flat_metric(&grid), &w, None).unwrap();
        assert!(r.s_partial[0] > (2.0 + 3f64.sqrt()).ln());
        let sm = TorusSystem::standard_map(1.5).unwrap();
        let (sgrid, sw) = setup(&sm, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let g = sampling::smooth_metric_field(&mut rng, &sgrid, 0.5, 3);
        let r = evaluate_objective(&sm, &g, &sw, None).unwrap();
        assert!(r.s_partial[1].abs() < 1e-8);
    }

    #[test]
    fn report_serialization() {
        let cat = TorusSystem::cat_map();
        let (grid, w) = setup(&cat, 4);
        let r = evaluate_objective(&cat, &flat_metric(&grid), &w, None).unwrap();
        let csv = r.to_csv();
        assert!(csv.starts_with("s_1,s_2,gap_1,gap_2\n"));
        let parsed: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(parsed["s_partial"].as_array().unwrap().len(), 2);
    }

    #[test]
    fn scaling_invariance_examples() {
        let cat = TorusSystem::cat_map();
        let (grid, w) = setup(&cat, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = sampling::random_metric_field(&mut rng, &grid, 1.0);
        assert!(scaling_invariance_check(&cat, &g, &w, &vec![1.0; grid.len()]).unwrap() < 1e-14);
        assert!(scaling_invariance_check(&cat, &g, &w, &vec![3.7; grid.len()]).unwrap() < 1e-12);
        let gamma: Vec<f64> = (0..grid.len()).map(|_| (2.0 * rng.random::<f64>() - 1.0).exp()).collect();
        assert!(scaling_invariance_check(&cat, &g, &w, &gamma).unwrap() < 1e-8);
    }

    #[test]
    fn convexity_examples() {
        let cat = TorusSystem::cat_map();
        let (grid, w) = setup(&cat, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = sampling::random_metric_field(&mut rng, &grid, 1.0);
        let b = sampling::random_metric_field(&mut rng, &grid, 1.0);
        assert!(midpoint_convexity_check(&cat, &a, &a, &w).unwrap());
        assert!(midpoint_convexity_check(&cat, &a, &b, &w).unwrap());
        for t in [0.0, 0.25, 0.75, 1.0] {
            assert!(convexity_check(&cat, &a, &b, &w, t).unwrap().passed(1e-8));
        }
    }

    #[test]
    fn lipschitz_examples() {
        let cat = TorusSystem::cat_map();
        let (grid, w) = setup(&cat, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = sampling::random_metric_field(&mut rng, &grid, 1.0);
        let (lhs, rhs) = lipschitz_check(&cat, &a, &a, &w, 1).unwrap();
        assert!(lhs.abs() < 1e-14 && rhs < 1e-14);
        let b = sampling::random_metric_field(&mut rng, &grid, 1.0);
        for k in 1..=2 {
            let (lhs, rhs) = lipschitz_check(&cat, &a, &b, &w, k).unwrap();
            assert!(lhs <= rhs + 1e-8);
        }
        let p = sampling::random_unit_det_spd(&mut rng, 2, 1.0);
        let q = sampling::random_unit_det_spd(&mut rng, 2, 1.0);
        let (_, rhs) =
            lipschitz_check(&cat, &MetricField::constant(grid, &p).unwrap(), &MetricField::constant(grid, &q).unwrap(), &w, 2).unwrap();
        assert_relative_eq!(rhs, 2f64.sqrt() * spd::spd_distance(&p, &q).unwrap(), epsilon = 1e-12);
    }

    #[test]
    fn entropy_examples() {
        let cat = TorusSystem::cat_map();
        let (grid, w) = setup(&cat, 4);
        let l = ((3.0 + 5f64.sqrt()) / 2.0).ln();
        let oracle = LyapunovEstimate {
            lambda: LogSingularVector::new(vec![l, -l]).unwrap(),
            n_steps: 1,
            per_point_spread: 0.0,
        };
        assert_relative_eq!(entropy_estimate(&cat, &flat_metric(&grid), &w, &oracle).unwrap(), l, epsilon = 1e-13);
        let zero = LyapunovEstimate { lambda: LogSingularVector::zeros(2), n_steps: 1, per_point_spread: 0.0 };
        let id = TorusSystem::identity(2);
        assert_eq!(entropy_estimate(&id, &flat_metric(&grid), &w, &zero).unwrap(), 0.0);
    }

    #[test]
    fn iterate_sigma_matches_power() {
        let b = b_system();
        let (grid, _) = setup(&b, 4);
        let s = iterate_sigma(&b, &flat_metric(&grid), 0, 16).unwrap();
        assert_relative_eq!(s[0], 1.3259479616889349, epsilon = 1e-12);
    }
}
