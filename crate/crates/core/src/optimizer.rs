//! Geodesic descent on unit-determinant metric fields.
//!
//! The gradient of `s_k` at `g` is assembled from the singular vectors of
//! `B_x = G_{f(x)}^{1/2} A_x G_x^{-1/2}`. In whitened coordinates
//! `w = G^{-1/2} h G^{-1/2}` the contribution of cell `x` is
//! `½ ŪŪᵀ` at the cell holding `f(x)` and `−½ V̄V̄ᵀ` at `x` itself, where
//! `Ū`, `V̄` are the first `k` left and right singular vectors. When `f(x)` is
//! not a sample point the left term is pulled back through the log-Euclidean
//! interpolation with Daleckii–Krein divided differences, so the assembled
//! field is the exact gradient of the discretized objective.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{MeasureWeights, TorusMap};
use crate::error::{Error, Result};
use crate::field::{self, MetricField, TangentField};
use crate::numfmt::sig17;
use crate::objective::{Discretization, Image, ObjectiveReport};
use crate::oracle::LyapunovEstimate;
use crate::sampling;
use crate::spd::{self, LogSingularVector, SymMatrix};

/// Constant in front of the projection difference in the derivative of `s_k`.
///
/// Calibrated against central finite differences; pinned by
/// `gradient_scale_is_one_half` below.
pub const GRADIENT_SCALE: f64 = 0.5;

/// Parameters of [`descend`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    /// Weights `w_k` of the scalarization `Σ_k w_k s_k`; missing trailing entries count as 0.
    pub k_weights: Vec<f64>,
    pub max_iters: usize,
    /// First trial step of the line search.
    pub step_init: f64,
    /// Sufficient-decrease constant in `(0, 1)`.
    pub armijo_c: f64,
    /// Backtracking factor in `(0, 1)`.
    pub armijo_shrink: f64,
    /// Stop once the L2 norm of the projected gradient falls below this value.
    pub grad_tol: f64,
    /// Smallest accepted `(α_k − α_{k+1}) / α_1` before a cell is flagged.
    pub gap_margin: f64,
    /// Smallest trial step before the line search reports a stall; set from the tolerance profile.
    #[serde(skip)]
    pub min_step: f64,
    pub seed: u64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            k_weights: vec![1.0],
            max_iters: 500,
            step_init: 1.0,
            armijo_c: 1e-4,
            armijo_shrink: 0.5,
            grad_tol: 1e-8,
            gap_margin: 1e-6,
            min_step: 1e-14,
            seed: 0,
        }
    }
}

impl OptimizerConfig {
    /// `k_weights` padded with zeros to length `d`.
    pub fn weights_for(&self, d: usize) -> Result<Vec<f64>> {
        if self.k_weights.len() > d {
            return Err(Error::InvalidArgument(format!("k_weights has {} entries for dimension {d}", self.k_weights.len())));
        }
        let mut w = self.k_weights.clone();
        w.resize(d, 0.0);
        Ok(w)
    }

    /// Name of the first invalid parameter, if any.
    pub fn first_invalid(&self) -> Option<&'static str> {
        if self.k_weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) || !(self.k_weights.iter().sum::<f64>() > 0.0) {
            return Some("k_weights");
        }
        if !(self.step_init > 0.0 && self.step_init.is_finite()) {
            return Some("step_init");
        }
        if !(self.armijo_c > 0.0 && self.armijo_c < 1.0) {
            return Some("armijo_c");
        }
        if !(self.armijo_shrink > 0.0 && self.armijo_shrink < 1.0) {
            return Some("armijo_shrink");
        }
        if !(self.grad_tol >= 0.0) {
            return Some("grad_tol");
        }
        if !(self.gap_margin >= 0.0) {
            return Some("gap_margin");
        }
        if !(self.min_step > 0.0) {
            return Some("min_step");
        }
        None
    }

    /// All-ones weights: the full vector problem.
    pub fn all_ones(d: usize) -> Self {
        Self { k_weights: vec![1.0; d], ..Self::default() }
    }
}

/// Riemannian gradient of a scalarization `Σ_k w_k s_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientField {
    k_weights: Vec<f64>,
    /// `G^{-1/2} Γ G^{-1/2}` per cell, trace-free.
    whitened: Vec<SymMatrix>,
    /// Whether `α_k − α_{k+1} ≥ gap_margin · α_1` for every weighted `k`.
    pub spectral_gap_ok: Vec<bool>,
    /// Largest `|tr(G⁻¹Γ)|` before the trace-free projection.
    pub trace_residual_before_projection: f64,
}

impl GradientField {
    pub fn whitened(&self) -> &[SymMatrix] {
        &self.whitened
    }

    pub fn k_weights(&self) -> &[f64] {
        &self.k_weights
    }

    /// Ambient representative `G^{1/2} W G^{1/2}`.
    pub fn to_tangent(&self, g: &MetricField) -> Result<TangentField> {
        TangentField::from_whitened(g, &self.whitened)
    }

    /// L2 norm `(Σ_x μ_x tr(W_x²))^{1/2}`.
    pub fn norm(&self, weights: &MeasureWeights) -> f64 {
        self.whitened.iter().zip(weights.weights()).map(|(w, m)| m * w.dot(w)).sum::<f64>().sqrt()
    }

    /// L2 pairing `Σ_x μ_x tr(W_x H_x)` with a whitened field.
    pub fn pair(&self, whitened: &[SymMatrix], weights: &MeasureWeights) -> f64 {
        self.whitened.iter().zip(whitened).zip(weights.weights()).map(|((a, b), m)| m * a.dot(b)).sum()
    }

    /// Largest `|tr(G⁻¹Γ)|` after projection.
    pub fn max_trace(&self) -> f64 {
        self.whitened.iter().map(|w| w.trace().abs()).fold(0.0, f64::max)
    }

    pub fn all_gaps_ok(&self) -> bool {
        self.spectral_gap_ok.iter().all(|&b| b)
    }
}

/// `2 sinh(δ/2) / δ`.
fn sinhc_half(delta: f64) -> f64 {
    if delta.abs() < 1e-6 {
        1.0 + delta * delta / 24.0
    } else {
        2.0 * (0.5 * delta).sinh() / delta
    }
}

/// `V diag(a) Vᵀ`.
fn weighted_projector(v: &DMatrix<f64>, a: &[f64]) -> DMatrix<f64> {
    let d = v.nrows();
    let scaled = DMatrix::from_fn(d, d, |i, j| v[(i, j)] * a[j]);
    scaled * v.transpose()
}

/// Applies `M_ij ↦ f(ℓ_i − ℓ_j) M_ij` in the eigenbasis `frame`.
fn divided_difference(frame: &DMatrix<f64>, ell: &DVector<f64>, m: &DMatrix<f64>, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let core = frame.transpose() * m * frame;
    let d = ell.len();
    let scaled = DMatrix::from_fn(d, d, |i, j| core[(i, j)] * f(ell[i] - ell[j]));
    frame * scaled * frame.transpose()
}

/// Coefficients `a_i = Σ_{k ≥ i} w_k` of the singular-vector projectors.
fn projector_coefficients(k_weights: &[f64]) -> Vec<f64> {
    let d = k_weights.len();
    let mut a = vec![0.0; d];
    let mut acc = 0.0;
    for i in (0..d).rev() {
        acc += k_weights[i];
        a[i] = acc;
    }
    a
}

struct CellTerms {
    sigma: LogSingularVector,
    gap_ok: bool,
    right: DMatrix<f64>,
    left: Vec<(usize, DMatrix<f64>)>,
}

/// Objective and gradient machinery bound to one system, grid and measure.
pub(crate) struct Problem<'a> {
    disc: Discretization,
    weights: &'a MeasureWeights,
    k_weights: Vec<f64>,
    gap_margin: f64,
}

impl<'a> Problem<'a> {
    pub fn new<M: TorusMap + ?Sized>(
        sys: &M,
        g: &MetricField,
        weights: &'a MeasureWeights,
        k_weights: Vec<f64>,
        gap_margin: f64,
    ) -> Result<Self> {
        if g.grid() != weights.grid() {
            return Err(Error::GridMismatch("metric field and measure weights live on different grids".into()));
        }
        if k_weights.len() != g.grid().dim() {
            return Err(Error::DimensionMismatch { expected: g.grid().dim(), found: k_weights.len() });
        }
        Ok(Self { disc: Discretization::new(sys, g.grid())?, weights, k_weights, gap_margin })
    }

    pub fn report(&self, g: &MetricField, oracle: Option<&LyapunovEstimate>) -> Result<ObjectiveReport> {
        let sigmas = self.disc.cell_sigmas(g.values(), g.logs())?;
        let svec = mean(&sigmas, self.weights.weights());
        let s_partial = svec.partial_sums();
        let gap = oracle.map(|o| s_partial.iter().zip(o.lambda.partial_sums()).map(|(s, l)| s - l).collect());
        Ok(ObjectiveReport { svec, s_partial, gap_to_oracle: gap, per_cell_sigma: None })
    }

    pub fn value(&self, g: &MetricField) -> Result<f64> {
        Ok(self.report(g, None)?.scalarized(&self.k_weights))
    }

    fn cell_terms(&self, g: &MetricField, coeffs: &[f64], c: usize) -> Result<CellTerms> {
        let values = g.values();
        let gy = self.disc.image_value(values, g.logs(), c);
        let svd = spd::metric_svd(&gy, &self.disc.jacobians[c], &values[c])?;
        let s = &svd.singular_values;
        let d = s.len();
        let mut gap_ok = true;
        for k in 0..d - 1 {
            if self.k_weights[k] > 0.0 && (s[k] - s[0]).exp() - (s[k + 1] - s[0]).exp() < self.gap_margin {
                gap_ok = false;
            }
        }
        let mu = self.weights.weights()[c];
        let right = weighted_projector(&svd.v, coeffs) * (-GRADIENT_SCALE);
        let left_whitened = weighted_projector(&svd.u, coeffs) * (GRADIENT_SCALE * mu);
        let left = match &self.disc.images[c] {
            Image::Node(y) => vec![(*y, left_whitened)],
            Image::Stencil(stencil) => {
                // whitened at exp(L̂) → Euclidean in L̂ → whitened at each stencil cell
                let k_hat = divided_difference(gy.frame(), gy.log_eigenvalues(), &left_whitened, sinhc_half);
                stencil
                    .iter()
                    .map(|&(cell, omega)| {
                        let gc = &values[cell];
                        let w = divided_difference(gc.frame(), gc.log_eigenvalues(), &k_hat, |dl| 1.0 / sinhc_half(dl));
                        (cell, w * omega)
                    })
                    .collect()
            }
        };
        let sigma = LogSingularVector::new(s.iter().copied().collect())?;
        Ok(CellTerms { sigma, gap_ok, right, left })
    }

    /// Gradient field and objective report at `g`.
    pub fn gradient(&self, g: &MetricField) -> Result<(GradientField, ObjectiveReport)> {
        let coeffs = projector_coefficients(&self.k_weights);
        let n = self.disc.len();
        let terms: Vec<CellTerms> = (0..n).into_par_iter().map(|c| self.cell_terms(g, &coeffs, c)).collect::<Result<_>>()?;
        let d = g.grid().dim();
        let mu = self.weights.weights();
        let mut left_acc = vec![DMatrix::<f64>::zeros(d, d); n];
        for t in &terms {
            for (cell, m) in &t.left {
                left_acc[*cell] += m;
            }
        }
        let mut whitened = Vec::with_capacity(n);
        let mut trace_before = 0.0f64;
        for (c, t) in terms.iter().enumerate() {
            let w = if mu[c] > 0.0 { &left_acc[c] / mu[c] + &t.right } else { DMatrix::zeros(d, d) };
            let w = SymMatrix::symmetric_part(&w);
            let tr = w.trace();
            trace_before = trace_before.max(tr.abs());
            whitened.push(&w - &(&SymMatrix::identity(d) * (tr / d as f64)));
        }
        let sigmas: Vec<LogSingularVector> = terms.iter().map(|t| t.sigma.clone()).collect();
        let svec = mean(&sigmas, mu);
        let s_partial = svec.partial_sums();
        let report = ObjectiveReport { svec, s_partial, gap_to_oracle: None, per_cell_sigma: None };
        let grad = GradientField {
            k_weights: self.k_weights.clone(),
            whitened,
            spectral_gap_ok: terms.iter().map(|t| t.gap_ok).collect(),
            trace_residual_before_projection: trace_before,
        };
        Ok((grad, report))
    }
}

fn mean(sigmas: &[LogSingularVector], weights: &[f64]) -> LogSingularVector {
    let d = sigmas[0].dim();
    let mut acc = vec![0.0; d];
    for (s, w) in sigmas.iter().zip(weights) {
        for (a, v) in acc.iter_mut().zip(s.as_slice()) {
            *a += w * v;
        }
    }
    LogSingularVector::from_unsorted(acc)
}

fn unit_weights(k: usize, d: usize) -> Result<Vec<f64>> {
    if k == 0 || k > d {
        return Err(Error::InvalidArgument(format!("k must be in 1..={d}, got {k}")));
    }
    let mut w = vec![0.0; d];
    w[k - 1] = 1.0;
    Ok(w)
}

/// Gradient of `s_k` at `g` with the default gap margin.
pub fn gradient_field<M: TorusMap + ?Sized>(sys: &M, g: &MetricField, weights: &MeasureWeights, k: usize) -> Result<GradientField> {
    let w = unit_weights(k, g.grid().dim())?;
    Ok(Problem::new(sys, g, weights, w, OptimizerConfig::default().gap_margin)?.gradient(g)?.0)
}

/// Gradient of `Σ_k w_k s_k` at `g`.
pub fn scalarized_gradient<M: TorusMap + ?Sized>(
    sys: &M,
    g: &MetricField,
    weights: &MeasureWeights,
    k_weights: &[f64],
    gap_margin: f64,
) -> Result<GradientField> {
    Ok(Problem::new(sys, g, weights, k_weights.to_vec(), gap_margin)?.gradient(g)?.0)
}

/// One accepted iterate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRecord {
    pub iter: usize,
    pub s_partial: Vec<f64>,
    /// Accepted step length (0 for the starting point).
    pub step: f64,
    /// L2 norm of the projected gradient at this iterate.
    pub grad_norm: f64,
    pub gap_to_oracle: Option<Vec<f64>>,
}

/// Per-iteration history of a descent run.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct OptimizationTrace {
    pub records: Vec<TraceRecord>,
}

impl OptimizationTrace {
    /// CSV with columns `iter, s_1..s_d, step, grad_norm, gap_1..gap_d`.
    pub fn to_csv(&self) -> String {
        let d = self.records.first().map_or(0, |r| r.s_partial.len());
        let mut header = vec!["iter".to_string()];
        header.extend((1..=d).map(|k| format!("s_{k}")));
        header.push("step".into());
        header.push("grad_norm".into());
        header.extend((1..=d).map(|k| format!("gap_{k}")));
        let mut out = header.join(",");
        out.push('\n');
        for r in &self.records {
            let mut row = vec![r.iter.to_string()];
            row.extend(r.s_partial.iter().map(|&s| sig17(s)));
            row.push(sig17(r.step));
            row.push(sig17(r.grad_norm));
            match &r.gap_to_oracle {
                Some(g) => row.extend(g.iter().map(|&x| sig17(x))),
                None => row.extend(std::iter::repeat_n(String::new(), d)),
            }
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    /// Scalarized objective along the trace.
    pub fn scalarized(&self, k_weights: &[f64]) -> Vec<f64> {
        self.records.iter().map(|r| r.s_partial.iter().zip(k_weights).map(|(s, w)| s * w).sum()).collect()
    }
}

/// Why a descent run stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DescentStatus {
    /// Gradient norm fell below `grad_tol`.
    Converged,
    /// `max_iters` accepted steps were taken.
    MaxIters,
    /// No step of at least `min_step` decreased the objective.
    LineSearchStall,
}

/// Final field, trace and stopping reason of [`descend`].
#[derive(Debug, Clone)]
pub struct DescentOutcome {
    pub field: MetricField,
    pub trace: OptimizationTrace,
    pub status: DescentStatus,
    /// Number of accepted steps.
    pub iterations: usize,
    pub final_report: ObjectiveReport,
}

/// Armijo-backtracked geodesic gradient descent on `Σ_k w_k s_k`.
///
/// Each iteration moves every cell along `G ↦ G^{1/2} exp(−t W) G^{1/2}` with
/// `W` the whitened, trace-free gradient. The trial step starts at twice the
/// last accepted step (or `step_init`) and shrinks until the sufficient
/// decrease condition holds.
pub fn descend<M: TorusMap + ?Sized>(
    sys: &M,
    g0: &MetricField,
    weights: &MeasureWeights,
    config: &OptimizerConfig,
    oracle: Option<&LyapunovEstimate>,
) -> Result<DescentOutcome> {
    if let Some(name) = config.first_invalid() {
        return Err(Error::InvalidArgument(format!("optimizer parameter {name} is out of range")));
    }
    let d = g0.grid().dim();
    let kw = config.weights_for(d)?;
    let problem = Problem::new(sys, g0, weights, kw.clone(), config.gap_margin)?;
    let with_gap = |report: &ObjectiveReport| -> Option<Vec<f64>> {
        oracle.map(|o| report.s_partial.iter().zip(o.lambda.partial_sums()).map(|(s, l)| s - l).collect())
    };

    let mut g = g0.clone();
    let (mut grad, mut report) = problem.gradient(&g)?;
    let mut value = report.scalarized(&kw);
    let mut gnorm = grad.norm(weights);
    let mut trace = OptimizationTrace::default();
    trace.records.push(TraceRecord {
        iter: 0,
        s_partial: report.s_partial.clone(),
        step: 0.0,
        grad_norm: gnorm,
        gap_to_oracle: with_gap(&report),
    });

    let mut step = config.step_init;
    let mut status = DescentStatus::MaxIters;
    let mut iterations = 0;
    while iterations < config.max_iters {
        if gnorm < config.grad_tol {
            status = DescentStatus::Converged;
            break;
        }
        let direction: Vec<SymMatrix> = grad.whitened().iter().map(|w| -w).collect();
        let slope = -gnorm * gnorm;
        let mut t = step;
        let accepted = loop {
            let trial = field::step_whitened(&g, &direction, t);
            let trial_value = problem.value(&trial)?;
            if trial_value <= value + config.armijo_c * t * slope {
                break Some((trial, t));
            }
            t *= config.armijo_shrink;
            if t < config.min_step {
                break None;
            }
        };
        let Some((next, t)) = accepted else {
            status = DescentStatus::LineSearchStall;
            break;
        };
        g = next;
        iterations += 1;
        (grad, report) = problem.gradient(&g)?;
        value = report.scalarized(&kw);
        gnorm = grad.norm(weights);
        trace.records.push(TraceRecord {
            iter: iterations,
            s_partial: report.s_partial.clone(),
            step: t,
            grad_norm: gnorm,
            gap_to_oracle: with_gap(&report),
        });
        step = 2.0 * t;
    }
    if status == DescentStatus::MaxIters && gnorm < config.grad_tol {
        status = DescentStatus::Converged;
    }
    let mut final_report = report;
    final_report.gap_to_oracle = with_gap(&final_report);
    Ok(DescentOutcome { field: g, trace, status, iterations, final_report })
}

/// One finite-difference comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DirectionCheck {
    /// `⟨Γ, h⟩_{L2}`.
    pub predicted: f64,
    /// `(s_k(γ(δ)) − s_k(γ(−δ))) / 2δ` along the geodesic with initial velocity `h`.
    pub finite_difference: f64,
    pub delta: f64,
}

impl DirectionCheck {
    /// `|predicted − fd| / max(|predicted|, |fd|)`.
    pub fn relative_error(&self) -> f64 {
        let scale = self.predicted.abs().max(self.finite_difference.abs()).max(1e-300);
        (self.predicted - self.finite_difference).abs() / scale
    }
}

/// Random unit-norm trace-free whitened directions, seeded.
pub fn random_directions(g: &MetricField, weights: &MeasureWeights, count: usize, seed: u64) -> Vec<Vec<SymMatrix>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let h = sampling::random_tangent_field(&mut rng, g);
            let w = h.whitened(g).expect("same grid");
            let norm = w.iter().zip(weights.weights()).map(|(m, mu)| mu * m.dot(m)).sum::<f64>().sqrt();
            w.iter().map(|m| m * (1.0 / norm)).collect()
        })
        .collect()
}

/// Compares `⟨Γ, h⟩` with central differences for every direction and step.
pub fn gradient_check<M: TorusMap + ?Sized>(
    sys: &M,
    g: &MetricField,
    weights: &MeasureWeights,
    k: usize,
    directions: &[Vec<SymMatrix>],
    deltas: &[f64],
) -> Result<Vec<Vec<DirectionCheck>>> {
    let w = unit_weights(k, g.grid().dim())?;
    let problem = Problem::new(sys, g, weights, w, OptimizerConfig::default().gap_margin)?;
    let (grad, _) = problem.gradient(g)?;
    if let Some(cell) = grad.spectral_gap_ok.iter().position(|ok| !ok) {
        return Err(Error::SpectralGapViolated { cell, k });
    }
    directions
        .iter()
        .map(|h| {
            let predicted = grad.pair(h, weights);
            deltas
                .iter()
                .map(|&delta| {
                    let plus = problem.value(&field::step_whitened(g, h, delta))?;
                    let minus = problem.value(&field::step_whitened(g, h, -delta))?;
                    Ok(DirectionCheck { predicted, finite_difference: (plus - minus) / (2.0 * delta), delta })
                })
                .collect()
        })
        .collect()
}

/// Largest relative error between `⟨Γ, h⟩` and central differences over random unit directions.
///
/// Fails with `SpectralGapViolated` when `α_k = α_{k+1}` (within the gap margin) at some cell.
pub fn verify_gradient<M: TorusMap + ?Sized>(
    sys: &M,
    g: &MetricField,
    weights: &MeasureWeights,
    k: usize,
    n_directions: usize,
    delta: f64,
    seed: u64,
) -> Result<f64> {
    let dirs = random_directions(g, weights, n_directions, seed);
    let checks = gradient_check(sys, g, weights, k, &dirs, &[delta])?;
    Ok(checks.iter().flatten().map(DirectionCheck::relative_error).fold(0.0, f64::max))
}

/// Least-squares slope of `log y` against `log x`.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let cov: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let var: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    cov / var
}

/// Whether `g` is a critical point of `s_k` up to `tol` in L2 norm.
pub fn is_critical<M: TorusMap + ?Sized>(sys: &M, g: &MetricField, weights: &MeasureWeights, k: usize, tol: f64) -> Result<bool> {
    Ok(gradient_field(sys, g, weights, k)?.norm(weights) < tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{Grid, TorusSystem};
    use crate::field::flat_metric;
    use crate::objective::evaluate_objective;
    use rand::SeedableRng;

    fn b_system() -> TorusSystem {
        TorusSystem::toral_automorphism(vec![vec![2, 3], vec![1, 2]]).unwrap()
    }

    fn setup(sys: &TorusSystem, n: usize) -> (Grid, MeasureWeights) {
        let grid = Grid::for_system(sys, n).unwrap();
        (grid, MeasureWeights::lebesgue(&grid))
    }

    #[test]
    fn cat_map_flat_is_critical() {
        let cat = TorusSystem::cat_map();
        let (grid, w) = setup(&cat, 8);
        let grad = gradient_field(&cat, &flat_metric(&grid), &w, 1).unwrap();
        assert!(grad.norm(&w) < 1e-8);
        let out = descend(&cat, &flat_metric(&grid), &w, &OptimizerConfig::default(), None).unwrap();
        assert_eq!(out.status, DescentStatus::Converged);
        assert_eq!(out.iterations, 0);
        assert_eq!(out.field, flat_metric(&grid));
    }

    #[test]
    fn identity_map_has_zero_gradient() {
        let id = TorusSystem::identity(2);
        let (grid, w) = setup(&id, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let c = sampling::random_unit_det_spd(&mut rng, 2, 1.0);
        let g = MetricField::constant(grid, &c).unwrap();
        for k in 1..=2 {
            assert!(gradient_field(&id, &g, &w, k).unwrap().norm(&w) < 1e-12);
        }
    }

    #[test]
    fn gradient_is_trace_free() {
        let b = b_system();
        let (grid, w) = setup(&b, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let g = sampling::random_metric_field(&mut rng, &grid, 0.8);
        let grad = gradient_field(&b, &g, &w, 1).unwrap();
        assert!(grad.trace_residual_before_projection < 1e-6);
        assert!(grad.max_trace() < 1e-12);
        let tangent = grad.to_tangent(&g).unwrap();
        assert!(tangent.max_trace_residual(&g).unwrap() < 1e-8);
    }

    #[test]
    fn gradient_matches_finite_differences_on_automorphism() {
        let b = b_system();
        let (grid, w) = setup(&b, 4);
        let err = verify_gradient(&b, &flat_metric(&grid), &w, 1, 5, 1e-5, 3).unwrap();
        assert!(err < 1e-3, "{err}");
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let g = sampling::random_metric_field(&mut rng, &grid, 0.5);
        let err = verify_gradient(&b, &g, &w, 1, 5, 1e-5, 5).unwrap();
        assert!(err < 1e-3, "{err}");
    }

    #[test]
    fn gradient_matches_finite_differences_with_interpolation() {
        let sm = TorusSystem::standard_map(1.5).unwrap();
        let (grid, w) = setup(&sm, 6);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let g = sampling::smooth_metric_field(&mut rng, &grid, 0.4, 3);
        let err = verify_gradient(&sm, &g, &w, 1, 5, 1e-5, 7).unwrap();
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn gradient_scale_is_one_half() {
        assert_eq!(GRADIENT_SCALE, 0.5);
        // the finite differences pin the constant: a factor 1 would be off by 100%
        let b = b_system();
        let (grid, w) = setup(&b, 4);
        let g = flat_metric(&grid);
        let dirs = random_directions(&g, &w, 3, 9);
        for row in gradient_check(&b, &g, &w, 1, &dirs, &[1e-5]).unwrap() {
            let c = row[0];
            let ratio = c.finite_difference / c.predicted;
            assert!((ratio - 1.0).abs() < 1e-4, "{ratio}");
            assert!(((c.finite_difference / (2.0 * c.predicted)) - 0.5).abs() < 1e-4);
        }
    }

    #[test]
    fn spectral_gap_violation_is_reported() {
        let id = TorusSystem::identity(2);
        let (grid, w) = setup(&id, 4);
        let err = verify_gradient(&id, &flat_metric(&grid), &w, 1, 2, 1e-5, 0).unwrap_err();
        assert!(matches!(err, Error::SpectralGapViolated { k: 1, .. }));
    }

    #[test]
    fn descent_on_automorphism_reduces_objective() {
        let b = b_system();
        let (grid, w) = setup(&b, 4);
        let cfg = OptimizerConfig { max_iters: 50, ..Default::default() };
        let out = descend(&b, &flat_metric(&grid), &w, &cfg, None).unwrap();
        let values = out.trace.scalarized(&[1.0, 0.0]);
        for pair in values.windows(2) {
            assert!(pair[1] <= pair[0], "{values:?} {:?}", out.status);
        }
        let lambda = (2.0 + 3f64.sqrt()).ln();
        assert!(values.last().unwrap() - lambda < 1e-3, "{}", values.last().unwrap());
        assert!(out.field.max_det_deviation() < 1e-10);
        let check = evaluate_objective(&b, &out.field, &w, None).unwrap();
        assert!((check.s_partial[0] - values.last().unwrap()).abs() < 1e-12);
    }

    #[test]
    fn trace_csv_layout() {
        let b = b_system();
        let (grid, w) = setup(&b, 4);
        let cfg = OptimizerConfig { max_iters: 2, ..Default::default() };
        let out = descend(&b, &flat_metric(&grid), &w, &cfg, None).unwrap();
        let csv = out.trace.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "iter,s_1,s_2,step,grad_norm,gap_1,gap_2");
        assert_eq!(csv.lines().count(), 1 + out.trace.records.len());
    }

    #[test]
    fn config_validation() {
        assert_eq!(OptimizerConfig { armijo_c: 1.5, ..Default::default() }.first_invalid(), Some("armijo_c"));
        assert_eq!(OptimizerConfig { k_weights: vec![0.0], ..Default::default() }.first_invalid(), Some("k_weights"));
        assert!(OptimizerConfig::default().first_invalid().is_none());
    }

    #[test]
    fn log_log_slope_of_square() {
        let x = [0.01, 0.02, 0.04];
        let y: Vec<f64> = x.iter().map(|v| 3.0 * v * v).collect();
        assert!((log_log_slope(&x, &y) - 2.0).abs() < 1e-12);
    }
}
