//! Property suites run by the `verify` command and the acceptance tests.
//!
//! Each suite draws seeded random inputs, counts the checks whose excess
//! exceeds the suite tolerance and reports the worst excess seen.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{Grid, MeasureWeights, TorusSystem};
use crate::error::{Error, Result};
use crate::field::{self, flat_metric, MetricField};
use crate::numfmt::sig17;
use crate::objective::{self, evaluate_objective};
use crate::optimizer::{self, gradient_check, random_directions};
use crate::oracle::{lyapunov_vector, OracleParams};
use crate::sampling;
use crate::spd::{self, BarycenterOptions, LogSingularVector};
use crate::tolerance::ToleranceProfile;

/// One property suite.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Horn,
    Majorization,
    Barycenter,
    Convexity,
    Lipschitz,
    Bochi,
    Gradient,
    LowerBound,
    Invariants,
}

impl Suite {
    pub const ALL: [Suite; 9] = [
        Suite::Horn,
        Suite::Majorization,
        Suite::Barycenter,
        Suite::Convexity,
        Suite::Lipschitz,
        Suite::Bochi,
        Suite::Gradient,
        Suite::LowerBound,
        Suite::Invariants,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Horn => "horn",
            Suite::Majorization => "majorization",
            Suite::Barycenter => "barycenter",
            Suite::Convexity => "convexity",
            Suite::Lipschitz => "lipschitz",
            Suite::Bochi => "bochi",
            Suite::Gradient => "gradient",
            Suite::LowerBound => "lower_bound",
            Suite::Invariants => "invariants",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|suite| suite.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown suite {s:?}")))
    }
}

/// Result of one suite.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteReport {
    pub suite: Suite,
    pub checks: usize,
    pub violations: usize,
    /// Largest excess over the property's bound, before the tolerance.
    pub worst: f64,
    pub tolerance: f64,
    pub note: String,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

/// Sizes and seeds shared by the suites.
///
/// Deserializes from the `verify` section of a run config; the seed, oracle
/// parameters and tolerances come from their own sections.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifySettings {
    #[serde(skip)]
    pub seed: u64,
    /// Grid resolution for the field suites.
    pub n: usize,
    pub horn_pairs: usize,
    pub field_pairs: usize,
    pub convexity_ts: Vec<f64>,
    pub lower_bound_fields: usize,
    pub gradient_directions: usize,
    pub gradient_delta: f64,
    pub bochi_schedule: Vec<usize>,
    #[serde(skip)]
    pub oracle: OracleParams,
    #[serde(skip)]
    pub tolerances: ToleranceProfile,
}

impl Default for VerifySettings {
    fn default() -> Self {
        Self {
            seed: 0,
            n: 8,
            horn_pairs: 1000,
            field_pairs: 100,
            convexity_ts: vec![0.1, 0.3, 0.5, 0.7, 0.9],
            lower_bound_fields: 50,
            gradient_directions: 20,
            gradient_delta: 1e-5,
            bochi_schedule: vec![1, 2, 4, 8, 16],
            oracle: OracleParams::default(),
            tolerances: ToleranceProfile::default(),
        }
    }
}

struct Tally {
    checks: usize,
    violations: usize,
    worst: f64,
    tol: f64,
}

impl Tally {
    fn new(tol: f64) -> Self {
        Self { checks: 0, violations: 0, worst: f64::NEG_INFINITY, tol }
    }

    fn record(&mut self, excess: f64) {
        self.record_tol(excess, self.tol);
    }

    fn record_tol(&mut self, excess: f64, tol: f64) {
        self.checks += 1;
        if !(excess <= tol) {
            self.violations += 1;
        }
        if excess > self.worst || excess.is_nan() {
            self.worst = excess;
        }
    }

    fn finish(self, suite: Suite, note: impl Into<String>) -> SuiteReport {
        SuiteReport { suite, checks: self.checks, violations: self.violations, worst: self.worst, tolerance: self.tol, note: note.into() }
    }
}

fn rng_for(settings: &VerifySettings, suite: Suite) -> ChaCha8Rng {
    let index = Suite::ALL.iter().position(|s| *s == suite).unwrap() as u64;
    ChaCha8Rng::seed_from_u64(settings.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(index))
}

fn b_automorphism() -> TorusSystem {
    TorusSystem::toral_automorphism(vec![vec![2, 3], vec![1, 2]]).expect("unimodular")
}

/// The configured system if its grid is exact, otherwise the automorphism `[[2,3],[1,2]]`.
fn exact_system(sys: &TorusSystem) -> (TorusSystem, String) {
    if sys.is_grid_exact() {
        (sys.clone(), sys.description().to_string())
    } else {
        let b = b_automorphism();
        let note = format!("{} (configured system has no exact grid)", b.description());
        (b, note)
    }
}

fn lebesgue(sys: &TorusSystem, n: usize) -> Result<(Grid, MeasureWeights)> {
    let grid = Grid::for_system(sys, n)?;
    let w = MeasureWeights::lebesgue(&grid);
    Ok((grid, w))
}

/// `σ⃗(L₁L₂) ⪯ σ⃗(L₁) + σ⃗(L₂)` for random invertible pairs.
pub fn horn_suite(d: usize, settings: &VerifySettings) -> Result<SuiteReport> {
    let mut rng = rng_for(settings, Suite::Horn);
    let mut tally = Tally::new(1e-8);
    for _ in 0..settings.horn_pairs {
        let a = sampling::random_invertible(&mut rng, d);
        let b = sampling::random_invertible(&mut rng, d);
        let lhs = spd::log_singular_values(&a.mul(&b)?)?;
        let rhs = spd::log_singular_values(&a)?.add(&spd::log_singular_values(&b)?)?;
        tally.record(spd::majorization_excess(&lhs, &rhs, false)?);
    }
    Ok(tally.finish(Suite::Horn, format!("d = {d}")))
}

/// Vectorial distance and order properties: GL invariance, triangle inequality,
/// partial-order axioms and the sandwich norm bound.
pub fn majorization_suite(d: usize, settings: &VerifySettings) -> Result<SuiteReport> {
    let mut rng = rng_for(settings, Suite::Majorization);
    let tol = settings.tolerances.majorization;
    let mut tally = Tally::new(tol);
    let trials = settings.field_pairs.max(1);
    for _ in 0..trials {
        let p = sampling::random_spd(&mut rng, d, 1.0);
        let q = sampling::random_spd(&mut rng, d, 1.0);
        let r = sampling::random_spd(&mut rng, d, 1.0);
        let g = sampling::random_invertible(&mut rng, d);
        let dpq = spd::vectorial_distance(&p, &q)?;
        let moved = spd::vectorial_distance(&spd::gl_action(&g, &p)?, &spd::gl_action(&g, &q)?)?;
        tally.record(dpq.max_abs_diff(&moved)?);

        let dpr = spd::vectorial_distance(&p, &r)?;
        let dqr = spd::vectorial_distance(&q, &r)?;
        tally.record(spd::majorization_excess(&dpr, &dpq.add(&dqr)?, false)?);

        // reflexivity and transitivity where the premises hold
        tally.record(spd::majorization_excess(&dpq, &dpq, false)?);
        let (a, b, c) = (random_lsv(&mut rng, d), random_lsv(&mut rng, d), random_lsv(&mut rng, d));
        if spd::majorize_leq(&a, &b, true)? && spd::majorize_leq(&b, &c, true)? {
            tally.record(spd::majorization_excess(&a, &c, true)?);
        }
        if spd::majorize_leq(&a, &b, true)? && spd::majorize_leq(&b, &a, true)? {
            tally.record(a.max_abs_diff(&b)? - tol * d as f64);
        }

        // a ⪯_w b ⪯_w a + ε𝟙 forces ‖a − b‖_∞ ≤ ε
        let eps: f64 = rng.random_range(1e-3..0.5);
        let bumps: Vec<f64> = (0..d).map(|_| rng.random_range(0.0..eps)).collect();
        let b2 = LogSingularVector::from_unsorted(a.as_slice().iter().zip(&bumps).map(|(x, e)| x + e).collect());
        let shifted = LogSingularVector::from_unsorted(a.as_slice().iter().map(|x| x + eps).collect());
        if spd::majorize_leq(&a, &b2, true)? && spd::majorize_leq(&b2, &shifted, true)? {
            tally.record(a.max_abs_diff(&b2)? - eps);
        }
    }
    Ok(tally.finish(Suite::Majorization, format!("d = {d}")))
}

fn random_lsv(rng: &mut impl Rng, d: usize) -> LogSingularVector {
    LogSingularVector::from_unsorted((0..d).map(|_| rng.random_range(-2.0..2.0)).collect())
}

/// Barycenter contraction, permutation symmetry and det-1 closure.
pub fn barycenter_suite(d: usize, settings: &VerifySettings) -> Result<SuiteReport> {
    let mut rng = rng_for(settings, Suite::Barycenter);
    let tols = &settings.tolerances;
    let opts = BarycenterOptions { grad_tol: tols.barycenter_grad, max_iters: tols.barycenter_max_iters, ..Default::default() };
    let bar = |pts: &[spd::SpdMatrix]| spd::barycenter_with(pts, &opts).map(|r| r.point);
    let mut tally = Tally::new(1e-7);
    for _ in 0..settings.field_pairs {
        let l = rng.random_range(2..=5);
        let mut pts: Vec<_> = (0..l).map(|_| sampling::random_spd(&mut rng, d, 1.0)).collect();
        let center = bar(&pts)?;
        let replacement = sampling::random_spd(&mut rng, d, 1.0);
        let rhs = spd::vectorial_distance(&pts[l - 1], &replacement)?.scaled(1.0 / l as f64);
        let mut changed = pts.clone();
        changed[l - 1] = replacement;
        let lhs = spd::vectorial_distance(&center, &bar(&changed)?)?;
        tally.record(spd::majorization_excess(&lhs, &rhs, false)?);

        pts.shuffle(&mut rng);
        tally.record_tol(spd::spd_distance(&center, &bar(&pts)?)?, 1e-8);

        let unit: Vec<_> = pts.iter().map(|p| p.normalize_det()).collect();
        tally.record_tol((bar(&unit)?.det() - 1.0).abs(), tols.unit_det);
    }
    Ok(tally.finish(Suite::Barycenter, format!("d = {d}; permutation to 1e-8, det to {:e}", tols.unit_det)))
}

fn random_pair(rng: &mut ChaCha8Rng, grid: &Grid) -> (MetricField, MetricField) {
    let scale_a = rng.random_range(0.2..1.5);
    let scale_b = rng.random_range(0.2..1.5);
    (sampling::random_metric_field(rng, grid, scale_a), sampling::random_metric_field(rng, grid, scale_b))
}

/// Cone convexity along cellwise geodesics, pointwise and integrated.
pub fn convexity_suite(sys: &TorusSystem, settings: &VerifySettings) -> Result<SuiteReport> {
    let (sys, note) = exact_system(sys);
    let (grid, w) = lebesgue(&sys, settings.n)?;
    let mut rng = rng_for(settings, Suite::Convexity);
    let mut tally = Tally::new(1e-8);
    for _ in 0..settings.field_pairs {
        let (a, b) = random_pair(&mut rng, &grid);
        for &t in &settings.convexity_ts {
            let rep = objective::convexity_check(&sys, &a, &b, &w, t)?;
            tally.record(rep.max_pointwise_excess.max(rep.integrated_excess));
        }
    }
    Ok(tally.finish(Suite::Convexity, note))
}

/// `|s_k(g₁) − s_k(g₂)| ≤ √k · d_{L2}(g₁, g₂)` for every `k`.
pub fn lipschitz_suite(sys: &TorusSystem, settings: &VerifySettings) -> Result<SuiteReport> {
    let (sys, note) = exact_system(sys);
    let (grid, w) = lebesgue(&sys, settings.n)?;
    let mut rng = rng_for(settings, Suite::Lipschitz);
    let mut tally = Tally::new(1e-8);
    for _ in 0..settings.field_pairs {
        let (a, b) = random_pair(&mut rng, &grid);
        for k in 1..=grid.dim() {
            let (lhs, rhs) = objective::lipschitz_check(&sys, &a, &b, &w, k)?;
            tally.record(lhs - rhs);
        }
    }
    Ok(tally.finish(Suite::Lipschitz, note))
}

/// One row of the Bochi table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BochiRow {
    pub n: usize,
    pub s_partial: Vec<f64>,
    /// `s_1(g^N) − λ_1`.
    pub gap_1: f64,
    /// Largest per-cell excess in `σ⃗^{g^N}(df_x) ⪯ (1/N) σ⃗^{g⁰}(df^N_x)`.
    pub inequality_excess: f64,
}

/// Bochi construction from the flat metric along `schedule`.
pub fn bochi_table(sys: &TorusSystem, n: usize, schedule: &[usize], oracle: &OracleParams) -> Result<Vec<BochiRow>> {
    let (grid, w) = lebesgue(sys, n)?;
    let lambda = lyapunov_vector(sys, &w, oracle)?.lambda;
    let g0 = flat_metric(&grid);
    schedule
        .iter()
        .map(|&steps| {
            let gn = field::bochi_sequence(sys, &g0, steps)?;
            let report = evaluate_objective(sys, &gn, &w, None)?;
            let excess = objective::bochi_inequality_excess(sys, &g0, &gn, steps)?;
            Ok(BochiRow { n: steps, gap_1: report.s_partial[0] - lambda[0], s_partial: report.s_partial, inequality_excess: excess })
        })
        .collect()
}

/// CSV rendering of a Bochi table: `N, s_1..s_d, gap_1, inequality_excess`.
pub fn bochi_csv(rows: &[BochiRow]) -> String {
    let d = rows.first().map_or(0, |r| r.s_partial.len());
    let mut out = String::from("N");
    for k in 1..=d {
        out.push_str(&format!(",s_{k}"));
    }
    out.push_str(",gap_1,inequality_excess\n");
    for r in rows {
        out.push_str(&r.n.to_string());
        for s in &r.s_partial {
            out.push(',');
            out.push_str(&sig17(*s));
        }
        out.push_str(&format!(",{},{}\n", sig17(r.gap_1), sig17(r.inequality_excess)));
    }
    out
}

/// Pointwise Bochi inequality for every `N` in the schedule, plus `gap(N_max) < gap(N_min) / 4`.
pub fn bochi_suite(sys: &TorusSystem, settings: &VerifySettings) -> Result<SuiteReport> {
    let (sys, note) = exact_system(sys);
    let rows = bochi_table(&sys, settings.n, &settings.bochi_schedule, &settings.oracle)?;
    let mut tally = Tally::new(1e-7);
    for r in &rows {
        tally.record(r.inequality_excess);
    }
    let (first, last) = (rows.first().unwrap(), rows.last().unwrap());
    tally.checks += 1;
    // absolute slack so a field that starts at the optimum is not a failure
    if !(last.gap_1 <= first.gap_1 / 4.0 + 1e-9) {
        tally.violations += 1;
    }
    let gaps: Vec<String> = rows.iter().map(|r| format!("N={}: {:.3e}", r.n, r.gap_1)).collect();
    Ok(tally.finish(Suite::Bochi, format!("{note}; gaps {}", gaps.join(", "))))
}

/// Central differences against `⟨Γ, h⟩`, at the flat metric unless it is a critical point.
///
/// At a critical point both sides vanish and only truncation noise is left, so
/// the check moves to a seeded random field. Systems without an exact grid or
/// without a spectral gap fall back to the automorphism `[[2,3],[1,2]]`.
pub fn gradient_suite(sys: &TorusSystem, settings: &VerifySettings) -> Result<SuiteReport> {
    let (exact, mut note) = exact_system(sys);
    let mut rng = rng_for(settings, Suite::Gradient);
    let mut run = |target: &TorusSystem, note: &mut String| -> Result<Vec<Vec<optimizer::DirectionCheck>>> {
        let (grid, w) = lebesgue(target, settings.n)?;
        let mut g = flat_metric(&grid);
        if optimizer::gradient_field(target, &g, &w, 1)?.norm(&w) < 1e-6 {
            g = sampling::random_metric_field(&mut rng, &grid, 0.3);
            note.push_str("; flat metric is critical, random base point");
        }
        let dirs = random_directions(&g, &w, settings.gradient_directions, settings.seed);
        gradient_check(target, &g, &w, 1, &dirs, &[settings.gradient_delta])
    };
    let checks = match run(&exact, &mut note) {
        Err(Error::SpectralGapViolated { .. }) => {
            let b = b_automorphism();
            note = format!("{} (no spectral gap on {})", b.description(), exact.description());
            run(&b, &mut note)?
        }
        other => other?,
    };
    let mut tally = Tally::new(1e-3);
    for c in checks.into_iter().flatten() {
        tally.record(c.relative_error());
    }
    Ok(tally.finish(Suite::Gradient, format!("{note}; k = 1, delta = {:e}", settings.gradient_delta)))
}

/// `λ⃗ ⪯ S⃗(g)` for random unit-determinant fields, with 1e-5 oracle slack.
pub fn lower_bound_suite(sys: &TorusSystem, settings: &VerifySettings) -> Result<SuiteReport> {
    let (grid, w) = lebesgue(sys, settings.n)?;
    let oracle = lyapunov_vector(sys, &w, &settings.oracle)?;
    let mut rng = rng_for(settings, Suite::LowerBound);
    let mut tally = Tally::new(1e-5);
    for _ in 0..settings.lower_bound_fields {
        let scale = rng.random_range(0.1..1.5);
        let g = sampling::random_metric_field(&mut rng, &grid, scale);
        let report = evaluate_objective(sys, &g, &w, Some(&oracle))?;
        tally.record(objective::lower_bound_excess(&oracle, &report)?);
    }
    Ok(tally.finish(Suite::LowerBound, sys.description().to_string()))
}

/// Unit determinant under pullback, geodesics and barycenters, `s_d = 0` on
/// volume-preserving systems and trace-free gradients.
pub fn invariants_suite(sys: &TorusSystem, settings: &VerifySettings) -> Result<SuiteReport> {
    let (grid, w) = lebesgue(sys, settings.n)?;
    let mut rng = rng_for(settings, Suite::Invariants);
    let tols = &settings.tolerances;
    let mut tally = Tally::new(tols.unit_det);
    let trials = (settings.field_pairs / 10).max(1);
    for _ in 0..trials {
        let (a, b) = random_pair(&mut rng, &grid);
        tally.record(field::pullback(sys, &a)?.max_det_deviation());
        for t in [-2.0, -1.0, 0.5, 1.0, 2.0] {
            tally.record(field::field_geodesic(&a, &b, t)?.max_det_deviation());
        }
        tally.record(field::field_barycenter(&[a.clone(), b.clone()])?.max_det_deviation());
        let report = evaluate_objective(sys, &a, &w, None)?;
        tally.record_tol(report.s_partial[grid.dim() - 1].abs(), tols.volume);
        let grad = optimizer::gradient_field(sys, &a, &w, 1)?;
        tally.record_tol(grad.to_tangent(&a)?.max_trace_residual(&a)?, tols.tangency);
    }
    let note = format!("{}; s_d to {:e}, trace to {:e}", sys.description(), tols.volume, tols.tangency);
    Ok(tally.finish(Suite::Invariants, note))
}

/// Runs one suite against `sys`.
pub fn run_suite(suite: Suite, sys: &TorusSystem, settings: &VerifySettings) -> Result<SuiteReport> {
    let d = crate::dynamics::TorusMap::dim(sys);
    match suite {
        Suite::Horn => horn_suite(d, settings),
        Suite::Majorization => majorization_suite(d, settings),
        Suite::Barycenter => barycenter_suite(d, settings),
        Suite::Convexity => convexity_suite(sys, settings),
        Suite::Lipschitz => lipschitz_suite(sys, settings),
        Suite::Bochi => bochi_suite(sys, settings),
        Suite::Gradient => gradient_suite(sys, settings),
        Suite::LowerBound => lower_bound_suite(sys, settings),
        Suite::Invariants => invariants_suite(sys, settings),
    }
}

/// Fixed-width table, one line per suite.
pub fn format_table(reports: &[SuiteReport]) -> String {
    let mut out = format!("{:<14} {:>6} {:>7} {:>12} {:>9}  {}\n", "suite", "result", "checks", "worst", "tol", "note");
    for r in reports {
        out.push_str(&format!(
            "{:<14} {:>6} {:>7} {:>12.3e} {:>9.0e}  {}\n",
            r.suite.name(),
            if r.passed() { "PASS" } else { "FAIL" },
            r.checks,
            r.worst,
            r.tolerance,
            r.note
        ));
    }
    out
}
