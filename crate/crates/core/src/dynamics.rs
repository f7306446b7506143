//! Torus maps, their Jacobians and discretized invariant measures.

use std::f64::consts::TAU;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spd::InvertibleMatrix;

/// Entry size beyond which [`iterate_jacobian`] raises its overflow flag.
pub const OVERFLOW_THRESHOLD: f64 = 1e150;

/// Point of `T^d` with coordinates in `[0, 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TorusPoint(Vec<f64>);

fn wrap(x: f64) -> f64 {
    let r = x - x.floor();
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

impl TorusPoint {
    /// Reduces every coordinate mod 1.
    pub fn new(coords: Vec<f64>) -> Self {
        Self(coords.into_iter().map(wrap).collect())
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    /// Largest coordinate distance on the torus.
    pub fn torus_distance(&self, other: &Self) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| {
                let d = (a - b).abs();
                d.min(1.0 - d)
            })
            .fold(0.0, f64::max)
    }
}

/// A differentiable map of `T^d`, or a local diagnostic map with the same interface.
pub trait TorusMap: Sync {
    fn dim(&self) -> usize;
    fn apply(&self, x: &TorusPoint) -> TorusPoint;
    fn jacobian_matrix(&self, x: &TorusPoint) -> DMatrix<f64>;
}

/// Smooth perturbation composed before the linear part of a perturbed automorphism.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Perturbation {
    /// `x_0 ← x_0 + (ε/2π) sin(2π x_1)`.
    SineShear,
    /// `x_1 ← x_1 + (ε/2π) sin(2π x_0)`.
    SineShearTransposed,
}

impl Perturbation {
    fn axes(self) -> (usize, usize) {
        match self {
            Perturbation::SineShear => (0, 1),
            Perturbation::SineShearTransposed => (1, 0),
        }
    }
}

/// The kind and parameters of a shipped system, as read from a config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SystemKind {
    /// `x ↦ A x mod 1` for an integer matrix with `|det A| = 1`.
    ToralAutomorphism { matrix: Vec<Vec<i64>> },
    /// Chirikov standard map with stochasticity parameter `k`.
    StandardMap { k: f64 },
    /// `x ↦ A h_ε(x) mod 1` where `h_ε` is a sine shear.
    PerturbedAutomorphism { matrix: Vec<Vec<i64>>, epsilon: f64, perturbation: Perturbation },
}

#[derive(Debug, Clone, PartialEq)]
enum Compiled {
    Linear { a: DMatrix<f64>, a_inv: DMatrix<f64> },
    Standard { k: f64 },
    Perturbed { a: DMatrix<f64>, a_inv: DMatrix<f64>, epsilon: f64, axes: (usize, usize) },
}

/// A shipped volume-preserving diffeomorphism of the torus.
#[derive(Debug, Clone, PartialEq)]
pub struct TorusSystem {
    dim: usize,
    kind: SystemKind,
    description: String,
    compiled: Compiled,
}

fn integer_det(m: &[Vec<i64>]) -> i128 {
    // Bareiss fraction-free elimination
    let n = m.len();
    let mut a: Vec<Vec<i128>> = m.iter().map(|r| r.iter().map(|&x| x as i128).collect()).collect();
    let mut sign = 1i128;
    let mut prev = 1i128;
    for k in 0..n.saturating_sub(1) {
        if a[k][k] == 0 {
            match (k + 1..n).find(|&i| a[i][k] != 0) {
                Some(i) => {
                    a.swap(i, k);
                    sign = -sign;
                }
                None => return 0,
            }
        }
        for i in k + 1..n {
            for j in k + 1..n {
                a[i][j] = (a[i][j] * a[k][k] - a[i][k] * a[k][j]) / prev;
            }
        }
        prev = a[k][k];
    }
    if n == 0 {
        1
    } else {
        sign * a[n - 1][n - 1]
    }
}

fn integer_matrix(m: &[Vec<i64>]) -> Result<DMatrix<f64>> {
    let d = m.len();
    if d == 0 {
        return Err(Error::InvalidArgument("matrix must be nonempty".into()));
    }
    if let Some(row) = m.iter().find(|r| r.len() != d) {
        return Err(Error::DimensionMismatch { expected: d, found: row.len() });
    }
    let det = integer_det(m);
    if det.abs() != 1 {
        return Err(Error::InvalidArgument(format!("integer matrix must have |det| = 1, found det = {det}")));
    }
    Ok(DMatrix::from_fn(d, d, |i, j| m[i][j] as f64))
}

fn integer_inverse(a: &DMatrix<f64>) -> DMatrix<f64> {
    // entries of the inverse of a unimodular integer matrix are integers
    a.clone().try_inverse().expect("unimodular matrix").map(f64::round)
}

fn mat_vec_mod1(a: &DMatrix<f64>, x: &[f64]) -> Vec<f64> {
    (0..a.nrows()).map(|i| (0..a.ncols()).map(|j| a[(i, j)] * x[j]).sum()).collect()
}

impl TorusSystem {
    /// Validates and compiles a system description.
    pub fn from_kind(kind: SystemKind) -> Result<Self> {
        let (dim, compiled, description) = match &kind {
            SystemKind::ToralAutomorphism { matrix } => {
                let a = integer_matrix(matrix)?;
                let a_inv = integer_inverse(&a);
                (a.nrows(), Compiled::Linear { a, a_inv }, format!("toral automorphism {matrix:?}"))
            }
            SystemKind::StandardMap { k } => {
                if !k.is_finite() {
                    return Err(Error::InvalidArgument("standard map parameter must be finite".into()));
                }
                (2, Compiled::Standard { k: *k }, format!("standard map K = {k}"))
            }
            SystemKind::PerturbedAutomorphism { matrix, epsilon, perturbation } => {
                let a = integer_matrix(matrix)?;
                if a.nrows() < 2 {
                    return Err(Error::InvalidArgument("perturbation needs dimension at least 2".into()));
                }
                if !epsilon.is_finite() {
                    return Err(Error::InvalidArgument("epsilon must be finite".into()));
                }
                let a_inv = integer_inverse(&a);
                (
                    a.nrows(),
                    Compiled::Perturbed { a, a_inv, epsilon: *epsilon, axes: perturbation.axes() },
                    format!("automorphism {matrix:?} after {perturbation:?} with epsilon = {epsilon}"),
                )
            }
        };
        Ok(Self { dim, kind, description, compiled })
    }

    pub fn toral_automorphism(matrix: Vec<Vec<i64>>) -> Result<Self> {
        Self::from_kind(SystemKind::ToralAutomorphism { matrix })
    }

    pub fn standard_map(k: f64) -> Result<Self> {
        Self::from_kind(SystemKind::StandardMap { k })
    }

    pub fn perturbed_automorphism(matrix: Vec<Vec<i64>>, epsilon: f64, perturbation: Perturbation) -> Result<Self> {
        Self::from_kind(SystemKind::PerturbedAutomorphism { matrix, epsilon, perturbation })
    }

    /// Arnold's cat map `[[2,1],[1,1]]`.
    pub fn cat_map() -> Self {
        Self::toral_automorphism(vec![vec![2, 1], vec![1, 1]]).expect("unimodular")
    }

    /// The identity of `T^d`, as an unperturbed automorphism.
    pub fn identity(d: usize) -> Self {
        let m = (0..d).map(|i| (0..d).map(|j| i64::from(i == j)).collect()).collect();
        Self::perturbed_automorphism(m, 0.0, Perturbation::SineShear).expect("identity is unimodular")
    }

    pub fn kind(&self) -> &SystemKind {
        &self.kind
    }

    pub fn description(&self) -> &str {
        &self.description
    }

    /// Whether the map sends corner-anchored grid nodes onto grid nodes.
    pub fn is_grid_exact(&self) -> bool {
        match &self.compiled {
            Compiled::Linear { .. } => true,
            Compiled::Standard { .. } => false,
            Compiled::Perturbed { epsilon, .. } => *epsilon == 0.0,
        }
    }

    /// The constant Jacobian, when the map is linear.
    pub fn linear_part(&self) -> Option<&DMatrix<f64>> {
        match &self.compiled {
            Compiled::Linear { a, .. } => Some(a),
            Compiled::Perturbed { a, epsilon, .. } if *epsilon == 0.0 => Some(a),
            _ => None,
        }
    }

    /// Jacobian as a checked invertible matrix.
    pub fn jacobian(&self, x: &TorusPoint) -> InvertibleMatrix {
        InvertibleMatrix::new(self.jacobian_matrix(x)).expect("shipped systems are diffeomorphisms")
    }

    /// The inverse map `f⁻¹`.
    pub fn inverse_apply(&self, y: &TorusPoint) -> TorusPoint {
        let y = y.coords();
        match &self.compiled {
            Compiled::Linear { a_inv, .. } => TorusPoint::new(mat_vec_mod1(a_inv, y)),
            Compiled::Standard { k } => {
                let x1 = y[0] - y[1];
                let x2 = y[1] - k / TAU * (TAU * x1).sin();
                TorusPoint::new(vec![x1, x2])
            }
            Compiled::Perturbed { a_inv, epsilon, axes, .. } => {
                let mut x = mat_vec_mod1(a_inv, y);
                let (t, s) = *axes;
                x[t] -= epsilon / TAU * (TAU * x[s]).sin();
                TorusPoint::new(x)
            }
        }
    }
}

impl TorusMap for TorusSystem {
    fn dim(&self) -> usize {
        self.dim
    }

    fn apply(&self, x: &TorusPoint) -> TorusPoint {
        let x = x.coords();
        match &self.compiled {
            Compiled::Linear { a, .. } => TorusPoint::new(mat_vec_mod1(a, x)),
            Compiled::Standard { k } => {
                let kick = k / TAU * (TAU * x[0]).sin();
                let y2 = x[1] + kick;
                TorusPoint::new(vec![x[0] + y2, y2])
            }
            Compiled::Perturbed { a, epsilon, axes, .. } => {
                let mut h = x.to_vec();
                let (t, s) = *axes;
                h[t] += epsilon / TAU * (TAU * x[s]).sin();
                TorusPoint::new(mat_vec_mod1(a, &h))
            }
        }
    }

    fn jacobian_matrix(&self, x: &TorusPoint) -> DMatrix<f64> {
        let x = x.coords();
        match &self.compiled {
            Compiled::Linear { a, .. } => a.clone(),
            Compiled::Standard { k } => {
                let c = k * (TAU * x[0]).cos();
                DMatrix::from_row_slice(2, 2, &[1.0 + c, 1.0, c, 1.0])
            }
            Compiled::Perturbed { a, epsilon, axes, .. } => {
                let mut dh = DMatrix::identity(self.dim, self.dim);
                let (t, s) = *axes;
                dh[(t, s)] += epsilon * (TAU * x[s]).cos();
                a * dh
            }
        }
    }
}

/// Uniform linear expansion `v ↦ c v`, a local diagnostic that is not a torus map.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearDiagnostic {
    pub dim: usize,
    pub factor: f64,
}

impl TorusMap for LinearDiagnostic {
    fn dim(&self) -> usize {
        self.dim
    }

    fn apply(&self, x: &TorusPoint) -> TorusPoint {
        x.clone()
    }

    fn jacobian_matrix(&self, _x: &TorusPoint) -> DMatrix<f64> {
        DMatrix::identity(self.dim, self.dim) * self.factor
    }
}

/// Where a grid cell keeps its sample point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Anchor {
    /// Lower-left corner `i / n`.
    Corner,
    /// Center `(i + ½) / n`.
    Center,
}

impl Anchor {
    fn offset(self) -> f64 {
        match self {
            Anchor::Corner => 0.0,
            Anchor::Center => 0.5,
        }
    }
}

/// Uniform grid of `n^d` cells in lexicographic order (first coordinate slowest).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Grid {
    n: usize,
    dim: usize,
    anchor: Anchor,
}

impl Grid {
    pub fn new(n: usize, dim: usize, anchor: Anchor) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidArgument(format!("grid resolution must be at least 2, got {n}")));
        }
        if dim == 0 || dim > 8 {
            return Err(Error::InvalidArgument(format!("dimension must be in 1..=8, got {dim}")));
        }
        if (n as f64).powi(dim as i32) > 1e8 {
            return Err(Error::InvalidArgument("grid has more than 1e8 cells".into()));
        }
        Ok(Self { n, dim, anchor })
    }

    /// Grid with the anchor convention of `sys`: corners for grid-exact maps, centers otherwise.
    ///
    /// Fails if the Jacobian is numerically singular at a sample point.
    pub fn for_system(sys: &TorusSystem, n: usize) -> Result<Self> {
        let anchor = if sys.is_grid_exact() { Anchor::Corner } else { Anchor::Center };
        let grid = Self::new(n, sys.dim(), anchor)?;
        for c in 0..grid.len() {
            let det = sys.jacobian_matrix(&grid.sample_point(c)).determinant();
            if !(det.abs() > crate::spd::MIN_ABS_DET) {
                return Err(Error::InvalidArgument(format!("Jacobian is singular at cell {c}")));
            }
        }
        Ok(grid)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn anchor(&self) -> Anchor {
        self.anchor
    }

    /// Number of cells `n^d`.
    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn multi_index(&self, cell: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dim];
        let mut rest = cell;
        for k in (0..self.dim).rev() {
            idx[k] = rest % self.n;
            rest /= self.n;
        }
        idx
    }

    pub fn cell_index(&self, idx: &[usize]) -> usize {
        idx.iter().fold(0, |acc, &i| acc * self.n + (i % self.n))
    }

    pub fn sample_point(&self, cell: usize) -> TorusPoint {
        let off = self.anchor.offset();
        let nf = self.n as f64;
        TorusPoint::new(self.multi_index(cell).iter().map(|&i| (i as f64 + off) / nf).collect())
    }

    /// Cell whose box `[i/n, (i+1)/n)^d` contains `x`.
    pub fn cell_containing(&self, x: &TorusPoint) -> usize {
        let idx: Vec<usize> = x.coords().iter().map(|c| ((c * self.n as f64).floor() as usize).min(self.n - 1)).collect();
        self.cell_index(&idx)
    }

    /// The cell whose sample point equals `x` up to `1e-7` cell widths.
    pub fn exact_node(&self, x: &TorusPoint) -> Option<usize> {
        let off = self.anchor.offset();
        let mut idx = Vec::with_capacity(self.dim);
        for c in x.coords() {
            let u = c * self.n as f64 - off;
            let r = u.round();
            if (u - r).abs() > 1e-7 {
                return None;
            }
            idx.push((r as i64).rem_euclid(self.n as i64) as usize);
        }
        Some(self.cell_index(&idx))
    }

    /// Multilinear interpolation weights of the `2^d` sample points surrounding `x`.
    pub fn interpolation_stencil(&self, x: &TorusPoint) -> Vec<(usize, f64)> {
        let off = self.anchor.offset();
        let nf = self.n as f64;
        let mut base = Vec::with_capacity(self.dim);
        let mut frac = Vec::with_capacity(self.dim);
        for c in x.coords() {
            let u = c * nf - off;
            let b = u.floor();
            base.push(b as i64);
            frac.push(u - b);
        }
        let mut out = Vec::with_capacity(1 << self.dim);
        for corner in 0..(1usize << self.dim) {
            let mut w = 1.0;
            let mut idx = Vec::with_capacity(self.dim);
            for k in 0..self.dim {
                let up = (corner >> (self.dim - 1 - k)) & 1 == 1;
                w *= if up { frac[k] } else { 1.0 - frac[k] };
                let i = base[k] + i64::from(up);
                idx.push(i.rem_euclid(self.n as i64) as usize);
            }
            if w > 0.0 {
                out.push((self.cell_index(&idx), w));
            }
        }
        out
    }

    /// Permutation `c ↦ cell of f(sample(c))` when `f` maps sample points onto sample points.
    pub fn node_map<M: TorusMap + ?Sized>(&self, sys: &M) -> Option<Vec<usize>> {
        let mut map = Vec::with_capacity(self.len());
        let mut seen = vec![false; self.len()];
        for c in 0..self.len() {
            let y = self.exact_node(&sys.apply(&self.sample_point(c)))?;
            if seen[y] {
                return None;
            }
            seen[y] = true;
            map.push(y);
        }
        Some(map)
    }
}

/// Discretized invariant probability measure: one weight per grid cell.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasureWeights {
    grid: Grid,
    weights: Vec<f64>,
}

/// How to build [`MeasureWeights`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum MeasureMode {
    Lebesgue,
    Birkhoff { orbit_length: usize, burn_in: usize },
}

impl MeasureWeights {
    /// Uniform weights `1/n^d`.
    pub fn lebesgue(grid: &Grid) -> Self {
        let w = 1.0 / grid.len() as f64;
        Self { grid: *grid, weights: vec![w; grid.len()] }
    }

    /// Validates nonnegativity and unit mass (to 1e-12).
    pub fn from_weights(grid: &Grid, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != grid.len() {
            return Err(Error::DimensionMismatch { expected: grid.len(), found: weights.len() });
        }
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::InvalidArgument("weights must be nonnegative".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument(format!("weights sum to {total}, not 1")));
        }
        Ok(Self { grid: *grid, weights })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn n(&self) -> usize {
        self.grid.n()
    }

    /// L¹ distance to the uniform weights.
    pub fn l1_distance_to_uniform(&self) -> f64 {
        let u = 1.0 / self.weights.len() as f64;
        self.weights.iter().map(|w| (w - u).abs()).sum()
    }
}

/// Cell weights of the invariant measure on `grid`.
///
/// `Birkhoff` counts cell visits of one orbit started at a seeded random point.
pub fn invariant_weights(sys: &TorusSystem, grid: &Grid, mode: MeasureMode, seed: u64) -> Result<MeasureWeights> {
    if grid.dim() != sys.dim() {
        return Err(Error::DimensionMismatch { expected: sys.dim(), found: grid.dim() });
    }
    match mode {
        MeasureMode::Lebesgue => Ok(MeasureWeights::lebesgue(grid)),
        MeasureMode::Birkhoff { orbit_length, burn_in } => {
            if orbit_length == 0 {
                return Err(Error::InvalidArgument("orbit_length must be positive".into()));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut x = TorusPoint::new((0..sys.dim()).map(|_| rng.random::<f64>()).collect());
            for _ in 0..burn_in {
                x = sys.apply(&x);
            }
            let mut counts = vec![0u64; grid.len()];
            for _ in 0..orbit_length {
                counts[grid.cell_containing(&x)] += 1;
                x = sys.apply(&x);
            }
            let total = orbit_length as f64;
            let mut weights: Vec<f64> = counts.iter().map(|&c| c as f64 / total).collect();
            let s: f64 = weights.iter().sum();
            weights.iter_mut().for_each(|w| *w /= s);
            Ok(MeasureWeights { grid: *grid, weights })
        }
    }
}

/// Result of multiplying Jacobians along an orbit.
#[derive(Debug, Clone, PartialEq)]
pub struct IteratedJacobian {
    /// `df_{f^{n-1}x} ⋯ df_x`.
    pub matrix: DMatrix<f64>,
    /// Set when an entry exceeded [`OVERFLOW_THRESHOLD`]; use the QR route in that case.
    pub overflow: bool,
}

/// Jacobians `df_x, df_{fx}, …, df_{f^{n-1}x}` in the order they act.
pub fn jacobian_factors<M: TorusMap + ?Sized>(sys: &M, x: &TorusPoint, n: usize) -> Vec<DMatrix<f64>> {
    let mut out = Vec::with_capacity(n);
    let mut p = x.clone();
    for _ in 0..n {
        out.push(sys.jacobian_matrix(&p));
        p = sys.apply(&p);
    }
    out
}

/// The chain-rule product `df^n_x`.
pub fn iterate_jacobian<M: TorusMap + ?Sized>(sys: &M, x: &TorusPoint, n: usize) -> Result<IteratedJacobian> {
    if n == 0 {
        return Err(Error::InvalidArgument("iterate_jacobian needs n >= 1".into()));
    }
    let d = sys.dim();
    let mut m = DMatrix::<f64>::identity(d, d);
    let mut overflow = false;
    for j in jacobian_factors(sys, x, n) {
        m = j * m;
        if m.amax() > OVERFLOW_THRESHOLD || !m.amax().is_finite() {
            overflow = true;
        }
    }
    Ok(IteratedJacobian { matrix: m, overflow })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn p(x: &[f64]) -> TorusPoint {
        TorusPoint::new(x.to_vec())
    }

    #[test]
    fn torus_point_reduces_mod_one() {
        assert_eq!(p(&[1.25, -0.25]).coords(), &[0.25, 0.75]);
        assert_eq!(p(&[-1e-18]).coords(), &[0.0]);
    }

    #[test]
    fn apply_examples() {
        let cat = TorusSystem::cat_map();
        assert_eq!(cat.apply(&p(&[0.0, 0.0])).coords(), &[0.0, 0.0]);
        assert_eq!(cat.apply(&p(&[0.5, 0.5])).coords(), &[0.5, 0.0]);
        let sm = TorusSystem::standard_map(0.0).unwrap();
        assert_eq!(sm.apply(&p(&[0.25, 0.5])).coords(), &[0.75, 0.5]);
    }

    #[test]
    fn jacobian_examples() {
        let cat = TorusSystem::cat_map();
        assert_eq!(cat.jacobian_matrix(&p(&[0.3, 0.9])), DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 1.0]));
        let k = 1.3;
        let sm = TorusSystem::standard_map(k).unwrap();
        assert_relative_eq!(
            sm.jacobian_matrix(&p(&[0.0, 0.7])),
            DMatrix::from_row_slice(2, 2, &[1.0 + k, 1.0, k, 1.0]),
            epsilon = 1e-15
        );
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..1000 {
            let x = p(&[rng.random(), rng.random()]);
            assert_relative_eq!(sm.jacobian(&x).determinant(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let sys = TorusSystem::perturbed_automorphism(vec![vec![2, 1], vec![1, 1]], 0.3, Perturbation::SineShear).unwrap();
        let sm = TorusSystem::standard_map(0.9).unwrap();
        let x = p(&[0.31, 0.47]);
        for s in [&sys, &sm] {
            let j = s.jacobian_matrix(&x);
            let h = 1e-6;
            for col in 0..2 {
                let mut up = x.coords().to_vec();
                let mut dn = x.coords().to_vec();
                up[col] += h;
                dn[col] -= h;
                // lift the image to avoid wrapping artefacts
                let fu = s.apply(&TorusPoint::new(up));
                let fd = s.apply(&TorusPoint::new(dn));
                for row in 0..2 {
                    let mut diff = fu.coords()[row] - fd.coords()[row];
                    diff -= diff.round();
                    assert_relative_eq!(diff / (2.0 * h), j[(row, col)], epsilon = 1e-6);
                }
            }
        }
    }

    #[test]
    fn inverse_maps_round_trip() {
        let systems = [
            TorusSystem::cat_map(),
            TorusSystem::standard_map(1.5).unwrap(),
            TorusSystem::perturbed_automorphism(vec![vec![2, 3], vec![1, 2]], 0.2, Perturbation::SineShearTransposed).unwrap(),
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for sys in &systems {
            for _ in 0..200 {
                let x = p(&[rng.random(), rng.random()]);
                let back = sys.inverse_apply(&sys.apply(&x));
                assert!(back.torus_distance(&x) < 1e-12);
                let fwd = sys.apply(&sys.inverse_apply(&x));
                assert!(fwd.torus_distance(&x) < 1e-12);
            }
        }
    }

    #[test]
    fn rejects_non_unimodular_matrices() {
        assert!(TorusSystem::toral_automorphism(vec![vec![2, 0], vec![0, 1]]).is_err());
        assert!(TorusSystem::toral_automorphism(vec![vec![2, 0]]).is_err());
        assert!(TorusSystem::toral_automorphism(vec![vec![0, 1], vec![1, 0]]).is_ok());
        assert_eq!(integer_det(&[vec![2, 1, 0], vec![1, 1, 0], vec![0, 0, 1]]), 1);
        assert_eq!(integer_det(&[vec![0, 1], vec![1, 0]]), -1);
    }

    #[test]
    fn iterate_jacobian_examples() {
        let cat = TorusSystem::cat_map();
        let x = p(&[0.1, 0.2]);
        assert_eq!(iterate_jacobian(&cat, &x, 1).unwrap().matrix, cat.jacobian_matrix(&x));
        let a3 = iterate_jacobian(&cat, &x, 3).unwrap();
        assert_eq!(a3.matrix, DMatrix::from_row_slice(2, 2, &[13.0, 8.0, 8.0, 5.0]));
        assert!(!a3.overflow);
        let a4 = iterate_jacobian(&cat, &x, 4).unwrap();
        assert_eq!(a4.matrix, DMatrix::from_row_slice(2, 2, &[34.0, 21.0, 21.0, 13.0]));
        let id = TorusSystem::identity(2);
        assert_eq!(iterate_jacobian(&id, &x, 17).unwrap().matrix, DMatrix::identity(2, 2));
        assert!(iterate_jacobian(&cat, &x, 400).unwrap().overflow);
    }

    #[test]
    fn automorphism_permutes_corner_grid() {
        let cat = TorusSystem::cat_map();
        let grid = Grid::for_system(&cat, 16).unwrap();
        assert_eq!(grid.anchor(), Anchor::Corner);
        let map = grid.node_map(&cat).expect("grid is invariant");
        let mut sorted = map.clone();
        sorted.sort();
        assert_eq!(sorted, (0..256).collect::<Vec<_>>());
        // pushforward of uniform weights is uniform
        let w = MeasureWeights::lebesgue(&grid);
        let mut push = vec![0.0; grid.len()];
        for (c, &y) in map.iter().enumerate() {
            push[y] += w.weights()[c];
        }
        assert_eq!(push, w.weights());
        let sm = TorusSystem::standard_map(1.0).unwrap();
        assert_eq!(Grid::for_system(&sm, 8).unwrap().anchor(), Anchor::Center);
    }

    #[test]
    fn interpolation_stencil_weights() {
        let grid = Grid::new(4, 2, Anchor::Corner).unwrap();
        let st = grid.interpolation_stencil(&grid.sample_point(5));
        assert_eq!(st, vec![(5, 1.0)]);
        let st = grid.interpolation_stencil(&p(&[0.125, 0.0]));
        assert_eq!(st.len(), 2);
        assert_relative_eq!(st[0].1 + st[1].1, 1.0);
        let st = grid.interpolation_stencil(&p(&[0.9, 0.95]));
        let total: f64 = st.iter().map(|s| s.1).sum();
        assert_relative_eq!(total, 1.0, epsilon = 1e-14);
        assert!(st.iter().any(|s| s.0 == 0), "wraps around to cell 0");
    }

    #[test]
    fn lebesgue_weights() {
        let grid = Grid::new(4, 2, Anchor::Corner).unwrap();
        let w = MeasureWeights::lebesgue(&grid);
        assert!(w.weights().iter().all(|&x| x == 1.0 / 16.0));
        assert!(MeasureWeights::from_weights(&grid, vec![0.1; 16]).is_err());
    }

    #[test]
    fn birkhoff_weights_on_cat_map_are_nearly_uniform() {
        let cat = TorusSystem::cat_map();
        let grid = Grid::for_system(&cat, 16).unwrap();
        let w = invariant_weights(&cat, &grid, MeasureMode::Birkhoff { orbit_length: 1_000_000, burn_in: 100 }, 11).unwrap();
        assert_relative_eq!(w.weights().iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        assert!(w.l1_distance_to_uniform() < 0.05, "{}", w.l1_distance_to_uniform());
    }

    #[test]
    fn standard_map_preserves_lebesgue_on_boxes() {
        // Monte-Carlo: measure of f^{-1}(box) equals measure of box
        let sm = TorusSystem::standard_map(1.5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let samples = 200_000;
        for _ in 0..5 {
            let lo = [rng.random::<f64>() * 0.6, rng.random::<f64>() * 0.6];
            let size = [0.2 + 0.2 * rng.random::<f64>(), 0.2 + 0.2 * rng.random::<f64>()];
            let area = size[0] * size[1];
            let mut hits = 0usize;
            for _ in 0..samples {
                let y = sm.apply(&p(&[rng.random(), rng.random()]));
                let inside = (0..2).all(|k| y.coords()[k] >= lo[k] && y.coords()[k] < lo[k] + size[k]);
                hits += usize::from(inside);
            }
            let est = hits as f64 / samples as f64;
            let se = (area * (1.0 - area) / samples as f64).sqrt();
            assert!((est - area).abs() < 3.0 * se + 1e-12, "{est} vs {area}");
        }
    }
}
