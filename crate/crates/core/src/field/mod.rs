//! Discretized metric fields with unit determinant and their tangent fields.

mod io;

pub use io::{read_metric_json, write_metric_json, MetricRecord};

use std::sync::OnceLock;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::dynamics::{Grid, MeasureWeights, TorusMap, TorusPoint};
use crate::error::{Error, Result};
use crate::spd::{self, BarycenterOptions, SpdMatrix, SymMatrix};

/// Allowed `|det G − 1|` in a metric field.
pub const UNIT_DET_TOL: f64 = 1e-10;

/// Allowed `||det A| − 1|` in a pullback.
pub const VOLUME_TOL: f64 = 1e-8;

/// Allowed `|tr(G⁻¹ h)|` for a step direction.
pub const TANGENCY_TOL: f64 = 1e-8;

/// Gram matrices `G_x` with `det G_x = 1`, one per grid cell.
#[derive(Debug, Clone)]
pub struct MetricField {
    grid: Grid,
    values: Vec<SpdMatrix>,
    logs: OnceLock<Vec<DMatrix<f64>>>,
}

impl PartialEq for MetricField {
    fn eq(&self, other: &Self) -> bool {
        self.grid == other.grid && self.values == other.values
    }
}

fn check_grid(a: &Grid, b: &Grid) -> Result<()> {
    if a != b {
        return Err(Error::GridMismatch(format!(
            "n = {}, d = {}, {:?} versus n = {}, d = {}, {:?}",
            a.n(),
            a.dim(),
            a.anchor(),
            b.n(),
            b.dim(),
            b.anchor()
        )));
    }
    Ok(())
}

fn par_cells<T: Send>(n: usize, f: impl Fn(usize) -> Result<T> + Sync + Send) -> Result<Vec<T>> {
    (0..n).into_par_iter().map(f).collect()
}

impl MetricField {
    /// Checks dimensions and `|det − 1| ≤ 1e-10`, then removes the residual determinant exactly.
    pub fn from_values(grid: Grid, values: Vec<SpdMatrix>) -> Result<Self> {
        Self::from_values_tol(grid, values, UNIT_DET_TOL)
    }

    pub(crate) fn from_values_tol(grid: Grid, values: Vec<SpdMatrix>, tol: f64) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!("{} values for {} cells", values.len(), grid.len())));
        }
        let mut out = Vec::with_capacity(values.len());
        for (cell, v) in values.into_iter().enumerate() {
            if v.dim() != grid.dim() {
                return Err(Error::DimensionMismatch { expected: grid.dim(), found: v.dim() });
            }
            let det = v.det();
            if !((det - 1.0).abs() <= tol) {
                return Err(Error::NotInMetricSpace { cell, det });
            }
            out.push(v.normalize_det());
        }
        Ok(Self { grid, values: out, logs: OnceLock::new() })
    }

    /// The same value at every cell.
    pub fn constant(grid: Grid, value: &SpdMatrix) -> Result<Self> {
        Self::from_values(grid, vec![value.clone(); grid.len()])
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[SpdMatrix] {
        &self.values
    }

    pub fn value(&self, cell: usize) -> &SpdMatrix {
        &self.values[cell]
    }

    pub(crate) fn logs(&self) -> &[DMatrix<f64>] {
        self.logs.get_or_init(|| self.values.iter().map(|v| v.log().into_matrix()).collect())
    }

    /// `(stencil, Σ w_c log G_c)` at `x`.
    pub(crate) fn interpolate_log(&self, x: &TorusPoint) -> (Vec<(usize, f64)>, DMatrix<f64>) {
        let stencil = self.grid.interpolation_stencil(x);
        let logs = self.logs();
        let d = self.grid.dim();
        let mut acc = DMatrix::zeros(d, d);
        for &(c, w) in &stencil {
            acc += &logs[c] * w;
        }
        (stencil, acc)
    }

    /// Log-Euclidean multilinear interpolation `exp(Σ w_c log G_c)`.
    ///
    /// Returns the stored value when `x` is a sample point.
    pub fn evaluate(&self, x: &TorusPoint) -> SpdMatrix {
        if let Some(c) = self.grid.exact_node(x) {
            return self.values[c].clone();
        }
        let (_, l) = self.interpolate_log(x);
        SpdMatrix::exp(&SymMatrix::symmetric_part(&l)).normalize_det()
    }

    /// Largest `|det G − 1|` over the cells.
    pub fn max_det_deviation(&self) -> f64 {
        self.values.iter().map(|v| (v.det() - 1.0).abs()).fold(0.0, f64::max)
    }

    /// Largest cellwise trace-metric distance to `other`.
    pub fn max_cell_distance(&self, other: &Self) -> Result<f64> {
        check_grid(&self.grid, &other.grid)?;
        let mut worst = 0.0f64;
        for (a, b) in self.values.iter().zip(&other.values) {
            worst = worst.max(spd::spd_distance(a, b)?);
        }
        Ok(worst)
    }
}

/// Identity Gram matrix at every cell.
pub fn flat_metric(grid: &Grid) -> MetricField {
    MetricField::constant(*grid, &SpdMatrix::identity(grid.dim())).expect("identity has unit determinant")
}

/// The value of `g` at `f(x)` for the sample point of `cell`: exact lookup when
/// `node_map` is available, interpolation otherwise.
pub(crate) fn value_at_image(g: &MetricField, node_map: Option<&[usize]>, fx: &TorusPoint, cell: usize) -> SpdMatrix {
    match node_map {
        Some(map) => g.values[map[cell]].clone(),
        None => g.evaluate(fx),
    }
}

/// Pullback `(f∗g)_x = A_xᵀ G_{f(x)} A_x`, renormalized to unit determinant.
pub fn pullback<M: TorusMap + ?Sized>(sys: &M, g: &MetricField) -> Result<MetricField> {
    let grid = *g.grid();
    if sys.dim() != grid.dim() {
        return Err(Error::DimensionMismatch { expected: grid.dim(), found: sys.dim() });
    }
    let node_map = grid.node_map(sys);
    let values = par_cells(grid.len(), |c| {
        let x = grid.sample_point(c);
        let a = sys.jacobian_matrix(&x);
        let det = a.determinant();
        if !((det.abs() - 1.0).abs() <= VOLUME_TOL) {
            return Err(Error::VolumeNotPreserved { cell: c, det });
        }
        let gy = value_at_image(g, node_map.as_deref(), &sys.apply(&x), c);
        Ok(gy.congruence(&a.transpose())?.normalize_det())
    })?;
    Ok(MetricField { grid, values, logs: OnceLock::new() })
}

/// Cellwise Karcher barycenter.
pub fn field_barycenter(fields: &[MetricField]) -> Result<MetricField> {
    field_barycenter_with(fields, &BarycenterOptions::default())
}

/// [`field_barycenter`] with explicit barycenter options.
pub fn field_barycenter_with(fields: &[MetricField], opts: &BarycenterOptions) -> Result<MetricField> {
    let first = fields.first().ok_or_else(|| Error::InvalidArgument("barycenter of no fields".into()))?;
    let grid = *first.grid();
    for f in fields {
        check_grid(&grid, f.grid())?;
    }
    let values = par_cells(grid.len(), |c| {
        let pts: Vec<SpdMatrix> = fields.iter().map(|f| f.values[c].clone()).collect();
        Ok(spd::barycenter_with(&pts, opts)?.point)
    })?;
    MetricField::from_values(grid, values)
}

/// Bochi's averaged metric `bar(g⁰, f∗g⁰, …, f^{N−1}∗g⁰)`.
pub fn bochi_sequence<M: TorusMap + ?Sized>(sys: &M, g0: &MetricField, n: usize) -> Result<MetricField> {
    if n == 0 {
        return Err(Error::InvalidArgument("N must be at least 1".into()));
    }
    let mut iterates = vec![g0.clone()];
    for _ in 1..n {
        let next = pullback(sys, iterates.last().expect("nonempty"))?;
        iterates.push(next);
    }
    if n == 1 {
        return Ok(g0.clone());
    }
    field_barycenter(&iterates)
}

/// Symmetric matrices `h_x`, one per cell, in ambient coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentField {
    grid: Grid,
    values: Vec<SymMatrix>,
}

impl TangentField {
    pub fn new(grid: Grid, values: Vec<SymMatrix>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!("{} values for {} cells", values.len(), grid.len())));
        }
        if let Some(v) = values.iter().find(|v| v.dim() != grid.dim()) {
            return Err(Error::DimensionMismatch { expected: grid.dim(), found: v.dim() });
        }
        Ok(Self { grid, values })
    }

    /// Tangent field at `g`: rejects values with `|tr(G⁻¹h)| > 1e-10`.
    pub fn at(g: &MetricField, values: Vec<SymMatrix>) -> Result<Self> {
        let out = Self::new(*g.grid(), values)?;
        for (c, (h, gx)) in out.values.iter().zip(g.values()).enumerate() {
            let r = gx.trace_of_inverse_times(h);
            if r.abs() > UNIT_DET_TOL {
                return Err(Error::TangencyViolated { cell: c, residual: r });
            }
        }
        Ok(out)
    }

    pub fn zeros(grid: Grid) -> Self {
        Self { grid, values: vec![SymMatrix::zeros(grid.dim()); grid.len()] }
    }

    /// Ambient field `G^{1/2} W G^{1/2}` from whitened values `W`.
    pub fn from_whitened(g: &MetricField, whitened: &[SymMatrix]) -> Result<Self> {
        if whitened.len() != g.grid().len() {
            return Err(Error::GridMismatch("whitened field length".into()));
        }
        let values = g.values().iter().zip(whitened).map(|(gx, w)| gx.unwhiten_sym(w)).collect();
        Ok(Self { grid: *g.grid(), values })
    }

    /// Whitened values `G^{-1/2} h G^{-1/2}`.
    pub fn whitened(&self, g: &MetricField) -> Result<Vec<SymMatrix>> {
        check_grid(&self.grid, g.grid())?;
        Ok(g.values().iter().zip(&self.values).map(|(gx, h)| gx.whiten_sym(h)).collect())
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[SymMatrix] {
        &self.values
    }

    /// Largest `|tr(G⁻¹ h)|`.
    pub fn max_trace_residual(&self, g: &MetricField) -> Result<f64> {
        check_grid(&self.grid, g.grid())?;
        Ok(self.values.iter().zip(g.values()).map(|(h, gx)| gx.trace_of_inverse_times(h).abs()).fold(0.0, f64::max))
    }

    /// `(Σ_x w_x tr((G⁻¹h)²))^{1/2}`, the L2 norm at `g`.
    pub fn norm_at(&self, g: &MetricField, weights: &MeasureWeights) -> Result<f64> {
        check_grid(&self.grid, weights.grid())?;
        let w = self.whitened(g)?;
        Ok(w.iter().zip(weights.weights()).map(|(m, wt)| wt * m.dot(m)).sum::<f64>().sqrt())
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self { grid: self.grid, values: self.values.iter().map(|v| v * c).collect() }
    }
}

/// `G_x exp(t G_x⁻¹ h_x)` per cell, after checking `|tr(G⁻¹h)| ≤ 1e-8`.
pub fn geodesic_step(g: &MetricField, h: &TangentField, t: f64) -> Result<MetricField> {
    check_grid(g.grid(), h.grid())?;
    for (c, (gx, hx)) in g.values().iter().zip(h.values()).enumerate() {
        let r = gx.trace_of_inverse_times(hx);
        if !(r.abs() <= TANGENCY_TOL) {
            return Err(Error::TangencyViolated { cell: c, residual: r });
        }
    }
    Ok(step_whitened(g, &h.whitened(g)?, t))
}

/// Geodesic step along whitened directions; the directions are made trace-free first.
pub(crate) fn step_whitened(g: &MetricField, whitened: &[SymMatrix], t: f64) -> MetricField {
    let d = g.grid().dim();
    let values = g
        .values()
        .par_iter()
        .zip(whitened.par_iter())
        .map(|(gx, w)| {
            let tr = w.trace() / d as f64;
            let w = w - &(&SymMatrix::identity(d) * tr);
            gx.unwhiten(&SpdMatrix::exp(&(&w * t))).normalize_det()
        })
        .collect();
    MetricField { grid: *g.grid(), values, logs: OnceLock::new() }
}

/// Cellwise initial velocity of the geodesic from `g` to `g2`.
pub fn connecting_tangent(g: &MetricField, g2: &MetricField) -> Result<TangentField> {
    check_grid(g.grid(), g2.grid())?;
    let values = par_cells(g.grid().len(), |c| spd::log_map(&g.values[c], &g2.values[c]))?;
    TangentField::new(*g.grid(), values)
}

/// Cellwise point `g #_t g2` of the connecting geodesic.
pub fn field_geodesic(g: &MetricField, g2: &MetricField, t: f64) -> Result<MetricField> {
    check_grid(g.grid(), g2.grid())?;
    let values = par_cells(g.grid().len(), |c| spd::geodesic_between(&g.values[c], &g2.values[c], t))?;
    MetricField::from_values(*g.grid(), values)
}

/// `(Σ_x w_x d(g1_x, g2_x)²)^{1/2}`.
pub fn l2_distance(g1: &MetricField, g2: &MetricField, weights: &MeasureWeights) -> Result<f64> {
    check_grid(g1.grid(), g2.grid())?;
    check_grid(g1.grid(), weights.grid())?;
    let mut acc = 0.0;
    for ((a, b), w) in g1.values().iter().zip(g2.values()).zip(weights.weights()) {
        if *w != 0.0 {
            acc += w * spd::spd_distance(a, b)?.powi(2);
        }
    }
    Ok(acc.sqrt())
}
